//! RIS selection, Fisher information and per-RIS phase-shift optimization.

pub mod admm;
pub mod ccm;
pub mod fim;
pub mod selection;

pub use admm::{
    admm_optimize, dual_update, project_to_disk, sidelobe_response, sidelobe_row, solve_f_eta, AdmmOutcome,
    AdmmSettings, AdmmState,
};
pub use ccm::{retract, riemannian_gradient, solve_beta_subproblem, BetaProblem, CcmOutcome, CcmSettings};
pub use fim::{crb_trace, fim, jacobian, CrbTerm, FisherInfo, LinkModel, SINGULAR_CRB_PENALTY};
pub use selection::{select_ris, SelectionResult};
