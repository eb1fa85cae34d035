//! The multi-cycle transmit → localize → optimize loop for one trial.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::RowDVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PhasePolicy, Scenario};
use crate::channel::{
    bs_separation_weights, inter_ris_path, mean_received_power, noise_variance_for_snr, ris_bs_channel,
    synthesize_received, user_ris_channel, CMatrix, CVector, LinkSet, PhaseShiftVector, ReceivedSample, C64,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionInput};
use crate::locator::{dictionary_cache_key, load_or_build, omp_localize, sensing_row, AtomLabel, Dictionary, LocalEstimate};
use crate::ris_opt::{
    admm_optimize, crb_trace, fim, select_ris, CrbTerm, LinkModel, SelectionResult,
};
use crate::scene::{spherical_to_global, RegionLabel, Vec3};

/// Dictionaries shared between engines, keyed by their cache key.
#[derive(Debug, Default)]
pub struct DictionaryBank {
    entries: Mutex<HashMap<String, Arc<Dictionary>>>,
}

impl DictionaryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, scenario: &Scenario, m: usize) -> Result<Arc<Dictionary>> {
        let pose = &scenario.poses[m];
        let key = dictionary_cache_key(pose, &scenario.grid, scenario.wavelength, scenario.dictionary_mode);
        if let Some(d) = self.entries.lock().map_err(|_| Error::Cache("bank poisoned".into()))?.get(&key) {
            return Ok(d.clone());
        }
        let dict = Arc::new(load_or_build(
            scenario.config.cache_dir.as_deref(),
            pose,
            &scenario.grid,
            scenario.wavelength,
            scenario.dictionary_mode,
        )?);
        let mut entries = self.entries.lock().map_err(|_| Error::Cache("bank poisoned".into()))?;
        Ok(entries.entry(key).or_insert(dict).clone())
    }
}

/// Summary of one RIS's phase-shift optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSummary {
    pub ris_id: usize,
    pub users: Vec<usize>,
    pub constraints: usize,
    pub iterations: usize,
    pub primal_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based.
    pub cycle: usize,
    /// `[user][ris]`.
    pub samples: Vec<Vec<ReceivedSample>>,
    /// RISs used for each user in this cycle.
    pub selection: Vec<Vec<usize>>,
    /// `[user]`, one entry per RIS in `selection`.
    pub local_estimates: Vec<Vec<LocalEstimate>>,
    pub fused: Vec<Vec3>,
    /// Sum of `tr(J^{-1})` over the RISs used for each user, evaluated at
    /// the fused estimate; `None` while the information is singular.
    pub crb: Vec<Option<f64>>,
    /// `[ris]` phase shifts for the next cycle; absent on the last cycle.
    pub next_phase_shifts: Option<Vec<Vec<C64>>>,
    pub optimization: Vec<OptimizationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// `[cycle][user]`.
    pub fused_per_cycle: Vec<Vec<Vec3>>,
    /// Distance of each user's final estimate to the truth.
    pub final_errors: Vec<f64>,
    /// Final-cycle CRB per user.
    pub final_crb: Vec<Option<f64>>,
    pub wall_clock_s: f64,
    /// Set when the trial aborted; the other fields then hold what was
    /// produced before the failure.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// A scenario with its dictionaries and fixed geometry resolved.
#[derive(Debug, Clone)]
pub struct Engine {
    pub scenario: Scenario,
    dictionaries: Vec<Arc<Dictionary>>,
    user_channels: Vec<Vec<CVector>>,
    inter_ris: Vec<Vec<Option<crate::channel::InterRisPath>>>,
}

/// Per-trial random state derived from the seed.
struct TrialState {
    rng: ChaCha8Rng,
    links: LinkSet,
    noise: Vec<Vec<f64>>,
    beta: Vec<PhaseShiftVector>,
    history: Vec<Vec<PhaseShiftVector>>,
    rows: Vec<Vec<RowDVector<C64>>>,
    observations: Vec<Vec<Vec<C64>>>,
}

impl Engine {
    pub fn new(scenario: Scenario, bank: &DictionaryBank) -> Result<Self> {
        let m_count = scenario.ris_count();
        let dictionaries = (0..m_count).map(|m| bank.get(&scenario, m)).collect::<Result<Vec<_>>>()?;
        let user_channels = scenario
            .users
            .iter()
            .map(|u| {
                (0..m_count)
                    .map(|m| user_ris_channel(u, &scenario.poses[m], &scenario.scatterers[m], scenario.wavelength))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut inter_ris = vec![vec![None; m_count]; m_count];
        for (dest, row) in inter_ris.iter_mut().enumerate() {
            for (source, slot) in row.iter_mut().enumerate() {
                if dest != source {
                    *slot = inter_ris_path(&scenario.poses[dest], &scenario.poses[source], scenario.wavelength)?;
                }
            }
        }
        Ok(Self { scenario, dictionaries, user_channels, inter_ris })
    }

    pub fn dictionary(&self, m: usize) -> &Dictionary {
        &self.dictionaries[m]
    }

    fn init_trial(&self, seed: u64) -> Result<TrialState> {
        let sc = &self.scenario;
        let m_count = sc.ris_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bs_channels = sc
            .poses
            .iter()
            .map(|p| ris_bs_channel(p, &sc.bs, sc.wavelength, sc.config.nlos_power, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let weights = bs_separation_weights(&bs_channels)?;
        let effective_rows: Vec<CVector> =
            bs_channels.iter().zip(&weights).map(|(h, w)| h.effective_row(w)).collect();
        let noise = self
            .user_channels
            .iter()
            .map(|per_ris| {
                per_ris
                    .iter()
                    .zip(&effective_rows)
                    .map(|(h, e)| noise_variance_for_snr(mean_received_power(e, h), sc.config.snr_db))
                    .collect()
            })
            .collect();
        let beta = sc
            .poses
            .iter()
            .map(|p| PhaseShiftVector::random(p.element_count(), &mut rng))
            .collect();
        Ok(TrialState {
            rng,
            links: LinkSet {
                user_channels: self.user_channels.clone(),
                effective_rows,
                inter_ris: self.inter_ris.clone(),
            },
            noise,
            beta,
            history: vec![Vec::new(); m_count],
            rows: vec![Vec::new(); m_count],
            observations: vec![vec![Vec::new(); m_count]; sc.users.len()],
        })
    }

    fn fusion_input(&self, m: usize, label: &AtomLabel) -> Result<FusionInput> {
        let pose = &self.scenario.poses[m];
        Ok(match label {
            AtomLabel::Near(s) => FusionInput::Point(spherical_to_global(s, pose)),
            AtomLabel::Far { theta, phi } => {
                FusionInput::ray(pose.origin, pose.direction_to_global(&crate::scene::direction(*theta, *phi)))?
            }
        })
    }

    fn forced_label(&self) -> Option<RegionLabel> {
        self.scenario.config.ff_only_mode.then_some(RegionLabel::FarField)
    }

    fn link_model(&self, st: &TrialState, k: usize, m: usize, estimate: &Vec3) -> Result<LinkModel> {
        LinkModel::new(
            estimate,
            &self.scenario.poses[m],
            self.forced_label(),
            st.links.effective_rows[m].clone(),
            st.noise[k][m],
            self.scenario.wavelength,
        )
    }

    fn user_crb(&self, st: &TrialState, k: usize, ris: &[usize], estimate: &Vec3) -> Option<f64> {
        let mut total = 0.0;
        for &m in ris {
            let link = self.link_model(st, k, m, estimate).ok()?;
            total += crb_trace(&fim(&link, &st.history[m]).ok()?).ok()?;
        }
        Some(total)
    }

    fn optimize(
        &self,
        st: &mut TrialState,
        selection: &SelectionResult,
        fused: &[Vec3],
    ) -> Result<(Vec<PhaseShiftVector>, Vec<OptimizationSummary>)> {
        let sc = &self.scenario;
        let mut next = Vec::with_capacity(sc.ris_count());
        let mut summaries = Vec::with_capacity(sc.ris_count());
        for m in 0..sc.ris_count() {
            let users = selection.users_of(m);
            let mut terms = Vec::with_capacity(users.len());
            for &k in &users {
                // estimates behind this RIS carry no information through it,
                // and noiseless links have no finite bound to improve
                if st.noise[k][m] == 0.0 {
                    continue;
                }
                if let Ok(link) = self.link_model(st, k, m, &fused[k]) {
                    terms.push(CrbTerm::new(&link, &st.history[m])?);
                }
            }
            let rows: Vec<CVector> = (0..sc.ris_count())
                .filter_map(|i| self.inter_ris[i][m].as_ref())
                .map(|path| st.links.effective_rows[m].component_mul(&path.at_source))
                .collect();
            // a fresh start each cycle; warm starts return the previous
            // optimum and the stacked sensing rows become collinear
            let init = PhaseShiftVector::random(sc.poses[m].element_count(), &mut st.rng);
            if terms.is_empty() && rows.is_empty() {
                next.push(init);
                continue;
            }
            let out = admm_optimize(&terms, &rows, &init, &sc.admm)?;
            summaries.push(OptimizationSummary {
                ris_id: m,
                users,
                constraints: rows.len(),
                iterations: out.iterations,
                primal_residual: out.primal_residual,
                converged: out.converged,
            });
            next.push(out.state.beta);
        }
        Ok((next, summaries))
    }

    /// Runs all cycles of one trial. Errors abort the trial; the records
    /// produced so far are returned alongside the error.
    pub fn run_protocol(&self, seed: u64) -> (Vec<CycleRecord>, Option<Error>) {
        let mut records = Vec::with_capacity(self.scenario.config.cycles);
        let result = self.run_cycles(seed, &mut records);
        (records, result.err())
    }

    fn run_cycles(&self, seed: u64, records: &mut Vec<CycleRecord>) -> Result<()> {
        let sc = &self.scenario;
        let (k_count, m_count) = (sc.users.len(), sc.ris_count());
        let mut st = self.init_trial(seed)?;
        let mut selection = SelectionResult::all(k_count, m_count);
        for cycle in 1..=sc.config.cycles {
            let samples = synthesize_received(
                &st.links,
                &st.beta,
                &st.noise,
                sc.config.inter_ris_enabled,
                &mut st.rng,
            );
            for m in 0..m_count {
                st.rows[m].push(sensing_row(&self.dictionaries[m], &st.beta[m], &st.links.effective_rows[m])?);
                st.history[m].push(st.beta[m].clone());
            }
            for (k, per_ris) in samples.iter().enumerate() {
                for (m, s) in per_ris.iter().enumerate() {
                    st.observations[k][m].push(s.value);
                }
            }

            let sensing: Vec<CMatrix> = st.rows.iter().map(|r| CMatrix::from_rows(r)).collect();
            let mut local_estimates = Vec::with_capacity(k_count);
            let mut fused = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let mut estimates = Vec::new();
                let mut inputs = Vec::new();
                for &m in &selection.per_user[k] {
                    let g = CVector::from_column_slice(&st.observations[k][m]);
                    let est = omp_localize(&g, &sensing[m], sc.sparsity(m), &self.dictionaries[m].labels, m)?;
                    inputs.push(self.fusion_input(m, &est.label)?);
                    estimates.push(est);
                }
                fused.push(fuse(&inputs, &sc.search_box)?);
                local_estimates.push(estimates);
            }
            let crb = (0..k_count)
                .map(|k| self.user_crb(&st, k, &selection.per_user[k], &fused[k]))
                .collect();

            let last = cycle == sc.config.cycles;
            let (next_phase_shifts, optimization, next_selection) = if last {
                (None, Vec::new(), None)
            } else {
                let positions: Vec<Vec3> = sc.poses.iter().map(|p| p.origin).collect();
                let next_sel = select_ris(&fused, &positions, sc.config.selection_count);
                let (next, summaries) = match sc.config.phase_policy {
                    PhasePolicy::Optimized => self.optimize(&mut st, &next_sel, &fused)?,
                    PhasePolicy::Random => (
                        sc.poses
                            .iter()
                            .map(|p| PhaseShiftVector::random(p.element_count(), &mut st.rng))
                            .collect(),
                        Vec::new(),
                    ),
                };
                st.beta = next;
                (
                    Some(st.beta.iter().map(|b| b.values().iter().copied().collect()).collect()),
                    summaries,
                    Some(next_sel),
                )
            };
            records.push(CycleRecord {
                cycle,
                samples,
                selection: selection.per_user.clone(),
                local_estimates,
                fused,
                crb,
                next_phase_shifts,
                optimization,
            });
            if let Some(s) = next_selection {
                selection = s;
            }
        }
        Ok(())
    }

    /// One trial summarized against the true user locations.
    pub fn run_trial(&self, trial: usize, seed: u64) -> (TrialResult, Vec<CycleRecord>) {
        let start = Instant::now();
        let (records, err) = self.run_protocol(seed);
        let fused_per_cycle: Vec<Vec<Vec3>> = records.iter().map(|r| r.fused.clone()).collect();
        let (final_errors, final_crb) = match records.last() {
            Some(r) if err.is_none() => (
                r.fused.iter().zip(&self.scenario.users).map(|(p, u)| (p - u).norm()).collect(),
                r.crb.clone(),
            ),
            _ => (Vec::new(), Vec::new()),
        };
        let result = TrialResult {
            trial,
            seed,
            fused_per_cycle,
            final_errors,
            final_crb,
            wall_clock_s: start.elapsed().as_secs_f64(),
            failure: err.map(|e| e.to_string()),
        };
        (result, records)
    }
}
