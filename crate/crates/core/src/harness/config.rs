//! Scenario description read from TOML.
//!
//! Units in the file: Hz for the carrier, meters for positions, degrees for
//! angles, decibels for SNR. Element spacings are given in wavelengths.
//! Everything is converted to SI/radians by [`ScenarioConfig::build`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{BsArray, ScattererSet, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::fusion::SearchBox;
use crate::locator::{DictionaryMode, GridSpec};
use crate::ris_opt::{AdmmSettings, CcmSettings};
use crate::scene::{relative_spherical, RisPose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    /// ADMM phase-shift optimization between cycles.
    #[default]
    Optimized,
    /// Fresh uniformly random phase shifts every cycle.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsConfig {
    pub position: [f64; 3],
    /// Boresight of the planar array.
    pub normal: [f64; 3],
    pub rows: usize,
    pub cols: usize,
    pub spacing_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisConfig {
    pub position: [f64; 3],
    /// Front-side normal.
    pub normal: [f64; 3],
    pub rows: usize,
    pub cols: usize,
    pub spacing_wavelengths: f64,
    #[serde(default)]
    pub scatterers: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub range_samples: usize,
    /// Defaults to twice the aperture diagonal.
    #[serde(default)]
    pub min_range_m: Option<f64>,
    pub azimuth_deg: [f64; 2],
    pub azimuth_step_deg: f64,
    pub elevation_deg: [f64; 2],
    pub elevation_step_deg: f64,
}

impl GridConfig {
    pub fn to_spec(&self) -> GridSpec {
        GridSpec {
            n_r: self.range_samples,
            r_min: self.min_range_m,
            theta_min: self.azimuth_deg[0].to_radians(),
            theta_max: self.azimuth_deg[1].to_radians(),
            delta_theta: self.azimuth_step_deg.to_radians(),
            phi_min: self.elevation_deg[0].to_radians(),
            phi_max: self.elevation_deg[1].to_radians(),
            delta_phi: self.elevation_step_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub max_outer: usize,
    pub tolerance: f64,
    pub ccm_max_iter: usize,
    pub ccm_grad_tol: f64,
    pub armijo_c1: f64,
    pub armijo_shrink: f64,
    pub initial_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let a = AdmmSettings::default();
        Self {
            epsilon: a.epsilon,
            gamma: a.gamma,
            max_outer: a.max_outer,
            tolerance: a.tolerance,
            ccm_max_iter: a.ccm.max_iter,
            ccm_grad_tol: a.ccm.grad_tol,
            armijo_c1: a.ccm.armijo_c1,
            armijo_shrink: a.ccm.shrink,
            initial_step: a.ccm.initial_step,
        }
    }
}

impl SolverConfig {
    pub fn to_settings(&self) -> AdmmSettings {
        AdmmSettings {
            epsilon: self.epsilon,
            gamma: self.gamma,
            max_outer: self.max_outer,
            tolerance: self.tolerance,
            ccm: CcmSettings {
                max_iter: self.ccm_max_iter,
                grad_tol: self.ccm_grad_tol,
                armijo_c1: self.armijo_c1,
                shrink: self.armijo_shrink,
                initial_step: self.initial_step,
                ..CcmSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub trials: usize,
    pub cycles: usize,
    pub snr_db: f64,
    pub carrier_hz: f64,
    /// Number of leading `[[ris]]` entries in use; all when absent.
    #[serde(default)]
    pub active_ris: Option<usize>,
    pub selection_count: usize,
    #[serde(default)]
    pub inter_ris_enabled: bool,
    #[serde(default)]
    pub ff_only_mode: bool,
    #[serde(default)]
    pub phase_policy: PhasePolicy,
    /// Total NLOS power added to each RIS → BS channel.
    #[serde(default)]
    pub nlos_power: f64,
    #[serde(default = "default_scatterer_gain")]
    pub scatterer_gain: f64,
    /// Directory for cached dictionaries; no caching when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub users: Vec<[f64; 3]>,
    pub bs: BsConfig,
    pub ris: Vec<RisConfig>,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub search_box: BoxConfig,
}

fn default_scatterer_gain() -> f64 {
    0.3
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn ris_in_use(&self) -> usize {
        self.active_ris.unwrap_or(self.ris.len())
    }

    /// Checks every invariant and converts to simulation units.
    pub fn build(&self) -> Result<Scenario> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.carrier_hz > 0.0) {
            return fail("carrier_hz must be positive".into());
        }
        if self.cycles == 0 || self.trials == 0 {
            return fail("cycles and trials must be at least 1".into());
        }
        if self.users.is_empty() {
            return fail("at least one user is required".into());
        }
        let m = self.ris_in_use();
        if m == 0 || m > self.ris.len() {
            return fail(format!("active_ris = {m} but {} RISs are listed", self.ris.len()));
        }
        if self.selection_count == 0 || self.selection_count > m {
            return fail(format!("selection_count must be in 1..={m}, got {}", self.selection_count));
        }
        // +inf is allowed and means noiseless samples
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return fail("snr_db must be a number or +inf".into());
        }
        if !(self.nlos_power >= 0.0) || !(self.scatterer_gain >= 0.0) {
            return fail("nlos_power and scatterer_gain must be >= 0".into());
        }
        let wavelength = self.wavelength();
        let bs = BsArray::planar(
            v3(self.bs.position),
            v3(self.bs.normal),
            self.bs.rows,
            self.bs.cols,
            self.bs.spacing_wavelengths * wavelength,
        )?;
        let mut poses = Vec::with_capacity(m);
        let mut scatterers = Vec::with_capacity(m);
        for (i, r) in self.ris.iter().take(m).enumerate() {
            let pose = RisPose::facing(v3(r.position), v3(r.normal), r.rows, r.cols, r.spacing_wavelengths * wavelength)
                .map_err(|e| Error::Config(format!("ris {i}: {e}")))?;
            for (k, u) in self.users.iter().enumerate() {
                relative_spherical(&v3(*u), &pose).map_err(|_| Error::Config(format!("user {k} is behind ris {i}")))?;
            }
            for q in &r.scatterers {
                relative_spherical(&v3(*q), &pose)
                    .map_err(|_| Error::Config(format!("a scatterer of ris {i} is behind it")))?;
            }
            relative_spherical(&bs.position, &pose).map_err(|_| Error::Config(format!("BS is behind ris {i}")))?;
            poses.push(pose);
            scatterers.push(ScattererSet {
                locations: r.scatterers.iter().map(|q| v3(*q)).collect(),
                gain_scale: self.scatterer_gain,
            });
        }
        let grid = self.grid.to_spec();
        grid.validate()?;
        let search_box = SearchBox::new(v3(self.search_box.lower), v3(self.search_box.upper))?;
        let users: Vec<Vec3> = self.users.iter().map(|u| v3(*u)).collect();
        if let Some(k) = users.iter().position(|u| !search_box.contains(u)) {
            return fail(format!("user {k} lies outside the search box"));
        }
        let admm = self.solver.to_settings();
        admm.validate()?;
        Ok(Scenario {
            config: self.clone(),
            wavelength,
            bs,
            poses,
            scatterers,
            users,
            grid,
            search_box,
            admm,
            dictionary_mode: if self.ff_only_mode { DictionaryMode::FarFieldOnly } else { DictionaryMode::Hybrid },
        })
    }
}

/// A validated scenario in simulation units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub wavelength: f64,
    pub bs: BsArray,
    pub poses: Vec<RisPose>,
    pub scatterers: Vec<ScattererSet>,
    pub users: Vec<Vec3>,
    pub grid: GridSpec,
    pub search_box: SearchBox,
    pub admm: AdmmSettings,
    pub dictionary_mode: DictionaryMode,
}

impl Scenario {
    pub fn ris_count(&self) -> usize {
        self.poses.len()
    }

    /// OMP sparsity for RIS `m`: the direct path plus one atom per scatterer.
    pub fn sparsity(&self, m: usize) -> usize {
        self.scatterers[m].locations.len() + 1
    }
}
