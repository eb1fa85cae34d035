#![allow(dead_code)]

use std::path::PathBuf;

use risloc::harness::ScenarioConfig;

/// Two 8x8 surfaces facing each other across a 4 m room, two users, coarse
/// grid. Small enough for a full trial in well under a second.
pub const SMALL: &str = r#"
seed = 11
trials = 4
cycles = 3
snr_db = 10.0
carrier_hz = 28e9
selection_count = 1
inter_ris_enabled = true
nlos_power = 1e-5
users = [[1.2, 0.3, 0.9], [2.6, -0.4, 1.1]]

[bs]
position = [2.0, 0.0, 3.0]
normal = [0.0, 0.0, -1.0]
rows = 2
cols = 2
spacing_wavelengths = 0.5

[[ris]]
position = [0.0, 0.0, 1.0]
normal = [1.0, 0.0, 0.0]
rows = 8
cols = 8
spacing_wavelengths = 0.5
scatterers = [[1.5, -0.6, 0.3]]

[[ris]]
position = [4.0, 0.0, 1.0]
normal = [-1.0, 0.0, 0.0]
rows = 8
cols = 8
spacing_wavelengths = 0.5

[grid]
range_samples = 2
azimuth_deg = [-40.0, 40.0]
azimuth_step_deg = 10.0
elevation_deg = [-20.0, 20.0]
elevation_step_deg = 10.0

[search_box]
lower = [0.0, -2.0, 0.0]
upper = [4.0, 2.0, 2.5]
"#;

pub fn small_config() -> ScenarioConfig {
    ScenarioConfig::from_toml_str(SMALL).expect("test config parses")
}

pub fn desk_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

pub fn desk_config() -> ScenarioConfig {
    ScenarioConfig::from_path(&desk_config_path()).expect("desk config parses")
}
