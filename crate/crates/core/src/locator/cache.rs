//! Binary dictionary cache.
//!
//! Layout (little endian):
//! `b"RISDICT\0"`, `u32` version, 32-byte key digest, `u8` mode,
//! `u64` N, `u64` S1, `u64` S2, then per atom `u8` tag + three `f64`
//! (`r, θ, φ`; `r = 0` for far-field), then the atoms as `(re, im)` pairs
//! in column-major order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{build_dictionary, AtomLabel, Dictionary, DictionaryMode, GridSpec};
use crate::channel::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::scene::{RisPose, SphericalCoord};

const MAGIC: &[u8; 8] = b"RISDICT\0";
const VERSION: u32 = 1;

fn mode_tag(mode: DictionaryMode) -> u8 {
    match mode {
        DictionaryMode::Hybrid => 0,
        DictionaryMode::FarFieldOnly => 1,
    }
}

fn digest(pose: &RisPose, grid: &GridSpec, wavelength: f64, mode: DictionaryMode) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(VERSION.to_le_bytes());
    h.update([mode_tag(mode)]);
    for v in pose.origin.iter().chain(pose.orientation.matrix().iter()) {
        h.update(v.to_le_bytes());
    }
    h.update((pose.n1 as u64).to_le_bytes());
    h.update((pose.n2 as u64).to_le_bytes());
    h.update(pose.spacing.to_le_bytes());
    h.update((grid.n_r as u64).to_le_bytes());
    h.update(grid.r_min.unwrap_or(-1.0).to_le_bytes());
    for v in [
        grid.theta_min,
        grid.theta_max,
        grid.delta_theta,
        grid.phi_min,
        grid.phi_max,
        grid.delta_phi,
        wavelength,
    ] {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

/// Hex key identifying a dictionary by everything it is built from.
pub fn dictionary_cache_key(pose: &RisPose, grid: &GridSpec, wavelength: f64, mode: DictionaryMode) -> String {
    hex::encode(digest(pose, grid, wavelength, mode))
}

pub fn write_dictionary(path: &Path, dict: &Dictionary, key: &str, mode: DictionaryMode) -> Result<()> {
    let key_bytes = hex::decode(key).map_err(|e| Error::Cache(e.to_string()))?;
    if key_bytes.len() != 32 {
        return Err(Error::Cache("key must be a 32-byte digest".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&key_bytes)?;
    w.write_all(&[mode_tag(mode)])?;
    for n in [dict.atoms.nrows(), dict.s1, dict.s2] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for label in &dict.labels {
        let (tag, vals) = match *label {
            AtomLabel::Near(s) => (0u8, [s.r, s.theta, s.phi]),
            AtomLabel::Far { theta, phi } => (1u8, [0.0, theta, phi]),
        };
        w.write_all(&[tag])?;
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for z in dict.atoms.iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Reads a cached dictionary, rejecting files written for a different key.
pub fn read_dictionary(path: &Path, key: &str) -> Result<Dictionary> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Cache("not a dictionary cache file".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    if u32::from_le_bytes(v) != VERSION {
        return Err(Error::Cache(format!("unsupported cache version {}", u32::from_le_bytes(v))));
    }
    let mut stored = [0u8; 32];
    r.read_exact(&mut stored)?;
    if hex::encode(stored) != key {
        return Err(Error::Cache("cache key mismatch".into()));
    }
    let mut mode = [0u8; 1];
    r.read_exact(&mut mode)?;
    let n = read_u64(&mut r)? as usize;
    let s1 = read_u64(&mut r)? as usize;
    let s2 = read_u64(&mut r)? as usize;
    let s = s1 + s2;
    let mut labels = Vec::with_capacity(s);
    for _ in 0..s {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let (a, b, c) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        labels.push(match tag[0] {
            0 => AtomLabel::Near(SphericalCoord { r: a, theta: b, phi: c }),
            1 => AtomLabel::Far { theta: b, phi: c },
            t => return Err(Error::Cache(format!("bad atom tag {t}"))),
        });
    }
    let mut data = Vec::with_capacity(n * s);
    for _ in 0..n * s {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        data.push(C64::new(re, im));
    }
    Ok(Dictionary { atoms: CMatrix::from_vec(n, s, data), labels, s1, s2 })
}

/// Loads the dictionary from `cache_dir` when present, otherwise builds it
/// and (if a directory is given) stores it for next time.
pub fn load_or_build(
    cache_dir: Option<&Path>,
    pose: &RisPose,
    grid: &GridSpec,
    wavelength: f64,
    mode: DictionaryMode,
) -> Result<Dictionary> {
    let Some(dir) = cache_dir else {
        return build_dictionary(pose, grid, wavelength, mode);
    };
    let key = dictionary_cache_key(pose, grid, wavelength, mode);
    let path = dir.join(format!("{key}.risdict"));
    if path.exists() {
        if let Ok(d) = read_dictionary(&path, &key) {
            return Ok(d);
        }
    }
    let dict = build_dictionary(pose, grid, wavelength, mode)?;
    fs::create_dir_all(dir)?;
    write_dictionary(&path, &dict, &key, mode)?;
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Vec3;

    fn small() -> (RisPose, GridSpec) {
        let pose = RisPose::facing(Vec3::new(1.0, 2.0, 0.5), Vec3::new(1.0, 1.0, 0.0), 4, 4, 0.005).unwrap();
        let grid = GridSpec {
            n_r: 2,
            r_min: None,
            theta_min: -0.2,
            theta_max: 0.2,
            delta_theta: 0.1,
            phi_min: 0.0,
            phi_max: 0.1,
            delta_phi: 0.1,
        };
        (pose, grid)
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (pose, grid) = small();
        let built = load_or_build(Some(dir.path()), &pose, &grid, 0.0107, DictionaryMode::Hybrid).unwrap();
        let loaded = load_or_build(Some(dir.path()), &pose, &grid, 0.0107, DictionaryMode::Hybrid).unwrap();
        assert_eq!(built, loaded);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn key_depends_on_inputs() {
        let (pose, grid) = small();
        let k = dictionary_cache_key(&pose, &grid, 0.0107, DictionaryMode::Hybrid);
        assert_ne!(k, dictionary_cache_key(&pose, &grid, 0.0108, DictionaryMode::Hybrid));
        assert_ne!(k, dictionary_cache_key(&pose, &grid, 0.0107, DictionaryMode::FarFieldOnly));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.risdict");
        let d = build_dictionary(&pose, &grid, 0.0107, DictionaryMode::Hybrid).unwrap();
        write_dictionary(&path, &d, &k, DictionaryMode::Hybrid).unwrap();
        let other = dictionary_cache_key(&pose, &grid, 0.02, DictionaryMode::Hybrid);
        assert!(matches!(read_dictionary(&path, &other), Err(Error::Cache(_))));
    }
}
