//! Memoization of stationary states and slow Liouvillian rates, keyed by the
//! exact bit patterns of the model parameters. Entries live in memory for the
//! process lifetime and, when `DICKE_SENSE_CACHE_DIR` is set, in JSON files
//! under that directory.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{OnceLock, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dicke::{ModelParams, SuperOperator};
use crate::dynamics::{self, SlowRates};
use crate::error::Result;
use crate::linalg::c64;

pub const CACHE_DIR_VAR: &str = "DICKE_SENSE_CACHE_DIR";

/// Bumped whenever cached quantities change meaning.
const FORMAT: u32 = 1;

fn memory() -> &'static RwLock<HashMap<String, String>> {
    static M: OnceLock<RwLock<HashMap<String, String>>> = OnceLock::new();
    M.get_or_init(|| RwLock::new(HashMap::new()))
}

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_VAR).filter(|s| !s.is_empty()).map(PathBuf::from)
}

/// Stable key for a parameter set and generator kind.
pub fn key(kind: &str, p: &ModelParams) -> String {
    format!(
        "{kind}-v{FORMAT}-n{}-{:016x}-{:016x}-{:016x}",
        p.n,
        p.omega.to_bits(),
        p.gamma_coll.to_bits(),
        p.gamma_loc.to_bits()
    )
}

fn load<T: DeserializeOwned>(key: &str) -> Option<T> {
    if let Some(s) = memory().read().ok()?.get(key) {
        return serde_json::from_str(s).ok();
    }
    let path = cache_dir()?.join(format!("{key}.json"));
    let s = std::fs::read_to_string(path).ok()?;
    let v = serde_json::from_str(&s).ok()?;
    if let Ok(mut m) = memory().write() {
        m.insert(key.to_string(), s);
    }
    Some(v)
}

fn store<T: Serialize>(key: &str, v: &T) {
    let Ok(s) = serde_json::to_string(v) else { return };
    if let Some(dir) = cache_dir() {
        // best effort: a failed write only costs a recomputation later
        if std::fs::create_dir_all(&dir).is_ok() {
            let tmp = dir.join(format!("{key}.json.{}", std::process::id()));
            if std::fs::write(&tmp, &s).is_ok() {
                let _ = std::fs::rename(&tmp, dir.join(format!("{key}.json")));
            }
        }
    }
    if let Ok(mut m) = memory().write() {
        m.insert(key.to_string(), s);
    }
}

/// Returns the cached value for `key` or computes and stores it.
pub fn get_or_compute<T, F>(key: &str, f: F) -> Result<T>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    if let Some(v) = load(key) {
        return Ok(v);
    }
    let v = f()?;
    store(key, &v);
    Ok(v)
}

fn generator_kind(l: &SuperOperator) -> &'static str {
    if l.space.is_single_sector() {
        "collective"
    } else {
        "ladder"
    }
}

/// Stationary state of `l` (vectorized in its own layout).
pub fn steady_state(l: &SuperOperator) -> Result<Vec<c64>> {
    let k = key(&format!("ss-{}", generator_kind(l)), &l.params);
    let pairs: Vec<(f64, f64)> = get_or_compute(&k, || {
        Ok(dynamics::steady_state_vec(l)?.into_iter().map(|z| (z.re, z.im)).collect())
    })?;
    Ok(pairs.into_iter().map(|(re, im)| c64::new(re, im)).collect())
}

/// Slow decay rates from the full spectrum of `l`.
pub fn slow_rates(l: &SuperOperator) -> Result<SlowRates> {
    let k = key(&format!("rates-{}", generator_kind(l)), &l.params);
    get_or_compute(&k, || {
        let ev = dynamics::liouvillian_eigenvalues(l)?;
        Ok(dynamics::slow_rates(&ev, l.params.gamma_coll))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_distinguish_parameters() {
        let a = ModelParams::from_ratios(4, 1.0, 0.0).unwrap();
        let b = a.with_omega(a.omega + 1e-12);
        assert_ne!(key("ss", &a), key("ss", &b));
        assert_eq!(key("ss", &a), key("ss", &a));
    }

    #[test]
    fn memoized_state_is_bit_identical() {
        let p = ModelParams::from_ratios(3, 1.7, 0.0).unwrap();
        let l = crate::dicke::build_liouvillian(&p).unwrap();
        let a = steady_state(&l).unwrap();
        let b = steady_state(&l).unwrap();
        let c = dynamics::steady_state_vec(&l).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
