//! Curve documents, SVG output, content hashes and the on-disk result cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::geometry::{Point, Polyline};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "KOCH_HEAT_CACHE";

/// Serialized curve: `{version, seq, level, vertices, closed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveDoc {
    pub version: u32,
    pub seq: serde_json::Value,
    pub level: usize,
    pub vertices: Vec<Point>,
    pub closed: bool,
}

impl CurveDoc {
    pub fn new(seq: serde_json::Value, level: usize, curve: &Polyline) -> Self {
        Self {
            version: SCHEMA_VERSION,
            seq,
            level,
            vertices: curve.vertices.clone(),
            closed: curve.closed,
        }
    }

    pub fn polyline(&self) -> Polyline {
        Polyline {
            vertices: self.vertices.clone(),
            closed: self.closed,
        }
    }
}

/// SVG 1.1 document with one path, fitted into a unit viewBox (y up).
pub fn curve_svg(curve: &Polyline) -> String {
    let bb = curve.bbox();
    let span = bb.width().max(bb.height()).max(f64::MIN_POSITIVE);
    let s = 0.96 / span;
    let ox = 0.02 + (0.96 - bb.width() * s) / 2.0;
    let oy = 0.02 + (0.96 - bb.height() * s) / 2.0;
    let mut d = String::with_capacity(curve.vertices.len() * 24);
    for (i, p) in curve.vertices.iter().enumerate() {
        let x = ox + (p.x - bb.min.x) * s;
        let y = 1.0 - (oy + (p.y - bb.min.y) * s);
        d.push_str(if i == 0 { "M" } else { " L" });
        d.push_str(&format!("{x:.7} {y:.7}"));
    }
    if curve.closed {
        d.push_str(" Z");
    }
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 1 1\" width=\"800\" height=\"800\">\n\
         <path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"0.002\"/>\n\
         </svg>\n"
    )
}

/// Hex SHA-256 prefix (16 chars) of the canonical JSON form of `v`.
pub fn hash_json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let value = serde_json::to_value(v)?;
    let bytes = serde_json::to_vec(&value)?;
    Ok(hex16(&Sha256::digest(bytes)))
}

fn hex16(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// File cache keyed by `(module, operation, canonical parameters)`.
#[derive(Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Cache {
    pub fn disabled() -> Self {
        Self {
            dir: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::disabled()
        }
    }

    /// Directory from the environment, else `default`.
    pub fn from_env(default: impl AsRef<Path>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::at(PathBuf::from(d)),
            _ => Self::at(default.as_ref()),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn key<P: Serialize>(module: &str, op: &str, params: &P) -> Result<String> {
        hash_json(&serde_json::json!({
            "module": module,
            "op": op,
            "params": serde_json::to_value(params)?,
            "version": SCHEMA_VERSION,
        }))
    }

    /// Returns the cached value for the key, or computes and stores it.
    pub fn get_or_compute<P, T, F>(&self, module: &str, op: &str, params: &P, f: F) -> Result<T>
    where
        P: Serialize,
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let Some(dir) = &self.dir else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return f();
        };
        let key = Self::key(module, op, params)?;
        let path = dir.join(format!("{module}-{op}-{key}.json"));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(v) = serde_json::from_str(&text) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(v);
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = f()?;
        fs::create_dir_all(dir)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&v)?)?;
        fs::rename(tmp, path)?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{koch_curve, ScaleSequence};

    #[test]
    fn curve_doc_round_trip() {
        let seq = ScaleSequence::explicit(vec![1, 3, 2, 1]);
        let c = koch_curve(&seq, 2).unwrap();
        let doc = CurveDoc::new(serde_json::to_value(&seq).unwrap(), 2, &c);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"vertices\":[[0.0,0.0]"));
        let back: CurveDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.polyline(), c);
    }

    #[test]
    fn svg_has_unit_viewbox() {
        let c = koch_curve(&ScaleSequence::constant(1), 1).unwrap();
        let svg = curve_svg(&c);
        assert!(svg.contains("viewBox=\"0 0 1 1\""));
        assert_eq!(svg.matches(" L").count(), 4);
    }

    #[test]
    fn cache_hits_second_time() {
        let dir = std::env::temp_dir().join(format!("kh-cache-test-{}", std::process::id()));
        let cache = Cache::at(&dir);
        let mut calls = 0;
        for _ in 0..2 {
            let v: Vec<f64> = cache
                .get_or_compute("m", "op", &(1, 2.5), || {
                    calls += 1;
                    Ok(vec![1.0, 2.0])
                })
                .unwrap();
            assert_eq!(v, vec![1.0, 2.0]);
        }
        assert_eq!((calls, cache.hits(), cache.misses()), (1, 1, 1));
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(hash_json(&[1, 2]).unwrap(), hash_json(&vec![1, 2]).unwrap());
        assert_ne!(hash_json(&[1, 2]).unwrap(), hash_json(&[2, 1]).unwrap());
    }
}
