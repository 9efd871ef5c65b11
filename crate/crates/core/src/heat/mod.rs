//! Heat content `E(s) = int_D u(s, x) dx` of polygonal domains with unit
//! boundary temperature, by finite differences and by Brownian hitting,
//! together with the tube-volume bound functionals and slope diagnostics.

pub mod analysis;
pub mod bounds;
pub mod fd;
pub mod mc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{counts, snowflake_capped, ScaleSequence, DEFAULT_SEGMENT_CAP};
use crate::spatial::Domain;
use crate::tubular::level_for;

pub use analysis::{abelian_check, depth_slopes, log_slope, scaling_check, SlopeReport};
pub use bounds::{lower_proxy, thm22_upper, vdb_upper, OmegaSchedule};
pub use fd::{heat_fd, FdOptions, FdRun};
pub use mc::{heat_mc, McEstimate, StepCtl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatMethod {
    Fd,
    Mc,
    BoundUpperVdb,
    BoundUpperThm22,
    BoundLowerProxy,
}

impl HeatMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeatMethod::Fd => "fd",
            HeatMethod::Mc => "mc",
            HeatMethod::BoundUpperVdb => "bound-upper-vdb",
            HeatMethod::BoundUpperThm22 => "bound-upper-thm22",
            HeatMethod::BoundLowerProxy => "bound-lower-proxy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatEntry {
    pub s: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub stderr: f64,
    pub method: HeatMethod,
}

/// Sampled `(s, E(s))` pairs sorted by increasing `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatProfile {
    #[serde(rename = "domainId")]
    pub domain_id: String,
    pub area: f64,
    pub entries: Vec<HeatEntry>,
}

impl HeatProfile {
    pub fn new(domain_id: impl Into<String>, area: f64, mut entries: Vec<HeatEntry>) -> Self {
        entries.sort_by(|a, b| a.s.total_cmp(&b.s));
        Self {
            domain_id: domain_id.into(),
            area,
            entries,
        }
    }

    pub fn from_fn(area: f64, s: &[f64], method: HeatMethod, f: impl Fn(f64) -> f64) -> Self {
        let entries = s
            .iter()
            .map(|&s| HeatEntry {
                s,
                e: f(s),
                stderr: 0.0,
                method,
            })
            .collect();
        Self::new("synthetic", area, entries)
    }

    pub fn s(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.s).collect()
    }

    pub fn e(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.e).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["s", "E", "stderr", "method"])?;
        for e in &self.entries {
            w.write_record([
                e.s.to_string(),
                e.e.to_string(),
                e.stderr.to_string(),
                e.method.as_str().to_string(),
            ])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

/// Heat content of a fixed domain by one finite-difference run.
pub fn heat_fd_profile(
    domain: &Domain,
    s_list: &[f64],
    h: f64,
    opts: &FdOptions,
) -> Result<HeatProfile> {
    let run = heat_fd(domain, s_list, h, opts)?;
    let entries = run
        .s
        .iter()
        .zip(&run.e)
        .map(|(&s, &e)| HeatEntry {
            s,
            e,
            stderr: 0.0,
            method: HeatMethod::Fd,
        })
        .collect();
    Ok(HeatProfile::new(domain.id.clone(), domain.area, entries))
}

/// Resolution rule for finite differences on a scale-homogeneous snowflake.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnowflakePlan {
    /// The construction level at time `s` is the first with `eps_n <= sqrt(s) / level_div`.
    pub level_div: f64,
    /// Grid pitch `eps_n / grid_div`.
    pub grid_div: f64,
    pub band: f64,
    pub max_cells: u64,
}

impl Default for SnowflakePlan {
    fn default() -> Self {
        Self {
            level_div: 2.0,
            grid_div: 4.0,
            band: FdOptions::default().band,
            max_cells: FdOptions::default().max_cells,
        }
    }
}

/// Per-`s` level selection; times sharing a level share one run.
pub fn snowflake_heat_fd(
    seq: &ScaleSequence,
    s_list: &[f64],
    plan: &SnowflakePlan,
) -> Result<HeatProfile> {
    seq.validate()?;
    if s_list.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::param("times must be positive"));
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for &s in s_list {
        groups
            .entry(level_for(seq, s.sqrt() / plan.level_div)?)
            .or_default()
            .push(s);
    }
    let opts = FdOptions {
        band: plan.band,
        max_cells: plan.max_cells,
        ..FdOptions::default()
    };
    let mut entries = Vec::with_capacity(s_list.len());
    let mut area = 0.0;
    for (level, mut ss) in groups {
        ss.sort_by(f64::total_cmp);
        let h = counts(seq, level)?.eps / plan.grid_div;
        let dom = Domain::new_unchecked(snowflake_capped(seq, level, DEFAULT_SEGMENT_CAP)?);
        area = f64::max(area, dom.area);
        let run = heat_fd(&dom, &ss, h, &opts)?;
        entries.extend(run.s.iter().zip(&run.e).map(|(&s, &e)| HeatEntry {
            s,
            e,
            stderr: 0.0,
            method: HeatMethod::Fd,
        }));
    }
    Ok(HeatProfile::new(crate::io::hash_json(seq)?, area, entries))
}
