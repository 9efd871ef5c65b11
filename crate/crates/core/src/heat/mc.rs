//! Monte Carlo heat content: `u(s, x) = P_x(hit the boundary by time s)`,
//! averaged over uniform starting points.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rng::{mix64, stream_rng, streams};
use crate::spatial::Domain;

/// Step control of the walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCtl {
    /// Largest time step.
    pub dt_max: f64,
    /// A walker closer than this to the boundary is absorbed.
    pub absorb_halo: f64,
    /// Time step is at most `(rho * dist)^2`.
    pub rho: f64,
    /// A walker farther than `far_field * sqrt(remaining time)` survives.
    pub far_field: f64,
}

impl StepCtl {
    /// Defaults scaled to the diffusion length of time `s`.
    pub fn for_time(s: f64) -> Self {
        Self {
            dt_max: s / 64.0,
            absorb_halo: 1e-3 * s.sqrt(),
            rho: 0.5,
            far_field: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    #[serde(rename = "E")]
    pub e: f64,
    pub stderr: f64,
    pub hits: u64,
    pub trials: u64,
}

pub fn heat_mc(domain: &Domain, s: f64, trials: u64, ctl: &StepCtl, seed: u64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::param("trials must be >= 1"));
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::param(format!("time must be finite and >= 0, got {s}")));
    }
    if s > 0.0
        && !(ctl.dt_max > 0.0 && ctl.absorb_halo >= 0.0 && ctl.rho > 0.0 && ctl.far_field > 0.0)
    {
        return Err(Error::param("invalid step control"));
    }
    let base = mix64(seed ^ streams::HEAT_MC);
    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(trials);
            (lo..hi).map(|t| u64::from(trial(domain, s, ctl, base, t))).sum::<u64>()
        })
        .collect::<Vec<u64>>()
        .into_iter()
        .sum();
    let p = hits as f64 / trials as f64;
    let area = domain.area;
    Ok(McEstimate {
        e: area * p,
        stderr: area * (p * (1.0 - p) / trials as f64).sqrt(),
        hits,
        trials,
    })
}

/// One walker; true if it reaches the boundary by time `s`.
fn trial(domain: &Domain, s: f64, ctl: &StepCtl, base: u64, index: u64) -> bool {
    let mut rng = stream_rng(base, index);
    let idx = &domain.index;
    let mut x = domain.sample_uniform(&mut rng);
    if s == 0.0 {
        return false;
    }
    let mut near = idx.nearest(x);
    let mut t = 0.0;
    loop {
        let remaining = s - t;
        if remaining <= 0.0 {
            return false;
        }
        let d = near.dist();
        if d < ctl.absorb_halo {
            return true;
        }
        if d >= ctl.far_field * remaining.sqrt() {
            return false;
        }
        let dt = ctl.dt_max.min((ctl.rho * d).powi(2)).min(remaining);
        let sd = dt.sqrt();
        let gx: f64 = StandardNormal.sample(&mut rng);
        let gy: f64 = StandardNormal.sample(&mut rng);
        let y = Point::new(x.x + sd * gx, x.y + sd * gy);

        // Signed distances to the supporting line of the nearest segment,
        // positive on the interior side of the ring.
        let (a, b) = idx.segment(near.seg);
        let e = b.sub(a);
        let len = e.norm();
        let o = idx.orientation();
        let n = Point::new(-o * e.y / len, o * e.x / len);
        let d1 = x.sub(a).dot(n);
        let d2 = y.sub(a).dot(n);

        let ny = idx.nearest(y);
        if ny.dist2 == 0.0 || !idx.is_inside_from(y, &ny) || d2 <= 0.0 {
            return true;
        }
        if d1 > 0.0 {
            let p = (-2.0 * d1 * d2 / dt).exp();
            let u: f64 = rand::Rng::gen(&mut rng);
            if u < p {
                return true;
            }
        }
        x = y;
        near = ny;
        t += dt;
    }
}
