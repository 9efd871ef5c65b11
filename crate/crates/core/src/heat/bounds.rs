//! Upper and lower bounds on the heat content in terms of the tube profile
//! (planar case, `d = 2`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, log_trapezoid};
use crate::tubular::TubularProfile;

/// The cut-off `omega(s)` used by the two-term upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OmegaSchedule {
    /// `sqrt(4 s log(1/s))`, for `0 < s < 1`.
    SqrtLog,
    /// `sqrt(4 s log^i(1/s))` with `log^i` the `i`-fold logarithm.
    IteratedLog { i: u32 },
    /// `c sqrt(s)`.
    Custom { c: f64 },
}

impl OmegaSchedule {
    pub fn omega(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::param(format!("omega needs s > 0, got {s}")));
        }
        let w = match *self {
            OmegaSchedule::SqrtLog => {
                if s >= 1.0 {
                    return Err(Error::param(format!("sqrt-log schedule needs s < 1, got {s}")));
                }
                (4.0 * s * (1.0 / s).ln()).sqrt()
            }
            OmegaSchedule::IteratedLog { i } => {
                if i == 0 {
                    return Err(Error::param("iterated log depth must be >= 1"));
                }
                let mut v = 1.0 / s;
                for _ in 0..i {
                    if v <= 0.0 {
                        break;
                    }
                    v = v.ln();
                }
                if !(v > 0.0) {
                    return Err(Error::param(format!("log^{i}(1/s) is not positive at s = {s}")));
                }
                (4.0 * s * v).sqrt()
            }
            OmegaSchedule::Custom { c } => {
                if !(c > 0.0) {
                    return Err(Error::param("custom omega factor must be positive"));
                }
                c * s.sqrt()
            }
        };
        Ok(w)
    }
}

/// `2 s^{-1} int_0^inf eps exp(-eps^2 / 4s) mu(eps) d eps`.
pub fn vdb_upper(profile: &TubularProfile, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::param(format!("s must be positive, got {s}")));
    }
    let (lo, hi) = profile
        .eps_range()
        .ok_or_else(|| Error::InsufficientSpan("empty profile".into()))?;
    let rs = s.sqrt();
    let saturated = profile.entries.last().is_some_and(|e| e.mu >= profile.area);
    if lo > rs / 4.0 || (hi < 8.0 * rs && !saturated) || profile.entries.len() < 2 {
        return Err(Error::InsufficientSpan(format!(
            "need eps samples from <= {:.3e} to >= {:.3e} (or saturation), have [{lo:.3e}, {hi:.3e}]",
            rs / 4.0,
            8.0 * rs
        )));
    }
    let w = |e: f64| e * (-e * e / (4.0 * s)).exp();
    let f = |e: f64| w(e) * profile.mu_at(e);
    // Below the first sample mu follows the power law of the two smallest bins.
    let below = adaptive_simpson(f, 0.0, lo, 1e-14 * s)?;
    let middle = log_trapezoid(f, lo, hi, 1e-4)?;
    // Above the last sample mu is the domain area.
    let above = profile.area.max(profile.entries.last().unwrap().mu)
        * 2.0
        * s
        * (-hi * hi / (4.0 * s)).exp();
    Ok(2.0 / s * (below + middle + above))
}

/// `mu(omega(s)) + 4 vol exp(-omega(s)^2 / 4s)`.
pub fn thm22_upper(profile: &TubularProfile, s: f64, omega: OmegaSchedule, vol: f64) -> Result<f64> {
    let w = omega.omega(s)?;
    Ok(profile.mu_at(w) + 4.0 * vol * (-w * w / (4.0 * s)).exp())
}

/// `c1 mu(c2 sqrt(s))`.
pub fn lower_proxy(profile: &TubularProfile, s: f64, c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::param("c1 and c2 must be positive"));
    }
    Ok(c1 * profile.mu_at(c2 * s.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn constant_profile() {
        let p = TubularProfile::from_fn(0.7, &log_grid(1e-6, 1.0, 40), |_| 0.7);
        let v = vdb_upper(&p, 1e-4).unwrap();
        assert!((v / (4.0 * 0.7) - 1.0).abs() < 1e-4, "{v}");
    }

    #[test]
    fn linear_profile_against_quadrature() {
        let s: f64 = 1e-4;
        let p = TubularProfile::from_fn(1.0, &log_grid(1e-6, 1.0, 60), |e| e.min(1.0));
        let v = vdb_upper(&p, s).unwrap();
        // Independent oracle: adaptive Simpson of the same integrand in eps.
        let rs = s.sqrt();
        let direct = 2.0 / s
            * (0..20)
                .map(|k| {
                    let f = |e: f64| e * e * (-e * e / (4.0 * s)).exp();
                    adaptive_simpson(f, k as f64 * rs, (k + 1) as f64 * rs, 1e-18).unwrap()
                })
                .sum::<f64>();
        let closed = 4.0 * std::f64::consts::PI.sqrt() * s.sqrt();
        assert!((direct / closed - 1.0).abs() < 1e-8);
        assert!((v / direct - 1.0).abs() < 1e-4, "{v} vs {direct}");
    }

    #[test]
    fn span_is_checked() {
        let p = TubularProfile::from_fn(1.0, &log_grid(1e-2, 1e-1, 10), |e| e);
        assert!(matches!(vdb_upper(&p, 1e-4), Err(Error::InsufficientSpan(_))));
    }

    #[test]
    fn sqrt_log_exponential_term() {
        // exp(-omega^2 / 4s) = s under this schedule.
        let p = TubularProfile::from_fn(1.0, &log_grid(1e-6, 1.0, 30), |e| e);
        for s in [1e-6, 1e-4, 0.1] {
            let w = OmegaSchedule::SqrtLog.omega(s).unwrap();
            let v = thm22_upper(&p, s, OmegaSchedule::SqrtLog, 2.5).unwrap();
            assert!((v - (w + 4.0 * 2.5 * s)).abs() < 1e-9 * v, "{s} {v}");
        }
        assert!(thm22_upper(&p, 1.0, OmegaSchedule::SqrtLog, 1.0).is_err());
    }

    #[test]
    fn iterated_log_schedule() {
        let s: f64 = 1e-4;
        let w1 = OmegaSchedule::IteratedLog { i: 1 }.omega(s).unwrap();
        assert_eq!(w1, OmegaSchedule::SqrtLog.omega(s).unwrap());
        let w2 = OmegaSchedule::IteratedLog { i: 2 }.omega(s).unwrap();
        assert!((w2 - (4.0 * s * (1e4f64).ln().ln()).sqrt()).abs() < 1e-15);
        assert!(OmegaSchedule::IteratedLog { i: 3 }.omega(0.2).is_err());
    }

    #[test]
    fn lower_proxy_is_monotone_in_c1() {
        let p = TubularProfile::from_fn(1.0, &log_grid(1e-4, 1.0, 20), |e| e.sqrt());
        let a = lower_proxy(&p, 1e-4, 0.5, 1.0).unwrap();
        let b = lower_proxy(&p, 1e-4, 1.0, 1.0).unwrap();
        assert!(a < b && (b - 0.1).abs() < 1e-9);
    }
}
