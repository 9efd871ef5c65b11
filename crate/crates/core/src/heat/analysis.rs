//! Log-slope diagnostics of heat profiles, the Abelian comparison with the
//! tube profile, the scaling identity, and slopes at virtual depths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{counts, ScaleSequence};
use crate::geometry::Polyline;
use crate::heat::{fd::heat_fd, snowflake_heat_fd, FdOptions, HeatProfile, SnowflakePlan};
use crate::spatial::Domain;
use crate::stats::{linear_fit, median, min_max};
use crate::tubular::{level_for, TubularProfile};

/// Samples per sliding window of [`log_slope`].
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub s: Vec<f64>,
    /// `1 - log E(s) / log s` per sample.
    pub q_raw: Vec<f64>,
    /// `(window centre, 1 - fitted slope)` per sliding window.
    pub windows: Vec<(f64, f64)>,
    /// `1 - slope` of the fit over all samples.
    pub q_fit: f64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

impl SlopeReport {
    /// Boundary dimension `2 q` implied by the global fit.
    pub fn dim_fit(&self) -> f64 {
        2.0 * self.q_fit
    }

    pub fn dims(&self) -> (f64, f64) {
        (2.0 * self.lower, 2.0 * self.upper)
    }
}

pub fn log_slope(profile: &HeatProfile) -> Result<SlopeReport> {
    log_slope_windowed(profile, DEFAULT_WINDOW)
}

/// `q = 1 - d log E / d log s` from least-squares fits over sliding windows
/// of `window` consecutive samples.
pub fn log_slope_windowed(profile: &HeatProfile, window: usize) -> Result<SlopeReport> {
    let pts: Vec<(f64, f64)> = profile
        .entries
        .iter()
        .filter(|e| e.s > 0.0 && e.e > 0.0)
        .map(|e| (e.s, e.e))
        .collect();
    if pts.len() < 8 {
        return Err(Error::TooFewSamples(format!("{} positive samples, need 8", pts.len())));
    }
    let (s_lo, s_hi) = (pts[0].0, pts[pts.len() - 1].0);
    if s_hi / s_lo < 100.0 * (1.0 - 1e-9) {
        return Err(Error::TooFewSamples(format!(
            "samples span {:.2} decades, need 2",
            (s_hi / s_lo).log10()
        )));
    }
    let w = window.clamp(2, pts.len());
    let ls: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let le: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let q_raw = ls.iter().zip(&le).map(|(s, e)| 1.0 - e / s).collect();
    let windows: Vec<(f64, f64)> = (0..=pts.len() - w)
        .map(|i| {
            let (_, b) = linear_fit(&ls[i..i + w], &le[i..i + w]);
            let centre = (ls[i..i + w].iter().sum::<f64>() / w as f64).exp();
            (centre, 1.0 - b)
        })
        .collect();
    let qs: Vec<f64> = windows.iter().map(|w| w.1).collect();
    let (lower, upper) = min_max(&qs);
    let (_, b) = linear_fit(&ls, &le);
    Ok(SlopeReport {
        s: pts.iter().map(|p| p.0).collect(),
        q_raw,
        windows,
        q_fit: 1.0 - b,
        lower,
        median: median(&qs),
        upper,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbelianReport {
    pub s: Vec<f64>,
    /// `E(s) / (s^{1 - gamma/2} L~(1/s))`.
    pub ratio: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl AbelianReport {
    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

/// Compares `E(s)` with the prediction from the tube profile.
/// With `L(1/eps) = mu(eps) eps^{gamma - 2}` and `L~(x) = L(sqrt(x)/2)`,
/// the prediction `s^{1-gamma/2} L~(1/s)` equals `2^{gamma-2} mu(2 sqrt s)`.
pub fn abelian_check(tube: &TubularProfile, heat: &HeatProfile, gamma: f64) -> Result<AbelianReport> {
    let (lo, hi) = tube
        .eps_range()
        .ok_or_else(|| Error::InsufficientSpan("empty tube profile".into()))?;
    let mut s = Vec::new();
    let mut ratio = Vec::new();
    for e in &heat.entries {
        let eps = 2.0 * e.s.sqrt();
        if eps < lo * (1.0 - 1e-12) || eps > hi * (1.0 + 1e-12) || e.e <= 0.0 {
            continue;
        }
        s.push(e.s);
        ratio.push(2f64.powf(2.0 - gamma) * e.e / tube.mu_at(eps));
    }
    if s.is_empty() {
        return Err(Error::InsufficientSpan(format!(
            "no heat sample has 2 sqrt(s) in the tube range [{lo:.3e}, {hi:.3e}]"
        )));
    }
    let (min, max) = min_max(&ratio);
    Ok(AbelianReport { s, ratio, min, max })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lhs: f64,
    pub rhs: f64,
    pub rel: f64,
}

/// `E_{rD}(s)` against `r^2 E_D(s / r^2)`, both at pitch `rho sqrt(time)`.
pub fn scaling_check(polygon: &Polyline, r: f64, s: f64, rho: f64) -> Result<ScalingReport> {
    if !(r > 0.0 && s > 0.0 && rho > 0.0) {
        return Err(Error::param("r, s and rho must be positive"));
    }
    let d = Domain::new(polygon.clone())?;
    let dr = Domain::new(polygon.scaled(r))?;
    let opts = FdOptions::default();
    let lhs = heat_fd(&dr, &[s], rho * s.sqrt(), &opts)?.e[0];
    let t = s / (r * r);
    let rhs = r * r * heat_fd(&d, &[t], rho * t.sqrt(), &opts)?.e[0];
    let rel = if lhs == rhs { 0.0 } else { (lhs - rhs).abs() / lhs.abs().max(rhs.abs()) };
    Ok(ScalingReport { lhs, rhs, rel })
}

/// Log-slope of the heat content seen at construction depth `shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSlope {
    pub shift: u64,
    /// `1 - d log E / d log s` over the window.
    pub q: f64,
    /// `ln` of the virtual time range `s' eps_shift^2` covered by the window.
    pub ln_s_virtual: (f64, f64),
    /// Construction levels of the base sequence resolved by the window.
    pub levels: (usize, usize),
}

/// Near scale `eps_k` the snowflake of `seq` is made of `3 M_k` copies of
/// `eps_k` times one side of the snowflake of the shifted sequence, so by the
/// scaling identity `E(s) ~ M_k eps_k^2 E_k(s / eps_k^2)` and the slope of
/// `log E` at `s = s' eps_k^2` is that of the shifted snowflake at `s'`.
pub fn depth_slopes(
    seq: &ScaleSequence,
    shifts: &[u64],
    s_window: &[f64],
    plan: &SnowflakePlan,
) -> Result<Vec<DepthSlope>> {
    if s_window.len() < 2 {
        return Err(Error::TooFewSamples("window needs two times".into()));
    }
    let (s_lo, s_hi) = min_max(s_window);
    shifts
        .iter()
        .map(|&k| {
            let sub = seq.shifted(k);
            let prof = snowflake_heat_fd(&sub, s_window, plan)?;
            let ls: Vec<f64> = prof.entries.iter().map(|e| e.s.ln()).collect();
            let le: Vec<f64> = prof.entries.iter().map(|e| e.e.ln()).collect();
            let (_, b) = linear_fit(&ls, &le);
            let ln_l = counts(seq, k as usize)?.ln_l();
            let lv = |s: f64| level_for(&sub, s.sqrt() / plan.level_div);
            Ok(DepthSlope {
                shift: k,
                q: 1.0 - b,
                ln_s_virtual: (s_lo.ln() - 2.0 * ln_l, s_hi.ln() - 2.0 * ln_l),
                levels: (k as usize + lv(s_hi)?, k as usize + lv(s_lo)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::heat::HeatMethod;

    fn s_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn pure_power_law_slope() {
        let gamma = 4f64.ln() / 3f64.ln();
        let p = HeatProfile::from_fn(1.0, &s_grid(1e-6, 1e-3, 13), HeatMethod::Fd, |s| {
            s.powf(1.0 - gamma / 2.0)
        });
        let r = log_slope(&p).unwrap();
        assert!((r.q_fit - gamma / 2.0).abs() < 1e-12);
        assert!(r.q_raw.iter().all(|q| (q - gamma / 2.0).abs() < 1e-12));
        assert!((r.lower - 0.630_93).abs() < 1e-5 && (r.upper - 0.630_93).abs() < 1e-5);
    }

    #[test]
    fn slope_needs_samples() {
        let p = HeatProfile::from_fn(1.0, &s_grid(1e-4, 1e-3, 12), HeatMethod::Fd, |s| s);
        assert!(matches!(log_slope(&p), Err(Error::TooFewSamples(_))));
        let p = HeatProfile::from_fn(1.0, &s_grid(1e-6, 1e-3, 5), HeatMethod::Fd, |s| s);
        assert!(matches!(log_slope(&p), Err(Error::TooFewSamples(_))));
    }

    /// `s^{-1} int eps exp(-eps^2/4s) mu(eps) d eps` evaluated by quadrature.
    fn transform(mu: impl Fn(f64) -> f64, s: f64) -> f64 {
        let rs = s.sqrt();
        let f = |e: f64| if e > 0.0 { e * (-e * e / (4.0 * s)).exp() * mu(e) } else { 0.0 };
        (0..20)
            .map(|k| {
                crate::quadrature::adaptive_simpson(f, k as f64 * rs, (k + 1) as f64 * rs, 1e-15 * s)
                    .unwrap()
            })
            .sum::<f64>()
            / s
    }

    #[test]
    fn abelian_ratio_constant_for_power_law() {
        let gamma = 1.5;
        let mu = |e: f64| e.powf(2.0 - gamma);
        let eps = s_grid(1e-5, 1.0, 80);
        let tube = TubularProfile::from_fn(1.0, &eps, mu);
        let ss = s_grid(1e-8, 1e-3, 12);
        let heat = HeatProfile::from_fn(1.0, &ss, HeatMethod::Fd, |s| transform(mu, s));
        let r = abelian_check(&tube, &heat, gamma).unwrap();
        assert_eq!(r.s.len(), 12);
        assert!(r.spread() - 1.0 < 1e-6, "{r:?}");
    }

    #[test]
    fn abelian_ratio_bounded_for_log_periodic() {
        let mu = |e: f64| e.powf(0.5) * (2.0 + e.ln().sin());
        let eps = s_grid(1e-6, 1.0, 400);
        let tube = TubularProfile::from_fn(1.0, &eps, mu);
        let ss = s_grid(1e-9, 1e-3, 40);
        let heat = HeatProfile::from_fn(1.0, &ss, HeatMethod::Fd, |s| transform(mu, s));
        let r = abelian_check(&tube, &heat, 1.5).unwrap();
        assert!(r.min >= 1.0 / 8.0 && r.max <= 8.0, "{r:?}");
        assert!(r.spread() > 1.01);
    }

    #[test]
    fn scaling_identity() {
        let sq = Polyline::closed(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]);
        assert_eq!(scaling_check(&sq, 1.0, 1e-4, 1.0 / 8.0).unwrap().rel, 0.0);
        assert!(scaling_check(&sq, 0.5, 1e-4, 1.0 / 8.0).unwrap().rel < 0.02);
        let tri = Polyline::closed(crate::generator::base_triangle().to_vec());
        assert!(scaling_check(&tri, 1.0 / 3.0, 1e-4, 1.0 / 8.0).unwrap().rel < 0.02);
    }
}
