//! Exact and empirical dimensions: count ratios, ergodic limits, slopes of
//! tube profiles and iterated-logarithm envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{counts, validate_law, BlockParam, Rule, ScaleSequence};
use crate::stats::median;
use crate::tubular::TubularProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimMethod {
    ExactRatio,
    ErgodicFormula,
    ProfileRegression,
    CarpetFormula,
}

/// One window behind an estimate: its range and the value it produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimWindow {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Median of the window values.
    pub point: f64,
    pub method: DimMethod,
    pub windows: Vec<DimWindow>,
}

impl DimEstimate {
    fn from_windows(method: DimMethod, windows: Vec<DimWindow>) -> Self {
        let v: Vec<f64> = windows.iter().map(|w| w.value).collect();
        let (lower, upper) = crate::stats::min_max(&v);
        Self {
            lower,
            upper,
            point: median(&v),
            method,
            windows,
        }
    }
}

/// Growth profile of the iterated-log correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFunction {
    Constant { value: f64 },
    /// `x^theta L(x)`, with `L` slowly varying and described in words.
    PowerLaw { theta: f64, description: String },
    IteratedLog,
    CustomTable { x: Vec<f64>, y: Vec<f64> },
}

impl RateFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            RateFunction::PowerLaw { theta, .. } if !(*theta >= 0.0) => {
                Err(Error::param("theta must be >= 0"))
            }
            RateFunction::CustomTable { x, y } if x.len() != y.len() || x.is_empty() => {
                Err(Error::param("custom table needs matching nonempty columns"))
            }
            _ => Ok(()),
        }
    }

    /// Power-law rates with `theta > 0` are not slowly varying.
    pub fn is_slowly_varying(&self) -> bool {
        !matches!(self, RateFunction::PowerLaw { theta, .. } if *theta > 0.0)
    }
}

/// `log M_n / log L_n` from exact counts.
pub fn dim_ratio(seq: &ScaleSequence, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("dim_ratio needs n >= 1"));
    }
    let c = counts(seq, n)?;
    Ok(c.ln_m() / c.ln_l())
}

/// Running `(log M_n, log L_n)` for `n = 1..=len`, compensated sums.
pub fn log_counts_path(seq: &ScaleSequence, len: usize) -> Result<Vec<(f64, f64)>> {
    let prefix = seq.prefix(len)?;
    let alphabet = seq.alphabet();
    let logs: Vec<(u32, f64, f64)> = alphabet
        .iter()
        .map(|&a| {
            let b = BlockParam::new(a)?;
            Ok((a, f64::from(b.m).ln(), f64::from(b.ell).ln()))
        })
        .collect::<Result<_>>()?;
    let mut m = Kahan::default();
    let mut l = Kahan::default();
    Ok(prefix
        .iter()
        .map(|a| {
            let &(_, lm, ll) = logs.iter().find(|t| t.0 == *a).expect("alphabet covers prefix");
            (m.add(lm), l.add(ll))
        })
        .collect())
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) -> f64 {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
        t
    }
}

/// Extremes of `log M_n / log L_n` over `n` in `[N/2, N]`; for the
/// block-switching rule the block endpoints `2^j` in `[sqrt N, N]` are added.
pub fn liminf_limsup_dim(seq: &ScaleSequence, big_n: usize) -> Result<DimEstimate> {
    if big_n < 2 {
        return Err(Error::param("N must be >= 2"));
    }
    let path = log_counts_path(seq, big_n)?;
    let ratio = |n: usize| path[n - 1].0 / path[n - 1].1;
    let lo = big_n / 2;
    let mut windows: Vec<DimWindow> = (lo.max(1)..=big_n)
        .map(|n| DimWindow {
            lo: n as f64,
            hi: n as f64,
            value: ratio(n),
        })
        .collect();
    if is_doubling_rule(seq) {
        let mut j = 2;
        while (1usize << j) <= big_n {
            let n = 1usize << j;
            if n < lo && n * n >= big_n {
                windows.push(DimWindow {
                    lo: n as f64,
                    hi: n as f64,
                    value: ratio(n),
                });
            }
            j += 1;
        }
    }
    Ok(DimEstimate::from_windows(DimMethod::ExactRatio, windows))
}

fn is_doubling_rule(seq: &ScaleSequence) -> bool {
    matches!(seq, ScaleSequence::Rule(Rule::Example33))
}

/// `sum p_a log m(a) / sum p_a log ell(a)`.
pub fn ergodic_dim(alphabet: &[u32], probs: &[f64]) -> Result<f64> {
    validate_law(alphabet, probs)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &p) in alphabet.iter().zip(probs) {
        let b = BlockParam::new(a)?;
        num += p * f64::from(b.m).ln();
        den += p * f64::from(b.ell).ln();
    }
    Ok(num / den)
}

/// `2 - slope` from local slopes of `log mu` against `log eps` between
/// consecutive samples.
pub fn profile_dim(profile: &TubularProfile) -> Result<DimEstimate> {
    let pts: Vec<(f64, f64)> = profile
        .entries
        .iter()
        .filter(|e| e.eps > 0.0 && e.mu > 0.0)
        .map(|e| (e.eps.ln(), e.mu.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::TooFewSamples(format!("{} positive samples, need 8", pts.len())));
    }
    let span = (pts[pts.len() - 1].0 - pts[0].0) / std::f64::consts::LN_10;
    if span < 2.0 - 1e-9 {
        return Err(Error::TooFewSamples(format!("eps spans {span:.2} decades, need 2")));
    }
    let windows = pts
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| DimWindow {
            lo: w[0].0.exp(),
            hi: w[1].0.exp(),
            value: 2.0 - (w[1].1 - w[0].1) / (w[1].0 - w[0].0),
        })
        .collect();
    Ok(DimEstimate::from_windows(DimMethod::ProfileRegression, windows))
}

/// `sqrt(log x log log log x)`, defined for `x > e^e`.
pub fn lil_envelope(x: f64) -> Result<f64> {
    let lll = x.ln().ln().ln();
    if !(x.is_finite() && lll > 0.0) {
        return Err(Error::param(format!("envelope needs x > e^e, got {x}")));
    }
    Ok((x.ln() * lll).sqrt())
}

/// `log(M_n L_n^{-gamma})` for `n = 1..=len`.
pub fn lil_path(seq: &ScaleSequence, len: usize, gamma: f64) -> Result<Vec<f64>> {
    Ok(log_counts_path(seq, len)?
        .into_iter()
        .map(|(m, l)| m - gamma * l)
        .collect())
}

/// First index of the tail used by [`lil_fit`].
pub const LIL_TAIL_START: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilFit {
    /// Smallest `C` with `|path_n| <= C sqrt(n log log n)` on the tail.
    pub c_hat: f64,
    /// Tail points above `+frac C` times the envelope, for `frac = 1/2`.
    pub above_half: usize,
    pub below_half: usize,
    /// The same for `frac = 1/4`.
    pub above_quarter: usize,
    pub below_quarter: usize,
    pub tail_len: usize,
}

pub fn lil_fit(path: &[f64]) -> Result<LilFit> {
    if path.len() < 1000 {
        return Err(Error::TooFewSamples(format!("path has {} points, need 1000", path.len())));
    }
    let env = |n: usize| {
        let n = n as f64;
        (n * n.ln().ln()).sqrt()
    };
    let tail = || path.iter().enumerate().skip(LIL_TAIL_START - 1).map(|(i, v)| (i + 1, *v));
    let c_hat = tail().map(|(n, v)| v.abs() / env(n)).fold(0.0, f64::max);
    let count = |frac: f64, sign: f64| {
        tail()
            .filter(|&(n, v)| c_hat > 0.0 && sign * v > frac * c_hat * env(n))
            .count()
    };
    Ok(LilFit {
        c_hat,
        above_half: count(0.5, 1.0),
        below_half: count(0.5, -1.0),
        above_quarter: count(0.25, 1.0),
        below_quarter: count(0.25, -1.0),
        tail_len: path.len() + 1 - LIL_TAIL_START,
    })
}
