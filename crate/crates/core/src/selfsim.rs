//! Statistically self-similar snowflakes. Every cell draws its own block
//! type from the key it shares with the matching individual of the branching
//! tree, so polygon and tree come from one random stream.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbp::{lattice_check, malthusian, simulate_tree_from, GbpTree, OffspringLaw, DEFAULT_POPULATION_CAP};
use crate::generator::{base_triangle, block_vertices, BlockParam};
use crate::geometry::{Point, Polyline};
use crate::heat::{heat_fd, FdOptions};
use crate::rng::{child_key, root_key};
use crate::spatial::Domain;
use crate::stats::{correlation, mean_stderr, min_max, origin_fit};
use crate::tubular::tube_volume;

/// Slack on the refinement cut so that cells of scale exactly `eps_min`
/// count as refined far enough despite rounding in `sum log ell`.
const CUT_SLACK: f64 = 1e-9;

/// Tube raster pitch as a fraction of `eps`.
pub const TUBE_GRID_DIV: f64 = 8.0;
/// Finite-difference pitch as a fraction of `sqrt(s)`.
pub const HEAT_GRID_DIV: f64 = 8.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfSimilarRealization {
    pub seed: u64,
    #[serde(rename = "epsMin")]
    pub eps_min: f64,
    pub gamma: f64,
    /// One independent tree per side of the base triangle.
    pub trees: Vec<GbpTree>,
    pub polygon: Polyline,
    /// Scale of every boundary piece, in polygon order.
    #[serde(rename = "leafScales")]
    pub leaf_scales: Vec<f64>,
}

impl SelfSimilarRealization {
    /// `ln(1/eps_min)` less the rounding slack.
    pub fn cut(&self) -> f64 {
        (1.0 / self.eps_min).ln() - CUT_SLACK
    }

    /// Martingale averaged over the three sides.
    pub fn martingale(&self, t: f64) -> Result<f64> {
        let mut m = 0.0;
        for tree in &self.trees {
            m += crate::gbp::martingale(tree, t, self.gamma)?;
        }
        Ok(m / self.trees.len() as f64)
    }

    /// `M_T` at `T = ln(1 / (8 eps_min))`.
    pub fn m_horizon(&self) -> Result<f64> {
        self.martingale((1.0 / (8.0 * self.eps_min)).ln())
    }

    pub fn domain(&self) -> Domain {
        Domain::new_unchecked(self.polygon.clone())
    }
}

fn check_block_law(law: &OffspringLaw) -> Result<()> {
    for a in &law.atoms {
        let b = BlockParam::new(a.label)?;
        if a.children != b.m || a.ell != u64::from(b.ell) {
            return Err(Error::param(format!(
                "atom {} is not the block K({})",
                a.label, a.label
            )));
        }
    }
    Ok(())
}

/// Samples the snowflake whose cells are refined until their scale is at
/// most `eps_min`. Side `i` uses the tree rooted at `root_key(seed, i)`.
pub fn sample_snowflake(law: &OffspringLaw, eps_min: f64, seed: u64) -> Result<SelfSimilarRealization> {
    sample_snowflake_capped(law, eps_min, seed, DEFAULT_POPULATION_CAP)
}

pub fn sample_snowflake_capped(
    law: &OffspringLaw,
    eps_min: f64,
    seed: u64,
    cap: usize,
) -> Result<SelfSimilarRealization> {
    if !(eps_min > 0.0 && eps_min < 1.0) {
        return Err(Error::param(format!("eps_min must lie in (0, 1), got {eps_min}")));
    }
    check_block_law(law)?;
    if !lattice_check(law) && law.atoms.iter().filter(|a| a.prob > 0.0).count() > 1 {
        log_lattice_warning(law);
    }
    let gamma = malthusian(law)?;
    let cut = (1.0 / eps_min).ln() - CUT_SLACK;
    let blocks: Vec<Vec<Point>> = law
        .atoms
        .iter()
        .map(|a| block_vertices(a.label))
        .collect::<Result<_>>()?;
    let offsets: Vec<f64> = law.atoms.iter().map(|a| a.offset()).collect();
    let tri = base_triangle();
    let mut vertices = Vec::new();
    let mut scales = Vec::new();
    let mut trees = Vec::with_capacity(3);
    for side in 0..3usize {
        let key = root_key(seed, side as u64);
        trees.push(simulate_tree_from(law, cut, key, cap)?);
        let start = vertices.len();
        // (start, end, key, birth)
        let mut stack = vec![(tri[side], tri[(side + 1) % 3], key, 0.0f64)];
        while let Some((p, q, k, birth)) = stack.pop() {
            if birth > cut {
                vertices.push(p);
                scales.push((-birth).exp());
                if vertices.len() > cap {
                    return Err(Error::CapExceeded {
                        what: "boundary pieces",
                        requested: vertices.len() as u128,
                        cap: cap as u128,
                    });
                }
                continue;
            }
            let atom = law.draw(k);
            let block = &blocks[atom];
            let d = q.sub(p);
            let child_birth = birth + offsets[atom];
            // Reverse push so that slot 0 is emitted first.
            for slot in (0..block.len() - 1).rev() {
                let a = p.add(d.cmul(block[slot]));
                let b = if slot + 2 == block.len() { q } else { p.add(d.cmul(block[slot + 1])) };
                stack.push((a, b, child_key(k, slot as u32), child_birth));
            }
        }
        debug_assert!(vertices.len() > start);
    }
    Ok(SelfSimilarRealization {
        seed,
        eps_min,
        gamma,
        trees,
        polygon: Polyline::closed(vertices),
        leaf_scales: scales,
    })
}

fn log_lattice_warning(law: &OffspringLaw) {
    let labels: Vec<u32> = law.atoms.iter().map(|a| a.label).collect();
    eprintln!("warning: the law on {labels:?} is lattice; growth limits oscillate");
}

/// Realizations for a list of seeds, in parallel.
pub fn sample_many(law: &OffspringLaw, eps_min: f64, seeds: &[u64]) -> Result<Vec<SelfSimilarRealization>> {
    seeds
        .par_iter()
        .map(|&s| sample_snowflake(law, eps_min, s))
        .collect()
}

/// Per-realization summary of a normalized growth curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub seed: u64,
    /// Grid points (`eps` or `s`) and normalized values.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `max/min` of `y` over the last decade of the grid.
    pub stabilization: f64,
    /// Mean of `y` over the last decade.
    #[serde(rename = "yBar")]
    pub y_bar: f64,
    #[serde(rename = "mT")]
    pub m_t: f64,
    #[serde(rename = "mHalf")]
    pub m_half: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    #[serde(rename = "gammaUsed")]
    pub gamma: f64,
    pub rows: Vec<LimitRow>,
    /// Correlation of `y_bar` with `M_T` across realizations.
    pub correlation: f64,
    /// Slope of `y_bar` against `M_T` through the origin.
    #[serde(rename = "originSlope")]
    pub origin_slope: f64,
    /// Mean of `y_bar / M_T` and its standard error.
    pub constant: f64,
    #[serde(rename = "constantStderr")]
    pub constant_stderr: f64,
    #[serde(rename = "meanM")]
    pub mean_m: f64,
    #[serde(rename = "stderrM")]
    pub stderr_m: f64,
    #[serde(rename = "maxStabilization")]
    pub max_stabilization: f64,
}

/// Indices of the grid points within one decade of the smallest.
fn last_decade(x: &[f64]) -> Vec<usize> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    (0..x.len()).filter(|&i| x[i] <= 10.0 * lo * (1.0 + 1e-12)).collect()
}

fn summarize(gamma: f64, rows: Vec<LimitRow>) -> LimitReport {
    let yb: Vec<f64> = rows.iter().map(|r| r.y_bar).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.m_t).collect();
    let ratio: Vec<f64> = yb.iter().zip(&m).map(|(y, m)| y / m).collect();
    let (constant, constant_stderr) = mean_stderr(&ratio);
    let (mean_m, stderr_m) = mean_stderr(&m);
    LimitReport {
        gamma,
        correlation: if rows.len() >= 2 { correlation(&yb, &m) } else { f64::NAN },
        origin_slope: origin_fit(&m, &yb),
        constant,
        constant_stderr,
        mean_m,
        stderr_m,
        max_stabilization: rows.iter().map(|r| r.stabilization).fold(0.0, f64::max),
        rows,
    }
}

fn limit_row(r: &SelfSimilarRealization, x: Vec<f64>, y: Vec<f64>) -> Result<LimitRow> {
    let idx = last_decade(&x);
    let tail: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let (lo, hi) = min_max(&tail);
    let horizon = (1.0 / (8.0 * r.eps_min)).ln();
    Ok(LimitRow {
        seed: r.seed,
        stabilization: hi / lo,
        y_bar: tail.iter().sum::<f64>() / tail.len() as f64,
        m_t: r.martingale(horizon)?,
        m_half: r.martingale(0.5 * horizon)?,
        x,
        y,
    })
}

fn check_realizations(rs: &[SelfSimilarRealization]) -> Result<f64> {
    let first = rs
        .first()
        .ok_or_else(|| Error::TooFewSamples("no realizations".into()))?;
    if rs.iter().any(|r| (r.gamma - first.gamma).abs() > 1e-12) {
        return Err(Error::param("realizations come from different laws"));
    }
    Ok(first.gamma)
}

/// `eps^{gamma-2} mu(eps)` on each realization.
pub fn minkowski_limit_experiment(rs: &[SelfSimilarRealization], eps_grid: &[f64]) -> Result<LimitReport> {
    let gamma = check_realizations(rs)?;
    if eps_grid.is_empty() {
        return Err(Error::param("empty eps grid"));
    }
    for r in rs {
        if let Some(e) = eps_grid.iter().find(|&&e| !(e > 8.0 * r.eps_min && e < 0.1)) {
            return Err(Error::param(format!(
                "eps = {e} outside (8 eps_min, 0.1) = ({}, 0.1)",
                8.0 * r.eps_min
            )));
        }
    }
    let rows = rs
        .par_iter()
        .map(|r| {
            let dom = r.domain();
            let y = eps_grid
                .iter()
                .map(|&e| Ok(e.powf(gamma - 2.0) * tube_volume(&dom, e, e / TUBE_GRID_DIV)?.mu))
                .collect::<Result<Vec<_>>>()?;
            limit_row(r, eps_grid.to_vec(), y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(gamma, rows))
}

/// `s^{gamma/2-1} E(s)` on each realization, one finite-difference run per
/// time with pitch `sqrt(s) / 8`.
pub fn heat_limit_experiment(rs: &[SelfSimilarRealization], s_grid: &[f64]) -> Result<LimitReport> {
    let gamma = check_realizations(rs)?;
    if s_grid.is_empty() {
        return Err(Error::param("empty time grid"));
    }
    for r in rs {
        if let Some(s) = s_grid
            .iter()
            .find(|&&s| !(s > 0.0 && s.sqrt() > 8.0 * r.eps_min && s.sqrt() < 0.05))
        {
            return Err(Error::param(format!(
                "sqrt(s) = {} outside (8 eps_min, 0.05) = ({}, 0.05)",
                s.sqrt(),
                8.0 * r.eps_min
            )));
        }
    }
    let opts = FdOptions::default();
    let rows = rs
        .par_iter()
        .map(|r| {
            let dom = r.domain();
            let y = s_grid
                .iter()
                .map(|&s| {
                    let run = heat_fd(&dom, &[s], s.sqrt() / HEAT_GRID_DIV, &opts)?;
                    Ok(s.powf(gamma / 2.0 - 1.0) * run.e[0])
                })
                .collect::<Result<Vec<_>>>()?;
            limit_row(r, s_grid.to_vec(), y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(gamma, rows))
}

/// Per-seed `y_bar / z_bar` of a tube and a heat report on the same seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossRatio {
    pub seeds: Vec<u64>,
    pub ratios: Vec<f64>,
    pub mean: f64,
    /// Largest `|ratio / mean - 1|`.
    #[serde(rename = "maxRelDev")]
    pub max_rel_dev: f64,
}

pub fn cross_ratio(tube: &LimitReport, heat: &LimitReport) -> Result<CrossRatio> {
    let mut seeds = Vec::new();
    let mut ratios = Vec::new();
    for h in &heat.rows {
        if let Some(t) = tube.rows.iter().find(|t| t.seed == h.seed) {
            seeds.push(h.seed);
            ratios.push(t.y_bar / h.y_bar);
        }
    }
    if ratios.is_empty() {
        return Err(Error::TooFewSamples("no seeds shared by both reports".into()));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max_rel_dev = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
    Ok(CrossRatio {
        seeds,
        ratios,
        mean,
        max_rel_dev,
    })
}

/// Ensemble summary written by experiment runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    #[serde(rename = "gammaUsed")]
    pub gamma: f64,
    #[serde(rename = "MHat")]
    pub m_hat: Option<(f64, f64)>,
    #[serde(rename = "EHat")]
    pub e_hat: Option<(f64, f64)>,
    pub ratios: Option<CrossRatio>,
    pub correlations: Vec<(String, f64)>,
}

impl EnsembleSummary {
    pub fn new(tube: Option<&LimitReport>, heat: Option<&LimitReport>) -> Result<Self> {
        let gamma = tube
            .or(heat)
            .map(|r| r.gamma)
            .ok_or_else(|| Error::TooFewSamples("no reports".into()))?;
        let mut correlations = Vec::new();
        if let Some(t) = tube {
            correlations.push(("tube".to_string(), t.correlation));
        }
        if let Some(h) = heat {
            correlations.push(("heat".to_string(), h.correlation));
        }
        let ratios = match (tube, heat) {
            (Some(t), Some(h)) => Some(cross_ratio(t, h)?),
            _ => None,
        };
        Ok(Self {
            gamma,
            m_hat: tube.map(|t| (t.constant, 1.96 * t.constant_stderr)),
            e_hat: heat.map(|h| (h.constant, 1.96 * h.constant_stderr)),
            ratios,
            correlations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{snowflake, ScaleSequence};
    use crate::geometry::simplicity_check;

    fn uniform12() -> OffspringLaw {
        OffspringLaw::uniform_blocks(&[1, 2]).unwrap()
    }

    #[test]
    fn degenerate_law_is_triadic() {
        let law = OffspringLaw::blocks(&[1], &[1.0]).unwrap();
        for eps in [0.3, 1.0 / 9.0, 0.05, 1.0 / 81.0] {
            let r = sample_snowflake(&law, eps, 3).unwrap();
            let level = ((1.0 / eps).ln() / 3f64.ln() - 1e-9).ceil() as usize;
            let want = snowflake(&ScaleSequence::constant(1), level).unwrap();
            assert_eq!(r.polygon.vertices.len(), want.vertices.len(), "eps {eps}");
            for (a, b) in r.polygon.vertices.iter().zip(&want.vertices) {
                assert!(a.dist(*b) < 1e-12);
            }
            assert!((r.gamma - 4f64.ln() / 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_7_is_simple() {
        let r = sample_snowflake(&uniform12(), 1.0 / 200.0, 7).unwrap();
        assert!(simplicity_check(&r.polygon));
    }

    #[test]
    fn coupling_counts() {
        for seed in [1, 7, 19] {
            let r = sample_snowflake(&uniform12(), 1.0 / 200.0, seed).unwrap();
            let cut = r.cut();
            let mut total = 0;
            for tree in &r.trees {
                total += tree.frontier(cut).unwrap().count();
            }
            assert_eq!(total, r.polygon.segment_count());
            assert_eq!(total, r.leaf_scales.len());
        }
    }

    #[test]
    fn leaf_scales_in_range() {
        let eps = 1.0 / 300.0;
        let r = sample_snowflake(&uniform12(), eps, 5).unwrap();
        for &s in &r.leaf_scales {
            assert!(s <= eps * (1.0 + 1e-8) && s > eps / 5.0, "{s}");
        }
        // Segment lengths are the scales.
        for (i, (a, b)) in r.polygon.segments().enumerate() {
            assert!((a.dist(b) / r.leaf_scales[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reproducible_and_seed_dependent() {
        let a = sample_snowflake(&uniform12(), 0.01, 11).unwrap();
        let b = sample_snowflake(&uniform12(), 0.01, 11).unwrap();
        let c = sample_snowflake(&uniform12(), 0.01, 12).unwrap();
        assert_eq!(a.polygon, b.polygon);
        assert_ne!(a.polygon, c.polygon);
    }

    #[test]
    fn sides_are_independent_subtrees() {
        let r = sample_snowflake(&uniform12(), 0.01, 4).unwrap();
        let keys: Vec<u64> = r.trees.iter().map(|t| t.root_key).collect();
        assert_eq!(keys, vec![root_key(4, 0), root_key(4, 1), root_key(4, 2)]);
    }

    #[test]
    fn grid_preconditions() {
        let r = sample_snowflake(&uniform12(), 0.01, 1).unwrap();
        let rs = vec![r];
        assert!(minkowski_limit_experiment(&rs, &[0.05]).is_err());
        assert!(minkowski_limit_experiment(&rs, &[0.2]).is_err());
        assert!(heat_limit_experiment(&rs, &[1e-4]).is_err());
        assert!(minkowski_limit_experiment(&[], &[0.09]).is_err());
    }

    #[test]
    fn degenerate_tube_is_bounded() {
        let law = OffspringLaw::blocks(&[1], &[1.0]).unwrap();
        let r = sample_snowflake(&law, 3f64.powi(-8), 0).unwrap();
        let eps: Vec<f64> = (3..=5).map(|n| 3f64.powi(-n)).collect();
        let rep = minkowski_limit_experiment(&[r], &eps).unwrap();
        let (lo, hi) = min_max(&rep.rows[0].y);
        assert!(hi / lo < 4.0, "{:?}", rep.rows[0].y);
        assert!((rep.rows[0].m_t - 1.0).abs() < 1e-9);
    }

    #[test]
    fn last_decade_selection() {
        assert_eq!(last_decade(&[0.5, 0.01, 0.1, 0.2]), vec![1, 2]);
    }
}
