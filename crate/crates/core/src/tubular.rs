//! Inner tube volumes `mu(eps)` on a cell-centred raster, and the spike
//! sandwich for scale-homogeneous snowflakes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{counts_of, snowflake_capped, ScaleSequence, DEFAULT_SEGMENT_CAP};
use crate::geometry::Point;
use crate::spatial::{Domain, QueryScratch, SegmentIndex};

/// Cells per side of a leaf block in the raster recursion.
const LEAF: i64 = 8;
/// Cells per side of a top-level block.
const TOP: i64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeEntry {
    pub eps: f64,
    pub mu: f64,
    #[serde(rename = "muErr")]
    pub mu_err: f64,
    pub level: Option<usize>,
    #[serde(rename = "gridH")]
    pub grid_h: f64,
}

/// Sampled `(eps, mu(eps))` pairs, sorted by increasing `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubularProfile {
    #[serde(rename = "domainId")]
    pub domain_id: String,
    /// Area of the (finest) domain; `mu` saturates here.
    pub area: f64,
    pub entries: Vec<TubeEntry>,
}

impl TubularProfile {
    pub fn new(domain_id: impl Into<String>, area: f64, mut entries: Vec<TubeEntry>) -> Self {
        entries.sort_by(|a, b| a.eps.total_cmp(&b.eps));
        Self {
            domain_id: domain_id.into(),
            area,
            entries,
        }
    }

    /// Profile of an exact function, for synthetic checks.
    pub fn from_fn(area: f64, eps: &[f64], f: impl Fn(f64) -> f64) -> Self {
        let entries = eps
            .iter()
            .map(|&e| TubeEntry {
                eps: e,
                mu: f(e),
                mu_err: 0.0,
                level: None,
                grid_h: 0.0,
            })
            .collect();
        Self::new("synthetic", area, entries)
    }

    pub fn eps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eps).collect()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mu).collect()
    }

    pub fn eps_range(&self) -> Option<(f64, f64)> {
        Some((self.entries.first()?.eps, self.entries.last()?.eps))
    }

    /// `mu(eps)` by log-log interpolation; power law from the two smallest
    /// samples below the range, saturation at the domain area above it.
    pub fn mu_at(&self, eps: f64) -> f64 {
        let e = &self.entries;
        if eps <= 0.0 || e.is_empty() {
            return 0.0;
        }
        let n = e.len();
        if eps > e[n - 1].eps {
            return self.area.max(e[n - 1].mu);
        }
        if n == 1 {
            return e[0].mu * eps / e[0].eps;
        }
        let k = e.partition_point(|x| x.eps < eps);
        let (a, b) = if k == 0 { (0, 1) } else { (k - 1, k) };
        if e[k.min(n - 1)].eps == eps {
            return e[k].mu;
        }
        loglog_interp(e[a].eps, e[a].mu, e[b].eps, e[b].mu, eps)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(domain_id: &str, area: f64, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let entries = r.deserialize().collect::<std::result::Result<Vec<TubeEntry>, _>>()?;
        Ok(Self::new(domain_id, area, entries))
    }
}

pub(crate) fn loglog_interp(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if y0 <= 0.0 || y1 <= 0.0 {
        let t = (x - x0) / (x1 - x0);
        return (y0 + t * (y1 - y0)).max(0.0);
    }
    let t = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
    (y0.ln() + t * (y1.ln() - y0.ln())).exp()
}

/// Result of one raster tube evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeVolume {
    pub mu: f64,
    pub mu_err: f64,
    pub cells: u64,
}

/// `mu(eps)` of a domain with distances measured to its whole boundary.
pub fn tube_volume(domain: &Domain, eps: f64, grid_h: f64) -> Result<TubeVolume> {
    tube_volume_to(domain, None, eps, grid_h)
}

/// Like [`tube_volume`], but distances are measured to `part` (a subset of
/// the boundary) while the interior is still that of `domain`.
pub fn tube_volume_to(
    domain: &Domain,
    part: Option<&SegmentIndex>,
    eps: f64,
    grid_h: f64,
) -> Result<TubeVolume> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    if !(grid_h > 0.0) || grid_h > eps / 4.0 * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "grid pitch {grid_h} must lie in (0, eps/4 = {}]",
            eps / 4.0
        )));
    }
    let h = grid_h;
    let bb = domain.bbox;
    let ci0 = (bb.min.x / h).floor() as i64;
    let ci1 = (bb.max.x / h).ceil() as i64;
    let cj0 = (bb.min.y / h).floor() as i64;
    let cj1 = (bb.max.y / h).ceil() as i64;
    let tiles_x = (ci0.div_euclid(TOP)..=ci1.div_euclid(TOP)).collect::<Vec<_>>();
    let tj0 = cj0.div_euclid(TOP);
    let tj1 = cj1.div_euclid(TOP);
    let cells_total = ((ci1 - ci0 + 1) as u128) * ((cj1 - cj0 + 1) as u128);
    if cells_total > 1u128 << 40 {
        return Err(Error::CapExceeded {
            what: "raster cells",
            requested: cells_total,
            cap: 1 << 40,
        });
    }
    let ctx = RasterCtx {
        domain,
        part,
        eps,
        h,
    };
    let (count, unsure) = tiles_x
        .par_iter()
        .map_init(
            || Scratches::new(domain, part),
            |sc, &ti| {
                let mut acc = (0u64, 0u64);
                for tj in tj0..=tj1 {
                    let (c, u) = ctx.block(ti * TOP, tj * TOP, TOP, sc);
                    acc.0 += c;
                    acc.1 += u;
                }
                acc
            },
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(TubeVolume {
        mu: count as f64 * h * h,
        mu_err: unsure as f64 * h * h,
        cells: count,
    })
}

struct Scratches {
    dom: QueryScratch,
    part: Option<QueryScratch>,
}

impl Scratches {
    fn new(domain: &Domain, part: Option<&SegmentIndex>) -> Self {
        Self {
            dom: domain.index.scratch(),
            part: part.map(SegmentIndex::scratch),
        }
    }
}

struct RasterCtx<'a> {
    domain: &'a Domain,
    part: Option<&'a SegmentIndex>,
    eps: f64,
    h: f64,
}

impl RasterCtx<'_> {
    #[inline]
    fn center(&self, i: f64, j: f64) -> Point {
        Point::new(i * self.h, j * self.h)
    }

    /// Returns (cells counted, uncertain cells) for the square block of
    /// `size` cells whose lower-left cell is `(i0, j0)`.
    fn block(&self, i0: i64, j0: i64, size: i64, sc: &mut Scratches) -> (u64, u64) {
        let h = self.h;
        let eps = self.eps;
        let half = size as f64 / 2.0;
        let c = self.center(i0 as f64 + half, j0 as f64 + half);
        let hd = half * h * std::f64::consts::SQRT_2;
        let dist_idx = self.part.unwrap_or(&self.domain.index);

        let Some(nd) = dist_idx.nearest_bounded(c, eps + hd) else {
            return (0, 0);
        };
        let dd = nd.dist();
        if dd - hd > eps {
            return (0, 0);
        }
        let nb = match self.part {
            None => nd,
            Some(_) => self.domain.index.nearest(c),
        };
        let db = nb.dist();
        let uniform = db > hd;
        let inside_c = self.domain.index.is_inside_from(c, &nb);
        if uniform && !inside_c {
            return (0, 0);
        }
        if uniform && dd + hd <= eps - h && db - hd > h {
            return ((size * size) as u64, 0);
        }
        if size > LEAF {
            let mut acc = (0, 0);
            for bj in (0..size).step_by(LEAF as usize) {
                for bi in (0..size).step_by(LEAF as usize) {
                    let (a, b) = self.block(i0 + bi, j0 + bj, LEAF, sc);
                    acc.0 += a;
                    acc.1 += b;
                }
            }
            return acc;
        }

        // Leaf: per-cell nearest search among nearby segments.
        let thr = h * std::f64::consts::FRAC_1_SQRT_2;
        self.domain.index.gather(c, db + 2.0 * hd, &mut sc.dom);
        let dist_cands: &[u32] = match (self.part, sc.part.as_mut()) {
            (Some(p), Some(ps)) => {
                p.gather(c, (dd + 2.0 * hd).min(eps + hd), ps);
                &ps.out
            }
            _ => &sc.dom.out,
        };
        let mut count = 0;
        let mut unsure = 0;
        for j in j0..j0 + size {
            for i in i0..i0 + size {
                let p = self.center(i as f64 + 0.5, j as f64 + 0.5);
                let Some(b) = self.domain.index.nearest_among(p, &sc.dom.out) else {
                    continue;
                };
                let inside = if uniform {
                    inside_c
                } else {
                    self.domain.index.is_inside_from(p, &b)
                };
                let bd = b.dist();
                let d = match self.part {
                    None => bd,
                    Some(pi) => pi
                        .nearest_among(p, dist_cands)
                        .map_or(f64::INFINITY, |n| n.dist()),
                };
                if bd < thr {
                    unsure += 1;
                }
                if inside {
                    if d <= eps {
                        count += 1;
                    }
                    if (d - eps).abs() < thr && bd >= thr {
                        unsure += 1;
                    }
                }
            }
        }
        (count, unsure)
    }
}

/// Smallest level `n` with `eps_n <= bound`.
pub fn level_for(seq: &ScaleSequence, bound: f64) -> Result<usize> {
    let mut ln_l = 0.0f64;
    let target = -bound.ln();
    for n in 0..=4096usize {
        if ln_l >= target - 1e-12 {
            return Ok(n);
        }
        let a = seq.value(n as u64 + 1)?;
        ln_l += f64::from(2 * a + 1).ln();
    }
    Err(Error::param(format!("no level reaches scale {bound}")))
}

/// Tube profile of the scale-homogeneous snowflake: level with
/// `eps_n <= eps/4` and pitch `eps/8` for each requested `eps`.
pub fn tube_profile(seq: &ScaleSequence, eps_list: &[f64]) -> Result<TubularProfile> {
    tube_profile_with(seq, eps_list, 4.0, 8.0, DEFAULT_SEGMENT_CAP)
}

pub fn tube_profile_with(
    seq: &ScaleSequence,
    eps_list: &[f64],
    level_div: f64,
    grid_div: f64,
    cap: u128,
) -> Result<TubularProfile> {
    seq.validate()?;
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::param("eps list must be nonempty and positive"));
    }
    let mut plan: Vec<(usize, f64)> = eps_list
        .iter()
        .map(|&e| Ok((level_for(seq, e / level_div)?, e)))
        .collect::<Result<_>>()?;
    plan.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut entries = Vec::with_capacity(plan.len());
    let mut cur: Option<(usize, Domain)> = None;
    let mut finest_area = 0.0;
    for (level, eps) in plan {
        if cur.as_ref().map(|c| c.0) != Some(level) {
            let poly = snowflake_capped(seq, level, cap)?;
            cur = Some((level, Domain::new_unchecked(poly)));
        }
        let dom = &cur.as_ref().unwrap().1;
        finest_area = dom.area;
        let h = eps / grid_div;
        let tv = tube_volume(dom, eps, h)?;
        entries.push(TubeEntry {
            eps,
            mu: tv.mu,
            mu_err: tv.mu_err,
            level: Some(level),
            grid_h: h,
        });
    }
    let id = crate::io::hash_json(&seq)?;
    Ok(TubularProfile::new(id, finest_area, entries))
}

/// Tube profile of a fixed domain with pitch `eps / grid_div`.
pub fn tube_profile_domain(
    domain: &Domain,
    part: Option<&SegmentIndex>,
    eps_list: &[f64],
    grid_div: f64,
) -> Result<TubularProfile> {
    let entries = eps_list
        .iter()
        .map(|&eps| {
            let h = eps / grid_div;
            let tv = tube_volume_to(domain, part, eps, h)?;
            Ok(TubeEntry {
                eps,
                mu: tv.mu,
                mu_err: tv.mu_err,
                level: None,
                grid_h: h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TubularProfile::new(domain.id.clone(), domain.area, entries))
}

/// Spike sandwich `(3 (sqrt3/4) M_{n-1} xi_n eps_n^2, 12 M_n eps_n^2)`.
pub fn spike_bounds(seq: &ScaleSequence, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::param("spike bounds need n >= 1"));
    }
    let prefix = seq.prefix(n)?;
    let prev = counts_of(&prefix[..n - 1])?;
    let cur = counts_of(&prefix)?;
    let xi = f64::from(prefix[n - 1]);
    let ln_eps2 = -2.0 * cur.ln_l();
    let lower = 3.0 * (3f64.sqrt() / 4.0) * xi * (prev.ln_m() + ln_eps2).exp();
    let upper = 12.0 * (cur.ln_m() + ln_eps2).exp();
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyline;
    use proptest::prelude::*;

    fn square() -> Domain {
        Domain::new(Polyline::closed(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]))
        .unwrap()
    }

    fn triangle() -> Domain {
        Domain::new(Polyline::closed(crate::generator::base_triangle().to_vec())).unwrap()
    }

    #[test]
    fn square_annulus() {
        let d = square();
        let tv = tube_volume(&d, 0.1, 0.1 / 16.0).unwrap();
        assert!((tv.mu - 0.36).abs() <= tv.mu_err.max(1e-12), "{tv:?}");
        let tv = tube_volume(&d, 0.1, 1e-3).unwrap();
        assert!((tv.mu - 0.36).abs() <= tv.mu_err, "{tv:?}");
    }

    #[test]
    fn triangle_saturates() {
        let d = triangle();
        let inradius = 3f64.sqrt() / 6.0;
        let tv = tube_volume(&d, inradius * 1.01, 2e-3).unwrap();
        assert!((tv.mu - d.area).abs() <= tv.mu_err, "{tv:?}");
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(tube_volume(&square(), 0.1, 0.05).is_err());
        assert!(tube_volume(&square(), -0.1, 0.01).is_err());
    }

    #[test]
    fn spike_bounds_examples() {
        let (lo, hi) = spike_bounds(&ScaleSequence::constant(1), 1).unwrap();
        assert!((lo - 3.0 * 3f64.sqrt() / 4.0 / 9.0).abs() < 1e-15);
        assert!((hi - 12.0 * 4.0 / 9.0).abs() < 1e-14);
        let (lo, hi) = spike_bounds(&ScaleSequence::constant(2), 1).unwrap();
        assert!((lo - 3.0 * 3f64.sqrt() / 4.0 * 2.0 / 25.0).abs() < 1e-15);
        assert!((hi - 12.0 * 7.0 / 25.0).abs() < 1e-14);
    }

    #[test]
    fn triadic_sandwich_level_three() {
        let seq = ScaleSequence::constant(1);
        let eps = 1.0 / 27.0;
        let p = tube_profile(&seq, &[eps]).unwrap();
        let e = p.entries[0];
        assert_eq!(e.level, Some(5));
        let (lo, hi) = spike_bounds(&seq, 3).unwrap();
        assert!(e.mu + e.mu_err >= lo && e.mu - e.mu_err <= hi, "{e:?}");
    }

    #[test]
    fn smooth_profile_slope_is_one() {
        let d = triangle();
        let p = tube_profile_domain(&d, None, &[1e-3, 2e-3, 4e-3, 8e-3], 8.0).unwrap();
        let mu = p.mu();
        let slope = (mu[3] / mu[0]).ln() / 8f64.ln();
        assert!((slope - 1.0).abs() < 0.01, "{slope}");
    }

    #[test]
    fn partial_boundary_distance() {
        // Distances to the bottom edge only: a strip of height eps.
        let d = square();
        let bottom = SegmentIndex::new(&Polyline::open(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ]));
        let tv = tube_volume_to(&d, Some(&bottom), 0.1, 1e-3).unwrap();
        assert!((tv.mu - 0.1).abs() <= tv.mu_err + 1e-12, "{tv:?}");
    }

    #[test]
    fn grid_refinement_stays_within_error() {
        let d = Domain::new_unchecked(
            crate::generator::snowflake(&ScaleSequence::constant(1), 4).unwrap(),
        );
        let a = tube_volume(&d, 0.02, 0.02 / 8.0).unwrap();
        let b = tube_volume(&d, 0.02, 0.02 / 16.0).unwrap();
        assert!((a.mu - b.mu).abs() < 2.0 * a.mu_err, "{a:?} {b:?}");
    }

    #[test]
    fn profile_interpolation_and_csv() {
        let p = TubularProfile::from_fn(1.0, &[0.01, 0.02, 0.04], |e| e.sqrt());
        assert!((p.mu_at(0.0283) - 0.0283f64.sqrt()).abs() < 1e-12);
        assert!((p.mu_at(0.005) - 0.005f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.mu_at(0.5), 1.0);
        let csv = p.to_csv().unwrap();
        assert!(csv.starts_with("eps,mu,muErr,level,gridH"));
        let back = TubularProfile::from_csv("synthetic", 1.0, &csv).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn tube_is_monotone_and_bounded(e1 in 0.01f64..0.2, e2 in 0.01f64..0.2) {
            let d = triangle();
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let h = 0.0025;
            let a = tube_volume(&d, lo, h).unwrap();
            let b = tube_volume(&d, hi, h).unwrap();
            prop_assert!(a.mu <= b.mu);
            prop_assert!(b.mu <= d.area + b.mu_err);
        }

        #[test]
        fn similarity_scaling(r in prop::sample::select(vec![1.0 / 3.0, 1.0 / 5.0])) {
            let poly = crate::generator::snowflake(&ScaleSequence::constant(1), 3).unwrap();
            let d = Domain::new_unchecked(poly.clone());
            let dr = Domain::new_unchecked(poly.scaled(r));
            let eps = 0.03;
            let a = tube_volume(&d, eps, eps / 8.0).unwrap();
            let b = tube_volume(&dr, r * eps, r * eps / 8.0).unwrap();
            let err = r * r * a.mu_err + b.mu_err;
            prop_assert!((b.mu - r * r * a.mu).abs() <= err);
        }
    }
}
