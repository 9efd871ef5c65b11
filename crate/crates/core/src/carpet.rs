//! Self-affine carpets from an `m x n` pattern, the continuous curve they
//! carry when every column has one chosen rectangle, and the Jordan domain
//! bounded by two copies of that curve.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::DEFAULT_SEGMENT_CAP;
use crate::geometry::{Point, Polyline};
use crate::spatial::{Domain, SegmentIndex};
use rayon::prelude::*;

use crate::tubular::{tube_profile_domain, TubeEntry, TubularProfile};

/// A 0/1 pattern with rows indexed from the bottom.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Vec<bool>>,
}

impl Pattern {
    /// `cells[j][i]` is row `j` (from the bottom), column `i`.
    pub fn new(cells: Vec<Vec<bool>>) -> Result<Self> {
        let rows = cells.len();
        let cols = cells.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || cells.iter().any(|r| r.len() != cols) {
            return Err(Error::param("pattern must be a nonempty rectangle"));
        }
        if rows >= cols {
            return Err(Error::param(format!("pattern needs rows < cols, got {rows}x{cols}")));
        }
        if !cells.iter().flatten().any(|&c| c) {
            return Err(Error::param("pattern has no chosen rectangle"));
        }
        Ok(Self { rows, cols, cells })
    }

    /// The 2x4 pattern with rows `1000` (bottom) and `0111` (top).
    pub fn pattern_a() -> Self {
        "0111;1000".parse().expect("valid literal")
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.cells.iter().map(|r| r.iter().filter(|&&c| c).count()).collect()
    }

    /// One chosen rectangle in every column.
    pub fn is_curve_compatible(&self) -> bool {
        (0..self.cols).all(|i| self.cells.iter().filter(|r| r[i]).count() == 1)
    }

    /// Row of the chosen rectangle per column, for curve-compatible patterns.
    fn column_rows(&self) -> Result<Vec<usize>> {
        if !self.is_curve_compatible() {
            return Err(Error::param("pattern needs exactly one chosen rectangle per column"));
        }
        Ok((0..self.cols)
            .map(|i| self.cells.iter().position(|r| r[i]).unwrap())
            .collect())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    /// Rows top to bottom separated by `;`, e.g. `"0111;1000"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut cells = s
            .split(';')
            .map(|row| {
                row.trim()
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(Error::param(format!("bad pattern character {c:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        cells.reverse();
        Pattern::new(cells)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .cells
            .iter()
            .rev()
            .map(|r| r.iter().map(|&c| if c { '1' } else { '0' }).collect())
            .collect();
        f.write_str(&rows.join(";"))
    }
}

/// `(log_m sum_j r(j)^{log_n m}, 1 + log_n(sum_j r(j) / m))`.
pub fn carpet_dims(p: &Pattern) -> Result<(f64, f64)> {
    let r = p.row_counts();
    let total: usize = r.iter().sum();
    if total == 0 {
        return Err(Error::param("pattern has no chosen rectangle"));
    }
    let (m, n) = (p.rows as f64, p.cols as f64);
    let e = m.ln() / n.ln();
    let s: f64 = r.iter().filter(|&&c| c > 0).map(|&c| (c as f64).powf(e)).sum();
    let hausdorff = if p.rows == 1 { 1.0 } else { s.ln() / m.ln() };
    let minkowski = 1.0 + (total as f64 / m).ln() / n.ln();
    Ok((hausdorff, minkowski))
}

/// Child cells of a parent cell traversed bottom to top: `(row, rising)`.
/// A child rises when the curve enters it at its bottom edge.
fn plain_children(p: &Pattern) -> Result<Vec<(usize, bool)>> {
    let rows = p.column_rows()?;
    let mut e = 0usize;
    let mut out = Vec::with_capacity(rows.len());
    for (i, &r) in rows.iter().enumerate() {
        if e == r {
            out.push((r, true));
            e = r + 1;
        } else if e == r + 1 {
            out.push((r, false));
            e = r;
        } else {
            return Err(Error::param(format!(
                "pattern {p} is discontinuous at column {i}: entry height {e}, chosen row {r}"
            )));
        }
    }
    if e != p.rows {
        return Err(Error::param(format!(
            "pattern {p} ends at height {e} of {}, the curve would not close up",
            p.rows
        )));
    }
    Ok(out)
}

/// Integer vertex heights of the level-`k` curve in units of `m^{-k}`.
fn curve_heights(p: &Pattern, level: usize) -> Result<Vec<u64>> {
    let plain = plain_children(p)?;
    // A falling parent is the mirror image: reversed columns, flipped children.
    let reflected: Vec<(usize, bool)> = plain.iter().rev().map(|&(r, up)| (r, !up)).collect();
    let segs = (p.cols as u128).checked_pow(level as u32).unwrap_or(u128::MAX);
    if segs > DEFAULT_SEGMENT_CAP {
        return Err(Error::CapExceeded {
            what: "carpet segments",
            requested: segs,
            cap: DEFAULT_SEGMENT_CAP,
        });
    }
    if (p.rows as f64).powi(level as i32) >= 2f64.powi(52) {
        return Err(Error::param(format!("level {level} exceeds the height resolution")));
    }
    let m = p.rows as u64;
    let mut h = vec![0u64, 1];
    for _ in 0..level {
        let mut next = Vec::with_capacity((h.len() - 1) * p.cols + 1);
        next.push(h[0] * m);
        for w in h.windows(2) {
            let up = w[1] > w[0];
            let base = w[0].min(w[1]) * m;
            let kids = if up { &plain } else { &reflected };
            for &(r, rising) in kids {
                next.push(base + r as u64 + u64::from(rising));
            }
        }
        h = next;
    }
    Ok(h)
}

/// The level-`k` graph of `f` on `[0, 1]`: `n^k` segments, each the diagonal
/// of a chosen cell.
pub fn carpet_curve(p: &Pattern, level: usize) -> Result<Polyline> {
    let h = curve_heights(p, level)?;
    let nx = (p.cols as f64).powi(level as i32);
    let my = (p.rows as f64).powi(level as i32);
    Ok(Polyline::open(
        h.iter()
            .enumerate()
            .map(|(i, &y)| Point::new(i as f64 / nx, y as f64 / my))
            .collect(),
    ))
}

/// Top edge `t -> g(t)` from `t = 2` down to `t = 0`, where `g = 1 + f` on
/// `[0, 1]` and `g(t) = 3 - f(2 - t)` on `(1, 2]`.
pub fn carpet_top(p: &Pattern, level: usize) -> Result<Polyline> {
    let f = carpet_curve(p, level)?;
    let v = &f.vertices;
    let mut top = Vec::with_capacity(2 * v.len() - 1);
    top.extend(v.iter().map(|q| Point::new(2.0 - q.x, 3.0 - q.y)));
    top.extend(v.iter().rev().skip(1).map(|q| Point::new(q.x, 1.0 + q.y)));
    Ok(Polyline::open(top))
}

/// Closed polygon `(0,0) -> (2,0) -> (2,3) -> top edge -> (0,1)`.
pub fn carpet_domain(p: &Pattern, level: usize) -> Result<Polyline> {
    let top = carpet_top(p, level)?;
    let mut v = Vec::with_capacity(top.vertices.len() + 2);
    v.push(Point::new(0.0, 0.0));
    v.push(Point::new(2.0, 0.0));
    v.extend(top.vertices);
    Ok(Polyline::closed(v))
}

/// Raster tube profile of the level-`k` carpet domain with distances
/// measured to the polygonal top edge only.
pub fn carpet_raster_profile(
    p: &Pattern,
    level: usize,
    eps_list: &[f64],
    grid_div: f64,
) -> Result<TubularProfile> {
    let top = carpet_top(p, level)?;
    let dom = Domain::new_unchecked(carpet_domain(p, level)?);
    let idx = SegmentIndex::new(&top);
    tube_profile_domain(&dom, Some(&idx), eps_list, grid_div)
}

/// Horizontal cell width of the curve model, relative to `eps`.
pub const CARPET_CELL_DIV: f64 = 64.0;
/// Quadrature step in `x`, relative to `eps`.
pub const CARPET_STEP_DIV: f64 = 32.0;

/// Inner tube volume of the limit domain against the fractal top edge.
///
/// A level-`k` cell of width `n^{-k}` contains the graph over its column and
/// the graph meets both its top and its bottom, so with `n^{-k} <= eps / 64`
/// the graph is replaced by vertical segments at the cell centres. Points of a
/// column `x` below the graph lie within `eps` of it exactly when they lie
/// above `L(x) = min_c (bottom_c - sqrt(eps^2 - (x - x_c)^2))`, and the area
/// under `g` over `[0, 2]` is 4.
pub fn carpet_tube_volume(p: &Pattern, eps: f64) -> Result<TubeEntry> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("eps must lie in (0, 1), got {eps}")));
    }
    let n = p.cols as f64;
    let level = ((CARPET_CELL_DIV / eps).ln() / n.ln()).ceil().max(0.0) as usize;
    let h = curve_heights(p, level)?;
    let cells = h.len() - 1;
    let w = n.powi(-(level as i32));
    let my = (p.rows as f64).powi(level as i32);
    // Bottoms of the cells over [0, 2]: the lower copy 1 + f, then 3 - f(2 - t).
    let mut bottom = Vec::with_capacity(2 * cells);
    bottom.extend(h.windows(2).map(|v| 1.0 + v[0].min(v[1]) as f64 / my));
    bottom.extend(h.windows(2).rev().map(|v| 3.0 - v[0].max(v[1]) as f64 / my));
    let reach = (eps / w).ceil() as i64 + 1;
    let steps = (2.0 * CARPET_STEP_DIV / eps).ceil() as usize;
    let dx = 2.0 / steps as f64;
    let total = 2 * cells as i64;
    let lower: f64 = (0..steps)
        .into_par_iter()
        .map(|j| {
            let x = (j as f64 + 0.5) * dx;
            let c0 = (x / w).floor() as i64;
            let mut l = f64::INFINITY;
            for c in (c0 - reach).max(0)..=(c0 + reach).min(total - 1) {
                let d = x - (c as f64 + 0.5) * w;
                let r2 = eps * eps - d * d;
                if r2 > 0.0 {
                    l = l.min(bottom[c as usize] - r2.sqrt());
                }
            }
            l.max(0.0)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        * dx;
    let mu = 4.0 - lower;
    Ok(TubeEntry {
        eps,
        mu,
        mu_err: mu * w / eps,
        level: Some(level),
        grid_h: dx,
    })
}

pub fn carpet_tube_profile(p: &Pattern, eps_list: &[f64]) -> Result<TubularProfile> {
    let entries = eps_list
        .iter()
        .map(|&e| carpet_tube_volume(p, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(TubularProfile::new(format!("carpet:{p}"), 4.0, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::simplicity_check;
    use proptest::prelude::*;

    #[test]
    fn pattern_a_dims() {
        let (h, m) = carpet_dims(&Pattern::pattern_a()).unwrap();
        let h_want = (1.0 + 3f64.sqrt()).ln() / 2f64.ln();
        assert!((h - h_want).abs() < 1e-12 && (h - 1.4500).abs() < 1e-4);
        assert!((m - 1.5).abs() < 1e-12);
    }

    #[test]
    fn full_and_single_row() {
        let full: Pattern = "1111;1111".parse().unwrap();
        let (h, m) = carpet_dims(&full).unwrap();
        assert!((h - 2.0).abs() < 1e-12 && (m - 2.0).abs() < 1e-12);
        let row: Pattern = "00000;11111;00000".parse().unwrap();
        let (h, m) = carpet_dims(&row).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
        assert!((m - (1.0 + (5.0f64 / 3.0).ln() / 5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let a = Pattern::pattern_a();
        assert_eq!(a.to_string(), "0111;1000");
        assert_eq!(a.row_counts(), vec![1, 3]);
        assert!("0000;0000".parse::<Pattern>().is_err());
        assert!("01;10".parse::<Pattern>().is_err());
        assert!("012;100".parse::<Pattern>().is_err());
        assert!("011;10".parse::<Pattern>().is_err());
    }

    #[test]
    fn level_one_staircase() {
        let c = carpet_curve(&Pattern::pattern_a(), 1).unwrap();
        let ys: Vec<f64> = c.vertices.iter().map(|p| p.y).collect();
        assert_eq!(ys, vec![0.0, 0.5, 1.0, 0.5, 1.0]);
        let kids = plain_children(&Pattern::pattern_a()).unwrap();
        assert_eq!(kids, vec![(0, true), (1, true), (1, false), (1, true)]);
    }

    #[test]
    fn curve_is_monotone_and_continuous() {
        let a = Pattern::pattern_a();
        for k in 0..=7 {
            let c = carpet_curve(&a, k).unwrap();
            assert_eq!(c.segment_count(), 4usize.pow(k as u32));
            assert!(c.vertices.windows(2).all(|w| w[1].x > w[0].x));
            let last = c.vertices.last().unwrap();
            assert!((last.y - 1.0).abs() < 1e-12 && c.vertices[0].y == 0.0);
            // Each segment is the diagonal of one level-k cell.
            let dy = 0.5f64.powi(k as i32);
            assert!(c.segments().all(|(p, q)| ((q.y - p.y).abs() - dy).abs() < 1e-12));
        }
    }

    #[test]
    fn curve_refines_consistently() {
        let a = Pattern::pattern_a();
        let c3 = carpet_curve(&a, 3).unwrap();
        let c5 = carpet_curve(&a, 5).unwrap();
        for (i, p) in c3.vertices.iter().enumerate() {
            let q = c5.vertices[16 * i];
            assert!(p.dist(q) < 1e-12);
        }
    }

    #[test]
    fn discontinuous_patterns_rejected() {
        // Rows jump by two.
        assert!(carpet_curve(&"00011;00100;11000".parse().unwrap(), 1).is_err());
        // Does not end at the top.
        assert!(carpet_curve(&"0110;1001".parse().unwrap(), 1).is_err());
        // Two chosen rectangles in one column.
        assert!(carpet_curve(&"0111;1100".parse().unwrap(), 1).is_err());
    }

    #[test]
    fn domain_level_zero_and_symmetry() {
        let d = carpet_domain(&Pattern::pattern_a(), 0).unwrap();
        let want = [(0.0, 0.0), (2.0, 0.0), (2.0, 3.0), (1.0, 2.0), (0.0, 1.0)];
        assert_eq!(d.vertices.len(), want.len());
        for (p, w) in d.vertices.iter().zip(want) {
            assert!(p.dist(Point::new(w.0, w.1)) < 1e-15);
        }
        for k in 1..=5 {
            let top = carpet_top(&Pattern::pattern_a(), k).unwrap();
            let v = &top.vertices;
            for i in 0..v.len() {
                let a = v[i];
                let b = v[v.len() - 1 - i];
                assert!((a.x + b.x - 2.0).abs() < 1e-12 && (a.y + b.y - 4.0).abs() < 1e-12);
            }
            let dom = carpet_domain(&Pattern::pattern_a(), k).unwrap();
            assert!(simplicity_check(&dom));
        }
    }

    #[test]
    fn level_one_domain_has_mirrored_staircases() {
        let top = carpet_top(&Pattern::pattern_a(), 1).unwrap();
        let ys: Vec<f64> = top.vertices.iter().map(|p| p.y).collect();
        assert_eq!(ys, vec![3.0, 2.5, 2.0, 2.5, 2.0, 1.5, 2.0, 1.5, 1.0]);
    }

    #[test]
    fn envelope_tube_matches_raster() {
        let a = Pattern::pattern_a();
        let eps = [1.0 / 32.0, 1.0 / 16.0];
        let raster = carpet_raster_profile(&a, 9, &eps, 8.0).unwrap();
        for (e, r) in eps.iter().zip(&raster.entries) {
            let v = carpet_tube_volume(&a, *e).unwrap();
            assert!((v.mu / r.mu - 1.0).abs() < 0.02, "{} vs {}", v.mu, r.mu);
        }
    }

    #[test]
    fn envelope_tube_converges_in_cell_width() {
        // Level chosen for eps/64 against one level coarser.
        let a = Pattern::pattern_a();
        let fine = carpet_tube_volume(&a, 1.0 / 64.0).unwrap();
        let coarse = carpet_tube_volume(&a, 1.0 / 16.0).unwrap();
        assert_eq!(fine.level, Some(coarse.level.unwrap() + 1));
        assert!(fine.mu < coarse.mu && fine.mu_err < 0.02 * fine.mu);
    }

    fn two_row_patterns(n: usize) -> impl Iterator<Item = Pattern> {
        (1u32..1 << (2 * n)).filter_map(move |bits| {
            let row = |j: usize| (0..n).map(|i| bits >> (j * n + i) & 1 == 1).collect();
            Pattern::new(vec![row(0), row(1)]).ok()
        })
    }

    #[test]
    fn hausdorff_below_minkowski_two_rows() {
        for n in 3..=6 {
            for p in two_row_patterns(n) {
                let (h, m) = carpet_dims(&p).unwrap();
                let r = p.row_counts();
                assert!(h <= m + 1e-12, "{p}");
                assert_eq!((m - h).abs() < 1e-12, r[0] == r[1], "{p} {h} {m}");
            }
        }
    }

    proptest! {
        #[test]
        fn hausdorff_below_minkowski(rows in 1usize..4, extra in 1usize..4, bits in any::<u64>()) {
            let cols = rows + extra;
            let cells: Vec<Vec<bool>> = (0..rows)
                .map(|j| (0..cols).map(|i| bits >> ((j * cols + i) % 64) & 1 == 1).collect())
                .collect();
            if let Ok(p) = Pattern::new(cells) {
                let (h, m) = carpet_dims(&p).unwrap();
                prop_assert!(h <= m + 1e-12);
                prop_assert!(m <= 2.0 + 1e-12);
            }
        }
    }
}
