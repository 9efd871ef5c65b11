//! Explicit finite differences for `du/dt = (1/2) Lap u` with `u = 1` on the
//! boundary and `u = 0` at time zero, on a sparse band of square tiles.
//!
//! Links that cross the boundary use the cut distance to the crossing
//! (Shortley–Weller); a cell whose cut coefficients would break the explicit
//! stability bound is advanced semi-implicitly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::spatial::{Domain, QueryScratch};

/// Cells per tile side.
const T: usize = 32;
/// Stride of a tile buffer including its one-cell halo.
const S: usize = T + 2;
const LEAF: usize = 8;

/// Tuning of the finite-difference solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdOptions {
    /// Cells farther than `band * sqrt(s_max)` from the boundary are frozen at 0.
    pub band: f64,
    /// Time step as a fraction of `h^2`.
    pub dt_frac: f64,
    /// Largest number of simulated cells.
    pub max_cells: u64,
    /// Smallest cut fraction of a link.
    pub min_theta: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            band: 6.0,
            dt_frac: 0.25,
            max_cells: 100_000_000,
            min_theta: 1e-6,
        }
    }
}

/// Output of one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct FdRun {
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    pub cells: u64,
    pub steps: u64,
    pub h: f64,
}

struct Tile {
    ti: i64,
    tj: i64,
    /// Interior flag per cell, row-major over the `T x T` cells.
    inside: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Irregular {
    tile: u32,
    at: u16,
    w: [f64; 4],
    src: f64,
    diag: f64,
}

/// Neighbour offsets in buffer coordinates: east, west, north, south.
const DIRS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Heat content `E(s) = sum u h^2` at each requested time.
pub fn heat_fd(domain: &Domain, s_list: &[f64], h: f64, opts: &FdOptions) -> Result<FdRun> {
    if s_list.is_empty() {
        return Err(Error::param("empty list of times"));
    }
    if s_list.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::param("times must be finite and non-negative"));
    }
    if s_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("times must be ascending"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param(format!("grid pitch must be positive, got {h}")));
    }
    let s_max = *s_list.last().unwrap();
    let dt = opts.dt_frac * h * h;
    if !(opts.dt_frac > 0.0 && opts.dt_frac <= 0.5) {
        return Err(Error::param("dt_frac must lie in (0, 1/2]"));
    }
    if s_max == 0.0 {
        return Ok(FdRun {
            s: s_list.to_vec(),
            e: vec![0.0; s_list.len()],
            cells: 0,
            steps: 0,
            h,
        });
    }
    let reach = opts.band * s_max.sqrt();
    let bb = domain.bbox;
    let tile_w = T as f64 * h;
    let ti0 = (bb.min.x / tile_w).floor() as i64;
    let ti1 = (bb.max.x / tile_w).floor() as i64;
    let tj0 = (bb.min.y / tile_w).floor() as i64;
    let tj1 = (bb.max.y / tile_w).floor() as i64;
    let ntx = (ti1 - ti0 + 1) as usize;
    let nty = (tj1 - tj0 + 1) as usize;
    if (ntx as u128) * (nty as u128) > 1 << 28 {
        return Err(Error::CapExceeded {
            what: "tile grid",
            requested: (ntx as u128) * (nty as u128),
            cap: 1 << 28,
        });
    }

    // Active tiles: some interior cell lies within `reach` of the boundary.
    let hd = tile_w * std::f64::consts::FRAC_1_SQRT_2;
    let cand: Vec<(i64, i64)> = (tj0..=tj1)
        .flat_map(|tj| (ti0..=ti1).map(move |ti| (ti, tj)))
        .collect();
    let active: Vec<(i64, i64)> = cand
        .par_iter()
        .filter(|&&(ti, tj)| {
            let c = Point::new((ti as f64 + 0.5) * tile_w, (tj as f64 + 0.5) * tile_w);
            match domain.index.nearest_bounded(c, reach + hd) {
                None => false,
                Some(n) => n.dist() <= hd || domain.index.is_inside_from(c, &n),
            }
        })
        .copied()
        .collect();
    let cells = (active.len() * T * T) as u64;
    if cells > opts.max_cells {
        return Err(Error::CapExceeded {
            what: "heat cells",
            requested: u128::from(cells),
            cap: u128::from(opts.max_cells),
        });
    }
    let mut lookup = vec![u32::MAX; ntx * nty];
    for (k, &(ti, tj)) in active.iter().enumerate() {
        lookup[(tj - tj0) as usize * ntx + (ti - ti0) as usize] = k as u32;
    }
    let find = |ti: i64, tj: i64| -> Option<usize> {
        if ti < ti0 || ti > ti1 || tj < tj0 || tj > tj1 {
            return None;
        }
        let v = lookup[(tj - tj0) as usize * ntx + (ti - ti0) as usize];
        (v != u32::MAX).then_some(v as usize)
    };

    // Per-tile classification of cells and boundary links.
    let built: Vec<(Tile, Vec<Irregular>)> = active
        .par_iter()
        .enumerate()
        .map_init(
            || domain.index.scratch(),
            |sc, (k, &(ti, tj))| classify_tile(domain, k as u32, ti, tj, h, dt, opts, sc),
        )
        .collect();
    let mut tiles = Vec::with_capacity(built.len());
    let mut irregular = Vec::new();
    for (t, irr) in built {
        tiles.push(t);
        irregular.extend(irr);
    }
    let neighbours: Vec<[Option<usize>; 4]> = tiles
        .iter()
        .map(|t| {
            [
                find(t.ti + 1, t.tj),
                find(t.ti - 1, t.tj),
                find(t.ti, t.tj + 1),
                find(t.ti, t.tj - 1),
            ]
        })
        .collect();

    let mut cur = vec![0.0f64; tiles.len() * S * S];
    let mut nxt = vec![0.0f64; tiles.len() * S * S];
    let n_steps = (s_max / dt).ceil() as u64;

    // Steps at which the heat content is needed.
    let mut want: Vec<u64> = Vec::new();
    for &s in s_list {
        let k = (s / dt).floor() as u64;
        want.push(k);
        want.push((k + 1).min(n_steps));
    }
    want.sort_unstable();
    want.dedup();
    let mut recorded: Vec<(u64, f64)> = Vec::with_capacity(want.len());
    let mut wi = 0;
    let area_cell = h * h;
    let content = |u: &[f64]| -> f64 {
        tiles
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let b = &u[k * S * S..(k + 1) * S * S];
                let mut acc = 0.0;
                for r in 0..T {
                    let row = &b[(r + 1) * S + 1..(r + 1) * S + 1 + T];
                    let m = &t.inside[r * T..(r + 1) * T];
                    acc += row.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
                }
                acc
            })
            .sum::<f64>()
            * area_cell
    };
    while wi < want.len() && want[wi] == 0 {
        recorded.push((0, 0.0));
        wi += 1;
    }
    for step in 1..=n_steps {
        fill_halos(&mut cur, &neighbours);
        nxt.par_chunks_mut(S * S)
            .zip(cur.par_chunks(S * S))
            .for_each(|(dst, src)| stencil(dst, src));
        for c in &irregular {
            let base = c.tile as usize * S * S;
            let at = base + c.at as usize;
            let mut acc = c.src;
            for (d, w) in DIRS.iter().zip(c.w) {
                if w != 0.0 {
                    let off = d.0 + d.1 * S as i64;
                    acc += w * cur[(at as i64 + off) as usize];
                }
            }
            let u = cur[at];
            nxt[at] = if c.diag <= 1.0 {
                u * (1.0 - c.diag) + acc
            } else {
                (u + acc) / (1.0 + c.diag)
            };
        }
        std::mem::swap(&mut cur, &mut nxt);
        if step % 256 == 0 || step == n_steps {
            let mx = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if mx > 1.0 + 1e-9 || !mx.is_finite() {
                return Err(Error::Unstable(format!(
                    "max |u| = {mx} at step {step}"
                )));
            }
        }
        while wi < want.len() && want[wi] == step {
            recorded.push((step, content(&cur)));
            wi += 1;
        }
    }

    let e_at = |k: u64| -> f64 {
        let i = recorded.partition_point(|r| r.0 < k);
        recorded[i.min(recorded.len() - 1)].1
    };
    let e = s_list
        .iter()
        .map(|&s| {
            let k = (s / dt).floor() as u64;
            let k1 = (k + 1).min(n_steps);
            let (e0, e1) = (e_at(k), e_at(k1));
            if k1 == k {
                e0
            } else {
                let t = (s / dt - k as f64).clamp(0.0, 1.0);
                e0 + t * (e1 - e0)
            }
        })
        .collect();
    Ok(FdRun {
        s: s_list.to_vec(),
        e,
        cells,
        steps: n_steps,
        h,
    })
}

/// Regular five-point update on the interior of one tile buffer.
#[inline]
fn stencil(dst: &mut [f64], src: &[f64]) {
    for r in 1..=T {
        let up = &src[(r + 1) * S..(r + 2) * S];
        let mid = &src[r * S..(r + 1) * S];
        let dn = &src[(r - 1) * S..r * S];
        let out = &mut dst[r * S + 1..r * S + 1 + T];
        for c in 0..T {
            out[c] = 0.5 * mid[c + 1] + 0.125 * (mid[c] + mid[c + 2] + up[c + 1] + dn[c + 1]);
        }
    }
}

fn fill_halos(buf: &mut [f64], neighbours: &[[Option<usize>; 4]]) {
    for (k, nb) in neighbours.iter().enumerate() {
        let base = k * S * S;
        // East halo column from the neighbour's first interior column, etc.
        for r in 1..=T {
            buf[base + r * S + T + 1] = nb[0].map_or(0.0, |n| buf[n * S * S + r * S + 1]);
            buf[base + r * S] = nb[1].map_or(0.0, |n| buf[n * S * S + r * S + T]);
        }
        for c in 1..=T {
            buf[base + (T + 1) * S + c] = nb[2].map_or(0.0, |n| buf[n * S * S + S + c]);
            buf[base + c] = nb[3].map_or(0.0, |n| buf[n * S * S + T * S + c]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn classify_tile(
    domain: &Domain,
    k: u32,
    ti: i64,
    tj: i64,
    h: f64,
    dt: f64,
    opts: &FdOptions,
    sc: &mut QueryScratch,
) -> (Tile, Vec<Irregular>) {
    let idx = &domain.index;
    let mut inside = vec![0.0; T * T];
    let mut irr = Vec::new();
    let leaf_hd = LEAF as f64 * h * std::f64::consts::FRAC_1_SQRT_2;
    let cell = |i: usize, j: usize| {
        Point::new(
            ((ti * T as i64 + i as i64) as f64 + 0.5) * h,
            ((tj * T as i64 + j as i64) as f64 + 0.5) * h,
        )
    };
    for bj in (0..T).step_by(LEAF) {
        for bi in (0..T).step_by(LEAF) {
            let c = Point::new(
                (ti * T as i64 + bi as i64) as f64 * h + LEAF as f64 * h / 2.0,
                (tj * T as i64 + bj as i64) as f64 * h + LEAF as f64 * h / 2.0,
            );
            let n = idx.nearest(c);
            let d = n.dist();
            if d > leaf_hd + 1.5 * h {
                let flag = if idx.is_inside_from(c, &n) { 1.0 } else { 0.0 };
                for j in bj..bj + LEAF {
                    inside[j * T + bi..j * T + bi + LEAF].fill(flag);
                }
                continue;
            }
            idx.gather(c, d + 2.0 * leaf_hd + 1.5 * h, sc);
            for j in bj..bj + LEAF {
                for i in bi..bi + LEAF {
                    let p = cell(i, j);
                    let Some(np) = idx.nearest_among(p, &sc.out) else {
                        continue;
                    };
                    if np.dist2 == 0.0 || !idx.is_inside_from(p, &np) {
                        continue;
                    }
                    inside[j * T + i] = 1.0;
                    if np.dist() > h * (1.0 + 1e-9) {
                        continue;
                    }
                    // Arms along the four axis directions.
                    let mut theta = [1.0f64; 4];
                    let mut cut = [false; 4];
                    for (a, dir) in DIRS.iter().enumerate() {
                        let q = Point::new(p.x + dir.0 as f64 * h, p.y + dir.1 as f64 * h);
                        if let Some(u) = idx.first_crossing(p, q, &sc.out) {
                            theta[a] = u.max(opts.min_theta);
                            cut[a] = true;
                        }
                    }
                    if !cut.iter().any(|&c| c) {
                        continue;
                    }
                    let mut w = [0.0; 4];
                    let mut src = 0.0;
                    let mut diag = 0.0;
                    for axis in 0..2 {
                        let (a, b) = (theta[2 * axis], theta[2 * axis + 1]);
                        // Coefficients of (1/2) d2/dx2 with unequal arms a h and b h.
                        let coef = [1.0 / (a * (a + b) * h * h), 1.0 / (b * (a + b) * h * h)];
                        for (side, &cf) in coef.iter().enumerate() {
                            let slot = 2 * axis + side;
                            let wv = dt * cf;
                            diag += wv;
                            if cut[slot] {
                                src += wv;
                            } else {
                                w[slot] = wv;
                            }
                        }
                    }
                    irr.push(Irregular {
                        tile: k,
                        at: ((j + 1) * S + i + 1) as u16,
                        w,
                        src,
                        diag,
                    });
                }
            }
        }
    }
    (Tile { ti, tj, inside }, irr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyline;

    fn square() -> Domain {
        Domain::new(Polyline::closed(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]))
        .unwrap()
    }

    fn half_plane(s: f64, len: f64) -> f64 {
        len * (2.0 * s / std::f64::consts::PI).sqrt()
    }

    #[test]
    fn square_matches_half_plane() {
        let s = 1e-4;
        let run = heat_fd(&square(), &[s], 1.0 / 1600.0, &FdOptions::default()).unwrap();
        let want = half_plane(s, 4.0);
        assert!((run.e[0] / want - 1.0).abs() < 0.02, "{} vs {want}", run.e[0]);
    }

    #[test]
    fn rotated_square_matches_half_plane() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let v = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| Point::new(x * c - y * s + 0.013, x * s + y * c + 0.007))
            .collect();
        let d = Domain::new(Polyline::closed(v)).unwrap();
        let t = 1e-4;
        let run = heat_fd(&d, &[t], 1.0 / 1600.0, &FdOptions::default()).unwrap();
        let want = half_plane(t, 4.0);
        assert!((run.e[0] / want - 1.0).abs() < 0.02, "{} vs {want}", run.e[0]);
    }

    #[test]
    fn zero_time_and_monotone() {
        let run = heat_fd(&square(), &[0.0, 1e-5, 2e-5, 4e-5], 1.0 / 400.0, &FdOptions::default())
            .unwrap();
        assert_eq!(run.e[0], 0.0);
        assert!(run.e.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn long_time_fills_domain() {
        let run = heat_fd(&square(), &[0.5], 1.0 / 64.0, &FdOptions::default()).unwrap();
        assert!((run.e[0] - 1.0).abs() < 0.01, "{}", run.e[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let d = square();
        assert!(heat_fd(&d, &[], 0.01, &FdOptions::default()).is_err());
        assert!(heat_fd(&d, &[2e-4, 1e-4], 0.01, &FdOptions::default()).is_err());
        let opts = FdOptions {
            max_cells: 10,
            ..FdOptions::default()
        };
        assert!(heat_fd(&d, &[1e-4], 0.001, &opts).unwrap_err().is_resource_cap());
    }
}
