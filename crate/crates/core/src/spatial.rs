//! Uniform-bin segment index, nearest-segment queries, inside tests and the
//! validated [`Domain`] wrapper shared by the tube and heat solvers.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{simplicity_check, BBox, Point, Polyline};

/// Closest segment to a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub dist2: f64,
    pub seg: u32,
    /// Parameter of the closest point along the segment, in [0, 1].
    pub t: f64,
}

impl Nearest {
    pub fn dist(&self) -> f64 {
        self.dist2.sqrt()
    }
}

/// Squared distance from `p` to segment `[a, b]` and the clamped parameter.
#[inline]
pub fn seg_dist2(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b.sub(a);
    let ap = p.sub(a);
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        (ap.dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap.x - t * ab.x;
    let dy = ap.y - t * ab.y;
    (dx * dx + dy * dy, t)
}

/// Reusable buffers for candidate queries; one per worker.
#[derive(Debug, Default)]
pub struct QueryScratch {
    stamp: Vec<u32>,
    generation: u32,
    pub out: Vec<u32>,
}

/// Segments of a closed polygon bucketed on a uniform grid of square bins.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    a: Vec<Point>,
    b: Vec<Point>,
    closed: bool,
    /// +1 when the interior lies to the left of each segment, -1 otherwise.
    orient: f64,
    origin: Point,
    bin: f64,
    nbx: usize,
    nby: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl SegmentIndex {
    pub fn new(poly: &Polyline) -> Self {
        let k = poly.segment_count();
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        for (p, q) in poly.segments() {
            a.push(p);
            b.push(q);
        }
        let bb = poly.bbox();
        let w = bb.width().max(1e-300);
        let h = bb.height().max(1e-300);
        let mean_len = if k > 0 { poly.length() / k as f64 } else { 1.0 };
        let target_bins = (2 * k).clamp(1, 1 << 24) as f64;
        let mut bin = (w * h / target_bins).sqrt().max(mean_len);
        if !bin.is_finite() || bin <= 0.0 {
            bin = 1.0;
        }
        let nbx = ((w / bin).floor() as usize + 1).max(1);
        let nby = ((h / bin).floor() as usize + 1).max(1);
        let origin = bb.min;

        let bin_range = |lo: f64, hi: f64, o: f64, n: usize| -> (usize, usize) {
            let i0 = (((lo - o) / bin).floor().max(0.0) as usize).min(n - 1);
            let i1 = (((hi - o) / bin).floor().max(0.0) as usize).min(n - 1);
            (i0, i1)
        };
        let mut counts = vec![0u32; nbx * nby + 1];
        for s in 0..k {
            let (x0, x1) = bin_range(a[s].x.min(b[s].x), a[s].x.max(b[s].x), origin.x, nbx);
            let (y0, y1) = bin_range(a[s].y.min(b[s].y), a[s].y.max(b[s].y), origin.y, nby);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    counts[j * nbx + i + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; *starts.last().unwrap() as usize];
        for s in 0..k {
            let (x0, x1) = bin_range(a[s].x.min(b[s].x), a[s].x.max(b[s].x), origin.x, nbx);
            let (y0, y1) = bin_range(a[s].y.min(b[s].y), a[s].y.max(b[s].y), origin.y, nby);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let slot = &mut fill[j * nbx + i];
                    items[*slot as usize] = s as u32;
                    *slot += 1;
                }
            }
        }
        let orient = if poly.signed_area() >= 0.0 { 1.0 } else { -1.0 };
        Self {
            a,
            b,
            closed: poly.closed,
            orient,
            origin,
            bin,
            nbx,
            nby,
            starts,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    #[inline]
    pub fn segment(&self, s: u32) -> (Point, Point) {
        (self.a[s as usize], self.b[s as usize])
    }

    pub fn scratch(&self) -> QueryScratch {
        QueryScratch {
            stamp: vec![0; self.len()],
            generation: 0,
            out: Vec::new(),
        }
    }

    #[inline]
    fn bin_coord(&self, v: f64, o: f64, n: usize) -> usize {
        (((v - o) / self.bin).floor().max(0.0) as usize).min(n - 1)
    }

    #[inline]
    fn bin_items(&self, i: usize, j: usize) -> &[u32] {
        let c = j * self.nbx + i;
        &self.items[self.starts[c] as usize..self.starts[c + 1] as usize]
    }

    /// Nearest segment, searching rings of bins outward until the answer is
    /// certain or `rmax` is exceeded. Returns `None` if nothing lies within
    /// `rmax`.
    pub fn nearest_bounded(&self, p: Point, rmax: f64) -> Option<Nearest> {
        if self.is_empty() {
            return None;
        }
        let ci = self.bin_coord(p.x, self.origin.x, self.nbx) as i64;
        let cj = self.bin_coord(p.y, self.origin.y, self.nby) as i64;
        let mut best = Nearest {
            dist2: f64::INFINITY,
            seg: 0,
            t: 0.0,
        };
        let rmax2 = rmax * rmax;
        let max_ring = self.nbx.max(self.nby) as i64;
        let visit = |i: i64, j: i64, best: &mut Nearest| {
            if i < 0 || j < 0 || i >= self.nbx as i64 || j >= self.nby as i64 {
                return;
            }
            for &s in self.bin_items(i as usize, j as usize) {
                let (d2, t) = seg_dist2(p, self.a[s as usize], self.b[s as usize]);
                if d2 < best.dist2 || (d2 == best.dist2 && s < best.seg) {
                    *best = Nearest { dist2: d2, seg: s, t };
                }
            }
        };
        for r in 0..=max_ring {
            if r == 0 {
                visit(ci, cj, &mut best);
            } else {
                for i in (ci - r)..=(ci + r) {
                    visit(i, cj - r, &mut best);
                    visit(i, cj + r, &mut best);
                }
                for j in (cj - r + 1)..=(cj + r - 1) {
                    visit(ci - r, j, &mut best);
                    visit(ci + r, j, &mut best);
                }
            }
            let reach = r as f64 * self.bin;
            if best.dist2 <= reach * reach {
                break;
            }
            if reach * reach > rmax2 && best.dist2 > rmax2 {
                return None;
            }
        }
        (best.dist2 <= rmax2).then_some(best)
    }

    pub fn nearest(&self, p: Point) -> Nearest {
        self.nearest_bounded(p, f64::INFINITY)
            .expect("nearest on empty index")
    }

    /// Collects into `scratch.out` every segment within distance `r` of `p`.
    pub fn gather(&self, p: Point, r: f64, scratch: &mut QueryScratch) {
        scratch.out.clear();
        if self.is_empty() {
            return;
        }
        scratch.generation = scratch.generation.wrapping_add(1);
        if scratch.generation == 0 {
            scratch.stamp.iter_mut().for_each(|s| *s = 0);
            scratch.generation = 1;
        }
        let g = scratch.generation;
        let i0 = self.bin_coord(p.x - r, self.origin.x, self.nbx);
        let i1 = self.bin_coord(p.x + r, self.origin.x, self.nbx);
        let j0 = self.bin_coord(p.y - r, self.origin.y, self.nby);
        let j1 = self.bin_coord(p.y + r, self.origin.y, self.nby);
        let r2 = r * r;
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &s in self.bin_items(i, j) {
                    let st = &mut scratch.stamp[s as usize];
                    if *st == g {
                        continue;
                    }
                    *st = g;
                    let (d2, _) = seg_dist2(p, self.a[s as usize], self.b[s as usize]);
                    if d2 <= r2 {
                        scratch.out.push(s);
                    }
                }
            }
        }
        scratch.out.sort_unstable();
    }

    /// Nearest among an explicit candidate list.
    #[inline]
    pub fn nearest_among(&self, p: Point, candidates: &[u32]) -> Option<Nearest> {
        let mut best: Option<Nearest> = None;
        for &s in candidates {
            let (d2, t) = seg_dist2(p, self.a[s as usize], self.b[s as usize]);
            match best {
                Some(b) if b.dist2 <= d2 => {}
                _ => best = Some(Nearest { dist2: d2, seg: s, t }),
            }
        }
        best
    }

    /// Inside test from the local geometry at the closest boundary point.
    /// +1 for counter-clockwise rings, -1 for clockwise.
    pub fn orientation(&self) -> f64 {
        self.orient
    }

    pub fn is_inside_from(&self, p: Point, near: &Nearest) -> bool {
        let k = self.len();
        let s = near.seg as usize;
        let (a, b) = (self.a[s], self.b[s]);
        let edge_side = |a: Point, b: Point| b.sub(a).cross(p.sub(a)) * self.orient;
        if (near.t > 0.0 && near.t < 1.0) || !self.closed {
            return edge_side(a, b) > 0.0;
        }
        let (inc, out) = if near.t <= 0.0 {
            ((s + k - 1) % k, s)
        } else {
            (s, (s + 1) % k)
        };
        let v = if near.t <= 0.0 { a } else { b };
        let e1 = self.b[inc].sub(self.a[inc]);
        let e2 = self.b[out].sub(self.a[out]);
        let s1 = e1.cross(p.sub(v)) * self.orient;
        let s2 = e2.cross(p.sub(v)) * self.orient;
        let convex = e1.cross(e2) * self.orient > 0.0;
        if convex {
            s1 > 0.0 && s2 > 0.0
        } else {
            s1 > 0.0 || s2 > 0.0
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let n = self.nearest(p);
        n.dist2 > 0.0 && self.is_inside_from(p, &n)
    }

    /// Distance to the boundary, positive inside and negative outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let n = self.nearest(p);
        let d = n.dist();
        if self.is_inside_from(p, &n) {
            d
        } else {
            -d
        }
    }

    /// Smallest parameter `u` in (0, 1] at which the segment `p -> q` meets
    /// one of the candidate boundary segments.
    pub fn first_crossing(&self, p: Point, q: Point, candidates: &[u32]) -> Option<f64> {
        let d = q.sub(p);
        let mut best: Option<f64> = None;
        for &s in candidates {
            let (a, b) = self.segment(s);
            let e = b.sub(a);
            let den = d.cross(e);
            if den == 0.0 {
                continue;
            }
            let w = a.sub(p);
            let u = w.cross(e) / den;
            let v = w.cross(d) / den;
            if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
                best = Some(best.map_or(u, |x: f64| x.min(u)));
            }
        }
        best
    }
}

/// A validated simple closed polygon with its segment index.
#[derive(Debug, Clone)]
pub struct Domain {
    pub polygon: Polyline,
    pub index: SegmentIndex,
    pub area: f64,
    pub bbox: BBox,
    pub id: String,
}

impl Domain {
    /// Validates closure and simplicity, then builds the index.
    pub fn new(polygon: Polyline) -> Result<Self> {
        if !polygon.closed {
            return Err(Error::InvalidDomain("polygon must be closed".into()));
        }
        if !simplicity_check(&polygon) {
            return Err(Error::InvalidDomain("polygon is not simple".into()));
        }
        Ok(Self::new_unchecked(polygon))
    }

    /// Skips the simplicity test; for polygons already known to be simple.
    pub fn new_unchecked(polygon: Polyline) -> Self {
        let index = SegmentIndex::new(&polygon);
        let area = polygon.area();
        let bbox = polygon.bbox();
        let id = polygon_hash(&polygon);
        Self {
            polygon,
            index,
            area,
            bbox,
            id,
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.polygon.length()
    }

    /// Uniform draw inside the polygon by rejection from the bounding box.
    pub fn sample_uniform<R: rand::Rng>(&self, rng: &mut R) -> Point {
        loop {
            let p = Point::new(
                self.bbox.min.x + rng.gen::<f64>() * self.bbox.width(),
                self.bbox.min.y + rng.gen::<f64>() * self.bbox.height(),
            );
            if self.index.contains(p) {
                return p;
            }
        }
    }
}

/// Content hash of a polygon's vertex coordinates (hex, 16 chars).
pub fn polygon_hash(p: &Polyline) -> String {
    let mut h = Sha256::new();
    h.update([u8::from(p.closed)]);
    for v in &p.vertices {
        h.update(v.x.to_le_bytes());
        h.update(v.y.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Polyline {
        Polyline::closed(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
    }

    fn l_shape() -> Polyline {
        // Clockwise, with one reflex corner at (1, 1).
        Polyline::closed(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 2.0),
            Point::new(1.0, 2.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 1.0),
            Point::new(2.0, 0.0),
        ])
    }

    #[test]
    fn signed_distance_in_square() {
        let idx = SegmentIndex::new(&square());
        assert!((idx.signed_distance(Point::new(0.5, 0.5)) - 0.5).abs() < 1e-15);
        assert!((idx.signed_distance(Point::new(0.1, 0.7)) - 0.1).abs() < 1e-15);
        assert!((idx.signed_distance(Point::new(-0.2, 0.5)) + 0.2).abs() < 1e-15);
        // Nearest feature is a convex vertex.
        let d = idx.signed_distance(Point::new(1.3, 1.4));
        assert!((d + 0.5).abs() < 1e-12);
    }

    #[test]
    fn reflex_vertex_sign() {
        let idx = SegmentIndex::new(&l_shape());
        // Inside near the reflex corner, nearest feature is the corner itself.
        assert!(idx.contains(Point::new(0.9, 0.9)));
        assert!(!idx.contains(Point::new(1.1, 1.1)));
    }

    #[test]
    fn gather_finds_all_close_segments() {
        let idx = SegmentIndex::new(&l_shape());
        let mut sc = idx.scratch();
        idx.gather(Point::new(1.0, 1.0), 0.01, &mut sc);
        assert_eq!(sc.out, vec![2, 3]);
        idx.gather(Point::new(1.0, 1.0), 10.0, &mut sc);
        assert_eq!(sc.out.len(), 6);
    }

    #[test]
    fn first_crossing_parameter() {
        let idx = SegmentIndex::new(&square());
        let all: Vec<u32> = (0..4).collect();
        let u = idx
            .first_crossing(Point::new(0.9, 0.5), Point::new(1.3, 0.5), &all)
            .unwrap();
        assert!((u - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_nearest_matches_brute_force(x in -1.0f64..3.0, y in -1.0f64..3.0) {
            let poly = l_shape();
            let idx = SegmentIndex::new(&poly);
            let p = Point::new(x, y);
            let brute = poly
                .segments()
                .map(|(a, b)| seg_dist2(p, a, b).0)
                .fold(f64::INFINITY, f64::min);
            let n = idx.nearest(p);
            prop_assert!((n.dist2 - brute).abs() < 1e-12);
            // Crossing-number oracle for the inside test.
            let mut inside = false;
            for (a, b) in poly.segments() {
                if (a.y > y) != (b.y > y) {
                    let xc = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                    if x < xc { inside = !inside; }
                }
            }
            if brute > 1e-9 {
                prop_assert_eq!(idx.contains(p), inside);
            }
        }
    }
}
