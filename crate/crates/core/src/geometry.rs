//! Planar points, polylines and the simplicity test.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::ops::Bound::{Excluded, Unbounded};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn scale(self, r: f64) -> Point {
        Point::new(self.x * r, self.y * r)
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    /// Complex product, used to map a unit-interval template onto a segment.
    #[inline]
    pub fn cmul(self, o: Point) -> Point {
        Point::new(self.x * o.x - self.y * o.y, self.x * o.y + self.y * o.x)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// Ordered chain of planar vertices. A closed polyline stores each vertex
/// once; the closing segment from the last vertex back to the first is
/// implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<Point>,
    pub closed: bool,
}

impl Polyline {
    pub fn open(vertices: Vec<Point>) -> Self {
        Self {
            vertices,
            closed: false,
        }
    }

    pub fn closed(vertices: Vec<Point>) -> Self {
        Self {
            vertices,
            closed: true,
        }
    }

    pub fn segment_count(&self) -> usize {
        let n = self.vertices.len();
        if self.closed {
            if n >= 2 {
                n
            } else {
                0
            }
        } else {
            n.saturating_sub(1)
        }
    }

    #[inline]
    pub fn segment(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..self.segment_count()).map(move |i| self.segment(i))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }

    /// Shoelace area; positive for counter-clockwise closed chains.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let o = self.vertices[0];
        let mut acc = 0.0;
        for i in 1..n - 1 {
            acc += self.vertices[i].sub(o).cross(self.vertices[i + 1].sub(o));
        }
        0.5 * acc
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> BBox {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    /// Image under the homothety x -> r x about the origin.
    pub fn scaled(&self, r: f64) -> Polyline {
        Polyline {
            vertices: self.vertices.iter().map(|p| p.scale(r)).collect(),
            closed: self.closed,
        }
    }

    pub fn translated(&self, d: Point) -> Polyline {
        Polyline {
            vertices: self.vertices.iter().map(|p| p.add(d)).collect(),
            closed: self.closed,
        }
    }
}

/// True iff no two non-adjacent segments of `p` intersect (and adjacent
/// segments meet only at their shared vertex). Shamos–Hoey sweep,
/// O(k log k) in the number of segments.
pub fn simplicity_check(p: &Polyline) -> bool {
    let n = p.vertices.len();
    let k = p.segment_count();
    if k == 0 {
        return false;
    }
    if p.closed && n < 3 {
        return false;
    }
    if p.vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
        return false;
    }

    let scale = p.bbox().diameter().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    // Rotating by a fixed generic angle removes vertical segments, which the
    // sweep comparator would otherwise have to special-case.
    let (sn, cs) = 0.371_893_f64.sin_cos();
    let rot = |q: Point| Point::new(cs * q.x - sn * q.y, sn * q.x + cs * q.y);
    let pts: Vec<Point> = p.vertices.iter().map(|&q| rot(q)).collect();
    let seg = |i: usize| (pts[i], pts[(i + 1) % n]);

    for i in 0..k {
        let (a, b) = seg(i);
        if a.dist(b) <= tol {
            return false;
        }
    }
    // Adjacent segments must not fold back onto each other.
    let adjacent_pairs = if p.closed { k } else { k - 1 };
    for i in 0..adjacent_pairs {
        let j = (i + 1) % k;
        let (a, b) = seg(i);
        let (_, c) = seg(j);
        let u = b.sub(a);
        let v = c.sub(b);
        if u.cross(v).abs() <= tol * (u.norm() + v.norm()) && u.dot(v) < 0.0 {
            return false;
        }
    }
    if p.closed && k == 3 {
        // A triangle with distinct, non-folding edges is simple unless degenerate.
        return p.area() > tol * tol;
    }

    let adjacent = |i: usize, j: usize| -> bool {
        let d = i.abs_diff(j);
        d == 1 || (p.closed && d == k - 1)
    };

    let keys: Vec<SweepSeg> = (0..k)
        .map(|i| {
            let (a, b) = seg(i);
            let (l, r) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
            SweepSeg { l, r, idx: i }
        })
        .collect();

    #[derive(Clone, Copy)]
    struct Event {
        x: f64,
        y: f64,
        insert: bool,
        idx: usize,
    }
    let mut events: Vec<Event> = Vec::with_capacity(2 * k);
    for s in &keys {
        events.push(Event {
            x: s.l.x,
            y: s.l.y,
            insert: true,
            idx: s.idx,
        });
        events.push(Event {
            x: s.r.x,
            y: s.r.y,
            insert: false,
            idx: s.idx,
        });
    }
    events.sort_by(|a, b| {
        a.x.total_cmp(&b.x)
            .then(b.insert.cmp(&a.insert))
            .then(a.y.total_cmp(&b.y))
            .then(a.idx.cmp(&b.idx))
    });

    let check = |s: &SweepSeg, t: &SweepSeg| -> bool {
        !adjacent(s.idx, t.idx) && segments_intersect(s.l, s.r, t.l, t.r, tol)
    };

    let mut status: BTreeSet<SweepSeg> = BTreeSet::new();
    for ev in events {
        let key = keys[ev.idx];
        if ev.insert {
            let above = status.range((Excluded(key), Unbounded)).next().copied();
            let below = status.range(..key).next_back().copied();
            if let Some(t) = above {
                if check(&key, &t) {
                    return false;
                }
            }
            if let Some(t) = below {
                if check(&key, &t) {
                    return false;
                }
            }
            status.insert(key);
        } else {
            let above = status.range((Excluded(key), Unbounded)).next().copied();
            let below = status.range(..key).next_back().copied();
            status.remove(&key);
            if let (Some(a), Some(b)) = (above, below) {
                if check(&a, &b) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug)]
struct SweepSeg {
    l: Point,
    r: Point,
    idx: usize,
}

impl SweepSeg {
    fn y_at(&self, x: f64) -> f64 {
        let dx = self.r.x - self.l.x;
        if dx <= 0.0 {
            return self.l.y;
        }
        let t = ((x - self.l.x) / dx).clamp(0.0, 1.0);
        self.l.y + t * (self.r.y - self.l.y)
    }

    fn slope(&self) -> f64 {
        let dx = self.r.x - self.l.x;
        if dx <= 0.0 {
            f64::INFINITY
        } else {
            (self.r.y - self.l.y) / dx
        }
    }
}

impl PartialEq for SweepSeg {
    fn eq(&self, other: &Self) -> bool {
        self.idx == other.idx
    }
}

impl Eq for SweepSeg {}

impl PartialOrd for SweepSeg {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SweepSeg {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.idx == other.idx {
            return Ordering::Equal;
        }
        let x = self.l.x.max(other.l.x);
        self.y_at(x)
            .total_cmp(&other.y_at(x))
            .then(self.slope().total_cmp(&other.slope()))
            .then(self.idx.cmp(&other.idx))
    }
}

#[inline]
fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(a: Point, b: Point, q: Point, tol: f64) -> bool {
    q.x >= a.x.min(b.x) - tol
        && q.x <= a.x.max(b.x) + tol
        && q.y >= a.y.min(b.y) - tol
        && q.y <= a.y.max(b.y) + tol
}

/// Closed-segment intersection test with an absolute tolerance.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point, tol: f64) -> bool {
    let lp = p1.dist(p2).max(tol);
    let lq = q1.dist(q2).max(tol);
    let o1 = orient(p1, p2, q1) / lp;
    let o2 = orient(p1, p2, q2) / lp;
    let o3 = orient(q1, q2, p1) / lq;
    let o4 = orient(q1, q2, p2) / lq;
    let s = |v: f64| -> i8 {
        if v > tol {
            1
        } else if v < -tol {
            -1
        } else {
            0
        }
    };
    let (s1, s2, s3, s4) = (s(o1), s(o2), s(o3), s(o4));
    if s1 * s2 < 0 && s3 * s4 < 0 {
        return true;
    }
    (s1 == 0 && on_segment(p1, p2, q1, tol))
        || (s2 == 0 && on_segment(p1, p2, q2, tol))
        || (s3 == 0 && on_segment(q1, q2, p1, tol))
        || (s4 == 0 && on_segment(q1, q2, p2, tol))
}
