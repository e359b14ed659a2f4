//! Closed polygonal sets on the unit torus: signed distance, measures, tubes
//! around the boundary and the decomposition of the tube into edge squares.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Gl2dError, Result};

pub type Point = [f64; 2];

const GEOM_TOL: f64 = 1e-12;

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Counterclockwise rotation by a right angle.
#[inline]
pub fn rot90(a: Point) -> Point {
    [-a[1], a[0]]
}

const SHIFTS: [Point; 9] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [-1.0, 0.0],
    [0.0, 1.0],
    [0.0, -1.0],
    [1.0, 1.0],
    [1.0, -1.0],
    [-1.0, 1.0],
    [-1.0, -1.0],
];

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = sub(p, q);
    dot(d, d).sqrt()
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    if ((d1 > GEOM_TOL && d2 < -GEOM_TOL) || (d1 < -GEOM_TOL && d2 > GEOM_TOL))
        && ((d3 > GEOM_TOL && d4 < -GEOM_TOL) || (d3 < -GEOM_TOL && d4 > GEOM_TOL))
    {
        return true;
    }
    let on = |p: Point, q: Point, r: Point, o: f64| {
        o.abs() <= GEOM_TOL
            && r[0] >= p[0].min(q[0]) - GEOM_TOL
            && r[0] <= p[0].max(q[0]) + GEOM_TOL
            && r[1] >= p[1].min(q[1]) - GEOM_TOL
            && r[1] <= p[1].max(q[1]) + GEOM_TOL
    };
    on(a, b, c, d1) || on(a, b, d, d2) || on(c, d, a, d3) || on(c, d, b, d4)
}

/// One boundary edge; `nu` is the inward normal of the set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub c_minus: Point,
    pub c_plus: Point,
    pub length: f64,
    pub tangent: Point,
    pub nu: Point,
    pub polygon: usize,
    pub component: usize,
}

impl Edge {
    pub fn is_axis_aligned(&self) -> bool {
        self.tangent[0].abs() < GEOM_TOL || self.tangent[1].abs() < GEOM_TOL
    }
}

/// A closed polygonal set given by simple boundary polygons. Counterclockwise
/// polygons bound material from outside, clockwise ones bound holes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralSet {
    pub polygons: Vec<Vec<Point>>,
    pub edges: Vec<Edge>,
    /// Connected component of each polygon.
    pub polygon_component: Vec<usize>,
    pub n_components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measures {
    pub perimeter: f64,
    pub area: f64,
    pub components: usize,
    pub simply_connected: Vec<bool>,
    pub component_areas: Vec<f64>,
    pub component_perimeters: Vec<f64>,
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| cross(poly[k], poly[(k + 1) % n])).sum::<f64>()
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl PolyhedralSet {
    pub fn new(polygons: Vec<Vec<Point>>) -> Result<Self> {
        if polygons.is_empty() {
            return Err(Gl2dError::Geometry("no polygons".into()));
        }
        let mut polys = Vec::with_capacity(polygons.len());
        for (k, mut poly) in polygons.into_iter().enumerate() {
            if poly.len() > 1 && poly.first() == poly.last() {
                poly.pop();
            }
            if poly.len() < 3 {
                return Err(Gl2dError::Geometry(format!("polygon {k} has fewer than 3 vertices")));
            }
            for v in &poly {
                if !(v[0].is_finite() && v[1].is_finite()) {
                    return Err(Gl2dError::Geometry(format!("polygon {k} has a non-finite vertex")));
                }
            }
            if signed_area(&poly).abs() <= GEOM_TOL {
                return Err(Gl2dError::Geometry(format!("polygon {k} is degenerate")));
            }
            polys.push(poly);
        }

        // simplicity and pairwise disjointness, including periodic images
        let segs: Vec<(usize, usize, Point, Point)> = polys
            .iter()
            .enumerate()
            .flat_map(|(pi, poly)| {
                let n = poly.len();
                (0..n).map(move |k| (pi, k, poly[k], poly[(k + 1) % n]))
            })
            .collect();
        for (x, &(pa, ka, a, b)) in segs.iter().enumerate() {
            for &(pb, kb, c, d) in &segs[x..] {
                for s in SHIFTS {
                    let same = pa == pb && s == [0.0, 0.0];
                    if same {
                        let n = polys[pa].len();
                        if ka == kb || (ka + 1) % n == kb || (kb + 1) % n == ka {
                            continue;
                        }
                    }
                    let c2 = [c[0] + s[0], c[1] + s[1]];
                    let d2 = [d[0] + s[0], d[1] + s[1]];
                    if segments_intersect(a, b, c2, d2) {
                        return Err(Gl2dError::Geometry(format!(
                            "edges {ka} of polygon {pa} and {kb} of polygon {pb} intersect"
                        )));
                    }
                }
            }
        }

        // holes belong to the smallest counterclockwise polygon containing them
        let areas: Vec<f64> = polys.iter().map(|p| signed_area(p)).collect();
        let mut comp = vec![usize::MAX; polys.len()];
        let mut n_components = 0;
        for k in 0..polys.len() {
            if areas[k] > 0.0 {
                comp[k] = n_components;
                n_components += 1;
            }
        }
        if n_components == 0 {
            return Err(Gl2dError::Geometry("no counterclockwise outer polygon".into()));
        }
        for k in 0..polys.len() {
            if areas[k] < 0.0 {
                let owner = (0..polys.len())
                    .filter(|&o| areas[o] > 0.0 && point_in_polygon(polys[k][0], &polys[o]))
                    .min_by(|&a, &b| areas[a].total_cmp(&areas[b]));
                match owner {
                    Some(o) => comp[k] = comp[o],
                    None => {
                        return Err(Gl2dError::Geometry(format!(
                            "clockwise polygon {k} is not inside any counterclockwise polygon"
                        )))
                    }
                }
            }
        }
        // an outer polygon nested inside another component's hole is fine, one
        // nested directly inside material is not
        for k in 0..polys.len() {
            if areas[k] > 0.0 {
                let depth = (0..polys.len())
                    .filter(|&o| o != k && point_in_polygon(polys[k][0], &polys[o]))
                    .count();
                if depth % 2 == 1 {
                    return Err(Gl2dError::Geometry(format!(
                        "counterclockwise polygon {k} lies inside material"
                    )));
                }
            }
        }

        let mut edges = Vec::new();
        for (pi, poly) in polys.iter().enumerate() {
            let n = poly.len();
            for k in 0..n {
                let a = poly[k];
                let b = poly[(k + 1) % n];
                let d = sub(b, a);
                let len = dot(d, d).sqrt();
                let t = [d[0] / len, d[1] / len];
                edges.push(Edge {
                    c_minus: a,
                    c_plus: b,
                    length: len,
                    tangent: t,
                    nu: rot90(t),
                    polygon: pi,
                    component: comp[pi],
                });
            }
        }
        let set = PolyhedralSet {
            polygons: polys,
            edges,
            polygon_component: comp,
            n_components,
        };
        let area = set.measures().area;
        if !(area > 0.0 && area < 1.0) {
            return Err(Gl2dError::Geometry(format!("area {area} not in (0, 1)")));
        }
        Ok(set)
    }

    /// Axis-aligned square `[x0, x0 + side] x [y0, y0 + side]`.
    pub fn square(x0: f64, y0: f64, side: f64) -> Result<Self> {
        PolyhedralSet::new(vec![square_ccw(x0, y0, side)])
    }

    pub fn is_rectilinear(&self) -> bool {
        self.edges.iter().all(Edge::is_axis_aligned)
    }

    pub fn measures(&self) -> Measures {
        let nc = self.n_components;
        let mut ca = vec![0.0; nc];
        let mut cp = vec![0.0; nc];
        let mut holes = vec![false; nc];
        for (k, poly) in self.polygons.iter().enumerate() {
            let c = self.polygon_component[k];
            let a = signed_area(poly);
            ca[c] += a;
            if a < 0.0 {
                holes[c] = true;
            }
        }
        for e in &self.edges {
            cp[e.component] += e.length;
        }
        Measures {
            perimeter: cp.iter().sum(),
            area: ca.iter().sum(),
            components: nc,
            simply_connected: holes.iter().map(|h| !h).collect(),
            component_areas: ca,
            component_perimeters: cp,
        }
    }

    /// Whether `x` (any real coordinates) lies in the closed set.
    pub fn contains(&self, x: Point) -> bool {
        let p = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        SHIFTS.iter().any(|s| {
            let q = [p[0] + s[0], p[1] + s[1]];
            self.polygons.iter().filter(|poly| point_in_polygon(q, poly)).count() % 2 == 1
        })
    }

    /// Signed distance together with the index of a nearest edge.
    pub fn signed_distance_edge(&self, x: Point) -> (f64, usize) {
        let p = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        let mut best = (f64::INFINITY, 0);
        for (k, e) in self.edges.iter().enumerate() {
            for s in SHIFTS {
                let q = [p[0] + s[0], p[1] + s[1]];
                let d = seg_dist(q, e.c_minus, e.c_plus);
                if d < best.0 {
                    best = (d, k);
                }
            }
        }
        let sign = if self.contains(p) { 1.0 } else { -1.0 };
        (sign * best.0, best.1)
    }

    /// Tangent half-angle `tan(theta / 2)` of the turn at each vertex, with
    /// the incoming and outgoing edge indices.
    pub fn vertex_turns(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        let mut off = 0;
        for poly in &self.polygons {
            let n = poly.len();
            for k in 0..n {
                let (ei, eo) = (off + (k + n - 1) % n, off + k);
                let (t0, t1) = (self.edges[ei].tangent, self.edges[eo].tangent);
                out.push((ei, eo, cross(t0, t1).abs() / (1.0 + dot(t0, t1))));
            }
            off += n;
        }
        out
    }

    /// Torus signed distance, positive inside, to the boundary with every
    /// vertex replaced by the arc of radius `r` tangent to both edges, and
    /// the nearest edge (arcs count for their incoming edge). The tangent
    /// lengths `r tan(theta / 2)` must fit on the edges.
    pub fn rounded_signed_distance(&self, x: Point, r: f64) -> (f64, usize) {
        let p = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
        let turns = self.vertex_turns();
        let mut trim = vec![(0.0, 0.0); self.edges.len()];
        for &(ei, eo, tn) in &turns {
            trim[ei].1 = r * tn;
            trim[eo].0 = r * tn;
        }
        let mut best = (f64::INFINITY, 0.0, 0);
        for sh in SHIFTS {
            let q = [p[0] + sh[0], p[1] + sh[1]];
            for (k, e) in self.edges.iter().enumerate() {
                let a = [e.c_minus[0] + trim[k].0 * e.tangent[0], e.c_minus[1] + trim[k].0 * e.tangent[1]];
                let b = [e.c_plus[0] - trim[k].1 * e.tangent[0], e.c_plus[1] - trim[k].1 * e.tangent[1]];
                let d = seg_dist(q, a, b);
                if d < best.0 {
                    best = (d, dot(sub(q, a), e.nu), k);
                }
            }
            for &(ei, eo, tn) in &turns {
                if r <= 0.0 || tn < 1e-12 {
                    continue;
                }
                let (e0, e1) = (&self.edges[ei], &self.edges[eo]);
                let convex = cross(e0.tangent, e1.tangent) > 0.0;
                let side = if convex { 1.0 } else { -1.0 };
                let p0 = [e0.c_plus[0] - r * tn * e0.tangent[0], e0.c_plus[1] - r * tn * e0.tangent[1]];
                let p1 = [e1.c_minus[0] + r * tn * e1.tangent[0], e1.c_minus[1] + r * tn * e1.tangent[1]];
                let c = [p0[0] + side * r * e0.nu[0], p0[1] + side * r * e0.nu[1]];
                let (u0, u1, v) = (sub(p0, c), sub(p1, c), sub(q, c));
                let turn = cross(u0, u1).signum();
                if cross(u0, v) * turn < 0.0 || cross(v, u1) * turn < 0.0 {
                    continue;
                }
                let rad = dot(v, v).sqrt();
                let d = (rad - r).abs();
                if d < best.0 {
                    best = (d, side * (r - rad), ei);
                }
            }
        }
        let sign = if best.1 >= 0.0 { 1.0 } else { -1.0 };
        (sign * best.0, best.2)
    }

    /// Torus signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: Point) -> f64 {
        self.signed_distance_edge(x).0
    }

    /// Reads the plain polygon format: one `x y` vertex per line, polygons
    /// separated by blank lines, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut polys = Vec::new();
        let mut cur: Vec<Point> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                if raw.trim().is_empty() && !cur.is_empty() {
                    polys.push(std::mem::take(&mut cur));
                }
                continue;
            }
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != 2 {
                return Err(Gl2dError::Parse(format!(
                    "line {}: expected two coordinates, got {:?}",
                    ln + 1,
                    line
                )));
            }
            let mut v = [0.0; 2];
            for (slot, s) in v.iter_mut().zip(&vals) {
                *slot = s
                    .parse()
                    .map_err(|_| Gl2dError::Parse(format!("line {}: bad number {s:?}", ln + 1)))?;
            }
            cur.push(v);
        }
        if !cur.is_empty() {
            polys.push(cur);
        }
        PolyhedralSet::new(polys)
    }

    pub fn read(path: &Path) -> Result<Self> {
        PolyhedralSet::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, poly) in self.polygons.iter().enumerate() {
            if k > 0 {
                s.push('\n');
            }
            for v in poly {
                let _ = writeln!(s, "{} {}", v[0], v[1]);
            }
        }
        s
    }
}

/// Counterclockwise vertex list of an axis-aligned square.
pub fn square_ccw(x0: f64, y0: f64, side: f64) -> Vec<Point> {
    vec![[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
}

/// The open tube `-s/2 + zeta < sd < s/2 + zeta` with `s = eps_n / eps0` and an
/// offset per component, taken from the nearest edge.
#[derive(Debug, Clone)]
pub struct Tube<'a> {
    pub set: &'a PolyhedralSet,
    pub side: f64,
    pub zetas: Vec<f64>,
}

impl Tube<'_> {
    pub fn contains(&self, x: Point) -> bool {
        let (sd, e) = self.set.signed_distance_edge(x);
        let z = self.zetas[self.set.edges[e].component];
        sd > z - 0.5 * self.side && sd < z + 0.5 * self.side
    }
}

pub fn tube<'a>(set: &'a PolyhedralSet, eps_n: f64, zetas: &[f64], eps0: f64) -> Result<Tube<'a>> {
    let s = eps_n / eps0;
    check_zetas(set, s, zetas)?;
    Ok(Tube {
        set,
        side: s,
        zetas: zetas.to_vec(),
    })
}

fn check_zetas(set: &PolyhedralSet, s: f64, zetas: &[f64]) -> Result<()> {
    if zetas.len() != set.n_components {
        return Err(Gl2dError::Validation(format!(
            "{} offsets for {} components",
            zetas.len(),
            set.n_components
        )));
    }
    if let Some(z) = zetas.iter().find(|z| !(z.abs() <= 0.5 * s)) {
        return Err(Gl2dError::Validation(format!("|zeta| = {} exceeds s/2 = {}", z.abs(), 0.5 * s)));
    }
    Ok(())
}

/// Squares of side `s` along every edge, at normal offset `zeta` of their
/// component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeDecomposition {
    pub side: f64,
    pub eps_n: f64,
    pub eps0: f64,
    /// `(l_minus, l_plus)` per edge.
    pub trims: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    pub centers: Vec<Vec<Point>>,
    pub zetas: Vec<f64>,
    /// `|T \ squares| / eps_n^2`, measured by sampling around the vertices.
    pub corner_constant: f64,
}

/// Label of a point relative to a decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// In the set, beyond the tube.
    DeepInterior,
    /// In square `j` of edge `edge`, with block coordinates
    /// `(x - x_ij) . (nu, rot90 nu) / s` in `[-1/2, 1/2]^2`.
    Square { edge: usize, j: usize, local: Point },
    /// In the tube but in no square.
    Corner,
    Outside,
}

/// Rectangle given by center, unit axis `t`, half extents along `t` and `rot90(t)`.
#[derive(Debug, Clone, Copy)]
struct Rect {
    c: Point,
    t: Point,
    ht: f64,
    hn: f64,
}

impl Rect {
    fn axes(&self) -> [Point; 2] {
        [self.t, rot90(self.t)]
    }

    fn project(&self, ax: Point) -> (f64, f64) {
        let c = dot(self.c, ax);
        let r = self.ht * dot(self.t, ax).abs() + self.hn * dot(rot90(self.t), ax).abs();
        (c - r, c + r)
    }

    /// Interiors overlap (touching is allowed).
    fn overlaps(&self, o: &Rect) -> bool {
        for ax in self.axes().into_iter().chain(o.axes()) {
            let (a0, a1) = self.project(ax);
            let (b0, b1) = o.project(ax);
            if a1 <= b0 + 1e-12 || b1 <= a0 + 1e-12 {
                return false;
            }
        }
        true
    }
}

/// Band of half width `hn` around the part of edge `e` between tangential
/// coordinates `u0` and `u1`.
fn band(e: &Edge, u0: f64, u1: f64, hn: f64, shift: Point) -> Rect {
    let um = 0.5 * (u0 + u1);
    Rect {
        c: [
            e.c_minus[0] + e.tangent[0] * um + shift[0],
            e.c_minus[1] + e.tangent[1] * um + shift[1],
        ],
        t: e.tangent,
        ht: 0.5 * (u1 - u0),
        hn,
    }
}

/// Index of the edge before `k` on its polygon.
fn prev_edge(set: &PolyhedralSet, k: usize) -> usize {
    let e = &set.edges[k];
    let start = set.edges.iter().position(|x| x.polygon == e.polygon).unwrap_or(0);
    let n = set.polygons[e.polygon].len();
    start + (k - start + n - 1) % n
}

fn next_edge(set: &PolyhedralSet, k: usize) -> usize {
    let e = &set.edges[k];
    let start = set.edges.iter().position(|x| x.polygon == e.polygon).unwrap_or(0);
    let n = set.polygons[e.polygon].len();
    start + (k - start + 1) % n
}

pub fn edge_squares(set: &PolyhedralSet, eps_n: f64, zetas: &[f64], eps0: f64) -> Result<EdgeDecomposition> {
    if !(eps_n > 0.0 && eps0 > 0.0) {
        return Err(Gl2dError::Validation("eps_n and eps0 must be > 0".into()));
    }
    let s = eps_n / eps0;
    check_zetas(set, s, zetas)?;
    let ne = set.edges.len();

    // minimal trim multiple at each vertex, shared by its two edges
    let mut k_minus = vec![1usize; ne];
    let mut k_plus = vec![1usize; ne];
    for b in 0..ne {
        let a = prev_edge(set, b);
        let (ea, eb) = (&set.edges[a], &set.edges[b]);
        let mut k = 1;
        loop {
            let ra = band(ea, ea.length - (k as f64 + 4.0) * s, ea.length - k as f64 * s, s, [0.0; 2]);
            let rb = band(eb, k as f64 * s, (k as f64 + 4.0) * s, s, [0.0; 2]);
            if !ra.overlaps(&rb) {
                break;
            }
            k += 1;
            if (k as f64) * s > ea.length.min(eb.length) {
                return Err(Gl2dError::Geometry(format!(
                    "square side {s} too large for the angle between edges {a} and {b}"
                )));
            }
        }
        k_plus[a] = k;
        k_minus[b] = k;
    }

    let mut trims = Vec::with_capacity(ne);
    let mut counts = Vec::with_capacity(ne);
    let mut centers = Vec::with_capacity(ne);
    for (k, e) in set.edges.iter().enumerate() {
        let min_m = k_minus[k] as f64 * s;
        let min_p = k_plus[k] as f64 * s;
        let avail = e.length - min_m - min_p;
        let n = (avail / s * (1.0 + 1e-12)).floor();
        if n < 1.0 {
            return Err(Gl2dError::Geometry(format!(
                "edge {k} (length {}) too short for squares of side {s}",
                e.length
            )));
        }
        let lm = e.length - min_p - n * s;
        let lp = min_p;
        let z = zetas[e.component];
        let cs: Vec<Point> = (0..n as usize)
            .map(|j| {
                let u = lm + (j as f64 + 0.5) * s;
                [
                    e.c_minus[0] + e.tangent[0] * u + e.nu[0] * z,
                    e.c_minus[1] + e.tangent[1] * u + e.nu[1] * z,
                ]
            })
            .collect();
        trims.push((lm, lp));
        counts.push(n as usize);
        centers.push(cs);
    }

    // doubled bands of non-adjacent edges must be disjoint
    for a in 0..ne {
        for b in a + 1..ne {
            let adjacent = next_edge(set, a) == b || prev_edge(set, a) == b;
            let (ea, eb) = (&set.edges[a], &set.edges[b]);
            let ra = band(ea, trims[a].0, ea.length - trims[a].1, s, [0.0; 2]);
            for sh in SHIFTS {
                if adjacent && sh == [0.0, 0.0] {
                    continue;
                }
                let rb = band(eb, trims[b].0, eb.length - trims[b].1, s, sh);
                if ra.overlaps(&rb) {
                    return Err(Gl2dError::Geometry(format!(
                        "squares of side {s} on edges {a} and {b} overlap; reduce eps_n"
                    )));
                }
            }
        }
    }

    let mut dec = EdgeDecomposition {
        side: s,
        eps_n,
        eps0,
        trims,
        counts,
        centers,
        zetas: zetas.to_vec(),
        corner_constant: 0.0,
    };
    dec.corner_constant = corner_area(set, &dec, 200) / (eps_n * eps_n);
    Ok(dec)
}

/// Area of `T \ squares`, sampled on an `m x m` midpoint grid in a box around
/// every vertex (the only place the squares leave gaps).
pub fn corner_area(set: &PolyhedralSet, dec: &EdgeDecomposition, m: usize) -> f64 {
    let s = dec.side;
    set.edges
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let kmax = (dec.trims[k].0 / s).ceil() + 1.0;
            let r = (kmax + 1.0) * s;
            let v = e.c_minus;
            let dx = 2.0 * r / m as f64;
            let mut cnt = 0usize;
            for a in 0..m {
                for b in 0..m {
                    let x = [v[0] - r + (a as f64 + 0.5) * dx, v[1] - r + (b as f64 + 0.5) * dx];
                    // each point counted only by its nearest vertex
                    let nearest = set
                        .edges
                        .iter()
                        .enumerate()
                        .map(|(q, f)| (torus_dist(x, f.c_minus), q))
                        .min_by(|p, q| p.0.total_cmp(&q.0))
                        .map(|p| p.1)
                        .unwrap_or(k);
                    if nearest == k && classify(x, set, dec) == Region::Corner {
                        cnt += 1;
                    }
                }
            }
            cnt as f64 * dx * dx
        })
        .sum()
}

fn torus_dist(a: Point, b: Point) -> f64 {
    let mut d = sub(a, b);
    d[0] -= d[0].round();
    d[1] -= d[1].round();
    dot(d, d).sqrt()
}

/// A square slot of an edge that a point could fall in for some offset
/// `|zeta| <= s/2`: tangential coordinate past the `c_minus` trim and raw
/// normal coordinate, both in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareCandidate {
    pub edge: usize,
    pub u: f64,
    pub v: f64,
}

/// All edges whose squares may contain `x` for some admissible offset.
pub fn square_candidates(x: Point, set: &PolyhedralSet, dec: &EdgeDecomposition) -> Vec<SquareCandidate> {
    let s = dec.side;
    let p = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
    let mut out = Vec::new();
    for (k, e) in set.edges.iter().enumerate() {
        for sh in SHIFTS {
            let q = sub([p[0] + sh[0], p[1] + sh[1]], e.c_minus);
            let v = dot(q, e.nu);
            if v.abs() >= s {
                continue;
            }
            let u = dot(q, e.tangent) - dec.trims[k].0;
            if u <= 0.0 || u >= dec.counts[k] as f64 * s {
                continue;
            }
            out.push(SquareCandidate { edge: k, u, v });
        }
    }
    out
}

impl EdgeDecomposition {
    /// Same trims and counts with new offsets.
    pub fn with_zetas(&self, set: &PolyhedralSet, zetas: &[f64]) -> Result<Self> {
        check_zetas(set, self.side, zetas)?;
        let mut d = self.clone();
        for (k, e) in set.edges.iter().enumerate() {
            let dz = zetas[e.component] - self.zetas[e.component];
            for c in d.centers[k].iter_mut() {
                c[0] += e.nu[0] * dz;
                c[1] += e.nu[1] * dz;
            }
        }
        d.zetas = zetas.to_vec();
        Ok(d)
    }

    /// Square among `cands` containing the point at the current offsets, with
    /// its index and block coordinates.
    pub fn locate(&self, set: &PolyhedralSet, cands: &[SquareCandidate]) -> Option<(usize, usize, Point)> {
        let s = self.side;
        for c in cands {
            let v = c.v - self.zetas[set.edges[c.edge].component];
            if v.abs() >= 0.5 * s {
                continue;
            }
            let j = ((c.u / s).floor() as usize).min(self.counts[c.edge] - 1);
            let du = c.u - (j as f64 + 0.5) * s;
            // block coordinates: normal first, then rot90(nu) = -tangent
            return Some((c.edge, j, [v / s, -du / s]));
        }
        None
    }
}

/// Square containing `x`, if any.
pub fn find_square(x: Point, set: &PolyhedralSet, dec: &EdgeDecomposition) -> Option<(usize, usize, Point)> {
    dec.locate(set, &square_candidates(x, set, dec))
}

pub fn classify(x: Point, set: &PolyhedralSet, dec: &EdgeDecomposition) -> Region {
    if let Some((edge, j, local)) = find_square(x, set, dec) {
        return Region::Square { edge, j, local };
    }
    let (sd, e) = set.signed_distance_edge(x);
    let z = dec.zetas[set.edges[e].component];
    let half = 0.5 * dec.side;
    if sd >= z + half {
        Region::DeepInterior
    } else if sd <= z - half {
        Region::Outside
    } else {
        Region::Corner
    }
}
