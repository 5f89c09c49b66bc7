//! Conforming triangulations of polygonal domains and their edge skeleton.
//!
//! Local edge `l` of a triangle joins local vertices `l` and `(l + 1) % 3`.
//! Edges are stored once with canonical orientation (smaller vertex id first);
//! each adjacent triangle records whether its local traversal agrees with it.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Interior,
    Boundary,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Interior => "interior",
            EdgeKind::Boundary => "boundary",
        }
    }
}

/// One triangle's view of an edge.
#[derive(Clone, Debug)]
pub struct EdgeSide {
    pub triangle: usize,
    pub local_edge: usize,
    /// `+1` when the triangle traverses the edge in canonical direction.
    pub sign: i8,
    /// Unit normal pointing out of `triangle`.
    pub normal: Point,
}

#[derive(Clone, Debug)]
pub struct EdgeRecord {
    /// Canonical endpoints, `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    pub kind: EdgeKind,
    pub sides: Vec<EdgeSide>,
    pub length: f64,
}

/// Immutable triangulation with classified skeleton and a point locator.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<EdgeRecord>,
    triangle_edges: Vec<[usize; 3]>,
    level: Option<u32>,
    h_global: f64,
    locator: Locator,
}

impl Mesh {
    /// Builds a mesh from a conforming triangle list, validating every invariant:
    /// counterclockwise positive-area triangles, at most two triangles per edge,
    /// every vertex referenced, and `V - E + T = 1`.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::build(vertices, triangles, None)
    }

    fn build(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, level: Option<u32>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Structural("mesh has no triangles".into()));
        }
        let mut used = vec![false; vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::Structural(format!(
                        "triangle {t} references missing vertex {v}"
                    )));
                }
                used[v] = true;
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area.is_nan() || area <= 0.0 {
                return Err(Error::Structural(format!(
                    "triangle {t} has nonpositive signed area {area:e} (vertices must be counterclockwise)"
                )));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Structural(format!(
                "vertex {v} is not used by any triangle"
            )));
        }

        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<EdgeRecord> = Vec::with_capacity(triangles.len() * 2);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut ids = [0usize; 3];
            for l in 0..3 {
                let (a, b) = (tri[l], tri[(l + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                let (pa, pb) = (vertices[a], vertices[b]);
                let d = [pb[0] - pa[0], pb[1] - pa[1]];
                let len = d[0].hypot(d[1]);
                let side = EdgeSide {
                    triangle: t,
                    local_edge: l,
                    sign: if a < b { 1 } else { -1 },
                    normal: [d[1] / len, -d[0] / len],
                };
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(EdgeRecord {
                        vertices: key,
                        kind: EdgeKind::Boundary,
                        sides: Vec::with_capacity(2),
                        length: len,
                    });
                    edges.len() - 1
                });
                let rec = &mut edges[id];
                if rec.sides.len() == 2 {
                    return Err(Error::Structural(format!(
                        "edge ({}, {}) is shared by more than two triangles",
                        key[0], key[1]
                    )));
                }
                if let Some(first) = rec.sides.first() {
                    if first.sign == side.sign {
                        return Err(Error::Structural(format!(
                            "triangles {} and {t} traverse edge ({}, {}) in the same direction",
                            first.triangle, key[0], key[1]
                        )));
                    }
                }
                rec.sides.push(side);
                rec.kind = if rec.sides.len() == 2 {
                    EdgeKind::Interior
                } else {
                    EdgeKind::Boundary
                };
                ids[l] = id;
            }
            triangle_edges.push(ids);
        }

        let euler = vertices.len() as i64 - edges.len() as i64 + triangles.len() as i64;
        if euler != 1 {
            return Err(Error::Structural(format!(
                "V - E + T = {euler}; the domain must be a simply connected polygon"
            )));
        }

        let h_global = triangles
            .iter()
            .map(|tri| {
                let p = tri.map(|v| vertices[v]);
                (0..3)
                    .map(|l| dist(p[l], p[(l + 1) % 3]))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let locator = Locator::new(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            edges,
            triangle_edges,
            level,
            h_global,
            locator,
        })
    }

    /// Uniform triangulation of the unit square: a `2^level x 2^level` grid of
    /// cells, each cut along its lower-left to upper-right diagonal.
    ///
    /// Triangle `2 * (j * n + i)` is the lower triangle of cell `(i, j)`, the
    /// next id its upper triangle.
    pub fn build_uniform_square(level: u32) -> Self {
        let n = 1usize << level;
        let step = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * step, j as f64 * step]);
            }
        }
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) =
                    (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::build(vertices, triangles, Some(level)).expect("uniform square mesh is valid")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    /// Edge ids of the three local edges of triangle `t`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Refinement level for meshes from [`Mesh::build_uniform_square`].
    pub fn level(&self) -> Option<u32> {
        self.level
    }

    /// Largest element diameter.
    pub fn h_global(&self) -> f64 {
        self.h_global
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn edge_points(&self, e: usize) -> [Point; 2] {
        self.edges[e].vertices.map(|v| self.vertices[v])
    }

    /// Partition of edge ids into `(interior, boundary)`.
    pub fn classify_edges(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        classify_edges(&self.edges)
    }

    /// Containing triangle and barycentric coordinates of `x`.
    ///
    /// Points on shared element boundaries resolve to the lowest triangle id.
    pub fn locate_point(&self, x: Point) -> Result<(usize, [f64; 3])> {
        self.locator
            .locate(x, &self.vertices, &self.triangles)
            .ok_or_else(|| {
                Error::Domain(format!("point ({}, {}) lies outside the mesh", x[0], x[1]))
            })
    }

    /// Writes `vertex x y`, `triangle i j k` and `edge i j kind` records.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.vertices {
            writeln!(out, "vertex {} {}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "triangle {} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.edges {
            writeln!(
                out,
                "edge {} {} {}",
                e.vertices[0],
                e.vertices[1],
                e.kind.as_str()
            )?;
        }
        Ok(())
    }
}

/// Partition edges by adjacency count, rejecting records with 0 or more than 2 sides.
pub fn classify_edges(edges: &[EdgeRecord]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for (id, e) in edges.iter().enumerate() {
        match e.sides.len() {
            1 => boundary.push(id),
            2 => interior.push(id),
            n => {
                return Err(Error::Structural(format!(
                    "edge {id} ({}, {}) has {n} adjacent triangles",
                    e.vertices[0], e.vertices[1]
                )))
            }
        }
    }
    Ok((interior, boundary))
}

/// Parent triangle (on level `fine_level - 1`) of triangle `t` of the uniform
/// square mesh at `fine_level`.
pub fn uniform_square_parent(fine_level: u32, t: usize) -> usize {
    assert!(fine_level >= 1, "level 0 has no parent");
    let n = 1usize << fine_level;
    let cell = t / 2;
    let upper = t % 2 == 1;
    let (i, j) = (cell % n, cell / n);
    let (a, b) = (i % 2, j % 2);
    let in_lower = if upper { b < a } else { b <= a };
    let nc = n / 2;
    2 * ((j / 2) * nc + i / 2) + usize::from(!in_lower)
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Barycentric coordinates of `x` with respect to triangle `(a, b, c)`.
pub fn barycentric(a: Point, b: Point, c: Point, x: Point) -> [f64; 3] {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let (dx, dy) = (x[0] - a[0], x[1] - a[1]);
    let l1 = (dx * (c[1] - a[1]) - (c[0] - a[0]) * dy) / det;
    let l2 = ((b[0] - a[0]) * dy - dx * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

const INSIDE_TOL: f64 = 1e-12;

/// Uniform bucket grid over the bounding box; each bucket lists, in ascending
/// order, the triangles whose bounding box touches it.
#[derive(Clone, Debug)]
struct Locator {
    origin: Point,
    cell: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    fn new(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let (nx, ny) = (side, side);
        let cell = [
            ((hi[0] - lo[0]) / nx as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / ny as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); nx * ny];
        let slack = 1e-10 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        for (t, tri) in triangles.iter().enumerate() {
            let p = tri.map(|v| vertices[v]);
            let bmin = [
                p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min) - slack,
                p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min) - slack,
            ];
            let bmax = [
                p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max) + slack,
                p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max) + slack,
            ];
            let (i0, j0) = Self::clamp_index(lo, cell, nx, ny, bmin);
            let (i1, j1) = Self::clamp_index(lo, cell, nx, ny, bmax);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t as u32);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn clamp_index(lo: Point, cell: Point, nx: usize, ny: usize, x: Point) -> (usize, usize) {
        let fi = ((x[0] - lo[0]) / cell[0]).floor();
        let fj = ((x[1] - lo[1]) / cell[1]).floor();
        (
            fi.clamp(0.0, (nx - 1) as f64) as usize,
            fj.clamp(0.0, (ny - 1) as f64) as usize,
        )
    }

    fn locate(
        &self,
        x: Point,
        vertices: &[Point],
        triangles: &[[usize; 3]],
    ) -> Option<(usize, [f64; 3])> {
        if !(x[0].is_finite() && x[1].is_finite()) {
            return None;
        }
        let (i, j) = Self::clamp_index(self.origin, self.cell, self.nx, self.ny, x);
        for &t in &self.buckets[j * self.nx + i] {
            let t = t as usize;
            let [a, b, c] = triangles[t].map(|v| vertices[v]);
            let bary = barycentric(a, b, c, x);
            if bary.iter().all(|&l| l >= -INSIDE_TOL) {
                let mut clamped = bary.map(|l| l.clamp(0.0, 1.0));
                let s: f64 = clamped.iter().sum();
                clamped.iter_mut().for_each(|l| *l /= s);
                return Some((t, clamped));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_counts() {
        let m = Mesh::build_uniform_square(0);
        assert_eq!(
            (m.num_vertices(), m.num_triangles(), m.num_edges()),
            (4, 2, 5)
        );
        let (int, bnd) = m.classify_edges().unwrap();
        assert_eq!(int.len(), 1);
        assert_eq!(bnd.len(), 4);
        assert_eq!(m.edges()[int[0]].vertices, [0, 3]);
    }

    #[test]
    fn level_one_counts() {
        let m = Mesh::build_uniform_square(1);
        assert_eq!(
            (m.num_vertices(), m.num_triangles(), m.num_edges()),
            (9, 8, 16)
        );
        let (int, bnd) = m.classify_edges().unwrap();
        assert_eq!((int.len(), bnd.len()), (8, 8));
    }

    #[test]
    fn closed_form_counts_match_enumeration() {
        for n in 0..=5u32 {
            let m = Mesh::build_uniform_square(n);
            let p = 1usize << n;
            assert_eq!(m.num_triangles(), 2 * p * p);
            assert_eq!(m.num_edges(), 3 * p * p + 2 * p);
            let (_, bnd) = m.classify_edges().unwrap();
            assert_eq!(bnd.len(), 4 * p);
            assert!((m.h_global() - 2f64.sqrt() / p as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn interior_normals_antiparallel_and_lengths_match() {
        let m = Mesh::build_uniform_square(3);
        for (id, e) in m.edges().iter().enumerate() {
            let [pa, pb] = m.edge_points(id);
            assert!((e.length - dist(pa, pb)).abs() < 1e-15);
            if e.kind == EdgeKind::Interior {
                let (n0, n1) = (e.sides[0].normal, e.sides[1].normal);
                assert!((n0[0] + n1[0]).abs() < 1e-15 && (n0[1] + n1[1]).abs() < 1e-15);
                assert_eq!(e.sides[0].sign, -e.sides[1].sign);
            }
        }
    }

    #[test]
    fn outward_normals_point_away_from_centroid() {
        let m = Mesh::build_uniform_square(2);
        for e in m.edges() {
            let [pa, pb] = [m.vertices()[e.vertices[0]], m.vertices()[e.vertices[1]]];
            let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            for s in &e.sides {
                let [a, b, c] = m.triangle_points(s.triangle);
                let cen = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                let d = (mid[0] - cen[0]) * s.normal[0] + (mid[1] - cen[1]) * s.normal[1];
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn area_sums_to_one() {
        for n in 0..=5 {
            let m = Mesh::build_uniform_square(n);
            let total: f64 = (0..m.num_triangles()).map(|t| m.triangle_area(t)).sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn parent_matches_centroid_location() {
        for n in 1..=5 {
            let fine = Mesh::build_uniform_square(n);
            let coarse = Mesh::build_uniform_square(n - 1);
            for t in 0..fine.num_triangles() {
                let [a, b, c] = fine.triangle_points(t);
                let cen = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                let containing: Vec<usize> = (0..coarse.num_triangles())
                    .filter(|&ct| {
                        let [p, q, r] = coarse.triangle_points(ct);
                        barycentric(p, q, r, cen).iter().all(|&l| l > 0.0)
                    })
                    .collect();
                assert_eq!(containing, vec![uniform_square_parent(n, t)]);
                assert_eq!(
                    coarse.locate_point(cen).unwrap().0,
                    uniform_square_parent(n, t)
                );
            }
        }
    }

    #[test]
    fn locate_lower_triangle_and_vertices() {
        let m = Mesh::build_uniform_square(0);
        let (t, bary) = m.locate_point([0.25, 0.25]).unwrap();
        assert_eq!(t, 0);
        assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let m = Mesh::build_uniform_square(2);
        for (v, &p) in m.vertices().iter().enumerate() {
            let (t, bary) = m.locate_point(p).unwrap();
            let local = m.triangles()[t].iter().position(|&w| w == v).unwrap();
            assert!((bary[local] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_point_resolves_to_lowest_id() {
        let m = Mesh::build_uniform_square(0);
        assert_eq!(m.locate_point([0.5, 0.5]).unwrap().0, 0);
    }

    #[test]
    fn outside_point_is_domain_error() {
        let m = Mesh::build_uniform_square(2);
        assert!(matches!(m.locate_point([1.5, 0.2]), Err(Error::Domain(_))));
        assert!(matches!(
            m.locate_point([-1e-6, 0.2]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constructor_rejects_clockwise_and_unused() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Mesh::new(v.clone(), vec![[0, 2, 1]]).is_err());
        let mut v4 = v.clone();
        v4.push([5.0, 5.0]);
        assert!(Mesh::new(v4, vec![[0, 1, 2]]).is_err());
        assert!(Mesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn classify_rejects_malformed_adjacency() {
        let bad = vec![EdgeRecord {
            vertices: [0, 1],
            kind: EdgeKind::Boundary,
            sides: vec![],
            length: 1.0,
        }];
        assert!(matches!(classify_edges(&bad), Err(Error::Structural(_))));
    }

    #[test]
    fn text_dump_has_one_record_per_entity() {
        let m = Mesh::build_uniform_square(1);
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().filter(|l| l.starts_with("vertex ")).count(), 9);
        assert_eq!(s.lines().filter(|l| l.starts_with("triangle ")).count(), 8);
        assert_eq!(s.lines().filter(|l| l.starts_with("edge ")).count(), 16);
        assert!(s.contains("edge 0 4 interior"));
    }
}
