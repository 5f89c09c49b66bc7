use edg_core::mesh::{EdgeKind, Mesh};
use edg_core::spaces::{build_spaces, TraceVariant};
use proptest::prelude::*;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut j = i;
        while self.0[j] != r {
            let next = self.0[j];
            self.0[j] = r;
            j = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }

    fn classes(&mut self) -> usize {
        (0..self.0.len()).filter(|&i| self.find(i) == i).count()
    }
}

/// Trace dimension by gluing per-edge node copies at shared vertices.
fn glued_trace_dim(mesh: &Mesh, kind: EdgeKind, k: usize, continuous: bool) -> usize {
    let per = k + 2;
    let edges: Vec<usize> = (0..mesh.num_edges())
        .filter(|&e| mesh.edges()[e].kind == kind)
        .collect();
    let mut uf = UnionFind::new(edges.len() * per);
    if continuous {
        let mut first_at_vertex = vec![None; mesh.num_vertices()];
        for (slot, &e) in edges.iter().enumerate() {
            let [a, b] = mesh.edges()[e].vertices;
            for (v, node) in [(a, 0), (b, per - 1)] {
                let id = slot * per + node;
                match first_at_vertex[v] {
                    None => first_at_vertex[v] = Some(id),
                    Some(other) => uf.union(id, other),
                }
            }
        }
    }
    uf.classes()
}

#[test]
fn trace_dims_match_glued_node_count() {
    for level in 0..=4 {
        let mesh = Mesh::build_uniform_square(level);
        for variant in TraceVariant::ALL {
            for k in 0..=2 {
                let s = build_spaces(&mesh, variant, k).unwrap();
                let (ci, cb) = match variant {
                    TraceVariant::Edg => (true, true),
                    TraceVariant::Iedg => (true, false),
                    TraceVariant::Hdg => (false, false),
                };
                assert_eq!(
                    s.interior_trace.dim(),
                    glued_trace_dim(&mesh, EdgeKind::Interior, k, ci)
                );
                assert_eq!(
                    s.control.dim(),
                    glued_trace_dim(&mesh, EdgeKind::Boundary, k, cb)
                );
            }
        }
    }
}

#[test]
fn element_space_dims() {
    let mesh = Mesh::build_uniform_square(3);
    for k in 0..=2 {
        let s = build_spaces(&mesh, TraceVariant::Hdg, k).unwrap();
        assert_eq!(s.flux.dim(), mesh.num_triangles() * (k + 1) * (k + 2));
        assert_eq!(s.scalar.dim(), mesh.num_triangles() * (k + 2) * (k + 3) / 2);
    }
}

#[test]
fn shared_vertex_dofs_are_consistent() {
    let mesh = Mesh::build_uniform_square(3);
    let s = build_spaces(&mesh, TraceVariant::Edg, 1).unwrap();
    let mut at_vertex = vec![None; mesh.num_vertices()];
    for (e, rec) in mesh.edges().iter().enumerate() {
        if rec.kind != EdgeKind::Interior {
            continue;
        }
        let d = s.interior_trace.dofs(e);
        for (v, dof) in [(rec.vertices[0], d[0]), (rec.vertices[1], d[d.len() - 1])] {
            match at_vertex[v] {
                None => at_vertex[v] = Some(dof),
                Some(prev) => assert_eq!(prev, dof),
            }
        }
    }
}

proptest! {
    #[test]
    fn variant_ordering(level in 1u32..=5, k in 0usize..=1) {
        let mesh = Mesh::build_uniform_square(level);
        let c = |v| build_spaces(&mesh, v, k).unwrap().report().condensed;
        let (e, i, h) = (c(TraceVariant::Edg), c(TraceVariant::Iedg), c(TraceVariant::Hdg));
        prop_assert!(e < i && i <= h, "{e} {i} {h}");
    }
}
