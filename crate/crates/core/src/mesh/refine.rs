use super::{Ancestry, MarkedSet, Mesh, NONE};

impl Mesh {
    /// Newest-vertex bisection of every marked triangle followed by the
    /// closure that restores conformity.
    ///
    /// A marked triangle has its refinement edge bisected. Closure then marks
    /// the refinement edge of every triangle that owns a marked edge, until no
    /// such triangle is left. Each triangle is finally split according to
    /// its marked edges (1, 2 or 3 of them, the refinement edge always among
    /// them), which produces 2, 3 or 4 children. All new vertices are
    /// midpoints of edges of `self`.
    pub fn refine(&self, marked: &MarkedSet) -> Mesh {
        let nt = self.num_triangles();
        debug_assert!(marked.indices().iter().all(|&t| t < nt));

        let mut edge_marked = vec![false; self.edges.len()];
        let mut stack = Vec::new();
        for &t in marked.indices() {
            let e = self.triangle_edges[t][0];
            if !edge_marked[e] {
                edge_marked[e] = true;
                stack.push(e);
            }
        }
        while let Some(e) = stack.pop() {
            let adj = self.edge_triangles[e];
            for t in adj.into_iter().filter(|&t| t != NONE) {
                let r = self.triangle_edges[t][0];
                if !edge_marked[r] {
                    edge_marked[r] = true;
                    stack.push(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut vertex_parents = self.vertex_parents.clone();
        let mut midpoint = vec![NONE; self.edges.len()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if edge_marked[e] {
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                midpoint[e] = vertices.len();
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                vertex_parents.push(Some([a, b]));
            }
        }

        let mut triangles = Vec::with_capacity(nt + 2 * marked.len());
        let mut levels = Vec::with_capacity(triangles.capacity());
        let mut ancestry = Vec::with_capacity(triangles.capacity());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = self.triangle_edges[t];
            let level = self.levels[t];
            if !edge_marked[e0] {
                triangles.push([a, b, c]);
                levels.push(level);
                ancestry.push(Ancestry::Kept(t));
                continue;
            }
            let m = midpoint[e0];
            let mut push = |tri: [usize; 3], lvl: u32| {
                triangles.push(tri);
                levels.push(lvl);
                ancestry.push(Ancestry::Child(t));
            };
            // child (m, a, b) with refinement edge (a, b) = local edge 2
            if edge_marked[e2] {
                let m2 = midpoint[e2];
                push([m2, m, a], level + 2);
                push([m2, b, m], level + 2);
            } else {
                push([m, a, b], level + 1);
            }
            // child (m, c, a) with refinement edge (c, a) = local edge 1
            if edge_marked[e1] {
                let m1 = midpoint[e1];
                push([m1, m, c], level + 2);
                push([m1, a, m], level + 2);
            } else {
                push([m, c, a], level + 1);
            }
        }

        Mesh::assemble(
            vertices,
            triangles,
            levels,
            ancestry,
            vertex_parents,
            self.num_vertices(),
            self.generation + 1,
        )
        .expect("bisection of a conforming mesh is conforming")
    }

    /// Refinement with every triangle marked.
    pub fn uniform_refine(&self) -> Mesh {
        self.refine(&MarkedSet::all(self.num_triangles()))
    }
}

#[cfg(test)]
mod tests {
    use crate::mesh::make_domain;

    use super::*;

    fn reference_triangle() -> Mesh {
        Mesh::from_triangles(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2]]).unwrap()
    }

    #[test]
    fn empty_marking_is_identity() {
        let mesh = make_domain("lshape").unwrap();
        let fine = mesh.refine(&MarkedSet::empty());
        assert_eq!(fine.triangles(), mesh.triangles());
        assert_eq!(fine.vertices(), mesh.vertices());
    }

    #[test]
    fn square_one_marked_closes_neighbor() {
        let mesh = make_domain("square").unwrap();
        let fine = mesh.refine(&MarkedSet::new(vec![0], 2).unwrap());
        assert_eq!(fine.num_triangles(), 4);
        assert_eq!(fine.num_vertices(), 5);
        assert_eq!(fine.vertices()[4], [0.5, 0.5]);
        fine.check_conformity().unwrap();
    }

    #[test]
    fn single_triangle_bisection() {
        let fine = reference_triangle().refine(&MarkedSet::all(1));
        assert_eq!(fine.num_triangles(), 2);
        assert_eq!(fine.levels(), &[1, 1]);
        assert!(fine.ancestry().iter().all(|a| *a == Ancestry::Child(0)));
        assert_eq!(fine.vertex_parents()[3], Some([1, 2]));
    }

    #[test]
    fn uniform_refinement_counts() {
        let square = make_domain("square").unwrap();
        assert_eq!(square.uniform_refine().num_triangles(), 4);
        let tri = reference_triangle();
        assert_eq!(tri.uniform_refine().uniform_refine().num_triangles(), 4);
        assert_ne!(tri.uniform_refine().num_triangles(), tri.num_triangles());
    }

    #[test]
    fn children_areas_sum_to_parent() {
        let coarse = make_domain("zshape").unwrap();
        let fine = coarse.refine(&MarkedSet::new(vec![0, 4], 7).unwrap());
        let mut sums = vec![0.0; coarse.num_triangles()];
        for t in 0..fine.num_triangles() {
            sums[fine.ancestry()[t].parent().unwrap()] += fine.area(t);
        }
        for (t, s) in sums.iter().enumerate() {
            assert!((s - coarse.area(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn level_is_parent_level_plus_bisections() {
        let coarse = make_domain("lshape").unwrap().uniform_refine();
        let fine = coarse.refine(&MarkedSet::new(vec![1], coarse.num_triangles()).unwrap());
        for t in 0..fine.num_triangles() {
            match fine.ancestry()[t] {
                Ancestry::Kept(p) => assert_eq!(fine.levels()[t], coarse.levels()[p]),
                Ancestry::Child(p) => {
                    let d = fine.levels()[t] - coarse.levels()[p];
                    assert!(d == 1 || d == 2);
                    let ratio = fine.area(t) / coarse.area(p);
                    assert!((ratio - 0.5f64.powi(d as i32)).abs() < 1e-14);
                }
                Ancestry::Initial => unreachable!(),
            }
        }
    }
}
