//! Conforming triangulations with newest-vertex-bisection refinement.
//!
//! Every triangle is stored as `[newest, b, c]` in counter-clockwise order, so
//! its refinement edge is always `(b, c)`. Local edge `i` is the edge opposite
//! local vertex `i`; edge `0` is therefore the refinement edge.

mod domains;
mod io;
mod refine;

use std::collections::HashMap;

pub use domains::make_domain;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub(crate) const NONE: usize = usize::MAX;

/// Where a triangle came from relative to the previous mesh in its refinement
/// chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ancestry {
    /// Part of the initial triangulation.
    Initial,
    /// Unchanged copy of the given triangle of the previous mesh.
    Kept(usize),
    /// Produced by bisecting the given triangle of the previous mesh.
    Child(usize),
}

impl Ancestry {
    pub fn parent(self) -> Option<usize> {
        match self {
            Ancestry::Initial => None,
            Ancestry::Kept(p) | Ancestry::Child(p) => Some(p),
        }
    }

    pub fn is_new(self) -> bool {
        matches!(self, Ancestry::Child(_))
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    levels: Vec<u32>,
    ancestry: Vec<Ancestry>,
    /// Edge bisected to create each vertex, `None` for vertices of the
    /// initial mesh.
    vertex_parents: Vec<Option<[usize; 2]>>,
    /// Number of vertices of the previous mesh (`vertices.len()` for an
    /// initial mesh): vertices with larger index were created by the last
    /// refinement.
    previous_vertex_count: usize,
    generation: usize,
    edges: Vec<[usize; 2]>,
    edge_triangles: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<[usize; 2]>,
}

/// Triangles selected for refinement. Sorted, without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkedSet {
    indices: Vec<usize>,
}

impl MarkedSet {
    pub fn new(mut indices: Vec<usize>, num_triangles: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= num_triangles) {
            return Err(Error::IndexOutOfRange { index: bad, len: num_triangles });
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all(num_triangles: usize) -> Self {
        Self { indices: (0..num_triangles).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.indices.binary_search(&t).is_ok()
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

impl Mesh {
    /// Builds an initial mesh, choosing each triangle's refinement edge as its
    /// longest edge (ties: the edge whose opposite vertex has the smallest
    /// index). Triangles may be given in either orientation.
    pub fn from_triangles(vertices: Vec<Point>, triangles: &[[usize; 3]]) -> Result<Self> {
        if let Some(v) = triangles.iter().flatten().find(|&&v| v >= vertices.len()) {
            return Err(Error::InvalidMesh(format!("vertex index {v} out of range")));
        }
        let labeled = triangles
            .iter()
            .map(|t| {
                let len = |i: usize| dist2(vertices[t[(i + 1) % 3]], vertices[t[(i + 2) % 3]]);
                let mut best = 0;
                for i in 1..3 {
                    let (li, lb) = (len(i), len(best));
                    if li > lb || (li == lb && t[i] < t[best]) {
                        best = i;
                    }
                }
                // refinement edge is opposite local vertex `best`; encode as the
                // edge joining local vertices best+1 and best+2.
                (*t, ((best + 1) % 3) as u8)
            })
            .collect::<Vec<_>>();
        Self::from_labeled(vertices, &labeled)
    }

    /// Builds an initial mesh from triangles with an explicit refinement edge:
    /// `r` selects the edge joining local vertices `r` and `r + 1 (mod 3)`.
    pub fn from_labeled(vertices: Vec<Point>, triangles: &[([usize; 3], u8)]) -> Result<Self> {
        let n = vertices.len();
        let mut tris = Vec::with_capacity(triangles.len());
        for (idx, &(t, r)) in triangles.iter().enumerate() {
            if r > 2 {
                return Err(Error::InvalidMesh(format!("triangle {idx}: refinement edge index {r} > 2")));
            }
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("triangle {idx}: vertex index out of range")));
            }
            let r = r as usize;
            let mut oriented = [t[(r + 2) % 3], t[r], t[(r + 1) % 3]];
            let area = signed_area(vertices[oriented[0]], vertices[oriented[1]], vertices[oriented[2]]);
            if area == 0.0 || !area.is_finite() {
                return Err(Error::InvalidMesh(format!("triangle {idx} is degenerate")));
            }
            if area < 0.0 {
                oriented.swap(1, 2);
            }
            tris.push(oriented);
        }
        let nt = tris.len();
        let mesh = Self::assemble(
            vertices,
            tris,
            vec![0; nt],
            vec![Ancestry::Initial; nt],
            vec![None; n],
            n,
            0,
        )?;
        mesh.check_conformity()?;
        Ok(mesh)
    }

    pub(crate) fn assemble(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        levels: Vec<u32>,
        ancestry: Vec<Ancestry>,
        vertex_parents: Vec<Option<[usize; 2]>>,
        previous_vertex_count: usize,
        generation: usize,
    ) -> Result<Self> {
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::with_capacity(triangles.len() * 3 / 2 + 2);
        let mut edge_triangles: Vec<[usize; 2]> = Vec::with_capacity(edges.capacity());
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_triangles.push([NONE, NONE]);
                    edges.len() - 1
                });
                let adj = &mut edge_triangles[e];
                if adj[0] == NONE {
                    adj[0] = t;
                } else if adj[1] == NONE {
                    adj[1] = t;
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) shared by more than two triangles",
                        key[0], key[1]
                    )));
                }
                *slot = e;
            }
            triangle_edges.push(local);
        }
        let boundary = edges
            .iter()
            .zip(&edge_triangles)
            .filter(|(_, adj)| adj[1] == NONE)
            .map(|(e, _)| *e)
            .collect();
        Ok(Self {
            vertices,
            triangles,
            levels,
            ancestry,
            vertex_parents,
            previous_vertex_count,
            generation,
            edges,
            edge_triangles,
            triangle_edges,
            boundary,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Bisections separating each triangle from its initial ancestor.
    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn ancestry(&self) -> &[Ancestry] {
        &self.ancestry
    }

    pub fn vertex_parents(&self) -> &[Option<[usize; 2]>] {
        &self.vertex_parents
    }

    pub fn previous_vertex_count(&self) -> usize {
        self.previous_vertex_count
    }

    /// Number of `refine` calls since the initial mesh.
    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Refinement edge of triangle `t` as a vertex pair.
    pub fn refinement_edge(&self, t: usize) -> [usize; 2] {
        let tri = self.triangles[t];
        [tri[1], tri[2]]
    }

    /// Unique edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Triangles adjacent to each edge; the second slot is `None` on the
    /// boundary.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        let [a, b] = self.edge_triangles[e];
        (a, (b != NONE).then_some(b))
    }

    /// Local edge `i` of each triangle (opposite local vertex `i`).
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Edges incident to exactly one triangle; all carry Dirichlet data.
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for &[a, b] in &self.boundary {
            flags[a] = true;
            flags[b] = true;
        }
        flags
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        dist2(a, b).max(dist2(b, c)).max(dist2(c, a)).sqrt()
    }

    /// Largest `diam(T)^2 / |T|` over all triangles.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.diameter(t).powi(2) / self.area(t))
            .fold(0.0, f64::max)
    }

    /// Audits orientation and conformity: positive areas, no edge shared by
    /// more than two triangles and no vertex in the interior of an edge.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check_conformity(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            let area = self.area(t);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area {area}")));
            }
        }
        // A hanging node splits an edge into pieces that each look like
        // boundary edges, so only boundary-edge endpoints need checking.
        let mut candidates: Vec<usize> = self.boundary.iter().flatten().copied().collect();
        candidates.sort_unstable();
        candidates.dedup();
        for &[a, b] in &self.boundary {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len2 = dist2(pa, pb);
            for &v in &candidates {
                if v == a || v == b {
                    continue;
                }
                let pv = self.vertices[v];
                let cross = (pb[0] - pa[0]) * (pv[1] - pa[1]) - (pb[1] - pa[1]) * (pv[0] - pa[0]);
                if cross.abs() > 1e-12 * len2 {
                    continue;
                }
                let s = ((pv[0] - pa[0]) * (pb[0] - pa[0]) + (pv[1] - pa[1]) * (pb[1] - pa[1])) / len2;
                if s > 1e-12 && s < 1.0 - 1e-12 {
                    return Err(Error::InvalidMesh(format!("hanging node {v} on edge ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    /// Vertex-to-vertex adjacency through mesh edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for &[a, b] in &self.edges {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        nbrs
    }
}
