use super::{Mesh, Point};
use crate::error::{Error, Result};

// Coarse triangulations built from axis-aligned unit squares, each split by a
// diagonal. Diagonals run through the origin where the domain has its
// reentrant corner, so the corner is a vertex of every adjacent triangle.
//
// square:  (0,1)---(1,1)      lshape: 3 unit squares of (-1,1)^2 without
//            | \  |                   the lower-right quadrant
//            |  \ |           zshape: 3 unit squares plus the half square
//          (0,0)---(1,0)              (-1,-1),(0,-1),(0,0)

const SQUARE_VERTICES: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
const SQUARE_TRIANGLES: [[usize; 3]; 2] = [[0, 1, 2], [0, 2, 3]];

const LSHAPE_VERTICES: [Point; 8] = [
    [-1.0, -1.0],
    [0.0, -1.0],
    [-1.0, 0.0],
    [0.0, 0.0],
    [1.0, 0.0],
    [-1.0, 1.0],
    [0.0, 1.0],
    [1.0, 1.0],
];
const LSHAPE_TRIANGLES: [[usize; 3]; 6] = [[0, 1, 3], [0, 3, 2], [2, 3, 5], [3, 6, 5], [3, 4, 7], [3, 7, 6]];

const ZSHAPE_VERTICES: [Point; 9] = [
    [-1.0, -1.0],
    [0.0, -1.0],
    [1.0, -1.0],
    [-1.0, 0.0],
    [0.0, 0.0],
    [1.0, 0.0],
    [-1.0, 1.0],
    [0.0, 1.0],
    [1.0, 1.0],
];
const ZSHAPE_TRIANGLES: [[usize; 3]; 7] =
    [[0, 1, 4], [1, 2, 4], [2, 5, 4], [3, 4, 6], [4, 7, 6], [4, 5, 8], [4, 8, 7]];

/// Initial mesh of a named domain: `square` (unit square), `lshape`
/// (`(-1,1)^2` minus `[0,1]x[-1,0]`) or `zshape` (`(-1,1)^2` minus the
/// triangle `(-1,0),(0,0),(-1,-1)`).
pub fn make_domain(name: &str) -> Result<Mesh> {
    match name {
        "square" => Mesh::from_triangles(SQUARE_VERTICES.to_vec(), &SQUARE_TRIANGLES),
        "lshape" => Mesh::from_triangles(LSHAPE_VERTICES.to_vec(), &LSHAPE_TRIANGLES),
        "zshape" => Mesh::from_triangles(ZSHAPE_VERTICES.to_vec(), &ZSHAPE_TRIANGLES),
        other => Err(Error::UnknownDomain(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_areas() {
        let cases = [("square", 1.0, 2), ("lshape", 3.0, 6), ("zshape", 3.5, 7)];
        for (name, area, nt) in cases {
            let mesh = make_domain(name).unwrap();
            assert_eq!(mesh.num_triangles(), nt, "{name}");
            assert!((mesh.total_area() - area).abs() < 1e-14, "{name}");
            mesh.check_conformity().unwrap();
        }
    }

    #[test]
    fn unknown_domain() {
        assert!(matches!(make_domain("annulus"), Err(Error::UnknownDomain(_))));
    }

    #[test]
    fn square_diagonal_is_refinement_edge() {
        let mesh = make_domain("square").unwrap();
        for t in 0..2 {
            let mut e = mesh.refinement_edge(t);
            e.sort();
            assert_eq!(e, [0, 2]);
        }
    }

    #[test]
    fn lshape_excludes_lower_right_quadrant() {
        let mesh = make_domain("lshape").unwrap();
        for t in 0..mesh.num_triangles() {
            let c = mesh.corners(t);
            let centroid = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
            assert!(!(centroid[0] > 0.0 && centroid[1] < 0.0));
        }
    }
}
