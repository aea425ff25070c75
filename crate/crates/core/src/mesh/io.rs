//! Line-oriented mesh text format:
//!
//! ```text
//! vertices N
//! x y            (N lines)
//! triangles M
//! i j k r        (M lines, r = local refinement edge joining vertices r and r+1 mod 3)
//! boundary B
//! i j            (B lines)
//! ```
//!
//! Indices are 0-based. Coordinates are written with round-trip precision.

use std::fmt::Write as _;

use super::{Mesh, Point};
use crate::error::{Error, Result};

impl Mesh {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "vertices {}", self.num_vertices()).unwrap();
        for [x, y] in &self.vertices {
            writeln!(out, "{x:?} {y:?}").unwrap();
        }
        writeln!(out, "triangles {}", self.num_triangles()).unwrap();
        // stored as [newest, b, c]: the refinement edge (b, c) is local edge 1
        for [a, b, c] in &self.triangles {
            writeln!(out, "{a} {b} {c} 1").unwrap();
        }
        writeln!(out, "boundary {}", self.boundary.len()).unwrap();
        for [a, b] in &self.boundary {
            writeln!(out, "{a} {b}").unwrap();
        }
        out
    }

    /// Parses the text format. The result is treated as an initial mesh:
    /// levels and provenance restart at zero. The boundary section must match
    /// the edges incident to a single triangle.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let mut next_fields = |expect: usize| -> Result<(usize, Vec<&str>)> {
            let (line, l) = lines.next().ok_or(Error::MeshParse { line: 0, msg: "unexpected end of input".into() })?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != expect {
                return Err(Error::MeshParse { line, msg: format!("expected {expect} fields, found {}", fields.len()) });
            }
            Ok((line, fields))
        };
        let count = |line: usize, fields: &[&str], name: &str| -> Result<usize> {
            if fields[0] != name {
                return Err(Error::MeshParse { line, msg: format!("expected `{name} <count>`") });
            }
            fields[1].parse().map_err(|_| Error::MeshParse { line, msg: "bad count".into() })
        };
        fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::MeshParse { line, msg: format!("cannot parse `{s}`") })
        }

        let (line, f) = next_fields(2)?;
        let nv = count(line, &f, "vertices")?;
        let mut vertices: Vec<Point> = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, f) = next_fields(2)?;
            vertices.push([num(line, f[0])?, num(line, f[1])?]);
        }
        let (line, f) = next_fields(2)?;
        let nt = count(line, &f, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, f) = next_fields(4)?;
            triangles.push(([num(line, f[0])?, num(line, f[1])?, num(line, f[2])?], num::<u8>(line, f[3])?));
        }
        let (line, f) = next_fields(2)?;
        let nb = count(line, &f, "boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (line, f) = next_fields(2)?;
            let (a, b): (usize, usize) = (num(line, f[0])?, num(line, f[1])?);
            boundary.push(if a < b { [a, b] } else { [b, a] });
        }

        let mesh = Mesh::from_labeled(vertices, &triangles)?;
        let mut expected: Vec<[usize; 2]> = mesh.boundary_edges().to_vec();
        expected.sort_unstable();
        boundary.sort_unstable();
        if expected != boundary {
            return Err(Error::InvalidMesh("boundary section does not match single-incidence edges".into()));
        }
        Ok(mesh)
    }
}
