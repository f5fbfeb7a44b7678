//! Plain-text grid format.
//!
//! ```text
//! NNODES NTRIA NQUAD
//! x y                      (NNODES lines, 17 significant digits)
//! i j k                    (NTRIA lines, 1-based node indices)
//! i j k l                  (NQUAD lines)
//! NBLOCKS
//! <condition> NSEG         (per block)
//! a b                      (NSEG lines, domain on the left of a -> b)
//! ```
//!
//! Blank lines and lines starting with `#` are skipped on read.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryCondition, BoundarySegment, Grid};
use crate::error::{Error, Result};

pub fn write_grid(grid: &Grid, path: &Path) -> Result<()> {
    std::fs::write(path, format_grid(grid)).map_err(|e| Error::io(path, e))
}

pub fn format_grid(grid: &Grid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", grid.nodes.len(), grid.triangles.len(), grid.quads.len());
    for p in &grid.nodes {
        let _ = writeln!(out, "{:.16e} {:.16e}", p[0], p[1]);
    }
    for t in &grid.triangles {
        let _ = writeln!(out, "{} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    for q in &grid.quads {
        let _ = writeln!(out, "{} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
    }
    // consecutive segments with the same condition form a block
    let mut blocks: Vec<(BoundaryCondition, Vec<[usize; 2]>)> = Vec::new();
    for s in &grid.segments {
        match blocks.last_mut() {
            Some((bc, segs)) if *bc == s.bc => segs.push(s.nodes),
            _ => blocks.push((s.bc, vec![s.nodes])),
        }
    }
    let _ = writeln!(out, "{}", blocks.len());
    for (bc, segs) in &blocks {
        let _ = writeln!(out, "{} {}", bc, segs.len());
        for s in segs {
            let _ = writeln!(out, "{} {}", s[0] + 1, s[1] + 1);
        }
    }
    out
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line: self.line, msg: msg.into() }
    }

    fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        for (i, raw) in self.inner.by_ref() {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Ok(l.split_whitespace().collect());
        }
        self.line += 1;
        Err(self.err("unexpected end of file"))
    }

    fn numbers<T: std::str::FromStr>(&mut self, count: usize) -> Result<Vec<T>> {
        let fields = self.next_fields()?;
        if fields.len() != count {
            return Err(self.err(format!("expected {count} fields, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| f.parse::<T>().map_err(|_| self.err(format!("cannot parse '{f}'"))))
            .collect()
    }

    fn indices(&mut self, count: usize, nnodes: usize) -> Result<Vec<usize>> {
        let ids: Vec<usize> = self.numbers(count)?;
        ids.iter()
            .map(|&i| {
                if i == 0 || i > nnodes {
                    Err(self.err(format!("node index {i} outside 1..={nnodes}")))
                } else {
                    Ok(i - 1)
                }
            })
            .collect()
    }
}

pub fn parse_grid(text: &str, path: &Path) -> Result<Grid> {
    let mut lines = Lines { path, inner: text.lines().enumerate().peekable(), line: 0 };
    let header: Vec<usize> = lines.numbers(3)?;
    let (nn, nt, nq) = (header[0], header[1], header[2]);
    let mut nodes = Vec::with_capacity(nn);
    for _ in 0..nn {
        let xy: Vec<f64> = lines.numbers(2)?;
        nodes.push([xy[0], xy[1]]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let ids = lines.indices(3, nn)?;
        triangles.push([ids[0], ids[1], ids[2]]);
    }
    let mut quads = Vec::with_capacity(nq);
    for _ in 0..nq {
        let ids = lines.indices(4, nn)?;
        quads.push([ids[0], ids[1], ids[2], ids[3]]);
    }
    let nblocks: Vec<usize> = lines.numbers(1)?;
    let mut segments = Vec::new();
    for _ in 0..nblocks[0] {
        let fields = lines.next_fields()?;
        if fields.len() != 2 {
            return Err(lines.err("expected '<condition> <count>'"));
        }
        let bc: BoundaryCondition = fields[0].parse().map_err(|m: String| lines.err(m))?;
        let count: usize = fields[1].parse().map_err(|_| lines.err(format!("cannot parse '{}'", fields[1])))?;
        for _ in 0..count {
            let ids = lines.indices(2, nn)?;
            segments.push(BoundarySegment { nodes: [ids[0], ids[1]], bc });
        }
    }
    if let Ok(extra) = lines.next_fields() {
        return Err(lines.err(format!("trailing content starting with '{}'", extra.join(" "))));
    }
    Grid::new(nodes, triangles, quads, segments)
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridgen::{generate_flatplate_grid, FlatPlateGridSpec};

    #[test]
    fn text_round_trip_is_bit_identical() {
        let mut spec = FlatPlateGridSpec::default();
        spec.nx = 9;
        spec.ny = 6;
        let g = generate_flatplate_grid(&spec).unwrap();
        let text = format_grid(&g);
        let back = parse_grid(&text, Path::new("mem")).unwrap();
        assert_eq!(format_grid(&back), text);
        for (a, b) in g.nodes.iter().zip(&back.nodes) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
        assert_eq!(g.triangles, back.triangles);
        assert_eq!(g.segments, back.segments);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "3 1 0\n0 0\n1 0\n0 1\n1 2 7\n0\n";
        match parse_grid(text, Path::new("g.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "3 1 0\n0 0\n1 0\n0 1\n1 2 3\n1\nwall 1\n1 2\n";
        assert!(matches!(parse_grid(text, Path::new("g.txt")), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn accepts_comments_and_quads() {
        let text = "# unit square\n4 0 1\n0 0\n1 0\n1 1\n0 1\n1 2 3 4\n1\nfreestream 4\n1 2\n2 3\n3 4\n4 1\n";
        let g = parse_grid(text, Path::new("q.txt")).unwrap();
        assert_eq!(g.quads.len(), 1);
        assert!((g.total_dual_volume() - 1.0).abs() < 1e-15);
    }
}
