//! Unstructured 2D grids with median-dual metrics.
//!
//! Elements (triangles and quadrilaterals, counter-clockwise) define the grid.
//! The median dual around each node is formed by joining element centroids to
//! edge midpoints. Every element edge `(j, k)` carries a directed area vector
//! `n_jk` pointing from `j` toward `k`; every boundary segment contributes half
//! of its outward normal to each of its two end nodes.

mod io;

pub use io::{read_grid, write_grid};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Freestream,
    SlipWall,
    NoSlipWall,
    Outflow,
}

impl BoundaryCondition {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCondition::Freestream => "freestream",
            BoundaryCondition::SlipWall => "slip_wall",
            BoundaryCondition::NoSlipWall => "no_slip_wall",
            BoundaryCondition::Outflow => "outflow",
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryCondition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "freestream" => Ok(BoundaryCondition::Freestream),
            "slip_wall" => Ok(BoundaryCondition::SlipWall),
            "no_slip_wall" => Ok(BoundaryCondition::NoSlipWall),
            "outflow" => Ok(BoundaryCondition::Outflow),
            other => Err(format!("unknown boundary condition '{other}'")),
        }
    }
}

/// A boundary edge `a -> b` with the domain on its left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySegment {
    pub nodes: [usize; 2],
    pub bc: BoundaryCondition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// `nodes[0] < nodes[1]`; `normal` points from `nodes[0]` to `nodes[1]`.
    pub nodes: [usize; 2],
    pub normal: Point,
}

/// Half of a boundary segment, attached to one node, with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub node: usize,
    pub normal: Point,
    pub bc: BoundaryCondition,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub quads: Vec<[usize; 4]>,
    pub segments: Vec<BoundarySegment>,
    pub edges: Vec<Edge>,
    pub dual_volumes: Vec<f64>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// CSR offsets into `incident` for each node.
    incident_start: Vec<usize>,
    /// Incident edge indices, grouped per node.
    incident: Vec<usize>,
    no_slip: Vec<bool>,
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

impl Grid {
    /// Builds a grid and its dual metrics. Elements must be counter-clockwise with
    /// positive area, and the boundary segments must close every dual cell.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        quads: Vec<[usize; 4]>,
        segments: Vec<BoundarySegment>,
    ) -> Result<Grid> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidGrid("no nodes".into()));
        }
        let check = |ids: &[usize]| -> Result<()> {
            match ids.iter().find(|&&i| i >= n) {
                Some(i) => Err(Error::InvalidGrid(format!("node index {i} out of range ({n} nodes)"))),
                None => Ok(()),
            }
        };
        for t in &triangles {
            check(t)?;
        }
        for q in &quads {
            check(q)?;
        }
        for s in &segments {
            check(&s.nodes)?;
            if s.nodes[0] == s.nodes[1] {
                return Err(Error::InvalidGrid(format!("zero-length boundary segment at node {}", s.nodes[0])));
            }
        }

        let mut dual_volumes = vec![0.0; n];
        // (min, max) -> accumulated normal from min to max
        let mut edge_map: std::collections::BTreeMap<(usize, usize), Point> = Default::default();

        let elements = triangles.iter().map(|t| &t[..]).chain(quads.iter().map(|q| &q[..]));
        for (index, elem) in elements.enumerate() {
            let pts: Vec<Point> = elem.iter().map(|&i| nodes[i]).collect();
            let area = signed_area(&pts);
            if !(area > 0.0) {
                return Err(Error::DegenerateCell { index, area });
            }
            let m = elem.len() as f64;
            let c = [pts.iter().map(|p| p[0]).sum::<f64>() / m, pts.iter().map(|p| p[1]).sum::<f64>() / m];
            let mids: Vec<Point> = (0..elem.len())
                .map(|i| {
                    let a = pts[i];
                    let b = pts[(i + 1) % elem.len()];
                    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
                })
                .collect();
            for i in 0..elem.len() {
                let (a, b) = (elem[i], elem[(i + 1) % elem.len()]);
                let mid = mids[i];
                let s = [c[0] - mid[0], c[1] - mid[1]];
                // the centroid lies left of a->b, so (s_y, -s_x) points from a toward b
                let nrm = [s[1], -s[0]];
                let entry = edge_map.entry((a.min(b), a.max(b))).or_insert([0.0, 0.0]);
                if a < b {
                    entry[0] += nrm[0];
                    entry[1] += nrm[1];
                } else {
                    entry[0] -= nrm[0];
                    entry[1] -= nrm[1];
                }
                let prev = mids[(i + elem.len() - 1) % elem.len()];
                dual_volumes[a] += signed_area(&[pts[i], mid, c, prev]);
            }
        }

        let edges: Vec<Edge> = edge_map.into_iter().map(|((a, b), normal)| Edge { nodes: [a, b], normal }).collect();

        let mut boundary_faces = Vec::with_capacity(2 * segments.len());
        let mut no_slip = vec![false; n];
        for s in &segments {
            let [a, b] = s.nodes;
            let d = [nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1]];
            let half = [0.5 * d[1], -0.5 * d[0]];
            boundary_faces.push(BoundaryFace { node: a, normal: half, bc: s.bc });
            boundary_faces.push(BoundaryFace { node: b, normal: half, bc: s.bc });
            if s.bc == BoundaryCondition::NoSlipWall {
                no_slip[a] = true;
                no_slip[b] = true;
            }
        }

        let mut counts = vec![0usize; n + 1];
        for e in &edges {
            counts[e.nodes[0] + 1] += 1;
            counts[e.nodes[1] + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let incident_start = counts.clone();
        let mut fill = counts;
        let mut incident = vec![0; incident_start[n]];
        for (ei, e) in edges.iter().enumerate() {
            for &v in &e.nodes {
                incident[fill[v]] = ei;
                fill[v] += 1;
            }
        }

        let grid = Grid {
            nodes,
            triangles,
            quads,
            segments,
            edges,
            dual_volumes,
            boundary_faces,
            incident_start,
            incident,
            no_slip,
        };
        grid.check_closure()?;
        Ok(grid)
    }

    fn check_closure(&self) -> Result<()> {
        let sums = self.closure_sums();
        for (j, s) in sums.iter().enumerate() {
            let scale: f64 = self
                .incident_edges(j)
                .iter()
                .map(|&e| norm(self.edges[e].normal))
                .sum::<f64>()
                .max(f64::MIN_POSITIVE);
            if norm(*s) > 1e-9 * scale {
                return Err(Error::InvalidGrid(format!(
                    "dual cell of node {j} is not closed (|sum n| = {:e}); boundary segments missing or misoriented",
                    norm(*s)
                )));
            }
        }
        if let Some(j) = self.dual_volumes.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidGrid(format!("node {j} has non-positive dual volume")));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Edges touching node `j`.
    pub fn incident_edges(&self, j: usize) -> &[usize] {
        &self.incident[self.incident_start[j]..self.incident_start[j + 1]]
    }

    /// True for nodes on a no-slip wall.
    pub fn is_no_slip(&self, j: usize) -> bool {
        self.no_slip[j]
    }

    /// Sum of directed area vectors leaving each node's dual cell.
    pub fn closure_sums(&self) -> Vec<Point> {
        let mut sums = vec![[0.0, 0.0]; self.nodes.len()];
        for e in &self.edges {
            let [a, b] = e.nodes;
            sums[a][0] += e.normal[0];
            sums[a][1] += e.normal[1];
            sums[b][0] -= e.normal[0];
            sums[b][1] -= e.normal[1];
        }
        for f in &self.boundary_faces {
            sums[f.node][0] += f.normal[0];
            sums[f.node][1] += f.normal[1];
        }
        sums
    }

    /// Domain area as the sum of element areas.
    pub fn element_area(&self) -> f64 {
        let tri = self.triangles.iter().map(|t| signed_area(&t.map(|i| self.nodes[i])));
        let quad = self.quads.iter().map(|q| signed_area(&q.map(|i| self.nodes[i])));
        tri.chain(quad).sum()
    }

    pub fn total_dual_volume(&self) -> f64 {
        self.dual_volumes.iter().sum()
    }

    pub fn mean_face_area(&self) -> f64 {
        let total: f64 = self.edges.iter().map(|e| norm(e.normal)).sum::<f64>()
            + self.boundary_faces.iter().map(|f| norm(f.normal)).sum::<f64>();
        total / (self.edges.len() + self.boundary_faces.len()) as f64
    }

    /// A copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Grid> {
        let nodes = self.nodes.iter().map(|p| [p[0] * factor, p[1] * factor]).collect();
        Grid::new(nodes, self.triangles.clone(), self.quads.clone(), self.segments.clone())
    }

    /// Copy of the grid with every boundary segment relabelled.
    pub fn with_all_boundaries(&self, bc: BoundaryCondition) -> Result<Grid> {
        let segments = self.segments.iter().map(|s| BoundarySegment { nodes: s.nodes, bc }).collect();
        Grid::new(self.nodes.clone(), self.triangles.clone(), self.quads.clone(), segments)
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len() + self.quads.len()
    }
}

#[inline]
pub fn norm(v: Point) -> f64 {
    v[0].hypot(v[1])
}
