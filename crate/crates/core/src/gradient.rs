//! Unweighted least-squares nodal gradients over edge neighbours.

use crate::flux::Grad4;
use crate::grid::Grid;
use crate::real::Real;

/// Inverse 2x2 normal matrices, one per node. Nodes whose neighbour offsets do
/// not span the plane get `None` and a zero gradient.
#[derive(Debug, Clone)]
pub struct LsqStencil {
    inverse: Vec<Option<[[f64; 2]; 2]>>,
}

impl LsqStencil {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.num_nodes();
        let mut m = vec![[0.0f64; 3]; n];
        for e in &grid.edges {
            let [a, b] = e.nodes;
            let dx = grid.nodes[b][0] - grid.nodes[a][0];
            let dy = grid.nodes[b][1] - grid.nodes[a][1];
            for v in [a, b] {
                m[v][0] += dx * dx;
                m[v][1] += dx * dy;
                m[v][2] += dy * dy;
            }
        }
        let inverse: Vec<_> = m
            .iter()
            .map(|&[xx, xy, yy]| {
                let det = xx * yy - xy * xy;
                let trace = xx + yy;
                if det > 1e-12 * trace * trace {
                    Some([[yy / det, -xy / det], [-xy / det, xx / det]])
                } else {
                    None
                }
            })
            .collect();
        let stencil = LsqStencil { inverse };
        let deficient = stencil.rank_deficient();
        if deficient > 0 {
            log::warn!("{deficient} node(s) have rank-deficient gradient stencils; their gradients are set to zero");
        }
        stencil
    }

    /// Number of nodes with a rank-deficient stencil.
    pub fn rank_deficient(&self) -> usize {
        self.inverse.iter().filter(|m| m.is_none()).count()
    }

    /// Gradients of all four primitive variables at every node.
    pub fn gradients<S: Real>(&self, grid: &Grid, w: &[[S; 4]]) -> Vec<Grad4<S>> {
        let mut rhs = vec![[[S::zero(); 2]; 4]; w.len()];
        for e in &grid.edges {
            let [a, b] = e.nodes;
            let dx = S::lift(grid.nodes[b][0] - grid.nodes[a][0]);
            let dy = S::lift(grid.nodes[b][1] - grid.nodes[a][1]);
            for var in 0..4 {
                let dw = w[b][var] - w[a][var];
                // (-dx)(-dw) = dx dw, so both ends receive the same contribution
                for v in [a, b] {
                    rhs[v][var][0] += dx * dw;
                    rhs[v][var][1] += dy * dw;
                }
            }
        }
        rhs.iter()
            .zip(&self.inverse)
            .map(|(r, inv)| match inv {
                Some(m) => {
                    let m = m.map(|row| row.map(S::lift));
                    std::array::from_fn(|var| {
                        [m[0][0] * r[var][0] + m[0][1] * r[var][1], m[1][0] * r[var][0] + m[1][1] * r[var][1]]
                    })
                }
                None => [[S::zero(); 2]; 4],
            })
            .collect()
    }
}
