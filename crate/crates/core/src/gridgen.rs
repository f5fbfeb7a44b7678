//! Grid generators: a Joukowsky-airfoil O-grid and a flat-plate channel grid.
//!
//! Both produce structured node layouts split into triangles. Node numbering
//! runs along the wall-normal (radial) index fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, BoundarySegment, Grid, Point};

/// O-grid around a Joukowsky airfoil, generated by mapping a polar grid around
/// an offset circle through `z = zeta + c^2/zeta` (with `c = 1`). The result is
/// scaled to unit chord with the leading edge at `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JoukowskyGridSpec {
    /// Distinct nodes around the airfoil.
    pub n_circumferential: usize,
    /// Nodes from the surface to the far field, inclusive.
    pub n_radial: usize,
    /// Circle centre shift toward the leading edge (sets thickness), in units of `c`.
    pub thickness: f64,
    /// Circle centre shift upward (sets camber), in units of `c`.
    pub camber: f64,
    /// Far-field distance in chords.
    pub outer_radius: f64,
}

impl Default for JoukowskyGridSpec {
    fn default() -> Self {
        JoukowskyGridSpec { n_circumferential: 128, n_radial: 33, thickness: 0.08, camber: 0.0, outer_radius: 20.0 }
    }
}

impl JoukowskyGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_circumferential < 8 || self.n_circumferential % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "n_circumferential must be even and >= 8, got {}",
                self.n_circumferential
            )));
        }
        if self.n_radial < 4 {
            return Err(Error::InvalidConfig(format!("n_radial must be >= 4, got {}", self.n_radial)));
        }
        if !(self.thickness > 0.0) || !self.thickness.is_finite() {
            // the circle passes through both singular points: a zero-thickness segment or arc
            return Err(Error::InvalidConfig(format!(
                "thickness offset must be positive (zero gives a zero-thickness airfoil), got {}",
                self.thickness
            )));
        }
        if !self.camber.is_finite() {
            return Err(Error::InvalidConfig("camber must be finite".into()));
        }
        if !(self.outer_radius > 5.0) {
            return Err(Error::InvalidConfig(format!(
                "outer radius must exceed 5 chords, got {}",
                self.outer_radius
            )));
        }
        Ok(())
    }
}

/// Rectangular domain over a flat plate starting at `plate_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatPlateGridSpec {
    pub nx: usize,
    pub ny: usize,
    pub plate_start: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub height: f64,
    /// Ratio between successive wall-normal spacings.
    pub stretching: f64,
}

impl Default for FlatPlateGridSpec {
    fn default() -> Self {
        FlatPlateGridSpec { nx: 137, ny: 97, plate_start: 0.0, x_min: -0.5, x_max: 1.0, height: 1.0, stretching: 1.05 }
    }
}

impl FlatPlateGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidConfig(format!("nx and ny must be >= 4, got {}x{}", self.nx, self.ny)));
        }
        if !(self.stretching >= 1.0) {
            return Err(Error::InvalidConfig(format!("stretching factor must be >= 1, got {}", self.stretching)));
        }
        if !(self.x_min <= self.plate_start && self.plate_start < self.x_max && self.height > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need x_min <= plate_start < x_max and height > 0 (got {} {} {} {})",
                self.x_min, self.plate_start, self.x_max, self.height
            )));
        }
        Ok(())
    }

    /// Number of streamwise intervals upstream of the plate.
    fn upstream_intervals(&self) -> usize {
        let frac = (self.plate_start - self.x_min) / (self.x_max - self.x_min);
        let n = (frac * (self.nx - 1) as f64).round() as usize;
        if self.plate_start > self.x_min {
            n.clamp(1, self.nx - 2)
        } else {
            0
        }
    }
}

fn split_quad(a: usize, b: usize, c: usize, d: usize, through_a: bool, out: &mut Vec<[usize; 3]>) {
    // quad a-b-c-d counter-clockwise
    if through_a {
        out.push([a, b, c]);
        out.push([a, c, d]);
    } else {
        out.push([a, b, d]);
        out.push([b, c, d]);
    }
}

fn orient_ccw(tri: [usize; 3], nodes: &[Point]) -> [usize; 3] {
    let [a, b, c] = tri.map(|i| nodes[i]);
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if cross < 0.0 {
        [tri[0], tri[2], tri[1]]
    } else {
        tri
    }
}

pub fn generate_joukowsky_ogrid(spec: &JoukowskyGridSpec) -> Result<Grid> {
    spec.validate()?;
    let (ni, nr) = (spec.n_circumferential, spec.n_radial);
    let center = [-spec.thickness, spec.camber];
    let radius = ((1.0 - center[0]).powi(2) + center[1].powi(2)).sqrt();
    let theta_te = (-center[1]).atan2(1.0 - center[0]);

    let map = |zeta: Point| -> Point {
        let r2 = zeta[0] * zeta[0] + zeta[1] * zeta[1];
        [zeta[0] + zeta[0] / r2, zeta[1] - zeta[1] / r2]
    };

    // chord from the surface points
    let surface: Vec<Point> = (0..4096)
        .map(|i| {
            let th = theta_te + std::f64::consts::TAU * i as f64 / 4096.0;
            map([center[0] + radius * th.cos(), center[1] + radius * th.sin()])
        })
        .collect();
    let x_le = surface.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let x_te = 2.0;
    let chord = x_te - x_le;
    let outer = spec.outer_radius * chord;

    // angles mirrored exactly so a symmetric section gives a symmetric grid
    let half = ni / 2;
    let offsets: Vec<f64> = (0..ni)
        .map(|i| {
            if i <= half {
                std::f64::consts::TAU * i as f64 / ni as f64
            } else {
                -std::f64::consts::TAU * (ni - i) as f64 / ni as f64
            }
        })
        .collect();
    let radii: Vec<f64> =
        (0..nr).map(|k| radius * (outer / radius).powf(k as f64 / (nr - 1) as f64)).collect();

    let mut nodes = Vec::with_capacity(ni * nr);
    for (i, &dth) in offsets.iter().enumerate() {
        let (s, c) = if i == half { (0.0, -1.0) } else { dth.sin_cos() };
        // rotate the offset into the trailing-edge frame
        let (st, ct) = theta_te.sin_cos();
        let dir = [c * ct - s * st, s * ct + c * st];
        for (k, &r) in radii.iter().enumerate() {
            let zeta = if k == 0 && dth == 0.0 {
                [1.0, 0.0]
            } else {
                [center[0] + r * dir[0], center[1] + r * dir[1]]
            };
            let z = map(zeta);
            nodes.push([(z[0] - x_le) / chord, z[1] / chord]);
        }
    }
    let id = |i: usize, k: usize| (i % ni) * nr + k;

    let mut triangles = Vec::with_capacity(2 * ni * (nr - 1));
    for i in 0..ni {
        for k in 0..nr - 1 {
            let (a, b, c, d) = (id(i, k), id(i + 1, k), id(i + 1, k + 1), id(i, k + 1));
            // the diagonal always touches the trailing-edge side of the quad
            let mut pair = Vec::with_capacity(2);
            split_quad(a, b, c, d, i < half, &mut pair);
            triangles.extend(pair.into_iter().map(|t| orient_ccw(t, &nodes)));
        }
    }

    let mut segments = Vec::with_capacity(2 * ni);
    for i in 0..ni {
        segments.push(BoundarySegment { nodes: [id(i + 1, 0), id(i, 0)], bc: BoundaryCondition::SlipWall });
    }
    for i in 0..ni {
        segments.push(BoundarySegment { nodes: [id(i, nr - 1), id(i + 1, nr - 1)], bc: BoundaryCondition::Freestream });
    }
    Grid::new(nodes, triangles, vec![], segments)
}

pub fn generate_flatplate_grid(spec: &FlatPlateGridSpec) -> Result<Grid> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let n_up = spec.upstream_intervals();
    let xs: Vec<f64> = (0..nx)
        .map(|i| {
            if i <= n_up && n_up > 0 {
                spec.x_min + (spec.plate_start - spec.x_min) * i as f64 / n_up as f64
            } else {
                let m = (nx - 1 - n_up) as f64;
                spec.plate_start + (spec.x_max - spec.plate_start) * (i - n_up) as f64 / m
            }
        })
        .collect();
    let ys: Vec<f64> = if spec.stretching == 1.0 {
        (0..ny).map(|j| spec.height * j as f64 / (ny - 1) as f64).collect()
    } else {
        let r = spec.stretching;
        let total = (r.powi(ny as i32 - 1) - 1.0) / (r - 1.0);
        let mut y = Vec::with_capacity(ny);
        let mut acc = 0.0;
        for j in 0..ny {
            y.push(if j == ny - 1 { spec.height } else { spec.height * acc / total });
            acc += r.powi(j as i32);
        }
        y
    };

    let mut nodes = Vec::with_capacity(nx * ny);
    for &x in &xs {
        for &y in &ys {
            nodes.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| i * ny + j;
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            split_quad(id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1), true, &mut triangles);
        }
    }

    let mut segments = Vec::new();
    for i in 0..nx - 1 {
        let bc = if i < n_up { BoundaryCondition::SlipWall } else { BoundaryCondition::NoSlipWall };
        segments.push(BoundarySegment { nodes: [id(i, 0), id(i + 1, 0)], bc });
    }
    for j in 0..ny - 1 {
        segments.push(BoundarySegment { nodes: [id(nx - 1, j), id(nx - 1, j + 1)], bc: BoundaryCondition::Outflow });
    }
    for i in (0..nx - 1).rev() {
        segments.push(BoundarySegment { nodes: [id(i + 1, ny - 1), id(i, ny - 1)], bc: BoundaryCondition::Freestream });
    }
    for j in (0..ny - 1).rev() {
        segments.push(BoundarySegment { nodes: [id(0, j + 1), id(0, j)], bc: BoundaryCondition::Freestream });
    }
    Grid::new(nodes, triangles, vec![], segments)
}
