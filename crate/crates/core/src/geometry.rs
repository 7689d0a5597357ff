//! Vertical grid and horizontal panel geometry.
//!
//! The vertical grid is a graded radial grid on `[1, 1 + H]` in units of the
//! sphere radius. The horizontal geometry is a single logically rectangular
//! `m x m` panel, either one face of a gnomonic cubed sphere or a flat square
//! used for verification. For each panel cell it provides the area `|T|` and
//! for each interior edge the coupling `alpha = edge length / center distance`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalGrid {
    n_z: usize,
    h_atmos: f64,
    r: Vec<f64>,
}

impl VerticalGrid {
    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn h_atmos(&self) -> f64 {
        self.h_atmos
    }

    /// Level radii `r[0..=n_z]`.
    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    /// Thickness of vertical cell `k`.
    pub fn spacing(&self, k: usize) -> f64 {
        self.r[k + 1] - self.r[k]
    }
}

/// Graded grid `r_k = 1 + (k / n_z)^2 * H`, refined towards the lower boundary.
pub fn build_graded_vertical_grid(n_z: usize, h_atmos: f64) -> Result<VerticalGrid> {
    if n_z == 0 {
        return invalid("n_z must be at least 1");
    }
    if !(h_atmos > 0.0) || !h_atmos.is_finite() {
        return invalid(format!("h_atmos must be positive and finite, got {h_atmos}"));
    }
    let nz = n_z as f64;
    let r: Vec<f64> = (0..=n_z)
        .map(|k| {
            let s = k as f64 / nz;
            1.0 + s * s * h_atmos
        })
        .collect();
    if r.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid(format!(
            "h_atmos = {h_atmos} is too small to resolve {n_z} distinct levels"
        ));
    }
    Ok(VerticalGrid { n_z, h_atmos, r })
}

/// Cell areas and edge couplings of an `m x m` horizontal panel.
///
/// Cells are labelled `(i, j)` with `0 <= i, j < m`. The "east" edge of cell
/// `(i, j)` is shared with `(i + 1, j)`; the "north" edge with `(i, j + 1)`.
/// Each edge coefficient is stored once, so both adjacent cells see the same
/// value. Edges on the panel boundary do not exist.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelGeometry {
    m: usize,
    cell_area: Vec<f64>,
    /// `(m - 1) x m`, index `i * m + j` for the edge between `(i, j)` and `(i + 1, j)`.
    alpha_east: Vec<f64>,
    /// `m x (m - 1)`, index `i * (m - 1) + j` for the edge between `(i, j)` and `(i, j + 1)`.
    alpha_north: Vec<f64>,
    alpha_diag: Vec<f64>,
}

/// Couplings of one cell to its four potential neighbours. Missing
/// neighbours carry a zero coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborAlphas {
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

impl PanelGeometry {
    fn from_parts(m: usize, cell_area: Vec<f64>, alpha_east: Vec<f64>, alpha_north: Vec<f64>) -> Self {
        let mut geometry = PanelGeometry {
            m,
            cell_area,
            alpha_east,
            alpha_north,
            alpha_diag: vec![0.0; m * m],
        };
        let diag: Vec<f64> = (0..m * m)
            .map(|c| geometry.neighbor_sum(c / m, c % m))
            .collect();
        geometry.alpha_diag = diag;
        geometry
    }

    // Sum over existing edges in the fixed order west, east, south, north.
    fn neighbor_sum(&self, i: usize, j: usize) -> f64 {
        let mut sum = 0.0;
        if let Some(a) = self.alpha_west_edge(i, j) {
            sum += a;
        }
        if let Some(a) = self.alpha_east_edge(i, j) {
            sum += a;
        }
        if let Some(a) = self.alpha_south_edge(i, j) {
            sum += a;
        }
        if let Some(a) = self.alpha_north_edge(i, j) {
            sum += a;
        }
        sum
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn area(&self, i: usize, j: usize) -> f64 {
        self.cell_area[i * self.m + j]
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_area
    }

    /// Diagonal coupling `alpha_T`, the sum over all existing edges of the cell.
    pub fn alpha_diag(&self, i: usize, j: usize) -> f64 {
        self.alpha_diag[i * self.m + j]
    }

    pub fn alpha_east_edge(&self, i: usize, j: usize) -> Option<f64> {
        (i + 1 < self.m).then(|| self.alpha_east[i * self.m + j])
    }

    pub fn alpha_west_edge(&self, i: usize, j: usize) -> Option<f64> {
        (i > 0).then(|| self.alpha_east[(i - 1) * self.m + j])
    }

    pub fn alpha_north_edge(&self, i: usize, j: usize) -> Option<f64> {
        (j + 1 < self.m).then(|| self.alpha_north[i * (self.m - 1) + j])
    }

    pub fn alpha_south_edge(&self, i: usize, j: usize) -> Option<f64> {
        (j > 0).then(|| self.alpha_north[i * (self.m - 1) + j - 1])
    }

    pub fn neighbor_alphas(&self, i: usize, j: usize) -> NeighborAlphas {
        NeighborAlphas {
            west: self.alpha_west_edge(i, j).unwrap_or(0.0),
            east: self.alpha_east_edge(i, j).unwrap_or(0.0),
            south: self.alpha_south_edge(i, j).unwrap_or(0.0),
            north: self.alpha_north_edge(i, j).unwrap_or(0.0),
        }
    }

    /// All interior edge coefficients, east edges first.
    pub fn edge_alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.alpha_east.iter().chain(self.alpha_north.iter()).copied()
    }

    pub fn total_area(&self) -> f64 {
        self.cell_area.iter().sum()
    }

    /// One row per cell: `i,j,cell_area,alpha_diag,alpha_east,alpha_north`.
    /// Missing edges are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,cell_area,alpha_diag,alpha_east,alpha_north")?;
        let fmt = |a: Option<f64>| a.map(|v| format!("{v:e}")).unwrap_or_default();
        for i in 0..self.m {
            for j in 0..self.m {
                writeln!(
                    out,
                    "{i},{j},{:e},{:e},{},{}",
                    self.area(i, j),
                    self.alpha_diag(i, j),
                    fmt(self.alpha_east_edge(i, j)),
                    fmt(self.alpha_north_edge(i, j)),
                )?;
            }
        }
        Ok(())
    }
}

type Vec3 = [f64; 3];

fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Central projection of `(x, y)` on the tangent plane `z = 1` onto the unit sphere.
pub fn gnomonic(x: f64, y: f64) -> Vec3 {
    let s = (1.0 + x * x + y * y).sqrt();
    [x / s, y / s, 1.0 / s]
}

/// Great-circle distance between two unit vectors.
pub fn arc_length(a: Vec3, b: Vec3) -> f64 {
    norm3(cross3(a, b)).atan2(dot3(a, b))
}

/// Spherical excess of the geodesic triangle `abc` (Van Oosterom-Strackee).
fn triangle_excess(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let num = dot3(a, cross3(b, c)).abs();
    let den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
    2.0 * num.atan2(den)
}

/// Area of the convex geodesic quadrilateral `abcd` (corners in cyclic order).
pub fn quad_area(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    triangle_excess(a, b, c) + triangle_excess(a, c, d)
}

/// One face of a gnomonic cubed sphere.
///
/// A uniform `m x m` grid on `[-1, 1]^2` is mapped to the unit sphere by
/// central projection. Cell areas are spherical excesses of the projected
/// geodesic quadrilaterals, so they partition exactly one sixth of the
/// sphere. Edge couplings are great-circle edge length over great-circle
/// distance between the projected cell midpoints.
pub fn build_cubed_sphere_panel(m: usize) -> Result<PanelGeometry> {
    if m == 0 {
        return invalid("m must be at least 1");
    }
    let mf = m as f64;
    let node = |a: usize| -1.0 + 2.0 * a as f64 / mf;
    let mid = |a: usize| -1.0 + (2 * a + 1) as f64 / mf;

    let nodes: Vec<Vec3> = (0..=m)
        .flat_map(|a| (0..=m).map(move |b| (a, b)))
        .map(|(a, b)| gnomonic(node(a), node(b)))
        .collect();
    let p = |a: usize, b: usize| nodes[a * (m + 1) + b];
    let center = |i: usize, j: usize| gnomonic(mid(i), mid(j));

    let mut cell_area = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            cell_area.push(quad_area(p(i, j), p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)));
        }
    }

    let mut alpha_east = Vec::with_capacity(m.saturating_sub(1) * m);
    for i in 0..m.saturating_sub(1) {
        for j in 0..m {
            let edge = arc_length(p(i + 1, j), p(i + 1, j + 1));
            let dist = arc_length(center(i, j), center(i + 1, j));
            alpha_east.push(edge / dist);
        }
    }

    let mut alpha_north = Vec::with_capacity(m * m.saturating_sub(1));
    for i in 0..m {
        for j in 0..m.saturating_sub(1) {
            let edge = arc_length(p(i, j + 1), p(i + 1, j + 1));
            let dist = arc_length(center(i, j), center(i, j + 1));
            alpha_north.push(edge / dist);
        }
    }

    Ok(PanelGeometry::from_parts(m, cell_area, alpha_east, alpha_north))
}

/// Flat square panel of side `extent` with uniform cells. Every interior
/// edge has coupling exactly 1.
pub fn build_planar_panel(m: usize, extent: f64) -> Result<PanelGeometry> {
    if m == 0 {
        return invalid("m must be at least 1");
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return invalid(format!("extent must be positive and finite, got {extent}"));
    }
    let h = extent / m as f64;
    let edges = m.saturating_sub(1) * m;
    // Edge length over centre distance is exactly one on a uniform grid.
    Ok(PanelGeometry::from_parts(m, vec![h * h; m * m], vec![1.0; edges], vec![1.0; edges]))
}

/// Area of one cubed-sphere face.
pub const PANEL_SOLID_ANGLE: f64 = 4.0 * PI / 6.0;

/// Grid-aligned anisotropy `gamma^2 = (lambda dx / dz)^2` per cell and level.
#[derive(Debug, Clone)]
pub struct Anisotropy {
    m: usize,
    n_z: usize,
    gamma2: Vec<f64>,
}

impl Anisotropy {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma2[(i * self.m + j) * self.n_z + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma2
    }

    pub fn min(&self) -> f64 {
        self.gamma2.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.gamma2.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Diagnostic only; the solver never uses it. `dx = sqrt(|T|)`, `dz = r[k+1] - r[k]`.
pub fn anisotropy(geometry: &PanelGeometry, vgrid: &VerticalGrid, lambda2: f64) -> Anisotropy {
    let (m, n_z) = (geometry.m(), vgrid.n_z());
    let mut gamma2 = Vec::with_capacity(m * m * n_z);
    for &area in geometry.cell_areas() {
        for k in 0..n_z {
            gamma2.push(gamma2_of(lambda2, area.sqrt(), vgrid.spacing(k)));
        }
    }
    Anisotropy { m, n_z, gamma2 }
}

pub fn gamma2_of(lambda2: f64, dx: f64, dz: f64) -> f64 {
    let ratio = dx / dz;
    lambda2 * ratio * ratio
}
