//! Problem setup: grid, coefficients and right-hand side from a handful of
//! scalar parameters.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::discretization::build_vertical_profile;
use crate::error::{invalid, Error, Result};
use crate::fields::{Field3D, Layout};
use crate::geometry::{build_cubed_sphere_panel, build_graded_vertical_grid, build_planar_panel, PanelGeometry};
use crate::matrix_free::OperatorContext;
use crate::scalar::Scalar;

/// Side length of the planar test panel (the cube face in gnomonic coordinates).
pub const PLANAR_EXTENT: f64 = 2.0;

pub const DEFAULT_H_ATMOS: f64 = 0.01;
pub const DEFAULT_OMEGA2: f64 = 6.71e-4;
pub const DEFAULT_LAMBDA2: f64 = 3.32e-2;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    #[default]
    CubedSphere,
    Planar,
}

impl GeometryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeometryKind::CubedSphere => "cubed-sphere",
            GeometryKind::Planar => "planar",
        }
    }

    pub fn build(self, m: usize) -> Result<PanelGeometry> {
        match self {
            GeometryKind::CubedSphere => build_cubed_sphere_panel(m),
            GeometryKind::Planar => build_planar_panel(m, PLANAR_EXTENT),
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubed-sphere" | "sphere" => Ok(GeometryKind::CubedSphere),
            "planar" => Ok(GeometryKind::Planar),
            _ => invalid(format!("unknown geometry '{s}' (expected cubed-sphere or planar)")),
        }
    }
}

/// Physical and grid parameters of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Problem {
    pub geometry: GeometryKind,
    pub m: usize,
    pub n_z: usize,
    pub h_atmos: f64,
    pub omega2: f64,
    pub lambda2: f64,
}

impl Problem {
    pub fn new(geometry: GeometryKind, m: usize, n_z: usize) -> Self {
        Problem {
            geometry,
            m,
            n_z,
            h_atmos: DEFAULT_H_ATMOS,
            omega2: DEFAULT_OMEGA2,
            lambda2: DEFAULT_LAMBDA2,
        }
    }

    pub fn with_omega2(mut self, omega2: f64) -> Self {
        self.omega2 = omega2;
        self
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = lambda2;
        self
    }

    pub fn with_h_atmos(mut self, h_atmos: f64) -> Self {
        self.h_atmos = h_atmos;
        self
    }

    /// Number of unknowns, `m * m * n_z`, failing on overflow.
    pub fn unknowns(&self) -> Result<usize> {
        self.m
            .checked_mul(self.m)
            .and_then(|c| c.checked_mul(self.n_z))
            .ok_or_else(|| Error::InvalidArgument("grid size overflows".into()))
    }

    /// Cheap checks that run before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return invalid("m must be at least 1");
        }
        if self.n_z == 0 {
            return invalid("n_z must be at least 1");
        }
        if !(self.h_atmos > 0.0) || !self.h_atmos.is_finite() {
            return invalid(format!("h_atmos must be positive and finite, got {}", self.h_atmos));
        }
        if !(self.omega2 > 0.0) || !self.omega2.is_finite() {
            return invalid(format!("omega2 must be positive and finite, got {}", self.omega2));
        }
        if !(self.lambda2 >= 0.0) || !self.lambda2.is_finite() {
            return invalid(format!("lambda2 must be non-negative and finite, got {}", self.lambda2));
        }
        self.unknowns().map(|_| ())
    }

    pub fn context<T: Scalar>(&self) -> Result<OperatorContext<T>> {
        self.validate()?;
        let vgrid = build_graded_vertical_grid(self.n_z, self.h_atmos)?;
        let profile = build_vertical_profile(&vgrid, self.omega2, self.lambda2)?;
        OperatorContext::new(profile, self.geometry.build(self.m)?)
    }

    /// Seed-fixed pseudorandom right-hand side, uniform in `[-1, 1)`.
    pub fn rhs<T: Scalar>(&self, layout: Layout, seed: u64) -> Field3D<T> {
        Field3D::random(self.m, self.n_z, layout, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        let p = Problem::new(GeometryKind::Planar, 4, 4);
        assert!(p.validate().is_ok());
        assert!(Problem { m: 0, ..p }.validate().is_err());
        assert!(Problem { n_z: 0, ..p }.validate().is_err());
        assert!(p.with_omega2(0.0).validate().is_err());
        assert!(p.with_lambda2(-1.0).validate().is_err());
        assert!(p.with_h_atmos(f64::NAN).validate().is_err());
        assert!(Problem { m: usize::MAX, ..p }.validate().is_err());
    }

    #[test]
    fn geometry_names_round_trip() {
        for g in [GeometryKind::CubedSphere, GeometryKind::Planar] {
            assert_eq!(g.as_str().parse::<GeometryKind>().unwrap(), g);
        }
        assert!("torus".parse::<GeometryKind>().is_err());
    }
}
