//! Rectangular staggered (MAC) grid, field containers and discrete operators.
//!
//! Scalars (`φ`, `μ`, `p`) and the deformation gradient live at cell centres,
//! velocity components live on the cell faces normal to them. Boundary
//! treatment is implied by [`BcMode`]:
//!
//! * `Physical`: no-slip / no-penetration walls. Face-normal velocity on the
//!   boundary faces is stored and is always zero; cell-centred scalars use an
//!   even (mirror) ghost, which realises homogeneous Neumann conditions;
//!   tangential velocity uses an odd ghost so that it vanishes on the wall.
//! * `Periodic`: used by manufactured-solution tests only.
//!
//! Ghost values are never stored; every stencil resolves them from the mode.

pub(crate) mod field;
pub mod ops;

pub use field::{MacVelocity, ScalarField, TensorField};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary treatment for every field on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcMode {
    /// No-slip velocity, homogeneous Neumann for `φ`, `μ` and `p`.
    Physical,
    /// Doubly periodic box (verification only).
    Periodic,
}

impl BcMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BcMode::Physical => "physical",
            BcMode::Periodic => "periodic",
        }
    }
}

/// Geometry of a two-dimensional box `[0, lx] × [0, ly]` split into
/// `nx × ny` uniform cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub bc: BcMode,
}

/// Smallest admissible cell count along an axis.
pub const MIN_CELLS: usize = 4;

impl GridSpec {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize, bc: BcMode) -> Result<Self> {
        let spec = GridSpec { lx, ly, nx, ny, bc };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit square with `n × n` cells.
    pub fn unit_square(n: usize, bc: BcMode) -> Result<Self> {
        Self::new(1.0, 1.0, n, n, bc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lx.is_finite() && self.lx > 0.0 && self.ly.is_finite() && self.ly > 0.0) {
            return Err(Error::Config(format!(
                "grid extents must be positive, got lx={} ly={}",
                self.lx, self.ly
            )));
        }
        if self.nx < MIN_CELLS || self.ny < MIN_CELLS {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_CELLS} cells per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub const fn dim(&self) -> usize {
        2
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn min_spacing(&self) -> f64 {
        self.hx().min(self.hy())
    }

    /// Area of one cell (also the quadrature weight of an interior face).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_periodic(&self) -> bool {
        self.bc == BcMode::Periodic
    }

    /// Number of x-faces per grid row.
    #[inline]
    pub fn nfx(&self) -> usize {
        match self.bc {
            BcMode::Physical => self.nx + 1,
            BcMode::Periodic => self.nx,
        }
    }

    /// Number of rows of y-faces.
    #[inline]
    pub fn nfy(&self) -> usize {
        match self.bc {
            BcMode::Physical => self.ny + 1,
            BcMode::Periodic => self.ny,
        }
    }

    #[inline]
    pub fn n_xfaces(&self) -> usize {
        self.nfx() * self.ny
    }

    #[inline]
    pub fn n_yfaces(&self) -> usize {
        self.nx * self.nfy()
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        i + self.nfx() * j
    }

    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    /// Cell-centre coordinates.
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// Location of x-face `(i, j)`.
    #[inline]
    pub fn xface_center(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// Location of y-face `(i, j)`.
    #[inline]
    pub fn yface_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), j as f64 * self.hy())
    }

    /// True for x-faces lying on the walls `x = 0` and `x = lx`.
    #[inline]
    pub fn is_boundary_xface(&self, i: usize) -> bool {
        self.bc == BcMode::Physical && (i == 0 || i == self.nx)
    }

    #[inline]
    pub fn is_boundary_yface(&self, j: usize) -> bool {
        self.bc == BcMode::Physical && (j == 0 || j == self.ny)
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: format!("{self:?}"),
                found: format!("{other:?}"),
            })
        }
    }
}
