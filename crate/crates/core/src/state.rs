use crate::field::{cells_finite, CellField, FaceField};
use crate::grid::Grid;
use thiserror::Error;

/// Fields at one time instant.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub rho: CellField,
    pub b: CellField,
    pub u: FaceField,
    pub t: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("field {name} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: &'static str,
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error("{name} is not strictly positive at cell ({i}, {j}): {value}")]
    NonPositive {
        name: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("velocity is nonzero on a boundary-normal face")]
    BoundaryVelocity,
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

impl State {
    pub fn at_rest(grid: &Grid, rho: CellField, b: CellField) -> Self {
        Self {
            rho,
            b,
            u: grid.face_zeros(),
            t: 0.0,
        }
    }

    pub fn check_shapes(&self, grid: &Grid) -> Result<(), StateError> {
        let checks = [
            ("rho", self.rho.dim(), grid.cell_shape()),
            ("b", self.b.dim(), grid.cell_shape()),
            ("ux", self.u.ux.dim(), grid.xface_shape()),
            ("uy", self.u.uy.dim(), grid.yface_shape()),
        ];
        for (name, found, expected) in checks {
            if found != expected {
                return Err(StateError::Shape { name, found, expected });
            }
        }
        Ok(())
    }

    /// Shapes, finiteness, strict positivity of `rho` and `b`, no-slip normal faces.
    pub fn check_invariants(&self, grid: &Grid) -> Result<(), StateError> {
        self.check_shapes(grid)?;
        for (name, q) in [("rho", &self.rho), ("b", &self.b)] {
            if !cells_finite(q) {
                return Err(StateError::NonFinite(name));
            }
            if let Some(((i, j), &value)) = q.indexed_iter().find(|(_, v)| **v <= 0.0) {
                return Err(StateError::NonPositive { name, i, j, value });
            }
        }
        if !self.u.is_finite() {
            return Err(StateError::NonFinite("u"));
        }
        if !self.u.boundary_normal_is_zero() {
            return Err(StateError::BoundaryVelocity);
        }
        Ok(())
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_b(&self) -> f64 {
        self.b.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Exact equality of every stored bit, including the time stamp.
    #[allow(clippy::float_cmp)]
    pub fn bit_identical(&self, other: &State) -> bool {
        fn same<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> bool {
            a.zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.t.to_bits() == other.t.to_bits()
            && self.rho.dim() == other.rho.dim()
            && self.u.ux.dim() == other.u.ux.dim()
            && self.u.uy.dim() == other.u.uy.dim()
            && same(self.rho.iter(), other.rho.iter())
            && same(self.b.iter(), other.b.iter())
            && same(self.u.ux.iter(), other.u.ux.iter())
            && same(self.u.uy.iter(), other.u.uy.iter())
    }
}

/// Time-ordered sequence of states on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub frames: Vec<State>,
}

impl Trajectory {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            frames: Vec::new(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn last(&self) -> Option<&State> {
        self.frames.last()
    }
}
