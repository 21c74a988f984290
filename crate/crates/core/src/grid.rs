//! Uniform staggered (MAC) grid on `[0, lx] x [0, ly]`.
//!
//! Cell `(i, j)` has center `((i + 1/2) hx, (j + 1/2) hy)`. Scalars live at
//! cell centers in `nx x ny` arrays, the x-velocity on x-faces in
//! `(nx + 1) x ny` arrays (face `(i, j)` at `x = i hx`), and the y-velocity on
//! y-faces in `nx x (ny + 1)` arrays. All arrays are indexed `[[i, j]]` with
//! `i` along x.

use crate::field::{CellField, FaceField};
use crate::params::{ParamError, SimulationParams};
use ndarray::Array2;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, ParamError> {
        if nx < 4 || ny < 4 {
            return Err(ParamError::GridTooSmall { nx, ny });
        }
        if !(lx > 0.0) {
            return Err(ParamError::OutOfRange {
                name: "lx",
                requirement: "> 0",
                value: lx,
            });
        }
        if !(ly > 0.0) {
            return Err(ParamError::OutOfRange {
                name: "ly",
                requirement: "> 0",
                value: ly,
            });
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    #[inline]
    pub fn xf(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn yf(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    pub fn cell_shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn xface_shape(&self) -> (usize, usize) {
        (self.nx + 1, self.ny)
    }

    pub fn yface_shape(&self) -> (usize, usize) {
        (self.nx, self.ny + 1)
    }

    pub fn cell_zeros(&self) -> CellField {
        Array2::zeros(self.cell_shape())
    }

    pub fn face_zeros(&self) -> FaceField {
        FaceField {
            ux: Array2::zeros(self.xface_shape()),
            uy: Array2::zeros(self.yface_shape()),
        }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn sample_cells(&self, f: impl Fn(f64, f64) -> f64) -> CellField {
        Array2::from_shape_fn(self.cell_shape(), |(i, j)| f(self.xc(i), self.yc(j)))
    }

    /// Samples a vector field on faces: `fx` at x-faces, `fy` at y-faces.
    /// Boundary-normal faces take whatever the functions return there.
    pub fn sample_faces(&self, fx: impl Fn(f64, f64) -> f64, fy: impl Fn(f64, f64) -> f64) -> FaceField {
        FaceField {
            ux: Array2::from_shape_fn(self.xface_shape(), |(i, j)| fx(self.xf(i), self.yc(j))),
            uy: Array2::from_shape_fn(self.yface_shape(), |(i, j)| fy(self.xc(i), self.yf(j))),
        }
    }

    /// Velocity from a stream function sampled at grid nodes, `ux = d psi/dy`,
    /// `uy = -d psi/dx`. The result is discretely divergence-free; it has zero
    /// normal flux on the walls when `psi` vanishes on the boundary.
    pub fn curl_of_nodal(&self, psi: impl Fn(f64, f64) -> f64) -> FaceField {
        let nodes = Array2::from_shape_fn((self.nx + 1, self.ny + 1), |(i, j)| psi(self.xf(i), self.yf(j)));
        self.curl_of_nodal_values(&nodes)
    }

    pub fn curl_of_nodal_values(&self, nodes: &Array2<f64>) -> FaceField {
        assert_eq!(nodes.dim(), (self.nx + 1, self.ny + 1));
        FaceField {
            ux: Array2::from_shape_fn(self.xface_shape(), |(i, j)| {
                (nodes[[i, j + 1]] - nodes[[i, j]]) / self.hy
            }),
            uy: Array2::from_shape_fn(self.yface_shape(), |(i, j)| {
                -(nodes[[i + 1, j]] - nodes[[i, j]]) / self.hx
            }),
        }
    }
}

/// Grid described by validated parameters.
pub fn build_grid(params: &SimulationParams) -> Result<Grid, ParamError> {
    Grid::new(params.lx, params.ly, params.nx, params.ny)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_spacing() {
        let g = Grid::new(1.0, 1.0, 4, 4).unwrap();
        assert_eq!((g.hx, g.hy), (0.25, 0.25));
    }

    #[test]
    fn rectangular_spacing() {
        let g = Grid::new(2.0, 1.0, 8, 4).unwrap();
        assert_eq!((g.hx, g.hy), (0.25, 0.25));
        assert_eq!(g.face_zeros().ux.dim(), (9, 4));
        assert_eq!(g.face_zeros().uy.dim(), (8, 5));
    }

    #[test]
    fn too_few_cells() {
        assert!(matches!(
            Grid::new(1.0, 1.0, 2, 8),
            Err(ParamError::GridTooSmall { .. })
        ));
        let p = SimulationParams {
            nx: 2,
            ..Default::default()
        };
        assert!(build_grid(&p).is_err());
    }
}
