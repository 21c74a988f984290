//! Field containers on the staggered grid.

use ndarray::Array2;

/// Scalar field at cell centers, shape `nx x ny`.
pub type CellField = Array2<f64>;

/// Vector field on faces: `ux` on x-faces `(nx + 1) x ny`, `uy` on y-faces
/// `nx x (ny + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub ux: Array2<f64>,
    pub uy: Array2<f64>,
}

impl FaceField {
    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(self.uy.iter()).all(|v| v.is_finite())
    }

    /// Zeroes the boundary-normal faces (no-slip normal component).
    pub fn clear_boundary_normal(&mut self) {
        let (nxp1, ny) = self.ux.dim();
        for j in 0..ny {
            self.ux[[0, j]] = 0.0;
            self.ux[[nxp1 - 1, j]] = 0.0;
        }
        let (nx, nyp1) = self.uy.dim();
        for i in 0..nx {
            self.uy[[i, 0]] = 0.0;
            self.uy[[i, nyp1 - 1]] = 0.0;
        }
    }

    pub fn boundary_normal_is_zero(&self) -> bool {
        let (nxp1, ny) = self.ux.dim();
        let (nx, nyp1) = self.uy.dim();
        (0..ny).all(|j| self.ux[[0, j]] == 0.0 && self.ux[[nxp1 - 1, j]] == 0.0)
            && (0..nx).all(|i| self.uy[[i, 0]] == 0.0 && self.uy[[i, nyp1 - 1]] == 0.0)
    }

    pub fn max_abs(&self) -> (f64, f64) {
        let mx = self.ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let my = self.uy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (mx, my)
    }

    /// Weighted inner product `sum f.g * area` over all faces.
    pub fn dot(&self, other: &FaceField, area: f64) -> f64 {
        let sx: f64 = self.ux.iter().zip(other.ux.iter()).map(|(a, b)| a * b).sum();
        let sy: f64 = self.uy.iter().zip(other.uy.iter()).map(|(a, b)| a * b).sum();
        (sx + sy) * area
    }

    pub fn len(&self) -> usize {
        self.ux.len() + self.uy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens into `[ux..., uy...]` in row-major order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend(self.ux.iter());
        v.extend(self.uy.iter());
        v
    }

    pub fn from_slice(&self, data: &[f64]) -> FaceField {
        let nx_len = self.ux.len();
        FaceField {
            ux: Array2::from_shape_vec(self.ux.dim(), data[..nx_len].to_vec()).expect("x-face shape"),
            uy: Array2::from_shape_vec(self.uy.dim(), data[nx_len..].to_vec()).expect("y-face shape"),
        }
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &FaceField) {
        self.ux.scaled_add(alpha, &other.ux);
        self.uy.scaled_add(alpha, &other.uy);
    }
}

pub fn cells_finite(q: &CellField) -> bool {
    q.iter().all(|v| v.is_finite())
}

/// `sum q * area`, accumulated in storage order.
pub fn integrate(q: &CellField, area: f64) -> f64 {
    q.iter().sum::<f64>() * area
}
