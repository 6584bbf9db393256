//! Cosine-basis diagonalization of the Neumann Laplacian.
//!
//! The cell-centered five-point Laplacian with mirrored ghosts has exact
//! eigenvectors cos(pi k (i + 1/2) / n) per axis, with eigenvalues
//! (2 - 2 cos(pi k / n)) / h^2 for the negative Laplacian. Storing the
//! orthonormal basis as dense per-axis matrices gives an O(n^3) transform,
//! cheap at the grid sizes this solver targets, and lets every function of
//! the operator (square root, inverse square root, shifted inverses) be
//! applied exactly in coefficient space.
//!
//! `inverse` is implemented as the entrywise transpose of `forward` (same
//! matrices, reversed order), so any `apply_eig` with a real symbol is a
//! symmetric matrix to round-off. The transpose-pair solvers in `update_op`
//! rely on that.

use crate::grid::{Grid2D, ScalarField};

/// Dense orthonormal cosine bases for both axes plus the eigenvalues of the
/// negative Neumann Laplacian.
pub struct CosineBasis {
    pub grid: Grid2D,
    cx: Vec<f64>,
    cy: Vec<f64>,
    pub lam_x: Vec<f64>,
    pub lam_y: Vec<f64>,
}

fn axis_basis(n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; n * n];
    let mut lam = vec![0.0; n];
    for k in 0..n {
        let norm = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        let wave = std::f64::consts::PI * k as f64 / n as f64;
        for i in 0..n {
            c[k * n + i] = norm * (wave * (i as f64 + 0.5)).cos();
        }
        lam[k] = (2.0 - 2.0 * wave.cos()) / (h * h);
    }
    (c, lam)
}

impl CosineBasis {
    pub fn new(grid: Grid2D) -> Self {
        let (cx, lam_x) = axis_basis(grid.nx, grid.hx());
        let (cy, lam_y) = axis_basis(grid.ny, grid.hy());
        CosineBasis {
            grid,
            cx,
            cy,
            lam_x,
            lam_y,
        }
    }

    /// Eigenvalue of the negative Laplacian for mode (kx, ky).
    #[inline]
    pub fn eig(&self, kx: usize, ky: usize) -> f64 {
        self.lam_x[kx] + self.lam_y[ky]
    }

    /// Field values to cosine coefficients. Coefficient layout mirrors the
    /// cell layout: index ky * nx + kx.
    pub fn forward(&self, f: &ScalarField) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        debug_assert_eq!(f.grid, self.grid);
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &f.data[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let basis = &self.cx[k * nx..(k + 1) * nx];
                tmp[j * nx + k] = basis.iter().zip(row).map(|(b, v)| b * v).sum();
            }
        }
        let mut out = vec![0.0; nx * ny];
        for l in 0..ny {
            let basis = &self.cy[l * ny..(l + 1) * ny];
            for k in 0..nx {
                out[l * nx + k] = basis
                    .iter()
                    .enumerate()
                    .map(|(j, b)| b * tmp[j * nx + k])
                    .sum();
            }
        }
        out
    }

    /// Cosine coefficients back to field values. Exact transpose of
    /// `forward`: same dense matrices applied in the reverse order.
    pub fn inverse(&self, coef: &[f64]) -> ScalarField {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        debug_assert_eq!(coef.len(), nx * ny);
        let mut tmp = vec![0.0; nx * ny];
        for k in 0..nx {
            for j in 0..ny {
                let mut s = 0.0;
                for l in 0..ny {
                    s += self.cy[l * ny + j] * coef[l * nx + k];
                }
                tmp[j * nx + k] = s;
            }
        }
        let mut data = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut s = 0.0;
                for k in 0..nx {
                    s += self.cx[k * nx + i] * tmp[j * nx + k];
                }
                data[j * nx + i] = s;
            }
        }
        ScalarField::from_data(self.grid, data)
    }

    /// Apply g(B) for the negative Neumann Laplacian B: transform, scale each
    /// mode by g(lambda), transform back.
    pub fn apply_eig(&self, f: &ScalarField, g: impl Fn(f64) -> f64) -> ScalarField {
        let mut coef = self.forward(f);
        let nx = self.grid.nx;
        for l in 0..self.grid.ny {
            for k in 0..nx {
                coef[l * nx + k] *= g(self.eig(k, l));
            }
        }
        self.inverse(&coef)
    }

    /// B f, spectrally.
    pub fn apply_b(&self, f: &ScalarField) -> ScalarField {
        self.apply_eig(f, |lam| lam)
    }

    /// B^{1/2} f. Kills the mean mode.
    pub fn apply_b_sqrt(&self, f: &ScalarField) -> ScalarField {
        self.apply_eig(f, f64::sqrt)
    }

    /// B^{-1/2} f on the mean-zero complement, zero on the mean mode.
    pub fn apply_b_invsqrt(&self, f: &ScalarField) -> ScalarField {
        self.apply_eig(f, |lam| if lam == 0.0 { 0.0 } else { 1.0 / lam.sqrt() })
    }

    /// Pseudo-inverse of B: zero on the mean mode.
    pub fn apply_b_pinv(&self, f: &ScalarField) -> ScalarField {
        self.apply_eig(f, |lam| if lam == 0.0 { 0.0 } else { 1.0 / lam })
    }

    /// (I + B)^{-1/2} f, the smoothing weight of the duality-norm proxy.
    pub fn apply_ib_invsqrt(&self, f: &ScalarField) -> ScalarField {
        self.apply_eig(f, |lam| 1.0 / (1.0 + lam).sqrt())
    }

    /// Largest eigenvalue of B on this grid.
    pub fn lam_max(&self) -> f64 {
        self.lam_x[self.grid.nx - 1] + self.lam_y[self.grid.ny - 1]
    }
}
