//! The implicit update operator K = I/tau + B (B + diag(c)) and its exact
//! transpose, where B is the negative Neumann Laplacian and c > 0 holds the
//! convex part's second derivative at the linearization state.
//!
//! K is the Jacobian of the implicit phase update, so the Newton corrector,
//! the tangent recursion and (through the transpose) the costate recursion
//! all funnel through this one solver. K itself is not symmetric because B
//! and diag(c) do not commute, but conjugating by B^{1/2} on the mean-zero
//! subspace produces
//!
//! ```text
//! S = I/tau + B^{1/2} (B + diag(c)) B^{1/2}
//! ```
//!
//! which is SPD, shared by both solves:
//!
//! ```text
//! K  x = y:  mean(x) = tau mean(y), then one S solve for the rest;
//! K' x = y:  one S solve for the mean-zero part, then the scalar mean
//!            equation, which couples through mean(c . B x0).
//! ```
//!
//! S is solved by CG with the exact inverse of I/tau + B^2 + mean(c) B as a
//! preconditioner (diagonal in the cosine basis), so iteration counts depend
//! on the spread of c, not on the grid or the step size. B is applied
//! spectrally throughout this module; the stencil and spectral forms agree to
//! round-off and the spectral form keeps S symmetric to machine precision,
//! which the transpose-pair identities below are tested against.

use crate::error::Result;
use crate::grid::ScalarField;
use crate::linsolve::{pcg, SolveReport};
use crate::spectral::CosineBasis;

pub struct UpdateOp<'a> {
    basis: &'a CosineBasis,
    tau: f64,
    c: ScalarField,
    c_mean: f64,
    bc: ScalarField,
    tol: f64,
    max_iter: usize,
}

impl<'a> UpdateOp<'a> {
    /// `c` is the pointwise second derivative of the convex energy part at
    /// the linearization state; it must be strictly positive.
    pub fn new(basis: &'a CosineBasis, tau: f64, c: ScalarField, tol: f64, max_iter: usize) -> Self {
        debug_assert!(tau > 0.0);
        debug_assert!(c.data.iter().all(|&v| v > 0.0));
        let c_mean = c.mean();
        let bc = basis.apply_b(&c);
        UpdateOp {
            basis,
            tau,
            c,
            c_mean,
            bc,
            tol,
            max_iter,
        }
    }

    /// (B + diag(c)) x
    fn apply_m(&self, x: &ScalarField) -> ScalarField {
        let mut out = self.basis.apply_b(x);
        for (o, (cv, xv)) in out.data.iter_mut().zip(self.c.data.iter().zip(&x.data)) {
            *o += cv * xv;
        }
        out
    }

    /// K x
    pub fn apply(&self, x: &ScalarField) -> ScalarField {
        let mut out = self.basis.apply_b(&self.apply_m(x));
        out.axpy(1.0 / self.tau, x);
        out
    }

    /// K' x (plain matrix transpose)
    pub fn apply_transpose(&self, x: &ScalarField) -> ScalarField {
        let mut out = self.apply_m(&self.basis.apply_b(x));
        out.axpy(1.0 / self.tau, x);
        out
    }

    fn apply_s(&self, x: &ScalarField) -> ScalarField {
        let half = self.basis.apply_b_sqrt(x);
        let mut out = self.basis.apply_b_sqrt(&self.apply_m(&half));
        out.axpy(1.0 / self.tau, x);
        out
    }

    fn solve_s(&self, rhs: &ScalarField) -> Result<(ScalarField, SolveReport)> {
        let inv_tau = 1.0 / self.tau;
        let c_mean = self.c_mean;
        let pre = |r: &ScalarField| {
            self.basis
                .apply_eig(r, |lam| 1.0 / (inv_tau + lam * lam + lam * c_mean))
        };
        pcg(|x| self.apply_s(x), Some(&pre), rhs, self.tol, self.max_iter)
    }

    /// Solve K x = y.
    pub fn solve(&self, y: &ScalarField) -> Result<(ScalarField, SolveReport)> {
        let m = self.tau * y.mean();
        let mut r = y.clone();
        r.project_zero_mean();
        r.axpy(-m, &self.bc);
        let (e, report) = self.solve_s(&self.basis.apply_b_invsqrt(&r))?;
        let mut x = self.basis.apply_b_sqrt(&e);
        x.add_constant(m);
        Ok((x, report))
    }

    /// Solve K' x = y.
    pub fn solve_transpose(&self, y: &ScalarField) -> Result<(ScalarField, SolveReport)> {
        let y_mean = y.mean();
        let mut y0 = y.clone();
        y0.project_zero_mean();
        let (g, report) = self.solve_s(&self.basis.apply_b_sqrt(&y0))?;
        let x0 = self.basis.apply_b_invsqrt(&g);
        let mbx = self.apply_m(&self.basis.apply_b(&x0));
        let m = self.tau * (y_mean - mbx.mean());
        let mut x = x0;
        x.add_constant(m);
        Ok((x, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn setup(g: Grid2D) -> (CosineBasis, ScalarField) {
        let basis = CosineBasis::new(g);
        let c = ScalarField::from_fn(g, |x, y| 1.2 + (4.0 * x).sin().powi(2) + 0.8 * y);
        (basis, c)
    }

    #[test]
    fn solve_inverts_apply() {
        let g = Grid2D::new(24, 18, 1.0, 0.8);
        let (basis, c) = setup(g);
        let op = UpdateOp::new(&basis, 5e-3, c, 1e-13, 400);
        let y = ScalarField::from_fn(g, |x, y| (3.0 * x - 2.0 * y).cos() + 0.5 * x);
        let (x, rep) = op.solve(&y).unwrap();
        let back = op.apply(&x);
        let mut worst = 0.0f64;
        for (a, b) in back.data.iter().zip(&y.data) {
            worst = worst.max((a - b).abs());
        }
        assert!(
            worst < 1e-9 * (1.0 + y.norm_inf()),
            "residual {worst}, {} iterations",
            rep.iterations
        );
    }

    #[test]
    fn transpose_solve_inverts_transpose_apply() {
        let g = Grid2D::new(20, 20, 1.0, 1.0);
        let (basis, c) = setup(g);
        let op = UpdateOp::new(&basis, 1e-2, c, 1e-13, 400);
        let y = ScalarField::from_fn(g, |x, y| x * x - y + (6.0 * y).sin());
        let (x, _) = op.solve_transpose(&y).unwrap();
        let back = op.apply_transpose(&x);
        let mut worst = 0.0f64;
        for (a, b) in back.data.iter().zip(&y.data) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-9 * (1.0 + y.norm_inf()), "residual {worst}");
    }

    #[test]
    fn apply_and_transpose_are_adjoint() {
        let g = Grid2D::new(14, 10, 0.7, 1.1);
        let (basis, c) = setup(g);
        let op = UpdateOp::new(&basis, 2e-3, c, 1e-12, 300);
        let a = ScalarField::from_fn(g, |x, y| (x - 0.3) * (y + 0.2));
        let b = ScalarField::from_fn(g, |x, y| (9.0 * x * y).cos());
        let lhs = op.apply(&a).dot(&b);
        let rhs = a.dot(&op.apply_transpose(&b));
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn solves_form_a_transpose_pair() {
        let g = Grid2D::new(16, 12, 1.0, 1.0);
        let (basis, c) = setup(g);
        let op = UpdateOp::new(&basis, 4e-3, c, 1e-13, 400);
        let a = ScalarField::from_fn(g, |x, y| (2.0 * x + y).sin() + 0.1);
        let b = ScalarField::from_fn(g, |x, y| (x * 8.0).cos() * y - 0.4);
        let lhs = op.solve(&a).unwrap().0.dot(&b);
        let rhs = a.dot(&op.solve_transpose(&b).unwrap().0);
        assert!(
            (lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn solution_mean_is_tau_times_rhs_mean() {
        let g = Grid2D::unit(16);
        let (basis, c) = setup(g);
        let tau = 3e-3;
        let op = UpdateOp::new(&basis, tau, c, 1e-13, 400);
        let y = ScalarField::from_fn(g, |x, y| x + 2.0 * y * y + 1.0);
        let (x, _) = op.solve(&y).unwrap();
        assert!((x.mean() - tau * y.mean()).abs() < 1e-13);
    }

    #[test]
    fn preconditioner_keeps_iterations_grid_independent() {
        for n in [16usize, 32] {
            let g = Grid2D::unit(n);
            let (basis, c) = setup(g);
            let op = UpdateOp::new(&basis, 1e-3, c, 1e-12, 400);
            let y = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + (5.0 * y).cos());
            let (_, rep) = op.solve(&y).unwrap();
            assert!(rep.iterations < 40, "n = {n}: {} iterations", rep.iterations);
        }
    }
}
