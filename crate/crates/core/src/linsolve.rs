//! Preconditioned conjugate gradients on cell fields.
//!
//! Every large linear solve in the crate (pressure, implicit phase update,
//! costate update) is SPD, possibly only on the mean-zero subspace; callers
//! are responsible for feeding consistent right-hand sides and operators that
//! preserve that subspace.

use crate::error::{ChdError, Result};
use crate::grid::ScalarField;

/// Outcome of an iterative solve, attached to diagnostics and errors.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual, |b - A x| / |b| in the plain Euclidean norm.
    pub rel_residual: f64,
}

/// Conjugate gradients with an optional SPD preconditioner. Converges when
/// the Euclidean residual drops below `tol_rel * |b|`; a zero right-hand side
/// returns the zero solution immediately.
pub fn pcg(
    apply_a: impl Fn(&ScalarField) -> ScalarField,
    precond: Option<&dyn Fn(&ScalarField) -> ScalarField>,
    b: &ScalarField,
    tol_rel: f64,
    max_iter: usize,
) -> Result<(ScalarField, SolveReport)> {
    let b_norm = b.dot(b).sqrt();
    let mut x = ScalarField::zeros(b.grid);
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }
    let mut r = b.clone();
    let mut z = match precond {
        Some(m) => m(&r),
        None => r.clone(),
    };
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 0..max_iter {
        let r_norm = r.dot(&r).sqrt();
        if r_norm <= tol_rel * b_norm {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    rel_residual: r_norm / b_norm,
                },
            ));
        }
        let ap = apply_a(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(ChdError::NonConvergence {
                what: "pcg (operator not positive definite on iterate)",
                iterations: it,
                residual: r_norm / b_norm,
                tol: tol_rel,
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        z = match precond {
            Some(m) => m(&r),
            None => r.clone(),
        };
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_next = z.clone();
        p_next.axpy(beta, &p);
        p = p_next;
    }
    let r_norm = r.dot(&r).sqrt();
    if r_norm <= tol_rel * b_norm {
        return Ok((
            x,
            SolveReport {
                iterations: max_iter,
                rel_residual: r_norm / b_norm,
            },
        ));
    }
    Err(ChdError::NonConvergence {
        what: "pcg",
        iterations: max_iter,
        residual: r_norm / b_norm,
        tol: tol_rel,
    })
}
