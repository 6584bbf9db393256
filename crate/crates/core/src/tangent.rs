//! Exact linearization of the forward step map
//!
//! Differentiating each stage of the discrete step literally (same convex
//! splitting, same explicit advection, Darcy coefficients frozen at the base
//! state) yields the control-to-state derivative as a marched linear system.
//! Keeping it the exact derivative, rather than a separate discretization of
//! the continuous linearized equations, is what lets Taylor remainder checks
//! and the adjoint transpose hold at solver tolerance.
//!
//! The forcing channels mirror the continuous linearized system
//!
//! ```text
//! nu(phi*) v = -grad q + eta grad phi* + mu* grad xi - nu'(phi*) xi u* + f1
//! div v = 0
//! xi_t + div(phi* v) + div(xi u*) = lap eta + f2
//! eta = -lap xi + psi''(phi*) xi + f3
//! ```
//!
//! where starred fields are the base trajectory. A control perturbation
//! enters as f2; the general channels exist for Lipschitz and second-order
//! work.

use crate::darcy::{pressure_solve, DarcySolution};
use crate::error::{ChdError, Result};
use crate::grid::{
    divergence, face_average, gradient, laplacian_neumann, Grid2D, ScalarField, VectorField,
};
use crate::materials::PotentialParams;
use crate::spectral::CosineBasis;
use crate::state::{advecting_flow, psi_field, Model, SolverOptions, SourceSchedule, StateSnapshot, Trajectory};
use crate::update_op::UpdateOp;

/// Step-indexed forcings of the linearized system, one entry per step.
#[derive(Debug, Clone)]
pub struct TangentForcing {
    pub f1: Vec<VectorField>,
    pub f2: Vec<ScalarField>,
    pub f3: Vec<ScalarField>,
}

impl TangentForcing {
    pub fn new(f1: Vec<VectorField>, f2: Vec<ScalarField>, f3: Vec<ScalarField>) -> Result<Self> {
        if f1.len() != f2.len() || f2.len() != f3.len() {
            return Err(ChdError::Construction(format!(
                "forcing lengths differ: f1 {} f2 {} f3 {}",
                f1.len(),
                f2.len(),
                f3.len()
            )));
        }
        for (n, v) in f1.iter().enumerate() {
            let flux = v.max_boundary_normal();
            if flux != 0.0 {
                return Err(ChdError::Construction(format!(
                    "f1[{n}] carries boundary flux {flux:e}"
                )));
            }
        }
        Ok(TangentForcing { f1, f2, f3 })
    }

    pub fn zero(grid: Grid2D, n_steps: usize) -> Self {
        TangentForcing {
            f1: vec![VectorField::zeros(grid); n_steps],
            f2: vec![ScalarField::zeros(grid); n_steps],
            f3: vec![ScalarField::zeros(grid); n_steps],
        }
    }

    /// Forcing of a control direction: f2 = h, other channels zero.
    pub fn control(h: &[ScalarField]) -> Self {
        match h.first() {
            None => TangentForcing {
                f1: Vec::new(),
                f2: Vec::new(),
                f3: Vec::new(),
            },
            Some(first) => {
                let grid = first.grid;
                TangentForcing {
                    f1: vec![VectorField::zeros(grid); h.len()],
                    f2: h.to_vec(),
                    f3: vec![ScalarField::zeros(grid); h.len()],
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.f2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f2.is_empty()
    }
}

/// One level of the tangent trajectory. `v` and `q` are the tangent flow of
/// the step that produced this level; the initial snapshot carries zeros.
#[derive(Debug, Clone)]
pub struct TangentSnapshot {
    pub xi: ScalarField,
    /// Tangent of the stored chemical potential, (B + psi''(phi)) xi. Step
    /// forcing f3 joins it only inside the step.
    pub eta: ScalarField,
    pub v: VectorField,
    /// Mean-zero tangent pressure.
    pub q: ScalarField,
}

impl TangentSnapshot {
    pub fn zero(grid: Grid2D) -> Self {
        TangentSnapshot {
            xi: ScalarField::zeros(grid),
            eta: ScalarField::zeros(grid),
            v: VectorField::zeros(grid),
            q: ScalarField::zeros(grid),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TangentTrajectory {
    pub snapshots: Vec<TangentSnapshot>,
    pub tau: f64,
}

impl TangentTrajectory {
    pub fn n_steps(&self) -> usize {
        self.snapshots.len() - 1
    }
}

/// Derivative of the consistent chemical potential: (B + psi''(phi)) xi.
/// Symmetric in the raw dot product, so the adjoint reuses it unchanged.
pub(crate) fn mu_tangent(
    p: &PotentialParams,
    phi: &ScalarField,
    xi: &ScalarField,
) -> Result<ScalarField> {
    let mut eta = laplacian_neumann(xi);
    eta.scale(-1.0);
    eta.axpy(1.0, &psi_field(p, phi, 2)?.mul(xi));
    Ok(eta)
}

/// One step of the linearized march. `base_flow` is the advecting Darcy
/// solution of the underlying forward step (level n with that step's
/// source), not the diagnostic solve stored in the snapshot.
pub fn tangent_step(
    base_n: &StateSnapshot,
    base_np1: &StateSnapshot,
    base_flow: &DarcySolution,
    prev: &TangentSnapshot,
    f1: &VectorField,
    f2: &ScalarField,
    f3: &ScalarField,
    tau: f64,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<TangentSnapshot> {
    let p = &model.potential;
    let visc = &model.viscosity;
    let mut eta_n = mu_tangent(p, &base_n.phi, &prev.xi)?;
    eta_n.axpy(1.0, f3);

    let phi_face = face_average(&base_n.phi);
    let k = phi_face.map(|s| 1.0 / visc.eval(s, 0));
    // Mobility sensitivity (d/dphi)(1/nu) against the base velocity,
    // written as (k'/k) u with k'/k = -nu'/nu.
    let chat = phi_face
        .map(|s| -visc.eval(s, 1) / visc.eval(s, 0))
        .mul(&base_flow.u);

    // Force perturbation with the mobility folded in.
    let mut srhs = face_average(&eta_n).mul(&gradient(&base_n.phi));
    srhs.axpy(1.0, &face_average(&base_n.mu).mul(&gradient(&prev.xi)));
    srhs.axpy(1.0, f1);
    let mut s = k.mul(&srhs);
    s.axpy(1.0, &chat.mul(&face_average(&prev.xi)));

    // div v = 0 under frozen mobility: -div(k grad q) = -div(s).
    let mut rhs_q = divergence(&s);
    rhs_q.scale(-1.0);
    let (q, _) = pressure_solve(&k, &rhs_q, basis, opts.cg_tol, opts.cg_max_iter)?;
    let mut v = k.mul(&gradient(&q));
    v.scale(-1.0);
    v.axpy(1.0, &s);

    let dadv = divergence(&{
        let mut flux = face_average(&prev.xi).mul(&base_flow.u);
        flux.axpy(1.0, &face_average(&base_n.phi).mul(&v));
        flux
    });

    // Implicit update, transposed later by the adjoint: the rhs collects
    // the explicit concave term, the linearized advection, and forcings.
    let mut y = prev.xi.clone();
    y.scale(1.0 / tau);
    y.axpy(-p.theta0, &laplacian_neumann(&prev.xi));
    y.axpy(-1.0, &dadv);
    y.axpy(1.0, f2);
    y.axpy(1.0, &laplacian_neumann(f3));
    let c = crate::state::entropy_field(p, &base_np1.phi, 2)?;
    let op = UpdateOp::new(basis, tau, c, opts.cg_tol, opts.cg_max_iter);
    let (xi, _) = op.solve(&y)?;
    let eta = mu_tangent(p, &base_np1.phi, &xi)?;
    Ok(TangentSnapshot { xi, eta, v, q })
}

/// March the linearized system over a stored trajectory with generic
/// forcings and zero initial tangent state.
pub fn tangent_sweep(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    forcing: &TangentForcing,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<TangentTrajectory> {
    let n_steps = traj.n_steps();
    assert_eq!(schedule.len(), n_steps, "schedule/trajectory mismatch");
    assert_eq!(forcing.len(), n_steps, "forcing/trajectory mismatch");
    let grid = traj.snapshots[0].phi.grid;
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(TangentSnapshot::zero(grid));
    for n in 0..n_steps {
        let flow = advecting_flow(&traj.snapshots[n], &schedule.s[n], model, opts, basis)?;
        let next = tangent_step(
            &traj.snapshots[n],
            &traj.snapshots[n + 1],
            &flow,
            &snapshots[n],
            &forcing.f1[n],
            &forcing.f2[n],
            &forcing.f3[n],
            traj.tau,
            model,
            opts,
            basis,
        )?;
        snapshots.push(next);
    }
    Ok(TangentTrajectory {
        snapshots,
        tau: traj.tau,
    })
}

/// Control-to-state derivative: the xi trajectory for a control direction h.
pub fn ds_apply(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    h: &[ScalarField],
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<TangentTrajectory> {
    tangent_sweep(traj, schedule, &TangentForcing::control(h), model, opts, basis)
}
