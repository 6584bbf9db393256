//! Backward costate sweep: the exact transpose of the tangent march
//!
//! Each backward step applies the raw transpose of the corresponding
//! tangent step, block by block: the implicit update transposes through
//! the K-solver, the frozen-coefficient Darcy block is self-adjoint, and
//! the advection and interpolation stencils transpose exactly. Because
//! tangent and adjoint are built from the same discrete operators, duality
//!
//! ```text
//! sum_n <f1, w> + <f2, rho> + <f3, zeta>
//!   = sum_n <g2, xi> + <g1, v> + <g3, eta> + <g4, xi(T)>
//! ```
//!
//! holds to inner-solver tolerance, and the reduced gradient rho + beta R
//! matches finite differences of the cost at matching accuracy.
//!
//! The continuous counterpart of the sweep is
//!
//! ```text
//! nu(phi*) w = grad pi - rho grad phi* + g1
//! div w = 0
//! -rho_t - u* . grad rho = lap zeta - psi''(phi*) zeta
//!                          + w . grad mu* - nu'(phi*) u* . w + g2
//! zeta = lap rho + w . grad phi* + g3
//! rho(T) = g4
//! ```
//!
//! whose terms arise here implicitly through transposition: the transposed
//! advection carries u* . grad rho, the transposed mobility sensitivity
//! carries nu'(phi*) u* . w, the transposed capillary force carries
//! w . grad mu* and w . grad phi*, and the transposed potential
//! linearization carries lap zeta - psi''(phi*) zeta.

use crate::darcy::pressure_solve;
use crate::error::{ChdError, Result};
use crate::grid::{
    divergence, face_average, face_average_transpose, gradient, laplacian_neumann, Grid2D,
    ScalarField, VectorField,
};
use crate::spectral::CosineBasis;
use crate::state::{advecting_flow, Model, SolverOptions, SourceSchedule, Trajectory};
use crate::tangent::mu_tangent;
use crate::update_op::UpdateOp;

/// Forcings of the backward system. `g1` and `g3` are step-indexed like the
/// tangent forcings; `g2` is level-indexed with one entry per time level
/// (entry 0 is accepted for alignment but invisible, since the tangent
/// state vanishes at t = 0); `g4` is the terminal datum.
#[derive(Debug, Clone)]
pub struct AdjointForcing {
    pub g1: Vec<VectorField>,
    pub g2: Vec<ScalarField>,
    pub g3: Vec<ScalarField>,
    pub g4: ScalarField,
}

impl AdjointForcing {
    pub fn new(
        g1: Vec<VectorField>,
        g2: Vec<ScalarField>,
        g3: Vec<ScalarField>,
        g4: ScalarField,
    ) -> Result<Self> {
        if g1.len() != g3.len() || g2.len() != g1.len() + 1 {
            return Err(ChdError::Construction(format!(
                "forcing lengths differ: g1 {} g2 {} g3 {} (want n, n+1, n)",
                g1.len(),
                g2.len(),
                g3.len()
            )));
        }
        for (n, v) in g1.iter().enumerate() {
            let flux = v.max_boundary_normal();
            if flux != 0.0 {
                return Err(ChdError::Construction(format!(
                    "g1[{n}] carries boundary flux {flux:e}"
                )));
            }
        }
        Ok(AdjointForcing { g1, g2, g3, g4 })
    }

    pub fn zero(grid: Grid2D, n_steps: usize) -> Self {
        AdjointForcing {
            g1: vec![VectorField::zeros(grid); n_steps],
            g2: vec![ScalarField::zeros(grid); n_steps + 1],
            g3: vec![ScalarField::zeros(grid); n_steps],
            g4: ScalarField::zeros(grid),
        }
    }
}

/// One backward step's fields. Step-indexed: entry n of the trajectory
/// holds the multipliers of forward step n.
#[derive(Debug, Clone)]
pub struct AdjointSnapshot {
    pub rho: ScalarField,
    pub zeta: ScalarField,
    pub w: VectorField,
    /// Mean-zero adjoint pressure.
    pub pi: ScalarField,
}

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub snapshots: Vec<AdjointSnapshot>,
    pub tau: f64,
}

impl AdjointTrajectory {
    pub fn n_steps(&self) -> usize {
        self.snapshots.len()
    }

    pub fn rho_seq(&self) -> Vec<&ScalarField> {
        self.snapshots.iter().map(|s| &s.rho).collect()
    }
}

/// Backward march over a stored trajectory. Produces one snapshot per
/// forward step, ordered forward in time.
pub fn adjoint_sweep(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    forcing: &AdjointForcing,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<AdjointTrajectory> {
    let n_steps = traj.n_steps();
    assert_eq!(schedule.len(), n_steps, "schedule/trajectory mismatch");
    assert_eq!(forcing.g1.len(), n_steps, "forcing/trajectory mismatch");
    let p = &model.potential;
    let visc = &model.viscosity;
    let tau = traj.tau;

    // Terminal multiplier: cost data at the last level.
    let mut lambda = forcing.g2[n_steps].clone();
    lambda.axpy(1.0, &forcing.g4);

    let mut rev = Vec::with_capacity(n_steps);
    for n in (0..n_steps).rev() {
        let base_n = &traj.snapshots[n];
        let base_np1 = &traj.snapshots[n + 1];
        let flow = advecting_flow(base_n, &schedule.s[n], model, opts, basis)?;

        // Transposed implicit update.
        let c = crate::state::entropy_field(p, &base_np1.phi, 2)?;
        let op = UpdateOp::new(basis, tau, c, opts.cg_tol, opts.cg_max_iter);
        let (rho, _) = op.solve_transpose(&lambda)?;

        let phi_face = face_average(&base_n.phi);
        let k = phi_face.map(|s| 1.0 / visc.eval(s, 0));
        let chat = phi_face
            .map(|s| -visc.eval(s, 1) / visc.eval(s, 0))
            .mul(&flow.u);

        // Transposed advection of the new-state path, then the self-adjoint
        // Darcy block: the adjoint flow w is solenoidal with mean-zero pi.
        let grho = gradient(&rho);
        let mut chi = face_average(&base_n.phi).mul(&grho);
        chi.axpy(1.0, &forcing.g1[n]);
        let rhs_pi = divergence(&k.mul(&chi));
        let (pi, _) = pressure_solve(&k, &rhs_pi, basis, opts.cg_tol, opts.cg_max_iter)?;
        let mut sigma = chi.clone();
        sigma.axpy(1.0, &gradient(&pi));
        let w = k.mul(&sigma);

        // Multiplier of the tangent potential, then its symmetric operator.
        let mut kappa = face_average_transpose(&k.mul(&gradient(&base_n.phi)).mul(&sigma));
        kappa.axpy(1.0, &forcing.g3[n]);
        let mut zeta = kappa.clone();
        zeta.axpy(1.0, &laplacian_neumann(&rho));

        // Assemble the next (earlier) state multiplier.
        let mut next = rho.clone();
        next.scale(1.0 / tau);
        next.axpy(-p.theta0, &laplacian_neumann(&rho));
        next.axpy(1.0, &face_average_transpose(&flow.u.mul(&grho)));
        next.axpy(1.0, &face_average_transpose(&chat.mul(&sigma)));
        next.axpy(-1.0, &divergence(&face_average(&base_n.mu).mul(&w)));
        next.axpy(1.0, &mu_tangent(p, &base_n.phi, &kappa)?);
        if n >= 1 {
            next.axpy(1.0, &forcing.g2[n]);
        }
        lambda = next;

        rev.push(AdjointSnapshot { rho, zeta, w, pi });
    }
    rev.reverse();
    Ok(AdjointTrajectory {
        snapshots: rev,
        tau,
    })
}

/// Costate of a tracking cost: backward sweep forced by the misfits, with
/// trapezoid level weights matching the cost quadrature.
pub fn costate(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    cfg: &crate::control::CostConfig,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<AdjointTrajectory> {
    let n_steps = traj.n_steps();
    assert_eq!(cfg.phi_q.len(), n_steps + 1, "running target level count");
    let grid = traj.snapshots[0].phi.grid;
    let tau = traj.tau;
    let g2 = (0..=n_steps)
        .map(|n| {
            let mut d = traj.snapshots[n].phi.clone();
            d.axpy(-1.0, &cfg.phi_q[n]);
            d.scale(cfg.alpha2 * crate::control::CostConfig::level_weight(n, n_steps));
            d
        })
        .collect();
    let mut g4 = traj.snapshots[n_steps].phi.clone();
    g4.axpy(-1.0, &cfg.phi_omega);
    g4.scale(cfg.alpha1 / tau);
    let forcing = AdjointForcing::new(
        vec![VectorField::zeros(grid); n_steps],
        g2,
        vec![ScalarField::zeros(grid); n_steps],
        g4,
    )?;
    adjoint_sweep(traj, schedule, &forcing, model, opts, basis)
}

/// Riesz representative of the reduced-cost derivative per step:
/// rho + beta R.
pub fn reduced_gradient(
    adj: &AdjointTrajectory,
    r: &[ScalarField],
    beta: f64,
) -> Vec<ScalarField> {
    assert_eq!(adj.snapshots.len(), r.len(), "control step count");
    adj.snapshots
        .iter()
        .zip(r)
        .map(|(snap, rn)| {
            let mut g = snap.rho.clone();
            g.axpy(beta, rn);
            g
        })
        .collect()
}
