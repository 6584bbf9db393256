//! Tracking cost, admissible control set, and projected-gradient descent
//!
//! Controls are piecewise constant per time step on the state grid. The
//! control space carries the quadrature inner product
//!
//! ```text
//! <x, y> = tau * sum_n integral x^n y^n dx
//! ```
//!
//! and the cost is the trapezoid-in-time tracking functional
//!
//! ```text
//! J = alpha1/2 ||phi(T) - phi_Omega||^2
//!   + alpha2/2 tau sum_n w_n ||phi^n - phi_Q^n||^2
//!   + beta/2 ||R||^2
//! ```
//!
//! with end-level weights w = 1/2. The admissible set is a per-cell box;
//! the mass and smoothness budgets attached to it keep the phase-mean
//! constraint of the forward solver satisfiable, so they are monitored and
//! reported rather than enforced by the projection. The minimizer is a
//! projected gradient loop with Armijo backtracking whose gradient is the
//! costate representative rho + beta R.

use crate::adjoint::{costate, reduced_gradient};
use crate::error::{ChdError, Result};
use crate::grid::{gradient, Grid2D, ScalarField};
use crate::spectral::CosineBasis;
use crate::state::{run, Model, SolverOptions, SourceSchedule, Trajectory};

/// Space-time inner product of two per-step control sequences.
pub fn qr_inner(x: &[ScalarField], y: &[ScalarField], tau: f64) -> f64 {
    assert_eq!(x.len(), y.len(), "sequence lengths differ");
    tau * x.iter().zip(y).map(|(a, b)| a.inner(b)).sum::<f64>()
}

pub fn qr_norm(x: &[ScalarField], tau: f64) -> f64 {
    qr_inner(x, x, tau).sqrt()
}

/// Weights and targets of the tracking cost.
#[derive(Debug, Clone)]
pub struct CostConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub phi_omega: ScalarField,
    pub phi_q: Vec<ScalarField>,
}

impl CostConfig {
    pub fn new(
        alpha1: f64,
        alpha2: f64,
        beta: f64,
        phi_omega: ScalarField,
        phi_q: Vec<ScalarField>,
    ) -> Result<Self> {
        let mut faults = Vec::new();
        if !(alpha1 >= 0.0 && alpha2 >= 0.0 && beta >= 0.0) {
            faults.push(format!(
                "cost weights must be nonnegative: alpha1 = {alpha1}, alpha2 = {alpha2}, beta = {beta}"
            ));
        }
        if alpha1 == 0.0 && alpha2 == 0.0 && beta == 0.0 {
            faults.push("cost weights must not all vanish".into());
        }
        if faults.is_empty() {
            Ok(CostConfig {
                alpha1,
                alpha2,
                beta,
                phi_omega,
                phi_q,
            })
        } else {
            Err(ChdError::Validation(faults))
        }
    }

    /// Trapezoid weight of time level n among n_steps+1 levels.
    pub fn level_weight(n: usize, n_steps: usize) -> f64 {
        if n == 0 || n == n_steps {
            0.5
        } else {
            1.0
        }
    }
}

/// Tracking cost of a stored trajectory under control r.
pub fn cost(traj: &Trajectory, r: &[ScalarField], cfg: &CostConfig) -> f64 {
    let n_steps = traj.n_steps();
    assert_eq!(cfg.phi_q.len(), n_steps + 1, "running target level count");
    assert_eq!(r.len(), n_steps, "control step count");
    let tau = traj.tau;

    let mut terminal = traj.snapshots[n_steps].phi.clone();
    terminal.axpy(-1.0, &cfg.phi_omega);
    let mut total = 0.5 * cfg.alpha1 * terminal.inner(&terminal);

    let mut running = 0.0;
    for (n, snap) in traj.snapshots.iter().enumerate() {
        let mut d = snap.phi.clone();
        d.axpy(-1.0, &cfg.phi_q[n]);
        running += CostConfig::level_weight(n, n_steps) * d.inner(&d);
    }
    total += 0.5 * cfg.alpha2 * tau * running;
    total += 0.5 * cfg.beta * qr_inner(r, r, tau);
    total
}

/// Per-cell box bounds with mass and smoothness budgets.
///
/// `r0` caps the space-time L1 norm so the phase mean stays clear of the
/// pure phases; `r1` caps the control-space norm the well-posedness theory
/// works in. Both are diagnostics here: only the box is projected.
#[derive(Debug, Clone)]
pub struct AdmissibleSet {
    pub r_min: Vec<ScalarField>,
    pub r_max: Vec<ScalarField>,
    pub r0: f64,
    pub r1: f64,
    pub delta0: f64,
}

impl AdmissibleSet {
    pub fn new(
        r_min: Vec<ScalarField>,
        r_max: Vec<ScalarField>,
        r0: f64,
        r1: f64,
        delta0: f64,
    ) -> Result<Self> {
        if r_min.len() != r_max.len() || r_min.is_empty() {
            return Err(ChdError::Construction(format!(
                "bound sequences must have equal nonzero length: {} vs {}",
                r_min.len(),
                r_max.len()
            )));
        }
        for (n, (lo, hi)) in r_min.iter().zip(&r_max).enumerate() {
            if lo.data.iter().zip(&hi.data).any(|(a, b)| a > b) {
                return Err(ChdError::Construction(format!(
                    "r_min exceeds r_max at step {n}"
                )));
            }
        }
        if !(r0 > 0.0) || !(r1 > 0.0) {
            return Err(ChdError::Construction(format!(
                "budgets must be positive: r0 = {r0}, r1 = {r1}"
            )));
        }
        if !(delta0 > 0.0 && delta0 < 0.5) {
            return Err(ChdError::Construction(format!(
                "delta0 = {delta0} outside (0, 1/2)"
            )));
        }
        Ok(AdmissibleSet {
            r_min,
            r_max,
            r0,
            r1,
            delta0,
        })
    }

    /// Constant box on every step.
    pub fn uniform(
        grid: Grid2D,
        n_steps: usize,
        lo: f64,
        hi: f64,
        r0: f64,
        r1: f64,
        delta0: f64,
    ) -> Result<Self> {
        AdmissibleSet::new(
            vec![ScalarField::constant(grid, lo); n_steps],
            vec![ScalarField::constant(grid, hi); n_steps],
            r0,
            r1,
            delta0,
        )
    }

    /// Largest mass budget keeping the phase mean delta0 clear of the pure
    /// phases: (1 - 2 delta0 - |mean phi0|) |Omega|.
    pub fn mass_budget(phi0: &ScalarField, delta0: f64) -> Result<f64> {
        let m = phi0.mean().abs();
        if !(delta0 > 0.0 && 2.0 * delta0 < 1.0 - m) {
            return Err(ChdError::Construction(format!(
                "delta0 = {delta0} outside (0, {}) for |mean phi0| = {m}",
                0.5 * (1.0 - m)
            )));
        }
        Ok((1.0 - 2.0 * delta0 - m) * phi0.grid.area())
    }

    pub fn n_steps(&self) -> usize {
        self.r_min.len()
    }
}

/// Budget diagnostics attached to a projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    /// Space-time L1 norm of the projected control.
    pub l1_norm: f64,
    /// True when l1_norm exceeds the mass budget r0.
    pub l1_exceeded: bool,
    /// Cells moved by the clamp.
    pub clamped_cells: usize,
}

/// Space-time L1 norm of a control sequence.
pub fn control_l1_norm(r: &[ScalarField], tau: f64) -> f64 {
    let a = r.first().map_or(0.0, |f| f.grid.cell_area());
    tau * a
        * r.iter()
            .map(|f| f.data.iter().map(|v| v.abs()).sum::<f64>())
            .sum::<f64>()
}

/// Control-space norm: the L2-in-time H1 norm plus a difference-quotient
/// dual-norm term for the time derivative, realized through (I + B)^{-1/2}.
pub fn control_u_norm(r: &[ScalarField], tau: f64, basis: &CosineBasis) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    let mut h1 = 0.0;
    for f in r {
        let g = gradient(f);
        h1 += f.inner(f) + g.inner(&g);
    }
    let mut dual = 0.0;
    for pair in r.windows(2) {
        let mut jump = pair[1].clone();
        jump.axpy(-1.0, &pair[0]);
        let lifted = basis.apply_ib_invsqrt(&jump);
        dual += lifted.inner(&lifted) / tau;
    }
    (tau * h1).sqrt() + dual.sqrt()
}

/// Pointwise clamp into the box, with budget diagnostics on the result.
pub fn project_admissible(
    r: &[ScalarField],
    set: &AdmissibleSet,
    tau: f64,
) -> (Vec<ScalarField>, BudgetReport) {
    assert_eq!(r.len(), set.n_steps(), "control/bound step count");
    let mut clamped = 0usize;
    let projected: Vec<ScalarField> = r
        .iter()
        .zip(set.r_min.iter().zip(&set.r_max))
        .map(|(f, (lo, hi))| {
            let mut out = f.clone();
            for ((v, a), b) in out.data.iter_mut().zip(&lo.data).zip(&hi.data) {
                let c = v.clamp(*a, *b);
                if c != *v {
                    clamped += 1;
                    *v = c;
                }
            }
            out
        })
        .collect();
    let l1 = control_l1_norm(&projected, tau);
    let report = BudgetReport {
        l1_norm: l1,
        l1_exceeded: l1 > set.r0,
        clamped_cells: clamped,
    };
    (projected, report)
}

/// First-order optimality measures at a control r with costate rho.
///
/// The variational-inequality residual is the worst linearized decrease
/// over the box, exact by per-cell vertex enumeration. The projection
/// residual is the normalized fixed-point gap ||r - P(-rho/beta)||; for
/// beta = 0 it falls back to the unit-step projected-gradient gap.
pub fn optimality_residuals(
    r: &[ScalarField],
    rho: &[&ScalarField],
    set: &AdmissibleSet,
    beta: f64,
    tau: f64,
) -> (f64, f64) {
    assert_eq!(r.len(), rho.len(), "control/costate step count");
    assert_eq!(r.len(), set.n_steps(), "control/bound step count");
    let a = r.first().map_or(0.0, |f| f.grid.cell_area());

    let mut decrease = 0.0;
    for (n, (rn, rhon)) in r.iter().zip(rho).enumerate() {
        for (i, (&v, &p)) in rn.data.iter().zip(&rhon.data).enumerate() {
            let g = p + beta * v;
            let lo = set.r_min[n].data[i];
            let hi = set.r_max[n].data[i];
            decrease += (g * (lo - v)).min(g * (hi - v));
        }
    }
    let vi_residual = -(tau * a * decrease);

    let point: Vec<ScalarField> = r
        .iter()
        .zip(rho)
        .map(|(rn, rhon)| {
            if beta > 0.0 {
                rhon.map(|p| -p / beta)
            } else {
                let mut out = rn.clone();
                out.axpy(-1.0, rhon);
                out
            }
        })
        .collect();
    let (projected, _) = project_admissible(&point, set, tau);
    let gap: Vec<ScalarField> = r
        .iter()
        .zip(&projected)
        .map(|(rn, pn)| {
            let mut d = rn.clone();
            d.axpy(-1.0, pn);
            d
        })
        .collect();
    let projection_residual = qr_norm(&gap, tau) / qr_norm(r, tau).max(1.0);
    (vi_residual, projection_residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projection residual reached the tolerance.
    Converged,
    /// Iteration cap reached with the residual still above tolerance.
    IterationCap,
}

/// One row of the descent history.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeIterate {
    pub k: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub projection_residual: f64,
    /// Accepted Armijo step that produced this iterate; 0 at k = 0.
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub history: Vec<OptimizeIterate>,
    pub termination: Termination,
    pub final_projection_residual: f64,
    pub final_vi_residual: f64,
    pub budget: BudgetReport,
    pub u_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Stop when the normalized projection residual falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub armijo_decrease: f64,
    pub backtrack_factor: f64,
    /// Line-search failures tolerated before the stall error.
    pub max_backtracks: usize,
    /// Permit beta = 0 (disables the 1/beta step seed; uses step 1).
    pub allow_zero_beta: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol: 1e-3,
            max_iters: 80,
            armijo_decrease: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            allow_zero_beta: false,
        }
    }
}

/// Projected-gradient descent on the reduced cost.
///
/// Each iterate projects r - s (rho + beta r) into the box, with s found
/// by Armijo backtracking from 1/beta. Stops at the normalized fixed-point
/// residual of the projection formula or the iteration cap; 30 consecutive
/// line-search failures raise the stall error.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    phi0: &ScalarField,
    s_sources: &[ScalarField],
    r_start: &[ScalarField],
    tau: f64,
    set: &AdmissibleSet,
    cfg: &CostConfig,
    model: &Model,
    solver: &SolverOptions,
    opt: &OptimizeOptions,
    basis: &CosineBasis,
) -> Result<(Vec<ScalarField>, OptimizeReport)> {
    if cfg.beta <= 0.0 && !opt.allow_zero_beta {
        return Err(ChdError::Validation(vec![format!(
            "projected gradient needs beta > 0 for its step seed and stopping rule; got beta = {} \
             (set allow_zero_beta to override)",
            cfg.beta
        )]));
    }
    let n_steps = set.n_steps();
    assert_eq!(s_sources.len(), n_steps, "source/bound step count");

    let evaluate = |r: &[ScalarField]| -> Result<(Trajectory, f64)> {
        let schedule = SourceSchedule::new(s_sources.to_vec(), r.to_vec())?;
        let traj = run(phi0, &schedule, tau, model, solver, basis)?;
        let j = cost(&traj, r, cfg);
        Ok((traj, j))
    };

    let (mut r, _) = project_admissible(r_start, set, tau);
    let (mut traj, mut j) = evaluate(&r)?;
    let s_seed = if cfg.beta > 0.0 { 1.0 / cfg.beta } else { 1.0 };

    let mut history: Vec<OptimizeIterate> = Vec::new();
    let mut accepted_step = 0.0;
    let termination;
    let (final_vi, final_proj);
    loop {
        let k = history.len();
        let schedule = SourceSchedule::new(s_sources.to_vec(), r.clone())?;
        let adj = costate(&traj, &schedule, cfg, model, solver, basis)?;
        let grad = reduced_gradient(&adj, &r, cfg.beta);
        let rho = adj.rho_seq();
        let (vi, proj) = optimality_residuals(&r, &rho, set, cfg.beta, tau);
        history.push(OptimizeIterate {
            k,
            cost: j,
            grad_norm: qr_norm(&grad, tau),
            projection_residual: proj,
            step_size: accepted_step,
        });
        if proj <= opt.tol {
            termination = Termination::Converged;
            final_vi = vi;
            final_proj = proj;
            break;
        }
        if k >= opt.max_iters {
            termination = Termination::IterationCap;
            final_vi = vi;
            final_proj = proj;
            break;
        }

        let mut step = s_seed;
        let mut accepted = None;
        for _attempt in 0..opt.max_backtracks {
            let trial_point: Vec<ScalarField> = r
                .iter()
                .zip(&grad)
                .map(|(rn, gn)| {
                    let mut t = rn.clone();
                    t.axpy(-step, gn);
                    t
                })
                .collect();
            let (trial, _) = project_admissible(&trial_point, set, tau);
            let d: Vec<ScalarField> = trial
                .iter()
                .zip(&r)
                .map(|(t, rn)| {
                    let mut d = t.clone();
                    d.axpy(-1.0, rn);
                    d
                })
                .collect();
            let slope = qr_inner(&grad, &d, tau);
            let (traj_trial, j_trial) = evaluate(&trial)?;
            if j_trial <= j + opt.armijo_decrease * slope {
                accepted = Some((trial, traj_trial, j_trial, step));
                break;
            }
            step *= opt.backtrack_factor;
        }
        match accepted {
            Some((trial, traj_trial, j_trial, step)) => {
                r = trial;
                traj = traj_trial;
                j = j_trial;
                accepted_step = step;
            }
            None => {
                return Err(ChdError::Stall {
                    iteration: k,
                    attempts: opt.max_backtracks,
                })
            }
        }
    }

    let (_, budget) = project_admissible(&r, set, tau);
    let report = OptimizeReport {
        iterations: history.len().saturating_sub(1),
        history,
        termination,
        final_projection_residual: final_proj,
        final_vi_residual: final_vi,
        budget,
        u_norm: control_u_norm(&r, tau, basis),
    };
    Ok((r, report))
}
