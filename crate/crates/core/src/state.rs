//! Forward time integration of the Cahn-Hilliard-Darcy system
//!
//! ```text
//! nu(phi) u = -grad P + mu grad phi         (Darcy)
//! div u = S
//! phi_t + div(phi u) = lap mu + S + R       (transport)
//! mu = -lap phi + psi'(phi)
//! ```
//!
//! with no-flux boundaries. One step of the convex-splitting scheme solves
//!
//! ```text
//! (phi' - phi)/tau + div(avg(phi) u) = -B mu_hat + S + R
//! mu_hat = B phi' + F'(phi') - theta0 phi
//! ```
//!
//! for phi' (primes denote the new level, B the negative Laplacian): the
//! convex entropy slope is implicit, the concave quadratic and the advection
//! are explicit, and u comes from a fresh Darcy solve at the old level with
//! the current source. The split potential mu_hat exists only inside the
//! step; stored snapshots always carry the consistent chemical potential
//! mu = B phi + psi'(phi) of their own phase field.
//!
//! Newton's method on the update equation is safeguarded twice: iterates are
//! kept strictly inside (-1, 1) when the potential is singular (the domain
//! error of F' is a programming error past this point), and steps are halved
//! until the residual actually decreases. After convergence the solution is
//! shifted by a constant (far below solver tolerance) so the discrete mass
//! balance mean(phi') = mean(phi) + tau (mean S + mean R) holds exactly.

use crate::darcy::{darcy_flow, face_mobility, kinetic_energy, DarcySolution};
use crate::error::{ChdError, Result};
use crate::grid::{
    compensated_sum, divergence, face_average, gradient, laplacian_neumann, Grid2D, ScalarField,
};
use crate::materials::{PotentialParams, ViscosityModel};
use crate::spectral::CosineBasis;
use crate::update_op::UpdateOp;

/// Constitutive content of a run: the potential and the viscosity law.
#[derive(Debug, Clone)]
pub struct Model {
    pub potential: PotentialParams,
    pub viscosity: ViscosityModel,
}

/// Tolerances and iteration caps for the nested solves, plus the admissible
/// mean margin delta0 of the running constraint.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub delta0: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            newton_tol: 1e-11,
            newton_max_iter: 50,
            cg_tol: 1e-12,
            cg_max_iter: 800,
            delta0: 0.05,
        }
    }
}

/// One time level of the state system plus its diagnostics.
#[derive(Debug, Clone)]
pub struct StateSnapshot {
    pub index: usize,
    pub t: f64,
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub darcy: DarcySolution,
    pub energy: f64,
    pub phi_mean: f64,
    /// Distance to the pure phases, 1 - max|phi|.
    pub sep_margin: f64,
}

/// Time-indexed sources: `s` is the prescribed mean-free source, `r` the
/// control. One entry per step.
#[derive(Debug, Clone)]
pub struct SourceSchedule {
    pub s: Vec<ScalarField>,
    pub r: Vec<ScalarField>,
}

impl SourceSchedule {
    pub fn new(s: Vec<ScalarField>, r: Vec<ScalarField>) -> Result<Self> {
        if s.len() != r.len() {
            return Err(ChdError::Construction(format!(
                "schedule lengths differ: {} prescribed sources vs {} controls",
                s.len(),
                r.len()
            )));
        }
        for (n, field) in s.iter().enumerate() {
            let m = field.mean();
            if m.abs() > 1e-12 {
                return Err(ChdError::Mean {
                    mean: m,
                    limit: 1e-12,
                });
            }
            let _ = n;
        }
        Ok(SourceSchedule { s, r })
    }

    pub fn zero(grid: Grid2D, n_steps: usize) -> Self {
        SourceSchedule {
            s: vec![ScalarField::zeros(grid); n_steps],
            r: vec![ScalarField::zeros(grid); n_steps],
        }
    }

    /// Number of time steps covered.
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Replace the control sequence, keeping the prescribed source.
    pub fn with_control(&self, r: Vec<ScalarField>) -> Result<Self> {
        SourceSchedule::new(self.s.clone(), r)
    }
}

/// The stored forward trajectory: snapshots at t = 0, tau, ..., N tau.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<StateSnapshot>,
    pub tau: f64,
    pub config_hash: u64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn last(&self) -> &StateSnapshot {
        self.snapshots.last().expect("trajectory never empty")
    }
}

/// Map the entropy derivative of the given order over a field.
pub(crate) fn entropy_field(
    p: &PotentialParams,
    f: &ScalarField,
    order: usize,
) -> Result<ScalarField> {
    let data = f
        .data
        .iter()
        .map(|&s| p.entropy_f(s, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarField::from_data(f.grid, data))
}

/// Map psi derivatives over a field.
pub(crate) fn psi_field(p: &PotentialParams, f: &ScalarField, order: usize) -> Result<ScalarField> {
    let data = f
        .data
        .iter()
        .map(|&s| p.psi(s, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarField::from_data(f.grid, data))
}

/// Consistent chemical potential mu = B phi + psi'(phi).
pub fn chemical_potential(phi: &ScalarField, model: &Model) -> Result<ScalarField> {
    let mut mu = laplacian_neumann(phi);
    mu.scale(-1.0);
    mu.axpy(1.0, &psi_field(&model.potential, phi, 1)?);
    Ok(mu)
}

/// Ginzburg-Landau energy E = 1/2 |grad phi|^2 + integral of psi(phi).
pub fn energy(phi: &ScalarField, model: &Model) -> Result<f64> {
    let g = gradient(phi);
    let psi = psi_field(&model.potential, phi, 0)?;
    Ok(0.5 * g.inner(&g) + psi.integral())
}

fn snapshot_from(
    index: usize,
    t: f64,
    phi: ScalarField,
    source: &ScalarField,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<StateSnapshot> {
    let mu = chemical_potential(&phi, model)?;
    let darcy = darcy_flow(
        &phi,
        &mu,
        source,
        &model.viscosity,
        basis,
        opts.cg_tol,
        opts.cg_max_iter,
    )?;
    let energy = energy(&phi, model)?;
    let phi_mean = phi.mean();
    let sep_margin = 1.0 - phi.norm_inf();
    Ok(StateSnapshot {
        index,
        t,
        phi,
        mu,
        darcy,
        energy,
        phi_mean,
        sep_margin,
    })
}

/// Darcy flow at a stored level with a given source: the velocity that
/// advects the step leaving this level. Deterministic, so recomputing it
/// reproduces the step's internal solve bit for bit.
pub fn advecting_flow(
    snap: &StateSnapshot,
    s: &ScalarField,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<DarcySolution> {
    darcy_flow(
        &snap.phi,
        &snap.mu,
        s,
        &model.viscosity,
        basis,
        opts.cg_tol,
        opts.cg_max_iter,
    )
}

/// Build the t = 0 snapshot. The diagnostic Darcy solve uses a zero source;
/// each step recomputes the advecting velocity with its own source anyway.
pub fn initial_state(
    phi0: &ScalarField,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<StateSnapshot> {
    if model.potential.is_singular() && phi0.norm_inf() >= 1.0 {
        return Err(ChdError::Separation {
            step: 0,
            max_abs_phi: phi0.norm_inf(),
        });
    }
    let zero = ScalarField::zeros(phi0.grid);
    snapshot_from(0, 0.0, phi0.clone(), &zero, model, opts, basis)
}

/// Margin the Newton safeguard enforces inside (-1, 1) in singular mode.
const SEPARATION_GUARD: f64 = 1e-8;
/// Smallest admissible Newton damping factor.
const MIN_DAMPING: f64 = 1e-12;

/// Residual of the implicit update equation at the candidate new state.
fn update_residual(
    phi: &ScalarField,
    phi_old: &ScalarField,
    b: &ScalarField,
    tau: f64,
    p: &PotentialParams,
) -> Result<ScalarField> {
    let mut inner = laplacian_neumann(phi);
    inner.scale(-1.0);
    inner.axpy(1.0, &entropy_field(p, phi, 1)?);
    inner.axpy(-p.theta0, phi_old);
    let mut g = laplacian_neumann(&inner);
    g.scale(-1.0);
    g.axpy(1.0 / tau, phi);
    g.axpy(-1.0, b);
    Ok(g)
}

/// Advance one step of length tau under sources (s, r).
pub fn step(
    prev: &StateSnapshot,
    s: &ScalarField,
    r: &ScalarField,
    tau: f64,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<StateSnapshot> {
    debug_assert!(tau > 0.0);
    let index = prev.index + 1;
    let p = &model.potential;
    // Advecting velocity: Darcy at the old level with the current source.
    let advect = advecting_flow(prev, s, model, opts, basis)?;
    let adv = divergence(&face_average(&prev.phi).mul(&advect.u));
    let mut b = prev.phi.clone();
    b.scale(1.0 / tau);
    b.axpy(-1.0, &adv);
    b.axpy(1.0, s);
    b.axpy(1.0, r);
    let b_scale = b.dot(&b).sqrt().max(1e-300);

    let mut phi = prev.phi.clone();
    let mut res = update_residual(&phi, &prev.phi, &b, tau, p)?;
    let mut res_norm = res.dot(&res).sqrt();
    let mut converged = res_norm <= opts.newton_tol * b_scale;
    for _ in 0..opts.newton_max_iter {
        if converged {
            break;
        }
        let c = entropy_field(p, &phi, 2)?;
        let op = UpdateOp::new(basis, tau, c, opts.cg_tol, opts.cg_max_iter);
        let mut rhs = res.clone();
        rhs.scale(-1.0);
        let (delta, _) = op.solve(&rhs)?;
        let mut lambda = 1.0;
        if p.is_singular() {
            loop {
                let mut cand = phi.clone();
                cand.axpy(lambda, &delta);
                if cand.norm_inf() <= 1.0 - SEPARATION_GUARD {
                    break;
                }
                lambda *= 0.5;
                if lambda < MIN_DAMPING {
                    return Err(ChdError::Separation {
                        step: index,
                        max_abs_phi: {
                            let mut full = phi.clone();
                            full.axpy(1.0, &delta);
                            full.norm_inf()
                        },
                    });
                }
            }
        }
        loop {
            let mut cand = phi.clone();
            cand.axpy(lambda, &delta);
            let cand_res = update_residual(&cand, &prev.phi, &b, tau, p)?;
            let cand_norm = cand_res.dot(&cand_res).sqrt();
            if cand_norm <= (1.0 - 0.25 * lambda) * res_norm {
                phi = cand;
                res = cand_res;
                res_norm = cand_norm;
                break;
            }
            lambda *= 0.5;
            if lambda < MIN_DAMPING {
                return Err(ChdError::NewtonFailure {
                    step: index,
                    iterations: opts.newton_max_iter,
                    residual: res_norm / b_scale,
                });
            }
        }
        converged = res_norm <= opts.newton_tol * b_scale;
    }
    if !converged {
        return Err(ChdError::NewtonFailure {
            step: index,
            iterations: opts.newton_max_iter,
            residual: res_norm / b_scale,
        });
    }

    // Exact mass balance: shift by a constant far below solver tolerance.
    let target_mean = prev.phi_mean + tau * (s.mean() + r.mean());
    phi.add_constant(target_mean - phi.mean());
    if p.is_singular() && phi.norm_inf() >= 1.0 {
        return Err(ChdError::Separation {
            step: index,
            max_abs_phi: phi.norm_inf(),
        });
    }
    snapshot_from(index, prev.t + tau, phi, s, model, opts, basis)
}

/// March the full schedule from phi0. The running mean constraint
/// |mean(phi)| <= 1 - delta0 is monitored every step.
pub fn run(
    phi0: &ScalarField,
    schedule: &SourceSchedule,
    tau: f64,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<Trajectory> {
    let mut snapshots = Vec::with_capacity(schedule.len() + 1);
    snapshots.push(initial_state(phi0, model, opts, basis)?);
    for n in 0..schedule.len() {
        let next = step(
            &snapshots[n],
            &schedule.s[n],
            &schedule.r[n],
            tau,
            model,
            opts,
            basis,
        )?;
        let limit = 1.0 - opts.delta0;
        if next.phi_mean.abs() > limit {
            return Err(ChdError::Constraint {
                step: next.index,
                mean_phi: next.phi_mean,
                limit,
            });
        }
        snapshots.push(next);
    }
    Ok(Trajectory {
        snapshots,
        tau,
        config_hash: 0,
    })
}

/// Per-step defect of the discrete energy identity, oriented so that pure
/// numerical dissipation is positive:
///
/// ```text
/// res[n] = -( (E' - E)/tau + |grad mu_hat|^2 + kin
///             - <S, P + mu_hat - phi mu> - <R, mu_hat> )
/// ```
///
/// where primes are level n+1, unprimed fields level n, mu_hat the split
/// potential of the step, kin the nu-weighted advecting velocity norm. For
/// S = R = 0 this is the convex-splitting dissipation minus an O(tau^2)
/// advection cross term, so it stays above -1e-10 at sane step sizes and
/// shrinks linearly with tau.
pub fn energy_identity_residual(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<Vec<f64>> {
    assert_eq!(traj.n_steps(), schedule.len(), "schedule/trajectory mismatch");
    let tau = traj.tau;
    let p = &model.potential;
    let mut out = Vec::with_capacity(traj.n_steps());
    for n in 0..traj.n_steps() {
        let old = &traj.snapshots[n];
        let new = &traj.snapshots[n + 1];
        let s = &schedule.s[n];
        let r = &schedule.r[n];
        let advect = advecting_flow(old, s, model, opts, basis)?;
        let (nu_face, _) = face_mobility(&old.phi, &model.viscosity);
        let kin = kinetic_energy(&advect.u, &nu_face);
        let mut mu_hat = laplacian_neumann(&new.phi);
        mu_hat.scale(-1.0);
        mu_hat.axpy(1.0, &entropy_field(p, &new.phi, 1)?);
        mu_hat.axpy(-p.theta0, &old.phi);
        let gmu = gradient(&mu_hat);
        let s_pair = s.inner(&advect.p) + s.inner(&mu_hat) - s.inner(&old.phi.mul(&old.mu));
        let r_pair = r.inner(&mu_hat);
        let res = (new.energy - old.energy) / tau + gmu.inner(&gmu) + kin - s_pair - r_pair;
        out.push(-res);
    }
    Ok(out)
}

/// Exact mass-balance defect of a finished run, the quantity pinned to zero
/// by the post-Newton shift.
pub fn mass_balance_defect(traj: &Trajectory, schedule: &SourceSchedule) -> f64 {
    let start = traj.snapshots[0].phi_mean;
    let end = traj.last().phi_mean;
    let injected = compensated_sum(
        (0..schedule.len()).map(|n| traj.tau * (schedule.s[n].mean() + schedule.r[n].mean())),
    );
    end - start - injected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::ViscosityFamily;

    fn model(eps: f64) -> Model {
        Model {
            potential: PotentialParams::new(1.0, 2.0, eps, 0.5).unwrap(),
            viscosity: ViscosityModel::new(
                ViscosityFamily::TanhBlend {
                    base: 0.7,
                    gain: 1.0,
                    rate: 0.9,
                },
                0.5,
                2.0,
            )
            .unwrap(),
        }
    }

    fn smooth_phi(g: Grid2D, amp: f64) -> ScalarField {
        let pi = std::f64::consts::PI;
        ScalarField::from_fn(g, |x, y| {
            amp * (pi * x).cos() * (pi * y).cos() + 0.2 * amp * (2.0 * pi * x).cos()
        })
    }

    #[test]
    fn constant_state_is_a_fixed_point() {
        let g = Grid2D::unit(16);
        let basis = CosineBasis::new(g);
        let m = model(0.0);
        let opts = SolverOptions::default();
        let phi0 = ScalarField::constant(g, 0.2);
        let init = initial_state(&phi0, &m, &opts, &basis).unwrap();
        assert!(init.darcy.u.norm_inf() < 1e-12);
        let zero = ScalarField::zeros(g);
        let next = step(&init, &zero, &zero, 1e-2, &m, &opts, &basis).unwrap();
        let mut worst = 0.0f64;
        for v in &next.phi.data {
            worst = worst.max((v - 0.2).abs());
        }
        assert!(worst < 1e-13, "drift {worst}");
    }

    #[test]
    fn mass_balance_is_exact_with_sources() {
        let g = Grid2D::unit(24);
        let basis = CosineBasis::new(g);
        let m = model(0.1);
        let opts = SolverOptions::default();
        let pi = std::f64::consts::PI;
        let n = 20;
        let mut s_seq = Vec::new();
        let mut r_seq = Vec::new();
        for k in 0..n {
            let mut s = ScalarField::from_fn(g, |x, y| {
                0.3 * ((2.0 + k as f64) * x).sin() * (pi * y).cos()
            });
            s.project_zero_mean();
            s_seq.push(s);
            r_seq.push(ScalarField::from_fn(g, |x, y| {
                0.2 * (x - 0.5) + 0.05 * (y + 0.1 * k as f64).cos()
            }));
        }
        let schedule = SourceSchedule::new(s_seq, r_seq).unwrap();
        let traj = run(&smooth_phi(g, 0.4), &schedule, 2e-3, &m, &opts, &basis).unwrap();
        let defect = mass_balance_defect(&traj, &schedule);
        assert!(defect.abs() < 1e-13, "defect {defect}");
    }

    #[test]
    fn zero_steps_yields_initial_snapshot_only() {
        let g = Grid2D::unit(8);
        let basis = CosineBasis::new(g);
        let m = model(0.1);
        let opts = SolverOptions::default();
        let schedule = SourceSchedule::zero(g, 0);
        let traj = run(&smooth_phi(g, 0.3), &schedule, 1e-3, &m, &opts, &basis).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.n_steps(), 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let g = Grid2D::unit(16);
        let basis = CosineBasis::new(g);
        let m = model(0.0);
        let opts = SolverOptions::default();
        let schedule = SourceSchedule::zero(g, 5);
        let a = run(&smooth_phi(g, 0.5), &schedule, 5e-3, &m, &opts, &basis).unwrap();
        let b = run(&smooth_phi(g, 0.5), &schedule, 5e-3, &m, &opts, &basis).unwrap();
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.phi.data, sb.phi.data);
            assert_eq!(sa.darcy.p.data, sb.darcy.p.data);
        }
    }

    #[test]
    fn energy_decreases_without_sources() {
        let g = Grid2D::unit(24);
        let basis = CosineBasis::new(g);
        let m = model(0.1);
        let opts = SolverOptions::default();
        let schedule = SourceSchedule::zero(g, 30);
        let traj = run(&smooth_phi(g, 0.5), &schedule, 5e-3, &m, &opts, &basis).unwrap();
        for w in traj.snapshots.windows(2) {
            assert!(
                w[1].energy <= w[0].energy + 1e-10,
                "energy rose: {} -> {}",
                w[0].energy,
                w[1].energy
            );
        }
    }

    #[test]
    fn separation_holds_in_singular_mode() {
        let g = Grid2D::unit(24);
        let basis = CosineBasis::new(g);
        let m = model(0.0);
        let opts = SolverOptions::default();
        let phi0 = ScalarField::from_fn(g, |x, y| {
            0.9 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
        });
        let schedule = SourceSchedule::zero(g, 20);
        let traj = run(&phi0, &schedule, 2e-3, &m, &opts, &basis).unwrap();
        let min_margin = traj
            .snapshots
            .iter()
            .map(|s| s.sep_margin)
            .fold(f64::INFINITY, f64::min);
        assert!(min_margin > 0.0, "separation lost: {min_margin}");
    }

    #[test]
    fn stored_mu_is_exactly_consistent() {
        let g = Grid2D::unit(16);
        let basis = CosineBasis::new(g);
        let m = model(0.0);
        let opts = SolverOptions::default();
        let schedule = SourceSchedule::zero(g, 3);
        let traj = run(&smooth_phi(g, 0.5), &schedule, 5e-3, &m, &opts, &basis).unwrap();
        for snap in &traj.snapshots {
            let want = chemical_potential(&snap.phi, &m).unwrap();
            assert_eq!(snap.mu.data, want.data);
        }
    }

    #[test]
    fn energy_identity_residual_behaves() {
        let g = Grid2D::unit(16);
        let basis = CosineBasis::new(g);
        let m = model(0.1);
        let opts = SolverOptions::default();
        // Constant state: every term vanishes.
        let schedule = SourceSchedule::zero(g, 4);
        let traj = run(
            &ScalarField::constant(g, 0.1),
            &schedule,
            1e-2,
            &m,
            &opts,
            &basis,
        )
        .unwrap();
        for r in energy_identity_residual(&traj, &schedule, &m, &opts, &basis).unwrap() {
            assert!(r.abs() < 1e-11, "constant-state residual {r}");
        }
        // Source-free: dissipation sign and first-order decay in tau. The
        // step must resolve the dominant mode (tau lam^2 well under one) or
        // implicit damping hides the linear decay of the first-step layer.
        let pi = std::f64::consts::PI;
        let phi0 = ScalarField::from_fn(g, |x, y| {
            0.3 * (pi * x).cos() + 0.05 * (pi * x).cos() * (pi * y).cos()
        });
        let tau = 5e-4;
        let sched1 = SourceSchedule::zero(g, 40);
        let t1 = run(&phi0, &sched1, tau, &m, &opts, &basis).unwrap();
        let r1 = energy_identity_residual(&t1, &sched1, &m, &opts, &basis).unwrap();
        for r in &r1 {
            assert!(*r > -1e-10, "dissipation sign violated: {r}");
        }
        let sched2 = SourceSchedule::zero(g, 80);
        let t2 = run(&phi0, &sched2, tau / 2.0, &m, &opts, &basis).unwrap();
        let r2 = energy_identity_residual(&t2, &sched2, &m, &opts, &basis).unwrap();
        let m1 = r1.iter().cloned().fold(0.0f64, f64::max);
        let m2 = r2.iter().cloned().fold(0.0f64, f64::max);
        assert!(m1 / m2 >= 1.7, "residual ratio {} under tau halving", m1 / m2);
    }

    #[test]
    fn mean_constraint_violation_aborts() {
        let g = Grid2D::unit(12);
        let basis = CosineBasis::new(g);
        let m = model(0.1);
        let opts = SolverOptions::default();
        let r = vec![ScalarField::constant(g, 30.0); 10];
        let s = vec![ScalarField::zeros(g); 10];
        let schedule = SourceSchedule::new(s, r).unwrap();
        let err = run(
            &ScalarField::constant(g, 0.0),
            &schedule,
            1e-2,
            &m,
            &opts,
            &basis,
        )
        .unwrap_err();
        assert!(matches!(err, ChdError::Constraint { .. }), "{err:?}");
    }

    #[test]
    fn schedule_rejects_sources_with_mass() {
        let g = Grid2D::unit(8);
        let s = vec![ScalarField::constant(g, 1e-6)];
        let r = vec![ScalarField::zeros(g)];
        assert!(matches!(
            SourceSchedule::new(s, r),
            Err(ChdError::Mean { .. })
        ));
    }

    #[test]
    fn initial_state_rejects_saturated_phase() {
        let g = Grid2D::unit(8);
        let basis = CosineBasis::new(g);
        let m = model(0.0);
        let opts = SolverOptions::default();
        let phi0 = ScalarField::constant(g, 1.0);
        assert!(matches!(
            initial_state(&phi0, &m, &opts, &basis),
            Err(ChdError::Separation { .. })
        ));
    }

    #[test]
    fn initial_energy_matches_independent_quadrature() {
        // phi0 = 0.3 cos(pi x): gradient part approaches 0.09 pi^2 / 4 and
        // the potential part is integrated with high-resolution Simpson.
        let g = Grid2D::unit(64);
        let basis = CosineBasis::new(g);
        let m = model(0.0);
        let opts = SolverOptions::default();
        let pi = std::f64::consts::PI;
        let phi0 = ScalarField::from_fn(g, |x, _| 0.3 * (pi * x).cos());
        let snap = initial_state(&phi0, &m, &opts, &basis).unwrap();
        let grad_exact = 0.09 * pi * pi / 4.0;
        let p = &m.potential;
        let nq = 10_000;
        let mut pot = 0.0;
        for i in 0..=nq {
            let x = i as f64 / nq as f64;
            let w = if i == 0 || i == nq {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            pot += w * p.psi(0.3 * (pi * x).cos(), 0).unwrap();
        }
        pot /= 3.0 * nq as f64;
        let want = grad_exact + pot;
        assert!(
            (snap.energy - want).abs() < 3e-3 * want.abs(),
            "{} vs {}",
            snap.energy,
            want
        );
    }
}
