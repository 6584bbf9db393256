//! Costate derivative, Hessian-vector products, and the sufficiency probe
//!
//! The reduced gradient is rho + beta R with rho the costate, so the
//! reduced Hessian acting on a direction h needs the derivative of the
//! costate along the state perturbation caused by h. That derivative
//! solves the same backward system as the costate itself, at the same
//! base trajectory, with forcing assembled from the tangent fields
//! (xi, eta, v) and the base costate fields (w, rho, zeta):
//!
//! ```text
//! g1 = -nu'(phi) xi w  + xi grad rho
//! g2 = v . grad rho + psi'''(phi) xi zeta - w . grad eta
//!      - nu''(phi) xi u . w - nu'(phi) v . w + alpha2 xi
//! g3 = w . grad xi
//! g4 = alpha1 xi(T)
//! ```
//!
//! Each term is the derivative of one coefficient of the backward sweep,
//! so the assembled sweep is the exact derivative of the discrete costate
//! map. Two discrete artifacts of the time stepping: the xi grad rho term
//! of g1 replaces -rho grad xi (same flow, shifted pressure gauge), and
//! the psi''' xi zeta product splits across adjacent time levels because
//! the implicit update evaluates convexity at the new level.
//!
//! The quadratic form J''[h1, h2] = <beta h1 + rho_tilde(h1), h2> feeds
//! the sufficiency probe: directions are first projected into the cone of
//! allowed variations at R (zero on the strongly active set, one-sided at
//! the box faces), then their Rayleigh quotients are sampled. A sampled
//! probe bounds nothing; it reports evidence, and says so.

use crate::adjoint::{adjoint_sweep, AdjointForcing, AdjointTrajectory};
use crate::control::{qr_inner, qr_norm, AdmissibleSet, CostConfig};
use crate::error::Result;
use crate::grid::{
    divergence, face_average, face_average_transpose, gradient, laplacian_neumann, ScalarField,
};
use crate::spectral::CosineBasis;
use crate::state::{advecting_flow, entropy_field, Model, SolverOptions, SourceSchedule, Trajectory};
use crate::tangent::{ds_apply, TangentTrajectory};

/// Backward forcing whose sweep yields the derivative of the costate map
/// along the tangent trajectory. Valid only when tangent and costate were
/// produced on this same base trajectory.
pub fn second_order_forcing(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    costate_traj: &AdjointTrajectory,
    cfg: &CostConfig,
    tangent: &TangentTrajectory,
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<AdjointForcing> {
    let n_steps = traj.n_steps();
    assert_eq!(costate_traj.n_steps(), n_steps, "costate/trajectory mismatch");
    assert_eq!(tangent.n_steps(), n_steps, "tangent/trajectory mismatch");
    let p = &model.potential;
    let visc = &model.viscosity;
    let grid = traj.snapshots[0].phi.grid;
    let tau = traj.tau;

    let mut g1 = Vec::with_capacity(n_steps);
    let mut g2 = vec![ScalarField::zeros(grid); n_steps + 1];
    let mut g3 = Vec::with_capacity(n_steps);

    for n in 0..n_steps {
        let base = &traj.snapshots[n];
        let xi = &tangent.snapshots[n].xi;
        let xi_next = &tangent.snapshots[n + 1].xi;
        let v = &tangent.snapshots[n + 1].v;
        let rho = &costate_traj.snapshots[n].rho;
        let w = &costate_traj.snapshots[n].w;

        let phi_face = face_average(&base.phi);
        let nu1 = phi_face.map(|s| visc.eval(s, 1));
        let xi_face = face_average(xi);
        let grho = gradient(rho);

        let mut g1n = xi_face.mul(&grho);
        g1n.axpy(-1.0, &nu1.mul(&xi_face).mul(w));
        g1.push(g1n);

        g3.push(face_average_transpose(&gradient(xi).mul(w)));

        // Multipliers of level 0 are never consumed, and every extra term
        // vanishes there anyway (the tangent state starts at zero).
        if n >= 1 {
            let flow = advecting_flow(base, &schedule.s[n], model, opts, basis)?;
            let nu2 = phi_face.map(|s| visc.eval(s, 2));
            let eta = &tangent.snapshots[n].eta;
            let zeta = &costate_traj.snapshots[n].zeta;

            let mut extra = face_average_transpose(&v.mul(&grho));
            extra.axpy(-1.0, &face_average_transpose(&nu2.mul(&xi_face).mul(&flow.u).mul(w)));
            extra.axpy(-1.0, &face_average_transpose(&nu1.mul(v).mul(w)));
            extra.axpy(-1.0, &divergence(&face_average(eta).mul(w)));
            let mut kappa = zeta.clone();
            kappa.axpy(-1.0, &laplacian_neumann(rho));
            extra.axpy(1.0, &entropy_field(p, &base.phi, 3)?.mul(xi).mul(&kappa));
            g2[n].axpy(1.0, &extra);
        }

        // Convexity of the implicit update is taken at the new level, so
        // its derivative rides one level later than the other terms.
        let lap_rho = laplacian_neumann(rho);
        g2[n + 1].axpy(
            1.0,
            &entropy_field(p, &traj.snapshots[n + 1].phi, 3)?
                .mul(xi_next)
                .mul(&lap_rho),
        );
    }

    for (n, g) in g2.iter_mut().enumerate().skip(1) {
        g.axpy(
            cfg.alpha2 * CostConfig::level_weight(n, n_steps),
            &tangent.snapshots[n].xi,
        );
    }
    let mut g4 = tangent.snapshots[n_steps].xi.clone();
    g4.scale(cfg.alpha1 / tau);

    AdjointForcing::new(g1, g2, g3, g4)
}

/// Derivative of the costate map along the control direction h: tangent
/// sweep, forcing assembly, backward sweep, all on the base trajectory.
#[allow(clippy::too_many_arguments)]
pub fn dt_apply(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    costate_traj: &AdjointTrajectory,
    cfg: &CostConfig,
    h: &[ScalarField],
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<AdjointTrajectory> {
    let tangent = ds_apply(traj, schedule, h, model, opts, basis)?;
    let forcing =
        second_order_forcing(traj, schedule, costate_traj, cfg, &tangent, model, opts, basis)?;
    adjoint_sweep(traj, schedule, &forcing, model, opts, basis)
}

/// Reduced-cost second derivative J''(R)[h1, h2].
#[allow(clippy::too_many_arguments)]
pub fn hessian_quadratic(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    costate_traj: &AdjointTrajectory,
    cfg: &CostConfig,
    h1: &[ScalarField],
    h2: &[ScalarField],
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<f64> {
    let dt = dt_apply(traj, schedule, costate_traj, cfg, h1, model, opts, basis)?;
    let hv: Vec<ScalarField> = dt
        .snapshots
        .iter()
        .zip(h1)
        .map(|(snap, hn)| {
            let mut g = snap.rho.clone();
            g.axpy(cfg.beta, hn);
            g
        })
        .collect();
    Ok(qr_inner(&hv, h2, traj.tau))
}

/// Activity threshold for the strongly active set, relative to the
/// gradient scale.
pub fn activity_tolerance(r: &[ScalarField], rho: &[&ScalarField], beta: f64) -> f64 {
    let scale = r
        .iter()
        .zip(rho)
        .map(|(rn, pn)| {
            rn.data
                .iter()
                .zip(&pn.data)
                .fold(0.0f64, |m, (v, p)| m.max((p + beta * v).abs()))
        })
        .fold(0.0f64, f64::max);
    1e-8 * (1.0 + scale)
}

/// A direction admissible for second-order analysis at a box-constrained
/// point, with the strongly active cells it was zeroed on.
#[derive(Debug, Clone)]
pub struct CriticalDirection {
    pub h: Vec<ScalarField>,
    pub active_mask: Vec<Vec<bool>>,
}

/// Per-cell classification counts from a cone projection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConeReport {
    pub active_cells: usize,
    pub at_lower: usize,
    pub at_upper: usize,
    pub free_cells: usize,
    /// Cells whose incoming value was nonzero on the active set.
    pub zeroed: usize,
    /// Cells whose incoming value pointed out of the box at a face.
    pub clipped: usize,
}

/// Projects h into the cone of allowed variations at r: zero where the
/// gradient is decisively nonzero, one-sided where r sits on a box face,
/// free elsewhere. Exact per-cell case analysis.
pub fn critical_cone_project(
    h: &[ScalarField],
    r: &[ScalarField],
    rho: &[&ScalarField],
    beta: f64,
    set: &AdmissibleSet,
    tol_active: f64,
) -> (CriticalDirection, ConeReport) {
    assert!(tol_active > 0.0, "activity tolerance must be positive");
    assert_eq!(h.len(), r.len(), "direction/control step count");
    assert_eq!(r.len(), rho.len(), "control/costate step count");
    assert_eq!(r.len(), set.n_steps(), "control/bound step count");

    let mut report = ConeReport::default();
    let mut mask = Vec::with_capacity(r.len());
    let projected: Vec<ScalarField> = h
        .iter()
        .enumerate()
        .map(|(n, hn)| {
            let mut out = hn.clone();
            let mut step_mask = vec![false; out.data.len()];
            for (i, val) in out.data.iter_mut().enumerate() {
                let grad = rho[n].data[i] + beta * r[n].data[i];
                let at_lo = r[n].data[i] <= set.r_min[n].data[i];
                let at_hi = r[n].data[i] >= set.r_max[n].data[i];
                if grad.abs() > tol_active {
                    report.active_cells += 1;
                    step_mask[i] = true;
                    if *val != 0.0 {
                        report.zeroed += 1;
                        *val = 0.0;
                    }
                } else if at_lo && at_hi {
                    report.at_lower += 1;
                    report.at_upper += 1;
                    if *val != 0.0 {
                        report.clipped += 1;
                        *val = 0.0;
                    }
                } else if at_lo {
                    report.at_lower += 1;
                    if *val < 0.0 {
                        report.clipped += 1;
                        *val = 0.0;
                    }
                } else if at_hi {
                    report.at_upper += 1;
                    if *val > 0.0 {
                        report.clipped += 1;
                        *val = 0.0;
                    }
                } else {
                    report.free_cells += 1;
                }
            }
            mask.push(step_mask);
            out
        })
        .collect();
    (
        CriticalDirection {
            h: projected,
            active_mask: mask,
        },
        report,
    )
}

/// One sampled Rayleigh quotient of the reduced Hessian.
#[derive(Debug, Clone, Copy)]
pub struct SufficiencyProbe {
    pub quadratic: f64,
    pub norm_sq: f64,
    pub ratio: f64,
}

/// Sampled second-order evidence at a candidate minimizer. `min_ratio` is
/// over the sampled directions only; it is not a cone-wide bound.
#[derive(Debug, Clone)]
pub struct SufficiencyReport {
    pub probes: Vec<SufficiencyProbe>,
    pub rejected: usize,
    pub tol_active: f64,
    pub min_ratio: Option<f64>,
}

/// Evaluates J''[h, h] / ||h||^2 on each direction after cone projection,
/// discarding directions the cone annihilates.
#[allow(clippy::too_many_arguments)]
pub fn sufficiency_probe(
    traj: &Trajectory,
    schedule: &SourceSchedule,
    costate_traj: &AdjointTrajectory,
    cfg: &CostConfig,
    r: &[ScalarField],
    set: &AdmissibleSet,
    directions: &[Vec<ScalarField>],
    model: &Model,
    opts: &SolverOptions,
    basis: &CosineBasis,
) -> Result<SufficiencyReport> {
    let rho = costate_traj.rho_seq();
    let tol_active = activity_tolerance(r, &rho, cfg.beta);
    let mut probes = Vec::new();
    let mut rejected = 0usize;
    for h in directions {
        let (cone, _) = critical_cone_project(h, r, &rho, cfg.beta, set, tol_active);
        let norm = qr_norm(&cone.h, traj.tau);
        if norm == 0.0 {
            rejected += 1;
            continue;
        }
        let quadratic = hessian_quadratic(
            traj, schedule, costate_traj, cfg, &cone.h, &cone.h, model, opts, basis,
        )?;
        probes.push(SufficiencyProbe {
            quadratic,
            norm_sq: norm * norm,
            ratio: quadratic / (norm * norm),
        });
    }
    let min_ratio = probes
        .iter()
        .map(|p| p.ratio)
        .min_by(|a, b| a.total_cmp(b));
    Ok(SufficiencyReport {
        probes,
        rejected,
        tol_active,
        min_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{costate, reduced_gradient};
    use crate::control::cost;
    use crate::grid::Grid2D;
    use crate::materials::{PotentialParams, ViscosityFamily, ViscosityModel};
    use crate::state::run;

    fn model() -> Model {
        Model {
            potential: PotentialParams::new(1.0, 2.0, 0.0, 0.5).unwrap(),
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

    fn base_phi(g: Grid2D) -> ScalarField {
        let pi = std::f64::consts::PI;
        ScalarField::from_fn(g, |x, y| {
            0.4 * (pi * x).cos() * (pi * y).cos() + 0.1 * (2.0 * pi * x).cos()
        })
    }

    fn wiggle(g: Grid2D, fx: f64, fy: f64, shift: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| (fx * x + shift).cos() * (fy * y - shift).sin() + 0.1)
    }

    struct Problem {
        traj: Trajectory,
        schedule: SourceSchedule,
        costate_traj: AdjointTrajectory,
        cfg: CostConfig,
        r: Vec<ScalarField>,
        m: Model,
        opts: SolverOptions,
        basis: CosineBasis,
    }

    fn tracking_problem(g: Grid2D, n: usize, tau: f64) -> Problem {
        let basis = CosineBasis::new(g);
        let m = model();
        let opts = SolverOptions::default();
        let pi = std::f64::consts::PI;
        let r: Vec<_> = (0..n)
            .map(|k| {
                let mut f = wiggle(g, 1.0, 1.0, 0.1 * k as f64);
                f.scale(0.2);
                f
            })
            .collect();
        let schedule = SourceSchedule::zero(g, n).with_control(r.clone()).unwrap();
        let traj = run(&base_phi(g), &schedule, tau, &m, &opts, &basis).unwrap();
        let cfg = CostConfig::new(
            0.8,
            1.2,
            0.6,
            ScalarField::from_fn(g, |x, y| 0.2 * (pi * x).cos() + 0.1 * y),
            (0..=n)
                .map(|k| ScalarField::from_fn(g, |x, y| 0.3 * (pi * y).cos() + 0.02 * k as f64 * x))
                .collect(),
        )
        .unwrap();
        let costate_traj = costate(&traj, &schedule, &cfg, &m, &opts, &basis).unwrap();
        Problem {
            traj,
            schedule,
            costate_traj,
            cfg,
            r,
            m,
            opts,
            basis,
        }
    }

    fn direction(g: Grid2D, n: usize, fx: f64, fy: f64, shift: f64) -> Vec<ScalarField> {
        (0..n)
            .map(|k| wiggle(g, fx, fy, shift + 0.05 * k as f64))
            .collect()
    }

    #[test]
    fn zero_direction_yields_zero_derivative() {
        let g = Grid2D::unit(12);
        let p = tracking_problem(g, 4, 1e-3);
        let h = vec![ScalarField::zeros(g); 4];
        let dt = dt_apply(
            &p.traj, &p.schedule, &p.costate_traj, &p.cfg, &h, &p.m, &p.opts, &p.basis,
        )
        .unwrap();
        for snap in &dt.snapshots {
            assert!(snap.rho.norm_inf() == 0.0);
            assert!(snap.w.norm_inf() == 0.0);
        }
    }

    #[test]
    fn without_tracking_terms_the_hessian_is_beta_times_identity() {
        let g = Grid2D::unit(12);
        let basis = CosineBasis::new(g);
        let m = model();
        let opts = SolverOptions::default();
        let n = 4;
        let tau = 1e-3;
        let beta = 0.35;
        let r: Vec<_> = direction(g, n, 1.0, 2.0, 0.3);
        let schedule = SourceSchedule::zero(g, n).with_control(r.clone()).unwrap();
        let traj = run(&base_phi(g), &schedule, tau, &m, &opts, &basis).unwrap();
        let cfg = CostConfig::new(
            0.0,
            0.0,
            beta,
            ScalarField::zeros(g),
            vec![ScalarField::zeros(g); n + 1],
        )
        .unwrap();
        let costate_traj = costate(&traj, &schedule, &cfg, &m, &opts, &basis).unwrap();
        let h = direction(g, n, 2.0, 1.0, 0.7);
        let q = hessian_quadratic(
            &traj, &schedule, &costate_traj, &cfg, &h, &h, &m, &opts, &basis,
        )
        .unwrap();
        let ratio = q / qr_inner(&h, &h, tau);
        assert!(
            (ratio - beta).abs() <= 1e-10 * beta,
            "coercivity ratio {ratio} vs beta {beta}"
        );
    }

    #[test]
    fn costate_derivative_passes_the_taylor_test() {
        let g = Grid2D::unit(16);
        let n = 6;
        let tau = 1e-3;
        let p = tracking_problem(g, n, tau);
        let h = direction(g, n, 2.0, 1.0, 0.4);
        let dt = dt_apply(
            &p.traj, &p.schedule, &p.costate_traj, &p.cfg, &h, &p.m, &p.opts, &p.basis,
        )
        .unwrap();

        let costate_at = |eps: f64| -> Vec<ScalarField> {
            let r: Vec<ScalarField> = p
                .r
                .iter()
                .zip(&h)
                .map(|(rn, hn)| {
                    let mut out = rn.clone();
                    out.axpy(eps, hn);
                    out
                })
                .collect();
            let sched = SourceSchedule::zero(g, n).with_control(r).unwrap();
            let traj = run(&base_phi(g), &sched, tau, &p.m, &p.opts, &p.basis).unwrap();
            costate(&traj, &sched, &p.cfg, &p.m, &p.opts, &p.basis)
                .unwrap()
                .snapshots
                .iter()
                .map(|s| s.rho.clone())
                .collect()
        };

        let base = costate_at(0.0);
        let remainder = |eps: f64| -> f64 {
            let moved = costate_at(eps);
            let fields: Vec<ScalarField> = moved
                .iter()
                .zip(&base)
                .zip(&dt.snapshots)
                .map(|((m, b), d)| {
                    let mut rem = m.clone();
                    rem.axpy(-1.0, b);
                    rem.axpy(-eps, &d.rho);
                    rem
                })
                .collect();
            qr_norm(&fields, tau)
        };

        let r1 = remainder(0.5);
        let r2 = remainder(0.25);
        let r3 = remainder(0.125);
        for (a, b) in [(r1, r2), (r2, r3)] {
            let ratio = a / b;
            assert!(
                (3.2..=4.8).contains(&ratio),
                "remainder ratio {ratio} outside the second-order band ({a:e}, {b:e})"
            );
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let g = Grid2D::unit(12);
        let n = 5;
        let p = tracking_problem(g, n, 1e-3);
        let h1 = direction(g, n, 2.0, 1.0, 0.4);
        let h2 = direction(g, n, 0.5, 3.0, 0.9);
        let q12 = hessian_quadratic(
            &p.traj, &p.schedule, &p.costate_traj, &p.cfg, &h1, &h2, &p.m, &p.opts, &p.basis,
        )
        .unwrap();
        let q21 = hessian_quadratic(
            &p.traj, &p.schedule, &p.costate_traj, &p.cfg, &h2, &h1, &p.m, &p.opts, &p.basis,
        )
        .unwrap();
        let rel = (q12 - q21).abs() / q12.abs().max(q21.abs()).max(1.0);
        assert!(rel <= 1e-6, "asymmetry {rel:e} ({q12} vs {q21})");
    }

    #[test]
    fn costate_derivative_is_linear_in_the_direction() {
        let g = Grid2D::unit(12);
        let n = 4;
        let p = tracking_problem(g, n, 1e-3);
        let h1 = direction(g, n, 2.0, 1.0, 0.4);
        let h2 = direction(g, n, 1.0, 2.0, 0.8);
        let combined: Vec<ScalarField> = h1
            .iter()
            .zip(&h2)
            .map(|(a, b)| {
                let mut c = a.clone();
                c.scale(2.0);
                c.axpy(1.0, b);
                c
            })
            .collect();
        let apply = |h: &[ScalarField]| {
            dt_apply(
                &p.traj, &p.schedule, &p.costate_traj, &p.cfg, h, &p.m, &p.opts, &p.basis,
            )
            .unwrap()
        };
        let da = apply(&h1);
        let db = apply(&h2);
        let dc = apply(&combined);
        for ((a, b), c) in da.snapshots.iter().zip(&db.snapshots).zip(&dc.snapshots) {
            let mut diff = c.rho.clone();
            diff.axpy(-2.0, &a.rho);
            diff.axpy(-1.0, &b.rho);
            let scale = c.rho.norm_inf().max(1e-30);
            assert!(
                diff.norm_inf() <= 1e-9 * scale,
                "superposition defect {:e}",
                diff.norm_inf() / scale
            );
        }
    }

    #[test]
    fn quadratic_form_matches_gradient_difference_quotients() {
        let g = Grid2D::unit(16);
        let n = 6;
        let tau = 1e-3;
        let p = tracking_problem(g, n, tau);
        let h1 = direction(g, n, 2.0, 1.0, 0.4);
        let h2 = direction(g, n, 0.5, 3.0, 0.9);
        let q = hessian_quadratic(
            &p.traj, &p.schedule, &p.costate_traj, &p.cfg, &h2, &h1, &p.m, &p.opts, &p.basis,
        )
        .unwrap();

        let grad_dot_h1 = |eps: f64| -> f64 {
            let r: Vec<ScalarField> = p
                .r
                .iter()
                .zip(&h2)
                .map(|(rn, hn)| {
                    let mut out = rn.clone();
                    out.axpy(eps, hn);
                    out
                })
                .collect();
            let sched = SourceSchedule::zero(g, n).with_control(r.clone()).unwrap();
            let traj = run(&base_phi(g), &sched, tau, &p.m, &p.opts, &p.basis).unwrap();
            let adj = costate(&traj, &sched, &p.cfg, &p.m, &p.opts, &p.basis).unwrap();
            let grad = reduced_gradient(&adj, &r, p.cfg.beta);
            qr_inner(&grad, &h1, tau)
        };

        let g0 = grad_dot_h1(0.0);
        let err = |eps: f64| ((grad_dot_h1(eps) - g0) / eps - q).abs();
        let e1 = err(0.2);
        let e2 = err(0.1);
        let ratio = e1 / e2;
        assert!(
            (1.5..=2.7).contains(&ratio),
            "difference-quotient error ratio {ratio} not first order ({e1:e}, {e2:e})"
        );
        assert!(e2 <= 0.2 * q.abs().max(1e-12), "error {e2:e} vs value {q:e}");
    }

    #[test]
    fn cone_projection_matches_per_cell_case_analysis() {
        let g = Grid2D::unit(6);
        let n = 2;
        let set = AdmissibleSet::uniform(g, n, -0.5, 0.5, 1.0, 1.0, 0.1).unwrap();
        let r: Vec<ScalarField> = (0..n)
            .map(|k| wiggle(g, 2.0, 1.0, 0.3 * k as f64).map(|v| v.clamp(-0.5, 0.5)))
            .collect();
        let rho_fields: Vec<ScalarField> = (0..n)
            .map(|k| wiggle(g, 1.0, 3.0, 0.2 * k as f64).map(|v| 0.3 * v))
            .collect();
        let rho: Vec<&ScalarField> = rho_fields.iter().collect();
        let h: Vec<ScalarField> = (0..n).map(|k| wiggle(g, 3.0, 2.0, 0.7 * k as f64)).collect();
        let beta = 0.4;
        let tol = 0.1;
        let (cone, report) = critical_cone_project(&h, &r, &rho, beta, &set, tol);

        let mut oracle_active = 0;
        for k in 0..n {
            for i in 0..g.cells() {
                let grad = rho_fields[k].data[i] + beta * r[k].data[i];
                let hv = h[k].data[i];
                let expected = if grad.abs() > tol {
                    oracle_active += 1;
                    0.0
                } else if r[k].data[i] <= -0.5 {
                    hv.max(0.0)
                } else if r[k].data[i] >= 0.5 {
                    hv.min(0.0)
                } else {
                    hv
                };
                assert_eq!(cone.h[k].data[i], expected, "cell {i} step {k}");
                assert_eq!(cone.active_mask[k][i], grad.abs() > tol);
            }
        }
        assert_eq!(report.active_cells, oracle_active);
        assert_eq!(
            report.active_cells + report.at_lower + report.at_upper + report.free_cells,
            n * g.cells()
        );
    }

    #[test]
    fn fully_active_gradient_rejects_every_direction() {
        let g = Grid2D::unit(8);
        let n = 3;
        let p = tracking_problem(g, n, 1e-3);
        let set = AdmissibleSet::uniform(g, n, -2.0, 2.0, 1.0, 1.0, 0.1).unwrap();
        let rho = p.costate_traj.rho_seq();
        let tol = activity_tolerance(&p.r, &rho, p.cfg.beta);
        // The tracking gradient is nowhere near zero on this instance.
        let (cone, report) =
            critical_cone_project(&p.r.clone(), &p.r, &rho, p.cfg.beta, &set, tol);
        assert_eq!(report.free_cells, 0);
        for hn in &cone.h {
            assert!(hn.norm_inf() == 0.0);
        }

        let report = sufficiency_probe(
            &p.traj,
            &p.schedule,
            &p.costate_traj,
            &p.cfg,
            &p.r,
            &set,
            &[p.r.clone()],
            &p.m,
            &p.opts,
            &p.basis,
        )
        .unwrap();
        assert_eq!(report.rejected, 1);
        assert!(report.probes.is_empty());
        assert!(report.min_ratio.is_none());
    }

    #[test]
    fn sufficiency_probe_floors_at_beta_without_tracking() {
        let g = Grid2D::unit(10);
        let basis = CosineBasis::new(g);
        let m = model();
        let opts = SolverOptions::default();
        let n = 3;
        let tau = 1e-3;
        let beta = 0.8;
        let r = vec![ScalarField::zeros(g); n];
        let schedule = SourceSchedule::zero(g, n);
        let traj = run(&base_phi(g), &schedule, tau, &m, &opts, &basis).unwrap();
        let cfg = CostConfig::new(
            0.0,
            0.0,
            beta,
            ScalarField::zeros(g),
            vec![ScalarField::zeros(g); n + 1],
        )
        .unwrap();
        let costate_traj = costate(&traj, &schedule, &cfg, &m, &opts, &basis).unwrap();
        let set = AdmissibleSet::uniform(g, n, -1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let directions = vec![
            direction(g, n, 2.0, 1.0, 0.2),
            direction(g, n, 1.0, 2.0, 0.6),
        ];
        let report = sufficiency_probe(
            &traj, &schedule, &costate_traj, &cfg, &r, &set, &directions, &m, &opts, &basis,
        )
        .unwrap();
        assert_eq!(report.probes.len(), 2);
        assert_eq!(report.rejected, 0);
        for probe in &report.probes {
            assert!(
                (probe.ratio - beta).abs() <= 1e-10 * beta,
                "ratio {} vs beta {beta}",
                probe.ratio
            );
        }
        // Zero gradient everywhere: nothing is active.
        let min = report.min_ratio.unwrap();
        assert!((min - beta).abs() <= 1e-10 * beta);
    }

    #[test]
    fn derivative_cost_descent_agrees_with_cost_curvature() {
        // One Newton-like quadratic model check: J(R + h) compared with
        // J + <grad, h> + 1/2 J''[h, h] on a smooth instance.
        let g = Grid2D::unit(12);
        let n = 4;
        let tau = 1e-3;
        let p = tracking_problem(g, n, tau);
        let adj = &p.costate_traj;
        let grad = reduced_gradient(adj, &p.r, p.cfg.beta);
        let h: Vec<ScalarField> = direction(g, n, 1.5, 1.0, 0.2)
            .into_iter()
            .map(|mut f| {
                f.scale(0.05);
                f
            })
            .collect();
        let q = hessian_quadratic(
            &p.traj, &p.schedule, adj, &p.cfg, &h, &h, &p.m, &p.opts, &p.basis,
        )
        .unwrap();

        let eval = |r: &[ScalarField]| -> f64 {
            let sched = SourceSchedule::zero(g, n).with_control(r.to_vec()).unwrap();
            let traj = run(&base_phi(g), &sched, tau, &p.m, &p.opts, &p.basis).unwrap();
            cost(&traj, r, &p.cfg)
        };
        let moved: Vec<ScalarField> = p
            .r
            .iter()
            .zip(&h)
            .map(|(rn, hn)| {
                let mut out = rn.clone();
                out.axpy(1.0, hn);
                out
            })
            .collect();
        let j0 = eval(&p.r);
        let j1 = eval(&moved);
        let quadratic_model = j0 + qr_inner(&grad, &h, tau) + 0.5 * q;
        let err = (j1 - quadratic_model).abs();
        let linear_model_err = (j1 - j0 - qr_inner(&grad, &h, tau)).abs();
        assert!(
            err <= 0.2 * linear_model_err,
            "quadratic model not better than linear: {err:e} vs {linear_model_err:e}"
        );
    }
}
