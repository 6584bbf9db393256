//! Constitutive laws: the logarithmic (Flory-Huggins) free energy, its
//! polynomial regularization, and concentration-dependent viscosity models.
//!
//! The singular entropy part
//!
//! ```text
//! F(s) = (theta/2) [ (1+s) ln(1+s) + (1-s) ln(1-s) ],   s in (-1, 1)
//! ```
//!
//! blows up at s = +-1; the full potential is psi(s) = F(s) - (theta0/2) s^2
//! with theta0 > theta, so psi'' >= -(theta0 - theta) everywhere. The
//! regularized family F_eps keeps F on [-1+eps, 1-eps] and continues outside
//! with the fourth-order Taylor polynomial at the seam, which preserves C^4
//! smoothness and the convexity floor F_eps'' >= theta: on the tail the
//! quadratic c2 + c3 ds + c4 ds^2/2 has positive coefficients for ds >= 0, so
//! it only grows from its seam value c2 = theta / (1 - (1-eps)^2) > theta.
//!
//! Everything here is a pure scalar function; fields are mapped where used.

use crate::error::{ChdError, Result};

/// Parameters of the logarithmic potential. `eps = 0` selects the singular
/// potential on (-1, 1); `eps > 0` selects the regularized family, defined on
/// all of R. `kappa` is the monotonicity window the regularization width must
/// stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub theta: f64,
    pub theta0: f64,
    pub eps: f64,
    pub kappa: f64,
}

impl PotentialParams {
    pub fn new(theta: f64, theta0: f64, eps: f64, kappa: f64) -> Result<Self> {
        let mut faults = Vec::new();
        if !(theta > 0.0) {
            faults.push(format!("theta must be positive, got {theta}"));
        }
        if !(theta0 > theta) {
            faults.push(format!(
                "theta0 must exceed theta for a double well, got theta0 = {theta0}, theta = {theta}"
            ));
        }
        if !(0.0..1.0).contains(&kappa) || kappa == 0.0 {
            faults.push(format!("kappa must lie in (0, 1), got {kappa}"));
        }
        if eps < 0.0 || (eps > 0.0 && eps >= kappa) {
            faults.push(format!(
                "eps must be 0 (singular) or in (0, kappa), got eps = {eps}, kappa = {kappa}"
            ));
        }
        if faults.is_empty() {
            Ok(PotentialParams {
                theta,
                theta0,
                eps,
                kappa,
            })
        } else {
            Err(ChdError::Validation(faults))
        }
    }

    /// Concavity budget alpha = theta0 - theta > 0.
    pub fn alpha(&self) -> f64 {
        self.theta0 - self.theta
    }

    pub fn is_singular(&self) -> bool {
        self.eps == 0.0
    }

    /// Derivative of order 0..4 of the singular F at t in [0, 1).
    fn f_core(&self, t: f64, order: usize) -> f64 {
        let th = self.theta;
        let one_m = 1.0 - t * t;
        match order {
            0 => 0.5 * th * ((1.0 + t) * t.ln_1p() + (1.0 - t) * (-t).ln_1p()),
            1 => th * t.atanh(),
            2 => th / one_m,
            3 => 2.0 * th * t / (one_m * one_m),
            4 => 2.0 * th * (1.0 + 3.0 * t * t) / (one_m * one_m * one_m),
            _ => unreachable!(),
        }
    }

    /// Same orders for the nonnegative-argument branch of F_eps.
    fn f_eps_core(&self, t: f64, order: usize) -> f64 {
        let seam = 1.0 - self.eps;
        if t <= seam {
            return self.f_core(t, order);
        }
        let ds = t - seam;
        let c: [f64; 5] = std::array::from_fn(|k| self.f_core(seam, k));
        match order {
            0 => {
                c[0] + ds * (c[1] + ds * (c[2] / 2.0 + ds * (c[3] / 6.0 + ds * c[4] / 24.0)))
            }
            1 => c[1] + ds * (c[2] + ds * (c[3] / 2.0 + ds * c[4] / 6.0)),
            2 => c[2] + ds * (c[3] + ds * c[4] / 2.0),
            3 => c[3] + ds * c[4],
            4 => c[4],
            _ => unreachable!(),
        }
    }

    /// F or F_eps and its derivatives up to order 4. The singular potential
    /// fails loudly outside (-1, 1); the Newton safeguard in the state solver
    /// depends on that instead of silent extrapolation.
    pub fn entropy_f(&self, s: f64, order: usize) -> Result<f64> {
        assert!(order <= 4, "entropy derivatives defined up to order 4");
        if self.is_singular() && s.abs() >= 1.0 {
            return Err(ChdError::Domain {
                s,
                what: "singular potential evaluated outside (-1, 1)",
            });
        }
        // F is even, so odd-order derivatives flip sign with the argument.
        let v = if self.is_singular() {
            self.f_core(s.abs(), order)
        } else {
            self.f_eps_core(s.abs(), order)
        };
        Ok(if order % 2 == 1 && s < 0.0 { -v } else { v })
    }

    /// psi(s) = F(s) - (theta0/2) s^2 and derivatives, same domain rules.
    pub fn psi(&self, s: f64, order: usize) -> Result<f64> {
        let f = self.entropy_f(s, order)?;
        let quad = match order {
            0 => 0.5 * s * s,
            1 => s,
            2 => 1.0,
            _ => 0.0,
        };
        Ok(f - self.theta0 * quad)
    }
}

/// Numerically verified growth and curvature constants of the regularized
/// potential, established on a dense sample of [-10, 10].
#[derive(Debug, Clone, Copy)]
pub struct PsiBounds {
    /// Quartic growth: gamma1 s^4 - gamma2 <= psi_eps(s) on the sample.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Curvature cap: psi_eps''(s) <= curvature_max on the sample.
    pub curvature_max: f64,
    /// Convexity floor: psi_eps''(s) >= -alpha, alpha = theta0 - theta.
    pub alpha: f64,
}

/// Establish (and verify by sampling) the structural bounds of psi_eps:
/// quartic growth from below, a curvature cap from above, and the convexity
/// floor -alpha. The quartic coefficient is half the true tail coefficient
/// F''''(1-eps)/24, leaving room for the lower-order tail terms; the offset
/// gamma2 is the largest sampled deficit with a safety factor.
pub fn regularized_psi_bounds(p: &PotentialParams) -> Result<PsiBounds> {
    if p.is_singular() {
        return Err(ChdError::Construction(
            "growth bounds are defined for the regularized potential only (eps > 0)".into(),
        ));
    }
    let alpha = p.alpha();
    let gamma1 = p.entropy_f(1.0 - p.eps, 4)? / 48.0;
    let n = 100_000usize;
    let mut gamma2: f64 = 0.0;
    let mut curvature_max = f64::NEG_INFINITY;
    let mut convexity_floor_ok = true;
    for i in 0..=n {
        let s = -10.0 + 20.0 * i as f64 / n as f64;
        let v = p.psi(s, 0)?;
        let dd = p.psi(s, 2)?;
        gamma2 = gamma2.max(gamma1 * s.powi(4) - v);
        curvature_max = curvature_max.max(dd);
        if dd < -alpha * (1.0 + 1e-12) {
            convexity_floor_ok = false;
        }
    }
    if !convexity_floor_ok {
        return Err(ChdError::Construction(format!(
            "regularized potential dips below the convexity floor -alpha = {}",
            -alpha
        )));
    }
    let gamma2 = gamma2 * 1.1 + 1e-12;
    for i in 0..=n {
        let s = -10.0 + 20.0 * i as f64 / n as f64;
        if gamma1 * s.powi(4) - gamma2 > p.psi(s, 0)? {
            return Err(ChdError::Construction(
                "quartic growth bound failed verification".into(),
            ));
        }
    }
    Ok(PsiBounds {
        gamma1,
        gamma2,
        curvature_max,
        alpha,
    })
}

/// Functional form of the viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityFamily {
    Constant { nu: f64 },
    /// nu(s) = base + gain (1 + tanh(rate s)) / 2, a smooth monotone blend
    /// between base and base + gain.
    TanhBlend { base: f64, gain: f64, rate: f64 },
}

/// A viscosity law together with the declared bounds it was validated
/// against: nu(s) in [nu_lo, nu_hi] and |nu'|, |nu''|, |nu'''| <= nu_hi on a
/// fine sample of [-1, 1]. Construction fails if the sample violates either;
/// after that, evaluation is total and never clamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityModel {
    family: ViscosityFamily,
    nu_lo: f64,
    nu_hi: f64,
}

impl ViscosityModel {
    pub fn new(family: ViscosityFamily, nu_lo: f64, nu_hi: f64) -> Result<Self> {
        if !(nu_lo > 0.0 && nu_hi >= nu_lo) {
            return Err(ChdError::Construction(format!(
                "viscosity bounds must satisfy 0 < nu_lo <= nu_hi, got [{nu_lo}, {nu_hi}]"
            )));
        }
        let model = ViscosityModel {
            family,
            nu_lo,
            nu_hi,
        };
        let samples = 4096usize;
        for i in 0..=samples {
            let s = -1.0 + 2.0 * i as f64 / samples as f64;
            let v = model.eval(s, 0);
            if !(model.nu_lo..=model.nu_hi).contains(&v) {
                return Err(ChdError::Construction(format!(
                    "viscosity value {v} at s = {s} escapes declared bounds [{nu_lo}, {nu_hi}]"
                )));
            }
            for order in 1..=3 {
                let d = model.eval(s, order).abs();
                if d > nu_hi {
                    return Err(ChdError::Construction(format!(
                        "viscosity derivative of order {order} has magnitude {d} at s = {s}, above the cap {nu_hi}"
                    )));
                }
            }
        }
        Ok(model)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.nu_lo, self.nu_hi)
    }

    /// nu and derivatives up to order 3, total on the reals.
    pub fn eval(&self, s: f64, order: usize) -> f64 {
        assert!(order <= 3, "viscosity derivatives defined up to order 3");
        match self.family {
            ViscosityFamily::Constant { nu } => {
                if order == 0 {
                    nu
                } else {
                    0.0
                }
            }
            ViscosityFamily::TanhBlend { base, gain, rate } => {
                let t = (rate * s).tanh();
                let sech2 = 1.0 - t * t;
                match order {
                    0 => base + gain * (1.0 + t) / 2.0,
                    1 => gain * rate / 2.0 * sech2,
                    2 => -gain * rate * rate * t * sech2,
                    3 => gain * rate.powi(3) * sech2 * (3.0 * t * t - 1.0),
                    _ => unreachable!(),
                }
            }
        }
    }
}
