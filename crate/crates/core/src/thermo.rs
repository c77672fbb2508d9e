//! Thermodynamic reading of a one-parameter path.
//!
//! With metric `g_θθ = F(θ)/4`, a protocol `θ(t)` on `[t0, t0 + τ]` has
//! thermodynamic length `L = ∫ √(g θ̇²) dt`, dissipated availability
//! `Λ = ∫ g θ̇² dt` and divergence `D = τΛ`. Cauchy-Schwarz gives `D ≥ L²`,
//! with equality exactly when the computational speed `v = ½√F θ̇` is
//! constant, which is what geodesics of `θ̈ = −(F'/2F) θ̇²` do.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::FisherProfile;
use crate::ode::rk4_step;

/// Trajectories stop once `|θ̇|` exceeds this.
pub const THETADOT_LIMIT: f64 = 1e9;
/// Gap kept between the end of a protocol and a blow-up time.
pub const BLOWUP_MARGIN: f64 = 1e-9;
const QUAD_TOL: f64 = 1e-10;
const QUAD_DEPTH: u32 = 30;
const CROSS_CHECK_TOL: f64 = 1e-4;
const SPEED_SAMPLES: usize = 201;
/// Number of RK4 steps used when no closed form exists.
const NUMERIC_STEPS: f64 = 4000.0;

#[derive(Debug, Clone)]
pub struct ReparamProblem {
    pub profile: FisherProfile,
    pub theta0: f64,
    /// `dθ/dt` at `t0`.
    pub thetadot0: f64,
    pub t0: f64,
    pub tau: f64,
}

impl ReparamProblem {
    pub fn new(profile: FisherProfile, theta0: f64, thetadot0: f64, t0: f64, tau: f64) -> Result<Self> {
        if ![theta0, thetadot0, t0, tau].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("reparametrization inputs must be finite".into()));
        }
        if tau <= 0.0 {
            return Err(Error::Domain(format!("tau must be positive, got {tau}")));
        }
        profile.eval(theta0)?;
        Ok(ReparamProblem {
            profile,
            theta0,
            thetadot0,
            t0,
            tau,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.tau
    }
}

/// Closed-form geodesic protocol `θ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedTrajectory {
    Linear { theta0: f64, thetadot0: f64, t0: f64 },
    Exponential { theta0: f64, thetadot0: f64, t0: f64, xi: f64 },
    /// `n = 4` power law, written through `u = 1 + Ωθ`.
    PowerLaw { theta0: f64, thetadot0: f64, t0: f64, omega: f64 },
}

impl ClosedTrajectory {
    /// `(θ, θ̇)` at time `t`.
    pub fn state(&self, t: f64) -> (f64, f64) {
        match *self {
            ClosedTrajectory::Linear { theta0, thetadot0, t0 } => (theta0 + thetadot0 * (t - t0), thetadot0),
            ClosedTrajectory::Exponential { theta0, thetadot0, t0, xi } => {
                let w = 1.0 - 0.5 * xi * thetadot0 * (t - t0);
                (theta0 - 2.0 / xi * w.ln(), thetadot0 / w)
            }
            ClosedTrajectory::PowerLaw { theta0, thetadot0, t0, omega } => {
                let u0 = 1.0 + omega * theta0;
                let d = u0 - omega * thetadot0 * (t - t0);
                let u = u0 * u0 / d;
                ((u - 1.0) / omega, u0 * u0 * thetadot0 / (d * d))
            }
        }
    }

    /// Absolute time at which `θ` runs off to infinity, if it ever does.
    pub fn domain_end(&self) -> Option<f64> {
        match *self {
            ClosedTrajectory::Linear { .. } => None,
            ClosedTrajectory::Exponential { thetadot0, t0, xi, .. } => {
                (thetadot0 > 0.0).then(|| t0 + 2.0 / (xi * thetadot0))
            }
            ClosedTrajectory::PowerLaw { theta0, thetadot0, t0, omega } => {
                (thetadot0 > 0.0).then(|| t0 + (1.0 + omega * theta0) / (omega * thetadot0))
            }
        }
    }
}

/// Closed-form `θ(t)` for constant, exponential and `n = 4` power-law profiles.
///
/// Fails with [`Error::Truncated`] when `t0 + τ` reaches the blow-up time
/// (less [`BLOWUP_MARGIN`]); the message names the largest admissible `τ`.
pub fn reparam_closed_form(problem: &ReparamProblem) -> Result<ClosedTrajectory> {
    let (theta0, thetadot0, t0) = (problem.theta0, problem.thetadot0, problem.t0);
    let traj = match problem.profile {
        FisherProfile::Constant { .. } => ClosedTrajectory::Linear { theta0, thetadot0, t0 },
        FisherProfile::ExponentialDecay { xi, .. } => ClosedTrajectory::Exponential { theta0, thetadot0, t0, xi },
        FisherProfile::PowerLawDecay { omega, n, .. } if n == 4.0 => {
            ClosedTrajectory::PowerLaw { theta0, thetadot0, t0, omega }
        }
        ref other => {
            return Err(Error::Unsupported(format!(
                "no closed-form protocol for {:?} profiles; use reparam_numeric",
                other.kind()
            )))
        }
    };
    if let Some(end) = traj.domain_end() {
        if problem.t_end() >= end - BLOWUP_MARGIN {
            return Err(Error::Truncated {
                last_valid_t: end - BLOWUP_MARGIN,
                reason: format!(
                    "theta diverges at t = {end}; tau must stay below {}",
                    end - BLOWUP_MARGIN - t0
                ),
            });
        }
    }
    Ok(traj)
}

/// Sampled protocol from [`reparam_numeric`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamSamples {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub thetadot: Vec<f64>,
    /// `θ̈` from the geodesic equation, for Hermite interpolation.
    pub thetaddot: Vec<f64>,
    /// Time at which `|θ̇|` passed [`THETADOT_LIMIT`], if it did.
    pub truncated_at: Option<f64>,
}

impl ReparamSamples {
    /// Cubic Hermite interpolation of `(θ, θ̇)`; `t` is clamped to the sampled range.
    pub fn state(&self, t: f64) -> (f64, f64) {
        let last = self.t.len() - 1;
        if last == 0 {
            return (self.theta[0], self.thetadot[0]);
        }
        let t = t.clamp(self.t[0], self.t[last]);
        let i = self.t.partition_point(|&s| s <= t).clamp(1, last) - 1;
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let hermite = |y0: f64, y1: f64, d0: f64, d1: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * h * d0
                + (-2.0 * s3 + 3.0 * s2) * y1
                + (s3 - s2) * h * d1
        };
        (
            hermite(self.theta[i], self.theta[i + 1], self.thetadot[i], self.thetadot[i + 1]),
            hermite(self.thetadot[i], self.thetadot[i + 1], self.thetaddot[i], self.thetaddot[i + 1]),
        )
    }
}

/// `θ̈ = −Γ θ̇²` with `Γ = F'/(2F)`, or `None` outside the profile's domain.
fn acceleration(profile: &FisherProfile, theta: f64, thetadot: f64) -> Option<f64> {
    let (f, df) = profile.eval(theta).ok()?;
    Some(-0.5 * df / f * thetadot * thetadot)
}

/// RK4 on the geodesic equation from `t0` to `t0 + τ` with the given step.
pub fn reparam_numeric(problem: &ReparamProblem, step: f64) -> Result<ReparamSamples> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let profile = &problem.profile;
    let left_domain = std::cell::Cell::new(false);
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = acceleration(profile, y[0], y[1]).unwrap_or_else(|| {
            // an underflowing profile signals the singularity, not a domain exit
            if y[0].is_finite() && !profile.in_domain(y[0]) {
                left_domain.set(true);
            }
            f64::NAN
        });
    };
    let steps = (problem.tau / step).ceil().max(1.0) as usize;
    let h = problem.tau / steps as f64;
    let mut out = ReparamSamples {
        t: vec![problem.t0],
        theta: vec![problem.theta0],
        thetadot: vec![problem.thetadot0],
        thetaddot: vec![acceleration(profile, problem.theta0, problem.thetadot0).unwrap_or(f64::NAN)],
        truncated_at: None,
    };
    let mut y = [problem.theta0, problem.thetadot0];
    let mut next = [0.0; 2];
    for i in 0..steps {
        let t = problem.t0 + i as f64 * h;
        rk4_step(&rhs, t, &y, h, &mut next);
        let t_next = if i + 1 == steps { problem.t_end() } else { problem.t0 + (i + 1) as f64 * h };
        if next[1].abs() > THETADOT_LIMIT {
            out.truncated_at = Some(t);
            break;
        }
        if !next.iter().all(|v| v.is_finite()) && !left_domain.get() {
            // overflow inside the step: the protocol is running into a singularity
            out.truncated_at = Some(t);
            break;
        }
        match acceleration(profile, next[0], next[1]) {
            Some(a) if a.is_finite() => {
                y = next;
                out.t.push(t_next);
                out.theta.push(y[0]);
                out.thetadot.push(y[1]);
                out.thetaddot.push(a);
            }
            _ => {
                return Err(Error::Truncated {
                    last_valid_t: t,
                    reason: format!("profile left its domain after theta = {}", y[0]),
                })
            }
        }
    }
    Ok(out)
}

/// `|v| = ½√F(θ)|θ̇|` together with the sign of `θ̇`.
pub fn computational_speed(profile: &FisherProfile, theta: f64, thetadot: f64) -> Result<(f64, bool)> {
    let f = profile.value(theta)?;
    Ok((0.5 * f.sqrt() * thetadot.abs(), thetadot < 0.0))
}

/// Closed-form `Λ = v(t0)² τ` for the three solvable geodesics.
pub fn closed_form_availability_loss(problem: &ReparamProblem) -> Option<f64> {
    let v = problem.thetadot0 * problem.thetadot0 * problem.tau / 4.0;
    match problem.profile {
        FisherProfile::Constant { f0 } => Some(f0 * v),
        FisherProfile::ExponentialDecay { f0, xi } => Some(f0 * v * (-xi * problem.theta0).exp()),
        FisherProfile::PowerLawDecay { f0, omega, n } if n == 4.0 => {
            Some(f0 * v / (1.0 + omega * problem.theta0).powi(4))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoReport {
    pub length: f64,
    pub availability_loss: f64,
    pub divergence: f64,
    pub speed_mean: f64,
    /// `max_t |v(t) − v(t0)|`.
    pub speed_max_dev: f64,
    /// Blow-up time of the closed-form protocol, if any.
    pub domain_end: Option<f64>,
    #[serde(skip)]
    pub speed_times: Vec<f64>,
    #[serde(skip)]
    pub speed: Vec<f64>,
    #[serde(skip)]
    pub speed_constant: bool,
    #[serde(skip)]
    pub closed_form_loss: Option<f64>,
}

/// Adaptive Simpson with absolute tolerance `tol` and bounded recursion depth.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Length, availability loss, divergence and speed trace of an arbitrary
/// protocol `t ↦ (θ, θ̇)` on `[t0, t0 + τ]`.
pub fn path_report<T>(profile: &FisherProfile, t0: f64, tau: f64, trajectory: T) -> Result<ThermoReport>
where
    T: Fn(f64) -> (f64, f64),
{
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let speed_at = |t: f64| -> Result<f64> {
        let (theta, thetadot) = trajectory(t);
        Ok(computational_speed(profile, theta, thetadot)?.0)
    };
    let speed_times: Vec<f64> = (0..SPEED_SAMPLES)
        .map(|i| t0 + tau * i as f64 / (SPEED_SAMPLES - 1) as f64)
        .collect();
    let speed = speed_times.iter().map(|&t| speed_at(t)).collect::<Result<Vec<_>>>()?;
    let v0 = speed[0];
    let speed_max_dev = speed.iter().map(|v| (v - v0).abs()).fold(0.0, f64::max);
    let speed_mean = speed.iter().sum::<f64>() / speed.len() as f64;

    // the speed samples above already validated the domain along the path
    let v = |t: f64| speed_at(t).unwrap_or(f64::NAN);
    let t1 = t0 + tau;
    let availability_loss = adaptive_simpson(&|t| v(t).powi(2), t0, t1, QUAD_TOL, QUAD_DEPTH);
    let length = adaptive_simpson(&v, t0, t1, QUAD_TOL, QUAD_DEPTH);
    if !(availability_loss.is_finite() && length.is_finite()) {
        return Err(Error::Consistency("quadrature produced a non-finite value".into()));
    }
    Ok(ThermoReport {
        length,
        availability_loss,
        divergence: tau * availability_loss,
        speed_mean,
        speed_max_dev,
        domain_end: None,
        speed_times,
        speed,
        speed_constant: speed_max_dev <= 1e-6 * (1.0 + v0),
        closed_form_loss: None,
    })
}

fn finish(problem: &ReparamProblem, mut report: ThermoReport, domain_end: Option<f64>) -> Result<ThermoReport> {
    report.domain_end = domain_end;
    report.closed_form_loss = closed_form_availability_loss(problem);
    if let Some(exact) = report.closed_form_loss {
        let diff = (report.availability_loss - exact).abs();
        if diff > CROSS_CHECK_TOL * exact.abs() + 1e-12 {
            return Err(Error::Consistency(format!(
                "quadrature gives {} but the closed form gives {exact}",
                report.availability_loss
            )));
        }
    }
    Ok(report)
}

/// Thermodynamic report along the geodesic protocol of `problem`.
///
/// Uses the closed-form protocol when one exists and an interpolated RK4
/// trajectory otherwise.
pub fn availability_loss(problem: &ReparamProblem) -> Result<ThermoReport> {
    match reparam_closed_form(problem) {
        Ok(traj) => {
            let report = path_report(&problem.profile, problem.t0, problem.tau, |t| traj.state(t))?;
            finish(problem, report, traj.domain_end())
        }
        Err(Error::Unsupported(_)) => availability_loss_numeric(problem, problem.tau / NUMERIC_STEPS),
        Err(e) => Err(e),
    }
}

/// Same as [`availability_loss`] but always along the RK4 trajectory.
pub fn availability_loss_numeric(problem: &ReparamProblem, step: f64) -> Result<ThermoReport> {
    let samples = reparam_numeric(problem, step)?;
    if let Some(t) = samples.truncated_at {
        return Err(Error::Truncated {
            last_valid_t: t,
            reason: format!("|dtheta/dt| exceeded {THETADOT_LIMIT:e}"),
        });
    }
    let domain_end = reparam_closed_form(problem).ok().and_then(|c| c.domain_end());
    let report = path_report(&problem.profile, problem.t0, problem.tau, |t| samples.state(t))?;
    finish(problem, report, domain_end)
}

/// Outcome of [`divergence_length_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceCheck {
    /// `Λ ≥ L²/τ` up to `1e−9`.
    pub holds: bool,
    /// `Λ − L²/τ`.
    pub slack: f64,
    /// Equality within `1e−6`.
    pub equality: bool,
}

pub fn divergence_length_check(report: &ThermoReport, tau: f64) -> DivergenceCheck {
    let slack = report.availability_loss - report.length * report.length / tau;
    DivergenceCheck {
        holds: slack >= -1e-9,
        slack,
        equality: slack.abs() <= 1e-6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::CustomProfile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_problem(theta0: f64, thetadot0: f64, tau: f64) -> ReparamProblem {
        ReparamProblem::new(FisherProfile::exponential(1.0, 2.0).unwrap(), theta0, thetadot0, 0.0, tau).unwrap()
    }

    #[test]
    fn constant_protocol_is_linear() {
        let p = ReparamProblem::new(FisherProfile::constant(4.0).unwrap(), 0.0, 1.0, 0.0, 3.0).unwrap();
        let traj = reparam_closed_form(&p).unwrap();
        assert_eq!(traj.state(1.7), (1.7, 1.0));
        assert_eq!(traj.domain_end(), None);
        let num = reparam_numeric(&p, 0.01).unwrap();
        for (t, th) in num.t.iter().zip(&num.theta) {
            assert!((th - t).abs() < 1e-12);
        }
    }

    #[test]
    fn spot_values() {
        let traj = reparam_closed_form(&exp_problem(0.0, 1.0, 0.5)).unwrap();
        assert!((traj.state(0.5).0 - 2f64.ln()).abs() < 1e-15);
        assert_eq!(traj.domain_end(), Some(1.0));
        let p = ReparamProblem::new(FisherProfile::power_law(1.0, 1.0, 4.0).unwrap(), 0.0, 1.0, 0.0, 0.5).unwrap();
        let traj = reparam_closed_form(&p).unwrap();
        assert!((traj.state(0.5).0 - 1.0).abs() < 1e-15);
        assert_eq!(traj.domain_end(), Some(1.0));
    }

    #[test]
    fn closed_forms_match_rk4_up_to_ninety_percent_of_blowup() {
        let cases = [
            ReparamProblem::new(FisherProfile::exponential(1.0, 2.0).unwrap(), 0.0, 1.0, 0.0, 0.9).unwrap(),
            ReparamProblem::new(FisherProfile::power_law(1.0, 1.0, 4.0).unwrap(), 0.0, 1.0, 0.0, 0.9).unwrap(),
            ReparamProblem::new(FisherProfile::power_law(2.0, 0.5, 4.0).unwrap(), 0.3, 1.5, 1.0, 0.9 * 1.15 / 0.75).unwrap(),
        ];
        for p in &cases {
            let traj = reparam_closed_form(p).unwrap();
            let num = reparam_numeric(p, 1e-4).unwrap();
            assert!(num.truncated_at.is_none());
            let err = num
                .t
                .iter()
                .zip(&num.theta)
                .map(|(&t, th)| (traj.state(t).0 - th).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-7, "{p:?}: {err}");
        }
    }

    #[test]
    fn blowup_is_reported() {
        let err = reparam_closed_form(&exp_problem(0.0, 1.0, 1.0)).unwrap_err();
        match err {
            Error::Truncated { last_valid_t, .. } => assert!((last_valid_t - 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
        let num = reparam_numeric(&exp_problem(0.0, 1.0, 1.5), 1e-3).unwrap();
        let stop = num.truncated_at.unwrap();
        assert!((stop - 1.0).abs() < 1e-2, "{stop}");
        // decelerating protocols never blow up
        assert!(reparam_closed_form(&exp_problem(0.0, -1.0, 50.0)).is_ok());
    }

    #[test]
    fn numeric_domain_violation_is_truncation() {
        // F = 1 + θ on θ > 0 is crossed at a finite time when moving left
        let f = FisherProfile::custom(CustomProfile::new("ramp", (0.0, f64::INFINITY), |t| (1.0 + t, 1.0)));
        let p = ReparamProblem::new(f, 0.5, -1.0, 0.0, 5.0).unwrap();
        match reparam_numeric(&p, 1e-3) {
            Err(Error::Truncated { last_valid_t, .. }) => assert!(last_valid_t > 0.0 && last_valid_t < 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_profiles_point_to_numeric() {
        let p = ReparamProblem::new(FisherProfile::power_law(1.0, 1.0, 2.0).unwrap(), 0.0, 1.0, 0.0, 0.5).unwrap();
        assert!(matches!(reparam_closed_form(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn speed_examples() {
        let c = FisherProfile::constant(4.0).unwrap();
        assert_eq!(computational_speed(&c, 0.0, 1.0).unwrap(), (1.0, false));
        assert_eq!(computational_speed(&c, 0.0, 0.0).unwrap().0, 0.0);
        // F(1) = 1/16 for F0 = 1, Ω = 1
        let p = FisherProfile::power_law(1.0, 1.0, 4.0).unwrap();
        assert!((computational_speed(&p, 1.0, 2.0).unwrap().0 - 0.25).abs() < 1e-15);
        assert!(computational_speed(&c, 0.0, -1.0).unwrap().1);
    }

    #[test]
    fn availability_examples() {
        let p = ReparamProblem::new(FisherProfile::constant(4.0).unwrap(), 0.0, 1.0, 0.0, 2.0).unwrap();
        let r = availability_loss(&p).unwrap();
        assert!((r.availability_loss - 2.0).abs() < 1e-10);
        assert!((r.length - 2.0).abs() < 1e-10);
        assert!((r.divergence - 4.0).abs() < 1e-10);
        let check = divergence_length_check(&r, 2.0);
        assert!(check.holds && check.equality);

        let r = availability_loss(&exp_problem(0.0, 1.0, 0.5)).unwrap();
        // Λ = v²τ with v = ½ for F0 = 1 and θ̇0 = 1 at θ0 = 0
        assert!((r.availability_loss - 0.125).abs() < 1e-9);

        let r = availability_loss(&exp_problem(0.3, 0.0, 1.0)).unwrap();
        assert_eq!((r.availability_loss, r.length), (0.0, 0.0));
        let check = divergence_length_check(&r, 1.0);
        assert!(check.holds && check.slack == 0.0);
    }

    #[test]
    fn exponential_loss_at_unit_tau() {
        // τ = 1 reaches the blow-up time of θ0 = 0, θ̇0 = 1; the loss rate is
        // fixed so the closed form still reads (F0/4)θ̇0²τ = 0.25
        let p = exp_problem(0.0, 1.0, 1.0);
        assert_eq!(closed_form_availability_loss(&p), Some(0.25));
        assert!(matches!(availability_loss(&p), Err(Error::Truncated { .. })));
        let half = availability_loss(&exp_problem(0.0, 0.5, 1.0)).unwrap();
        assert!((half.availability_loss - 0.0625).abs() < 1e-9);
    }

    #[test]
    fn numeric_and_closed_reports_agree() {
        let p = exp_problem(0.4, 0.8, 1.2);
        let a = availability_loss(&p).unwrap();
        let b = availability_loss_numeric(&p, 1e-3).unwrap();
        assert!((a.availability_loss - b.availability_loss).abs() < 1e-9 * (1.0 + a.availability_loss));
        assert!((a.availability_loss / a.closed_form_loss.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_shape_profile_keeps_constant_speed() {
        let f = FisherProfile::custom(CustomProfile::new("inverse-square", (0.0, f64::INFINITY), |t| {
            (1.0 / (t * t), -2.0 / (t * t * t))
        }));
        let p = ReparamProblem::new(f, 1.0, 0.7, 0.0, 2.0).unwrap();
        let r = availability_loss(&p).unwrap();
        assert!(r.speed_max_dev <= 1e-6, "{}", r.speed_max_dev);
        assert!(r.speed_constant);
        assert!(divergence_length_check(&r, 2.0).equality);
    }

    #[test]
    fn non_geodesic_path_has_slack() {
        let f0 = 4.0;
        let profile = FisherProfile::constant(f0).unwrap();
        let r = path_report(&profile, 0.0, 1.0, |t| (t * t, 2.0 * t)).unwrap();
        // Λ = (F0/4)∫4t² dt = 4/3 and L = (√F0/2)∫2t dt = 1 on [0, 1]
        assert!((r.availability_loss - 4.0 / 3.0).abs() < 1e-10);
        assert!((r.length - 1.0).abs() < 1e-10);
        let check = divergence_length_check(&r, 1.0);
        assert!(check.holds && check.slack > 0.3 && !check.equality);
        assert!(!r.speed_constant);
    }

    #[test]
    fn power_law_loss_away_from_origin() {
        let p = ReparamProblem::new(FisherProfile::power_law(1.0, 1.0, 4.0).unwrap(), 1.0, 2.0, 0.0, 0.5).unwrap();
        let r = availability_loss(&p).unwrap();
        // v = ½ √(1/16) · 2 = ¼ throughout, so Λ = v²τ
        assert!((r.availability_loss - 0.03125).abs() < 1e-10);
        assert!(r.speed_constant);
    }

    #[test]
    fn loss_is_linear_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let theta0 = rng.gen_range(0.0..1.0);
            let thetadot0 = rng.gen_range(-1.0..1.0);
            let a = availability_loss(&exp_problem(theta0, thetadot0, 0.2)).unwrap();
            let b = availability_loss(&exp_problem(theta0, thetadot0, 0.4)).unwrap();
            assert!((b.availability_loss - 2.0 * a.availability_loss).abs() <= 1e-6 * b.availability_loss + 1e-12);
        }
    }

    #[test]
    fn simpson_is_accurate() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 30);
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn report_json_round_trip() {
        let r = availability_loss(&exp_problem(0.0, 0.5, 1.0)).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: ThermoReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.availability_loss, r.availability_loss);
        assert_eq!(back.domain_end, Some(2.0));
    }
}
