//! Geodesic paths of probability amplitudes.
//!
//! Each amplitude obeys
//!
//! ```text
//! q̈_k − ½ (Ḟ/F) q̇_k + κ √F q_k = 0
//! ```
//!
//! with `κ = λ_FS` in the Fubini-Study gauge and `κ = λ_WY / 2` in the
//! Wigner-Yanase gauge. Closed forms are provided for constant Fisher
//! information (harmonic motion), exponential decay (an aging spring with
//! damping, solved by order-one Bessel functions) and critically damped
//! power-law decay with `n = 4`; any other profile goes through
//! [`solve_numeric`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::fisher::FisherProfile;
use crate::ode::integrate_with_estimate;
use crate::paths::{AmplitudePath, AmplitudeVector, Gauge, Grid};
use crate::special::{j0, j1, j_minus1, y0, y1};

/// Largest accepted step-halving discrepancy in [`solve_numeric`].
pub const RK_TOLERANCE: f64 = 1e-6;
/// Largest residual [`calibrate_constants`] accepts.
pub const CALIBRATION_THRESHOLD: f64 = 1e-2;
/// Seed used for calibration multistarts unless overridden.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;
const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gauge: Gauge,
    /// Multiplier in `gauge`'s convention.
    pub lambda: f64,
    pub grid: Grid,
    /// RK4 step in θ; defaults to a tenth of the grid spacing.
    pub rk_step: Option<f64>,
}

impl SolverConfig {
    pub fn new(gauge: Gauge, lambda: f64, grid: Grid) -> Self {
        SolverConfig {
            gauge,
            lambda,
            grid,
            rk_step: None,
        }
    }

    pub fn step(&self) -> f64 {
        self.rk_step.unwrap_or(self.grid.spacing() / 10.0)
    }

    /// `κ` in `q̈ − ½(Ḟ/F)q̇ + κ√F q = 0`.
    pub fn restoring_coefficient(&self) -> f64 {
        self.gauge.restoring_coefficient(self.lambda)
    }
}

/// Integration constants `c_k^(1)`, `c_k^(2)` for each component `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCoefficients {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl SolutionCoefficients {
    pub fn new(c1: Vec<f64>, c2: Vec<f64>) -> Result<Self> {
        if c1.len() != c2.len() {
            return Err(Error::DimensionMismatch {
                expected: c1.len(),
                got: c2.len(),
            });
        }
        if c1.is_empty() {
            return Err(Error::Domain("at least one component is required".into()));
        }
        ensure_finite(&c1, "c1")?;
        ensure_finite(&c2, "c2")?;
        Ok(SolutionCoefficients { c1, c2 })
    }

    /// `c = ((1, 0), (0, 1))`: `q_1 = cos`, `q_2 = sin` in the harmonic case.
    pub fn canonical() -> Self {
        SolutionCoefficients {
            c1: vec![1.0, 0.0],
            c2: vec![0.0, 1.0],
        }
    }

    pub fn components(&self) -> usize {
        self.c1.len()
    }

    pub fn negated(&self) -> Self {
        SolutionCoefficients {
            c1: self.c1.iter().map(|v| -v).collect(),
            c2: self.c2.iter().map(|v| -v).collect(),
        }
    }

    fn to_params(&self, lambda: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(1 + 2 * self.c1.len());
        x.push(lambda);
        x.extend_from_slice(&self.c1);
        x.extend_from_slice(&self.c2);
        x
    }

    fn from_params(x: &[f64]) -> (f64, Self) {
        let n = (x.len() - 1) / 2;
        (
            x[0],
            SolutionCoefficients {
                c1: x[1..1 + n].to_vec(),
                c2: x[1 + n..].to_vec(),
            },
        )
    }
}

/// Builds a path from two basis solutions `u(θ)`, `w(θ)` and their derivatives.
fn superpose<B>(grid: &Grid, coeffs: &SolutionCoefficients, lambda: f64, basis: B) -> Result<AmplitudePath>
where
    B: Fn(f64) -> [f64; 4],
{
    let theta = grid.points();
    let n = coeffs.components();
    let mut q = vec![Vec::with_capacity(theta.len()); n];
    let mut q_dot = vec![Vec::with_capacity(theta.len()); n];
    for &t in &theta {
        let [u, w, du, dw] = basis(t);
        if ![u, w, du, dw].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("basis solution not finite at theta = {t}")));
        }
        for k in 0..n {
            q[k].push(coeffs.c1[k] * u + coeffs.c2[k] * w);
            q_dot[k].push(coeffs.c1[k] * du + coeffs.c2[k] * dw);
        }
    }
    Ok(AmplitudePath {
        theta,
        q,
        q_dot,
        lambda,
        gauge: Gauge::FubiniStudy,
    })
}

/// `(λ_FS, λ_WY)` for constant Fisher information `F0`.
pub fn calibrate_lambda_constant(f0: f64) -> Result<(f64, f64)> {
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::Domain(format!("F0 must be positive, got {f0}")));
    }
    let lambda_fs = 0.25 * f0.sqrt();
    Ok((lambda_fs, Gauge::WignerYanase.lambda_from_fs(lambda_fs)))
}

/// Harmonic solution `c¹ cos(ωθ) + c² sin(ωθ)`, `ω = F0^{1/4} √λ_FS`.
pub fn constant_path(f0: f64, lambda: f64, coeffs: &SolutionCoefficients, grid: &Grid) -> Result<AmplitudePath> {
    grid.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    let omega = f0.powf(0.25) * lambda.sqrt();
    superpose(grid, coeffs, lambda, |t| {
        let (s, c) = (omega * t).sin_cos();
        [c, s, -omega * s, omega * c]
    })
}

/// Constant-Fisher geodesic with the multiplier fixed by `4Σq̇² = F0`.
pub fn solve_constant(f0: f64, coeffs: &SolutionCoefficients, grid: &Grid) -> Result<AmplitudePath> {
    let (lambda, _) = calibrate_lambda_constant(f0)?;
    let path = constant_path(f0, lambda, coeffs, grid)?;
    let c1: f64 = coeffs.c1.iter().map(|c| c * c).sum();
    let c2: f64 = coeffs.c2.iter().map(|c| c * c).sum();
    let cross: f64 = coeffs.c1.iter().zip(&coeffs.c2).map(|(a, b)| a * b).sum();
    if (c1 - 1.0).abs() > 1e-9 || (c2 - 1.0).abs() > 1e-9 || cross.abs() > 1e-9 {
        return Err(Error::CalibrationFailed {
            residual: (c1 - 1.0).abs().max((c2 - 1.0).abs()).max(cross.abs()),
            threshold: 1e-9,
        });
    }
    Ok(path)
}

/// Second solution used alongside `J_1` in the exponential-decay case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecondSolution {
    /// `J_{-1} = -J_1`, the textbook aging-spring form; linearly dependent on `J_1`.
    NegativeOrderJ,
    /// `Y_1`, which completes the solution space.
    BesselY,
}

/// Aging-spring parameters matched to the exponential-decay equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialMapping {
    pub xi: f64,
    /// `λ_FS √F0`.
    pub lambda_f0: f64,
    pub b_over_m: f64,
    pub eta: f64,
    pub k_over_m: f64,
    pub bessel_order: f64,
    /// `(4/ξ) √λ_FS F0^{1/4}`; the Bessel argument is this times `e^{−ξθ/4}`.
    pub argument_scale: f64,
}

impl ExponentialMapping {
    pub fn new(f0: f64, xi: f64, lambda: f64) -> Result<Self> {
        if !(f0 > 0.0 && xi > 0.0 && lambda >= 0.0) || !(f0.is_finite() && xi.is_finite() && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "exponential mapping needs F0 > 0, xi > 0, lambda >= 0 (got {f0}, {xi}, {lambda})"
            )));
        }
        let b_over_m = xi / 2.0;
        let eta = xi / 2.0;
        let k_over_m = lambda * f0.sqrt();
        Ok(ExponentialMapping {
            xi,
            lambda_f0: k_over_m,
            b_over_m,
            eta,
            k_over_m,
            bessel_order: b_over_m / eta,
            argument_scale: 2.0 / eta * k_over_m.sqrt(),
        })
    }

    pub fn argument(&self, theta: f64) -> f64 {
        self.argument_scale * (-self.xi * theta / 4.0).exp()
    }
}

/// `q_k = e^{−ξθ/4}[c¹ J_1(z) + c² S(z)]`, `z = (4/ξ)√λ F0^{1/4} e^{−ξθ/4}`.
pub fn solve_exponential(
    f0: f64,
    xi: f64,
    lambda: f64,
    coeffs: &SolutionCoefficients,
    grid: &Grid,
    second: SecondSolution,
) -> Result<AmplitudePath> {
    grid.validate()?;
    if grid.start < 0.0 {
        return Err(Error::Domain(format!("grid must lie in theta >= 0, starts at {}", grid.start)));
    }
    let map = ExponentialMapping::new(f0, xi, lambda)?;
    if second == SecondSolution::BesselY && map.argument(grid.stop) <= 0.0 {
        let end = grid.points().into_iter().find(|&t| map.argument(t) <= 0.0).unwrap_or(grid.start);
        return Err(Error::Domain(format!(
            "second-kind solution singular: Bessel argument vanishes at theta = {end}"
        )));
    }
    let quarter = xi / 4.0;
    superpose(grid, coeffs, lambda, |t| {
        let e = (-quarter * t).exp();
        let z = map.argument_scale * e;
        // d/dθ [e f(z)] = −(ξ/4) e (f + z f') and f + z f' = z f_0 for order one
        let (s, s0) = match second {
            SecondSolution::BesselY => (y1(z), y0(z)),
            SecondSolution::NegativeOrderJ => (j_minus1(z), -j0(z)),
        };
        [
            e * j1(z),
            e * s,
            -quarter * e * z * j0(z),
            -quarter * e * z * s0,
        ]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DampingClass {
    Under,
    Critical,
    Over,
}

/// Constant-coefficient reduction `x'' + B x' + A x = 0` of the `n = 4`
/// power-law equation under `s = (1/B) log(1 + Ωθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawMapping {
    pub a: f64,
    pub b: f64,
    pub f0: f64,
    /// `(B/√A) √λ F0^{1/4}`.
    pub omega: f64,
    pub damping: DampingClass,
}

impl PowerLawMapping {
    pub fn new(f0: f64, a: f64, b: f64, lambda: f64) -> Result<Self> {
        if !(f0 > 0.0 && a > 0.0 && b != 0.0 && lambda >= 0.0)
            || ![f0, a, b, lambda].iter().all(|v| v.is_finite())
        {
            return Err(Error::Domain(format!(
                "power-law mapping needs F0 > 0, A > 0, B != 0, lambda >= 0 (got {f0}, {a}, {b}, {lambda})"
            )));
        }
        let disc = b * b - 4.0 * a;
        let damping = if disc.abs() <= CRITICAL_TOL {
            DampingClass::Critical
        } else if disc < 0.0 {
            DampingClass::Under
        } else {
            DampingClass::Over
        };
        Ok(PowerLawMapping {
            a,
            b,
            f0,
            omega: b / a.sqrt() * lambda.sqrt() * f0.powf(0.25),
            damping,
        })
    }

    pub fn s_of_theta(&self, theta: f64) -> f64 {
        (self.omega * theta).ln_1p() / self.b
    }

    /// `F0 / (1 + Ωθ)^4`.
    pub fn profile(&self) -> Result<FisherProfile> {
        FisherProfile::power_law(self.f0, self.omega, 4.0)
    }
}

/// `q_k = [c¹ + c² (1/B) log(1 + Ωθ)] / (1 + Ωθ)^{1/2}` for `B² = 4A`.
pub fn solve_powerlaw_critical(
    f0: f64,
    a: f64,
    b: f64,
    lambda: f64,
    coeffs: &SolutionCoefficients,
    grid: &Grid,
) -> Result<AmplitudePath> {
    grid.validate()?;
    let map = PowerLawMapping::new(f0, a, b, lambda)?;
    if map.damping != DampingClass::Critical {
        return Err(Error::Unsupported(format!(
            "{:?} damping (B² − 4A = {:e}) has no closed form here; use solve_numeric",
            map.damping,
            b * b - 4.0 * a
        )));
    }
    for t in [grid.start, grid.stop] {
        if 1.0 + map.omega * t <= 0.0 {
            return Err(Error::ProfileDomain {
                theta: t,
                reason: "requires 1 + Omega*theta > 0".into(),
            });
        }
    }
    let omega = map.omega;
    superpose(grid, coeffs, lambda, |t| {
        let u = 1.0 + omega * t;
        let s = map.s_of_theta(t);
        let root = u.sqrt();
        let du = -0.5 * omega / (u * root);
        [1.0 / root, s / root, du, omega / (b * u * root) + s * du]
    })
}

/// RK4 integration of the geodesic equation for an arbitrary profile.
pub fn solve_numeric(
    profile: &FisherProfile,
    q0: &AmplitudeVector,
    qdot0: &[f64],
    config: &SolverConfig,
) -> Result<AmplitudePath> {
    config.grid.validate()?;
    if qdot0.len() != q0.len() {
        return Err(Error::DimensionMismatch {
            expected: q0.len(),
            got: qdot0.len(),
        });
    }
    ensure_finite(qdot0, "qdot0")?;
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {}", config.lambda)));
    }
    // the built-in domains are intervals, so the endpoints cover every sub-step
    profile.eval(config.grid.start)?;
    profile.eval(config.grid.stop)?;

    let n = q0.len();
    let kappa = config.restoring_coefficient();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (f, df) = profile.eval(t).unwrap_or((f64::NAN, f64::NAN));
        let damping = 0.5 * df / f;
        let spring = kappa * f.sqrt();
        for k in 0..n {
            dy[k] = y[n + k];
            dy[n + k] = damping * y[n + k] - spring * y[k];
        }
    };
    let mut y0 = q0.as_slice().to_vec();
    y0.extend_from_slice(qdot0);
    let theta = config.grid.points();
    let (states, estimate) = integrate_with_estimate(&rhs, &y0, &theta, config.step())?;
    if estimate > RK_TOLERANCE {
        return Err(Error::Accuracy {
            estimate,
            tolerance: RK_TOLERANCE,
        });
    }
    let q = (0..n).map(|k| states.iter().map(|s| s[k]).collect()).collect();
    let q_dot = (0..n).map(|k| states.iter().map(|s| s[n + k]).collect()).collect();
    Ok(AmplitudePath {
        theta,
        q,
        q_dot,
        lambda: config.lambda,
        gauge: config.gauge,
    })
}

/// Normalized start `(1, 0, …)` moving along the second axis at the speed
/// that makes `4Σq̇² = F(θ0)`.
pub fn fisher_consistent_start(profile: &FisherProfile, theta0: f64, components: usize) -> Result<(AmplitudeVector, Vec<f64>)> {
    if components < 2 {
        return Err(Error::Domain("at least two components are required".into()));
    }
    let f = profile.value(theta0)?;
    let mut q = vec![0.0; components];
    q[0] = 1.0;
    let mut v = vec![0.0; components];
    v[1] = 0.5 * f.sqrt();
    Ok((AmplitudeVector::normalized(q, 1e-12)?, v))
}

/// A closed-form solution family parametrized by `(λ_FS, c)`.
pub trait PathFamily {
    fn path(&self, lambda: f64, coeffs: &SolutionCoefficients, grid: &Grid) -> Result<AmplitudePath>;

    /// Fisher information the path should reproduce; may depend on `λ`.
    fn fisher(&self, lambda: f64, theta: f64) -> Result<f64>;

    /// Upper end of the multiplier search box.
    fn lambda_max(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFamily {
    pub f0: f64,
}

impl PathFamily for ConstantFamily {
    fn path(&self, lambda: f64, coeffs: &SolutionCoefficients, grid: &Grid) -> Result<AmplitudePath> {
        constant_path(self.f0, lambda, coeffs, grid)
    }

    fn fisher(&self, _lambda: f64, _theta: f64) -> Result<f64> {
        Ok(self.f0)
    }

    fn lambda_max(&self) -> f64 {
        10.0 * 0.25 * self.f0.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFamily {
    pub f0: f64,
    pub xi: f64,
    pub second: SecondSolution,
}

impl PathFamily for ExponentialFamily {
    fn path(&self, lambda: f64, coeffs: &SolutionCoefficients, grid: &Grid) -> Result<AmplitudePath> {
        solve_exponential(self.f0, self.xi, lambda, coeffs, grid, self.second)
    }

    fn fisher(&self, _lambda: f64, theta: f64) -> Result<f64> {
        Ok(self.f0 * (-self.xi * theta).exp())
    }

    fn lambda_max(&self) -> f64 {
        10.0 * 0.25 * self.f0.sqrt()
    }
}

/// Critical power-law family; `Ω` and hence `F` follow `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawCriticalFamily {
    pub f0: f64,
    pub a: f64,
    pub b: f64,
}

impl PathFamily for PowerLawCriticalFamily {
    fn path(&self, lambda: f64, coeffs: &SolutionCoefficients, grid: &Grid) -> Result<AmplitudePath> {
        solve_powerlaw_critical(self.f0, self.a, self.b, lambda, coeffs, grid)
    }

    fn fisher(&self, lambda: f64, theta: f64) -> Result<f64> {
        PowerLawMapping::new(self.f0, self.a, self.b, lambda)?.profile()?.value(theta)
    }

    fn lambda_max(&self) -> f64 {
        10.0 * 0.25 * self.f0.sqrt()
    }
}

/// What [`calibrate_constants`] drives to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationTarget {
    /// `max_θ |Σq² − 1|`, with `4Σq̇² = F` imposed at the first grid point.
    Normalization,
    /// `max_θ |4Σq̇² − F|`, with `Σq² = 1` imposed at the first grid point.
    FisherResidual,
    /// Both of the above on every grid point.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub coeffs: SolutionCoefficients,
    pub lambda: f64,
    /// Largest absolute entry of the target's residual vector.
    pub residual: f64,
    pub norm_residual: f64,
    pub fisher_residual: f64,
    /// Index of the multistart that produced the result.
    pub start: usize,
}

const MULTISTARTS: usize = 16;
const COEFF_BOUND: f64 = 4.0;
const LAMBDA_FLOOR: f64 = 1e-9;

struct Objective<'a, P: PathFamily + ?Sized> {
    family: &'a P,
    grid: Grid,
    target: CalibrationTarget,
    lambda_max: f64,
}

impl<P: PathFamily + ?Sized> Objective<'_, P> {
    fn clamp(&self, x: &mut [f64]) {
        x[0] = x[0].clamp(LAMBDA_FLOOR, self.lambda_max);
        for v in &mut x[1..] {
            *v = v.clamp(-COEFF_BOUND, COEFF_BOUND);
        }
    }

    /// `(norm defects, fisher defects)` on the grid.
    fn defects(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (lambda, coeffs) = SolutionCoefficients::from_params(x);
        let path = self.family.path(lambda, &coeffs, &self.grid).ok()?;
        let norm = path.norm_defect_series();
        let fisher_path = path.fisher_series();
        let mut fisher = Vec::with_capacity(fisher_path.len());
        for (t, fp) in path.theta.iter().zip(fisher_path) {
            fisher.push(fp - self.family.fisher(lambda, *t).ok()?);
        }
        Some((norm, fisher))
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (norm, fisher) = self.defects(x)?;
        let r = match self.target {
            CalibrationTarget::Normalization => {
                let mut r = norm;
                r.push(fisher[0]);
                r
            }
            CalibrationTarget::FisherResidual => {
                let mut r = fisher;
                r.push(norm[0]);
                r
            }
            CalibrationTarget::Joint => {
                let mut r = norm;
                r.extend(fisher);
                r
            }
        };
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn score(&self, x: &[f64]) -> f64 {
        self.residuals(x)
            .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::INFINITY)
    }

    fn sum_squares(&self, x: &[f64]) -> f64 {
        self.residuals(x)
            .map(|r| r.iter().map(|v| v * v).sum())
            .unwrap_or(f64::INFINITY)
    }

    /// Compass search along the coordinate axes on `score`.
    fn coordinate_descent(&self, x: &mut Vec<f64>, max_evals: usize) -> f64 {
        let mut best = self.score(x);
        let mut steps: Vec<f64> = std::iter::once(0.1 * self.lambda_max)
            .chain(std::iter::repeat(0.5).take(x.len() - 1))
            .collect();
        let mut evals = 0;
        while evals < max_evals && steps.iter().any(|&s| s > 1e-12) {
            let sweep_start = best;
            for i in 0..x.len() {
                let mut moved = false;
                for dir in [1.0, -1.0] {
                    let mut trial = x.clone();
                    trial[i] += dir * steps[i];
                    self.clamp(&mut trial);
                    let s = self.score(&trial);
                    evals += 1;
                    if s < best {
                        best = s;
                        *x = trial;
                        moved = true;
                        break;
                    }
                }
                if moved {
                    steps[i] *= 1.5;
                } else {
                    steps[i] *= 0.5;
                }
            }
            if sweep_start - best < 1e-12 && steps.iter().all(|&s| s < 1e-6) {
                break;
            }
        }
        best
    }

    /// Levenberg-Marquardt on the residual vector with a central-difference Jacobian.
    fn least_squares(&self, x: &mut Vec<f64>, iterations: usize) {
        let dim = x.len();
        let mut mu = 1e-3;
        let mut cost = self.sum_squares(x);
        for _ in 0..iterations {
            let Some(r) = self.residuals(x) else { return };
            let mut jac = nalgebra::DMatrix::<f64>::zeros(r.len(), dim);
            for j in 0..dim {
                let h = 1e-7 * x[j].abs().max(1e-3);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let (Some(rp), Some(rm)) = (self.residuals(&xp), self.residuals(&xm)) else { return };
                for i in 0..r.len() {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let rv = nalgebra::DVector::from_vec(r);
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &rv;
            let mut improved = false;
            for _ in 0..12 {
                let mut a = jtj.clone();
                for d in 0..dim {
                    a[(d, d)] += mu * (1.0 + jtj[(d, d)]);
                }
                let Some(step) = a.lu().solve(&(-&jtr)) else { break };
                let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                self.clamp(&mut trial);
                let c = self.sum_squares(&trial);
                if c < cost {
                    let gain = cost - c;
                    *x = trial;
                    cost = c;
                    mu = (mu / 3.0).max(1e-15);
                    improved = gain > 1e-30;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                return;
            }
        }
    }
}

/// Fits `(λ, c)` of a closed-form family to the chosen target.
///
/// Sixteen seeded starts in the box `λ ∈ (0, λ_max]`, `|c| ≤ 4` are each
/// refined by coordinate descent on the max-abs residual, a Levenberg-Marquardt
/// pass on the squared residuals, and a final coordinate-descent pass. The
/// lowest residual wins, ties going to the earlier start. For two components
/// the result is rotated so that `q(θ0) = (|q(θ0)|, 0)` with `q̇_2(θ0) ≥ 0`;
/// rotations leave both residuals unchanged.
pub fn calibrate_constants<P: PathFamily + ?Sized>(
    family: &P,
    components: usize,
    target: CalibrationTarget,
    grid: &Grid,
    seed: u64,
) -> Result<Calibration> {
    grid.validate()?;
    if components < 2 {
        return Err(Error::Domain(format!(
            "calibration needs at least 2 amplitude components, got {components}"
        )));
    }
    let objective = Objective {
        family,
        grid: *grid,
        target,
        lambda_max: family.lambda_max(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for start in 0..MULTISTARTS {
        let mut x: Vec<f64> = Vec::with_capacity(1 + 2 * components);
        x.push(rng.gen_range(LAMBDA_FLOOR..=objective.lambda_max));
        for _ in 0..2 * components {
            x.push(rng.gen_range(-COEFF_BOUND..=COEFF_BOUND));
        }
        let dim = x.len();
        objective.coordinate_descent(&mut x, 400 * dim);
        objective.least_squares(&mut x, 200);
        let score = objective.coordinate_descent(&mut x, 200 * dim);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, x, start));
        }
    }
    let (residual, x, start) = best.expect("at least one start");
    let (lambda, mut coeffs) = SolutionCoefficients::from_params(&x);
    if components == 2 {
        coeffs = canonical_rotation(family, lambda, &coeffs, grid)?;
    }
    let (norm, fisher) = objective
        .defects(&coeffs.to_params(lambda))
        .ok_or_else(|| Error::Consistency("calibrated path could not be evaluated".into()))?;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if residual > CALIBRATION_THRESHOLD || !residual.is_finite() {
        return Err(Error::CalibrationFailed {
            residual,
            threshold: CALIBRATION_THRESHOLD,
        });
    }
    Ok(Calibration {
        coeffs,
        lambda,
        residual,
        norm_residual: max_abs(&norm),
        fisher_residual: max_abs(&fisher),
        start,
    })
}

fn canonical_rotation<P: PathFamily + ?Sized>(
    family: &P,
    lambda: f64,
    coeffs: &SolutionCoefficients,
    grid: &Grid,
) -> Result<SolutionCoefficients> {
    let probe = Grid::new(grid.start, grid.stop, 2)?;
    let path = family.path(lambda, coeffs, &probe)?;
    let (q1, q2) = (path.q[0][0], path.q[1][0]);
    let angle = q2.atan2(q1);
    let (s, c) = angle.sin_cos();
    // rotate by −angle so that q(θ0) lands on the first axis
    let rotate = |v: &[f64]| vec![c * v[0] + s * v[1], -s * v[0] + c * v[1]];
    let mut out = SolutionCoefficients {
        c1: rotate(&coeffs.c1),
        c2: rotate(&coeffs.c2),
    };
    let v2 = -s * path.q_dot[0][0] + c * path.q_dot[1][0];
    if v2 < 0.0 {
        out.c1[1] = -out.c1[1];
        out.c2[1] = -out.c2[1];
    }
    Ok(out)
}

/// Oscillatory (at least two interior extrema) or monotonic (none).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Oscillatory,
    Monotonic,
}

/// Number of strict interior local extrema of a sampled series.
pub fn count_interior_extrema(series: &[f64]) -> usize {
    let diffs: Vec<f64> = series
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .collect();
    diffs.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Classifies a series; a single extremum is ambiguous and reported as an error.
pub fn classify(series: &[f64]) -> Result<Behavior> {
    match count_interior_extrema(series) {
        0 => Ok(Behavior::Monotonic),
        1 => Err(Error::Consistency(
            "exactly one interior extremum: neither oscillatory nor monotonic".into(),
        )),
        _ => Ok(Behavior::Oscillatory),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::fisher_from_discrete;
    use crate::paths::ProbabilityVector;
    use std::f64::consts::PI;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Closed form against RK4 started from the closed form's own initial data.
    fn closed_vs_numeric(closed: &AmplitudePath, profile: &FisherProfile, grid: Grid) -> f64 {
        let q0 = AmplitudeVector::raw(closed.amplitudes_at(0)).unwrap();
        let v0 = closed.velocities_at(0);
        let cfg = SolverConfig::new(Gauge::FubiniStudy, closed.lambda, grid);
        let num = solve_numeric(profile, &q0, &v0, &cfg).unwrap();
        (0..closed.components())
            .map(|k| max_diff(&closed.q[k], &num.q[k]))
            .fold(0.0, f64::max)
    }

    #[test]
    fn lambda_for_constant_fisher() {
        assert_eq!(calibrate_lambda_constant(4.0).unwrap(), (0.5, 1.0));
        assert_eq!(calibrate_lambda_constant(1.0).unwrap().0, 0.25);
        assert_eq!(calibrate_lambda_constant(16.0).unwrap().0, 1.0);
        assert!(calibrate_lambda_constant(0.0).is_err());
    }

    #[test]
    fn constant_grover_case() {
        let grid = Grid::new(0.0, 2.0 * PI, 1000).unwrap();
        let path = solve_constant(4.0, &SolutionCoefficients::canonical(), &grid).unwrap();
        for (i, t) in path.theta.iter().enumerate() {
            assert!((path.q[0][i].powi(2) - t.cos().powi(2)).abs() < 1e-14);
            assert!((path.q[1][i].powi(2) - t.sin().powi(2)).abs() < 1e-14);
        }
        for f in path.fisher_series() {
            assert!((f - 4.0).abs() < 1e-12);
        }
        assert_eq!(path.amplitudes_at(0), vec![1.0, 0.0]);
    }

    #[test]
    fn constant_unit_fisher() {
        let grid = Grid::new(0.0, 3.0, 31).unwrap();
        let path = solve_constant(1.0, &SolutionCoefficients::canonical(), &grid).unwrap();
        for (i, t) in path.theta.iter().enumerate() {
            assert!((path.q[0][i].powi(2) - (t / 2.0).cos().powi(2)).abs() < 1e-14);
        }
        let p = |t: f64| ProbabilityVector::new(vec![(t / 2.0).cos().powi(2), (t / 2.0).sin().powi(2)]);
        assert!((fisher_from_discrete(p, 1.2, 1e-5).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_rejects_unnormalizable() {
        let grid = Grid::new(0.0, 1.0, 5).unwrap();
        let bad = SolutionCoefficients::new(vec![1.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(solve_constant(4.0, &bad, &grid), Err(Error::CalibrationFailed { .. })));
    }

    #[test]
    fn constant_matches_numeric() {
        let grid = Grid::new(0.0, 2.0 * PI, 400).unwrap();
        let closed = solve_constant(4.0, &SolutionCoefficients::canonical(), &grid).unwrap();
        let err = closed_vs_numeric(&closed, &FisherProfile::constant(4.0).unwrap(), grid);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn exponential_matches_numeric() {
        let grid = Grid::new(0.0, 3.0, 301).unwrap();
        let coeffs = SolutionCoefficients::new(vec![0.7, -0.4], vec![0.2, 0.9]).unwrap();
        let closed = solve_exponential(1.0, 2.0, 0.3, &coeffs, &grid, SecondSolution::BesselY).unwrap();
        let err = closed_vs_numeric(&closed, &FisherProfile::exponential(1.0, 2.0).unwrap(), grid);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn exponential_mapping_identities() {
        let m = ExponentialMapping::new(1.0, 2.0, 0.25).unwrap();
        assert_eq!(m.bessel_order, 1.0);
        assert!((m.argument_scale - 2.0 * 0.5).abs() < 1e-15);
        assert!((m.k_over_m - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exponential_first_kind_branch_decays() {
        let grid = Grid::new(0.0, 40.0, 401).unwrap();
        let coeffs = SolutionCoefficients::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let path = solve_exponential(1.0, 2.0, 0.25, &coeffs, &grid, SecondSolution::BesselY).unwrap();
        assert!(path.q[0].last().unwrap().abs() < 1e-15);
    }

    #[test]
    fn negative_order_j_is_degenerate() {
        let grid = Grid::new(0.0, 2.0, 21).unwrap();
        let coeffs = SolutionCoefficients::new(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        let path = solve_exponential(1.0, 2.0, 0.25, &coeffs, &grid, SecondSolution::NegativeOrderJ).unwrap();
        // c¹J_1 + c²J_{−1} with c¹ = c² cancels identically
        assert!(path.q[0].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn exponential_rejects_negative_grid_and_zero_lambda() {
        let coeffs = SolutionCoefficients::canonical();
        let neg = Grid::new(-1.0, 1.0, 5).unwrap();
        assert!(solve_exponential(1.0, 2.0, 0.25, &coeffs, &neg, SecondSolution::BesselY).is_err());
        let grid = Grid::new(0.0, 1.0, 5).unwrap();
        assert!(solve_exponential(1.0, 2.0, 0.0, &coeffs, &grid, SecondSolution::BesselY).is_err());
    }

    #[test]
    fn powerlaw_matches_numeric() {
        let grid = Grid::new(0.0, 5.0, 501).unwrap();
        let coeffs = SolutionCoefficients::new(vec![0.9, 0.1], vec![-0.3, 0.8]).unwrap();
        let closed = solve_powerlaw_critical(1.0, 0.25, 1.0, 0.2, &coeffs, &grid).unwrap();
        let profile = PowerLawMapping::new(1.0, 0.25, 1.0, 0.2).unwrap().profile().unwrap();
        let err = closed_vs_numeric(&closed, &profile, grid);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn powerlaw_initial_value_and_classes() {
        let grid = Grid::new(0.0, 1.0, 11).unwrap();
        let coeffs = SolutionCoefficients::new(vec![0.3, -0.6], vec![1.0, 2.0]).unwrap();
        let path = solve_powerlaw_critical(1.0, 0.25, 1.0, 0.2, &coeffs, &grid).unwrap();
        assert_eq!(path.amplitudes_at(0), vec![0.3, -0.6]);
        assert!(matches!(
            solve_powerlaw_critical(1.0, 0.5, 1.0, 0.2, &coeffs, &grid),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(PowerLawMapping::new(1.0, 0.5, 1.0, 0.2).unwrap().damping, DampingClass::Under);
        assert_eq!(PowerLawMapping::new(1.0, 0.1, 1.0, 0.2).unwrap().damping, DampingClass::Over);
        let m = PowerLawMapping::new(1.0, 0.25, 1.0, 0.25).unwrap();
        assert_eq!(m.damping, DampingClass::Critical);
        assert!((m.omega - 1.0).abs() < 1e-15);
        assert!((m.s_of_theta(1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn numeric_without_restoring_force_is_constant() {
        let grid = Grid::new(0.0, 2.0, 21).unwrap();
        let cfg = SolverConfig::new(Gauge::FubiniStudy, 0.0, grid);
        let q0 = AmplitudeVector::normalized(vec![1.0, 0.0], 1e-12).unwrap();
        let path = solve_numeric(&FisherProfile::exponential(1.0, 2.0).unwrap(), &q0, &[0.0, 0.0], &cfg).unwrap();
        for k in 0..2 {
            assert!(path.q[k].iter().all(|&v| v == q0.as_slice()[k]));
        }
    }

    #[test]
    fn numeric_reports_coarse_steps() {
        let grid = Grid::new(0.0, 20.0, 3).unwrap();
        let mut cfg = SolverConfig::new(Gauge::FubiniStudy, 4.0, grid);
        cfg.rk_step = Some(2.0);
        let q0 = AmplitudeVector::normalized(vec![1.0, 0.0], 1e-12).unwrap();
        let err = solve_numeric(&FisherProfile::constant(16.0).unwrap(), &q0, &[0.0, 1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::Accuracy { .. }));
    }

    #[test]
    fn numeric_checks_profile_domain() {
        let grid = Grid::new(-2.0, 1.0, 5).unwrap();
        let cfg = SolverConfig::new(Gauge::FubiniStudy, 0.5, grid);
        let q0 = AmplitudeVector::normalized(vec![1.0, 0.0], 1e-12).unwrap();
        let profile = FisherProfile::power_law(1.0, 1.0, 4.0).unwrap();
        assert!(matches!(solve_numeric(&profile, &q0, &[0.0, 1.0], &cfg), Err(Error::ProfileDomain { .. })));
    }

    #[test]
    fn gauge_equivalence() {
        let grid = Grid::new(0.0, 4.0, 81).unwrap();
        let profile = FisherProfile::exponential(1.0, 2.0).unwrap();
        let q0 = AmplitudeVector::normalized(vec![1.0, 0.0], 1e-12).unwrap();
        let fs = SolverConfig::new(Gauge::FubiniStudy, 0.3, grid);
        let wy = SolverConfig::new(Gauge::WignerYanase, Gauge::WignerYanase.lambda_from_fs(0.3), grid);
        let a = solve_numeric(&profile, &q0, &[0.0, 0.5], &fs).unwrap();
        let b = solve_numeric(&profile, &q0, &[0.0, 0.5], &wy).unwrap();
        for k in 0..2 {
            assert!(max_diff(&a.q[k], &b.q[k]) < 1e-10);
        }
    }

    #[test]
    fn sign_symmetry() {
        let grid = Grid::new(0.0, 2.0, 21).unwrap();
        let c = SolutionCoefficients::new(vec![0.7, -0.4], vec![0.2, 0.9]).unwrap();
        let a = solve_exponential(1.0, 2.0, 0.3, &c, &grid, SecondSolution::BesselY).unwrap();
        let b = solve_exponential(1.0, 2.0, 0.3, &c.negated(), &grid, SecondSolution::BesselY).unwrap();
        for k in 0..2 {
            assert_eq!(a.probability_series(k), b.probability_series(k));
        }
    }

    #[test]
    fn calibration_recovers_constant_case() {
        let grid = Grid::new(0.0, 2.0 * PI, 101).unwrap();
        let cal = calibrate_constants(&ConstantFamily { f0: 4.0 }, 2, CalibrationTarget::Joint, &grid, DEFAULT_SEED).unwrap();
        assert!(cal.residual <= 1e-10, "{cal:?}");
        assert!((cal.lambda - 0.5).abs() < 1e-9, "{cal:?}");
        let expected = SolutionCoefficients::canonical();
        assert!(max_diff(&cal.coeffs.c1, &expected.c1) < 1e-8, "{cal:?}");
        assert!(max_diff(&cal.coeffs.c2, &expected.c2) < 1e-8, "{cal:?}");
    }

    #[test]
    fn calibration_normalization_target_constant_case() {
        let grid = Grid::new(0.0, 2.0 * PI, 101).unwrap();
        let cal = calibrate_constants(&ConstantFamily { f0: 4.0 }, 2, CalibrationTarget::Normalization, &grid, 7).unwrap();
        assert!(cal.residual <= 1e-10, "{cal:?}");
        assert!((cal.lambda - 0.5).abs() < 1e-8, "{cal:?}");
    }

    #[test]
    fn calibration_exponential_is_monotone() {
        let grid = Grid::new(0.0, 2.0, 201).unwrap();
        let family = ExponentialFamily { f0: 1.0, xi: 2.0, second: SecondSolution::BesselY };
        let cal = calibrate_constants(&family, 2, CalibrationTarget::Joint, &grid, DEFAULT_SEED).unwrap();
        assert!(cal.norm_residual <= 1e-2, "{cal:?}");
        let path = family.path(cal.lambda, &cal.coeffs, &grid).unwrap();
        assert_eq!(count_interior_extrema(&path.probability_series(0)), 0);
        // cross-check the calibrated closed form against RK4
        let err = closed_vs_numeric(&path, &FisherProfile::exponential(1.0, 2.0).unwrap(), grid);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn calibration_powerlaw_is_monotone() {
        let grid = Grid::new(0.0, 2.0, 201).unwrap();
        let family = PowerLawCriticalFamily { f0: 1.0, a: 0.25, b: 1.0 };
        let cal = calibrate_constants(&family, 2, CalibrationTarget::Joint, &grid, DEFAULT_SEED).unwrap();
        assert!(cal.residual <= 1e-2, "{cal:?}");
        let path = family.path(cal.lambda, &cal.coeffs, &grid).unwrap();
        assert_eq!(count_interior_extrema(&path.probability_series(0)), 0, "{cal:?}");
        assert!(path.probability_series(0).windows(2).all(|w| w[1] < w[0]));
        let profile = PowerLawMapping::new(1.0, 0.25, 1.0, cal.lambda).unwrap().profile().unwrap();
        assert!(closed_vs_numeric(&path, &profile, grid) < 1e-6);
    }

    #[test]
    fn calibration_is_deterministic() {
        let grid = Grid::new(0.0, 2.0, 41).unwrap();
        let family = ExponentialFamily { f0: 1.0, xi: 2.0, second: SecondSolution::BesselY };
        let a = calibrate_constants(&family, 2, CalibrationTarget::Joint, &grid, 11).unwrap();
        let b = calibrate_constants(&family, 2, CalibrationTarget::Joint, &grid, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_rejects_single_component() {
        let grid = Grid::new(0.0, 1.0, 11).unwrap();
        assert!(calibrate_constants(&ConstantFamily { f0: 4.0 }, 1, CalibrationTarget::Joint, &grid, 1).is_err());
    }

    #[test]
    fn extrema_counting() {
        assert_eq!(count_interior_extrema(&[0.0, 1.0, 2.0, 3.0]), 0);
        assert_eq!(count_interior_extrema(&[0.0, 1.0, 1.0, 0.0, 1.0]), 2);
        assert_eq!(classify(&[3.0, 2.0, 1.0]).unwrap(), Behavior::Monotonic);
        assert!(classify(&[0.0, 1.0, 0.0]).is_err());
        let grid = Grid::new(0.0, 2.0 * PI, 400).unwrap();
        let path = solve_constant(4.0, &SolutionCoefficients::canonical(), &grid).unwrap();
        assert!(count_interior_extrema(&path.probability_series(0)) >= 2);
    }
}
