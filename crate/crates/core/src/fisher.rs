//! Fisher-information profiles `F(θ)` and Fisher information computed from
//! discrete distributions, amplitude velocities and finite Gibbs ensembles.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::paths::ProbabilityVector;

/// Default half-width for central differences in θ.
pub const FD_STEP: f64 = 1e-5;

type ProfileFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// User-supplied profile returning `(F, dF/dθ)`.
///
/// The callback must be pure and reentrant; it is shared across threads.
#[derive(Clone)]
pub struct CustomProfile {
    name: String,
    func: Arc<ProfileFn>,
    domain: (f64, f64),
}

impl CustomProfile {
    /// `domain` is the open interval on which `F > 0` is promised.
    pub fn new<F>(name: impl Into<String>, domain: (f64, f64), func: F) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        CustomProfile {
            name: name.into(),
            func: Arc::new(func),
            domain,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

/// One-parameter Fisher information function.
#[derive(Debug, Clone)]
pub enum FisherProfile {
    Constant { f0: f64 },
    ExponentialDecay { f0: f64, xi: f64 },
    PowerLawDecay { f0: f64, omega: f64, n: f64 },
    HarmonicOscillatorThermal { c_v: f64, hbar_omega: f64 },
    Custom(CustomProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    Constant,
    ExponentialDecay,
    PowerLawDecay,
    HarmonicOscillatorThermal,
    Custom,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl FisherProfile {
    pub fn constant(f0: f64) -> Result<Self> {
        Ok(FisherProfile::Constant {
            f0: positive("F0", f0)?,
        })
    }

    pub fn exponential(f0: f64, xi: f64) -> Result<Self> {
        Ok(FisherProfile::ExponentialDecay {
            f0: positive("F0", f0)?,
            xi: positive("xi", xi)?,
        })
    }

    pub fn power_law(f0: f64, omega: f64, n: f64) -> Result<Self> {
        if !(n.is_finite() && n >= 0.0) {
            return Err(Error::Domain(format!("n must be nonnegative, got {n}")));
        }
        Ok(FisherProfile::PowerLawDecay {
            f0: positive("F0", f0)?,
            omega: positive("Omega", omega)?,
            n,
        })
    }

    pub fn harmonic_oscillator(c_v: f64, hbar_omega: f64) -> Result<Self> {
        Ok(FisherProfile::HarmonicOscillatorThermal {
            c_v: positive("C_V", c_v)?,
            hbar_omega: positive("hbar_omega", hbar_omega)?,
        })
    }

    pub fn custom(profile: CustomProfile) -> Self {
        FisherProfile::Custom(profile)
    }

    pub fn kind(&self) -> ProfileKind {
        match self {
            FisherProfile::Constant { .. } => ProfileKind::Constant,
            FisherProfile::ExponentialDecay { .. } => ProfileKind::ExponentialDecay,
            FisherProfile::PowerLawDecay { .. } => ProfileKind::PowerLawDecay,
            FisherProfile::HarmonicOscillatorThermal { .. } => {
                ProfileKind::HarmonicOscillatorThermal
            }
            FisherProfile::Custom(_) => ProfileKind::Custom,
        }
    }

    pub fn in_domain(&self, theta: f64) -> bool {
        self.check_domain(theta).is_ok()
    }

    fn check_domain(&self, theta: f64) -> Result<()> {
        let violation = |reason: &str| {
            Err(Error::ProfileDomain {
                theta,
                reason: reason.to_string(),
            })
        };
        if !theta.is_finite() {
            return violation("theta is not finite");
        }
        match self {
            FisherProfile::PowerLawDecay { omega, .. } if 1.0 + omega * theta <= 0.0 => {
                violation("requires 1 + Omega*theta > 0")
            }
            FisherProfile::HarmonicOscillatorThermal { .. } if theta <= 0.0 => {
                violation("requires theta > 0")
            }
            FisherProfile::Custom(c) if !(theta > c.domain.0 && theta < c.domain.1) => {
                violation("outside the custom profile domain")
            }
            _ => Ok(()),
        }
    }

    /// Returns `(F(θ), dF/dθ)`.
    pub fn eval(&self, theta: f64) -> Result<(f64, f64)> {
        self.check_domain(theta)?;
        let (f, df) = match *self {
            FisherProfile::Constant { f0 } => (f0, 0.0),
            FisherProfile::ExponentialDecay { f0, xi } => {
                let f = f0 * (-xi * theta).exp();
                (f, -xi * f)
            }
            FisherProfile::PowerLawDecay { f0, omega, n } => {
                let base = 1.0 + omega * theta;
                let f = f0 / base.powf(n);
                (f, -n * omega * f / base)
            }
            FisherProfile::HarmonicOscillatorThermal { c_v, hbar_omega } => {
                let f = c_v * (-hbar_omega * theta).exp() / (theta * theta);
                (f, -f * (hbar_omega + 2.0 / theta))
            }
            FisherProfile::Custom(ref c) => (c.func)(theta),
        };
        if !(f.is_finite() && df.is_finite()) || f <= 0.0 {
            return Err(Error::ProfileDomain {
                theta,
                reason: format!("profile value {f} is not positive and finite"),
            });
        }
        Ok((f, df))
    }

    pub fn value(&self, theta: f64) -> Result<f64> {
        self.eval(theta).map(|(f, _)| f)
    }

    pub fn to_spec(&self) -> Option<ProfileSpec> {
        let mut spec = ProfileSpec {
            kind: self.kind(),
            f0: None,
            xi: None,
            omega: None,
            n: None,
            c_v: None,
            hbar_omega: None,
        };
        match *self {
            FisherProfile::Constant { f0 } => spec.f0 = Some(f0),
            FisherProfile::ExponentialDecay { f0, xi } => {
                spec.f0 = Some(f0);
                spec.xi = Some(xi);
            }
            FisherProfile::PowerLawDecay { f0, omega, n } => {
                spec.f0 = Some(f0);
                spec.omega = Some(omega);
                spec.n = Some(n);
            }
            FisherProfile::HarmonicOscillatorThermal { c_v, hbar_omega } => {
                spec.c_v = Some(c_v);
                spec.hbar_omega = Some(hbar_omega);
            }
            FisherProfile::Custom(_) => return None,
        }
        Some(spec)
    }
}

/// JSON form of a built-in profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    #[serde(rename = "F0", default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(rename = "Omega", default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(rename = "C_V", default, skip_serializing_if = "Option::is_none")]
    pub c_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar_omega: Option<f64>,
}

impl TryFrom<&ProfileSpec> for FisherProfile {
    type Error = Error;

    fn try_from(spec: &ProfileSpec) -> Result<Self> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Domain(format!("profile {:?} requires field {name}", spec.kind)))
        };
        match spec.kind {
            ProfileKind::Constant => FisherProfile::constant(need("F0", spec.f0)?),
            ProfileKind::ExponentialDecay => {
                FisherProfile::exponential(need("F0", spec.f0)?, need("xi", spec.xi)?)
            }
            ProfileKind::PowerLawDecay => FisherProfile::power_law(
                need("F0", spec.f0)?,
                need("Omega", spec.omega)?,
                need("n", spec.n)?,
            ),
            ProfileKind::HarmonicOscillatorThermal => FisherProfile::harmonic_oscillator(
                need("C_V", spec.c_v)?,
                need("hbar_omega", spec.hbar_omega)?,
            ),
            ProfileKind::Custom => Err(Error::Unsupported(
                "custom profiles cannot be built from JSON".into(),
            )),
        }
    }
}

/// `Σ ṗ_k² / p_k` with `ṗ` from central differences of half-width `step`.
pub fn fisher_from_discrete<P>(p: P, theta: f64, step: f64) -> Result<f64>
where
    P: Fn(f64) -> Result<ProbabilityVector>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let centre = p(theta)?;
    let plus = p(theta + step)?;
    let minus = p(theta - step)?;
    if plus.len() != centre.len() || minus.len() != centre.len() {
        return Err(Error::DimensionMismatch {
            expected: centre.len(),
            got: plus.len().min(minus.len()),
        });
    }
    let mut total = 0.0;
    for (k, &pk) in centre.as_slice().iter().enumerate() {
        if pk <= 0.0 {
            return Err(Error::SingularProbability { index: k, value: pk });
        }
        let dp = (plus.as_slice()[k] - minus.as_slice()[k]) / (2.0 * step);
        total += dp * dp / pk;
    }
    Ok(total)
}

/// `4 Σ q̇_k²`.
pub fn fisher_from_amplitudes(q_dot: &[f64]) -> Result<f64> {
    ensure_finite(q_dot, "q_dot")?;
    Ok(4.0 * q_dot.iter().map(|v| v * v).sum::<f64>())
}

/// Finite Gibbs ensemble `p_x ∝ exp(−θ X_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsEnsemble {
    pub x: Vec<f64>,
    pub theta: f64,
}

impl GibbsEnsemble {
    pub fn new(x: Vec<f64>, theta: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Domain("ensemble needs at least one outcome".into()));
        }
        ensure_finite(&x, "X")?;
        ensure_finite(&[theta], "theta")?;
        Ok(GibbsEnsemble { x, theta })
    }

    /// `ψ(θ) = log Z(θ)`, evaluated with a max shift.
    pub fn log_partition(&self, theta: f64) -> f64 {
        let shift = self
            .x
            .iter()
            .map(|&x| -theta * x)
            .fold(f64::NEG_INFINITY, f64::max);
        shift
            + self
                .x
                .iter()
                .map(|&x| (-theta * x - shift).exp())
                .sum::<f64>()
                .ln()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let psi = self.log_partition(self.theta);
        self.x.iter().map(|&x| (-self.theta * x - psi).exp()).collect()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities()
            .iter()
            .zip(&self.x)
            .map(|(p, x)| p * x)
            .sum()
    }

    /// `[ψ(θ+h) − 2ψ(θ) + ψ(θ−h)] / h²` written as `log E[e^{−hX}] + log E[e^{hX}]`
    /// so the large common part of `ψ` never enters a subtraction.
    fn second_difference(&self, h: f64) -> f64 {
        let p = self.probabilities();
        let shifted = |sign: f64| -> f64 {
            p.iter()
                .zip(&self.x)
                .map(|(p, x)| p * (sign * h * x).exp_m1())
                .sum::<f64>()
                .ln_1p()
        };
        (shifted(1.0) + shifted(-1.0)) / (h * h)
    }

    fn is_degenerate(&self) -> bool {
        self.x.iter().all(|&x| x == self.x[0])
    }
}

/// Returns `(∂²ψ/∂θ², Σ p_x (∂_θ log p_x)²)`; the first by Richardson-extrapolated
/// central differences of half-width `step` and `step/2`.
pub fn gibbs_fisher_check(e: &GibbsEnsemble, step: f64) -> Result<(f64, f64)> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    if e.is_degenerate() {
        return Ok((0.0, 0.0));
    }
    let g_thermo = (4.0 * e.second_difference(step / 2.0) - e.second_difference(step)) / 3.0;
    let mean = e.mean();
    let g_fisher = e
        .probabilities()
        .iter()
        .zip(&e.x)
        .map(|(p, x)| p * (mean - x).powi(2))
        .sum();
    Ok((g_thermo, g_fisher))
}
