//! Shared data model: sampling grids, probability and amplitude vectors,
//! phases, gauge conventions and sampled amplitude paths.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Tolerance on `Σ p = 1` for vectors built directly from data.
pub const PROBABILITY_TOL: f64 = 1e-12;
/// Tolerance on `Σ q² = 1` for amplitudes produced by numerical integration.
pub const INTEGRATION_NORM_TOL: f64 = 1e-9;
/// Slack allowed when clamping a scalar probability into `[0, 1]`.
pub const CLAMP_TOL: f64 = 1e-9;

/// Uniform grid `start, start + h, …, stop` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        let grid = Grid { start, stop, count };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Domain("grid bounds must be finite".into()));
        }
        if self.start >= self.stop {
            return Err(Error::Domain(format!(
                "grid start {} must be below stop {}",
                self.start, self.stop
            )));
        }
        if self.count < 2 {
            return Err(Error::Domain(format!("grid count {} < 2", self.count)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.stop - self.start) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.stop
        } else {
            self.start + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }
}

/// Discrete probability distribution `p = (p_1, …, p_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(p, PROBABILITY_TOL)
    }

    /// Accepts `|Σ p − 1| ≤ tol`; use [`INTEGRATION_NORM_TOL`] for integrated data.
    pub fn with_tolerance(p: Vec<f64>, tol: f64) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::Domain(format!(
                "probability vector needs at least 2 entries, got {}",
                p.len()
            )));
        }
        ensure_finite(&p, "p")?;
        if let Some((i, v)) = p
            .iter()
            .enumerate()
            .find(|(_, &v)| !(-tol..=1.0 + tol).contains(&v))
        {
            return Err(Error::Domain(format!("p[{i}] = {v} outside [0, 1]")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbabilityVector(p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Whether an amplitude vector is claimed to satisfy `Σ q² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeMode {
    Normalized,
    Raw,
}

/// Real probability amplitudes `q_k` with `p_k = q_k²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    q: Vec<f64>,
    mode: AmplitudeMode,
}

impl AmplitudeVector {
    /// Normalized amplitudes; `|Σ q² − 1|` must be within `tol`.
    pub fn normalized(q: Vec<f64>, tol: f64) -> Result<Self> {
        let v = Self::raw(q)?;
        let residual = v.norm_residual();
        if residual > tol {
            return Err(Error::Domain(format!(
                "amplitudes not normalized: |Σq² − 1| = {residual:e}"
            )));
        }
        Ok(AmplitudeVector {
            mode: AmplitudeMode::Normalized,
            ..v
        })
    }

    /// Amplitudes with no normalization claim.
    pub fn raw(q: Vec<f64>) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::Domain(format!(
                "amplitude vector needs at least 2 entries, got {}",
                q.len()
            )));
        }
        ensure_finite(&q, "q")?;
        Ok(AmplitudeVector {
            q,
            mode: AmplitudeMode::Raw,
        })
    }

    pub fn mode(&self) -> AmplitudeMode {
        self.mode
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn norm_residual(&self) -> f64 {
        (self.q.iter().map(|x| x * x).sum::<f64>() - 1.0).abs()
    }
}

/// Phases `φ_m` and their rates `dφ_m/dθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
}

impl PhaseVector {
    pub fn new(phi: Vec<f64>, phi_dot: Vec<f64>) -> Result<Self> {
        if phi.len() != phi_dot.len() {
            return Err(Error::DimensionMismatch {
                expected: phi.len(),
                got: phi_dot.len(),
            });
        }
        ensure_finite(&phi, "phi")?;
        ensure_finite(&phi_dot, "phi_dot")?;
        Ok(PhaseVector { phi, phi_dot })
    }

    /// Zero phases with the given rates.
    pub fn from_rates(phi_dot: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0; phi_dot.len()], phi_dot)
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Metric gauge: Fubini-Study or Wigner-Yanase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gauge {
    #[serde(rename = "FS")]
    FubiniStudy,
    #[serde(rename = "WY")]
    WignerYanase,
}

impl Gauge {
    /// Factor applied to a Fubini-Study line element.
    pub fn line_element_factor(self) -> f64 {
        match self {
            Gauge::FubiniStudy => 1.0,
            Gauge::WignerYanase => 4.0,
        }
    }

    /// Coefficient multiplying `√F q` in the amplitude geodesic equation
    /// for a multiplier expressed in this gauge.
    pub fn restoring_coefficient(self, lambda: f64) -> f64 {
        match self {
            Gauge::FubiniStudy => lambda,
            Gauge::WignerYanase => lambda / 2.0,
        }
    }

    /// Converts a Fubini-Study multiplier into this gauge.
    pub fn lambda_from_fs(self, lambda_fs: f64) -> f64 {
        match self {
            Gauge::FubiniStudy => lambda_fs,
            Gauge::WignerYanase => 2.0 * lambda_fs,
        }
    }
}

pub fn probabilities_from_amplitudes(q: &AmplitudeVector) -> Result<ProbabilityVector> {
    let p: Vec<f64> = q.as_slice().iter().map(|x| x * x).collect();
    match q.mode() {
        AmplitudeMode::Normalized => ProbabilityVector::with_tolerance(p, INTEGRATION_NORM_TOL),
        // Raw amplitudes keep their squares; only the range check applies.
        AmplitudeMode::Raw => {
            if let Some((i, v)) = p.iter().enumerate().find(|(_, &v)| v > 1.0 + CLAMP_TOL) {
                return Err(Error::Domain(format!("q[{i}]² = {v} exceeds 1")));
            }
            Ok(ProbabilityVector(p.into_iter().map(|v| v.min(1.0)).collect()))
        }
    }
}

/// Two-outcome distribution `(p1, 1 − p1)`.
pub fn normalize_complement(p1: f64) -> Result<ProbabilityVector> {
    if !p1.is_finite() || p1 < -CLAMP_TOL || p1 > 1.0 + CLAMP_TOL {
        return Err(Error::Domain(format!("p1 = {p1} outside [0, 1]")));
    }
    let p1 = p1.clamp(0.0, 1.0);
    Ok(ProbabilityVector(vec![p1, 1.0 - p1]))
}

/// Amplitudes and their θ-derivatives sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudePath {
    pub theta: Vec<f64>,
    /// `q[k][i]` is component `k` at `theta[i]`.
    pub q: Vec<Vec<f64>>,
    pub q_dot: Vec<Vec<f64>>,
    pub lambda: f64,
    pub gauge: Gauge,
}

impl AmplitudePath {
    pub fn components(&self) -> usize {
        self.q.len()
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn amplitudes_at(&self, i: usize) -> Vec<f64> {
        self.q.iter().map(|c| c[i]).collect()
    }

    pub fn velocities_at(&self, i: usize) -> Vec<f64> {
        self.q_dot.iter().map(|c| c[i]).collect()
    }

    /// `q_k²` along the path for component `k`.
    pub fn probability_series(&self, k: usize) -> Vec<f64> {
        self.q[k].iter().map(|x| x * x).collect()
    }

    /// `Σ q_k² − 1` at each sample.
    pub fn norm_defect_series(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.q.iter().map(|c| c[i] * c[i]).sum::<f64>() - 1.0)
            .collect()
    }

    pub fn max_norm_residual(&self) -> f64 {
        self.norm_defect_series()
            .into_iter()
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    /// `4 Σ q̇_k²` at each sample.
    pub fn fisher_series(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| 4.0 * self.q_dot.iter().map(|c| c[i] * c[i]).sum::<f64>())
            .collect()
    }

    /// Two-level display `(p1, 1 − p1)` at sample `i`.
    pub fn complement_at(&self, i: usize) -> Result<ProbabilityVector> {
        normalize_complement(self.q[0][i] * self.q[0][i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_and_endpoints() {
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(g.point(10), 1.0);
        assert_eq!(g.points().len(), 11);
        assert!(Grid::new(1.0, 1.0, 5).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(Grid::new(0.0, f64::NAN, 3).is_err());
    }

    #[test]
    fn basis_state_probabilities() {
        let q = AmplitudeVector::normalized(vec![1.0, 0.0], 1e-12).unwrap();
        assert_eq!(probabilities_from_amplitudes(&q).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn rotated_state_probabilities() {
        let q = AmplitudeVector::normalized(vec![0.3f64.cos(), 0.3f64.sin()], 1e-12).unwrap();
        let p = probabilities_from_amplitudes(&q).unwrap();
        assert!((p.as_slice()[0] - 0.912_667_807_5).abs() < 1e-9);
        assert!((p.as_slice()[1] - 0.087_332_192_5).abs() < 1e-9);
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_four_five() {
        let q = AmplitudeVector::normalized(vec![0.6, 0.8], 1e-12).unwrap();
        let p = probabilities_from_amplitudes(&q).unwrap();
        assert!((p.as_slice()[0] - 0.36).abs() < 1e-15);
        assert!((p.as_slice()[1] - 0.64).abs() < 1e-15);
    }

    #[test]
    fn non_finite_amplitude_rejected() {
        assert!(AmplitudeVector::raw(vec![f64::NAN, 1.0]).is_err());
        assert!(AmplitudeVector::normalized(vec![1.0, 1.0], 1e-9).is_err());
    }

    #[test]
    fn complement_examples() {
        assert_eq!(normalize_complement(0.25).unwrap().as_slice(), &[0.25, 0.75]);
        assert_eq!(normalize_complement(1.0).unwrap().as_slice(), &[1.0, 0.0]);
        let c = 0.5f64.cos().powi(2);
        let p = normalize_complement(c).unwrap();
        assert!((p.as_slice()[0] - 0.770_151_152_9).abs() < 1e-9);
        assert!((p.as_slice()[1] - 0.229_848_847_1).abs() < 1e-9);
        assert_eq!(normalize_complement(1.0 + 1e-10).unwrap().as_slice(), &[1.0, 0.0]);
        assert!(normalize_complement(1.0 + 1e-6).is_err());
        assert!(normalize_complement(-0.1).is_err());
    }

    #[test]
    fn probability_vector_checks() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![1.0]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn gauge_factors() {
        assert_eq!(Gauge::WignerYanase.line_element_factor(), 4.0);
        let lam_fs = 0.5;
        let lam_wy = Gauge::WignerYanase.lambda_from_fs(lam_fs);
        assert_eq!(lam_wy, 1.0);
        assert_eq!(
            Gauge::WignerYanase.restoring_coefficient(lam_wy),
            Gauge::FubiniStudy.restoring_coefficient(lam_fs)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sign_flips_leave_probabilities(q in proptest::collection::vec(-1.0f64..1.0, 2..6),
                                              mask in proptest::collection::vec(any::<bool>(), 6)) {
                let flipped: Vec<f64> = q.iter().zip(&mask).map(|(x, &f)| if f { -x } else { *x }).collect();
                let a = probabilities_from_amplitudes(&AmplitudeVector::raw(q.clone()).unwrap()).unwrap();
                let b = probabilities_from_amplitudes(&AmplitudeVector::raw(flipped).unwrap()).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
