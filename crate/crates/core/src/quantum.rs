//! Quantum distinguishability metrics for small systems.
//!
//! Pure-state line elements are computed from `(p, φ)` data; mixed-state
//! quantities (Bures line element, symmetric logarithmic derivative and the
//! quantum Fisher information) are evaluated in the eigenbasis of `ρ`.
//! Matrix elements with `p_i + p_j ≤ 1e-12` lie outside the support and are
//! dropped from every sum.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::paths::{Gauge, PhaseVector, ProbabilityVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const MAX_DIMENSION: usize = 8;
/// Pairs of eigenvalues summing to at most this are treated as kernel.
pub const SUPPORT_EPS: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PERTURBATION_TRACE_TOL: f64 = 1e-10;
const GENERATOR_TOL: f64 = 1e-8;

fn check_square(m: &CMatrix) -> Result<usize> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::DimensionMismatch { expected: r, got: c });
    }
    if r == 0 || r > MAX_DIMENSION {
        return Err(Error::Domain(format!(
            "dimension {r} outside 1..={MAX_DIMENSION}"
        )));
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    Ok(r)
}

/// Largest entry of `|M − M†|`.
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn ensure_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let r = hermitian_residual(m);
    if r > tol {
        return Err(Error::NotHermitian(r));
    }
    Ok(())
}

/// Eigenvalues in descending order with matching eigenvector columns.
fn sorted_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Density operator with its spectral decomposition cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl DensityMatrix {
    pub fn new(rho: CMatrix) -> Result<Self> {
        check_square(&rho)?;
        ensure_hermitian(&rho, HERMITIAN_TOL)?;
        let trace = rho.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(trace, 1.0));
        }
        let (mut values, vectors) = sorted_eigen(&rho);
        if let Some(&min) = values.last() {
            if min < -HERMITIAN_TOL {
                return Err(Error::NegativeEigenvalue(min));
            }
        }
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
        let total: f64 = values.iter().sum();
        for v in values.iter_mut() {
            *v /= total;
        }
        Ok(DensityMatrix {
            rho: hermitize(&rho),
            eigenvalues: values,
            eigenvectors: vectors,
        })
    }

    /// `|ψ⟩⟨ψ|` for a unit vector `ψ`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::Domain(format!("state norm {norm} is not 1")));
        }
        Self::new(psi * psi.adjoint())
    }

    /// Diagonal state `diag(p)`.
    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let n = p.len();
        Self::new(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(p[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Descending eigenvalues, clamped to be nonnegative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    /// `V† M V`, the matrix `M` expressed in the eigenbasis of `ρ`.
    fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }

    fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        &self.eigenvectors * m * self.eigenvectors.adjoint()
    }
}

/// Tangent `dρ/dθ`: Hermitian and traceless.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePerturbation {
    drho: CMatrix,
}

impl StatePerturbation {
    pub fn new(drho: CMatrix) -> Result<Self> {
        check_square(&drho)?;
        ensure_hermitian(&drho, HERMITIAN_TOL)?;
        let trace = drho.trace();
        if trace.norm() > PERTURBATION_TRACE_TOL {
            return Err(Error::InvalidTrace(trace.re, 0.0));
        }
        Ok(StatePerturbation {
            drho: hermitize(&drho),
        })
    }

    /// `−i[T, ρ]`, the tangent generated by the Hermitian operator `T`.
    pub fn from_generator(rho: &DensityMatrix, t: &CMatrix) -> Result<Self> {
        let rho = rho.matrix();
        let i = C64::new(0.0, 1.0);
        Self::new((t * rho - rho * t) * (-i))
    }

    /// `|dψ⟩⟨ψ| + |ψ⟩⟨dψ|`.
    pub fn from_pure_tangent(psi: &CVector, dpsi: &CVector) -> Result<Self> {
        Self::new(dpsi * psi.adjoint() + psi * dpsi.adjoint())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.drho
    }
}

fn ensure_same_dim(rho: &DensityMatrix, drho: &StatePerturbation) -> Result<()> {
    if rho.dim() != drho.drho.nrows() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: drho.drho.nrows(),
        });
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `Σ p φ̇² − (Σ p φ̇)²`.
pub fn phase_variance(p: &ProbabilityVector, phases: &PhaseVector) -> Result<f64> {
    check_lengths(p.len(), phases.len())?;
    let (mean, mean_sq) = p
        .as_slice()
        .iter()
        .zip(&phases.phi_dot)
        .fold((0.0, 0.0), |(m, s), (p, w)| (m + p * w, s + p * w * w));
    let var = mean_sq - mean * mean;
    // negative values here are pure round-off
    Ok(var.max(0.0))
}

/// `max_k |p_k (dφ_k − Σ_j p_j dφ_j)|`; zero iff the phase-rate variance vanishes.
pub fn basis_condition_residual(p: &ProbabilityVector, dphi: &[f64]) -> Result<f64> {
    check_lengths(p.len(), dphi.len())?;
    let mean: f64 = p.as_slice().iter().zip(dphi).map(|(p, d)| p * d).sum();
    Ok(p
        .as_slice()
        .iter()
        .zip(dphi)
        .map(|(p, d)| (p * (d - mean)).abs())
        .fold(0.0, f64::max))
}

/// `ds² = ¼[Σ ṗ²/p + 4σ²_φ̇] dθ²` (Fubini-Study) or four times that (Wigner-Yanase).
pub fn fs_line_element(
    p: &ProbabilityVector,
    p_dot: &[f64],
    phases: &PhaseVector,
    dtheta: f64,
    gauge: Gauge,
) -> Result<f64> {
    check_lengths(p.len(), p_dot.len())?;
    let mut fisher = 0.0;
    for (k, (&pk, &dk)) in p.as_slice().iter().zip(p_dot).enumerate() {
        if dk == 0.0 {
            continue;
        }
        if pk <= 0.0 {
            return Err(Error::SingularProbability { index: k, value: pk });
        }
        fisher += dk * dk / pk;
    }
    let sigma2 = phase_variance(p, phases)?;
    Ok(gauge.line_element_factor() * 0.25 * (fisher + 4.0 * sigma2) * dtheta * dtheta)
}

/// `½ Σ_{i,j} |⟨i|dρ|j⟩|² / (p_i + p_j)` over the support of `ρ`.
pub fn bures_line_element(rho: &DensityMatrix, drho: &StatePerturbation) -> Result<f64> {
    ensure_same_dim(rho, drho)?;
    let d = rho.to_eigenbasis(drho.matrix());
    let p = rho.eigenvalues();
    let mut total = 0.0;
    for i in 0..p.len() {
        for j in 0..p.len() {
            let s = p[i] + p[j];
            if s > SUPPORT_EPS {
                total += d[(i, j)].norm_sqr() / s;
            }
        }
    }
    Ok(0.5 * total)
}

/// Symmetric logarithmic derivative and the quantum Fisher information.
#[derive(Debug, Clone, PartialEq)]
pub struct SldResult {
    /// `L` in the original basis.
    pub l: CMatrix,
    pub qfi: f64,
}

pub fn sld(rho: &DensityMatrix, drho: &StatePerturbation) -> Result<SldResult> {
    ensure_same_dim(rho, drho)?;
    let d = rho.to_eigenbasis(drho.matrix());
    let p = rho.eigenvalues();
    let n = p.len();
    let l_eig = CMatrix::from_fn(n, n, |i, j| {
        let s = p[i] + p[j];
        if s > SUPPORT_EPS {
            d[(i, j)] * (2.0 / s)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let l = rho.from_eigenbasis(&l_eig);
    let qfi = (rho.matrix() * &l * &l).trace().re.max(0.0);
    Ok(SldResult { l, qfi })
}

/// `4(⟨ψ|T²|ψ⟩ − ⟨ψ|T|ψ⟩²)`.
pub fn pure_state_qfi_variance(psi: &CVector, t: &CMatrix) -> Result<f64> {
    let n = check_square(t)?;
    check_lengths(n, psi.len())?;
    ensure_hermitian(t, HERMITIAN_TOL)?;
    let norm = psi.norm();
    if (norm - 1.0).abs() > HERMITIAN_TOL {
        return Err(Error::Domain(format!("state norm {norm} is not 1")));
    }
    let t_psi = t * psi;
    let mean = psi.dotc(&t_psi).re;
    let mean_sq = t_psi.dotc(&t_psi).re;
    Ok((4.0 * (mean_sq - mean * mean)).max(0.0))
}

type HamiltonianFn = dyn Fn(f64) -> CMatrix + Send + Sync;

/// `U_θ(t) = exp(−i H(θ) t)` for a parametrized Hamiltonian (ħ = 1).
#[derive(Clone)]
pub struct UnitaryFamily {
    hamiltonian: Arc<HamiltonianFn>,
    t: f64,
}

impl fmt::Debug for UnitaryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitaryFamily").field("t", &self.t).finish()
    }
}

impl UnitaryFamily {
    pub fn new<H>(t: f64, hamiltonian: H) -> Result<Self>
    where
        H: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain(format!("evolution time must be nonnegative, got {t}")));
        }
        Ok(UnitaryFamily {
            hamiltonian: Arc::new(hamiltonian),
            t,
        })
    }

    /// Spin-½ in the field `B (cos θ, 0, sin θ)`: `H_θ = B(cos θ σ_x + sin θ σ_z)`.
    pub fn spin_half(b: f64, t: f64) -> Result<Self> {
        Self::new(t, move |theta| {
            (pauli_x() * C64::new(theta.cos(), 0.0) + pauli_z() * C64::new(theta.sin(), 0.0))
                * C64::new(b, 0.0)
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn hamiltonian(&self, theta: f64) -> CMatrix {
        (self.hamiltonian)(theta)
    }

    /// Matrix exponential through the eigendecomposition of `H(θ)`.
    pub fn unitary(&self, theta: f64) -> Result<CMatrix> {
        let h = self.hamiltonian(theta);
        check_square(&h)?;
        ensure_hermitian(&h, 1e-10)?;
        let (values, vectors) = sorted_eigen(&h);
        let phases = CMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|&e| C64::from_polar(1.0, -e * self.t)),
        ));
        Ok(&vectors * phases * vectors.adjoint())
    }
}

/// `h_θ = i (∂_θ U_θ) U_θ†` with `∂_θ U` by central differences.
pub fn generator_of_translation(family: &UnitaryFamily, theta: f64, step: f64) -> Result<CMatrix> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let du = (family.unitary(theta + step)? - family.unitary(theta - step)?) / C64::new(2.0 * step, 0.0);
    let h = du * family.unitary(theta)?.adjoint() * C64::new(0.0, 1.0);
    let residual = hermitian_residual(&h) / 2.0;
    if residual > GENERATOR_TOL {
        return Err(Error::Consistency(format!(
            "generator anti-Hermitian part {residual:e} exceeds {GENERATOR_TOL:e}"
        )));
    }
    Ok(hermitize(&h))
}

/// `(λ_max − λ_min)²` of a Hermitian generator.
pub fn fisher_max(h: &CMatrix) -> Result<f64> {
    check_square(h)?;
    ensure_hermitian(h, 1e-10)?;
    let (values, _) = sorted_eigen(h);
    let gap = values[0] - values[values.len() - 1];
    Ok(gap * gap)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])
}

/// Real matrix promoted to complex.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_slice(rows, cols, &data.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
}
