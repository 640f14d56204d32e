//! Two-qubit entangled pairs as density matrices.
//!
//! Basis order is `|00>, |01>, |10>, |11>`; the first tensor factor is the
//! qubit held by the left node of a pair. Loss over an optical channel is an
//! amplitude damping channel whose parameter is the channel transmissivity.

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector4};
use num_complex::Complex64;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::channel::Transmissivity;
use crate::error::{Error, Result};

pub type Matrix16 = SMatrix<Complex64, 16, 16>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qubit {
    First,
    Second,
}

/// A valid two-qubit state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Matrix4<Complex64>);

impl DensityMatrix {
    /// Validates `m` against the density-matrix invariants.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self> {
        let rho = DensityMatrix(m);
        rho.validate()?;
        Ok(rho)
    }

    #[cfg(test)]
    pub(crate) fn from_matrix_unchecked(m: Matrix4<Complex64>) -> Self {
        DensityMatrix(m)
    }

    pub fn from_pure(psi: &Vector4<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = psi / Complex64::new(norm, 0.0);
        Ok(DensityMatrix(psi * psi.adjoint()))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Matrix4::identity() * c(0.25))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = self.0.symmetric_eigen();
        let mut out = [0.0; 4];
        out.copy_from_slice(eig.eigenvalues.as_slice());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        for i in 0..4 {
            for j in 0..4 {
                let d = (m[(i, j)] - m[(j, i)].conj()).norm();
                if d > HERMITIAN_TOL {
                    return Err(Error::InvalidState(format!("not Hermitian at ({i},{j}), deviation {d:e}")));
                }
            }
        }
        let tr = m.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

impl Serialize for DensityMatrix {
    /// Row-major list of `[re, im]` pairs.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(16))?;
        for i in 0..4 {
            for j in 0..4 {
                let z = self.0[(i, j)];
                seq.serialize_element(&[z.re, z.im])?;
            }
        }
        seq.end()
    }
}

/// Kraus operators of the amplitude damping channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausPair {
    pub k0: Matrix2<Complex64>,
    pub k1: Matrix2<Complex64>,
}

impl KrausPair {
    pub fn amplitude_damping(eta: Transmissivity) -> Self {
        let eta = eta.value();
        KrausPair {
            k0: Matrix2::new(ONE, ZERO, ZERO, c(eta.sqrt())),
            k1: Matrix2::new(ZERO, c((1.0 - eta).sqrt()), ZERO, ZERO),
        }
    }

    /// Largest entry of `K0†K0 + K1†K1 - I`.
    pub fn completeness_error(&self) -> f64 {
        let sum = self.k0.adjoint() * self.k0 + self.k1.adjoint() * self.k1;
        (sum - Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn lift(op: &Matrix2<Complex64>, qubit: Qubit) -> Matrix4<Complex64> {
    let id = Matrix2::<Complex64>::identity();
    match qubit {
        Qubit::First => op.kronecker(&id),
        Qubit::Second => id.kronecker(op),
    }
}

/// `(|00> + |11>) / sqrt(2)` as a state vector.
pub fn phi_plus_vector() -> Vector4<Complex64> {
    let h = c(std::f64::consts::FRAC_1_SQRT_2);
    Vector4::new(h, ZERO, ZERO, h)
}

pub fn bell_phi_plus() -> DensityMatrix {
    let psi = phi_plus_vector();
    DensityMatrix(psi * psi.adjoint())
}

/// Sends one qubit of `rho` through an amplitude damping channel.
pub fn apply_amplitude_damping(rho: &DensityMatrix, qubit: Qubit, eta: Transmissivity) -> DensityMatrix {
    let kraus = KrausPair::amplitude_damping(eta);
    let k0 = lift(&kraus.k0, qubit);
    let k1 = lift(&kraus.k1, qubit);
    DensityMatrix(k0 * rho.0 * k0.adjoint() + k1 * rho.0 * k1.adjoint())
}

/// A fresh Bell pair whose halves crossed channels `eta_left` and
/// `eta_right`. A half that stays at the generating node uses `ONE`.
pub fn link_pair(eta_left: Transmissivity, eta_right: Transmissivity) -> DensityMatrix {
    let rho = apply_amplitude_damping(&bell_phi_plus(), Qubit::First, eta_left);
    apply_amplitude_damping(&rho, Qubit::Second, eta_right)
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Fidelity(f64);

impl Fidelity {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Overlap of `rho` with `|Φ+>`. For a pure target the squared Uhlmann
/// fidelity reduces to `<Φ+|ρ|Φ+>`; [`uhlmann_fidelity`] evaluates the full
/// expression.
pub fn entanglement_fidelity(rho: &DensityMatrix) -> Result<Fidelity> {
    rho.validate()?;
    let psi = phi_plus_vector();
    let overlap = (psi.adjoint() * rho.0 * psi)[(0, 0)].re;
    Ok(Fidelity(overlap.clamp(0.0, 1.0)))
}

/// Square root of a Hermitian PSD matrix. Negative eigenvalues are clamped
/// to zero, as are positive ones below `1e-12` of the largest (rounding noise
/// whose square root would otherwise be visible at the 1e-8 level).
pub fn hermitian_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let eig = m.symmetric_eigen();
    let cutoff = 1e-12 * eig.eigenvalues.max().max(0.0);
    let roots = eig.eigenvalues.map(|l| c(if l > cutoff { l.sqrt() } else { 0.0 }));
    let v = &eig.eigenvectors;
    v * Matrix4::from_diagonal(&roots) * v.adjoint()
}

/// `(Tr sqrt(sqrt(ρ) |ψ><ψ| sqrt(ρ)))²` evaluated with matrix square roots.
pub fn uhlmann_fidelity(rho: &DensityMatrix, psi: &Vector4<Complex64>) -> Result<Fidelity> {
    rho.validate()?;
    let target = psi * psi.adjoint();
    let root = hermitian_sqrt(&rho.0);
    let inner = root * target * root;
    // Re-symmetrize so the eigensolver sees an exactly Hermitian input.
    let inner = (inner + inner.adjoint()) * c(0.5);
    let tr = hermitian_sqrt(&inner).trace().re;
    Ok(Fidelity((tr * tr).clamp(0.0, 1.0)))
}

/// The four Bell states with the Pauli `U` such that `β = (I ⊗ U)|Φ+>`.
fn bell_basis() -> [(Vector4<Complex64>, Matrix2<Complex64>); 4] {
    let h = c(std::f64::consts::FRAC_1_SQRT_2);
    let x = Matrix2::new(ZERO, ONE, ONE, ZERO);
    let z = Matrix2::new(ONE, ZERO, ZERO, -ONE);
    [
        (Vector4::new(h, ZERO, ZERO, h), Matrix2::identity()),
        (Vector4::new(h, ZERO, ZERO, -h), z),
        (Vector4::new(ZERO, h, h, ZERO), x),
        (Vector4::new(ZERO, h, -h, ZERO), x * z),
    ]
}

/// Entanglement swapping of pairs A–B and B′–C at the node holding B and B′.
///
/// Builds the four-qubit register (order A, B, B′, C), projects B B′ onto each
/// Bell state, applies the matching Pauli correction to C, and returns the
/// outcome-averaged A–C state.
pub fn entanglement_swap(ab: &DensityMatrix, bc: &DensityMatrix) -> Result<DensityMatrix> {
    ab.validate()?;
    bc.validate()?;
    let register: Matrix16 = ab.0.kronecker(&bc.0);
    let id2 = Matrix2::<Complex64>::identity();
    let id4 = Matrix4::<Complex64>::identity();

    let mut corrected = Matrix16::zeros();
    for (bell, pauli) in bell_basis() {
        let middle: Matrix4<Complex64> = bell * bell.adjoint();
        let projector: Matrix16 = id2.kronecker(&middle).kronecker(&id2);
        let correction: Matrix16 = id4.kronecker(&id2).kronecker(&pauli.adjoint());
        let branch = correction * projector * register * projector * correction.adjoint();
        corrected += branch;
    }

    let mut out = Matrix4::<Complex64>::zeros();
    for a in 0..2 {
        for cq in 0..2 {
            for a2 in 0..2 {
                for c2 in 0..2 {
                    let mut acc = ZERO;
                    for mid in 0..4 {
                        let row = a * 8 + mid * 2 + cq;
                        let col = a2 * 8 + mid * 2 + c2;
                        acc += corrected[(row, col)];
                    }
                    out[(a * 2 + cq, a2 * 2 + c2)] = acc;
                }
            }
        }
    }
    Ok(DensityMatrix(out))
}
