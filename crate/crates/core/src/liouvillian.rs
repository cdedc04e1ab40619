//! Vectorization, adjoint-generator superoperators and the Lindbladians of
//! the collective precession and boundary-time-crystal (BTC) models.
//!
//! Operators are vectorized row-major, `|m><m'| ↦ |m> ⊗ |m'>*`, so that
//! `A X B ↦ (A ⊗ Bᵀ) vec(X)` and `<<A|B>> = Tr(A† B)`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, identity, kron, CMatrix, CVector, I};
use crate::spin::{Axis, SpinSystem};
use crate::tensor::TensorBasis;

/// Row-major flattening of a square operator.
///
/// # Panics
///
/// If `op` is not square.
pub fn vectorize(op: &CMatrix) -> CVector {
    assert!(op.is_square(), "vectorize needs a square operator");
    let n = op.nrows();
    CVector::from_fn(n * n, |idx, _| op[(idx / n, idx % n)])
}

/// [`vectorize`] with an explicit size check.
pub fn try_vectorize(op: &CMatrix, dim: usize) -> Result<CVector> {
    if op.nrows() != dim || op.ncols() != dim {
        return Err(invalid(format!("expected a {dim}×{dim} operator, got {:?}", op.shape())));
    }
    Ok(vectorize(op))
}

pub fn unvectorize(v: &CVector) -> Result<CMatrix> {
    let n = v.len().isqrt();
    if n * n != v.len() {
        return Err(invalid(format!("vector length {} is not a perfect square", v.len())));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| v[i * n + j]))
}

/// Coordinates a superoperator matrix is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorBasis {
    /// `|m> ⊗ |m'>*` product basis.
    Product,
    /// Vectorized spherical tensors in flat `(k, q)` order.
    Tensor,
}

#[derive(Clone, Debug)]
pub struct Superoperator {
    pub matrix: CMatrix,
    pub basis: OperatorBasis,
}

impl Superoperator {
    pub fn product(matrix: CMatrix) -> Self {
        Self { matrix, basis: OperatorBasis::Product }
    }

    pub fn tensor(matrix: CMatrix) -> Self {
        Self { matrix, basis: OperatorBasis::Tensor }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Action on an operator. Only meaningful in the product basis.
    pub fn apply(&self, op: &CMatrix) -> Result<CMatrix> {
        if self.basis != OperatorBasis::Product {
            return Err(invalid("apply() needs a product-basis superoperator"));
        }
        let dim = self.dim().isqrt();
        unvectorize(&(&self.matrix * try_vectorize(op, dim)?))
    }

    /// `B† S B`.
    pub fn to_tensor(&self, basis: &TensorBasis) -> Result<Superoperator> {
        match self.basis {
            OperatorBasis::Tensor => Ok(self.clone()),
            OperatorBasis::Product => {
                self.check_dim(basis)?;
                let b = basis.vectorized();
                Ok(Superoperator::tensor(b.adjoint() * &self.matrix * b))
            }
        }
    }

    /// `B S B†`.
    pub fn to_product(&self, basis: &TensorBasis) -> Result<Superoperator> {
        match self.basis {
            OperatorBasis::Product => Ok(self.clone()),
            OperatorBasis::Tensor => {
                self.check_dim(basis)?;
                let b = basis.vectorized();
                Ok(Superoperator::product(b * &self.matrix * b.adjoint()))
            }
        }
    }

    fn check_dim(&self, basis: &TensorBasis) -> Result<()> {
        if self.dim() != basis.len() {
            return Err(invalid(format!(
                "superoperator of size {} does not match a basis of size {}",
                self.dim(),
                basis.len()
            )));
        }
        Ok(())
    }
}

/// `𝕊_α = J_α ⊗ 1 − 1 ⊗ J_αᵀ`, the vectorized form of `[J_α, ·]`.
pub fn adjoint_superoperator(spin: &SpinSystem, axis: Axis) -> Superoperator {
    let j = spin.op(axis);
    let id = identity(spin.dim());
    Superoperator::product(kron(j, &id) - kron(&id, &j.transpose()))
}

/// Adjoint Casimir `𝕂² = Σ_α 𝕊_α²`; eigenvalue `k(k+1)` on rank `k`.
pub fn casimir_superoperator(spin: &SpinSystem) -> Superoperator {
    let d = spin.operator_dim();
    let mut out = CMatrix::zeros(d, d);
    for axis in Axis::CARTESIAN {
        let s = adjoint_superoperator(spin, axis).matrix;
        out += &s * &s;
    }
    Superoperator::product(out)
}

/// Generic Lindbladian `-i[H, ·] + rate Σ_μ (L ρ L† − ½{L†L, ρ})` in the
/// product basis.
pub fn lindblad_superoperator(hamiltonian: &CMatrix, jumps: &[CMatrix], rate: f64) -> Result<Superoperator> {
    if !hamiltonian.is_square() {
        return Err(invalid("hamiltonian must be square"));
    }
    let dim = hamiltonian.nrows();
    let id = identity(dim);
    let mut out = (kron(hamiltonian, &id) - kron(&id, &hamiltonian.transpose())) * (-I);
    for l in jumps {
        if l.shape() != (dim, dim) {
            return Err(invalid(format!("jump operator shape {:?} does not match {dim}×{dim}", l.shape())));
        }
        let ldl = l.adjoint() * l;
        let term = kron(l, &l.conjugate()) - (kron(&ldl, &id) + kron(&id, &ldl.transpose())) * c(0.5);
        out += term * c(rate);
    }
    Ok(Superoperator::product(out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `H = Ω J_x`, jump operator `J_z`.
    Precession,
    /// `H = Ω J_x`, jump operator `J_−`.
    Btc,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Precession => "precession",
            ModelKind::Btc => "btc",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precession" => Ok(ModelKind::Precession),
            "btc" => Ok(ModelKind::Btc),
            other => Err(invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A collective-spin model. The dissipator carries the prefactor `Γ/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecRepr", into = "ModelSpecRepr")]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: u32,
    pub omega: f64,
    pub gamma: f64,
}

/// JSON form: `{"kind":"btc","N":7,"omega":1.0,"gamma_over_omega":1.0}`.
/// An explicit `"gamma"` takes precedence and is always written, so
/// `Ω = 0` round-trips.
#[derive(Serialize, Deserialize)]
struct ModelSpecRepr {
    kind: ModelKind,
    #[serde(rename = "N")]
    n: u32,
    omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_over_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
}

impl From<ModelSpec> for ModelSpecRepr {
    fn from(s: ModelSpec) -> Self {
        Self {
            kind: s.kind,
            n: s.n,
            omega: s.omega,
            gamma_over_omega: (s.omega != 0.0).then(|| s.gamma / s.omega),
            gamma: Some(s.gamma),
        }
    }
}

impl TryFrom<ModelSpecRepr> for ModelSpec {
    type Error = Error;
    fn try_from(r: ModelSpecRepr) -> Result<Self> {
        let gamma = match (r.gamma, r.gamma_over_omega) {
            (Some(g), _) => g,
            (None, Some(ratio)) => ratio * r.omega,
            (None, None) => return Err(invalid("model needs gamma_over_omega or gamma")),
        };
        ModelSpec::new(r.kind, r.n, r.omega, gamma)
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, n: u32, omega: f64, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("N must be at least 1"));
        }
        if !omega.is_finite() || !gamma.is_finite() {
            return Err(invalid("omega and gamma must be finite"));
        }
        if gamma < 0.0 {
            return Err(invalid(format!("gamma = {gamma} must be non-negative")));
        }
        Ok(Self { kind, n, omega, gamma })
    }

    /// BTC model parameterized by `Γ/Ω`.
    ///
    /// # Panics
    ///
    /// On invalid parameters; use [`ModelSpec::new`] to handle them.
    pub fn btc(n: u32, omega: f64, gamma_over_omega: f64) -> Self {
        Self::new(ModelKind::Btc, n, omega, gamma_over_omega * omega).expect("valid BTC parameters")
    }

    /// Precession model parameterized by `Γ/Ω`.
    ///
    /// # Panics
    ///
    /// On invalid parameters.
    pub fn precession(n: u32, omega: f64, gamma_over_omega: f64) -> Self {
        Self::new(ModelKind::Precession, n, omega, gamma_over_omega * omega).expect("valid precession parameters")
    }

    /// Precession model at damping ratio `κ = Γ/(2NΩ)`.
    pub fn precession_kappa(n: u32, omega: f64, kappa: f64) -> Result<Self> {
        Self::new(ModelKind::Precession, n, omega, 2.0 * n as f64 * omega * kappa)
    }

    /// Collective rate `Γ/N`.
    pub fn rate(&self) -> f64 {
        self.gamma / self.n as f64
    }

    pub fn kappa(&self) -> f64 {
        self.gamma / (2.0 * self.n as f64 * self.omega)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.kind, self.n, self.omega, gamma)
    }

    pub fn jump_operator(&self, spin: &SpinSystem) -> CMatrix {
        match self.kind {
            ModelKind::Precession => spin.jz().clone(),
            ModelKind::Btc => spin.jm().clone(),
        }
    }

    /// Characteristic frequency scale `max(Ω, Γ/N)`.
    pub fn scale(&self) -> f64 {
        self.omega.abs().max(self.rate())
    }
}

/// A model Liouvillian in both representations.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    pub spec: ModelSpec,
    pub product: Superoperator,
    pub tensor: Superoperator,
}

/// Product-basis generator of a model.
pub fn model_superoperator(spec: &ModelSpec, spin: &SpinSystem) -> Result<Superoperator> {
    if spin.n() != spec.n {
        return Err(invalid(format!("model has N = {} but the spin system has N = {}", spec.n, spin.n())));
    }
    let h = spin.jx() * c(spec.omega);
    lindblad_superoperator(&h, &[spec.jump_operator(spin)], spec.rate())
}

pub fn build_liouvillian(spec: &ModelSpec, basis: &TensorBasis) -> Result<Liouvillian> {
    let product = model_superoperator(spec, basis.spin())?;
    let tensor = product.to_tensor(basis)?;
    Ok(Liouvillian { spec: *spec, product, tensor })
}

impl Liouvillian {
    /// `ℒ[1]` as an operator.
    pub fn action_on_identity(&self) -> CMatrix {
        let dim = self.spec.n as usize + 1;
        self.product.apply(&identity(dim)).expect("square identity")
    }
}

/// `‖vec(1)† L‖_max`, zero for trace-preserving generators.
pub fn trace_defect(l_product: &Superoperator) -> f64 {
    let dim = l_product.dim().isqrt();
    let row = vectorize(&identity(dim)).adjoint() * &l_product.matrix;
    row.iter().fold(0.0, |acc, z: &Complex64| acc.max(z.norm()))
}
