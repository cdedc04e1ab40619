//! Time evolution of tensor coefficients, the source decomposition of
//! non-unital generators and the closed-form precession solution.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::liouvillian::{Liouvillian, ModelKind, ModelSpec, OperatorBasis};
use crate::spectral::{decompose, SpectralData};
use crate::tensor::{Site, TensorBasis};

/// Relative agreement required between the spectral and integrator paths.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-8;
/// Eigenvalues below this multiple of `max(Ω, Γ/N)` use the secular limit.
pub const SECULAR_THRESHOLD: f64 = 1e-12;
/// Tolerance used to validate user-supplied density matrices.
pub const DENSITY_TOLERANCE: f64 = 1e-10;

/// Tensor coefficients `a_kq` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientState {
    pub t: f64,
    pub a: CVector,
}

impl CoefficientState {
    pub fn get(&self, site: Site) -> Complex64 {
        self.a[site.flat_index()]
    }

    pub fn density(&self, basis: &TensorBasis) -> Result<CMatrix> {
        basis.operator(&self.a)
    }

    /// Largest `|a_{k,-q} - (-1)^q conj(a_{k,q})|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let k_max = (self.a.len() as f64).sqrt() as u32 - 1;
        crate::tensor::sites(k_max)
            .map(|s| {
                let mirror = self.get(Site::new(s.k, -s.q));
                let sign = if s.q.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                (mirror - self.get(s).conj() * sign).norm()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// `|j, m = j⟩`.
    Polarized,
    MaximallyMixed,
    /// Spin coherent state pointing along `(θ, φ)`.
    Coherent { theta: f64, phi: f64 },
    /// Explicit density matrix, validated on use.
    Density(CMatrix),
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Polarized => f.write_str("polarized"),
            InitialState::MaximallyMixed => f.write_str("mixed"),
            InitialState::Coherent { theta, phi } => write!(f, "coherent:{theta},{phi}"),
            InitialState::Density(m) => write!(f, "density({}x{})", m.nrows(), m.ncols()),
        }
    }
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "polarized" => Ok(Self::Polarized),
            "mixed" | "maximally_mixed" => Ok(Self::MaximallyMixed),
            other => {
                let args = other
                    .strip_prefix("coherent:")
                    .ok_or_else(|| invalid(format!("unknown initial state `{other}`")))?;
                let (theta, phi) = args
                    .split_once(',')
                    .ok_or_else(|| invalid("coherent state needs `coherent:θ,φ`"))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| invalid(format!("bad angle `{v}`")))
                };
                Ok(Self::Coherent { theta: parse(theta)?, phi: parse(phi)? })
            }
        }
    }
}

fn validate_density(rho: &CMatrix, dim: usize) -> Result<()> {
    if rho.shape() != (dim, dim) {
        return Err(invalid(format!("density matrix must be {dim}x{dim}, got {:?}", rho.shape())));
    }
    if linalg::hermiticity_defect(rho) > DENSITY_TOLERANCE {
        return Err(invalid("density matrix is not Hermitian"));
    }
    if (linalg::trace(rho) - c(1.0)).norm() > DENSITY_TOLERANCE {
        return Err(invalid("density matrix does not have unit trace"));
    }
    if linalg::hermitian_eigenvalues(rho)[0] < -DENSITY_TOLERANCE {
        return Err(invalid("density matrix is not positive semidefinite"));
    }
    Ok(())
}

/// `a_kq = Tr[(T^k_q)† ρ(0)]` for the requested state.
pub fn initial_state(kind: &InitialState, basis: &TensorBasis) -> Result<CoefficientState> {
    let spin = basis.spin();
    let dim = spin.dim();
    let rho = match kind {
        InitialState::Polarized => {
            let mut rho = CMatrix::zeros(dim, dim);
            rho[(0, 0)] = c(1.0);
            rho
        }
        InitialState::MaximallyMixed => linalg::identity(dim) / c(dim as f64),
        InitialState::Coherent { theta, phi } => {
            let d = spin.rotation_y(*theta);
            let psi = CVector::from_fn(dim, |i, _| {
                let m = spin.m(i).value();
                d[(i, 0)] * Complex64::from_polar(1.0, -m * phi)
            });
            &psi * psi.adjoint()
        }
        InitialState::Density(rho) => {
            validate_density(rho, dim)?;
            rho.clone()
        }
    };
    Ok(CoefficientState { t: 0.0, a: basis.coordinates(&rho)? })
}

/// `Tr(O ρ)` with `ρ = Σ a_kq T^k_q`.
pub fn expectation(state: &CoefficientState, basis: &TensorBasis, observable: &CMatrix) -> Result<Complex64> {
    let dim = basis.spin().dim();
    if observable.shape() != (dim, dim) {
        return Err(invalid(format!("observable must be {dim}x{dim}, got {:?}", observable.shape())));
    }
    if state.a.len() != basis.len() {
        return Err(invalid("state size does not match the basis"));
    }
    let rho = state.density(basis)?;
    Ok(linalg::trace(&(observable * rho)))
}

/// `N_1(j)`, the proportionality constant in `T^1_0 = N_1 J_z`.
pub fn rank_one_normalization(j: f64) -> f64 {
    (3.0 / ((2.0 * j + 1.0) * (j + 1.0) * j)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMethod {
    Spectral,
    Integrator,
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    /// Run the fixed-step integrator alongside the spectral path.
    pub cross_check: bool,
    pub tolerance: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { cross_check: true, tolerance: CROSS_CHECK_TOLERANCE }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<CoefficientState>,
    pub method: PropagationMethod,
    /// Set when the generator was found defective and only the integrator ran.
    pub exceptional_point: bool,
    /// Largest relative difference between the two paths, if both ran.
    pub cross_check_deviation: Option<f64>,
    /// Nominal integrator step.
    pub step: f64,
}

/// Nominal step `min(0.01/Ω, 0.01 N/Γ, 0.005/‖L‖_∞)` of the fixed-step integrator.
///
/// The last bound keeps `h·|λ|` small for every mode, so the fourth-order
/// truncation stays far below the cross-check tolerance.
pub fn integrator_step(spec: &ModelSpec, l: &CMatrix) -> f64 {
    let mut h = f64::INFINITY;
    if spec.omega != 0.0 {
        h = h.min(0.01 / spec.omega.abs());
    }
    if spec.rate() > 0.0 {
        h = h.min(0.01 / spec.rate());
    }
    let norm = linalg::norm_inf(l);
    if norm > 0.0 {
        h = h.min(0.005 / norm);
    }
    if h.is_finite() {
        h
    } else {
        1.0
    }
}

/// One classical RK4 step for a linear system, `Σ_{n≤4} (hL)^n / n!`.
fn rk4_step_matrix(l: &CMatrix, h: f64) -> CMatrix {
    let d = l.nrows();
    let id = CMatrix::identity(d, d);
    let hl = l * c(h);
    let mut p = &id + &hl * c(0.25);
    p = &id + &hl * p * c(1.0 / 3.0);
    p = &id + &hl * p * c(0.5);
    &id + &hl * p
}

/// Propagates with fixed RK4 steps; each interval between sample times is
/// split into equal steps no longer than `h`.
fn integrate(l: &CMatrix, a0: &CVector, times: &[f64], h: f64) -> Vec<CVector> {
    let mut cache: HashMap<u64, CMatrix> = HashMap::new();
    let mut current = a0.clone();
    let mut last = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - last;
        if dt > 0.0 {
            let prop = cache.entry(dt.to_bits()).or_insert_with(|| {
                let steps = (dt / h).ceil().max(1.0) as u64;
                linalg::matrix_power(&rk4_step_matrix(l, dt / steps as f64), steps)
            });
            current = &*prop * current;
        }
        last = t;
        out.push(current.clone());
    }
    out
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(invalid("times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be sorted"));
    }
    Ok(())
}

/// `a(t) = exp(L t) a(0)` at each requested time.
///
/// The spectral path is used when the generator is diagonalizable; the
/// integrator is the fallback at exceptional points and, with
/// `opts.cross_check`, an independent check that must agree to
/// `opts.tolerance` relative.
pub fn evolve(lv: &Liouvillian, state0: &CoefficientState, times: &[f64], opts: EvolveOptions) -> Result<Trajectory> {
    check_times(times)?;
    let l = &lv.tensor.matrix;
    if state0.a.len() != l.nrows() {
        return Err(invalid("initial state size does not match the generator"));
    }
    let h = integrator_step(&lv.spec, l);
    let wrap = |vs: Vec<CVector>| -> Vec<CoefficientState> {
        times.iter().zip(vs).map(|(&t, a)| CoefficientState { t, a }).collect()
    };

    let spectrum = match decompose(l) {
        Ok(s) => s,
        Err(Error::ExceptionalPoint { .. }) => {
            let states = wrap(integrate(l, &state0.a, times, h));
            return Ok(Trajectory {
                states,
                method: PropagationMethod::Integrator,
                exceptional_point: true,
                cross_check_deviation: None,
                step: h,
            });
        }
        Err(e) => return Err(e),
    };
    let spectral: Vec<CVector> = times.iter().map(|&t| spectrum.propagate(&state0.a, t)).collect();

    let mut deviation = None;
    if opts.cross_check {
        let reference = integrate(l, &state0.a, times, h);
        let dev = spectral
            .iter()
            .zip(&reference)
            .map(|(s, r)| (s - r).norm() / s.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        if dev > opts.tolerance {
            return Err(Error::Consistency(format!(
                "spectral and integrator propagation differ by {dev:.3e} (tolerance {:.1e})",
                opts.tolerance
            )));
        }
        deviation = Some(dev);
    }

    Ok(Trajectory {
        states: wrap(spectral),
        method: PropagationMethod::Spectral,
        exceptional_point: false,
        cross_check_deviation: deviation,
        step: h,
    })
}

/// Split `L = [[0, 0], [S, M]]` with respect to `T^0_0`, together with
/// the modal amplitudes of the source and of the initial traceless part.
#[derive(Clone, Debug)]
pub struct SourceDecomposition {
    /// Generator on the traceless subspace.
    pub m: CMatrix,
    /// Coordinates of `𝒮[1]/(N+1)` in the traceless subspace.
    pub source: CVector,
    /// `𝒮[1] = ℒ[1]` as an operator.
    pub source_operator: CMatrix,
    pub spectrum: SpectralData,
    /// `s_α = l_α† source`.
    pub s: Vec<Complex64>,
    /// `c_α(0) = l_α† δa(0)`.
    pub c0: Vec<Complex64>,
    /// Modes treated with the `λ → 0` limit.
    pub secular: Vec<bool>,
    /// `a_00`, fixed by the trace.
    pub a00: Complex64,
    pub threshold: f64,
}

/// Splits off the identity sector and expands the source and the initial
/// state in the left eigenmodes of the traceless block.
pub fn source_decompose(lv: &Liouvillian, state0: &CoefficientState) -> Result<SourceDecomposition> {
    let l = &lv.tensor.matrix;
    if lv.tensor.basis != OperatorBasis::Tensor {
        return Err(invalid("source decomposition needs the tensor-basis generator"));
    }
    let d = l.nrows();
    if state0.a.len() != d || d < 2 {
        return Err(invalid("state size does not match the generator"));
    }
    let scale = l.norm().max(f64::MIN_POSITIVE);
    let top = (1..d).map(|j| l[(0, j)].norm()).fold(l[(0, 0)].norm(), f64::max);
    if top > 1e-12 * scale {
        return Err(Error::Consistency(format!("generator is not trace preserving (top row {top:.3e})")));
    }
    let dim_h = lv.spec.n as f64 + 1.0;
    let a00 = state0.a[0];
    if (a00 - c(1.0 / dim_h.sqrt())).norm() > DENSITY_TOLERANCE {
        return Err(invalid("initial state does not have unit trace"));
    }

    let m = l.view((1, 1), (d - 1, d - 1)).into_owned();
    let source = l.view((1, 0), (d - 1, 1)).column(0) / c(dim_h.sqrt());
    let spectrum = decompose(&m)?;
    let s: Vec<Complex64> = spectrum.left.column_iter().map(|col| col.dotc(&source)).collect();
    let rest = state0.a.rows(1, d - 1).into_owned();
    let c0: Vec<Complex64> = spectrum.left.column_iter().map(|col| col.dotc(&rest)).collect();
    let threshold = SECULAR_THRESHOLD * lv.spec.omega.abs().max(lv.spec.rate());
    let secular = spectrum.eigenvalues.iter().map(|z| z.norm() < threshold).collect();

    Ok(SourceDecomposition {
        m,
        source,
        source_operator: lv.action_on_identity(),
        spectrum,
        s,
        c0,
        secular,
        a00,
        threshold,
    })
}

impl SourceDecomposition {
    pub fn has_secular_mode(&self) -> bool {
        self.secular.iter().any(|&b| b)
    }

    /// Full coefficient vector `(a_00, Σ_α c_α(t) r_α)`.
    pub fn coefficients(&self, t: f64) -> CVector {
        let mut a = CVector::zeros(self.m.nrows() + 1);
        a[0] = self.a00;
        for alpha in 0..self.s.len() {
            let ca = coefficient_trajectory(self, alpha, t);
            let mut rows = a.rows_mut(1, self.m.nrows());
            rows += self.spectrum.right.column(alpha) * ca;
        }
        a
    }
}

/// `c_α(t) = e^{λt} c_α(0) + (e^{λt} − 1)/λ · s_α`, with the limit
/// `c_α(0) + t s_α` for secular modes.
pub fn coefficient_trajectory(dec: &SourceDecomposition, alpha: usize, t: f64) -> Complex64 {
    let lambda = dec.spectrum.eigenvalues[alpha];
    if dec.secular[alpha] {
        return dec.c0[alpha] + dec.s[alpha] * t;
    }
    let e = (lambda * t).exp();
    e * dec.c0[alpha] + (e - 1.0) / lambda * dec.s[alpha]
}

/// The rank-one coefficients of the precession model in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrecessionK1 {
    pub a10: Complex64,
    pub a11: Complex64,
    pub a1m1: Complex64,
    /// `(a_11 + a_1,-1)/√2`.
    pub a_plus: Complex64,
    /// `(a_11 − a_1,-1)/√2`.
    pub a_minus: Complex64,
    /// The coupled pair sits exactly at the coalescence `κ = 2`.
    pub jordan: bool,
}

/// `sinh(z)/z`.
fn sinhc(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        let z2 = z * z;
        c(1.0) + z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sinh() / z
    }
}

/// `−Γ/(4N) ± iΩ√(1 − (κ/2)²)` and `−Γ/(2N)`, ordered `(λ+, λ−, λ_x)`.
pub fn precession_k1_eigenvalues(spec: &ModelSpec) -> [Complex64; 3] {
    let g = spec.rate() / 2.0;
    let delta = precession_delta(spec);
    let mu = c(-g / 2.0);
    [mu - delta, mu + delta, c(-g)]
}

/// `δ = sqrt((Γ/4N)² − Ω²)`, on the branch with `δ = iΩ√(1 − (κ/2)²)` below the
/// exceptional point.
fn precession_delta(spec: &ModelSpec) -> Complex64 {
    let g = spec.rate() / 2.0;
    let disc = g * g / 4.0 - spec.omega * spec.omega;
    if disc >= 0.0 {
        c(-disc.sqrt())
    } else {
        Complex64::new(0.0, -(-disc).sqrt())
    }
}

/// Closed-form `k = 1` solution of the precession model at time `t`.
///
/// The pair `(a_10, a_+)` evolves under `[[0, −iΩ], [−iΩ, −Γ/2N]]`, whose
/// exponential is `e^{μt}[cosh(δt) + sinh(δt)/δ (A − μ)]`; at `δ = 0` this is
/// the Jordan propagator `e^{μt}[1 + t (A − μ)]`.
pub fn precession_analytic(spec: &ModelSpec, state0: &CoefficientState, t: f64) -> Result<PrecessionK1> {
    if spec.kind != ModelKind::Precession {
        return Err(invalid("closed form applies to the precession model only"));
    }
    if state0.a.len() < 4 {
        return Err(invalid("state has no rank-one sector"));
    }
    let s2 = std::f64::consts::SQRT_2;
    let a10 = state0.get(Site::new(1, 0));
    let a11 = state0.get(Site::new(1, 1));
    let a1m1 = state0.get(Site::new(1, -1));
    let plus0 = (a11 + a1m1) / s2;
    let minus0 = (a11 - a1m1) / s2;

    let g = spec.rate() / 2.0;
    let mu = -g / 2.0;
    let delta = precession_delta(spec);
    let omega = spec.omega;
    let jordan = (g * g / 4.0 - omega * omega).abs() <= 1e-12 * (omega * omega).max(g * g);

    let e = (mu * t).exp();
    let ch = (delta * t).cosh();
    let sh = sinhc(delta * t) * t;
    // A − μ = [[g/2, −iΩ], [−iΩ, −g/2]]
    let iw = Complex64::new(0.0, -omega);
    let a10_t = e * (ch * a10 + sh * (a10 * (g / 2.0) + iw * plus0));
    let plus_t = e * (ch * plus0 + sh * (iw * a10 - plus0 * (g / 2.0)));
    let minus_t = minus0 * (-g * t).exp();

    Ok(PrecessionK1 {
        a10: a10_t,
        a11: (plus_t + minus_t) / s2,
        a1m1: (plus_t - minus_t) / s2,
        a_plus: plus_t,
        a_minus: minus_t,
        jordan,
    })
}
