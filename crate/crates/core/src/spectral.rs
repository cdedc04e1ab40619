//! Biorthogonal eigendecomposition of non-Hermitian generators and the
//! rank-hybridization diagnostics of their eigenmodes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::tensor::{Site, TensorBasis};

/// Eigenvalues closer than this multiple of `‖L‖` form one cluster.
pub const CLUSTER_TOLERANCE: f64 = 1e-8;
/// Clusters whose right eigenvectors have relative numerical rank below
/// this are treated as defective.
pub const DEFECT_TOLERANCE: f64 = 1e-6;
/// Modes with biorthogonal condition number above this sit at an
/// exceptional point for all practical purposes.
pub const EP_CONDITION_LIMIT: f64 = 1e7;

#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as unit-norm columns.
    pub right: CMatrix,
    /// Left eigenvectors with `left† right = 1`.
    pub left: CMatrix,
    /// `1/|l_n† r_n|` for unit-norm `l_n`, `r_n`, i.e. `‖left_n‖`.
    pub condition: Vec<f64>,
    /// Frobenius norm of the decomposed matrix.
    pub norm: f64,
}

fn clusters(values: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

fn columns(m: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), idx.len(), |r, col| m[(r, idx[col])])
}

/// Diagonalizes `l` with explicit left/right pairing.
///
/// Left vectors come from the eigendecomposition of `l†` and are matched to
/// right vectors by eigenvalue; degenerate clusters are biorthogonalized
/// jointly. A cluster without a full set of eigenvectors yields
/// [`Error::ExceptionalPoint`].
pub fn decompose(l: &CMatrix) -> Result<SpectralData> {
    decompose_impl(l, None)
}

/// Like [`decompose`], but resolves each degenerate cluster into
/// eigenvectors of `symmetry`, which must commute with `l`.
pub fn decompose_with_symmetry(l: &CMatrix, symmetry: &CMatrix) -> Result<SpectralData> {
    if symmetry.shape() != l.shape() {
        return Err(invalid("symmetry operator has the wrong shape"));
    }
    decompose_impl(l, Some(symmetry))
}

fn decompose_impl(l: &CMatrix, symmetry: Option<&CMatrix>) -> Result<SpectralData> {
    if !l.is_square() {
        return Err(invalid("decompose needs a square matrix"));
    }
    let n = l.nrows();
    let norm = l.norm();
    let tol = CLUSTER_TOLERANCE * norm.max(f64::MIN_POSITIVE);

    let (values, right_raw) = linalg::eig(l)?;
    let (adj_values, left_raw) = linalg::eig(&l.adjoint())?;

    let mut right = CMatrix::zeros(n, n);
    let mut left = CMatrix::zeros(n, n);
    let mut eigenvalues = vec![Complex64::new(0.0, 0.0); n];
    let mut used = vec![false; n];
    let mut slot = 0;

    for cluster in clusters(&values, tol) {
        let m = cluster.len();
        let center: Complex64 = cluster.iter().map(|&i| values[i]).sum::<Complex64>() / m as f64;

        // nearest unused left eigenvalues (conjugated)
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&i| !used[i])
            .map(|i| ((adj_values[i].conj() - center).norm(), i))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let picked: Vec<usize> = candidates.iter().take(m).map(|&(_, i)| i).collect();
        let cluster_values: Vec<Complex64> = cluster.iter().map(|&i| values[i]).collect();
        if picked.len() != m {
            return Err(Error::Consistency("left/right eigenvalue pairing ran out of candidates".into()));
        }
        for &i in &picked {
            used[i] = true;
        }

        let mut r_c = columns(&right_raw, &cluster);
        let w_c = columns(&left_raw, &picked);

        let sv = linalg::singular_values(&r_c);
        if sv.last().copied().unwrap_or(0.0) < DEFECT_TOLERANCE * sv[0] {
            return Err(Error::ExceptionalPoint { eigenvalues: cluster_values });
        }

        let g = w_c.adjoint() * &r_c;
        let g_inv = g.clone().try_inverse().ok_or_else(|| Error::ExceptionalPoint {
            eigenvalues: cluster_values.clone(),
        })?;
        // l_c† r_c = 1
        let mut l_c = &w_c * g_inv.adjoint();

        let mut vals = vec![center; m];
        if m == 1 {
            vals[0] = values[cluster[0]];
        }
        if let (Some(sym), true) = (symmetry, m > 1) {
            let compressed = l_c.adjoint() * sym * &r_c;
            let (_, y) = linalg::eig(&compressed)?;
            let y_inv = y.clone().try_inverse().ok_or_else(|| {
                Error::Consistency("symmetry does not split the degenerate cluster".into())
            })?;
            r_c = &r_c * &y;
            l_c = &l_c * y_inv.adjoint();
            // Rayleigh quotients give the individual eigenvalues
            for (a, v) in vals.iter_mut().enumerate() {
                *v = (l_c.column(a).adjoint() * l * r_c.column(a))[(0, 0)];
            }
        } else if m > 1 {
            for (a, v) in vals.iter_mut().enumerate() {
                *v = values[cluster[a]];
            }
        }

        for (a, &val) in vals.iter().enumerate() {
            let mut r = r_c.column(a).into_owned();
            let mut lv = l_c.column(a).into_owned();
            let rn = r.norm();
            r /= c(rn);
            lv *= c(rn);
            right.set_column(slot, &r);
            left.set_column(slot, &lv);
            eigenvalues[slot] = val;
            slot += 1;
        }
    }

    let condition: Vec<f64> = left.column_iter().map(|col| col.norm()).collect();
    for (i, &k) in condition.iter().enumerate() {
        if k > EP_CONDITION_LIMIT {
            let lam = eigenvalues[i];
            let near: Vec<Complex64> = eigenvalues
                .iter()
                .copied()
                .filter(|z| (z - lam).norm() < 1e-4 * norm.max(1.0))
                .collect();
            return Err(Error::ExceptionalPoint { eigenvalues: near });
        }
    }

    Ok(SpectralData { eigenvalues, right, left, condition, norm })
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest `‖L r_n − λ_n r_n‖ / ‖L‖` over modes.
    pub fn residual(&self, l: &CMatrix) -> f64 {
        (0..self.len())
            .map(|i| {
                let r = self.right.column(i);
                (l * r - r * self.eigenvalues[i]).norm()
            })
            .fold(0.0, f64::max)
            / self.norm.max(f64::MIN_POSITIVE)
    }

    /// Largest entry of `left† right − 1`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let g = self.left.adjoint() * &self.right;
        linalg::max_abs(&(g - CMatrix::identity(self.len(), self.len())))
    }

    /// `Σ_n λ_n r_n l_n†`.
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&CVector::from_vec(self.eigenvalues.clone()));
        &self.right * d * self.left.adjoint()
    }

    /// `exp(L t) v` through the eigenbasis.
    pub fn propagate(&self, v: &CVector, t: f64) -> CVector {
        let coeffs = self.left.adjoint() * v;
        let scaled = CVector::from_fn(self.len(), |i, _| coeffs[i] * (self.eigenvalues[i] * t).exp());
        &self.right * scaled
    }

    /// Index of the eigenvalue nearest to `target`.
    pub fn nearest(&self, target: Complex64) -> usize {
        (0..self.len())
            .min_by(|&a, &b| {
                (self.eigenvalues[a] - target)
                    .norm()
                    .total_cmp(&(self.eigenvalues[b] - target).norm())
            })
            .expect("non-empty spectrum")
    }
}

/// Weight distribution of one eigenmode over the operator lattice.
#[derive(Clone, Debug, Serialize)]
pub struct ModeProfile {
    pub mode: usize,
    pub eigenvalue: Complex64,
    /// `w_kq = |c_kq|²` with the coefficient vector normalized to unit length.
    pub site_weights: BTreeMap<Site, f64>,
    /// `w_k = Σ_q w_kq`, indexed by `k`.
    pub rank_weights: Vec<f64>,
    /// `PR_k = 1 / Σ_k w_k²`.
    pub participation_ratio: f64,
}

pub fn participation_ratio(rank_weights: &[f64]) -> f64 {
    1.0 / rank_weights.iter().map(|w| w * w).sum::<f64>()
}

/// Profiles an arbitrary coefficient vector given in flat `(k, q)` order.
pub fn profile_vector(coeffs: &CVector, k_max: u32) -> (BTreeMap<Site, f64>, Vec<f64>, f64) {
    let norm_sq = coeffs.norm_squared();
    let mut site_weights = BTreeMap::new();
    let mut rank_weights = vec![0.0; k_max as usize + 1];
    for site in crate::tensor::sites(k_max) {
        let w = coeffs[site.flat_index()].norm_sqr() / norm_sq;
        rank_weights[site.k as usize] += w;
        site_weights.insert(site, w);
    }
    let pr = participation_ratio(&rank_weights);
    (site_weights, rank_weights, pr)
}

/// Caches the change of coordinates used for profiling many modes.
pub struct ModeProfiler {
    k_max: u32,
    /// Maps z-quantized tensor coordinates to the profiling coordinates.
    transform: Option<CMatrix>,
}

impl ModeProfiler {
    /// Profiles in the z-quantized tensor basis the spectrum is expressed in.
    pub fn z_axis(basis: &TensorBasis) -> Self {
        Self { k_max: basis.k_max(), transform: None }
    }

    /// Profiles in x-quantized coordinates `q ≡ q_x`.
    pub fn x_axis(basis: &TensorBasis, x_basis: &crate::perturbative::XTensorBasis) -> Self {
        Self {
            k_max: basis.k_max(),
            transform: Some(x_basis.vectorized().adjoint() * basis.vectorized()),
        }
    }

    pub fn profile(&self, spec: &SpectralData, n: usize) -> Result<ModeProfile> {
        if n >= spec.len() {
            return Err(invalid(format!("mode {n} out of range (spectrum has {})", spec.len())));
        }
        let r = spec.right.column(n).into_owned();
        if r.len() != (self.k_max as usize + 1).pow(2) {
            return Err(invalid("spectrum size does not match the tensor basis"));
        }
        let coeffs = match &self.transform {
            Some(t) => t * r,
            None => r,
        };
        let (site_weights, rank_weights, participation_ratio) = profile_vector(&coeffs, self.k_max);
        Ok(ModeProfile { mode: n, eigenvalue: spec.eigenvalues[n], site_weights, rank_weights, participation_ratio })
    }
}

/// `k`-resolved participation ratio and weights of mode `n`; with
/// `x_axis`, components are taken in the x-quantized tensor basis.
pub fn profile_mode(spec: &SpectralData, n: usize, basis: &TensorBasis, x_axis: bool) -> Result<ModeProfile> {
    let profiler = if x_axis {
        ModeProfiler::x_axis(basis, &crate::perturbative::rotate_basis(basis))
    } else {
        ModeProfiler::z_axis(basis)
    };
    profiler.profile(spec, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum OscillatoryPair {
    /// Mode indices of `λ` with `Im λ > 0` and its conjugate partner.
    Pair { plus: usize, minus: usize },
    NoOscillatoryMode,
}

/// The conjugate pair with largest `Re λ` among modes with
/// `|Im λ| > 1e-8 · max(Ω, ‖L‖)`.
pub fn slowest_oscillatory_pair(spec: &SpectralData, omega: f64) -> Result<OscillatoryPair> {
    let threshold = 1e-8 * omega.abs().max(spec.norm);
    let best = (0..spec.len())
        .filter(|&i| spec.eigenvalues[i].im > threshold)
        .max_by(|&a, &b| spec.eigenvalues[a].re.total_cmp(&spec.eigenvalues[b].re));
    let Some(plus) = best else {
        return Ok(OscillatoryPair::NoOscillatoryMode);
    };
    let target = spec.eigenvalues[plus].conj();
    let minus = spec.nearest(target);
    let gap = (spec.eigenvalues[minus] - target).norm();
    if gap > 1e-8 * spec.norm.max(1.0) {
        return Err(Error::Consistency(format!(
            "eigenvalue {} has no conjugate partner (closest miss {gap:.3e})",
            spec.eigenvalues[plus]
        )));
    }
    Ok(OscillatoryPair::Pair { plus, minus })
}

/// Path of one eigenvalue followed through a parameter sweep.
#[derive(Clone, Debug)]
pub struct TrackedMode {
    pub parameters: Vec<f64>,
    pub eigenvalues: Vec<Complex64>,
    /// Mode index in the spectrum at the final parameter.
    pub final_index: usize,
    pub final_spectrum: SpectralData,
}

/// Follows mode `start_mode` of `build(from)` to `build(to)` by
/// nearest-eigenvalue continuation, halving the step whenever the nearest
/// and second-nearest candidates are within a factor two of each other.
pub fn track_mode<F>(build: F, from: f64, to: f64, steps: usize, start_mode: usize) -> Result<TrackedMode>
where
    F: Fn(f64) -> Result<SpectralData>,
{
    if steps == 0 {
        return Err(invalid("tracking needs at least one step"));
    }
    let mut spec = build(from)?;
    if start_mode >= spec.len() {
        return Err(invalid(format!("mode {start_mode} out of range")));
    }
    let mut index = start_mode;
    let mut p = from;
    let nominal = (to - from) / steps as f64;
    let min_step = nominal.abs() / 1024.0;
    let mut step = nominal;
    let mut parameters = vec![from];
    let mut eigenvalues = vec![spec.eigenvalues[index]];

    while (to - p).abs() > 1e-14 * to.abs().max(1.0) {
        let next_p = if (to - p).abs() <= step.abs() { to } else { p + step };
        let next = build(next_p)?;
        let current = spec.eigenvalues[index];
        let mut dists: Vec<(f64, usize)> =
            next.eigenvalues.iter().enumerate().map(|(i, z)| ((z - current).norm(), i)).collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ambiguous = dists.len() > 1 && dists[1].0 < 2.0 * dists[0].0 && dists[0].0 > 0.0;
        if ambiguous && step.abs() > min_step {
            step /= 2.0;
            continue;
        }
        index = dists[0].1;
        spec = next;
        p = next_p;
        parameters.push(p);
        eigenvalues.push(spec.eigenvalues[index]);
        step = nominal;
    }
    Ok(TrackedMode { parameters, eigenvalues, final_index: index, final_spectrum: spec })
}
