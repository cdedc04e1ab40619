//! The `(k, q)` operator-lattice view of a tensor-basis Liouvillian:
//! rank projectors, rank-coupling strengths, on-site decays and hopping
//! amplitudes.
//!
//! Site `(k', q')` feeds site `(k, q)` through the matrix element
//! `L[(k,q), (k',q')]`. The coherent term `-iΩ[J_x, ·]` hops along `q`
//! with amplitudes `w±`; the dissipator keeps `q` and hops along `k` with
//! amplitudes `(Γ/N) t±`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, max_abs, CMatrix, I};
use crate::liouvillian::{build_liouvillian, Liouvillian, Superoperator};
use crate::tensor::{Site, TensorBasis};

/// Entries below this fraction of the largest element count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-10;
/// Forbidden weight above this fraction of the largest element is an error.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

/// `ℙ^(k) = Σ_q vec(T^k_q) vec(T^k_q)†` in the product basis.
pub fn projector(basis: &TensorBasis, k: u32) -> Result<Superoperator> {
    if k > basis.k_max() {
        return Err(invalid(format!("rank {k} exceeds k_max = {}", basis.k_max())));
    }
    let cols = basis.vectorized().columns_range(basis.rank_range(k));
    Ok(Superoperator::product(cols * cols.adjoint()))
}

/// Coherent hop amplitude `w±(k,q) = ½ √(k(k+1) − q(q±1))`.
pub fn w_plus(k: u32, q: i32) -> f64 {
    0.5 * crate::tensor::ladder_coefficient(k, q, 1)
}

pub fn w_minus(k: u32, q: i32) -> f64 {
    0.5 * crate::tensor::ladder_coefficient(k, q, -1)
}

fn tensor_matrix<'a>(l: &'a Superoperator, basis: &TensorBasis) -> Result<&'a CMatrix> {
    if l.basis != crate::OperatorBasis::Tensor {
        return Err(invalid("expected a tensor-basis superoperator"));
    }
    if l.dim() != basis.len() {
        return Err(invalid(format!("superoperator size {} does not match basis size {}", l.dim(), basis.len())));
    }
    Ok(&l.matrix)
}

/// `C^(k'→k)`, the Frobenius norm of the block `ℙ^(k) 𝕃 ℙ^(k')`, stored at
/// row `k`, column `k'`.
pub fn rank_coupling_matrix(l_tensor: &Superoperator, basis: &TensorBasis) -> Result<DMatrix<f64>> {
    let l = tensor_matrix(l_tensor, basis)?;
    let ranks = basis.k_max() as usize + 1;
    Ok(DMatrix::from_fn(ranks, ranks, |k, kp| {
        let rows = basis.rank_range(k as u32);
        let cols = basis.rank_range(kp as u32);
        l.view((rows.start, cols.start), (rows.len(), cols.len())).norm()
    }))
}

/// Largest forbidden matrix elements, absolute and relative to the largest
/// element of the full generator.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SelectionRuleReport {
    pub max_element: f64,
    /// Dissipative elements with `q' ≠ q`.
    pub dissipative_q_changing: f64,
    /// Dissipative elements with `|k − k'| ≥ 2`.
    pub dissipative_long_range: f64,
    /// Coherent elements other than `k' = k, q' = q ± 1`.
    pub coherent_forbidden: f64,
}

impl SelectionRuleReport {
    pub fn worst(&self) -> f64 {
        self.dissipative_q_changing.max(self.dissipative_long_range).max(self.coherent_forbidden)
    }

    pub fn worst_relative(&self) -> f64 {
        if self.max_element == 0.0 {
            0.0
        } else {
            self.worst() / self.max_element
        }
    }

    pub fn holds(&self, relative_tolerance: f64) -> bool {
        self.worst_relative() <= relative_tolerance
    }
}

/// Splits a model Liouvillian into coherent and dissipative tensor-basis
/// parts; the coherent part is a `Γ = 0` build.
fn split_parts(lv: &Liouvillian, basis: &TensorBasis) -> Result<(CMatrix, CMatrix)> {
    let coherent = build_liouvillian(&lv.spec.with_gamma(0.0)?, basis)?.tensor.matrix;
    let dissipative = &lv.tensor.matrix - &coherent;
    Ok((coherent, dissipative))
}

fn selection_report(coherent: &CMatrix, dissipative: &CMatrix, basis: &TensorBasis) -> SelectionRuleReport {
    let full = coherent + dissipative;
    let mut report = SelectionRuleReport {
        max_element: max_abs(&full),
        dissipative_q_changing: 0.0,
        dissipative_long_range: 0.0,
        coherent_forbidden: 0.0,
    };
    for (i, to) in basis.sites().enumerate() {
        for (j, from) in basis.sites().enumerate() {
            let d = dissipative[(i, j)].norm();
            if to.q != from.q {
                report.dissipative_q_changing = report.dissipative_q_changing.max(d);
            }
            if to.k.abs_diff(from.k) >= 2 {
                report.dissipative_long_range = report.dissipative_long_range.max(d);
            }
            let allowed = to.k == from.k && to.q.abs_diff(from.q) == 1;
            if !allowed {
                report.coherent_forbidden = report.coherent_forbidden.max(coherent[(i, j)].norm());
            }
        }
    }
    report
}

pub fn verify_selection_rules(lv: &Liouvillian, basis: &TensorBasis) -> Result<SelectionRuleReport> {
    let (coherent, dissipative) = split_parts(lv, basis)?;
    Ok(selection_report(&coherent, &dissipative, basis))
}

/// Hopping-model parameters read off a tensor-basis Liouvillian.
#[derive(Clone, Debug)]
pub struct LatticeCouplings {
    pub k_max: u32,
    pub omega: f64,
    /// Dissipative prefactor `Γ/N`.
    pub rate: f64,
    /// On-site decay `γ(k,q) = −Re L[(k,q),(k,q)]`.
    pub gamma: BTreeMap<Site, f64>,
    /// `t+(k,q)`: hop `(k,q) → (k+1,q)`, in units of `Γ/N`.
    pub t_plus: BTreeMap<Site, Complex64>,
    /// `t−(k,q)`: hop `(k,q) → (k−1,q)`, in units of `Γ/N`.
    pub t_minus: BTreeMap<Site, Complex64>,
    pub w_plus: BTreeMap<Site, f64>,
    pub w_minus: BTreeMap<Site, f64>,
    /// `C^(k'→k)` at `(k, k')`.
    pub rank_coupling: DMatrix<f64>,
    pub selection_rules: SelectionRuleReport,
}

pub fn extract_couplings(lv: &Liouvillian, basis: &TensorBasis) -> Result<LatticeCouplings> {
    let l = tensor_matrix(&lv.tensor, basis)?;
    let (coherent, dissipative) = split_parts(lv, basis)?;
    let report = selection_report(&coherent, &dissipative, basis);
    if !report.holds(CONSISTENCY_TOLERANCE) {
        return Err(Error::Consistency(format!(
            "forbidden lattice weight {:.3e} (relative) exceeds {CONSISTENCY_TOLERANCE:e}",
            report.worst_relative()
        )));
    }

    let k_max = basis.k_max();
    let rate = lv.spec.rate();
    let to_units = |z: Complex64| if rate > 0.0 { z / rate } else { Complex64::new(0.0, 0.0) };
    let mut out = LatticeCouplings {
        k_max,
        omega: lv.spec.omega,
        rate,
        gamma: BTreeMap::new(),
        t_plus: BTreeMap::new(),
        t_minus: BTreeMap::new(),
        w_plus: BTreeMap::new(),
        w_minus: BTreeMap::new(),
        rank_coupling: rank_coupling_matrix(&lv.tensor, basis)?,
        selection_rules: report,
    };
    for site in basis.sites() {
        let i = site.flat_index();
        out.gamma.insert(site, -l[(i, i)].re);
        if site.k < k_max {
            let up = Site::new(site.k + 1, site.q).flat_index();
            out.t_plus.insert(site, to_units(dissipative[(up, i)]));
        }
        if site.k >= 1 && site.q.unsigned_abs() < site.k {
            let down = Site::new(site.k - 1, site.q).flat_index();
            out.t_minus.insert(site, to_units(dissipative[(down, i)]));
        }
        out.w_plus.insert(site, w_plus(site.k, site.q));
        out.w_minus.insert(site, w_minus(site.k, site.q));
    }
    Ok(out)
}

/// One interior `k`-bond `(k,q) ↔ (k+1,q)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HopComparison {
    pub site: Site,
    /// `|t+(k,q)|`
    pub forward: f64,
    /// `|t−(k+1,q)|`, the reverse hop on the same bond.
    pub reverse: f64,
    /// `|t−(k,q)|`, the downward hop leaving the same site.
    pub same_site_down: Option<f64>,
}

/// Which way a set of paired magnitudes leans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ordering {
    AllGreater,
    AllLess,
    Mixed,
}

fn classify(pairs: impl Iterator<Item = (f64, f64)>) -> Ordering {
    let (mut gt, mut lt, mut total) = (0, 0, 0);
    for (a, b) in pairs {
        total += 1;
        if a > b {
            gt += 1;
        } else if a < b {
            lt += 1;
        }
    }
    if total > 0 && gt == total {
        Ordering::AllGreater
    } else if total > 0 && lt == total {
        Ordering::AllLess
    } else {
        Ordering::Mixed
    }
}

impl LatticeCouplings {
    /// Mean of `γ(k,q)` over `q`, indexed by `k`.
    pub fn mean_gamma_by_rank(&self) -> Vec<f64> {
        (0..=self.k_max)
            .map(|k| {
                let vals: Vec<f64> = self.gamma.iter().filter(|(s, _)| s.k == k).map(|(_, g)| *g).collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect()
    }

    /// Maximum `|γ(k,q) − γ(k,−q)|`.
    pub fn q_reflection_defect(&self) -> f64 {
        self.gamma
            .iter()
            .map(|(s, g)| (g - self.gamma[&Site::new(s.k, -s.q)]).abs())
            .fold(0.0, f64::max)
    }

    /// Bond-by-bond comparison of upward and downward `k`-hops, for every
    /// bond whose both ends hold the component `q`.
    pub fn hop_comparisons(&self) -> Vec<HopComparison> {
        self.t_plus
            .iter()
            .map(|(site, tp)| {
                let reverse = self.t_minus.get(&Site::new(site.k + 1, site.q)).map_or(0.0, |z| z.norm());
                HopComparison {
                    site: *site,
                    forward: tp.norm(),
                    reverse,
                    same_site_down: self.t_minus.get(site).map(|z| z.norm()),
                }
            })
            .collect()
    }

    /// Ordering of `|t+(k,q)|` against `|t−(k+1,q)|` over all bonds.
    pub fn bond_ordering(&self) -> Ordering {
        classify(self.hop_comparisons().iter().map(|h| (h.forward, h.reverse)))
    }

    /// Ordering of `|t+(k,q)|` against `|t−(k,q)|` over sites that have both.
    pub fn same_site_ordering(&self) -> Ordering {
        classify(
            self.hop_comparisons()
                .iter()
                .filter_map(|h| h.same_site_down.map(|d| (h.forward, d))),
        )
    }

    /// Upward and downward strengths `(C^(k→k+1), C^(k+1→k))` per `k`.
    pub fn rank_bonds(&self) -> Vec<(f64, f64)> {
        (0..self.k_max as usize)
            .map(|k| (self.rank_coupling[(k + 1, k)], self.rank_coupling[(k, k + 1)]))
            .collect()
    }

    /// Re-assembles the tensor-basis generator from on-site terms and the
    /// four neighbour hops.
    pub fn reconstruct(&self) -> CMatrix {
        let d = (self.k_max as usize + 1).pow(2);
        let mut l = CMatrix::zeros(d, d);
        for (site, g) in &self.gamma {
            let i = site.flat_index();
            l[(i, i)] = c(-g);
        }
        for (site, t) in &self.t_plus {
            l[(Site::new(site.k + 1, site.q).flat_index(), site.flat_index())] += t * self.rate;
        }
        for (site, t) in &self.t_minus {
            l[(Site::new(site.k - 1, site.q).flat_index(), site.flat_index())] += t * self.rate;
        }
        for (site, w) in &self.w_plus {
            if site.q < site.k as i32 {
                l[(Site::new(site.k, site.q + 1).flat_index(), site.flat_index())] += -I * self.omega * *w;
            }
        }
        for (site, w) in &self.w_minus {
            if site.q > -(site.k as i32) {
                l[(Site::new(site.k, site.q - 1).flat_index(), site.flat_index())] += -I * self.omega * *w;
            }
        }
        l
    }
}

/// The rank-`k` block of the precession generator written out from the
/// hopping model: `-iΩ` times the `w±` hops plus `-(Γ/2N) q²` on site.
/// Rows and columns run over `q = -k..=k`.
pub fn precession_sector_matrix(k: u32, omega: f64, rate: f64) -> CMatrix {
    let size = 2 * k as usize + 1;
    let kq = |idx: usize| idx as i32 - k as i32;
    CMatrix::from_fn(size, size, |r, col| {
        let (q, qp) = (kq(r), kq(col));
        if q == qp {
            c(-0.5 * rate * (q * q) as f64)
        } else if q == qp + 1 {
            -I * omega * w_plus(k, qp)
        } else if q + 1 == qp {
            -I * omega * w_minus(k, qp)
        } else {
            c(0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_diff, trace};
    use crate::liouvillian::{casimir_superoperator, ModelSpec};
    use crate::spin::SpinSystem;

    fn setup(n: u32) -> (SpinSystem, TensorBasis) {
        let spin = SpinSystem::new(n).unwrap();
        let basis = TensorBasis::new(&spin);
        (spin, basis)
    }

    #[test]
    fn projector_properties() {
        let (spin, basis) = setup(4);
        let k2 = casimir_superoperator(&spin).matrix;
        let mut sum = CMatrix::zeros(basis.len(), basis.len());
        for k in 0..=4 {
            let p = projector(&basis, k).unwrap().matrix;
            assert!(max_diff(&(&p * &p), &p) < 1e-12);
            assert!(max_diff(&p.adjoint(), &p) < 1e-12);
            assert!((trace(&p).re - (2 * k + 1) as f64).abs() < 1e-12);
            let kk = (k * (k + 1)) as f64;
            assert!(max_diff(&(&p * &k2 * &p), &(&p * c(kk))) < 1e-10);
            sum += p;
        }
        assert!(max_diff(&sum, &CMatrix::identity(basis.len(), basis.len())) < 1e-12);
        assert_eq!(projector(&basis, 0).unwrap().matrix.rank(1e-10), 1);
        assert!(projector(&basis, 5).is_err());
    }

    /// Oracle: `ℒ[T^0_0]` evaluated directly in the |m><m'| basis for one
    /// spin, then projected on `T^1_0`.
    #[test]
    fn single_spin_identity_coupling() {
        let (spin, basis) = setup(1);
        for &(omega, gamma) in &[(1.0, 1.0), (0.3, 2.5)] {
            let spec = ModelSpec::new(crate::ModelKind::Btc, 1, omega, gamma).unwrap();
            let lv = build_liouvillian(&spec, &basis).unwrap();
            let t00 = basis.tensor(0, 0).unwrap();
            let jm = spin.jm();
            let image = (jm * t00 * jm.adjoint() - (jm.adjoint() * jm * t00 + t00 * jm.adjoint() * jm) * c(0.5)) * c(gamma);
            let overlap = trace(&(basis.tensor(1, 0).unwrap().adjoint() * image));
            assert!((overlap + c(gamma)).norm() < 1e-14);
            let cmat = rank_coupling_matrix(&lv.tensor, &basis).unwrap();
            assert!((cmat[(1, 0)] - gamma).abs() < 1e-12);
            assert!(cmat[(0, 1)].abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_matrix_matches_projector_route() {
        let (_, basis) = setup(3);
        let lv = build_liouvillian(&ModelSpec::btc(3, 1.0, 1.0), &basis).unwrap();
        let cmat = rank_coupling_matrix(&lv.tensor, &basis).unwrap();
        for k in 0..=3 {
            for kp in 0..=3 {
                let block = projector(&basis, k).unwrap().matrix * &lv.product.matrix * projector(&basis, kp).unwrap().matrix;
                assert!((block.norm() - cmat[(k as usize, kp as usize)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn precession_has_no_rank_coupling() {
        let (_, basis) = setup(5);
        let lv = build_liouvillian(&ModelSpec::precession(5, 1.0, 1.0), &basis).unwrap();
        let cmat = rank_coupling_matrix(&lv.tensor, &basis).unwrap();
        for k in 0..6 {
            for kp in 0..6 {
                if k != kp {
                    assert!(cmat[(k, kp)] < 1e-12);
                }
            }
        }
        assert!(verify_selection_rules(&lv, &basis).unwrap().holds(ZERO_TOLERANCE));
    }

    #[test]
    fn btc_selection_rules() {
        let (_, basis) = setup(5);
        let lv = build_liouvillian(&ModelSpec::btc(5, 1.0, 0.8), &basis).unwrap();
        let report = verify_selection_rules(&lv, &basis).unwrap();
        assert!(report.dissipative_long_range / report.max_element < 1e-10);
        assert!(report.dissipative_q_changing / report.max_element < 1e-10);
        assert!(report.coherent_forbidden / report.max_element < 1e-10);
    }

    #[test]
    fn w_reciprocity_and_closed_form() {
        for k in 0..8u32 {
            for q in -(k as i32)..k as i32 {
                assert_eq!(w_plus(k, q), w_minus(k, q + 1));
            }
        }
        assert!((w_plus(1, 0) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn precession_sector_matches_hopping_model() {
        let (_, basis) = setup(4);
        let spec = ModelSpec::precession(4, 1.3, 0.7);
        let lv = build_liouvillian(&spec, &basis).unwrap();
        for k in 0..=4 {
            let r = basis.rank_range(k);
            let block = lv.tensor.matrix.view((r.start, r.start), (r.len(), r.len())).into_owned();
            assert!(max_diff(&block, &precession_sector_matrix(k, spec.omega, spec.rate())) < 1e-12, "k={k}");
        }
        let couplings = extract_couplings(&lv, &basis).unwrap();
        assert!(couplings.t_plus.values().all(|t| t.norm() < 1e-10));
        assert!((couplings.w_plus[&Site::new(1, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_is_lossless() {
        for n in [2, 4] {
            let (_, basis) = setup(n);
            for spec in [ModelSpec::btc(n, 1.0, 1.0), ModelSpec::precession(n, 0.8, 2.0)] {
                let lv = build_liouvillian(&spec, &basis).unwrap();
                let couplings = extract_couplings(&lv, &basis).unwrap();
                assert!(max_diff(&couplings.reconstruct(), &lv.tensor.matrix) < 1e-10);
            }
        }
    }

    #[test]
    fn onsite_decay_symmetric_in_q() {
        let (_, basis) = setup(6);
        let lv = build_liouvillian(&ModelSpec::btc(6, 1.0, 1.0), &basis).unwrap();
        let couplings = extract_couplings(&lv, &basis).unwrap();
        assert!(couplings.q_reflection_defect() < 1e-10);
        assert!(couplings.gamma.values().all(|g| *g >= -1e-12));
    }

    #[test]
    fn wrong_basis_rejected() {
        let (_, basis) = setup(2);
        let lv = build_liouvillian(&ModelSpec::btc(2, 1.0, 1.0), &basis).unwrap();
        assert!(rank_coupling_matrix(&lv.product, &basis).is_err());
    }
}
