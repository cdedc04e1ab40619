//! Orthonormal spherical tensor operator basis `{T^k_q}` for a spin-`j`
//! sector, together with its ladder structure and tensor coupling.
//!
//! Tensors are stored in flat order `index = k² + k + q`, so every rank `k`
//! occupies the contiguous range `k²..(k+1)²`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cg::{clebsch_gordan, CgKey, HalfInt};
use crate::error::{invalid, Result};
use crate::linalg::{c, max_abs, CMatrix};
use crate::liouvillian::vectorize;
use crate::spin::{commutator, SpinSystem};

/// A point `(k, q)` of the operator lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub k: u32,
    pub q: i32,
}

impl Site {
    pub fn new(k: u32, q: i32) -> Self {
        Self { k, q }
    }

    pub fn flat_index(self) -> usize {
        let k = self.k as i64;
        (k * k + k + self.q as i64) as usize
    }

    pub fn from_flat_index(index: usize) -> Self {
        let k = index.isqrt() as u32;
        let q = index as i64 - (k as i64 * k as i64 + k as i64);
        Site { k, q: q as i32 }
    }

    pub fn is_valid(self) -> bool {
        self.q.unsigned_abs() <= self.k
    }
}

/// All sites with `k ≤ k_max` in flat order.
pub fn sites(k_max: u32) -> impl Iterator<Item = Site> {
    (0..=k_max).flat_map(|k| (-(k as i32)..=k as i32).map(move |q| Site::new(k, q)))
}

/// A rank-`k` multiplet of operators, components ordered `q = -k..=k`.
#[derive(Clone, Debug)]
pub struct TensorMultiplet {
    pub rank: u32,
    pub components: Vec<CMatrix>,
}

impl TensorMultiplet {
    pub fn new(rank: u32, components: Vec<CMatrix>) -> Result<Self> {
        if components.len() != 2 * rank as usize + 1 {
            return Err(invalid(format!(
                "rank-{rank} multiplet needs {} components, got {}",
                2 * rank + 1,
                components.len()
            )));
        }
        Ok(Self { rank, components })
    }

    pub fn component(&self, q: i32) -> &CMatrix {
        &self.components[(q + self.rank as i32) as usize]
    }
}

#[derive(Clone, Debug)]
pub struct TensorBasis {
    spin: SpinSystem,
    tensors: Vec<CMatrix>,
    vectorized: CMatrix,
}

impl TensorBasis {
    /// `T^k_q = Σ_{m,m'} (-1)^{j-m} <j m'; j -m | k q> |j m'><j m|`.
    pub fn new(spin: &SpinSystem) -> Self {
        let dim = spin.dim();
        let j = spin.j();
        let k_max = spin.n();
        let mut tensors = Vec::with_capacity(dim * dim);
        for site in sites(k_max) {
            let mut t = CMatrix::zeros(dim, dim);
            for col in 0..dim {
                let m = spin.m(col);
                // only m' = m + q contributes
                let mp = m + HalfInt::integer(site.q as i64);
                if mp.twice().abs() > j.twice() {
                    continue;
                }
                let row = ((j.twice() - mp.twice()) / 2) as usize;
                let key = CgKey::new(j, mp, j, -m, HalfInt::integer(site.k as i64), HalfInt::integer(site.q as i64));
                let coeff = clebsch_gordan(&key).expect("valid angular momentum labels");
                let sign = if ((j.twice() - m.twice()) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                t[(row, col)] = c(sign * coeff);
            }
            tensors.push(t);
        }
        let d = dim * dim;
        let mut vectorized = CMatrix::zeros(d, d);
        for (i, t) in tensors.iter().enumerate() {
            vectorized.set_column(i, &vectorize(t));
        }
        Self { spin: spin.clone(), tensors, vectorized }
    }

    pub fn spin(&self) -> &SpinSystem {
        &self.spin
    }

    pub fn k_max(&self) -> u32 {
        self.spin.n()
    }

    /// Operator-space dimension `D = (N+1)²`.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        sites(self.k_max())
    }

    fn check_site(&self, site: Site) -> Result<()> {
        if site.k > self.k_max() || !site.is_valid() {
            return Err(invalid(format!("(k={}, q={}) outside the lattice k ≤ {}", site.k, site.q, self.k_max())));
        }
        Ok(())
    }

    pub fn tensor(&self, k: u32, q: i32) -> Result<&CMatrix> {
        let site = Site::new(k, q);
        self.check_site(site)?;
        Ok(&self.tensors[site.flat_index()])
    }

    pub fn tensors(&self) -> &[CMatrix] {
        &self.tensors
    }

    /// Columns are `vec(T^k_q)` in flat order; unitary for a complete basis.
    pub fn vectorized(&self) -> &CMatrix {
        &self.vectorized
    }

    /// Flat index range of rank `k`.
    pub fn rank_range(&self, k: u32) -> std::ops::Range<usize> {
        let k = k as usize;
        k * k..(k + 1) * (k + 1)
    }

    pub fn multiplet(&self, k: u32) -> Result<TensorMultiplet> {
        self.check_site(Site::new(k, 0))?;
        TensorMultiplet::new(k, self.tensors[self.rank_range(k)].to_vec())
    }

    /// Tensor-basis coordinates `a_{k,q} = Tr[(T^k_q)† O]` of an operator.
    pub fn coordinates(&self, op: &CMatrix) -> Result<crate::CVector> {
        Ok(self.vectorized.adjoint() * crate::liouvillian::try_vectorize(op, self.spin.dim())?)
    }

    /// `Σ a_{k,q} T^k_q`.
    pub fn operator(&self, coords: &crate::CVector) -> Result<CMatrix> {
        if coords.len() != self.len() {
            return Err(invalid(format!("expected {} coordinates, got {}", self.len(), coords.len())));
        }
        crate::liouvillian::unvectorize(&(&self.vectorized * coords))
    }

    /// Debug dump: a list of `{k, q, matrix}` with row-major `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<_> = self
            .sites()
            .zip(&self.tensors)
            .map(|(site, t)| {
                let rows: Vec<Vec<[f64; 2]>> = t
                    .row_iter()
                    .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                    .collect();
                json!({ "k": site.k, "q": site.q, "matrix": rows })
            })
            .collect();
        serde_json::Value::Array(entries)
    }
}

/// Frobenius residuals of the defining adjoint relations of `T^k_q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderResiduals {
    /// `‖[J_z, T] − q T‖`
    pub z: f64,
    /// `‖[J_+, T] − √(k(k+1) − q(q+1)) T^k_{q+1}‖`
    pub plus: f64,
    /// `‖[J_−, T] − √(k(k+1) − q(q−1)) T^k_{q−1}‖`
    pub minus: f64,
}

impl LadderResiduals {
    pub fn max(&self) -> f64 {
        self.z.max(self.plus).max(self.minus)
    }
}

pub(crate) fn ladder_coefficient(k: u32, q: i32, step: i32) -> f64 {
    let (k, q) = (k as f64, q as f64);
    (k * (k + 1.0) - q * (q + step as f64)).max(0.0).sqrt()
}

pub fn verify_ladder(basis: &TensorBasis, k: u32, q: i32) -> Result<LadderResiduals> {
    let t = basis.tensor(k, q)?;
    let spin = basis.spin();
    let z = (commutator(spin.jz(), t)? - t * c(q as f64)).norm();
    let side = |op: &CMatrix, step: i32| -> Result<f64> {
        let mut r = commutator(op, t)?;
        let target = Site::new(k, q + step);
        if target.is_valid() {
            r -= basis.tensor(k, q + step)? * c(ladder_coefficient(k, q, step));
        }
        Ok(r.norm())
    };
    let plus = side(spin.jp(), 1)?;
    let minus = side(spin.jm(), -1)?;
    Ok(LadderResiduals { z, plus, minus })
}

/// Irreducible product `[V^{k1} × U^{k2}]^K_Q = Σ <k1 q1; k2 q2|K Q> V_{q1} U_{q2}`.
pub fn couple_tensors(v: &TensorMultiplet, u: &TensorMultiplet, k: u32, q: i32) -> Result<CMatrix> {
    let (k1, k2) = (v.rank, u.rank);
    if k < k1.abs_diff(k2) || k > k1 + k2 {
        return Err(invalid(format!("rank {k} violates the triangle rule for {k1} ⊗ {k2}")));
    }
    if q.unsigned_abs() > k {
        return Err(invalid(format!("component {q} exceeds rank {k}")));
    }
    let dim = v.components[0].nrows();
    if u.components[0].nrows() != dim {
        return Err(invalid("multiplets act on different spaces"));
    }
    let mut out = CMatrix::zeros(dim, dim);
    for q1 in -(k1 as i32)..=k1 as i32 {
        let q2 = q - q1;
        if q2.unsigned_abs() > k2 {
            continue;
        }
        let key = CgKey::new(
            HalfInt::integer(k1 as i64),
            HalfInt::integer(q1 as i64),
            HalfInt::integer(k2 as i64),
            HalfInt::integer(q2 as i64),
            HalfInt::integer(k as i64),
            HalfInt::integer(q as i64),
        );
        let coeff = clebsch_gordan(&key)?;
        if coeff != 0.0 {
            out += v.component(q1) * u.component(q2) * c(coeff);
        }
    }
    Ok(out)
}

/// Largest deviation of `B†B` from the identity.
pub fn completeness_defect(basis: &TensorBasis) -> f64 {
    let b = basis.vectorized();
    let gram = b.adjoint() * b;
    max_abs(&(gram - CMatrix::identity(b.ncols(), b.ncols())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_diff, trace};

    #[test]
    fn flat_index_round_trip() {
        for (i, site) in sites(12).enumerate() {
            assert_eq!(site.flat_index(), i);
            assert_eq!(Site::from_flat_index(i), site);
        }
    }

    #[test]
    fn spin_half_tensors() {
        let spin = SpinSystem::new(1).unwrap();
        let basis = TensorBasis::new(&spin);
        let s = 1.0 / 2f64.sqrt();
        assert!(max_diff(basis.tensor(0, 0).unwrap(), &(identity(2) * c(s))) < 1e-15);
        let t10 = CMatrix::from_row_slice(2, 2, &[c(s), c(0.0), c(0.0), c(-s)]);
        assert!(max_diff(basis.tensor(1, 0).unwrap(), &t10) < 1e-15);
        // T^1_1 = -J_+ for j = 1/2
        assert!(max_diff(basis.tensor(1, 1).unwrap(), &(-spin.jp())) < 1e-15);
    }

    #[test]
    fn rank_two_component_normalized_and_traceless() {
        for n in 2..=6 {
            let basis = TensorBasis::new(&SpinSystem::new(n).unwrap());
            let t = basis.tensor(2, 1).unwrap();
            assert!((trace(&(t.adjoint() * t)).re - 1.0).abs() < 1e-12);
            assert!(trace(t).norm() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_sites_rejected() {
        let basis = TensorBasis::new(&SpinSystem::new(2).unwrap());
        assert!(basis.tensor(3, 0).is_err());
        assert!(basis.tensor(1, 2).is_err());
        assert!(verify_ladder(&basis, 2, -3).is_err());
    }

    #[test]
    fn ladder_examples() {
        let spin = SpinSystem::new(3).unwrap();
        let basis = TensorBasis::new(&spin);
        let t10 = basis.tensor(1, 0).unwrap();
        assert!(commutator(spin.jz(), t10).unwrap().norm() < 1e-14);
        let raised = commutator(spin.jp(), t10).unwrap();
        assert!(max_diff(&raised, &(basis.tensor(1, 1).unwrap() * c(2f64.sqrt()))) < 1e-13);
        let top = basis.tensor(3, 3).unwrap();
        assert!(commutator(spin.jp(), top).unwrap().norm() < 1e-13);
        for site in basis.sites() {
            assert!(verify_ladder(&basis, site.k, site.q).unwrap().max() < 1e-10);
        }
    }

    #[test]
    fn conjugation_phase() {
        // (T^k_q)† = (-1)^q T^k_{-q}
        for n in 1..=6 {
            let basis = TensorBasis::new(&SpinSystem::new(n).unwrap());
            for site in basis.sites() {
                let lhs = basis.tensor(site.k, site.q).unwrap().adjoint();
                let sign = if site.q.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let rhs = basis.tensor(site.k, -site.q).unwrap() * c(sign);
                assert!(max_diff(&lhs, &rhs) < 1e-12, "n={n} {site:?}");
            }
        }
    }

    #[test]
    fn coupling_two_vectors() {
        let spin = SpinSystem::new(2).unwrap();
        let basis = TensorBasis::new(&spin);
        let t1 = basis.multiplet(1).unwrap();

        let scalar = couple_tensors(&t1, &t1, 0, 0).unwrap();
        let lambda = trace(&scalar) / c(3.0);
        assert!(max_diff(&scalar, &(identity(3) * lambda)) < 1e-12);
        assert!(lambda.norm() > 1e-3);

        let rank2 = couple_tensors(&t1, &t1, 2, 2).unwrap();
        let adj = commutator(spin.jz(), &rank2).unwrap();
        assert!(max_diff(&adj, &(&rank2 * c(2.0))) < 1e-12);
        assert!(rank2.norm() > 1e-3);

        assert!(couple_tensors(&t1, &t1, 3, 0).is_err());
    }

    #[test]
    fn json_dump_shape() {
        let basis = TensorBasis::new(&SpinSystem::new(1).unwrap());
        let v = basis.to_json();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 4);
        assert_eq!(arr[2]["k"], 1);
        assert_eq!(arr[2]["q"], 0);
        assert_eq!(arr[2]["matrix"].as_array().unwrap().len(), 2);
    }
}
