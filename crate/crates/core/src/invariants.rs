//! Property tests over randomly drawn models, operators and states.

use num_complex::Complex64;
use num_traits::Zero;
use proptest::prelude::*;

use crate::cg::{orthonormality_residual, HalfInt};
use crate::dynamics::{evolve, initial_state, EvolveOptions, InitialState};
use crate::lattice::extract_couplings;
use crate::linalg::{self, c, max_diff, CMatrix};
use crate::liouvillian::{build_liouvillian, unvectorize, vectorize, ModelKind, ModelSpec};
use crate::perturbative::{build_effective, rotate_basis};
use crate::spin::SpinSystem;
use crate::tensor::{Site, TensorBasis};

fn matrix(dim: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim)
        .prop_map(move |v| CMatrix::from_iterator(dim, dim, v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

fn spin_and_matrix() -> impl Strategy<Value = (u32, CMatrix)> {
    (1u32..=6).prop_flat_map(|n| (Just(n), matrix(n as usize + 1)))
}

fn model() -> impl Strategy<Value = ModelSpec> {
    (prop_oneof![Just(ModelKind::Btc), Just(ModelKind::Precession)], 1u32..=5, 0.1..2.0f64, 0.0..3.0f64)
        .prop_map(|(kind, n, omega, ratio)| ModelSpec::new(kind, n, omega, ratio * omega).unwrap())
}

fn setup(spec: &ModelSpec) -> (TensorBasis, crate::Liouvillian) {
    let basis = TensorBasis::new(&SpinSystem::new(spec.n).unwrap());
    let lv = build_liouvillian(spec, &basis).unwrap();
    (basis, lv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vectorization_round_trip(m in (1usize..=5).prop_flat_map(matrix)) {
        prop_assert_eq!(unvectorize(&vectorize(&m)).unwrap(), m);
    }

    #[test]
    fn tensor_coordinates_round_trip((n, m) in spin_and_matrix()) {
        let basis = TensorBasis::new(&SpinSystem::new(n).unwrap());
        let back = basis.operator(&basis.coordinates(&m).unwrap()).unwrap();
        prop_assert!(max_diff(&back, &m) < 1e-12);
    }

    #[test]
    fn hermitian_operators_have_mirrored_coordinates((n, m) in spin_and_matrix()) {
        let basis = TensorBasis::new(&SpinSystem::new(n).unwrap());
        let h = &m + m.adjoint();
        let a = basis.coordinates(&h).unwrap();
        for site in basis.sites() {
            let sign = if site.q.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let mirror = a[Site::new(site.k, -site.q).flat_index()];
            prop_assert!((mirror - a[site.flat_index()].conj() * sign).norm() < 1e-12);
        }
    }

    #[test]
    fn casimir_eigenvalue(n in 1u32..=8, pick in 0usize..1000) {
        let spin = SpinSystem::new(n).unwrap();
        let basis = TensorBasis::new(&spin);
        let site = Site::from_flat_index(pick % basis.len());
        let t = basis.tensor(site.k, site.q).unwrap();
        let mut acc = CMatrix::zeros(spin.dim(), spin.dim());
        for op in [spin.jx(), spin.jy(), spin.jz()] {
            let inner = op * t - t * op;
            acc += op * &inner - &inner * op;
        }
        let kk = (site.k * (site.k + 1)) as f64;
        prop_assert!(max_diff(&acc, &(t * c(kk))) < 1e-10);
    }

    #[test]
    fn cg_orthonormality_is_exact(tj1 in 0i64..=4, tj2 in 0i64..=4, a in 0usize..64, b in 0usize..64) {
        let (j1, j2) = (HalfInt::from_twice(tj1), HalfInt::from_twice(tj2));
        let ranks: Vec<(HalfInt, HalfInt)> = {
            let mut out = Vec::new();
            let mut k = (tj1 - tj2).abs();
            while k <= tj1 + tj2 {
                let mut q = -k;
                while q <= k {
                    out.push((HalfInt::from_twice(k), HalfInt::from_twice(q)));
                    q += 2;
                }
                k += 2;
            }
            out
        };
        let x = ranks[a % ranks.len()];
        let y = ranks[b % ranks.len()];
        prop_assert!(orthonormality_residual(j1, j2, x, y).unwrap().is_zero());
    }

    #[test]
    fn generators_preserve_trace_and_hermiticity(spec in model(), m in matrix(6)) {
        let (basis, lv) = setup(&spec);
        let dim = basis.spin().dim();
        let x = m.view((0, 0), (dim, dim)).into_owned();
        let h = &x + x.adjoint();
        let out = lv.product.apply(&h).unwrap();
        prop_assert!(linalg::hermiticity_defect(&out) < 1e-11);
        prop_assert!(linalg::trace(&out).norm() < 1e-11);
    }

    #[test]
    fn spectrum_is_closed_under_conjugation(spec in model()) {
        let (_, lv) = setup(&spec);
        let vals = linalg::eigenvalues(&lv.tensor.matrix).unwrap();
        let scale = lv.tensor.matrix.norm().max(1.0);
        for z in &vals {
            let nearest = vals.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest < 1e-6 * scale);
            prop_assert!(z.re < 1e-9 * scale);
        }
    }

    #[test]
    fn lattice_reconstruction_is_lossless(spec in model()) {
        let (basis, lv) = setup(&spec);
        let couplings = extract_couplings(&lv, &basis).unwrap();
        prop_assert!(max_diff(&couplings.reconstruct(), &lv.tensor.matrix) < 1e-10);
        prop_assert!(couplings.q_reflection_defect() < 1e-12);
    }

    #[test]
    fn evolution_keeps_trace(spec in model(), theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU) {
        let (basis, lv) = setup(&spec);
        let st = initial_state(&InitialState::Coherent { theta, phi }, &basis).unwrap();
        match evolve(&lv, &st, &[0.0, 0.5, 2.0], EvolveOptions::default()) {
            Ok(tr) => {
                for s in &tr.states {
                    prop_assert!((s.a[0] - st.a[0]).norm() < 1e-12);
                    prop_assert!(s.hermiticity_defect() < 1e-10);
                }
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn effective_generator_is_diagonal(n in 1u32..=5, omega in 0.1..2.0f64, ratio in 0.0..0.5f64) {
        let spin = SpinSystem::new(n).unwrap();
        let x = rotate_basis(&TensorBasis::new(&spin));
        let m = x.represent(&build_effective(&ModelSpec::btc(n, omega, ratio), &spin).unwrap()).unwrap();
        let mut off = m.clone();
        off.fill_diagonal(c(0.0));
        prop_assert!(linalg::max_abs(&off) < 1e-10);
    }
}
