//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_2;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use opspace::dynamics::{precession_k1_eigenvalues, rank_one_normalization};
use opspace::linalg::{self, c, max_abs, max_diff, CMatrix};
use opspace::tensor::verify_ladder;
use opspace::{
    build_effective, build_liouvillian, commutator, decompose, evolve, expectation, extract_couplings,
    initial_state, perturbation_error, perturbative_spectrum, profile_mode, rotate_basis,
    slowest_oscillatory_pair, source_decompose, verify_selection_rules, EvolveOptions, InitialState,
    Liouvillian, ModelKind, ModelSpec, OscillatoryPair, Site, SpinSystem, TensorBasis,
};

const ALGEBRA_TOL: f64 = 1e-10;
const ALGEBRA_BUDGET: Duration = Duration::from_secs(10);
const SELECTION_TOL: f64 = 1e-10;
const SELECTION_BUDGET: Duration = Duration::from_secs(5);
const ANCHOR_TOL: f64 = 1e-12;
const PRECESSION_EIG_TOL: f64 = 1e-10;
const EP_GRID_STEP: f64 = 1e-3;
const DECAY_FIT_TOL: f64 = 1e-6;
const RECONSTRUCTION_TOL: f64 = 1e-10;
const FORBIDDEN_C_TOL: f64 = 1e-10;
const SINGLE_SPIN_C_TOL: f64 = 1e-12;
const CLOSED_FORM_TOL: f64 = 1e-8;
const INSENSITIVITY_TOL: f64 = 1e-6;
const PR_UNITARY_TOL: f64 = 1e-6;
const DIAGONAL_TOL: f64 = 1e-10;
const SLOPE_TARGET: f64 = 2.0;
const SLOPE_TOL: f64 = 0.15;
const HERMITICITY_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = -1e-8;
const TRACE_TOL: f64 = 1e-12;
const SUITE_BUDGET: Duration = Duration::from_secs(120);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn setup(spec: ModelSpec) -> (TensorBasis, Liouvillian) {
    let spin = SpinSystem::new(spec.n).unwrap();
    let basis = TensorBasis::new(&spin);
    let lv = build_liouvillian(&spec, &basis).unwrap();
    (basis, lv)
}

fn grid(end: f64, step: f64) -> Vec<f64> {
    let n = (end / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn algebra_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 1..=10 {
        let spin = SpinSystem::new(n).unwrap();
        let (jx, jy, jz) = (spin.jx(), spin.jy(), spin.jz());
        let i = Complex64::i();
        worst = worst.max(max_diff(&commutator(jx, jy).unwrap(), &(jz * i)));
        worst = worst.max(max_diff(&commutator(jy, jz).unwrap(), &(jx * i)));
        worst = worst.max(max_diff(&commutator(jz, jx).unwrap(), &(jy * i)));
        let j = n as f64 / 2.0;
        worst = worst.max(max_diff(spin.j2(), &(linalg::identity(spin.dim()) * c(j * (j + 1.0)))));

        let basis = TensorBasis::new(&spin);
        let b = basis.vectorized();
        let id = linalg::identity(basis.len());
        worst = worst.max(max_diff(&(b.adjoint() * b), &id));
        worst = worst.max(max_diff(&(b * b.adjoint()), &id));
        for site in basis.sites() {
            let t = basis.tensor(site.k, site.q).unwrap();
            if site.k >= 1 {
                worst = worst.max(linalg::trace(t).norm());
            }
            worst = worst.max(verify_ladder(&basis, site.k, site.q).unwrap().max());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= ALGEBRA_TOL && elapsed < ALGEBRA_BUDGET,
        format!("N=1..10 worst residual {worst:.2e} (tol {ALGEBRA_TOL:.0e}), {:.2}s", elapsed.as_secs_f64()),
    )
}

fn selection_rules() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [3, 5, 7] {
        let (basis, lv) = setup(ModelSpec::btc(n, 1.0, 1.0));
        worst = worst.max(verify_selection_rules(&lv, &basis).unwrap().worst_relative());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= SELECTION_TOL && elapsed < SELECTION_BUDGET,
        format!(
            "N=3,5,7 largest forbidden element / max element {worst:.2e} (tol {SELECTION_TOL:.0e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn dissipator_anchors() -> Outcome {
    let gamma = 1.3;
    let (mut identity_dev, mut literal_dev, mut trace_free_dev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for n in 1..=6 {
        let (basis, lv) = setup(ModelSpec::new(ModelKind::Btc, n, 0.9, gamma).unwrap());
        let spin = basis.spin();
        let rate = lv.spec.rate();
        identity_dev = identity_dev.max(max_diff(&lv.action_on_identity(), &(spin.jz() * c(-2.0 * rate))));

        let (_, undriven) = setup(ModelSpec::new(ModelKind::Btc, n, 0.0, gamma).unwrap());
        let on_jz = undriven.product.apply(spin.jz()).unwrap();
        let jz2 = spin.jz() * spin.jz();
        let literal = (spin.j2() - spin.jz() - &jz2 * c(2.0)) * c(rate);
        let trace_free = (spin.j2() - spin.jz() - &jz2 * c(3.0)) * c(rate);
        literal_dev = literal_dev.max(max_diff(&on_jz, &literal));
        trace_free_dev = trace_free_dev.max(max_diff(&on_jz, &trace_free));
    }
    outcome(
        identity_dev <= ANCHOR_TOL && literal_dev <= ANCHOR_TOL,
        format!(
            "N=1..6 L[1] vs -(2G/N)Jz dev {identity_dev:.2e}; D[Jz] vs (G/N)(J^2-Jz-2Jz^2) dev {literal_dev:.2e} \
             (tol {ANCHOR_TOL:.0e}); D[Jz] vs (G/N)(J^2-Jz-3Jz^2) dev {trace_free_dev:.2e}"
        ),
    )
}

fn k1_block(lv: &Liouvillian) -> CMatrix {
    lv.tensor.matrix.view((1, 1), (3, 3)).into_owned()
}

/// Greedy nearest matching; returns the largest pair distance.
fn match_sets(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut pool = b.to_vec();
    let mut worst: f64 = 0.0;
    for z in a {
        let (idx, d) = pool
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        worst = worst.max(d);
        pool.remove(idx);
    }
    worst
}

fn precession_closed_form() -> Outcome {
    let n = 4;
    let mut eig_dev: f64 = 0.0;
    for kappa in [0.5, 1.0, 1.9, 2.1, 4.0] {
        let spec = ModelSpec::precession_kappa(n, 1.0, kappa).unwrap();
        let (_, lv) = setup(spec);
        let got = linalg::eigenvalues(&k1_block(&lv)).unwrap();
        eig_dev = eig_dev.max(match_sets(&precession_k1_eigenvalues(&spec), &got));
    }

    let spin = SpinSystem::new(n).unwrap();
    let basis = TensorBasis::new(&spin);
    let mut best = (f64::INFINITY, 0.0);
    let steps = (1.0 / EP_GRID_STEP).round() as usize;
    for i in 0..=steps {
        let kappa = 1.5 + i as f64 * EP_GRID_STEP;
        let spec = ModelSpec::precession_kappa(n, 1.0, kappa).unwrap();
        let lv = build_liouvillian(&spec, &basis).unwrap();
        let mut vals = linalg::eigenvalues(&k1_block(&lv)).unwrap();
        let x_mode = c(-spec.rate() / 2.0);
        let (idx, _) = vals
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - x_mode).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        vals.remove(idx);
        let gap = (vals[0] - vals[1]).norm();
        if gap < best.0 {
            best = (gap, kappa);
        }
    }
    let ep = best.1;

    let spec = ModelSpec::precession_kappa(n, 1.0, 1.0).unwrap();
    let lv = build_liouvillian(&spec, &basis).unwrap();
    let st = initial_state(&InitialState::Coherent { theta: FRAC_PI_2, phi: 0.0 }, &basis).unwrap();
    let times = grid(10.0, 0.5);
    let tr = evolve(&lv, &st, &times, EvolveOptions::default()).unwrap();
    let pts: Vec<(f64, f64)> = tr
        .states
        .iter()
        .map(|s| (s.t, expectation(s, &basis, spin.jx()).unwrap().re.ln()))
        .collect();
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum::<f64>();
    let want = spec.rate() / 2.0;
    let rel = (-slope - want).abs() / want;

    outcome(
        eig_dev <= PRECESSION_EIG_TOL && (ep - 2.0).abs() <= EP_GRID_STEP && rel <= DECAY_FIT_TOL,
        format!(
            "k=1 eigenvalue dev {eig_dev:.2e} (tol {PRECESSION_EIG_TOL:.0e}); EP at kappa={ep:.3} \
             (grid {EP_GRID_STEP:.0e}); <Jx> rate {:.10} vs G/2N {want:.10} rel {rel:.1e}",
            -slope
        ),
    )
}

fn lossless_reconstruction() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [3, 5, 7] {
        for spec in [ModelSpec::btc(n, 1.0, 1.0), ModelSpec::precession(n, 1.0, 1.0)] {
            let (basis, lv) = setup(spec);
            let couplings = extract_couplings(&lv, &basis).unwrap();
            worst = worst.max(max_diff(&couplings.reconstruct(), &lv.tensor.matrix));
        }
    }
    outcome(
        worst <= RECONSTRUCTION_TOL,
        format!("btc and precession N=3,5,7 max deviation {worst:.2e} (tol {RECONSTRUCTION_TOL:.0e})"),
    )
}

fn monotone_damping() -> Outcome {
    let (basis, lv) = setup(ModelSpec::btc(7, 1.0, 1.0));
    let mean = extract_couplings(&lv, &basis).unwrap().mean_gamma_by_rank();
    let increasing = mean[1..].windows(2).all(|w| w[1] > w[0]);
    let shown: Vec<String> = mean[1..].iter().map(|g| format!("{g:.4}")).collect();
    outcome(increasing, format!("N=7 mean_q gamma(k), k=1..7: [{}]", shown.join(", ")))
}

fn non_reciprocity() -> Outcome {
    let (basis, lv) = setup(ModelSpec::btc(7, 1.0, 1.0));
    let couplings = extract_couplings(&lv, &basis).unwrap();
    let bonds = couplings.rank_bonds();
    let asymmetric = bonds.iter().all(|(up, down)| (up - down).abs() > 1e-6 * up.max(*down));
    let ordering = if bonds.iter().all(|(u, d)| u > d) {
        "C(k->k+1) > C(k+1->k) on every bond"
    } else if bonds.iter().all(|(u, d)| u < d) {
        "C(k->k+1) < C(k+1->k) on every bond"
    } else {
        "mixed ordering"
    };
    let c_mat = &couplings.rank_coupling;
    let mut forbidden: f64 = 0.0;
    for k in 0..c_mat.nrows() {
        for kp in 0..c_mat.ncols() {
            if k.abs_diff(kp) >= 2 {
                forbidden = forbidden.max(c_mat[(k, kp)].abs());
            }
        }
    }
    let gamma = 1.7;
    let (basis1, lv1) = setup(ModelSpec::new(ModelKind::Btc, 1, 1.0, gamma).unwrap());
    let c01 = extract_couplings(&lv1, &basis1).unwrap().rank_coupling[(1, 0)];
    let anchor = (c01 - gamma).abs();
    let shown: Vec<String> = bonds.iter().map(|(u, d)| format!("{u:.4}/{d:.4}")).collect();
    outcome(
        asymmetric && forbidden <= FORBIDDEN_C_TOL && anchor <= SINGLE_SPIN_C_TOL,
        format!(
            "N=7 up/down per k [{}], {ordering}; forbidden max {forbidden:.1e}; N=1 C(0->1)-G = {anchor:.1e}",
            shown.join(", ")
        ),
    )
}

fn source_mechanism() -> Outcome {
    let mut closed_dev: f64 = 0.0;
    let mut spread: f64 = 0.0;
    let mut oscillating_source = true;
    let mut notes = Vec::new();
    for n in [3, 5] {
        let (basis, lv) = setup(ModelSpec::btc(n, 1.0, 1.0));
        let coh = initial_state(&InitialState::Coherent { theta: 2.0, phi: 0.5 }, &basis).unwrap();
        let pol = initial_state(&InitialState::Polarized, &basis).unwrap();
        let dec = source_decompose(&lv, &coh).unwrap();
        let times = grid(20.0, 0.25);
        let tr = evolve(&lv, &coh, &times, EvolveOptions::default()).unwrap();
        for s in &tr.states {
            closed_dev = closed_dev.max((dec.coefficients(s.t) - &s.a).norm() / s.a.norm());
        }

        let slowest = dec.spectrum.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let t_late = 20.0 / slowest.abs();
        let opts = EvolveOptions::default();
        let a = evolve(&lv, &coh, &[t_late], opts).unwrap();
        let b = evolve(&lv, &pol, &[t_late], opts).unwrap();
        let jz = basis.spin().jz();
        let gap = (expectation(&a.states[0], &basis, jz).unwrap() - expectation(&b.states[0], &basis, jz).unwrap())
            .norm();
        spread = spread.max(gap);

        let threshold = 1e-8 * lv.spec.omega.max(dec.spectrum.norm);
        let strongest = dec
            .spectrum
            .eigenvalues
            .iter()
            .zip(&dec.s)
            .filter(|(z, _)| z.im.abs() > threshold)
            .map(|(_, s)| s.norm())
            .fold(0.0, f64::max);
        oscillating_source &= strongest > 1e-10;
        notes.push(format!("N={n}: t_late={t_late:.1}, max |s| on oscillatory mode {strongest:.3e}"));
    }
    outcome(
        closed_dev <= CLOSED_FORM_TOL && spread <= INSENSITIVITY_TOL && oscillating_source,
        format!(
            "closed form vs propagation {closed_dev:.2e} (tol {CLOSED_FORM_TOL:.0e}); <Jz> spread {spread:.2e} \
             (tol {INSENSITIVITY_TOL:.0e}); {}",
            notes.join("; ")
        ),
    )
}

fn slowest_pr(n: u32, ratio: f64) -> f64 {
    let (basis, lv) = setup(ModelSpec::btc(n, 1.0, ratio));
    let spec = decompose(&lv.tensor.matrix).unwrap();
    match slowest_oscillatory_pair(&spec, 1.0).unwrap() {
        OscillatoryPair::Pair { plus, .. } => profile_mode(&spec, plus, &basis, false).unwrap().participation_ratio,
        OscillatoryPair::NoOscillatoryMode => f64::NAN,
    }
}

fn hybridization() -> Outcome {
    let (basis, lv) = setup(ModelSpec::btc(5, 1.0, 1e-4));
    let spec = decompose(&lv.tensor.matrix).unwrap();
    let unitary_dev = (0..spec.len())
        .map(|i| (profile_mode(&spec, i, &basis, false).unwrap().participation_ratio - 1.0).abs())
        .fold(0.0, f64::max);
    let weak = slowest_pr(5, 0.5);
    let strong = slowest_pr(5, 2.0);
    outcome(
        unitary_dev <= PR_UNITARY_TOL && strong > weak && weak > 1.0,
        format!(
            "G/W=1e-4 max |PR-1| {unitary_dev:.2e} (tol {PR_UNITARY_TOL:.0e}); N=5 slowest oscillatory PR \
             {weak:.4} at G/W=0.5, {strong:.4} at G/W=2"
        ),
    )
}

fn perturbative_consistency() -> Outcome {
    let n = 5;
    let ratios = [0.2, 0.1, 0.05, 0.025];
    let spin = SpinSystem::new(n).unwrap();
    let x = rotate_basis(&TensorBasis::new(&spin));
    let mut off: f64 = 0.0;
    for &r in &ratios {
        let m = x.represent(&build_effective(&ModelSpec::btc(n, 1.0, r), &spin).unwrap()).unwrap();
        let mut stripped = m.clone();
        stripped.fill_diagonal(c(0.0));
        off = off.max(max_abs(&stripped));
    }
    let sweep = perturbation_error(n, 1.0, &ratios).unwrap();
    let slope = sweep.slope.unwrap_or(f64::NAN);
    let ambiguous = sweep.points.iter().filter(|p| p.ambiguous).count();

    let spec = ModelSpec::btc(n, 1.0, 0.1);
    let mode = perturbative_spectrum(&spec, &spin).unwrap()[&Site::new(1, 1)];
    let factor = mode.reference.re / mode.operator.re;
    outcome(
        off <= DIAGONAL_TOL && (slope - SLOPE_TARGET).abs() <= SLOPE_TOL && (factor - 4.0).abs() < 1e-12,
        format!(
            "off-diagonal {off:.1e} (tol {DIAGONAL_TOL:.0e}); slope {slope:.4} (target {SLOPE_TARGET}+-{SLOPE_TOL}, \
             {ambiguous} ambiguous points); (k=1,qx=1) reference {:.6}{:+.6}i vs operator {:.6}{:+.6}i, \
             real-part factor {factor}",
            mode.reference.re, mode.reference.im, mode.operator.re, mode.operator.im
        ),
    )
}

fn physicality() -> Outcome {
    let (mut herm, mut min_eig, mut trace): (f64, f64, f64) = (0.0, f64::INFINITY, 0.0);
    for spec in [ModelSpec::btc(5, 1.0, 1.0), ModelSpec::precession(5, 1.0, 1.0)] {
        let (basis, lv) = setup(spec);
        for kind in [InitialState::Polarized, InitialState::Coherent { theta: 1.2, phi: 0.4 }] {
            let st = initial_state(&kind, &basis).unwrap();
            let tr = evolve(&lv, &st, &grid(20.0, 0.5), EvolveOptions::default()).unwrap();
            for s in &tr.states {
                let rho = s.density(&basis).unwrap();
                herm = herm.max(linalg::hermiticity_defect(&rho));
                min_eig = min_eig.min(linalg::hermitian_eigenvalues(&rho)[0]);
                trace = trace.max((s.a[0] - st.a[0]).norm());
            }
        }
    }
    outcome(
        herm <= HERMITICITY_TOL && min_eig >= POSITIVITY_TOL && trace <= TRACE_TOL,
        format!(
            "N=5 btc and precession: hermiticity {herm:.1e} (tol {HERMITICITY_TOL:.0e}); min eigenvalue \
             {min_eig:.2e} (floor {POSITIVITY_TOL:.0e}); a00 drift {trace:.1e} (tol {TRACE_TOL:.0e})"
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    // sanity on the rank-one normalization used in reports
    debug_assert!((rank_one_normalization(0.5) - 2f64.sqrt()).abs() < 1e-15);

    let criteria: [Criterion; 11] = [
        (1, "algebra suite", algebra_suite),
        (2, "selection rules", selection_rules),
        (3, "dissipator anchors", dissipator_anchors),
        (4, "precession closed form", precession_closed_form),
        (5, "hopping-model losslessness", lossless_reconstruction),
        (6, "monotone damping", monotone_damping),
        (7, "non-reciprocity", non_reciprocity),
        (8, "source mechanism", source_mechanism),
        (9, "hybridization", hybridization),
        (10, "perturbative consistency", perturbative_consistency),
        (11, "physicality", physicality),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        let status = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {status} {name} [{:.2}s]: {}",
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    let total = suite.elapsed();
    let in_budget = total < SUITE_BUDGET;
    println!(
        "suite runtime {:.1}s (budget {}s) {}",
        total.as_secs_f64(),
        SUITE_BUDGET.as_secs(),
        if in_budget { "PASS" } else { "FAIL" }
    );
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 || !in_budget {
        std::process::exit(1);
    }
}
