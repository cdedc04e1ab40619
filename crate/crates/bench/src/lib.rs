//! Shared fixtures for the benchmarks.

use opspace::{build_liouvillian, Liouvillian, ModelSpec, SpinSystem, TensorBasis};

pub fn fixture(n: u32, gamma_over_omega: f64) -> (TensorBasis, Liouvillian) {
    let basis = TensorBasis::new(&SpinSystem::new(n).expect("valid N"));
    let lv = build_liouvillian(&ModelSpec::btc(n, 1.0, gamma_over_omega), &basis).expect("valid model");
    (basis, lv)
}
