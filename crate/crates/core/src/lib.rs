//! Collective-spin Lindblad dynamics in the irreducible spherical tensor
//! operator basis.
//!
//! The crate builds the spin-`j` algebra for `N` spin-½ constituents, the
//! orthonormal tensor basis `T^k_q`, and the Liouvillians of the collective
//! precession and boundary-time-crystal models. In the tensor basis those
//! generators act as a local non-Hermitian hopping model on a `(k, q)`
//! lattice; the [`lattice`], [`spectral`], [`dynamics`] and [`perturbative`]
//! modules analyse that picture.
//!
//! ```
//! use opspace::{build_liouvillian, ModelSpec, SpinSystem, TensorBasis};
//!
//! let spin = SpinSystem::new(3).unwrap();
//! let basis = TensorBasis::new(&spin);
//! let model = ModelSpec::btc(3, 1.0, 1.0);
//! let lv = build_liouvillian(&model, &basis).unwrap();
//! assert_eq!(lv.tensor.dim(), 16);
//! ```

pub mod cg;
pub mod dynamics;
pub mod error;
#[cfg(test)]
mod invariants;
pub mod lattice;
pub mod linalg;
pub mod liouvillian;
pub mod perturbative;
pub mod spectral;
pub mod spin;
pub mod tensor;

pub use cg::{clebsch_gordan, CgKey, ExactCg, HalfInt};
pub use dynamics::{
    coefficient_trajectory, evolve, expectation, initial_state, precession_analytic,
    source_decompose, CoefficientState, EvolveOptions, InitialState, PropagationMethod,
    SourceDecomposition, Trajectory,
};
pub use error::{Error, Result};
pub use lattice::{
    extract_couplings, projector, rank_coupling_matrix, verify_selection_rules, LatticeCouplings,
    SelectionRuleReport,
};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;
pub use liouvillian::{
    adjoint_superoperator, build_liouvillian, unvectorize, vectorize, Liouvillian,
    ModelKind, ModelSpec, OperatorBasis, Superoperator,
};
pub use perturbative::{
    build_effective, compare_spectra, perturbation_error, perturbative_spectrum, rotate_basis,
    EffectiveEigenvalue, ModeComparison, PerturbationSweep, XTensorBasis,
};
pub use spectral::{
    decompose, decompose_with_symmetry, profile_mode, slowest_oscillatory_pair, track_mode,
    ModeProfile, ModeProfiler, OscillatoryPair, SpectralData,
};
pub use spin::{commutator, Axis, SpinSystem};
pub use tensor::{Site, TensorBasis};
