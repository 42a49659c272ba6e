//! Shared fixtures for the criterion benchmarks.

use conformal_spectra::{CellComplex, ComplexSpec, ConformalProfile};

/// Product complex sized so a dense degree-1 solve stays well under a
/// second.
pub fn bench_complex() -> CellComplex {
    ComplexSpec::parse("cycle:12*path:12")
        .expect("fixture spec parses")
        .build()
        .expect("fixture spec builds")
}

/// Smoothly varying profile so the mass matrices are not multiples of the
/// identity.
pub fn bench_profile(complex: &CellComplex) -> ConformalProfile {
    ConformalProfile::from_fn(complex, |x| 1.0 + 0.25 * x[0].sin().abs())
        .expect("fixture profile is positive")
}
