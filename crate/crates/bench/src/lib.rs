//! Fixtures shared by the benchmarks.

use ising_lsi::{build_coupling, CouplingMatrix, Lattice, ModelSpec};

/// Normalised coupling of `lattice` with unit raw coupling.
pub fn coupling(lattice: Lattice) -> CouplingMatrix {
    build_coupling(&ModelSpec::new(lattice, 1.0, 1.0)).expect("benchmark lattice is valid")
}

/// A deterministic, mildly inhomogeneous field.
pub fn field(n: usize) -> Vec<f64> {
    (0..n).map(|x| 0.3 * ((x as f64) * 1.7).sin()).collect()
}
