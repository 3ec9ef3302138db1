//! Spectral gap of the reversible generator.
//!
//! Work with the symmetrisation `S = Pi^{1/2} (-L) Pi^{-1/2}`, whose
//! off-diagonal entries are `-cosh(delta / 2)` with `delta` the log-weight
//! difference between neighbouring configurations. The stationary
//! direction `sqrt(mu)` is deflated before solving.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Systems up to this many sites use a dense eigensolver.
pub const DENSE_GAP_MAX: usize = 10;

const REVERSIBILITY_TOL: f64 = 1e-10;
const LANCZOS_TOL: f64 = 1e-11;
const LANCZOS_MAX_DIM: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralGap {
    pub gap: f64,
    /// Eigenfunction `g` with `E_mu g = 0` and `E_mu g^2 = 1`.
    pub eigenfunction: Vec<f64>,
    pub method: GapMethod,
}

fn symmetric_offdiag(g: &GeneratorMatrix, s: usize, x: usize) -> f64 {
    let lw = g.ensemble().log_weights();
    -(0.5 * (lw[s ^ (1 << x)] - lw[s])).cosh()
}

fn apply_symmetric(g: &GeneratorMatrix, v: &[f64], out: &mut [f64]) {
    let n = g.sites();
    for (s, o) in out.iter_mut().enumerate() {
        let mut acc = g.exit_rate(s) * v[s];
        for x in 0..n {
            acc += symmetric_offdiag(g, s, x) * v[s ^ (1 << x)];
        }
        *o = acc;
    }
}

pub fn spectral_gap(g: &GeneratorMatrix) -> Result<f64> {
    Ok(spectral_gap_with_vector(g)?.gap)
}

pub fn spectral_gap_with_vector(g: &GeneratorMatrix) -> Result<SpectralGap> {
    let violation = g.detailed_balance_violation();
    if violation > REVERSIBILITY_TOL {
        return Err(Error::NonReversible { violation });
    }
    let root: Vec<f64> = g.stationary().iter().map(|p| p.sqrt()).collect();
    let (gap, vector, method) = if g.sites() <= DENSE_GAP_MAX {
        let (gap, v) = dense_gap(g, &root);
        (gap, v, GapMethod::Dense)
    } else {
        let (gap, v) = lanczos_gap(g, &root)?;
        (gap, v, GapMethod::Lanczos)
    };
    let mut eigenfunction: Vec<f64> = vector
        .iter()
        .zip(&root)
        .map(|(v, r)| if *r > 0.0 { v / r } else { 0.0 })
        .collect();
    let mu = g.stationary();
    let mean: f64 = mu.iter().zip(&eigenfunction).map(|(p, v)| p * v).sum();
    eigenfunction.iter_mut().for_each(|v| *v -= mean);
    let norm = mu
        .iter()
        .zip(&eigenfunction)
        .map(|(p, v)| p * v * v)
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        eigenfunction.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(SpectralGap {
        gap,
        eigenfunction,
        method,
    })
}

fn dense_gap(g: &GeneratorMatrix, root: &[f64]) -> (f64, Vec<f64>) {
    let m = g.states();
    let n = g.sites();
    let mut s = DMatrix::zeros(m, m);
    let mut top: f64 = 0.0;
    for a in 0..m {
        s[(a, a)] = g.exit_rate(a);
        top = top.max(g.exit_rate(a));
        for x in 0..n {
            s[(a, a ^ (1 << x))] = symmetric_offdiag(g, a, x);
        }
    }
    // Push the stationary eigenvalue above the rest of the spectrum.
    let shift = 2.0 * top + 1.0;
    let u = DVector::from_column_slice(root);
    s.ger(shift, &u, &u, 1.0);
    let s = linalg::symmetrize(&s);
    let (values, vectors) = linalg::sorted_eigen(&s);
    (values[0], vectors.column(0).iter().cloned().collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>], root: &[f64]) {
    // twice is enough
    for _ in 0..2 {
        let c = dot(v, root);
        axpy(-c, root, v);
        for b in basis {
            let c = dot(v, b);
            axpy(-c, b, v);
        }
    }
}

/// Lanczos with full reorthogonalisation on the complement of `sqrt(mu)`.
fn lanczos_gap(g: &GeneratorMatrix, root: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = g.states();
    let max_dim = LANCZOS_MAX_DIM.min(m - 1);
    let mut r = rng::stream(0x5eed_1a9c, 0);
    let mut v: Vec<f64> = (0..m).map(|_| r.random::<f64>() - 0.5).collect();
    orthogonalize(&mut v, &[], root);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; m];

    for k in 0..max_dim {
        apply_symmetric(g, &v, &mut w);
        let alpha = dot(&v, &w);
        basis.push(v.clone());
        alphas.push(alpha);
        orthogonalize(&mut w, &basis, root);
        let beta = dot(&w, &w).sqrt();

        let dim = k + 1;
        if dim % 5 == 0 || beta < 1e-13 || dim == max_dim {
            let t = DMatrix::from_fn(dim, dim, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (idx, theta) = eig
                .eigenvalues
                .iter()
                .cloned()
                .enumerate()
                .fold((0, f64::INFINITY), |b, (i, x)| if x < b.1 { (i, x) } else { b });
            let y = eig.eigenvectors.column(idx);
            let residual = (beta * y[dim - 1]).abs();
            let mut ritz = vec![0.0; m];
            for (j, b) in basis.iter().enumerate() {
                axpy(y[j], b, &mut ritz);
            }
            if residual <= LANCZOS_TOL * theta.abs().max(1.0) || beta < 1e-13 {
                return Ok((theta, ritz));
            }
            if dim == max_dim {
                return Err(Error::EigenNotConverged { dimension: dim, residual });
            }
        }
        betas.push(beta);
        v = w.iter().map(|x| x / beta).collect();
    }
    Err(Error::InvalidParameter("empty Krylov space".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glauber::build_generator;
    use crate::model::{build_coupling, CouplingMatrix, Lattice, ModelSpec};
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_single_site_gap_is_two() {
        let g = build_generator(&CouplingMatrix::identity(1), 0.0, &[0.0]).unwrap();
        assert_relative_eq!(spectral_gap(&g).unwrap(), 2.0, epsilon = 1e-13);
    }

    #[test]
    fn biased_single_site_gap() {
        for f in [0.3, -1.2, 2.5] {
            let g = build_generator(&CouplingMatrix::identity(1), 0.7, &[f]).unwrap();
            let p = g.stationary()[1];
            let q = g.stationary()[0];
            let expected = 1.0 + (p / q + q / p) / 2.0;
            assert_relative_eq!(spectral_gap(&g).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn independent_pair_gap_is_two() {
        let a = build_coupling(&ModelSpec::new(Lattice::path(2), 1.0, 0.0)).unwrap();
        let g = build_generator(&a, 0.0, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(spectral_gap(&g).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenfunction_is_normalised_and_satisfies_eigen_equation() {
        let a = build_coupling(&ModelSpec::new(Lattice::cycle(4), 1.0, 0.6)).unwrap();
        let g = build_generator(&a, 0.6, &[0.2, 0.0, -0.1, 0.3]).unwrap();
        let sg = spectral_gap_with_vector(&g).unwrap();
        let mu = g.stationary();
        let mean: f64 = mu.iter().zip(&sg.eigenfunction).map(|(p, v)| p * v).sum();
        assert!(mean.abs() < 1e-12);
        let mut lg = vec![0.0; g.states()];
        g.apply(&sg.eigenfunction, &mut lg);
        for (a, b) in lg.iter().zip(&sg.eigenfunction) {
            assert!((a + sg.gap * b).abs() < 1e-9);
        }
        assert_relative_eq!(g.dirichlet_form(&sg.eigenfunction), sg.gap, max_relative = 1e-10);
    }

    #[test]
    fn lanczos_matches_dense() {
        for (lattice, beta) in [(Lattice::path(8), 0.7), (Lattice::grid(3, 3), 1.5), (Lattice::complete(7), 2.0)] {
            let a = build_coupling(&ModelSpec::new(lattice, 1.0, beta)).unwrap();
            let n = a.dim();
            let field: Vec<f64> = (0..n).map(|i| 0.1 * (i % 3) as f64).collect();
            let g = build_generator(&a, beta, &field).unwrap();
            let root: Vec<f64> = g.stationary().iter().map(|p| p.sqrt()).collect();
            let (dense, _) = dense_gap(&g, &root);
            let (lanczos, _) = lanczos_gap(&g, &root).unwrap();
            assert_relative_eq!(dense, lanczos, max_relative = 1e-9);
        }
    }

    #[test]
    fn large_system_uses_lanczos() {
        let a = build_coupling(&ModelSpec::new(Lattice::path(11), 1.0, 0.5)).unwrap();
        let g = build_generator(&a, 0.5, &[0.0; 11]).unwrap();
        let sg = spectral_gap_with_vector(&g).unwrap();
        assert_eq!(sg.method, GapMethod::Lanczos);
        assert!(sg.gap > 0.0 && sg.gap < 2.0 + 1e-9);
    }
}
