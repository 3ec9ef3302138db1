//! Exact Ising expectations by enumeration of all `2^n` configurations.
//!
//! Configurations are encoded as bit patterns: bit `x` set means
//! `sigma_x = +1`. Log-weights are generated in Gray-code order inside
//! fixed-size blocks so that each step costs `O(n)`; blocks are independent
//! and evaluated in parallel.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::CouplingMatrix;

/// Default site cap for scalar observables.
pub const SCALAR_CAP: usize = 20;
/// Default site cap for matrix-valued observables and generators.
pub const MATRIX_CAP: usize = 14;

const BLOCK_BITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationCaps {
    pub scalar: usize,
    pub matrix: usize,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps {
            scalar: SCALAR_CAP,
            matrix: MATRIX_CAP,
        }
    }
}

#[inline]
pub fn spin(state: usize, site: usize) -> f64 {
    if (state >> site) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Total magnetisation `sum_x sigma_x` of a configuration.
#[inline]
pub fn magnetization(state: usize, n: usize) -> i64 {
    2 * (state.count_ones() as i64) - n as i64
}

/// The Ising measure `mu_{t,f}` on `{+-1}^n`, held as log-weights
/// `-(t/2)(sigma, A sigma) + (f, sigma)` and normalised probabilities.
#[derive(Clone, Debug)]
pub struct ExactEnsemble {
    n: usize,
    inverse_temperature: f64,
    field: Vec<f64>,
    log_weights: Vec<f64>,
    log_partition: f64,
    probabilities: Vec<f64>,
    caps: EnumerationCaps,
}

impl ExactEnsemble {
    pub fn new(coupling: &CouplingMatrix, t: f64, field: &[f64]) -> Result<Self> {
        Self::with_caps(coupling, t, field, EnumerationCaps::default())
    }

    pub fn with_caps(
        coupling: &CouplingMatrix,
        t: f64,
        field: &[f64],
        caps: EnumerationCaps,
    ) -> Result<Self> {
        Self::from_matrix(coupling.matrix(), t, field, caps)
    }

    /// Builds the ensemble from any symmetric matrix. Only the off-diagonal
    /// part affects the probabilities; the diagonal contributes the constant
    /// `-(t/2) tr A` to every log-weight.
    pub fn from_matrix(
        a: &DMatrix<f64>,
        t: f64,
        field: &[f64],
        caps: EnumerationCaps,
    ) -> Result<Self> {
        let n = a.nrows();
        if field.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: field.len(),
            });
        }
        if n > caps.scalar {
            return Err(Error::TooLarge { n, cap: caps.scalar });
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::OutOfRange {
                what: "inverse temperature",
                value: t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if field.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field"));
        }
        linalg::check_finite(a, "coupling matrix")?;

        let log_weights = gray_code_log_weights(a, t, field);
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
        let log_partition = max + sum.ln();
        let probabilities = log_weights
            .iter()
            .map(|w| (w - log_partition).exp())
            .collect();
        Ok(ExactEnsemble {
            n,
            inverse_temperature: t,
            field: field.to_vec(),
            log_weights,
            log_partition,
            probabilities,
            caps,
        })
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> usize {
        1 << self.n
    }

    pub fn inverse_temperature(&self) -> f64 {
        self.inverse_temperature
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn caps(&self) -> EnumerationCaps {
        self.caps
    }

    pub(crate) fn require_matrix_cap(&self) -> Result<()> {
        if self.n > self.caps.matrix {
            Err(Error::TooLarge {
                n: self.n,
                cap: self.caps.matrix,
            })
        } else {
            Ok(())
        }
    }

    /// `sum_sigma p(sigma) O(sigma)`.
    pub fn expectation<F: Fn(usize) -> f64>(&self, observable: F) -> Result<f64> {
        let mut acc = 0.0;
        for (state, &p) in self.probabilities.iter().enumerate() {
            let v = observable(state);
            if !v.is_finite() {
                return Err(Error::NonFinite("observable"));
            }
            acc += p * v;
        }
        Ok(acc)
    }

    /// Expectation of a function given as a table over configurations.
    pub fn mean_of(&self, values: &[f64]) -> f64 {
        self.probabilities
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for (state, &p) in self.probabilities.iter().enumerate() {
            for (x, mx) in m.iter_mut().enumerate() {
                *mx += p * spin(state, x);
            }
        }
        m
    }

    /// `E(sigma_x sigma_y)`.
    pub fn two_point(&self) -> Result<DMatrix<f64>> {
        self.require_matrix_cap()?;
        Ok(self.second_moment(&vec![0.0; self.n]))
    }

    /// Truncated two-point function `E(sigma_x sigma_y) - E(sigma_x)E(sigma_y)`,
    /// accumulated in centred form for accuracy near saturation.
    pub fn truncated_correlation(&self) -> Result<CorrelationMatrix> {
        self.require_matrix_cap()?;
        let m = self.magnetizations();
        Ok(CorrelationMatrix(self.second_moment(&m)))
    }

    fn second_moment(&self, centre: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        let mut s = DVector::zeros(n);
        for (state, &p) in self.probabilities.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for x in 0..n {
                s[x] = spin(state, x) - centre[x];
            }
            out.syger(p, &s, &s, 1.0);
        }
        out.fill_upper_triangle_with_lower_triangle();
        out
    }

    /// Row sums `sum_y E(sigma_x sigma_y) = E(sigma_x M)`, in `O(2^n n)`.
    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.n;
        let mut rows = vec![0.0; n];
        for (state, &p) in self.probabilities.iter().enumerate() {
            let weight = p * magnetization(state, n) as f64;
            for (x, r) in rows.iter_mut().enumerate() {
                *r += weight * spin(state, x);
            }
        }
        rows
    }
}

fn gray_code_log_weights(a: &DMatrix<f64>, t: f64, field: &[f64]) -> Vec<f64> {
    let n = field.len();
    let total = 1usize << n;
    let block_bits = BLOCK_BITS.min(n);
    let block = 1usize << block_bits;
    let diag: f64 = (0..n).map(|i| a[(i, i)]).sum();

    let blocks: Vec<(usize, Vec<f64>)> = (0..total / block)
        .into_par_iter()
        .map(|c| {
            let start = c * block;
            let first = start ^ (start >> 1);
            let mut sigma: Vec<f64> = (0..n).map(|x| spin(first, x)).collect();
            // off-diagonal local fields sum_{z != y} A_yz sigma_z
            let mut local: Vec<f64> = (0..n)
                .map(|y| {
                    (0..n)
                        .filter(|&z| z != y)
                        .map(|z| a[(y, z)] * sigma[z])
                        .sum()
                })
                .collect();
            let mut quad: f64 = diag + (0..n).map(|y| sigma[y] * local[y]).sum::<f64>();
            let mut linear: f64 = (0..n).map(|y| field[y] * sigma[y]).sum();

            let mut out = vec![0.0; block];
            let mut state = first;
            out[state & (block - 1)] = -0.5 * t * quad + linear;
            for k in start + 1..start + block {
                let j = k.trailing_zeros() as usize;
                let old = sigma[j];
                quad -= 4.0 * old * local[j];
                linear -= 2.0 * field[j] * old;
                for y in 0..n {
                    if y != j {
                        local[y] -= 2.0 * a[(y, j)] * old;
                    }
                }
                sigma[j] = -old;
                state ^= 1 << j;
                out[state & (block - 1)] = -0.5 * t * quad + linear;
            }
            (first >> block_bits, out)
        })
        .collect();

    let mut weights = vec![0.0; total];
    for (chunk, values) in blocks {
        weights[chunk * block..(chunk + 1) * block].copy_from_slice(&values);
    }
    weights
}

/// Truncated correlation matrix `Sigma_t(f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix(pub DMatrix<f64>);

impl CorrelationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Smallest entry with its position.
    pub fn min_entry(&self) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..self.0.nrows() {
            for j in 0..self.0.ncols() {
                if self.0[(i, j)] < best.0 {
                    best = (self.0[(i, j)], i, j);
                }
            }
        }
        best
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::max_eigenvalue(&self.0).max(0.0)
    }
}

pub fn build_ensemble(coupling: &CouplingMatrix, t: f64, field: &[f64]) -> Result<ExactEnsemble> {
    ExactEnsemble::new(coupling, t, field)
}

pub fn truncated_correlation(
    coupling: &CouplingMatrix,
    t: f64,
    field: &[f64],
) -> Result<CorrelationMatrix> {
    check_matrix_cap(coupling.dim(), MATRIX_CAP)?;
    ExactEnsemble::new(coupling, t, field)?.truncated_correlation()
}

/// Zero-field row sums with the maximising site.
#[derive(Clone, Debug, PartialEq)]
pub struct Susceptibility {
    pub value: f64,
    pub worst_site: usize,
    pub row_sums: Vec<f64>,
}

pub fn susceptibility_rows(coupling: &CouplingMatrix, t: f64) -> Result<Susceptibility> {
    susceptibility_rows_with_caps(coupling, t, EnumerationCaps::default())
}

pub fn susceptibility_rows_with_caps(
    coupling: &CouplingMatrix,
    t: f64,
    caps: EnumerationCaps,
) -> Result<Susceptibility> {
    let zero = vec![0.0; coupling.dim()];
    let rows = ExactEnsemble::with_caps(coupling, t, &zero, caps)?.row_sums();
    let (worst_site, value) = rows
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    Ok(Susceptibility {
        value,
        worst_site,
        row_sums: rows,
    })
}

/// `chi_t = max_x sum_y E_{t,0}(sigma_x sigma_y)`.
pub fn susceptibility(coupling: &CouplingMatrix, t: f64) -> Result<f64> {
    Ok(susceptibility_rows(coupling, t)?.value)
}

/// Spectral radius of the zero-field two-point matrix.
pub fn two_point_spectral_radius(coupling: &CouplingMatrix, t: f64) -> Result<f64> {
    check_matrix_cap(coupling.dim(), MATRIX_CAP)?;
    let zero = vec![0.0; coupling.dim()];
    let m = ExactEnsemble::new(coupling, t, &zero)?.two_point()?;
    linalg::spectral_radius(&m)
}

fn check_matrix_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::TooLarge { n, cap })
    } else {
        Ok(())
    }
}
