//! Glauber dynamics on `{+-1}^n` with the rates
//! `c_x(sigma) = (1 + mu(sigma^x) / mu(sigma)) / 2`.
//!
//! These are the single-flip rates with `mu(sigma) c_x(sigma) =
//! (mu(sigma) + mu(sigma^x)) / 2`, so the quadratic form of the generator is
//! exactly `D(F) = 1/2 sum_x E[(F(sigma) - F(sigma^x))^2]`.

mod decay;
mod optimize;
mod spectrum;

pub use decay::{entropy_decay_trace, DecaySettings};
pub use optimize::{estimate_inverse_lsi, LsiEstimate, OptimizerSettings, StartKind};
pub use spectrum::{spectral_gap, spectral_gap_with_vector, GapMethod, SpectralGap, DENSE_GAP_MAX};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exact::ExactEnsemble;
use crate::model::CouplingMatrix;

/// Sparse reversible rate matrix: `n` off-diagonal entries per row.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    n: usize,
    ensemble: ExactEnsemble,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn from_ensemble(ensemble: ExactEnsemble) -> Result<Self> {
        ensemble.require_matrix_cap()?;
        let n = ensemble.sites();
        let states = ensemble.states();
        let lw = ensemble.log_weights();
        let mut rates = vec![0.0; states * n];
        let mut exit = vec![0.0; states];
        for s in 0..states {
            let mut total = 0.0;
            for x in 0..n {
                let r = 0.5 * (1.0 + (lw[s ^ (1 << x)] - lw[s]).exp());
                rates[s * n + x] = r;
                total += r;
            }
            exit[s] = total;
        }
        Ok(GeneratorMatrix {
            n,
            ensemble,
            rates,
            exit,
        })
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> usize {
        1 << self.n
    }

    pub fn ensemble(&self) -> &ExactEnsemble {
        &self.ensemble
    }

    pub fn stationary(&self) -> &[f64] {
        self.ensemble.probabilities()
    }

    /// Rate of flipping site `x` from configuration `state`.
    #[inline]
    pub fn rate(&self, state: usize, x: usize) -> f64 {
        self.rates[state * self.n + x]
    }

    /// Total exit rate of `state` (minus the diagonal entry).
    #[inline]
    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit[state]
    }

    /// `out = L f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (s, o) in out.iter_mut().enumerate() {
            let fs = f[s];
            let mut acc = 0.0;
            for x in 0..n {
                acc += self.rates[s * n + x] * (f[s ^ (1 << x)] - fs);
            }
            *o = acc;
        }
    }

    /// `1/2 sum_x E_mu[(f(sigma) - f(sigma^x))^2]`.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let mu = self.stationary();
        let mut acc = 0.0;
        for (s, &p) in mu.iter().enumerate() {
            let mut local = 0.0;
            for x in 0..self.n {
                let d = f[s] - f[s ^ (1 << x)];
                local += d * d;
            }
            acc += p * local;
        }
        0.5 * acc
    }

    /// `-<f, L f>_mu`, which must agree with [`Self::dirichlet_form`].
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let mut lf = vec![0.0; f.len()];
        self.apply(f, &mut lf);
        -self
            .stationary()
            .iter()
            .zip(f)
            .zip(&lf)
            .map(|((p, a), b)| p * a * b)
            .sum::<f64>()
    }

    /// Largest relative violation of `mu(s) L(s, s^x) = mu(s^x) L(s^x, s)`.
    pub fn detailed_balance_violation(&self) -> f64 {
        let mu = self.stationary();
        let mut worst: f64 = 0.0;
        for s in 0..self.states() {
            for x in 0..self.n {
                let t = s ^ (1 << x);
                let a = mu[s] * self.rate(s, x);
                let b = mu[t] * self.rate(t, x);
                let scale = a.abs().max(b.abs());
                if scale > 0.0 {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
        worst
    }

    /// Dense copy of `L` for small systems and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.states();
        let mut l = DMatrix::zeros(m, m);
        for s in 0..m {
            l[(s, s)] = -self.exit[s];
            for x in 0..self.n {
                l[(s, s ^ (1 << x))] = self.rate(s, x);
            }
        }
        l
    }
}

pub fn build_generator(coupling: &CouplingMatrix, beta: f64, field: &[f64]) -> Result<GeneratorMatrix> {
    let ensemble = ExactEnsemble::new(coupling, beta, field)?;
    GeneratorMatrix::from_ensemble(ensemble)
}

/// Nonnegative function on configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityFunction(Vec<f64>);

impl DensityFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("density"));
            }
            if value < 0.0 {
                return Err(Error::NegativeDensity { index, value });
            }
        }
        Ok(DensityFunction(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self, mu: &[f64]) -> f64 {
        mu.iter().zip(&self.0).map(|(p, v)| p * v).sum()
    }

    /// Pointwise square root, the argument of the Dirichlet form in the LSI.
    pub fn sqrt(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.sqrt()).collect()
    }
}

/// `r ln r - r + 1`, accurate for `r` near one.
pub(crate) fn relative_entropy_density(r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let d = r - 1.0;
    if d.abs() < 0.05 {
        // sum_{k>=2} (-d)^k / (k (k - 1))
        let mut acc = 0.0;
        let mut power = d * d;
        for k in 2..40 {
            let term = power / (k * (k - 1)) as f64;
            acc += if k % 2 == 0 { term } else { -term };
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
            power *= d;
        }
        acc
    } else {
        r * r.ln() - d
    }
}

/// `Ent_mu(F) = E Phi(F) - Phi(E F)` with `Phi(x) = x log x` and `0 log 0 = 0`.
pub fn entropy(mu: &[f64], f: &[f64]) -> Result<f64> {
    if mu.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: f.len(),
        });
    }
    for (index, &value) in f.iter().enumerate() {
        if value < 0.0 {
            return Err(Error::NegativeDensity { index, value });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("density"));
        }
    }
    let mean: f64 = mu.iter().zip(f).map(|(p, v)| p * v).sum();
    if mean <= 0.0 {
        return Err(Error::InvalidParameter("entropy needs a positive mean".into()));
    }
    // E[F log(F/m) - F + m] = Ent, each term nonnegative.
    let ent = mean
        * mu
            .iter()
            .zip(f)
            .map(|(p, v)| p * relative_entropy_density(v / mean))
            .sum::<f64>();
    Ok(ent.max(0.0))
}

/// `Ent(F) / (2 D(sqrt F))`, a lower bound on the inverse log-Sobolev constant.
pub fn lsi_ratio(generator: &GeneratorMatrix, f: &DensityFunction) -> Result<f64> {
    let ent = entropy(generator.stationary(), f.values())?;
    let dirichlet = generator.dirichlet_form(&f.sqrt());
    if dirichlet == 0.0 {
        return if ent == 0.0 {
            Err(Error::ConstantDensity)
        } else {
            Err(Error::DegenerateRatio { entropy: ent })
        };
    }
    Ok(ent / (2.0 * dirichlet))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::spin;
    use crate::model::{build_coupling, Lattice, ModelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn generator(lattice: Lattice, beta: f64, field: Vec<f64>) -> GeneratorMatrix {
        let a = build_coupling(&ModelSpec::new(lattice, 1.0, beta)).unwrap();
        build_generator(&a, beta, &field).unwrap()
    }

    #[test]
    fn symmetric_two_state_chain() {
        let g = generator(Lattice::path(1), 0.0, vec![0.0]);
        let l = g.to_dense();
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        assert!((l - expected).abs().max() < 1e-15);
    }

    #[test]
    fn single_site_rates_in_field() {
        let f = 0.7;
        let g = generator(Lattice::path(1), 0.4, vec![f]);
        // state 1 is +1: flipping costs dH = 2f
        assert_relative_eq!(g.rate(1, 0), 0.5 * (1.0 + (-2.0 * f).exp()), epsilon = 1e-14);
        assert_relative_eq!(g.rate(0, 0), 0.5 * (1.0 + (2.0 * f).exp()), epsilon = 1e-14);
    }

    #[test]
    fn rows_sum_to_zero_and_balance_holds() {
        let g = generator(Lattice::cycle(4), 0.8, vec![0.3, -0.1, 0.0, 0.5]);
        let l = g.to_dense();
        for row in l.row_iter() {
            assert!(row.sum().abs() < 1e-12);
        }
        assert!(g.detailed_balance_violation() < 1e-10);
        for s in 0..g.states() {
            for x in 0..4 {
                assert!(g.rate(s, x) > 0.5);
            }
        }
    }

    #[test]
    fn rate_identity_reproduces_dirichlet_form() {
        // mu(s) c_x(s) = (mu(s) + mu(s^x)) / 2 for every pair
        let g = generator(Lattice::path(3), 1.1, vec![0.2, -0.6, 0.9]);
        let mu = g.stationary();
        for s in 0..g.states() {
            for x in 0..3 {
                let t = s ^ (1 << x);
                assert_relative_eq!(mu[s] * g.rate(s, x), 0.5 * (mu[s] + mu[t]), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_examples() {
        let g = generator(Lattice::path(1), 0.0, vec![0.0]);
        assert_eq!(g.dirichlet_form(&[3.0, 3.0]), 0.0);
        assert_relative_eq!(g.dirichlet_form(&[0.0, 1.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let mu = [0.5, 0.5];
        assert_eq!(entropy(&mu, &[2.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(entropy(&mu, &[0.0, 2.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(matches!(entropy(&mu, &[-1.0, 2.0]), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let g = generator(Lattice::path(2), 0.5, vec![0.1, 0.2]);
        let f = DensityFunction::new(vec![0.3, 1.0, 2.0, 0.1]).unwrap();
        let scaled = DensityFunction::new(f.values().iter().map(|v| 7.0 * v).collect()).unwrap();
        assert_relative_eq!(lsi_ratio(&g, &f).unwrap(), lsi_ratio(&g, &scaled).unwrap(), max_relative = 1e-13);
        let constant = DensityFunction::new(vec![1.0; 4]).unwrap();
        assert!(matches!(lsi_ratio(&g, &constant), Err(Error::ConstantDensity)));
    }

    #[test]
    fn linearised_ratio_tends_to_half() {
        let g = generator(Lattice::path(1), 0.0, vec![0.0]);
        for eps in [1e-2, 1e-3, 1e-4] {
            let f = DensityFunction::new(vec![1.0 - eps, 1.0 + eps]).unwrap();
            let r = lsi_ratio(&g, &f).unwrap();
            assert!(r <= 0.5 && r > 0.5 - eps, "{r}");
        }
    }

    #[test]
    fn indicator_on_small_support_is_finite() {
        let g = generator(Lattice::cycle(3), 0.3, vec![0.0; 3]);
        let f: Vec<f64> = (0..8).map(|s| if s == 7 { 1.0 } else { 0.0 }).collect();
        let r = lsi_ratio(&g, &DensityFunction::new(f).unwrap()).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn magnetisation_observable_via_generator() {
        // L sigma_x at beta = 0: each spin relaxes at rate 2
        let g = generator(Lattice::path(2), 0.0, vec![0.0; 2]);
        let f: Vec<f64> = (0..4).map(|s| spin(s, 0)).collect();
        let mut out = vec![0.0; 4];
        g.apply(&f, &mut out);
        for s in 0..4 {
            assert_relative_eq!(out[s], -2.0 * f[s], epsilon = 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dirichlet_form_equals_generator_quadratic_form(
            values in proptest::collection::vec(-3.0f64..3.0, 8),
            field in proptest::collection::vec(-1.0f64..1.0, 3),
            beta in 0.0f64..2.0,
        ) {
            let g = generator(Lattice::cycle(3), beta, field);
            let d = g.dirichlet_form(&values);
            let q = g.quadratic_form(&values);
            prop_assert!((d - q).abs() <= 1e-10 * d.abs().max(1e-300));
        }

        #[test]
        fn entropy_is_nonnegative(values in proptest::collection::vec(0.0f64..5.0, 4)) {
            prop_assume!(values.iter().any(|v| *v > 0.0));
            let mu = [0.1, 0.2, 0.3, 0.4];
            prop_assert!(entropy(&mu, &values).unwrap() >= 0.0);
        }
    }
}
