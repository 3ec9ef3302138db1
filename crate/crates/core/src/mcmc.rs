//! Heat-bath Glauber sampler for lattices beyond enumeration.
//!
//! Chains use a systematic scan and run in parallel, each on its own random
//! stream. The susceptibility estimator averages
//! `1 + tanh(l_x) (M - sigma_x)`, with `l_x` the local field at `x` and `M`
//! the magnetisation, over a symmetry orbit of sites. It has the same mean
//! as `sigma_x M` and a much smaller variance at high temperature.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{lsi_bound_with, meanfield_corollary, BoundSettings, FnChi};
use crate::model::{build_coupling, Lattice, ModelSpec};
use crate::report::fmt_f64;
use crate::rng::{self, StreamRng};

/// Flag threshold for a chain mean against the pooled mean, in units of the
/// chain's own standard error.
pub const DISAGREEMENT_SIGMAS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub lattice: Lattice,
    /// Raw coupling strength `J`.
    pub coupling: f64,
    /// Inverse temperature with respect to the normalised matrix.
    pub beta: f64,
    pub field: Vec<f64>,
    /// Total sweeps per chain, burn-in included.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Record every `thin`-th sweep after burn-in.
    pub thin: usize,
    pub chains: usize,
    /// Batches per chain for batch-means standard errors.
    pub batches: usize,
    pub seed: u64,
}

impl ChainConfig {
    /// Zero field, 10000 sweeps with 1000 burn-in, 4 chains of 50 batches.
    pub fn new(lattice: Lattice, beta: f64, seed: u64) -> Self {
        let n = lattice.sites();
        ChainConfig {
            lattice,
            coupling: 1.0,
            beta,
            field: vec![0.0; n],
            sweeps: 10_000,
            burn_in: 1_000,
            thin: 1,
            chains: 4,
            batches: 50,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.sweeps <= self.burn_in {
            return bad("sweeps must exceed burn-in");
        }
        if self.chains < 2 {
            return bad("at least two chains are needed");
        }
        if self.thin == 0 || self.batches < 2 {
            return bad("thin >= 1 and batches >= 2 required");
        }
        if self.recorded() < self.batches {
            return bad("fewer recorded sweeps than batches");
        }
        if self.field.len() != self.lattice.sites() {
            return Err(Error::DimensionMismatch {
                expected: self.lattice.sites(),
                found: self.field.len(),
            });
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be finite and nonnegative");
        }
        Ok(())
    }

    /// Recorded samples per chain.
    pub fn recorded(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// Neighbour lists carrying `-t A_xy >= 0`, plus the field.
#[derive(Clone, Debug)]
pub struct LocalFields {
    neighbours: Vec<Vec<(usize, f64)>>,
    field: Vec<f64>,
}

impl LocalFields {
    pub fn new(config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        let spec = ModelSpec::new(config.lattice.clone(), config.coupling, config.beta);
        let a = build_coupling(&spec)?;
        let neighbours = a
            .neighbours()
            .into_iter()
            .map(|row| row.into_iter().map(|(y, v)| (y, -config.beta * v)).collect())
            .collect();
        Ok(LocalFields {
            neighbours,
            field: config.field.clone(),
        })
    }

    pub fn sites(&self) -> usize {
        self.field.len()
    }

    /// `l_x = -t sum_{y != x} A_xy sigma_y + h_x`.
    #[inline]
    pub fn local(&self, state: &[i8], x: usize) -> f64 {
        self.field[x]
            + self.neighbours[x]
                .iter()
                .map(|&(y, w)| w * state[y] as f64)
                .sum::<f64>()
    }
}

/// One systematic-scan sweep; site `x` becomes `+1` with probability
/// `1 / (1 + exp(-2 l_x))`.
pub fn heat_bath_sweep(state: &mut [i8], fields: &LocalFields, rng: &mut StreamRng) {
    for x in 0..state.len() {
        let l = fields.local(state, x);
        let p = 1.0 / (1.0 + (-2.0 * l).exp());
        state[x] = if rng.random::<f64>() < p { 1 } else { -1 };
    }
}

fn random_state(n: usize, rng: &mut StreamRng) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Per-sweep values of the row-sum estimator for every orbit.
fn run_chain(fields: &LocalFields, orbits: &[Vec<usize>], sweeps: usize, burn_in: usize, thin: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let n = fields.sites();
    let mut state = random_state(n, rng);
    for _ in 0..burn_in {
        heat_bath_sweep(&mut state, fields, rng);
    }
    let mut out = vec![Vec::with_capacity((sweeps - burn_in) / thin); orbits.len()];
    for s in 0..sweeps - burn_in {
        heat_bath_sweep(&mut state, fields, rng);
        if (s + 1) % thin != 0 {
            continue;
        }
        let m: f64 = state.iter().map(|&v| v as f64).sum();
        for (k, orbit) in orbits.iter().enumerate() {
            let y: f64 = orbit
                .iter()
                .map(|&x| 1.0 + fields.local(&state, x).tanh() * (m - state[x] as f64))
                .sum::<f64>()
                / orbit.len() as f64;
            out[k].push(y);
        }
    }
    out
}

fn batch_means(values: &[f64], batches: usize) -> Vec<f64> {
    let size = values.len() / batches;
    (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect()
}

fn mean_and_se(batches: &[f64]) -> (f64, f64) {
    let k = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / k;
    let var = batches.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityEstimate {
    pub chi: f64,
    pub se: f64,
    /// Sites of the orbit whose row sum is reported.
    pub orbit: Vec<usize>,
    /// Pilot estimates of every orbit's row sum, in orbit order.
    pub pilot_row_sums: Vec<f64>,
    pub chain_means: Vec<f64>,
    pub chain_ses: Vec<f64>,
    pub samples_per_chain: usize,
    /// Set when a chain mean is more than five of its standard errors away
    /// from the pooled mean.
    pub flagged: bool,
}

/// Estimates `chi = max_x sum_y E(sigma_x sigma_y)` at zero field.
///
/// Sites are grouped into symmetry orbits of the lattice; the orbit with the
/// largest row sum is chosen by a shorter pilot run on a separate stream, so
/// the reported value is not biased upward by the selection. Chains use
/// streams `0..chains`; the pilot uses stream `chains`.
pub fn estimate_susceptibility(config: &ChainConfig) -> Result<SusceptibilityEstimate> {
    if config.field.iter().any(|&h| h != 0.0) {
        return Err(Error::InvalidParameter("susceptibility is defined at zero field".into()));
    }
    let fields = LocalFields::new(config)?;
    let orbits = config.lattice.site_orbits();

    let (orbit_index, pilot_row_sums) = if orbits.len() == 1 {
        (0, Vec::new())
    } else {
        let pilot_sweeps = config.burn_in + (config.sweeps - config.burn_in).div_ceil(4);
        let mut r = rng::stream(config.seed, config.chains as u64);
        let values = run_chain(&fields, &orbits, pilot_sweeps, config.burn_in, config.thin, &mut r);
        let sums: Vec<f64> = values
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64)
            .collect();
        let best = sums
            .iter()
            .enumerate()
            .fold(0, |b, (k, &v)| if v > sums[b] { k } else { b });
        (best, sums)
    };
    let orbit = orbits[orbit_index].clone();
    let chosen = std::slice::from_ref(&orbit);

    let per_chain: Vec<Vec<f64>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(config.seed, c as u64);
            let values = run_chain(&fields, chosen, config.sweeps, config.burn_in, config.thin, &mut r);
            batch_means(&values[0], config.batches)
        })
        .collect();
    let pooled: Vec<f64> = per_chain.iter().flatten().cloned().collect();
    let (chi, se) = mean_and_se(&pooled);
    let (chain_means, chain_ses): (Vec<f64>, Vec<f64>) = per_chain.iter().map(|b| mean_and_se(b)).unzip();
    let flagged = chain_means
        .iter()
        .zip(&chain_ses)
        .any(|(m, s)| (m - chi).abs() > DISAGREEMENT_SIGMAS * s.max(f64::MIN_POSITIVE));
    Ok(SusceptibilityEstimate {
        chi,
        se,
        orbit,
        pilot_row_sums,
        chain_means,
        chain_ses,
        samples_per_chain: config.recorded(),
        flagged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub beta: f64,
    pub chi_hat: f64,
    pub chi_se: f64,
    /// Bound evaluated with the measured `chi`, interpolated linearly in `beta`.
    pub bound_value: f64,
    /// Finite-volume mean-field closed form, when `beta <= beta_c`.
    pub corollary_value: Option<f64>,
    pub flagged: bool,
}

impl ScalingRow {
    pub const CSV_HEADER: &'static str = "L,beta,chi_hat,chi_se,bound_value,corollary_value";

    pub fn csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.l,
            fmt_f64(self.beta),
            fmt_f64(self.chi_hat),
            fmt_f64(self.chi_se),
            fmt_f64(self.bound_value),
            self.corollary_value.map_or(String::new(), fmt_f64)
        )
    }
}

/// Linear side length of a lattice: the width for grids, the site count
/// otherwise.
pub fn side_length(lattice: &Lattice) -> usize {
    match lattice {
        Lattice::Grid2d { width, .. } => *width,
        other => other.sites(),
    }
}

/// Exploratory table comparing the measured `chi` with the mean-field
/// prediction `D / (beta_c - beta + L^{-2})`. `betas` must be increasing;
/// `template` supplies every chain setting except lattice, `beta` and field.
pub fn scaling_study(
    family: &[Lattice],
    betas: &[f64],
    d: f64,
    beta_c: f64,
    template: &ChainConfig,
) -> Result<Vec<ScalingRow>> {
    if betas.is_empty() || betas.windows(2).any(|w| w[1] <= w[0]) || betas[0] < 0.0 {
        return Err(Error::InvalidParameter("betas must be nonnegative and increasing".into()));
    }
    let mut rows = Vec::new();
    for (li, lattice) in family.iter().enumerate() {
        let l = side_length(lattice);
        let mut measured = Vec::with_capacity(betas.len());
        for (bi, &beta) in betas.iter().enumerate() {
            let mut config = template.clone();
            config.lattice = lattice.clone();
            config.field = vec![0.0; lattice.sites()];
            config.beta = beta;
            config.seed = template.seed ^ rng::substream(li as u64, bi as u64);
            measured.push(estimate_susceptibility(&config)?);
        }
        let knots: Vec<(f64, f64)> = betas.iter().cloned().zip(measured.iter().map(|m| m.chi)).collect();
        let interp = FnChi {
            f: |t: f64| interpolate(&knots, t),
            name: "mcmc".into(),
        };
        for (&beta, m) in betas.iter().zip(&measured) {
            let bound = lsi_bound_with(&interp, beta, &BoundSettings::default())?;
            let corollary = if beta <= beta_c {
                meanfield_corollary(d, beta_c, beta, Some(l as f64)).ok()
            } else {
                None
            };
            rows.push(ScalingRow {
                l,
                beta,
                chi_hat: m.chi,
                chi_se: m.se,
                bound_value: bound.bound_upper,
                corollary_value: corollary,
                flagged: m.flagged,
            });
        }
    }
    Ok(rows)
}

/// Piecewise-linear interpolation, constant extrapolation below the first
/// knot (`chi_0 = 1` is exact when the first knot is not at zero).
fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    if t <= knots[0].0 {
        return if knots[0].0 > 0.0 { 1.0 + (knots[0].1 - 1.0) * t / knots[0].0 } else { knots[0].1 };
    }
    for w in knots.windows(2) {
        let ((t0, y0), (t1, y1)) = (w[0], w[1]);
        if t <= t1 {
            return y0 + (y1 - y0) * (t - t0) / (t1 - t0);
        }
    }
    knots[knots.len() - 1].1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{susceptibility, ExactEnsemble};

    fn short(lattice: Lattice, beta: f64, seed: u64) -> ChainConfig {
        ChainConfig {
            sweeps: 6_000,
            burn_in: 500,
            ..ChainConfig::new(lattice, beta, seed)
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ChainConfig::new(Lattice::path(3), 0.1, 0);
        assert!(c.validate().is_ok());
        c.chains = 1;
        assert!(c.validate().is_err());
        let mut c = ChainConfig::new(Lattice::path(3), 0.1, 0);
        c.burn_in = c.sweeps;
        assert!(c.validate().is_err());
    }

    #[test]
    fn infinite_temperature_marginals() {
        let mut c = ChainConfig::new(Lattice::path(3), 0.0, 1);
        c.field = vec![0.7, 0.0, -0.3];
        let f = LocalFields::new(&c).unwrap();
        let mut r = rng::stream(1, 0);
        let mut state = vec![1i8; 3];
        let sweeps = 40_000;
        let mut plus = [0usize; 3];
        for _ in 0..sweeps {
            heat_bath_sweep(&mut state, &f, &mut r);
            for x in 0..3 {
                plus[x] += (state[x] == 1) as usize;
            }
        }
        for x in 0..3 {
            let h: f64 = c.field[x];
            let p = h.exp() / (2.0 * h.cosh());
            let se = (p * (1.0 - p) / sweeps as f64).sqrt();
            assert!((plus[x] as f64 / sweeps as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn zero_beta_gives_unit_chi() {
        let est = estimate_susceptibility(&short(Lattice::grid(3, 3), 0.0, 2)).unwrap();
        assert_eq!(est.chi, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn matches_exact_on_small_models() {
        for (lattice, beta) in [(Lattice::grid(3, 3), 0.3), (Lattice::complete(6), 0.5), (Lattice::cycle(6), 0.8)] {
            let est = estimate_susceptibility(&short(lattice.clone(), beta, 3)).unwrap();
            let a = build_coupling(&ModelSpec::new(lattice, 1.0, beta)).unwrap();
            let exact = susceptibility(&a, beta).unwrap();
            assert!((est.chi - exact).abs() < 4.0 * est.se, "{} vs {exact} ± {}", est.chi, est.se);
        }
    }

    #[test]
    fn two_point_function_on_grid() {
        let lattice = Lattice::grid(3, 3);
        let beta = 0.3;
        let c = short(lattice.clone(), beta, 4);
        let f = LocalFields::new(&c).unwrap();
        let mut r = rng::stream(4, 0);
        let mut state = vec![1i8; 9];
        for _ in 0..500 {
            heat_bath_sweep(&mut state, &f, &mut r);
        }
        let n = 40_000;
        let batches = 40;
        let mut sums = vec![0.0; batches];
        for s in 0..n {
            heat_bath_sweep(&mut state, &f, &mut r);
            sums[s / (n / batches)] += (state[0] * state[8]) as f64;
        }
        let means: Vec<f64> = sums.iter().map(|v| v / (n / batches) as f64).collect();
        let (m, se) = mean_and_se(&means);
        let a = build_coupling(&ModelSpec::new(lattice, 1.0, beta)).unwrap();
        let exact = ExactEnsemble::new(&a, beta, &[0.0; 9]).unwrap().two_point().unwrap()[(0, 8)];
        assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact} ± {se}");
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let c = short(Lattice::cycle(5), 0.4, 9);
        assert_eq!(estimate_susceptibility(&c).unwrap(), estimate_susceptibility(&c).unwrap());
    }

    #[test]
    fn scaling_rows() {
        let template = ChainConfig {
            sweeps: 2_000,
            burn_in: 200,
            ..ChainConfig::new(Lattice::path(2), 0.0, 5)
        };
        let rows = scaling_study(&[Lattice::grid(3, 3)], &[0.0, 0.2], 1.0, 1.0, &template).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].chi_hat, 1.0);
        assert_eq!(rows[0].bound_value, 0.5);
        assert_eq!(rows[0].corollary_value, Some(0.5));
        assert!(rows[1].csv_record().starts_with("3,2.0000000000000001e-1,"));
    }

    #[test]
    fn interpolation() {
        let k = [(0.2, 1.4), (0.4, 2.0)];
        assert!((interpolate(&k, 0.1) - 1.2).abs() < 1e-15);
        assert!((interpolate(&k, 0.3) - 1.7).abs() < 1e-15);
        assert_eq!(interpolate(&k, 1.0), 2.0);
    }
}
