//! Batch checks of the correlation inequalities behind the bound: FKG
//! positivity of `Sigma_t(f)`, the field monotonicity `Sigma_t(f) <= Sigma_t(0)`
//! entrywise, the spectral chain `||Sigma_t(f)|| <= ||Sigma_t(0)|| <= chi_t`,
//! and the bound itself against optimised entropy ratios.
//!
//! Violations are reported, never thrown. A slack is positive when the
//! inequality holds; slacks in `[-tol, 0)` count as rounding noise.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exact::{susceptibility, ExactEnsemble};
use crate::flow::{lsi_bound, BoundSettings};
use crate::glauber::{build_generator, estimate_inverse_lsi, OptimizerSettings};
use crate::linalg;
use crate::model::CouplingMatrix;
use crate::rng;

/// Default tolerance for all checks.
pub const TOLERANCE: f64 = 1e-10;

/// Relative spectral gap below which the top eigenvalue counts as repeated
/// and the Perron vector sign check is skipped.
const SIMPLE_EIGENVALUE_GAP: f64 = 1e-8;

/// Deterministic extremes (zero and axis spikes) followed by isotropic
/// Gaussian fields whose scale cycles through `scales`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSampler {
    pub scales: Vec<f64>,
    pub spikes: Vec<f64>,
    pub include_zero: bool,
}

impl Default for FieldSampler {
    fn default() -> Self {
        FieldSampler {
            scales: vec![0.1, 1.0, 10.0],
            spikes: vec![10.0, -10.0, 50.0, -50.0],
            include_zero: true,
        }
    }
}

impl FieldSampler {
    pub fn extremes(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        if self.include_zero {
            out.push(vec![0.0; n]);
        }
        for &s in &self.spikes {
            for x in 0..n {
                let mut f = vec![0.0; n];
                f[x] = s;
                out.push(f);
            }
        }
        out
    }

    /// Random field number `index`, drawn from stream `index` of `seed`.
    pub fn gaussian(&self, n: usize, index: usize, seed: u64) -> Vec<f64> {
        let scale = if self.scales.is_empty() {
            1.0
        } else {
            self.scales[index % self.scales.len()]
        };
        let mut r = rng::stream(seed, index as u64);
        (0..n).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect()
    }

    /// The extremes followed by `count` Gaussian fields.
    pub fn sample(&self, n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut out = self.extremes(n);
        out.extend((0..count).map(|i| self.gaussian(n, i, seed)));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub field: Vec<f64>,
    /// Matrix entry or eigenvector component responsible, if any.
    pub entry: Option<(usize, usize)>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub check: String,
    pub model: String,
    pub t: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub worst_slack: f64,
    pub worst_witness: Witness,
    /// Slacks below `-tolerance`.
    pub violations: usize,
    /// Slacks in `[-tolerance, 0)`.
    pub noise: usize,
}

impl ViolationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }
}

struct Outcome {
    slack: f64,
    entry: Option<(usize, usize)>,
    detail: &'static str,
}

fn run_check(
    check: &str,
    t: f64,
    fields: Vec<Vec<f64>>,
    eval: impl Fn(&[f64]) -> Result<Outcome> + Sync,
) -> Result<ViolationReport> {
    let outcomes: Vec<Outcome> = fields.par_iter().map(|f| eval(f)).collect::<Result<_>>()?;
    let mut worst = 0;
    let (mut violations, mut noise) = (0, 0);
    for (i, o) in outcomes.iter().enumerate() {
        if o.slack < -TOLERANCE {
            violations += 1;
        } else if o.slack < 0.0 {
            noise += 1;
        }
        if o.slack < outcomes[worst].slack {
            worst = i;
        }
    }
    let w = &outcomes[worst];
    Ok(ViolationReport {
        check: check.into(),
        model: String::new(),
        t,
        samples: fields.len(),
        tolerance: TOLERANCE,
        worst_slack: w.slack,
        worst_witness: Witness {
            field: fields[worst].clone(),
            entry: w.entry,
            detail: w.detail.into(),
        },
        violations,
        noise,
    })
}

fn covariance(coupling: &CouplingMatrix, t: f64, field: &[f64]) -> Result<DMatrix<f64>> {
    Ok(ExactEnsemble::new(coupling, t, field)?.truncated_correlation()?.into_inner())
}

fn min_entry(m: &DMatrix<f64>) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] < best.0 {
                best = (m[(i, j)], i, j);
            }
        }
    }
    best
}

/// `min_{x,y} Sigma_t(f)_{xy} >= 0`.
pub fn check_fkg(
    coupling: &CouplingMatrix,
    t: f64,
    sampler: &FieldSampler,
    count: usize,
    seed: u64,
) -> Result<ViolationReport> {
    let fields = sampler.sample(coupling.dim(), count, seed);
    run_check("fkg", t, fields, |f| {
        let (slack, i, j) = min_entry(&covariance(coupling, t, f)?);
        Ok(Outcome {
            slack,
            entry: Some((i, j)),
            detail: "min entry of Sigma_t(f)",
        })
    })
}

/// `Sigma_t(f)_{xy} <= Sigma_t(0)_{xy}` for all `x, y`.
pub fn check_field_monotonicity(
    coupling: &CouplingMatrix,
    t: f64,
    sampler: &FieldSampler,
    count: usize,
    seed: u64,
) -> Result<ViolationReport> {
    let zero = covariance(coupling, t, &vec![0.0; coupling.dim()])?;
    let fields = sampler.sample(coupling.dim(), count, seed);
    run_check("monotone", t, fields, |f| {
        let (slack, i, j) = min_entry(&(&zero - covariance(coupling, t, f)?));
        Ok(Outcome {
            slack,
            entry: Some((i, j)),
            detail: "min entry of Sigma_t(0) - Sigma_t(f)",
        })
    })
}

/// `||Sigma_t(f)|| <= ||Sigma_t(0)|| <= chi_t`, plus a nonnegative top
/// eigenvector of `Sigma_t(f)` whenever its top eigenvalue is simple.
pub fn check_pf_chain(
    coupling: &CouplingMatrix,
    t: f64,
    sampler: &FieldSampler,
    count: usize,
    seed: u64,
) -> Result<ViolationReport> {
    let zero_norm = linalg::max_eigenvalue(&covariance(coupling, t, &vec![0.0; coupling.dim()])?);
    let chi = susceptibility(coupling, t)?;
    let upper = chi - zero_norm;
    let fields = sampler.sample(coupling.dim(), count, seed);
    run_check("pf", t, fields, |f| {
        let sigma = covariance(coupling, t, f)?;
        let (values, vectors) = linalg::sorted_eigen(&sigma);
        let n = values.len();
        let top = values[n - 1];
        let mut outcome = Outcome {
            slack: zero_norm - top,
            entry: None,
            detail: "||Sigma_t(0)|| - ||Sigma_t(f)||",
        };
        if upper < outcome.slack {
            outcome = Outcome {
                slack: upper,
                entry: None,
                detail: "chi_t - ||Sigma_t(0)||",
            };
        }
        let simple = n == 1 || top - values[n - 2] > SIMPLE_EIGENVALUE_GAP * top.abs().max(1e-300);
        if simple {
            let v = vectors.column(n - 1);
            let sign = if v.sum() >= 0.0 { 1.0 } else { -1.0 };
            let (k, min) = v
                .iter()
                .map(|x| sign * x)
                .enumerate()
                .fold((0, f64::INFINITY), |b, (k, x)| if x < b.1 { (k, x) } else { b });
            if min < outcome.slack {
                outcome = Outcome {
                    slack: min,
                    entry: Some((k, k)),
                    detail: "min entry of the Perron vector of Sigma_t(f)",
                };
            }
        }
        Ok(outcome)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremEntry {
    pub beta: f64,
    pub field: Vec<f64>,
    pub best_ratio: f64,
    pub bound_upper: f64,
    /// `bound_upper - best_ratio`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub model: String,
    pub tolerance: f64,
    pub entries: Vec<TheoremEntry>,
    pub worst_slack: f64,
    pub violations: usize,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Tolerance of the theorem check.
pub const THEOREM_TOLERANCE: f64 = 1e-8;

/// For each `beta` the bound is computed once (it does not depend on `h`)
/// and compared with the best optimised ratio at `fields_per_beta` random
/// fields from `sampler` (field `j` at `beta_i` uses stream `substream(i, j)`).
pub fn check_theorem(
    coupling: &CouplingMatrix,
    betas: &[f64],
    sampler: &FieldSampler,
    fields_per_beta: usize,
    optimizer: &OptimizerSettings,
    bound: &BoundSettings,
    seed: u64,
) -> Result<TheoremReport> {
    let n = coupling.dim();
    let mut entries = Vec::new();
    for (i, &beta) in betas.iter().enumerate() {
        let upper = lsi_bound(coupling, beta, bound)?.bound_upper;
        let fields: Vec<Vec<f64>> = (0..fields_per_beta)
            .map(|j| sampler.gaussian(n, j, rng::substream(seed, i as u64)))
            .collect();
        let row: Vec<TheoremEntry> = fields
            .into_par_iter()
            .map(|field| {
                let g = build_generator(coupling, beta, &field)?;
                let best_ratio = estimate_inverse_lsi(&g, optimizer)?.best_ratio;
                Ok(TheoremEntry {
                    beta,
                    field,
                    best_ratio,
                    bound_upper: upper,
                    gap: upper - best_ratio,
                })
            })
            .collect::<Result<_>>()?;
        entries.extend(row);
    }
    let worst_slack = entries.iter().map(|e| e.gap).fold(f64::INFINITY, f64::min);
    let violations = entries.iter().filter(|e| e.gap < -THEOREM_TOLERANCE).count();
    Ok(TheoremReport {
        model: String::new(),
        tolerance: THEOREM_TOLERANCE,
        entries,
        worst_slack,
        violations,
    })
}
