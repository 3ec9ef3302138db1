use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactEnsemble;
use crate::flow::potential::RenormalizedPotential;
use crate::flow::schedule::CovarianceSchedule;
use crate::glauber::entropy;
use crate::rng;

/// Relative size below which a variance of `C_beta - C_t` counts as zero.
const DEGENERATE_VARIANCE: f64 = 1e-14;

/// Nodes and weights of the `order`-point Gauss–Hermite rule for the
/// standard normal distribution (weights sum to one).
///
/// Nodes come from the Jacobi matrix and are polished by Newton steps on the
/// orthonormal recurrence; weights use `1 / (n h_{n-1}(x)^2)`.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be positive".into()));
    }
    let n = order;
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().cloned().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (hn, hn1) = orthonormal_hermite(n, *x);
            let step = hn / ((n as f64).sqrt() * hn1);
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
        let (_, hn1) = orthonormal_hermite(n, *x);
        weights.push(1.0 / (n as f64 * hn1 * hn1));
    }
    // Symmetrise away rounding.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok((nodes, weights))
}

/// `(h_n(x), h_{n-1}(x))` with `h_k = He_k / sqrt(k!)`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Per-axis Gauss–Hermite order.
    pub order: usize,
    /// Order increment used for the convergence check.
    pub step: usize,
    /// Allowed difference between the two orders, relative to the scale of
    /// the checked quantity.
    pub tolerance: f64,
    /// Largest number of nondegenerate axes handled by the tensor rule.
    pub max_tensor_dim: usize,
    /// Sample count of the Monte Carlo fallback.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            order: 40,
            step: 10,
            tolerance: 1e-9,
            max_tensor_dim: 3,
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

impl QuadratureConfig {
    fn validate(&self) -> Result<()> {
        if self.order < 2 || self.step == 0 {
            return Err(Error::InvalidParameter("quadrature order >= 2 and step >= 1 required".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("quadrature tolerance must be positive".into()));
        }
        if self.mc_samples < 2 {
            return Err(Error::InvalidParameter("at least two Monte Carlo samples required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub t: f64,
    /// Exact value under `mu_{beta,h}`.
    pub exact: f64,
    /// Value assembled through the flow decomposition.
    pub decomposed: f64,
    pub residual: f64,
    pub scale: f64,
    /// `"gauss_hermite"` or `"monte_carlo"`.
    pub method: String,
    pub order: Option<usize>,
    /// Difference between the rules of order `k` and `k + step`.
    pub convergence_gap: Option<f64>,
    pub standard_error: Option<f64>,
    pub certified: bool,
}

/// A weighted point set for `phi ~ N(0, C_beta - C_t)`.
struct GaussianNodes {
    log_weights: Vec<f64>,
    points: Vec<Vec<f64>>,
}

fn gaussian_axes(schedule: &CovarianceSchedule, t: f64) -> Vec<(usize, f64)> {
    let ct = schedule.covariance_spectrum(t);
    let cb = schedule.covariance_spectrum(schedule.beta());
    let scale = cb.iter().cloned().fold(0.0, f64::max);
    ct.iter()
        .zip(&cb)
        .enumerate()
        .filter_map(|(i, (a, b))| {
            let g = b - a;
            (g > DEGENERATE_VARIANCE * scale).then_some((i, g))
        })
        .collect()
}

fn embed(schedule: &CovarianceSchedule, axes: &[(usize, f64)], z: &[f64]) -> Vec<f64> {
    let q = schedule.eigenvectors();
    let mut phi = vec![0.0; schedule.dim()];
    for ((i, g), zi) in axes.iter().zip(z) {
        let s = g.sqrt() * zi;
        for (x, p) in phi.iter_mut().enumerate() {
            *p += q[(x, *i)] * s;
        }
    }
    phi
}

fn tensor_nodes(schedule: &CovarianceSchedule, axes: &[(usize, f64)], order: usize) -> Result<GaussianNodes> {
    let (nodes, weights) = gauss_hermite(order)?;
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let m = axes.len();
    let count = order.pow(m as u32);
    let mut log_weights = Vec::with_capacity(count);
    let mut points = Vec::with_capacity(count);
    let mut z = vec![0.0; m];
    for mut idx in 0..count {
        let mut lw = 0.0;
        for zk in z.iter_mut() {
            let k = idx % order;
            idx /= order;
            *zk = nodes[k];
            lw += log_w[k];
        }
        if lw.is_finite() {
            log_weights.push(lw);
            points.push(embed(schedule, axes, &z));
        }
    }
    Ok(GaussianNodes { log_weights, points })
}

fn monte_carlo_nodes(schedule: &CovarianceSchedule, axes: &[(usize, f64)], samples: usize, seed: u64) -> GaussianNodes {
    let points = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let z: Vec<f64> = axes.iter().map(|_| r.sample(StandardNormal)).collect();
            embed(schedule, axes, &z)
        })
        .collect();
    GaussianNodes {
        log_weights: vec![0.0; samples],
        points,
    }
}

/// Weighted averages under `nu_{t,beta}` of the per-node quantities `f`.
/// Returns the normalised node weights and the per-node values.
fn integrate_nu<const K: usize>(
    potential: &RenormalizedPotential,
    nodes: &GaussianNodes,
    f: impl Fn(&ExactEnsemble) -> Result<[f64; K]> + Sync,
) -> Result<(Vec<f64>, Vec<[f64; K]>)> {
    let evaluated: Vec<(f64, [f64; K])> = nodes
        .points
        .par_iter()
        .zip(&nodes.log_weights)
        .map(|(phi, lw)| {
            let ens = potential.fluctuation_measure(phi)?;
            let v = potential.value_with(phi, &ens);
            Ok((lw - v, f(&ens)?))
        })
        .collect::<Result<_>>()?;
    let max = evaluated.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = evaluated.iter().map(|e| (e.0 - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok((weights, evaluated.into_iter().map(|e| e.1).collect()))
}

fn weighted_mean(weights: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Standard error of a self-normalised importance-sampling mean.
fn self_normalised_se(weights: &[f64], values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mean = weighted_mean(weights, values.clone());
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * w * (v - mean) * (v - mean))
        .sum::<f64>()
        .sqrt()
}

fn check_inputs(schedule: &CovarianceSchedule, t: f64, field: &[f64], f: &[f64]) -> Result<()> {
    let n = schedule.dim();
    if f.len() != 1usize << n {
        return Err(Error::DimensionMismatch {
            expected: 1usize << n,
            found: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test function"));
    }
    if field.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: field.len(),
        });
    }
    if !(t >= 0.0 && (t < schedule.beta() || (t == 0.0 && schedule.beta() == 0.0))) {
        return Err(Error::OutOfRange {
            what: "decomposition time",
            value: t,
            lo: 0.0,
            hi: schedule.beta(),
        });
    }
    Ok(())
}

/// Runs `eval` on a tensor rule of order `k` and `k + step`, or once on a
/// Monte Carlo sample if there are too many nondegenerate axes.
/// `eval` returns `(value, standard error)`.
fn run_rule(
    schedule: &CovarianceSchedule,
    t: f64,
    config: &QuadratureConfig,
    scale: f64,
    eval: impl Fn(&GaussianNodes) -> Result<(f64, f64)>,
) -> Result<(f64, &'static str, Option<usize>, Option<f64>, Option<f64>)> {
    config.validate()?;
    let axes = gaussian_axes(schedule, t);
    if axes.len() <= config.max_tensor_dim {
        let coarse = eval(&tensor_nodes(schedule, &axes, config.order)?)?.0;
        let next = config.order + config.step;
        let fine = eval(&tensor_nodes(schedule, &axes, next)?)?.0;
        let gap = (fine - coarse).abs();
        if gap > config.tolerance * scale {
            return Err(Error::QuadratureNotConverged {
                order: config.order,
                next,
                difference: gap,
            });
        }
        Ok((fine, "gauss_hermite", Some(next), Some(gap), None))
    } else {
        let nodes = monte_carlo_nodes(schedule, &axes, config.mc_samples, config.seed);
        let (value, se) = eval(&nodes)?;
        Ok((value, "monte_carlo", None, None, Some(se)))
    }
}

/// Checks `E_{mu_{beta,h}} F = E_{nu_{t,beta}} E_{mu_{t, h + C_t^{-1} phi}} F`.
///
/// `f` holds the values of `F` on all `2^n` configurations. The residual is
/// relative to `E_{mu_{beta,h}} |F|` (absolute if that vanishes).
pub fn verify_decomposition(
    schedule: &CovarianceSchedule,
    t: f64,
    field: &[f64],
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<DecompositionCheck> {
    check_inputs(schedule, t, field, f)?;
    let target = ExactEnsemble::new(schedule.coupling(), schedule.beta(), field)?;
    let exact = target.mean_of(f);
    let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let scale = match target.mean_of(&abs) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let potential = RenormalizedPotential::new(schedule, t, field)?;
    let (decomposed, method, order, gap, se) = run_rule(schedule, t, config, scale, |nodes| {
        let (w, vals) = integrate_nu(&potential, nodes, |ens| Ok([ens.mean_of(f)]))?;
        let it = vals.iter().map(|v| v[0]);
        Ok((weighted_mean(&w, it.clone()), self_normalised_se(&w, it)))
    })?;
    Ok(DecompositionCheck {
        t,
        exact,
        decomposed,
        residual: (decomposed - exact).abs() / scale,
        scale,
        method: method.into(),
        order,
        convergence_gap: gap,
        standard_error: se,
        certified: method == "gauss_hermite",
    })
}

/// Checks at `t = 0`:
/// `Ent_{mu_{beta,h}}(F) = E_nu Ent_{mu_{0,h+alpha phi}}(F) + Ent_nu(G)` with
/// `G(phi) = E_{mu_{0,h+alpha phi}} F`, for `F >= 0` not identically zero.
pub fn verify_entropy_decomposition(
    schedule: &CovarianceSchedule,
    field: &[f64],
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<DecompositionCheck> {
    check_inputs(schedule, 0.0, field, f)?;
    let target = ExactEnsemble::new(schedule.coupling(), schedule.beta(), field)?;
    let exact = entropy(target.probabilities(), f)?;
    let scale = exact.max(1e-12 * target.mean_of(f));
    let potential = RenormalizedPotential::new(schedule, 0.0, field)?;
    let (decomposed, method, order, gap, se) = run_rule(schedule, 0.0, config, scale, |nodes| {
        let (w, vals) = integrate_nu(&potential, nodes, |ens| {
            Ok([entropy(ens.probabilities(), f)?, ens.mean_of(f)])
        })?;
        let inner = vals.iter().map(|v| v[0]);
        let g: Vec<f64> = vals.iter().map(|v| v[1]).collect();
        let value = weighted_mean(&w, inner.clone()) + entropy(&w, &g)?;
        let mean_g = weighted_mean(&w, g.iter().cloned());
        let glogg = g.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 });
        let se = self_normalised_se(&w, inner)
            + self_normalised_se(&w, glogg)
            + (mean_g.ln() + 1.0).abs() * self_normalised_se(&w, g.iter().cloned());
        Ok((value, se))
    })?;
    let diff = (decomposed - exact).abs();
    Ok(DecompositionCheck {
        t: 0.0,
        exact,
        decomposed,
        residual: if scale > 0.0 { diff / scale } else { diff },
        scale,
        method: method.into(),
        order,
        convergence_gap: gap,
        standard_error: se,
        certified: method == "gauss_hermite",
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    pub samples: usize,
    pub max_residual: f64,
    pub worst_sigma: Vec<f64>,
    pub worst_s: f64,
    pub worst_t: f64,
}

/// Checks the Gaussian convolution identity
/// `P_{C_s}(sigma) = E_{phi ~ N(0, C_s - C_t)} P_{C_t}(sigma - phi)` for
/// `samples` random `sigma in [-2, 2]^n` and `0 <= t < s <= beta`.
///
/// All covariances are diagonal in the eigenbasis of `A`, so the tensor rule
/// factorises into one-dimensional rules.
pub fn verify_convolution(
    schedule: &CovarianceSchedule,
    samples: usize,
    config: &QuadratureConfig,
) -> Result<ConvolutionCheck> {
    config.validate()?;
    if schedule.beta() <= 0.0 {
        return Err(Error::InvalidParameter("convolution check needs beta > 0".into()));
    }
    let n = schedule.dim();
    let rule = gauss_hermite(config.order)?;
    let fine = gauss_hermite(config.order + config.step)?;
    let q = schedule.eigenvectors();
    let cases: Vec<(Vec<f64>, f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(config.seed, i as u64);
            let sigma: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let (u, v): (f64, f64) = (r.random(), r.random());
            let (t, s) = (u.min(v) * schedule.beta(), u.max(v) * schedule.beta());
            let rotated = q.transpose() * DVector::from_column_slice(&sigma);
            let ct = schedule.covariance_spectrum(t);
            let cs = schedule.covariance_spectrum(s);
            let ratio = |(nodes, weights): &(Vec<f64>, Vec<f64>)| -> f64 {
                let mut log_ratio = 0.0;
                for k in 0..n {
                    let y = rotated[k];
                    let g = (cs[k] - ct[k]).max(0.0);
                    let integral: f64 = nodes
                        .iter()
                        .zip(weights)
                        .map(|(z, w)| {
                            let d = y - g.sqrt() * z;
                            w * (-0.5 * d * d / ct[k]).exp()
                        })
                        .sum();
                    log_ratio += 0.5 * (cs[k] / ct[k]).ln() + integral.ln() + 0.5 * y * y / cs[k];
                }
                log_ratio.exp()
            };
            let coarse = ratio(&rule);
            let value = ratio(&fine);
            ((sigma), s, t, (value - 1.0).abs().max((coarse - value).abs()))
        })
        .collect();
    let worst = cases
        .into_iter()
        .fold(None::<(Vec<f64>, f64, f64, f64)>, |best, c| match best {
            Some(b) if b.3 >= c.3 => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| Error::InvalidParameter("convolution check needs samples".into()))?;
    Ok(ConvolutionCheck {
        samples,
        max_residual: worst.3,
        worst_sigma: worst.0,
        worst_s: worst.1,
        worst_t: worst.2,
    })
}
