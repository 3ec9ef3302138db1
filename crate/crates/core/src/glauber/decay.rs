//! Entropy decay along the Glauber semigroup, `dF/dt = L F`.

use serde::{Deserialize, Serialize};

use super::{entropy, DensityFunction, GeneratorMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for DecaySettings {
    fn default() -> Self {
        DecaySettings {
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Integrator<'a> {
    g: &'a GeneratorMatrix,
    settings: DecaySettings,
    stages: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(g: &'a GeneratorMatrix, settings: DecaySettings) -> Self {
        let m = g.states();
        Integrator {
            g,
            settings,
            stages: vec![vec![0.0; m]; 7],
            scratch: vec![0.0; m],
        }
    }

    /// One trial step; returns the fifth-order solution and the error norm.
    fn trial(&mut self, y: &[f64], h: f64) -> (Vec<f64>, f64) {
        let m = y.len();
        self.g.apply(y, &mut self.stages[0]);
        for stage in 1..7 {
            for i in 0..m {
                let mut acc = y[i];
                for (j, a) in A[stage].iter().enumerate().take(stage) {
                    acc += h * a * self.stages[j][i];
                }
                self.scratch[i] = acc;
            }
            self.g.apply(&self.scratch, &mut self.stages[stage]);
        }
        let mut next = vec![0.0; m];
        let mut err: f64 = 0.0;
        for i in 0..m {
            let mut hi = y[i];
            let mut lo = y[i];
            for s in 0..7 {
                hi += h * B5[s] * self.stages[s][i];
                lo += h * B4[s] * self.stages[s][i];
            }
            next[i] = hi;
            let scale = self.settings.atol + self.settings.rtol * y[i].abs().max(hi.abs());
            err = err.max((hi - lo).abs() / scale);
        }
        (next, err)
    }
}

/// Entropy of `F_t` at each requested time, starting from `F_0` rescaled
/// to unit mean. Times must be nonnegative and nondecreasing.
pub fn entropy_decay_trace(
    g: &GeneratorMatrix,
    initial: &DensityFunction,
    times: &[f64],
    settings: DecaySettings,
) -> Result<Vec<(f64, f64)>> {
    let mu = g.stationary();
    if initial.values().len() != g.states() {
        return Err(Error::DimensionMismatch {
            expected: g.states(),
            found: initial.values().len(),
        });
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("times must be finite, nonnegative and sorted".into()));
    }
    let mean = initial.mean(mu);
    if !(mean > 0.0) {
        return Err(Error::InvalidParameter("initial density has zero mean".into()));
    }
    let mut y: Vec<f64> = initial.values().iter().map(|v| v / mean).collect();
    let ent0 = entropy(mu, &y)?;

    let mut integrator = Integrator::new(g, settings);
    let top = (0..g.states()).map(|s| g.exit_rate(s)).fold(0.0, f64::max);
    let mut h = 0.1 / top.max(1e-12);
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(times.len());
    let mut previous = ent0;

    for &target in times {
        let mut rejections = 0usize;
        while t < target {
            if steps >= settings.max_steps {
                return Err(Error::IntegrationFailed(format!("step budget exhausted at t = {t}")));
            }
            let step = h.min(target - t);
            let (next, err) = integrator.trial(&y, step);
            let negative = next.iter().any(|v| *v < 0.0);
            if err <= 1.0 && !negative {
                y = next;
                t = if step == target - t { target } else { t + step };
                steps += 1;
                rejections = 0;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * factor;
            } else {
                rejections += 1;
                if rejections > 60 {
                    return Err(Error::IntegrationFailed(format!(
                        "persistent step rejection at t = {t} (negative density: {negative})"
                    )));
                }
                h = if negative {
                    step * 0.5
                } else {
                    step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
                };
            }
        }
        let ent = entropy(mu, &y)?;
        if ent > previous + 1e-12 * ent0.max(1e-300) {
            return Err(Error::IntegrationFailed(format!(
                "entropy increased from {previous} to {ent} at t = {target}"
            )));
        }
        previous = ent;
        out.push((target, ent));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glauber::build_generator;
    use crate::model::{CouplingMatrix};
    use approx::assert_relative_eq;

    #[test]
    fn constant_density_has_no_entropy() {
        let g = build_generator(&CouplingMatrix::identity(2), 0.3, &[0.2, 0.1]).unwrap();
        let f = DensityFunction::new(vec![3.0; 4]).unwrap();
        let trace = entropy_decay_trace(&g, &f, &[0.0, 0.5, 2.0], DecaySettings::default()).unwrap();
        assert!(trace.iter().all(|(_, e)| e.abs() < 1e-15));
    }

    #[test]
    fn two_state_chain_matches_closed_form() {
        // symmetric single site: F_t(+) - 1 = (F_0(+) - 1) e^{-2t}
        let g = build_generator(&CouplingMatrix::identity(1), 0.0, &[0.0]).unwrap();
        let f = DensityFunction::new(vec![0.4, 1.6]).unwrap();
        let times = [0.0, 0.1, 0.7, 2.0];
        let trace = entropy_decay_trace(&g, &f, &times, DecaySettings::default()).unwrap();
        for (t, e) in trace {
            let d = 0.6 * (-2.0 * t).exp();
            let exact = entropy(&[0.5, 0.5], &[1.0 - d, 1.0 + d]).unwrap();
            assert_relative_eq!(e, exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn entropy_vanishes_at_long_times() {
        let g = build_generator(&CouplingMatrix::identity(2), 0.5, &[0.3, -0.3]).unwrap();
        let f = DensityFunction::new(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let trace = entropy_decay_trace(&g, &f, &[0.0, 1.0, 20.0], DecaySettings::default()).unwrap();
        assert!(trace[2].1 < 1e-12);
        assert!(trace[1].1 < trace[0].1);
    }

    #[test]
    fn rejects_unsorted_times() {
        let g = build_generator(&CouplingMatrix::identity(1), 0.0, &[0.0]).unwrap();
        let f = DensityFunction::new(vec![1.0, 2.0]).unwrap();
        assert!(entropy_decay_trace(&g, &f, &[1.0, 0.5], DecaySettings::default()).is_err());
    }
}
