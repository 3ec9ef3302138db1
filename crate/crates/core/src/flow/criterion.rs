use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::susceptibility;
use crate::flow::potential::RenormalizedPotential;
use crate::flow::schedule::CovarianceSchedule;
use crate::linalg;
use crate::rng;

/// Smallest eigenvalue of
/// `dC_t He V_t(phi) dC_t - (1/2) d^2C_t + chi_t dC_t`.
pub fn verify_criterion_matrix_inequality(
    schedule: &CovarianceSchedule,
    t: f64,
    field: &[f64],
    phi: &[f64],
) -> Result<f64> {
    let chi = susceptibility(schedule.coupling(), t)?;
    slack_with_chi(schedule, t, field, phi, chi)
}

fn slack_with_chi(schedule: &CovarianceSchedule, t: f64, field: &[f64], phi: &[f64], chi: f64) -> Result<f64> {
    let hessian = RenormalizedPotential::new(schedule, t, field)?.hessian(phi)?;
    let dc = schedule.dot_covariance(t)?;
    let ddc = schedule.ddot_covariance(t)?;
    let m = &dc * hessian * &dc - ddc * 0.5 + &dc * chi;
    Ok(linalg::min_eigenvalue(&linalg::symmetrize(&m)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionWitness {
    pub t: f64,
    pub field: Vec<f64>,
    pub phi: Vec<f64>,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionBatch {
    pub samples: usize,
    pub min_slack: f64,
    pub worst: CriterionWitness,
}

/// Samples `t` uniformly in `[0, beta)` and Gaussian `h`, `phi` with scales
/// cycling through `0.1, 1, 10`; sample `i` uses stream `i` of `seed`.
pub fn criterion_batch(schedule: &CovarianceSchedule, samples: usize, seed: u64) -> Result<CriterionBatch> {
    if samples == 0 {
        return Err(Error::InvalidParameter("criterion batch needs samples".into()));
    }
    if schedule.beta() <= 0.0 {
        return Err(Error::InvalidParameter("criterion batch needs beta > 0".into()));
    }
    const SCALES: [f64; 3] = [0.1, 1.0, 10.0];
    let n = schedule.dim();
    let witnesses: Vec<CriterionWitness> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let t = r.random::<f64>() * schedule.beta();
            let hs = SCALES[i % 3];
            let ps = SCALES[(i / 3) % 3];
            let field: Vec<f64> = (0..n).map(|_| hs * r.sample::<f64, _>(StandardNormal)).collect();
            let phi: Vec<f64> = (0..n).map(|_| ps * r.sample::<f64, _>(StandardNormal)).collect();
            let slack = verify_criterion_matrix_inequality(schedule, t, &field, &phi)?;
            Ok(CriterionWitness { t, field, phi, slack })
        })
        .collect::<Result<_>>()?;
    let worst = witnesses
        .into_iter()
        .reduce(|a, b| if b.slack < a.slack { b } else { a })
        .expect("nonempty");
    Ok(CriterionBatch {
        samples,
        min_slack: worst.slack,
        worst,
    })
}
