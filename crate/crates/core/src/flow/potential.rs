use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exact::{EnumerationCaps, ExactEnsemble};
use crate::flow::schedule::CovarianceSchedule;

/// `V_t(phi) = -log sum_sigma exp(-(sigma - phi, C_t^{-1} (sigma - phi)) / 2 + (h, sigma))`
/// for `t in [0, beta)`, evaluated through the tilted Ising measure
/// `mu_{t, h + C_t^{-1} phi}`.
#[derive(Clone, Debug)]
pub struct RenormalizedPotential<'a> {
    schedule: &'a CovarianceSchedule,
    t: f64,
    field: Vec<f64>,
    precision: DMatrix<f64>,
}

impl<'a> RenormalizedPotential<'a> {
    pub fn new(schedule: &'a CovarianceSchedule, t: f64, field: &[f64]) -> Result<Self> {
        schedule.check_time(t)?;
        if t >= schedule.beta() && schedule.beta() > 0.0 {
            return Err(Error::OutOfRange {
                what: "potential time",
                value: t,
                lo: 0.0,
                hi: schedule.beta(),
            });
        }
        if field.len() != schedule.dim() {
            return Err(Error::DimensionMismatch {
                expected: schedule.dim(),
                found: field.len(),
            });
        }
        Ok(RenormalizedPotential {
            schedule,
            t,
            field: field.to_vec(),
            precision: schedule.inverse_covariance(t)?,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `C_t^{-1} = tA + (alpha - t) I`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// External field `h + C_t^{-1} phi` of the fluctuation measure.
    pub fn tilted_field(&self, phi: &[f64]) -> Vec<f64> {
        let k_phi = &self.precision * DVector::from_column_slice(phi);
        self.field.iter().zip(k_phi.iter()).map(|(h, k)| h + k).collect()
    }

    /// The fluctuation measure `mu_{t, h + C_t^{-1} phi}`.
    pub fn fluctuation_measure(&self, phi: &[f64]) -> Result<ExactEnsemble> {
        self.check_phi(phi)?;
        let caps = EnumerationCaps::default();
        ExactEnsemble::from_matrix(
            self.schedule.coupling().matrix(),
            self.t,
            &self.tilted_field(phi),
            caps,
        )
    }

    /// `V_t(phi) = (phi, K phi)/2 + (alpha - t) n / 2 - log Z_{t, h + K phi}`.
    pub fn value_with(&self, phi: &[f64], ensemble: &ExactEnsemble) -> f64 {
        let n = self.schedule.dim() as f64;
        let p = DVector::from_column_slice(phi);
        0.5 * p.dot(&(&self.precision * &p)) + 0.5 * (self.schedule.alpha() - self.t) * n
            - ensemble.log_partition()
    }

    pub fn value(&self, phi: &[f64]) -> Result<f64> {
        let ensemble = self.fluctuation_measure(phi)?;
        Ok(self.value_with(phi, &ensemble))
    }

    /// `grad V = K phi - K E[sigma]`.
    pub fn gradient(&self, phi: &[f64]) -> Result<DVector<f64>> {
        let ensemble = self.fluctuation_measure(phi)?;
        let diff = DVector::from_column_slice(phi) - DVector::from_vec(ensemble.magnetizations());
        Ok(&self.precision * diff)
    }

    /// `He V = K - K Cov(sigma) K`.
    pub fn hessian(&self, phi: &[f64]) -> Result<DMatrix<f64>> {
        let ensemble = self.fluctuation_measure(phi)?;
        let cov = ensemble.truncated_correlation()?.into_inner();
        let k = &self.precision;
        Ok(crate::linalg::symmetrize(&(k - k * cov * k)))
    }

    fn check_phi(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.schedule.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.schedule.dim(),
                found: phi.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phi"));
        }
        Ok(())
    }
}
