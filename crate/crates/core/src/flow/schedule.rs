use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::CouplingMatrix;

/// Eigenvalues this close to one are treated as exactly one, so that the
/// flow is frozen along those directions.
const UNIT_EIGENVALUE_TOL: f64 = 1e-13;

/// `C_t = (tA + (alpha - t) I)^{-1}` for `t in [0, beta]`, evaluated through
/// one shared eigendecomposition of `A` (all derived matrices commute).
#[derive(Clone, Debug)]
pub struct CovarianceSchedule {
    coupling: CouplingMatrix,
    alpha: f64,
    beta: f64,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl CovarianceSchedule {
    pub fn new(coupling: &CouplingMatrix, alpha: f64, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
        }
        if !(alpha > beta) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} must exceed beta = {beta}"
            )));
        }
        let (eigenvalues, eigenvectors) = linalg::sorted_eigen(coupling.matrix());
        Ok(CovarianceSchedule {
            coupling: coupling.clone(),
            alpha,
            beta,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.beta {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "flow time",
                value: t,
                lo: 0.0,
                hi: self.beta,
            })
        }
    }

    /// `1 - a`, snapped to zero for unit eigenvalues.
    pub(crate) fn one_minus(&self, a: f64) -> f64 {
        let d = 1.0 - a;
        if d.abs() < UNIT_EIGENVALUE_TOL {
            0.0
        } else {
            d
        }
    }

    /// Eigenvalues of `C_t` in the eigenbasis of `A`: `1 / (ta + alpha - t)`.
    pub fn covariance_spectrum(&self, t: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&a| 1.0 / (self.alpha - t * self.one_minus(a)))
            .collect()
    }

    fn assemble(&self, diag: impl Fn(f64, f64) -> f64, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let q = &self.eigenvectors;
        let d: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|&a| diag(self.one_minus(a), 1.0 / (self.alpha - t * self.one_minus(a))))
            .collect();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            if d[k] == 0.0 {
                continue;
            }
            let col = q.column(k);
            out.ger(d[k], &col, &col, 1.0);
        }
        linalg::symmetrize(&out)
    }

    pub fn covariance(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        Ok(self.assemble(|_, c| c, t))
    }

    /// `dC/dt = (1 - A) C_t^2`.
    pub fn dot_covariance(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        Ok(self.assemble(|m, c| m * c * c, t))
    }

    /// `d^2C/dt^2 = 2 (1 - A) C_t dC/dt = 2 (1 - A)^2 C_t^3`.
    pub fn ddot_covariance(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        Ok(self.assemble(|m, c| 2.0 * m * m * c * c * c, t))
    }

    /// `C_t^{-1} = tA + (alpha - t) I`, formed directly.
    pub fn inverse_covariance(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        let n = self.dim();
        let mut k = self.coupling.matrix() * t;
        for i in 0..n {
            k[(i, i)] += self.alpha - t;
        }
        Ok(k)
    }

    /// `||dC/dt at 0|| = max |1 - a| / alpha^2`.
    pub fn dot_covariance_norm_at_zero(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&a| self.one_minus(a).abs())
            .fold(0.0, f64::max)
            / (self.alpha * self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_coupling, Lattice, ModelSpec};
    use approx::assert_relative_eq;

    fn schedule(lattice: Lattice, beta: f64) -> CovarianceSchedule {
        let a = build_coupling(&ModelSpec::new(lattice, 1.0, beta)).unwrap();
        CovarianceSchedule::new(&a, beta + 1.0, beta).unwrap()
    }

    #[test]
    fn initial_values() {
        let s = schedule(Lattice::cycle(4), 0.8);
        let alpha = s.alpha();
        let c0 = s.covariance(0.0).unwrap();
        assert!((c0 - DMatrix::identity(4, 4) / alpha).abs().max() < 1e-14);
        let a = s.coupling().matrix().clone();
        let expected = (DMatrix::identity(4, 4) - a) / (alpha * alpha);
        assert!((s.dot_covariance(0.0).unwrap() - expected).abs().max() < 1e-14);
        assert!(s.dot_covariance_norm_at_zero() <= 1.0 / (alpha * alpha) + 1e-15);
    }

    #[test]
    fn identity_coupling_freezes_the_flow() {
        let s = CovarianceSchedule::new(&CouplingMatrix::identity(3), 2.0, 1.0).unwrap();
        for t in [0.0, 0.5, 1.0] {
            assert!((s.covariance(t).unwrap() - DMatrix::identity(3, 3) / 2.0).abs().max() < 1e-15);
            assert_eq!(s.dot_covariance(t).unwrap().abs().max(), 0.0);
            assert_eq!(s.ddot_covariance(t).unwrap().abs().max(), 0.0);
        }
    }

    #[test]
    fn inverse_is_consistent() {
        let s = schedule(Lattice::grid(2, 3), 1.2);
        for t in [0.0, 0.4, 1.2] {
            let prod = s.covariance(t).unwrap() * s.inverse_covariance(t).unwrap();
            assert!((prod - DMatrix::identity(6, 6)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let s = schedule(Lattice::path(4), 1.0);
        let h = 1e-5;
        for t in [0.1, 0.5, 0.9] {
            let fd1 = (s.covariance(t + h).unwrap() - s.covariance(t - h).unwrap()) / (2.0 * h);
            let d1 = s.dot_covariance(t).unwrap();
            assert!((&fd1 - &d1).abs().max() <= 1e-6 * d1.abs().max());
            let fd2 = (s.dot_covariance(t + h).unwrap() - s.dot_covariance(t - h).unwrap()) / (2.0 * h);
            let d2 = s.ddot_covariance(t).unwrap();
            assert!((&fd2 - &d2).abs().max() <= 1e-6 * d2.abs().max());
        }
    }

    #[test]
    fn scalar_formulas_per_eigenvalue() {
        let s = schedule(Lattice::complete(3), 0.5);
        let t = 0.3;
        let spectrum = s.covariance_spectrum(t);
        for (k, &a) in s.eigenvalues().iter().enumerate() {
            assert_relative_eq!(spectrum[k], 1.0 / (t * a + s.alpha() - t), epsilon = 1e-15);
        }
    }

    #[test]
    fn covariances_increase_and_commute() {
        let s = schedule(Lattice::cycle(5), 1.0);
        let a = s.coupling().matrix().clone();
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        for w in times.windows(2) {
            let diff = s.covariance(w[1]).unwrap() - s.covariance(w[0]).unwrap();
            assert!(linalg::min_eigenvalue(&diff) >= -1e-10);
        }
        let t = 0.6;
        let mats = [
            a,
            s.covariance(t).unwrap(),
            s.dot_covariance(t).unwrap(),
            s.ddot_covariance(t).unwrap(),
        ];
        for x in &mats {
            for y in &mats {
                assert!((x * y - y * x).abs().max() < 1e-10);
            }
        }
    }

    #[test]
    fn time_outside_range_is_rejected() {
        let s = schedule(Lattice::path(2), 0.5);
        assert!(matches!(s.covariance(0.6), Err(Error::OutOfRange { .. })));
        assert!(s.covariance(-0.1).is_err());
        assert!(CovarianceSchedule::new(s.coupling(), 0.5, 0.5).is_err());
    }
}
