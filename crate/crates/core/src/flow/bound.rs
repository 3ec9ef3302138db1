use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{susceptibility_rows_with_caps, two_point_spectral_radius, EnumerationCaps};
use crate::flow::schedule::CovarianceSchedule;
use crate::model::{CouplingMatrix, Normalization};

/// Relative decrease between neighbouring grid values tolerated as rounding
/// before the grid is declared non-monotone.
const MONOTONE_SLACK: f64 = 1e-12;

/// Supplier of `chi_t` on `[0, beta]`.
///
/// The enclosure is certified only for sources that are nondecreasing in `t`
/// and report `certified() == true`.
pub trait ChiSource: Sync {
    fn chi(&self, t: f64) -> Result<f64>;

    fn certified(&self) -> bool {
        true
    }

    fn label(&self) -> String;
}

/// Exact zero-field susceptibility by enumeration.
#[derive(Clone, Debug)]
pub struct ExactChi {
    pub coupling: CouplingMatrix,
    pub caps: EnumerationCaps,
}

impl ExactChi {
    pub fn new(coupling: &CouplingMatrix) -> Self {
        ExactChi {
            coupling: coupling.clone(),
            caps: EnumerationCaps::default(),
        }
    }
}

impl ChiSource for ExactChi {
    fn chi(&self, t: f64) -> Result<f64> {
        Ok(susceptibility_rows_with_caps(&self.coupling, t, self.caps)?.value)
    }

    fn label(&self) -> String {
        "exact".into()
    }
}

/// Spectral radius of the zero-field two-point matrix. It is not known to
/// be monotone in `t`, so bounds built from it are never certified.
#[derive(Clone, Debug)]
pub struct TwoPointRadiusChi {
    pub coupling: CouplingMatrix,
}

impl ChiSource for TwoPointRadiusChi {
    fn chi(&self, t: f64) -> Result<f64> {
        two_point_spectral_radius(&self.coupling, t)
    }

    fn certified(&self) -> bool {
        false
    }

    fn label(&self) -> String {
        "two_point_radius".into()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantChi(pub f64);

impl ChiSource for ConstantChi {
    fn chi(&self, _t: f64) -> Result<f64> {
        Ok(self.0)
    }

    fn label(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// `chi_s = D / (beta_c - s)`, or `D / (beta_c + L^{-2} - s)` on a side-`L` box.
#[derive(Clone, Copy, Debug)]
pub struct MeanFieldChi {
    pub d: f64,
    pub beta_c: f64,
    pub side: Option<f64>,
}

impl MeanFieldChi {
    fn pole(&self) -> f64 {
        self.beta_c + self.side.map_or(0.0, |l| 1.0 / (l * l))
    }
}

impl ChiSource for MeanFieldChi {
    fn chi(&self, t: f64) -> Result<f64> {
        let gap = self.pole() - t;
        if gap <= 0.0 {
            return Err(Error::OutOfRange {
                what: "time",
                value: t,
                lo: 0.0,
                hi: self.pole(),
            });
        }
        Ok(self.d / gap)
    }

    fn label(&self) -> String {
        match self.side {
            Some(l) => format!("meanfield(D={}, beta_c={}, L={})", self.d, self.beta_c, l),
            None => format!("meanfield(D={}, beta_c={})", self.d, self.beta_c),
        }
    }
}

/// Arbitrary closure, treated as a monotone source.
pub struct FnChi<F: Fn(f64) -> f64 + Sync> {
    pub f: F,
    pub name: String,
}

impl<F: Fn(f64) -> f64 + Sync> ChiSource for FnChi<F> {
    fn chi(&self, t: f64) -> Result<f64> {
        Ok((self.f)(t))
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// `chi` sampled at the uniform nodes `t_i = i beta / N`, `i = 0..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiGrid {
    pub beta: f64,
    pub values: Vec<f64>,
}

/// Enclosure of `int_0^beta exp(2 int_0^t chi_s ds) dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enclosure {
    pub lower: f64,
    pub upper: f64,
    /// Nested trapezoid value with one Richardson step.
    pub estimate: f64,
    pub monotone: bool,
}

impl ChiGrid {
    pub fn intervals(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn step(&self) -> f64 {
        if self.intervals() == 0 {
            0.0
        } else {
            self.beta / self.intervals() as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.values.len()).map(|i| i as f64 * h).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.values
            .windows(2)
            .all(|w| w[1] >= w[0] - MONOTONE_SLACK * w[0].abs())
    }

    /// Riemann enclosures from monotonicity: on `[t_k, t_{k+1}]` the inner
    /// integral lies between its left and right sums and the outer integrand
    /// between its values at the two ends.
    pub fn enclosure(&self) -> Enclosure {
        let n = self.intervals();
        if n == 0 || self.beta == 0.0 {
            return Enclosure {
                lower: 0.0,
                upper: 0.0,
                estimate: 0.0,
                monotone: true,
            };
        }
        let h = self.step();
        let v = &self.values;
        let (mut inner_lo, mut inner_hi) = (0.0_f64, 0.0_f64);
        let (mut lower, mut upper) = (0.0_f64, 0.0_f64);
        for k in 0..n {
            lower += (2.0 * inner_lo).exp();
            inner_lo += h * v[k];
            inner_hi += h * v[k + 1];
            upper += (2.0 * inner_hi).exp();
        }
        let fine = trapezoid(v, h, 1);
        let estimate = if n % 2 == 0 {
            let coarse = trapezoid(v, h, 2);
            fine + (fine - coarse) / 3.0
        } else {
            fine
        };
        Enclosure {
            lower: h * lower,
            upper: h * upper,
            estimate,
            monotone: self.is_monotone(),
        }
    }
}

/// Nested trapezoid rule on every `stride`-th node.
fn trapezoid(v: &[f64], h: f64, stride: usize) -> f64 {
    let h = h * stride as f64;
    let mut inner = 0.0_f64;
    let mut prev = 1.0;
    let mut total = 0.0;
    let mut k = 0;
    while k + stride < v.len() {
        inner += 0.5 * h * (v[k] + v[k + stride]);
        let e = (2.0 * inner).exp();
        total += 0.5 * h * (prev + e);
        prev = e;
        k += stride;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    /// Number of grid intervals at the first pass.
    pub initial_grid: usize,
    /// Target width of the enclosure.
    pub tolerance: f64,
    /// Largest number of intervals before giving up on the tolerance.
    pub max_grid: usize,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            initial_grid: 256,
            tolerance: 1e-6,
            max_grid: 1 << 14,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSample {
    pub t: f64,
    pub chi: f64,
}

/// The `alpha`-dependent intermediate bound `(1/alpha^2) int_0^beta e^{2 int chi}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionBound {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    /// `||dC/dt at 0||`, at most `1 / alpha^2`.
    pub dot_c0_norm: f64,
}

pub const FLAG_TOLERANCE: &str = "tolerance_not_reached";
pub const FLAG_UNCERTIFIED: &str = "uncertified_chi_source";
pub const FLAG_NOT_MONOTONE: &str = "chi_not_monotone";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub beta: f64,
    pub alpha: Option<f64>,
    /// Number of intervals of the final grid.
    pub grid: usize,
    pub chi_source: String,
    pub chi: Vec<ChiSample>,
    pub bound_lower: f64,
    pub bound_upper: f64,
    pub bound_estimate: f64,
    pub coarse_bound: f64,
    pub criterion_intermediate: Option<CriterionBound>,
    pub settings: BoundSettings,
    pub certified: bool,
    pub flags: Vec<String>,
    pub normalization: Option<Normalization>,
}

impl BoundReport {
    pub fn chi_grid(&self) -> ChiGrid {
        ChiGrid {
            beta: self.beta,
            values: self.chi.iter().map(|c| c.chi).collect(),
        }
    }

    pub fn width(&self) -> f64 {
        self.bound_upper - self.bound_lower
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// Attaches the intermediate bound for `schedule` and checks that
    /// `1/2 + alpha^2 * intermediate` reproduces the enclosure.
    pub fn with_criterion(mut self, schedule: &CovarianceSchedule) -> Result<Self> {
        if schedule.beta() != self.beta {
            return Err(Error::InvalidParameter(format!(
                "schedule beta {} differs from report beta {}",
                schedule.beta(),
                self.beta
            )));
        }
        let c = criterion_bound(schedule, &self.chi_grid())?;
        let a2 = c.alpha * c.alpha;
        let assembled = 0.5 + a2 * c.upper;
        if (assembled - self.bound_upper).abs() > 1e-12 * self.bound_upper {
            return Err(Error::InvalidParameter(format!(
                "assembly mismatch: {assembled} vs {}",
                self.bound_upper
            )));
        }
        self.alpha = Some(c.alpha);
        self.criterion_intermediate = Some(c);
        Ok(self)
    }
}

fn validate(beta: f64, settings: &BoundSettings) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
    }
    if settings.initial_grid == 0 || settings.max_grid < settings.initial_grid {
        return Err(Error::InvalidParameter(
            "grid sizes need 0 < initial_grid <= max_grid".into(),
        ));
    }
    if !(settings.tolerance > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    Ok(())
}

fn sample(source: &dyn ChiSource, times: &[f64]) -> Result<Vec<f64>> {
    times
        .par_iter()
        .map(|&t| {
            let v = source.chi(t)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite("chi"))
            }
        })
        .collect()
}

/// `1/2 + int_0^beta exp(2 int_0^t chi_s ds) dt` for the exact susceptibility
/// of `coupling`.
pub fn lsi_bound(coupling: &CouplingMatrix, beta: f64, settings: &BoundSettings) -> Result<BoundReport> {
    let mut report = lsi_bound_with(&ExactChi::new(coupling), beta, settings)?;
    report.normalization = Some(coupling.normalization());
    Ok(report)
}

/// As [`lsi_bound`] for any source of `chi`. The grid is doubled, reusing
/// earlier nodes, until the enclosure is narrower than the tolerance or the
/// grid limit is hit; in the latter case the report carries a flag.
pub fn lsi_bound_with(source: &dyn ChiSource, beta: f64, settings: &BoundSettings) -> Result<BoundReport> {
    validate(beta, settings)?;
    let mut flags = Vec::new();
    if !source.certified() {
        flags.push(FLAG_UNCERTIFIED.to_string());
    }
    let chi0 = source.chi(0.0)?;
    if beta == 0.0 {
        return Ok(BoundReport {
            beta,
            alpha: None,
            grid: 0,
            chi_source: source.label(),
            chi: vec![ChiSample { t: 0.0, chi: chi0 }],
            bound_lower: 0.5,
            bound_upper: 0.5,
            bound_estimate: 0.5,
            coarse_bound: 0.5,
            criterion_intermediate: None,
            settings: settings.clone(),
            certified: source.certified(),
            flags,
            normalization: None,
        });
    }

    let mut n = settings.initial_grid;
    let times: Vec<f64> = (0..=n).map(|i| beta * i as f64 / n as f64).collect();
    let mut grid = ChiGrid {
        beta,
        values: sample(source, &times)?,
    };
    let mut enclosure = grid.enclosure();
    while enclosure.upper - enclosure.lower >= settings.tolerance && 2 * n <= settings.max_grid {
        let midpoints: Vec<f64> = (0..n)
            .map(|i| beta * (2 * i + 1) as f64 / (2 * n) as f64)
            .collect();
        let mid = sample(source, &midpoints)?;
        let mut values = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            values.push(grid.values[i]);
            values.push(mid[i]);
        }
        values.push(grid.values[n]);
        n *= 2;
        grid = ChiGrid { beta, values };
        enclosure = grid.enclosure();
    }
    if enclosure.upper - enclosure.lower >= settings.tolerance {
        flags.push(FLAG_TOLERANCE.to_string());
    }
    if !enclosure.monotone {
        flags.push(FLAG_NOT_MONOTONE.to_string());
    }
    let chi_beta = grid.values[n];
    let chi = grid
        .nodes()
        .into_iter()
        .zip(&grid.values)
        .map(|(t, &chi)| ChiSample { t, chi })
        .collect();
    Ok(BoundReport {
        beta,
        alpha: None,
        grid: n,
        chi_source: source.label(),
        chi,
        bound_lower: 0.5 + enclosure.lower,
        bound_upper: 0.5 + enclosure.upper,
        bound_estimate: 0.5 + enclosure.estimate,
        coarse_bound: 0.5 + beta * (2.0 * beta * chi_beta).exp(),
        criterion_intermediate: None,
        settings: settings.clone(),
        certified: source.certified() && enclosure.monotone,
        flags,
        normalization: None,
    })
}

/// `(1/alpha^2) int_0^beta exp(2 int_0^t chi_s ds) dt`, the bound on
/// `1/gamma` of the renormalised measure with `lambda_t = -chi_t`, using
/// `||dC/dt at 0|| <= 1/alpha^2`.
pub fn criterion_bound(schedule: &CovarianceSchedule, grid: &ChiGrid) -> Result<CriterionBound> {
    if grid.beta != schedule.beta() {
        return Err(Error::InvalidParameter("grid and schedule disagree on beta".into()));
    }
    let e = grid.enclosure();
    let a2 = schedule.alpha() * schedule.alpha();
    Ok(CriterionBound {
        alpha: schedule.alpha(),
        lower: e.lower / a2,
        upper: e.upper / a2,
        estimate: e.estimate / a2,
        dot_c0_norm: schedule.dot_covariance_norm_at_zero(),
    })
}

/// Closed form of the bound under `chi_s <= D / (beta_c - s)`:
/// `1/2 + beta_c/(2D-1) [(1 - beta/beta_c)^{1-2D} - 1]` for `beta < beta_c`.
///
/// With `side = Some(L)` the pole moves to `beta_c + L^{-2}` and any
/// `beta <= beta_c` is allowed; at `beta = beta_c` the value is
/// `1/2 + (beta_c + L^{-2})/(2D-1) [(L^2 beta_c + 1)^{2D-1} - 1]`.
pub fn meanfield_corollary(d: f64, beta_c: f64, beta: f64, side: Option<f64>) -> Result<f64> {
    if !(d > 0.5) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("D = {d} must exceed 1/2")));
    }
    if !(beta_c > 0.0) || !beta_c.is_finite() {
        return Err(Error::InvalidParameter(format!("beta_c = {beta_c} must be positive")));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
    }
    let e = 2.0 * d - 1.0;
    match side {
        None => {
            if beta >= beta_c {
                return Err(Error::OutOfRange {
                    what: "beta",
                    value: beta,
                    lo: 0.0,
                    hi: beta_c,
                });
            }
            Ok(0.5 + beta_c / e * ((1.0 - beta / beta_c).powf(-e) - 1.0))
        }
        Some(l) => {
            if !(l >= 1.0) || !l.is_finite() {
                return Err(Error::InvalidParameter(format!("side length {l} must be at least 1")));
            }
            if beta > beta_c {
                return Err(Error::OutOfRange {
                    what: "beta",
                    value: beta,
                    lo: 0.0,
                    hi: beta_c,
                });
            }
            let b = beta_c + 1.0 / (l * l);
            Ok(0.5 + b / e * ((b / (b - beta)).powf(e) - 1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_coupling, Lattice, ModelSpec};

    fn constant_closed_form(c: f64, beta: f64) -> f64 {
        0.5 + ((2.0 * c * beta).exp() - 1.0) / (2.0 * c)
    }

    #[test]
    fn zero_beta_is_one_half() {
        let a = build_coupling(&ModelSpec::new(Lattice::cycle(4), 1.0, 0.0)).unwrap();
        let r = lsi_bound(&a, 0.0, &BoundSettings::default()).unwrap();
        assert_eq!((r.bound_lower, r.bound_upper, r.coarse_bound), (0.5, 0.5, 0.5));
        assert!(r.flags.is_empty());
    }

    #[test]
    fn constant_chi_brackets_closed_form() {
        for (c, beta) in [(1.0, 0.5), (2.5, 0.3), (0.1, 2.0)] {
            let r = lsi_bound_with(&ConstantChi(c), beta, &BoundSettings::default()).unwrap();
            let exact = constant_closed_form(c, beta);
            assert!(r.bound_lower <= exact && exact <= r.bound_upper, "{c} {beta}");
            assert!((r.bound_estimate - exact).abs() < 1e-10);
            assert!(r.width() < 1e-6 || r.has_flag(FLAG_TOLERANCE));
            assert!(r.bound_upper <= r.coarse_bound + 1e-12);
        }
    }

    #[test]
    fn refinement_stays_inside_coarser_enclosures() {
        let a = build_coupling(&ModelSpec::new(Lattice::path(4), 1.0, 1.0)).unwrap();
        let src = ExactChi::new(&a);
        let mut prev: Option<BoundReport> = None;
        for n in [8, 16, 32, 64, 128] {
            let settings = BoundSettings {
                initial_grid: n,
                tolerance: 1e-300,
                max_grid: n,
            };
            let r = lsi_bound_with(&src, 1.0, &settings).unwrap();
            assert!(r.has_flag(FLAG_TOLERANCE));
            if let Some(p) = prev {
                assert!(p.bound_lower <= r.bound_lower + 1e-14);
                assert!(r.bound_upper <= p.bound_upper + 1e-14);
            }
            prev = Some(r);
        }
    }

    #[test]
    fn upper_enclosure_below_coarse_bound() {
        for lattice in [Lattice::path(3), Lattice::cycle(5), Lattice::grid(2, 3), Lattice::complete(4)] {
            let a = build_coupling(&ModelSpec::new(lattice, 1.0, 1.0)).unwrap();
            let r = lsi_bound(&a, 1.0, &BoundSettings::default()).unwrap();
            assert!(r.bound_lower <= r.bound_upper);
            assert!(r.bound_upper <= r.coarse_bound + 1e-9);
            assert!(r.certified);
        }
    }

    #[test]
    fn criterion_assembles_to_bound() {
        let a = build_coupling(&ModelSpec::new(Lattice::cycle(4), 1.0, 0.8)).unwrap();
        let schedule = CovarianceSchedule::new(&a, 1.8, 0.8).unwrap();
        let r = lsi_bound(&a, 0.8, &BoundSettings::default()).unwrap().with_criterion(&schedule).unwrap();
        let c = r.criterion_intermediate.unwrap();
        assert!((0.5 + 1.8 * 1.8 * c.upper - r.bound_upper).abs() < 1e-12);
        assert!(c.dot_c0_norm <= 1.0 / (1.8 * 1.8) + 1e-15);
        let constant = ChiGrid {
            beta: 0.8,
            values: vec![2.0; 1025],
        };
        let cb = criterion_bound(&schedule, &constant).unwrap();
        let exact = ((2.0f64 * 2.0 * 0.8).exp() - 1.0) / 4.0 / (1.8 * 1.8);
        assert!(cb.lower <= exact && exact <= cb.upper);
    }

    #[test]
    fn corollary_examples() {
        assert_eq!(meanfield_corollary(1.0, 1.0, 0.0, None).unwrap(), 0.5);
        assert!((meanfield_corollary(1.0, 1.0, 0.5, None).unwrap() - 1.5).abs() < 1e-15);
        assert!(meanfield_corollary(0.5, 1.0, 0.5, None).is_err());
        assert!(meanfield_corollary(1.0, 1.0, 1.0, None).is_err());
        let (d, bc, l) = (1.5, 0.7, 4.0);
        let at_critical = meanfield_corollary(d, bc, bc, Some(l)).unwrap();
        let closed_form_at_critical = 0.5 + (bc + 1.0 / (l * l)) / (2.0 * d - 1.0) * ((l * l * bc + 1.0).powf(2.0 * d - 1.0) - 1.0);
        assert!((at_critical - closed_form_at_critical).abs() < 1e-12 * closed_form_at_critical);
    }

    #[test]
    fn synthetic_meanfield_matches_closed_form() {
        let settings = BoundSettings {
            initial_grid: 256,
            tolerance: 1e-6,
            max_grid: 1 << 16,
        };
        let src = MeanFieldChi {
            d: 1.0,
            beta_c: 1.0,
            side: None,
        };
        let r = lsi_bound_with(&src, 0.5, &settings).unwrap();
        let exact = meanfield_corollary(1.0, 1.0, 0.5, None).unwrap();
        assert!(r.bound_lower <= exact && exact <= r.bound_upper);
        assert!((r.bound_estimate - exact).abs() < 1e-8);
    }

    #[test]
    fn uncertified_source_is_flagged() {
        let a = build_coupling(&ModelSpec::new(Lattice::path(3), 1.0, 0.5)).unwrap();
        let r = lsi_bound_with(&TwoPointRadiusChi { coupling: a }, 0.5, &BoundSettings::default()).unwrap();
        assert!(r.has_flag(FLAG_UNCERTIFIED));
        assert!(!r.certified);
    }
}
