use ising_lsi::flow::{lsi_bound, BoundReport, BoundSettings, CovarianceSchedule};
use ising_lsi::glauber::{build_generator, estimate_inverse_lsi, lsi_ratio, OptimizerSettings};
use ising_lsi::inequalities::{check_fkg, FieldSampler, ViolationReport};
use ising_lsi::report::to_json_string;
use ising_lsi::{build_coupling, DensityFunction, Lattice, ModelSpec};

fn spec() -> ModelSpec {
    ModelSpec::new(Lattice::grid(2, 3), 1.0, 0.7).with_field(vec![0.1, -0.2, 0.0, 0.3, 0.0, -0.1])
}

#[test]
fn model_to_bound_to_optimizer() {
    let spec = spec();
    let a = build_coupling(&spec).unwrap();
    let schedule = CovarianceSchedule::new(&a, spec.alpha, spec.beta).unwrap();
    let report = lsi_bound(&a, spec.beta, &BoundSettings::default())
        .unwrap()
        .with_criterion(&schedule)
        .unwrap();
    let g = build_generator(&a, spec.beta, &spec.field).unwrap();
    let est = estimate_inverse_lsi(&g, &OptimizerSettings::default()).unwrap();
    assert!(est.best_ratio <= report.bound_upper);
    assert!(1.0 / est.spectral_gap <= report.bound_upper);
    let again = lsi_ratio(&g, &DensityFunction::new(est.argmax.clone()).unwrap()).unwrap();
    assert!((again - est.best_ratio).abs() <= 1e-9 * again);
}

#[test]
fn bound_report_round_trips_bit_exactly() {
    let a = build_coupling(&spec()).unwrap();
    let report = lsi_bound(&a, 0.7, &BoundSettings::default()).unwrap();
    let json = to_json_string(&report).unwrap();
    let back: BoundReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let norm = back.normalization.unwrap();
    assert_eq!(norm.scale.to_bits(), a.normalization().scale.to_bits());
    assert_eq!(norm.shift.to_bits(), a.normalization().shift.to_bits());
    assert_eq!(to_json_string(&back).unwrap(), json);
}

#[test]
fn violation_report_has_documented_fields() {
    let a = build_coupling(&spec()).unwrap();
    let r = check_fkg(&a, 0.5, &FieldSampler::default(), 20, 1).unwrap().with_model("grid2d-2x3");
    let value: serde_json::Value = serde_json::from_str(&to_json_string(&r).unwrap()).unwrap();
    for key in ["check", "model", "t", "samples", "worst_slack", "worst_witness"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    let back: ViolationReport = serde_json::from_value(value).unwrap();
    assert_eq!(back, r);
}
