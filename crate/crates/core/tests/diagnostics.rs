use svtc::diagnostics::{bench, gradcheck_suite, CheckEntry, PRIMITIVE_TOL};
use svtc::ndgrad::{check_gradients, Array, FD_STEP};
use svtc::net::ModelConfig;

#[test]
fn suite_passes_with_ten_or_more_named_checks() {
    let report = gradcheck_suite(0);
    assert!(report.len() >= 10);
    let mut names: Vec<&str> = report.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), report.len());
    for e in &report {
        assert!(e.passed, "{e:?}");
        assert!(e.checked > 0);
    }
}

#[test]
fn wrong_gradient_mutant_is_caught() {
    // f(x) = Σ x² recorded with the gradient of Σ 3x² instead of 2x.
    let x = Array::new(&[4], vec![0.3, -1.2, 0.8, 2.0]).unwrap();
    let r = check_gradients(&[x], FD_STEP, |tape, v| {
        let value: f64 = v[0].value().data().iter().map(|a| a * a).sum();
        let wrong = v[0].value().map(|a| 6.0 * a);
        tape.scalar_fn(v[0], value, wrong)
    });
    let entry = CheckEntry::from_result("mutant", PRIMITIVE_TOL, r);
    assert!(!entry.passed, "{entry:?}");

    let x = Array::new(&[4], vec![0.3, -1.2, 0.8, 2.0]).unwrap();
    let r = check_gradients(&[x], FD_STEP, |tape, v| {
        let value: f64 = v[0].value().data().iter().map(|a| a * a).sum();
        tape.scalar_fn(v[0], value, v[0].value().map(|a| 2.0 * a))
    });
    assert!(CheckEntry::from_result("honest", PRIMITIVE_TOL, r).passed);
}

#[test]
fn bench_reports_every_entry() {
    let cfg = ModelConfig::micro(4);
    let entries = bench(&cfg, 16, 2, 0).unwrap();
    assert_eq!(entries.len(), 3);
    assert!(entries.iter().all(|e| e.mean_ms.is_finite() && e.mean_ms >= 0.0));
}
