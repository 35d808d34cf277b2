use twobubble_core::model::ModelSpec;
use twobubble_core::verify::run_verify;

#[test]
fn nlw6_full_verify_passes() {
    let model = ModelSpec::parse("nlw6").unwrap();
    let rep = run_verify(&model, 42, false).unwrap();
    for c in &rep.checks {
        println!(
            "{}: value {:.3e} vs threshold {:.3e} -> {}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    assert!(rep.passed, "failed: {:?}", rep.failed_names());
    assert!((rep.kappa_sq.unwrap() - 1.25).abs() < 1e-6 * 1.25);
    let nu = rep.nu.unwrap();
    assert!(nu > 0.0 && nu < 1.0);
}

#[test]
fn wm3_full_verify_passes() {
    let model = ModelSpec::parse("wm:3").unwrap();
    let rep = run_verify(&model, 42, false).unwrap();
    for c in &rep.checks {
        println!(
            "{}: value {:.3e} vs threshold {:.3e} -> {}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    assert!(rep.passed, "failed: {:?}", rep.failed_names());
}
