use unipc::harness::{run_study, ConvergenceStudy, RunOptions, StudyResults};

const QUINTIC: &str =
    r#"{"family": "x-free-poly", "coeffs": [0.3, -1.2, 0.5, 0.2, -0.05, 0.01], "dim": 4}"#;

fn study(model: &str, solvers: &str, steps: &str, start: &str) -> StudyResults {
    let json = format!(
        r#"{{"model": {model}, "solvers": [{solvers}], "step_counts": {steps}, "start": "{start}", "seed": 3}}"#
    );
    run_study(
        &ConvergenceStudy::from_json(&json).unwrap(),
        &RunOptions::default(),
    )
    .unwrap()
}

fn check(res: &StudyResults, wants: &[f64]) {
    for (ci, &want) in wants.iter().enumerate() {
        let cfg = &res.study.solvers[ci];
        let fit = res
            .fit(ci)
            .unwrap_or_else(|| panic!("no fit for config {ci}"));
        assert!(
            fit.slope >= want && fit.r_squared > 0.99,
            "{} p={} {:?}: slope {:.3} r2 {:.4}, want >= {want}",
            cfg.label(),
            cfg.order,
            cfg.prediction,
            fit.slope,
            fit.r_squared
        );
    }
}

#[test]
fn exact_start_multistep_orders() {
    let res = study(
        QUINTIC,
        r#"{"order": 1, "corrector": "off"}, {"order": 2, "corrector": "off"}, {"order": 3, "corrector": "off"},
           {"order": 1}, {"order": 2}, {"order": 3}"#,
        "[40, 80, 160, 320, 640]",
        "exact",
    );
    check(&res, &[0.9, 1.8, 2.7, 1.9, 2.8, 3.7]);
}

#[test]
fn exact_start_data_prediction_orders() {
    let res = study(
        QUINTIC,
        r#"{"order": 2, "corrector": "off", "prediction": "data"}, {"order": 2, "prediction": "data"},
           {"order": 3, "prediction": "data"}, {"order": 2, "bh": "b1", "prediction": "data"}"#,
        "[40, 80, 160, 320, 640]",
        "exact",
    );
    check(&res, &[1.8, 2.8, 3.7, 2.8]);
}

#[test]
fn singlestep_orders() {
    let res = study(
        QUINTIC,
        r#"{"order": 2, "variant": "singlestep", "corrector": "off"},
           {"order": 3, "variant": "singlestep", "corrector": "off"},
           {"order": 2, "variant": "singlestep"}"#,
        "[20, 40, 80, 160, 320]",
        "warmup",
    );
    check(&res, &[1.9, 2.8, 2.8]);
}

#[test]
fn corrector_lifts_unip2() {
    let res = study(
        QUINTIC,
        r#"{"order": 2, "corrector": "off"}, {"order": 2}"#,
        "[40, 80, 160, 320, 640]",
        "warmup",
    );
    let base = res.fit(0).unwrap().slope;
    let lifted = res.fit(1).unwrap().slope;
    assert!(lifted - base >= 0.7, "{base:.3} -> {lifted:.3}");
}

#[test]
fn refinement_is_monotone() {
    let res = study(
        r#"{"family": "x-free-poly", "coeffs": [0.3, -1.2, 0.5], "dim": 4}"#,
        r#"{"order": 1, "corrector": "off"}, {"order": 2}, {"order": 3, "corrector": "oracle"},
           {"order": 2, "varying_coefficients": true}, {"order": 2, "prediction": "data"}"#,
        "[10, 20, 40, 80, 160]",
        "warmup",
    );
    for ci in 0..res.study.solvers.len() {
        let pts = res.points(ci);
        for w in pts.windows(2) {
            assert!(w[1].1 < w[0].1, "config {ci}: {:?} -> {:?}", w[0], w[1]);
        }
    }
}

#[test]
fn fine_reference_on_linear_model() {
    let res = study(
        r#"{"family": "linear-in-x", "kappa": [0.2, 0.5], "dim": 2}"#,
        r#"{"order": 1, "corrector": "off"}, {"order": 2}"#,
        "[10, 20, 40, 80]",
        "warmup",
    );
    check(&res, &[0.8, 1.8]);
}
