use qmaxent::analysis::{diagnose, DiagnoseOptions};
use qmaxent::model::{build_family, make_instance, FamilyKind};
use qmaxent::solvers::{run, Method, SolverConfig, Status};

fn configs() -> Vec<SolverConfig> {
    vec![
        SolverConfig::new(Method::Qis),
        SolverConfig::new(Method::Gd),
        SolverConfig::new(Method::AmQis).with_bb(true),
        SolverConfig::new(Method::LbfgsGd).with_bb(true),
    ]
}

#[test]
fn maximally_mixed_target_is_reached_at_once() {
    for kind in [FamilyKind::Ising, FamilyKind::Transversal1D, FamilyKind::Local1D] {
        let fam = build_family(kind, 3, 1).unwrap();
        let zeros = vec![0.0; fam.len()];
        let inst = make_instance(&fam.with_coefficients(&zeros).unwrap(), 1.0, false).unwrap();
        for cfg in configs() {
            let label = cfg.label();
            let trace = run(&inst, &cfg.with_tol(1e-12)).unwrap();
            assert_eq!(trace.status, Status::Converged);
            assert!(trace.iterations() <= 2, "{kind} {label}: {}", trace.iterations());
        }
    }
}

#[test]
fn qis_beats_gd_on_six_qubit_ising() {
    let inst = make_instance(&build_family(FamilyKind::Ising, 6, 0).unwrap(), 1.0, false).unwrap();
    let steps = |cfg: SolverConfig| run(&inst, &cfg.with_tol(1e-7)).unwrap().steps_to(1e-7).unwrap();
    let (qis, gd) = (steps(SolverConfig::new(Method::Qis)), steps(SolverConfig::new(Method::Gd)));
    assert!(qis < gd, "QIS {qis} vs GD {gd}");
    assert!((100..=10_000).contains(&qis));
}

#[test]
fn plain_anderson_reaches_precision_on_six_qubit_local() {
    let inst = make_instance(&build_family(FamilyKind::Local1D, 6, 0).unwrap(), 1.0, false).unwrap();
    let trace = run(&inst, &SolverConfig::new(Method::AmQis).with_tol(1e-7)).unwrap();
    let steps = trace.steps_to(1e-7).expect("reaches 1e-7");
    assert!(steps <= 40, "{steps}");
}

#[test]
fn completed_and_plain_families_both_diagnose_cleanly() {
    let fam = build_family(FamilyKind::Ising, 3, 5).unwrap();
    for complete in [false, true] {
        let inst = make_instance(&fam, 1.0, complete).unwrap();
        let report = diagnose(&inst, &DiagnoseOptions::default()).unwrap();
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "complete={complete}: {failed:#?}");
    }
}

#[test]
fn parameters_are_recovered() {
    let fam = build_family(FamilyKind::Transversal1D, 4, 2).unwrap();
    for complete in [false, true] {
        let inst = make_instance(&fam, 1.0, complete).unwrap();
        let trace = run(&inst, &SolverConfig::new(Method::LbfgsGd).with_bb(true).with_tol(1e-12).with_max_iters(200)).unwrap();
        assert_eq!(trace.status, Status::Converged);
        let mu = inst.recover_mu(trace.final_lambda());
        let truth = &inst.ground_truth.as_ref().unwrap().mu;
        let err = mu.iter().zip(truth).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        assert!(err <= 1e-5, "complete={complete}: {err:e}");
    }
}
