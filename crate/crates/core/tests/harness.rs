use relumilp_core::encoding::{BigM, EncodingMethod, Penalty};
use relumilp_core::harness::{
    ci_instance, generate_scenario, run_compare, run_experiment, run_m_sweep, run_penalty_sweep,
    run_res_sweep, Experiment, ExperimentOutcome, ExperimentSpec, HarnessError, RunOptions,
    CI_NET_SEED, CI_WIDTHS, DEFAULT_PENALTY, RES_GRID,
};
use relumilp_core::mds::{params_to_json, series_to_csv, BessParams, MicrogridScenario};
use relumilp_core::nn::{generate_synthetic_nnbd, MlpNetwork};

fn small() -> (MicrogridScenario, MlpNetwork) {
    (
        generate_scenario(7, 4),
        generate_synthetic_nnbd(CI_NET_SEED, &CI_WIDTHS).unwrap(),
    )
}

fn compare_spec(scenario: MicrogridScenario, net: MlpNetwork) -> ExperimentSpec {
    ExperimentSpec::new(
        Experiment::compare(BigM::Global(100.0), Penalty::Uniform(DEFAULT_PENALTY)),
        scenario,
        net,
    )
}

fn assert_cells_finite(out: &ExperimentOutcome) {
    for row in out.rows() {
        assert!(row.has_solution(), "{}: {}", row.method, row.status);
        for v in [
            row.degradation_pct,
            row.real_degradation_pct,
            row.total_cost,
            row.real_cost,
            row.penalty_cost,
            row.gap,
        ] {
            assert!(v.is_finite(), "{}: non-finite cell", row.method);
        }
        assert_eq!(row.error_pct.is_none(), row.real_degradation_pct == 0.0);
    }
    for line in out.report_csv().lines().skip(1) {
        assert!(!line.contains("NaN") && !line.contains("inf"), "{line}");
    }
}

#[test]
fn compare_gives_four_rows_in_fixed_order() {
    let (scenario, net) = small();
    let out = run_compare(&compare_spec(scenario, net)).unwrap();
    let methods: Vec<&str> = out.rows().iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["bpwl", "ctar", "pctar", "pcar"]);
    assert_cells_finite(&out);
    let bpwl = out.rows()[0].error_pct.unwrap();
    for r in &out.rows()[1..] {
        // Penalized relaxations can land on the ReLU envelope exactly.
        assert!(
            bpwl <= r.error_pct.unwrap() + 1e-9,
            "{}: {bpwl} vs {:?}",
            r.method,
            r.error_pct
        );
    }
    for r in out.rows() {
        if r.penalty_cost > 0.0 {
            assert!(
                (r.total_cost - (r.objective - r.penalty_cost)).abs() <= 1e-9 * r.objective.abs()
            );
        }
    }
    let names: Vec<String> = out.plot_data().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["plotdata_compare.csv", "plotdata_degradation.csv"]);
    if out.rows()[3].seconds >= out.rows()[0].seconds {
        eprintln!("note: pcar was not faster than bpwl on this instance");
    }
}

#[test]
fn zero_capacity_storage_gives_identical_rows() {
    let (mut scenario, net) = small();
    let mut unit = BessParams::with_size("bess", 0.0, 0.0);
    unit.capital_cost = 0.0;
    unit.salvage_value = 0.0;
    scenario.bess = vec![unit];
    let out = run_compare(&compare_spec(scenario, net)).unwrap();
    assert_cells_finite(&out);
    let first = out.rows()[0].total_cost;
    for r in out.rows() {
        assert_eq!(r.degradation_pct, 0.0, "{}", r.method);
        assert_eq!(r.real_degradation_pct, 0.0, "{}", r.method);
        assert!(
            (r.total_cost - first).abs() <= 1e-9 * first.abs(),
            "{}",
            r.method
        );
    }
}

#[test]
fn m_sweep_rows_agree_and_auto_matches_global() {
    let (scenario, net) = small();
    let spec = ExperimentSpec::new(
        Experiment::MSweep {
            big_m: vec![BigM::Global(10.0), BigM::Global(100.0), BigM::PerNeuron],
        },
        scenario,
        net,
    );
    let out = run_m_sweep(&spec).unwrap();
    let rows = out.rows();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.status, "optimal");
        assert!(!r.invalid_m);
        assert!((r.objective - rows[0].objective).abs() <= 1e-4 * rows[0].objective.abs());
    }
    assert_eq!(out.plot_data()[0].0, "plotdata_msweep.csv");
}

#[test]
fn tiny_m_is_flagged_invalid() {
    let (scenario, net) = small();
    let spec = ExperimentSpec::new(
        Experiment::m_sweep(&[0.001]),
        scenario.truncated(1).unwrap(),
        net,
    );
    let out = run_m_sweep(&spec).unwrap();
    let row = out.rows()[0];
    assert!(row.invalid_m);
    assert!(out.report_csv().contains("|invalid_m"));
}

#[test]
fn penalty_sweep_validation() {
    let (scenario, net) = small();
    let narrow = ExperimentSpec::new(
        Experiment::penalty_sweep(&[1.0, 10.0]),
        scenario.clone(),
        net.clone(),
    );
    assert!(matches!(narrow.validate(), Err(HarnessError::Invalid(_))));
    let wrong = ExperimentSpec::new(
        Experiment::PenaltySweep {
            methods: vec![EncodingMethod::Ctar],
            penalties: vec![0.1, 100.0],
        },
        scenario.clone(),
        net.clone(),
    );
    assert!(matches!(wrong.validate(), Err(HarnessError::Invalid(_))));
    let ok = ExperimentSpec::new(
        Experiment::penalty_sweep(&[0.0, 0.1, 100.0]),
        scenario.clone(),
        net.clone(),
    );
    assert!(ok.validate().is_ok());
    let not_compare = ExperimentSpec::new(Experiment::penalty_sweep(&[0.1, 100.0]), scenario, net);
    assert!(run_compare(&not_compare).is_err());
}

#[test]
fn penalty_sweep_labels_and_plot_data() {
    let (scenario, net) = small();
    let spec = ExperimentSpec::new(Experiment::penalty_sweep(&[0.1, 100.0]), scenario, net);
    let labels: Vec<String> = spec.points().into_iter().map(|p| p.label).collect();
    assert_eq!(
        labels,
        ["pctar_c0.1", "pctar_c100", "pcar_c0.1", "pcar_c100"]
    );
    let out = run_penalty_sweep(&spec).unwrap();
    assert_cells_finite(&out);
    let (name, csv) = &out.plot_data()[0];
    assert_eq!(name, "plotdata_penalty.csv");
    assert_eq!(csv.lines().count(), 5);
}

fn without_res(mut s: MicrogridScenario) -> MicrogridScenario {
    for d in &mut s.series {
        d.wind_kw = 0.0;
        d.pv_kw = 0.0;
    }
    s
}

#[test]
fn zero_res_level_equals_the_no_res_baseline() {
    let (scenario, net) = small();
    let penalty = Penalty::Uniform(DEFAULT_PENALTY);
    let sweep = ExperimentSpec::new(
        Experiment::res_sweep(&[0.0], penalty.clone()),
        scenario.clone(),
        net.clone(),
    );
    let swept = run_res_sweep(&sweep).unwrap();
    let direct = ExperimentSpec::new(
        Experiment::Compare {
            methods: vec![
                EncodingMethod::PCtar {
                    penalty: penalty.clone(),
                },
                EncodingMethod::Pcar { penalty },
            ],
        },
        without_res(scenario),
        net,
    );
    let direct = run_compare(&direct).unwrap();
    for (a, b) in swept.rows().iter().zip(direct.rows()) {
        assert_eq!(a.method, b.method);
        assert!(
            (a.total_cost - b.total_cost).abs() <= 1e-9 * b.total_cost.abs(),
            "{}",
            a.method
        );
    }
}

#[test]
fn doubling_res_never_raises_the_optimum() {
    let (scenario, net) = small();
    let spec = ExperimentSpec::new(
        Experiment::res_sweep(&[1.0, 2.0], Penalty::Uniform(DEFAULT_PENALTY)),
        scenario,
        net,
    );
    let out = run_res_sweep(&spec).unwrap();
    for pair in out.rows().chunks(2) {
        // The penalized objective is what is minimized over a growing feasible set.
        assert!(
            pair[1].objective <= pair[0].objective + 1e-6,
            "{}",
            pair[0].method
        );
    }
}

#[test]
fn res_sweep_gives_one_row_per_level_and_method() {
    let (scenario, net) = small();
    let spec = ExperimentSpec::new(
        Experiment::Compare {
            methods: vec![EncodingMethod::Ctar],
        },
        scenario.clone(),
        net.clone(),
    );
    assert!(run_res_sweep(&spec).is_err());
    let spec = ExperimentSpec::new(
        Experiment::ResSweep {
            methods: vec![EncodingMethod::Pcar {
                penalty: Penalty::Uniform(DEFAULT_PENALTY),
            }],
            levels: RES_GRID.to_vec(),
        },
        scenario,
        net,
    );
    let out = run_res_sweep(&spec).unwrap();
    assert_eq!(out.rows().len(), 3);
    let params: Vec<&str> = out.rows().iter().map(|r| r.parameter.as_str()).collect();
    assert_eq!(params, ["0.5", "1", "1.5"]);
    let (name, csv) = &out.plot_data()[0];
    assert_eq!(name, "plotdata_res.csv");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn negative_res_level_is_rejected() {
    let (scenario, net) = small();
    let spec = ExperimentSpec::new(
        Experiment::res_sweep(&[-1.0], Penalty::Uniform(1.0)),
        scenario,
        net,
    );
    assert!(matches!(
        run_res_sweep(&spec),
        Err(HarnessError::Invalid(_))
    ));
}

#[test]
fn generated_scenarios_are_deterministic() {
    let a = generate_scenario(11, 24);
    let b = generate_scenario(11, 24);
    assert_eq!(series_to_csv(&a.series), series_to_csv(&b.series));
    assert_eq!(
        params_to_json(&a.device_params()),
        params_to_json(&b.device_params())
    );
    let c = generate_scenario(12, 24);
    assert_ne!(series_to_csv(&a.series), series_to_csv(&c.series));
}

#[test]
fn generated_scenario_shape_and_device_sizes() {
    let s = generate_scenario(3, 24);
    assert_eq!(s.horizon(), 24);
    assert_eq!(s.dt, 1.0);
    for (t, d) in s.series.iter().enumerate() {
        if !(6..19).contains(&t) {
            assert_eq!(d.pv_kw, 0.0, "t={t}");
        }
    }
    let peak_pv = (0..24)
        .max_by(|&a, &b| s.series[a].pv_kw.total_cmp(&s.series[b].pv_kw))
        .unwrap();
    assert!((10..=14).contains(&peak_pv), "{peak_pv}");
    let peak_load = (0..24)
        .max_by(|&a, &b| s.series[a].load_kw.total_cmp(&s.series[b].load_kw))
        .unwrap();
    assert!((17..=22).contains(&peak_load), "{peak_load}");
    assert_eq!(s.generators[0].p_max, 180.0);
    assert_eq!(s.wind_capacity_kw, 1000.0);
    assert_eq!(s.pv_capacity_kw, 1500.0);
    let b = &s.bess[0];
    assert_eq!(b.p_max, 300.0);
    assert!((b.eta_char * b.eta_disc - 0.9).abs() < 1e-12);
    assert!(s.validate().unwrap().is_empty());
}

#[test]
fn reports_are_byte_identical_across_runs_and_exclude_timings() {
    let (scenario, net) = small();
    let spec = compare_spec(scenario, net);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let options = RunOptions {
        export_lp: true,
        ..RunOptions::default()
    };
    let files = run_experiment(&spec, &options)
        .unwrap()
        .write_to(a.path())
        .unwrap();
    run_experiment(&spec, &options)
        .unwrap()
        .write_to(b.path())
        .unwrap();
    for path in &files {
        let name = path.file_name().unwrap();
        if name == "timings.csv" {
            continue;
        }
        let x = std::fs::read(path).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in [
        "report.csv",
        "timings.csv",
        "schedule_bpwl.csv",
        "model_pcar.lp",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    let report = std::fs::read_to_string(a.path().join("report.csv")).unwrap();
    assert!(!report.lines().next().unwrap().contains("seconds"));
}

#[test]
fn skip_solve_exports_without_solving() {
    let (scenario, net) = ci_instance();
    let spec = compare_spec(scenario, net);
    let out = run_experiment(
        &spec,
        &RunOptions {
            export_lp: true,
            skip_solve: true,
            ..RunOptions::default()
        },
    )
    .unwrap();
    for r in &out.records {
        assert_eq!(r.row.status, "not_solved");
        assert!(r.lp.as_ref().unwrap().contains("Minimize"));
    }
}
