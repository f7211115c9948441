//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with its tolerance; the process exits nonzero if any criterion fails.
//! Built without the libtest harness so the lines always reach the output.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use relumilp_core::encoding::{
    encode_ctar_neuron, encode_pcar_neuron, BigM, EncodingMethod, Penalty,
};
use relumilp_core::harness::{
    ci_instance, run_compare, run_m_sweep, run_penalty_sweep, run_res_sweep, Experiment,
    ExperimentOutcome, ExperimentSpec, DEFAULT_BIG_M, DEFAULT_PENALTY, M_GRID, PENALTY_GRID,
    RES_GRID,
};
use relumilp_core::mds::{audit_schedule, MdsOptions};
use relumilp_core::milp::{
    brute_force_milp, solve_lp, solve_milp, LinExpr, MixedIntegerModel, SolveStatus, SolverConfig,
    VarKind,
};
use relumilp_core::nn::{generate_synthetic_nnbd, sample_box, unit_box};

struct Ledger {
    lines: Vec<(u32, String)>,
    failed: Vec<u32>,
}

impl Ledger {
    fn record(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        self.lines
            .push((id, format!("criterion {id} {verdict}: {name} ({detail})")));
        if !ok {
            self.failed.push(id);
        }
    }
}

fn bpwl_exactness(ledger: &mut Ledger) {
    let start = Instant::now();
    let method = EncodingMethod::Bpwl {
        big_m: BigM::PerNeuron,
    };
    let mut worst = 0.0f64;
    let mut binaries = 0;
    let mut probes = 0;
    for widths in [&[5, 8, 4, 1][..], &[5, 20, 10, 1][..]] {
        for seed in 0..25 {
            let net = generate_synthetic_nnbd(seed, widths).unwrap();
            for z in sample_box(&unit_box(5), 20, 1000 + seed) {
                let (mut model, emb) = common::pinned_input_model(&net, &z, &method);
                binaries += model.binaries().len();
                let (lo, hi) = common::probe(&mut model, &emb);
                let want = net.output_normalized(&z).unwrap();
                worst = worst.max((lo - want).abs()).max((hi - want).abs());
                probes += 1;
            }
        }
    }
    let secs = start.elapsed();
    ledger.record(
        1,
        "BPWL exactness",
        worst <= 1e-6 && secs < Duration::from_secs(300) && binaries > 0,
        format!(
            "{probes} min/max probes, {binaries} binaries total, max |probe - forward| = {worst:.2e} <= 1e-6, {:.1}s < 300s",
            secs.as_secs_f64()
        ),
    );
}

/// LP min and max of `a` with `x` fixed, after `encode` adds the neuron rows.
fn neuron_range(
    x: f64,
    encode: impl Fn(&mut MixedIntegerModel, relumilp_core::milp::VarId, relumilp_core::milp::VarId),
) -> (f64, f64) {
    let mut m = MixedIntegerModel::new();
    let xv = m.add_var("x", x, x, VarKind::Continuous);
    let av = m.add_var("a", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous);
    encode(&mut m, xv, av);
    let config = common::exact_config();
    m.set_objective(LinExpr::term(av, 1.0));
    let lo = solve_lp(&m, &config).unwrap();
    m.set_objective(LinExpr::term(av, -1.0));
    let hi = solve_lp(&m, &config).unwrap();
    assert_eq!(
        (lo.status, hi.status),
        (SolveStatus::Optimal, SolveStatus::Optimal)
    );
    (lo.value(av), hi.value(av))
}

fn neuron_geometry(ledger: &mut Ledger) {
    let mut rng = common::rng(2024);
    let mut worst = 0.0f64;
    let mut worst_pcar = 0.0f64;
    for _ in 0..1000 {
        let lb: f64 = -rng.random_range(0.01..10.0);
        let ub: f64 = rng.random_range(0.01..10.0);
        let x: f64 = rng.random_range(lb..=ub);
        let relu = x.max(0.0);
        let chord = ub * (x - lb) / (ub - lb);
        let (lo, hi) = neuron_range(x, |m, xv, av| {
            encode_ctar_neuron(m, "n", xv, av, lb, ub).unwrap();
        });
        worst = worst.max((lo - relu).abs()).max((hi - chord).abs());

        let c = rng.random_range(0.01..100.0);
        let mut m = MixedIntegerModel::new();
        let xv = m.add_var("x", x, x, VarKind::Continuous);
        let av = m.add_var("a", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous);
        let (_, (a, coef)) = encode_pcar_neuron(&mut m, "n", xv, av, c).unwrap();
        m.set_objective(LinExpr::term(a, coef));
        let r = solve_lp(&m, &common::exact_config()).unwrap();
        worst_pcar = worst_pcar.max((r.value(av) - relu).abs());
    }
    ledger.record(
        2,
        "per-neuron feasible sets",
        worst <= 1e-8 && worst_pcar <= 1e-8,
        format!("1000 triples: CTAR max err {worst:.2e}, PCAR penalty-only max err {worst_pcar:.2e}, tol 1e-8"),
    );
}

fn solver_correctness(ledger: &mut Ledger) {
    let config = SolverConfig::default();
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let m = common::random_milp(50_000 + seed, 12);
        let a = solve_milp(&m, &config).unwrap();
        let b = brute_force_milp(&m, &config).unwrap();
        if a.status != b.status {
            mismatches += 1;
        } else if a.status == SolveStatus::Optimal {
            let d = (a.objective_value - b.objective_value).abs();
            worst = worst.max(d);
            if d > 1e-6 {
                mismatches += 1;
            }
        }
    }
    ledger.record(
        3,
        "branch and bound matches enumeration",
        mismatches == 0,
        format!("200 instances with <= 12 binaries, default config: {mismatches} mismatches, max diff {worst:.2e}, tol 1e-6"),
    );
}

fn spec(experiment: Experiment) -> ExperimentSpec {
    let (scenario, net) = ci_instance();
    ExperimentSpec::new(experiment, scenario, net)
}

fn optimal_rows(out: &ExperimentOutcome) -> bool {
    out.rows().iter().all(|r| r.status == "optimal")
}

fn m_invariance(ledger: &mut Ledger, schedules: &mut Vec<ExperimentOutcome>) {
    let out = run_m_sweep(&spec(Experiment::m_sweep(&M_GRID))).unwrap();
    let rows = out.rows();
    let base = rows[0].objective;
    let spread = rows
        .iter()
        .map(|r| (r.objective - base).abs() / base.abs())
        .fold(0.0, f64::max);
    let slowest = rows.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let times: Vec<String> = rows
        .iter()
        .map(|r| format!("M={}: {:.2}s", r.parameter, r.seconds))
        .collect();
    ledger.record(
        4,
        "BPWL objective independent of M",
        optimal_rows(&out) && spread <= 1e-4 && slowest < 60.0,
        format!(
            "max relative spread {spread:.2e} <= 1e-4; {}",
            times.join(", ")
        ),
    );
    schedules.push(out);
}

fn relaxation_ordering(
    ledger: &mut Ledger,
    schedules: &mut Vec<ExperimentOutcome>,
) -> ExperimentOutcome {
    let out = run_compare(&spec(Experiment::compare(
        BigM::Global(DEFAULT_BIG_M),
        Penalty::Uniform(DEFAULT_PENALTY),
    )))
    .unwrap();
    let rows = out.rows();
    let (bpwl, ctar) = (rows[0], rows[1]);
    let objective_ok = ctar.objective <= bpwl.objective + 1e-6;
    // BPWL is exact, so its error is rounding noise; a relaxation that lands
    // on the ReLU envelope can report exactly zero.
    let err = |r: &relumilp_core::harness::ReportRow| r.error_pct.unwrap_or(0.0);
    let error_ok = rows[1..].iter().all(|r| err(bpwl) <= err(r) + 1e-9);
    let errors: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.3e}%", r.method, err(r)))
        .collect();
    ledger.record(
        5,
        "relaxation ordering",
        optimal_rows(&out) && objective_ok && error_ok,
        format!(
            "CTAR {:.6} <= BPWL {:.6} + 1e-6; errors {} (BPWL minimal within 1e-9 points)",
            ctar.objective,
            bpwl.objective,
            errors.join(", ")
        ),
    );
    schedules.push(out.clone());
    out
}

fn res_monotonicity(ledger: &mut Ledger, schedules: &mut Vec<ExperimentOutcome>) {
    let out = run_res_sweep(&spec(Experiment::res_sweep(
        &RES_GRID,
        Penalty::Uniform(DEFAULT_PENALTY),
    )))
    .unwrap();
    let mut ok = optimal_rows(&out);
    let mut detail = Vec::new();
    for per_method in out.rows().chunks(RES_GRID.len()) {
        let costs: Vec<f64> = per_method.iter().map(|r| r.total_cost).collect();
        ok &= costs.windows(2).all(|w| w[1] <= w[0] + 1e-6);
        detail.push(format!(
            "{}: {}",
            per_method[0].method,
            costs
                .iter()
                .map(|c| format!("{c:.4}"))
                .collect::<Vec<_>>()
                .join(" >= ")
        ));
    }
    ledger.record(
        7,
        "total cost nonincreasing in RES level",
        ok,
        format!("levels {RES_GRID:?}, tol 1e-6; {}", detail.join("; ")),
    );
    schedules.push(out);
}

fn penalty_mechanics(
    ledger: &mut Ledger,
    compare: &ExperimentOutcome,
    schedules: &mut Vec<ExperimentOutcome>,
) {
    let mut grid = vec![0.0];
    grid.extend(PENALTY_GRID);
    let out = run_penalty_sweep(&spec(Experiment::penalty_sweep(&grid))).unwrap();
    let ctar = compare.rows()[1];
    let zero = out.rows()[0];
    let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
    let identical = zero.parameter == "0"
        && same(zero.degradation_pct, ctar.degradation_pct)
        && same(zero.real_degradation_pct, ctar.real_degradation_pct)
        && same(zero.total_cost, ctar.total_cost)
        && same(zero.real_cost, ctar.real_cost)
        && same(zero.penalty_cost, ctar.penalty_cost);
    let plot = out.plot_data();
    let plotted = plot.len() == 1
        && plot[0].0 == "plotdata_penalty.csv"
        && plot[0].1.lines().count() == 1 + 2 * grid.len();
    ledger.record(
        8,
        "penalty sweep mechanics",
        identical && plotted && optimal_rows(&out),
        format!(
            "P-CTAR c=0 bit-identical to CTAR: {identical}; {} rows over c in {grid:?}; plot data emitted: {plotted}",
            out.rows().len()
        ),
    );
    schedules.push(out);
}

fn schedule_audit(ledger: &mut Ledger, schedules: &[ExperimentOutcome]) {
    let (scenario, _) = ci_instance();
    let options = MdsOptions::default();
    let mut worst = 0.0f64;
    let mut terminal = 0.0f64;
    let mut audited = 0;
    for out in schedules {
        for r in &out.records {
            let Some(s) = &r.schedule else { continue };
            if s.status != SolveStatus::Optimal {
                continue;
            }
            let mut sc = scenario.clone();
            sc.res_scale = r.point.res_scale;
            let audit = audit_schedule(&sc, &options, s);
            worst = worst.max(audit.max_violation());
            terminal = terminal.max(audit.get("terminal_energy"));
            audited += 1;
        }
    }
    ledger.record(
        6,
        "schedule feasibility audit",
        audited > 0 && worst <= 1e-6 && terminal <= 1e-6,
        format!("{audited} optimal schedules, max residual {worst:.2e}, terminal energy {terminal:.2e}, tol 1e-6"),
    );
}

fn determinism(ledger: &mut Ledger, first: &ExperimentOutcome) {
    let again = run_compare(&spec(Experiment::compare(
        BigM::Global(DEFAULT_BIG_M),
        Penalty::Uniform(DEFAULT_PENALTY),
    )))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    first.write_to(&a).unwrap();
    again.write_to(&b).unwrap();
    let x = std::fs::read(a.join("report.csv")).unwrap();
    let y = std::fs::read(b.join("report.csv")).unwrap();
    ledger.record(
        9,
        "compare report is byte-identical across runs",
        x == y,
        format!("{} bytes each", x.len()),
    );
}

fn main() {
    let mut ledger = Ledger {
        lines: Vec::new(),
        failed: Vec::new(),
    };
    let mut schedules = Vec::new();
    bpwl_exactness(&mut ledger);
    neuron_geometry(&mut ledger);
    solver_correctness(&mut ledger);
    m_invariance(&mut ledger, &mut schedules);
    let compare = relaxation_ordering(&mut ledger, &mut schedules);
    res_monotonicity(&mut ledger, &mut schedules);
    penalty_mechanics(&mut ledger, &compare, &mut schedules);
    schedule_audit(&mut ledger, &schedules);
    determinism(&mut ledger, &compare);
    ledger.lines.sort();
    for (_, line) in &ledger.lines {
        println!("{line}");
    }
    if !ledger.failed.is_empty() {
        eprintln!("failed criteria: {:?}", ledger.failed);
        std::process::exit(1);
    }
}
