//! Experiment drivers: method comparison, big-M sweep, penalty sweep, RES
//! sweep, and the synthetic scenario generator.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoding::{BigM, EmbedOptions, EncodingMethod, Penalty};
use crate::mds::{
    BessParams, GeneratorParams, IntervalData, MdsOptions, MicrogridScenario, NnbdModel,
    ScheduleReport,
};
use crate::milp::SolverConfig;
use crate::nn::{generate_synthetic_nnbd, MlpNetwork};
use crate::par;

/// Seed and widths of the small reference instance.
pub const CI_SCENARIO_SEED: u64 = 7;
pub const CI_NET_SEED: u64 = 42;
pub const CI_WIDTHS: [usize; 4] = [5, 8, 4, 1];
pub const CI_HORIZON: usize = 8;

/// A summer residential day: midday PV peak, evening load peak, and a
/// diurnal price curve peaking in the late afternoon. `horizon` intervals
/// cover 24 hours.
pub fn generate_scenario(seed: u64, horizon: usize) -> MicrogridScenario {
    assert!(horizon > 0, "horizon must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 24.0 / horizon as f64;
    let wind_cap = 1000.0;
    let pv_cap = 1500.0;
    let mut noise = move |amp: f64| 1.0 + amp * (2.0 * rng.random::<f64>() - 1.0);
    let series = (0..horizon)
        .map(|t| {
            let hour = (t as f64 + 0.5) * dt;
            let sun = if (6.0..19.0).contains(&hour) {
                (PI * (hour - 6.0) / 13.0).sin().max(0.0).powf(1.2)
            } else {
                0.0
            };
            let pv = pv_cap * 0.8 * sun * noise(0.05);
            let wind =
                wind_cap * (0.25 + 0.1 * (2.0 * PI * (hour - 3.0) / 24.0).cos()) * noise(0.15);
            let evening = (-((hour - 19.5) / 2.5).powi(2)).exp();
            let morning = (-((hour - 7.5) / 1.5).powi(2)).exp();
            let load = (900.0 + 1100.0 * evening + 300.0 * morning) * noise(0.03);
            let temp = 29.0 + 7.0 * (PI * (hour - 9.0) / 12.0).sin();
            let buy = 0.03 + 0.10 * (-((hour - 17.5) / 2.5).powi(2)).exp() + 0.01 * morning;
            IntervalData {
                load_kw: round_to(load, 3),
                wind_kw: round_to(wind, 3),
                pv_kw: round_to(pv, 3),
                temp_c: round_to(temp, 2),
                buy_price: round_to(buy, 5),
                sell_price: round_to(0.85 * buy, 5),
            }
        })
        .collect();
    MicrogridScenario {
        dt,
        series,
        p_grid_max: 2500.0,
        reserve_ratio: 0.1,
        generators: vec![GeneratorParams {
            name: "diesel".into(),
            c_g: 0.30,
            c_g_nl: 4.0,
            c_g_su: 15.0,
            p_min: 40.0,
            p_max: 180.0,
            ramp: 120.0,
            initially_on: false,
        }],
        bess: vec![BessParams::with_size("bess", 600.0, 300.0)],
        res_scale: 1.0,
        wind_capacity_kw: wind_cap,
        pv_capacity_kw: pv_cap,
    }
}

/// Nearest double to `v` rounded to `digits` decimals, so files print short.
fn round_to(v: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    (v * scale).round() / scale
}

/// The reference instance: 8 three-hour intervals and a small network.
pub fn ci_instance() -> (MicrogridScenario, MlpNetwork) {
    let scenario = generate_scenario(CI_SCENARIO_SEED, CI_HORIZON);
    let net = generate_synthetic_nnbd(CI_NET_SEED, &CI_WIDTHS).expect("valid widths");
    (scenario, net)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What an experiment varies.
#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    /// One run per method on the same scenario.
    Compare { methods: Vec<EncodingMethod> },
    /// BPWL with each big-M choice.
    MSweep { big_m: Vec<BigM> },
    /// Each penalized method with each uniform penalty coefficient.
    PenaltySweep {
        methods: Vec<EncodingMethod>,
        penalties: Vec<f64>,
    },
    /// Each method with wind and PV scaled by each level.
    ResSweep {
        methods: Vec<EncodingMethod>,
        levels: Vec<f64>,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Compare { .. } => "compare",
            Experiment::MSweep { .. } => "msweep",
            Experiment::PenaltySweep { .. } => "psweep",
            Experiment::ResSweep { .. } => "ressweep",
        }
    }

    /// The four methods with the given BPWL M and penalty.
    pub fn compare(big_m: BigM, penalty: Penalty) -> Self {
        Experiment::Compare {
            methods: vec![
                EncodingMethod::Bpwl { big_m },
                EncodingMethod::Ctar,
                EncodingMethod::PCtar {
                    penalty: penalty.clone(),
                },
                EncodingMethod::Pcar { penalty },
            ],
        }
    }

    pub fn m_sweep(grid: &[f64]) -> Self {
        Experiment::MSweep {
            big_m: grid.iter().map(|&m| BigM::Global(m)).collect(),
        }
    }

    /// Both penalized methods over `penalties`.
    pub fn penalty_sweep(penalties: &[f64]) -> Self {
        Experiment::PenaltySweep {
            methods: vec![
                EncodingMethod::PCtar {
                    penalty: Penalty::Uniform(0.0),
                },
                EncodingMethod::Pcar {
                    penalty: Penalty::Uniform(0.0),
                },
            ],
            penalties: penalties.to_vec(),
        }
    }

    /// Both penalized methods with coefficient `penalty` over `levels`.
    pub fn res_sweep(levels: &[f64], penalty: Penalty) -> Self {
        Experiment::ResSweep {
            methods: vec![
                EncodingMethod::PCtar {
                    penalty: penalty.clone(),
                },
                EncodingMethod::Pcar { penalty },
            ],
            levels: levels.to_vec(),
        }
    }
}

/// Default M grid, penalty grid and RES levels of the sweeps.
pub const M_GRID: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];
pub const PENALTY_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const RES_GRID: [f64; 3] = [0.5, 1.0, 1.5];
pub const DEFAULT_BIG_M: f64 = 100.0;
pub const DEFAULT_PENALTY: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub scenario: MicrogridScenario,
    pub net: MlpNetwork,
    pub solver: SolverConfig,
    pub mds: MdsOptions,
    pub embed: EmbedOptions,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, scenario: MicrogridScenario, net: MlpNetwork) -> Self {
        Self {
            experiment,
            scenario,
            net,
            solver: SolverConfig::default(),
            mds: MdsOptions::default(),
            embed: EmbedOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::Invalid(m));
        self.scenario
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        self.solver
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        match &self.experiment {
            Experiment::Compare { methods } if methods.is_empty() => invalid("no methods".into()),
            Experiment::MSweep { big_m } if big_m.is_empty() => invalid("empty M grid".into()),
            Experiment::PenaltySweep { methods, penalties } => {
                if methods.is_empty() || penalties.is_empty() {
                    return invalid("empty method list or penalty grid".into());
                }
                if let Some(m) = methods.iter().find(|m| m.penalty().is_none()) {
                    return invalid(format!("{} takes no penalty", m.name()));
                }
                let positive: Vec<f64> = penalties.iter().copied().filter(|&c| c > 0.0).collect();
                let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = positive.iter().copied().fold(0.0, f64::max);
                if positive.is_empty() || hi / lo < 1e3 * (1.0 - 1e-12) {
                    return invalid(
                        "penalty grid must span at least three orders of magnitude".into(),
                    );
                }
                Ok(())
            }
            Experiment::ResSweep { methods, levels } => {
                if methods.is_empty() || levels.is_empty() {
                    return invalid("empty method list or RES grid".into());
                }
                if let Some(r) = levels.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                    return invalid(format!("RES level {r} must be finite and nonnegative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Every solve the experiment performs, in report order.
    pub fn points(&self) -> Vec<RunPoint> {
        let base = self.scenario.res_scale;
        match &self.experiment {
            Experiment::Compare { methods } => {
                let mut methods = methods.clone();
                methods.sort_by_key(method_rank);
                methods
                    .into_iter()
                    .map(|m| RunPoint {
                        label: m.name().to_string(),
                        parameter: method_parameter(&m),
                        method: m,
                        res_scale: base,
                    })
                    .collect()
            }
            Experiment::MSweep { big_m } => big_m
                .iter()
                .map(|&m| RunPoint {
                    label: format!("bpwl_m{m}"),
                    parameter: m.to_string(),
                    method: EncodingMethod::Bpwl { big_m: m },
                    res_scale: base,
                })
                .collect(),
            Experiment::PenaltySweep { methods, penalties } => methods
                .iter()
                .flat_map(|m| {
                    penalties.iter().map(move |&c| {
                        let method = with_penalty(m, Penalty::Uniform(c));
                        RunPoint {
                            label: format!("{}_c{c}", m.name()),
                            parameter: c.to_string(),
                            method,
                            res_scale: base,
                        }
                    })
                })
                .collect(),
            Experiment::ResSweep { methods, levels } => methods
                .iter()
                .flat_map(|m| {
                    levels.iter().map(move |&r| RunPoint {
                        label: format!("{}_res{r}", m.name()),
                        parameter: r.to_string(),
                        method: m.clone(),
                        res_scale: r,
                    })
                })
                .collect(),
        }
    }
}

fn method_rank(m: &EncodingMethod) -> u8 {
    match m {
        EncodingMethod::Bpwl { .. } => 0,
        EncodingMethod::Ctar => 1,
        EncodingMethod::PCtar { .. } => 2,
        EncodingMethod::Pcar { .. } => 3,
    }
}

fn with_penalty(m: &EncodingMethod, penalty: Penalty) -> EncodingMethod {
    match m {
        EncodingMethod::PCtar { .. } => EncodingMethod::PCtar { penalty },
        EncodingMethod::Pcar { .. } => EncodingMethod::Pcar { penalty },
        other => other.clone(),
    }
}

fn penalty_label(p: &Penalty) -> String {
    match p {
        Penalty::Uniform(c) => c.to_string(),
        Penalty::PerLayer(cs) => cs.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
    }
}

/// The method's own parameter: M for BPWL, the penalty for the penalized
/// methods, empty for CTAR.
pub fn method_parameter(m: &EncodingMethod) -> String {
    match m {
        EncodingMethod::Bpwl { big_m } => big_m.to_string(),
        EncodingMethod::Ctar => String::new(),
        EncodingMethod::PCtar { penalty } | EncodingMethod::Pcar { penalty } => {
            penalty_label(penalty)
        }
    }
}

/// One solve of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPoint {
    /// Unique within the experiment; used in output file names.
    pub label: String,
    pub parameter: String,
    pub method: EncodingMethod,
    pub res_scale: f64,
}

/// One line of a report. Cost and degradation cells are `NaN` when the run
/// produced no schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub parameter: String,
    pub degradation_pct: f64,
    pub real_degradation_pct: f64,
    /// Absent when real degradation is zero.
    pub error_pct: Option<f64>,
    pub total_cost: f64,
    pub real_cost: f64,
    pub penalty_cost: f64,
    pub seconds: f64,
    /// Solver status, or `error` when the model could not be built.
    pub status: String,
    pub gap: f64,
    pub objective: f64,
    pub nodes: u64,
    pub pivots: u64,
    /// Some BPWL neuron's bound magnitude exceeds the global M.
    pub invalid_m: bool,
}

impl ReportRow {
    fn from_report(point: &RunPoint, report: &ScheduleReport) -> Self {
        Self {
            method: point.method.name().to_string(),
            parameter: point.parameter.clone(),
            degradation_pct: report.degradation_pct(),
            real_degradation_pct: report.real_degradation_pct(),
            error_pct: report.error_pct,
            total_cost: report.total_cost,
            real_cost: report.real_cost,
            penalty_cost: report.penalty_cost,
            seconds: report.stats.seconds,
            status: report.status.as_str().to_string(),
            gap: report.gap,
            objective: report.objective,
            nodes: report.stats.nodes,
            pivots: report.stats.pivots,
            invalid_m: report.invalid_big_m(),
        }
    }

    fn failed(point: &RunPoint, message: &str) -> Self {
        log::error!("{}: {message}", point.label);
        Self {
            method: point.method.name().to_string(),
            parameter: point.parameter.clone(),
            degradation_pct: f64::NAN,
            real_degradation_pct: f64::NAN,
            error_pct: None,
            total_cost: f64::NAN,
            real_cost: f64::NAN,
            penalty_cost: f64::NAN,
            seconds: 0.0,
            status: "error".to_string(),
            gap: f64::NAN,
            objective: f64::NAN,
            nodes: 0,
            pivots: 0,
            invalid_m: false,
        }
    }

    /// A schedule was found and verified.
    pub fn has_solution(&self) -> bool {
        self.total_cost.is_finite()
    }

    /// Status cell, with the invalid-M flag appended.
    pub fn status_cell(&self) -> String {
        if self.invalid_m {
            format!("{}|invalid_m", self.status)
        } else {
            self.status.clone()
        }
    }
}

/// Everything one solve produced.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub point: RunPoint,
    pub row: ReportRow,
    pub schedule: Option<ScheduleReport>,
    /// LP text of the built model, when requested.
    pub lp: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Solve independent points concurrently when built with `parallel`.
    #[default]
    Parallel,
    Sequential,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub execution: Execution,
    pub export_lp: bool,
    /// Build (and export) without solving.
    pub skip_solve: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub kind: &'static str,
    pub records: Vec<RunRecord>,
}

/// Runs every point of `spec`. Failures of individual points are recorded
/// in their rows; only an invalid spec is an error.
pub fn run_experiment(
    spec: &ExperimentSpec,
    options: &RunOptions,
) -> Result<ExperimentOutcome, HarnessError> {
    spec.validate()?;
    let points = spec.points();
    let solve = |p: &RunPoint| run_point(spec, p, options);
    let records = match options.execution {
        Execution::Parallel => par::map(&points, solve),
        Execution::Sequential => par::map_seq(&points, solve),
    };
    Ok(ExperimentOutcome {
        kind: spec.experiment.kind(),
        records,
    })
}

fn run_point(spec: &ExperimentSpec, point: &RunPoint, options: &RunOptions) -> RunRecord {
    let mut scenario = spec.scenario.clone();
    scenario.res_scale = point.res_scale;
    let built = NnbdModel::build(&scenario, &spec.net, &point.method, &spec.mds, &spec.embed);
    let model = match built {
        Ok(m) => m,
        Err(e) => {
            return RunRecord {
                point: point.clone(),
                row: ReportRow::failed(point, &e.to_string()),
                schedule: None,
                lp: None,
            }
        }
    };
    let lp = options.export_lp.then(|| model.lp_text());
    if options.skip_solve {
        let mut row = ReportRow::failed(point, "not solved");
        row.status = "not_solved".to_string();
        return RunRecord {
            point: point.clone(),
            row,
            schedule: None,
            lp,
        };
    }
    match model.solve(&scenario, &spec.net, &spec.solver) {
        Ok(report) => {
            log::info!(
                "{}: {} objective {} in {:.2}s ({} nodes)",
                point.label,
                report.status,
                report.objective,
                report.stats.seconds,
                report.stats.nodes
            );
            RunRecord {
                point: point.clone(),
                row: ReportRow::from_report(point, &report),
                schedule: report.has_solution().then_some(report),
                lp,
            }
        }
        Err(e) => RunRecord {
            point: point.clone(),
            row: ReportRow::failed(point, &e.to_string()),
            schedule: None,
            lp,
        },
    }
}

pub fn run_compare(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    expect_kind(spec, "compare")?;
    run_experiment(spec, &RunOptions::default())
}

pub fn run_m_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    expect_kind(spec, "msweep")?;
    run_experiment(spec, &RunOptions::default())
}

pub fn run_penalty_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    expect_kind(spec, "psweep")?;
    run_experiment(spec, &RunOptions::default())
}

pub fn run_res_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    expect_kind(spec, "ressweep")?;
    run_experiment(spec, &RunOptions::default())
}

fn expect_kind(spec: &ExperimentSpec, kind: &str) -> Result<(), HarnessError> {
    if spec.experiment.kind() == kind {
        Ok(())
    } else {
        Err(HarnessError::Invalid(format!(
            "expected a {kind} experiment, got {}",
            spec.experiment.kind()
        )))
    }
}

/// Finite values in shortest round-trip form (exponent notation at extreme
/// magnitudes); anything else is an empty cell.
fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, cell)
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub const REPORT_HEADER: [&str; 10] = [
    "method",
    "parameter",
    "degradation_pct",
    "real_degradation_pct",
    "error_pct",
    "total_cost",
    "real_cost",
    "penalty_cost",
    "status",
    "gap",
];

pub const TIMINGS_HEADER: [&str; 8] = [
    "method",
    "parameter",
    "status",
    "objective",
    "gap",
    "nodes",
    "pivots",
    "seconds",
];

impl ExperimentOutcome {
    pub fn rows(&self) -> Vec<&ReportRow> {
        self.records.iter().map(|r| &r.row).collect()
    }

    /// The report proper. Wall time is kept out of it so reruns are
    /// byte-identical; see [`Self::timings_csv`].
    pub fn report_csv(&self) -> String {
        write_csv(
            &REPORT_HEADER,
            self.records.iter().map(|r| {
                let w = &r.row;
                vec![
                    w.method.clone(),
                    w.parameter.clone(),
                    cell(w.degradation_pct),
                    cell(w.real_degradation_pct),
                    opt_cell(w.error_pct),
                    cell(w.total_cost),
                    cell(w.real_cost),
                    cell(w.penalty_cost),
                    w.status_cell(),
                    cell(w.gap),
                ]
            }),
        )
    }

    /// Solver statistics per run, including wall seconds.
    pub fn timings_csv(&self) -> String {
        write_csv(
            &TIMINGS_HEADER,
            self.records.iter().map(|r| {
                let w = &r.row;
                vec![
                    w.method.clone(),
                    w.parameter.clone(),
                    w.status_cell(),
                    cell(w.objective),
                    cell(w.gap),
                    w.nodes.to_string(),
                    w.pivots.to_string(),
                    format!("{:.3}", w.seconds),
                ]
            }),
        )
    }

    /// Plot-ready series as `(file name, csv)` pairs.
    pub fn plot_data(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        match self.kind {
            "compare" => {
                out.push((
                    "plotdata_compare.csv".to_string(),
                    self.plot_by_parameter("method"),
                ));
                out.push((
                    "plotdata_degradation.csv".to_string(),
                    self.plot_interval_degradation(),
                ));
            }
            "msweep" => out.push(("plotdata_msweep.csv".to_string(), self.plot_msweep())),
            "psweep" => out.push((
                "plotdata_penalty.csv".to_string(),
                self.plot_by_parameter("c_h"),
            )),
            "ressweep" => out.push((
                "plotdata_res.csv".to_string(),
                self.plot_by_parameter("res_scale"),
            )),
            _ => {}
        }
        out
    }

    fn plot_by_parameter(&self, x: &str) -> String {
        write_csv(
            &[
                "method",
                x,
                "degradation_pct",
                "real_degradation_pct",
                "error_pct",
                "total_cost",
                "real_cost",
                "penalty_cost",
            ],
            self.records.iter().map(|r| {
                let w = &r.row;
                vec![
                    w.method.clone(),
                    if x == "method" {
                        w.method.clone()
                    } else {
                        w.parameter.clone()
                    },
                    cell(w.degradation_pct),
                    cell(w.real_degradation_pct),
                    opt_cell(w.error_pct),
                    cell(w.total_cost),
                    cell(w.real_cost),
                    cell(w.penalty_cost),
                ]
            }),
        )
    }

    fn plot_msweep(&self) -> String {
        write_csv(
            &[
                "big_m",
                "degradation_pct",
                "total_cost",
                "nodes",
                "pivots",
                "status",
            ],
            self.records.iter().map(|r| {
                let w = &r.row;
                vec![
                    w.parameter.clone(),
                    cell(w.degradation_pct),
                    cell(w.total_cost),
                    w.nodes.to_string(),
                    w.pivots.to_string(),
                    w.status_cell(),
                ]
            }),
        )
    }

    /// Per-interval predicted and real degradation of every run, summed over
    /// storage units.
    fn plot_interval_degradation(&self) -> String {
        let horizon = self
            .records
            .iter()
            .filter_map(|r| r.schedule.as_ref())
            .map(|s| s.intervals.len())
            .max()
            .unwrap_or(0);
        let mut header = vec!["t".to_string()];
        for r in &self.records {
            header.push(format!("{}_model", r.point.label));
            header.push(format!("{}_real", r.point.label));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            &header,
            (0..horizon).map(|t| {
                let mut row = vec![t.to_string()];
                for r in &self.records {
                    match r.schedule.as_ref().and_then(|s| s.intervals.get(t)) {
                        Some(iv) => {
                            row.push(cell(iv.bess.iter().map(|b| b.degradation).sum()));
                            row.push(cell(iv.bess.iter().map(|b| b.real_degradation).sum()));
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                row
            }),
        )
    }

    /// Writes `report.csv`, `timings.csv`, plot data, one schedule per
    /// solved run, and LP files when present. Returns the written paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let io = |path: &Path, source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut files = vec![
            ("report.csv".to_string(), self.report_csv()),
            ("timings.csv".to_string(), self.timings_csv()),
        ];
        files.extend(self.plot_data());
        for r in &self.records {
            if let Some(s) = &r.schedule {
                files.push((format!("schedule_{}.csv", r.point.label), schedule_csv(s)));
            }
            if let Some(lp) = &r.lp {
                files.push((format!("model_{}.lp", r.point.label), lp.clone()));
            }
        }
        let mut written = Vec::with_capacity(files.len());
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// One line per interval: generator, storage and grid decisions plus the
/// predicted and real degradation.
pub fn schedule_csv(report: &ScheduleReport) -> String {
    let first = report.intervals.first();
    let n_gen = first.map_or(0, |i| i.generators.len());
    let n_bess = first.map_or(0, |i| i.bess.len());
    let mut header = vec!["t".to_string()];
    for g in 0..n_gen {
        for f in ["p", "u", "v"] {
            header.push(format!("gen{g}_{f}"));
        }
    }
    for s in 0..n_bess {
        for f in [
            "ch",
            "dis",
            "energy",
            "soc",
            "dod",
            "c_rate",
            "degradation",
            "real_degradation",
        ] {
            header.push(format!("bess{s}_{f}"));
        }
    }
    header.extend(["buy", "sell", "spill"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &header,
        report.intervals.iter().map(|iv| {
            let mut row = vec![iv.t.to_string()];
            for g in &iv.generators {
                row.extend([cell(g.p), cell(g.u), cell(g.v)]);
            }
            for b in &iv.bess {
                row.extend(
                    [
                        b.ch,
                        b.dis,
                        b.energy,
                        b.soc,
                        b.dod,
                        b.c_rate,
                        b.degradation,
                        b.real_degradation,
                    ]
                    .map(cell),
                );
            }
            row.extend([cell(iv.buy), cell(iv.sell), cell(iv.spill)]);
            row
        }),
    )
}
