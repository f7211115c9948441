//! `relumilp`: run the method comparison and the parameter sweeps on a
//! scenario, or generate a synthetic scenario and network.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relumilp_core::encoding::{BigM, EncodingMethod, Penalty};
use relumilp_core::harness::{
    generate_scenario, run_experiment, Execution, Experiment, ExperimentOutcome, ExperimentSpec,
    RunOptions, CI_NET_SEED, CI_SCENARIO_SEED, DEFAULT_BIG_M, DEFAULT_PENALTY, M_GRID,
    PENALTY_GRID, RES_GRID,
};
use relumilp_core::mds::{load_scenario, save_scenario, MicrogridScenario};
use relumilp_core::milp::SolverConfig;
use relumilp_core::nn::{
    bounds_to_json, generate_synthetic_nnbd, load_bounds, load_network, propagate_bounds,
    save_network, Interval, MlpNetwork, NNBD_FEATURES,
};

#[derive(Parser)]
#[command(
    name = "relumilp",
    version,
    about = "Degradation-aware microgrid scheduling with embedded ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve with every linearization method and compare.
    Compare(RunArgs),
    /// BPWL over a grid of big-M values.
    Msweep(RunArgs),
    /// P-CTAR and PCAR over a grid of penalty coefficients.
    Psweep(RunArgs),
    /// Re-solve with wind and PV scaled by each level.
    Ressweep(RunArgs),
    /// Write a synthetic scenario and network.
    Gen(GenArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Per-interval series CSV. Without it a synthetic day is generated.
    #[arg(long, requires = "params")]
    scenario: Option<PathBuf>,
    /// Device parameter JSON accompanying --scenario.
    #[arg(long, requires = "scenario")]
    params: Option<PathBuf>,
    /// Seed of the synthetic scenario.
    #[arg(long, default_value_t = CI_SCENARIO_SEED)]
    seed: u64,
    /// Weight file, or `seed:N` for a synthetic network.
    #[arg(long, default_value_t = format!("seed:{CI_NET_SEED}"))]
    net: String,
    /// Layer widths of a synthetic network.
    #[arg(long, value_delimiter = ',', default_value = "5,8,4,1")]
    widths: Vec<usize>,
    /// Number of intervals; truncates a loaded scenario.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Methods (bpwl, ctar, pctar, pcar); defaults depend on the command.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// BPWL big-M: a number or `auto`; a list for msweep.
    #[arg(long, value_delimiter = ',')]
    big_m: Vec<String>,
    /// Penalty coefficient; a list for psweep.
    #[arg(long, value_delimiter = ',')]
    penalty: Vec<f64>,
    /// RES levels for ressweep.
    #[arg(long, value_delimiter = ',')]
    res: Vec<f64>,
    /// Neuron bounds: `auto` propagates each interval's feature box; a file
    /// supplies one table for every interval.
    #[arg(long, default_value = "auto")]
    bounds: String,
    /// Per-solve time limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Per-solve node limit.
    #[arg(long)]
    node_limit: Option<u64>,
    /// Relative MIP gap target.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write `model_<run>.lp` for each run.
    #[arg(long)]
    export_lp: bool,
    /// Build and export models without solving them.
    #[arg(long, requires = "export_lp")]
    no_solve: bool,
    /// Solve the runs one after another.
    #[arg(long)]
    sequential: bool,
    /// Exit successfully even when some run has no proven solution.
    #[arg(long)]
    best_effort: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = CI_SCENARIO_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    horizon: usize,
    #[arg(long, default_value_t = CI_NET_SEED)]
    net_seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "5,8,4,1")]
    widths: Vec<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (kind, args) = match cli.command {
        Command::Gen(g) => {
            generate(&g)?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::Compare(a) => ("compare", a),
        Command::Msweep(a) => ("msweep", a),
        Command::Psweep(a) => ("psweep", a),
        Command::Ressweep(a) => ("ressweep", a),
    };
    let experiment = experiment(kind, &args)?;
    let scenario = load_input_scenario(&args.input)?;
    let net = load_input_net(&args.input)?;
    let mut spec = ExperimentSpec::new(experiment, scenario, net);
    spec.solver = solver_config(&args)?;
    if args.bounds != "auto" {
        spec.mds.bounds = Some(load_bounds(&args.bounds)?);
    }
    let options = RunOptions {
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        export_lp: args.export_lp,
        skip_solve: args.no_solve,
    };
    let outcome = run_experiment(&spec, &options)?;
    let written = outcome.write_to(&args.out)?;
    print_summary(&outcome);
    for path in &written {
        log::info!("wrote {}", path.display());
    }
    let unsolved: Vec<String> = outcome
        .records
        .iter()
        .filter(|r| !matches!(r.row.status.as_str(), "optimal" | "gap_limit"))
        .map(|r| format!("{} ({})", r.point.label, r.row.status))
        .collect();
    if !unsolved.is_empty() && !args.no_solve {
        eprintln!("runs without a proven solution: {}", unsolved.join(", "));
        if !args.best_effort {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment(kind: &str, args: &RunArgs) -> Result<Experiment> {
    let single_m = || -> Result<BigM> {
        match args.big_m.as_slice() {
            [] => Ok(BigM::Global(DEFAULT_BIG_M)),
            [m] => parse_big_m(m),
            _ => bail!("--big-m takes one value for {kind}"),
        }
    };
    let single_penalty = || -> Result<Penalty> {
        match args.penalty.as_slice() {
            [] => Ok(Penalty::Uniform(DEFAULT_PENALTY)),
            [c] => Ok(Penalty::Uniform(*c)),
            _ => bail!("--penalty takes one value for {kind}"),
        }
    };
    let methods = |defaults: &[&str], m: BigM, p: Penalty| -> Result<Vec<EncodingMethod>> {
        let names: Vec<&str> = if args.method.is_empty() {
            defaults.to_vec()
        } else {
            args.method.iter().map(String::as_str).collect()
        };
        names.iter().map(|n| parse_method(n, m, &p)).collect()
    };
    Ok(match kind {
        "compare" => Experiment::Compare {
            methods: methods(
                &["bpwl", "ctar", "pctar", "pcar"],
                single_m()?,
                single_penalty()?,
            )?,
        },
        "msweep" => {
            let big_m = if args.big_m.is_empty() {
                M_GRID.iter().map(|&m| BigM::Global(m)).collect()
            } else {
                args.big_m
                    .iter()
                    .map(|m| parse_big_m(m))
                    .collect::<Result<_>>()?
            };
            Experiment::MSweep { big_m }
        }
        "psweep" => Experiment::PenaltySweep {
            methods: methods(
                &["pctar", "pcar"],
                BigM::Global(DEFAULT_BIG_M),
                Penalty::Uniform(0.0),
            )?,
            penalties: if args.penalty.is_empty() {
                PENALTY_GRID.to_vec()
            } else {
                args.penalty.clone()
            },
        },
        "ressweep" => Experiment::ResSweep {
            methods: methods(&["pctar", "pcar"], single_m()?, single_penalty()?)?,
            levels: if args.res.is_empty() {
                RES_GRID.to_vec()
            } else {
                args.res.clone()
            },
        },
        other => bail!("unknown experiment {other}"),
    })
}

fn parse_big_m(text: &str) -> Result<BigM> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(BigM::PerNeuron);
    }
    let m: f64 = text
        .parse()
        .with_context(|| format!("invalid big-M {text:?}"))?;
    Ok(BigM::Global(m))
}

fn parse_method(name: &str, big_m: BigM, penalty: &Penalty) -> Result<EncodingMethod> {
    Ok(match name.to_ascii_lowercase().replace('-', "").as_str() {
        "bpwl" => EncodingMethod::Bpwl { big_m },
        "ctar" => EncodingMethod::Ctar,
        "pctar" => EncodingMethod::PCtar {
            penalty: penalty.clone(),
        },
        "pcar" => EncodingMethod::Pcar {
            penalty: penalty.clone(),
        },
        _ => bail!("unknown method {name:?} (expected bpwl, ctar, pctar or pcar)"),
    })
}

fn solver_config(args: &RunArgs) -> Result<SolverConfig> {
    if !(args.time_limit.is_finite() && args.time_limit > 0.0) {
        bail!("--time-limit must be positive");
    }
    let mut config = SolverConfig {
        time_limit: Some(Duration::from_secs_f64(args.time_limit)),
        node_limit: args.node_limit,
        ..SolverConfig::default()
    };
    if let Some(g) = args.gap {
        config.mip_gap = g;
    }
    config.validate()?;
    Ok(config)
}

fn load_input_scenario(input: &InputArgs) -> Result<MicrogridScenario> {
    let scenario = match (&input.scenario, &input.params) {
        (Some(series), Some(params)) => {
            let s = load_scenario(series, params)?;
            match input.horizon {
                Some(h) => s.truncated(h)?,
                None => s,
            }
        }
        _ => generate_scenario(input.seed, input.horizon.unwrap_or(24)),
    };
    for w in scenario.validate()? {
        log::warn!("{w}");
    }
    Ok(scenario)
}

fn load_input_net(input: &InputArgs) -> Result<MlpNetwork> {
    match input.net.strip_prefix("seed:") {
        Some(seed) => {
            let seed: u64 = seed
                .parse()
                .with_context(|| format!("invalid network seed {seed:?}"))?;
            Ok(generate_synthetic_nnbd(seed, &input.widths)?)
        }
        None => Ok(load_network(Path::new(&input.net))?),
    }
}

fn generate(args: &GenArgs) -> Result<()> {
    if args.horizon == 0 {
        bail!("--horizon must be positive");
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let scenario = generate_scenario(args.seed, args.horizon);
    let net = generate_synthetic_nnbd(args.net_seed, &args.widths)?;
    let (series, params, weights, bounds) = (
        args.out.join("series.csv"),
        args.out.join("params.json"),
        args.out.join("net.json"),
        args.out.join("bounds.json"),
    );
    save_scenario(&scenario, &series, &params)?;
    save_network(&net, &weights)?;
    // Sound for every interval: scaled features always lie in the unit box.
    let table = propagate_bounds(&net, &[Interval::new(0.0, 1.0); NNBD_FEATURES])?;
    std::fs::write(&bounds, bounds_to_json(&table))
        .with_context(|| format!("writing {}", bounds.display()))?;
    for p in [&series, &params, &weights, &bounds] {
        println!("{}", p.display());
    }
    Ok(())
}

fn print_summary(outcome: &ExperimentOutcome) {
    println!(
        "{:<12} {:>10} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10} {:>9}  status",
        "method",
        "param",
        "deg %",
        "real deg %",
        "error %",
        "total $",
        "real $",
        "penalty $",
        "seconds"
    );
    let num = |v: f64, p: usize| {
        if v.is_finite() {
            format!("{v:.p$}")
        } else {
            "-".to_string()
        }
    };
    for r in outcome.rows() {
        println!(
            "{:<12} {:>10} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10} {:>9}  {}",
            r.method,
            r.parameter,
            num(r.degradation_pct, 6),
            num(r.real_degradation_pct, 6),
            r.error_pct.map_or("-".to_string(), |e| num(e, 4)),
            num(r.total_cost, 2),
            num(r.real_cost, 2),
            num(r.penalty_cost, 2),
            num(r.seconds, 2),
            r.status_cell()
        );
    }
}
