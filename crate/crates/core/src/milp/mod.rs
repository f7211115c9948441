//! Optimization substrate: model assembly, an LP engine, branch-and-bound,
//! an exhaustive oracle, and LP-format text I/O.

mod bnb;
mod brute;
pub mod lp_text;
mod model;
mod simplex;

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use bnb::solve_milp;
pub use brute::brute_force_milp;
pub use lp_text::{export_lp_text, parse_lp_text};
pub use model::{
    check_feasibility, Constraint, ConstraintSense, FeasibilityReport, LinExpr, MixedIntegerModel,
    ModelError, VarId, VarKind, Variable,
};

use simplex::{LpStatus, Simplex, SimplexParams};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid model: {0}")]
    InvalidModel(#[from] ModelError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("brute force refused: {count} binaries exceed the ceiling of {ceiling}")]
    TooManyBinaries { count: usize, ceiling: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeSelection {
    /// Lowest LP bound first.
    BestBound,
    /// Deepest node first.
    DepthFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchingRule {
    /// Value closest to 1/2; ties go to the smallest index.
    MostFractional,
    /// Smallest-index fractional binary.
    FirstFractional,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    /// Relative MIP gap target.
    pub mip_gap: f64,
    pub pivot_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub node_selection: NodeSelection,
    pub branching: BranchingRule,
    /// Consecutive degenerate pivots before switching to the smallest-index
    /// rule.
    pub stall_threshold: usize,
    /// Largest binary count [`brute_force_milp`] will enumerate.
    pub brute_force_ceiling: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            integrality_tol: 1e-6,
            mip_gap: 1e-6,
            pivot_tol: 1e-9,
            time_limit: None,
            node_limit: None,
            node_selection: NodeSelection::BestBound,
            branching: BranchingRule::MostFractional,
            stall_threshold: 50,
            brute_force_ceiling: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let tols = [
            ("feasibility_tol", self.feasibility_tol),
            ("integrality_tol", self.integrality_tol),
            ("mip_gap", self.mip_gap),
            ("pivot_tol", self.pivot_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn simplex_params(&self) -> SimplexParams {
        SimplexParams {
            pivot_tol: self.pivot_tol,
            stall_threshold: self.stall_threshold,
            ..SimplexParams::default()
        }
    }

    pub(crate) fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit.map(|d| start + d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped with open nodes whose bounds are within the relative gap
    /// target of the incumbent.
    GapLimit,
    TimeLimit,
    NodeLimit,
    /// Numerical breakdown; no answer is claimed.
    SolverFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::SolverFailure => "solver_failure",
        }
    }

    /// Optimal, or proven within the gap target.
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub pivots: u64,
    pub nodes: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Per-variable assignment; empty when no solution is available.
    pub values: Vec<f64>,
    /// Objective of `values` (NaN when there is none).
    pub objective_value: f64,
    pub relative_gap: f64,
    pub stats: SolveStats,
}

impl SolveResult {
    pub(crate) fn without_solution(status: SolveStatus, stats: SolveStats) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective_value: f64::NAN,
            relative_gap: f64::INFINITY,
            stats,
        }
    }

    pub fn has_solution(&self) -> bool {
        !self.values.is_empty() || (self.status.is_success() && self.objective_value.is_finite())
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }
}

pub(crate) fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !bound.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound).max(0.0)) / incumbent.abs().max(1e-10)
}

fn lp_status(status: LpStatus) -> SolveStatus {
    match status {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
        LpStatus::TimeLimit => SolveStatus::TimeLimit,
        LpStatus::IterationLimit | LpStatus::NumericalFailure => SolveStatus::SolverFailure,
    }
}

/// Solves the LP relaxation of `model` (binaries relaxed to their bounds).
pub fn solve_lp(
    model: &MixedIntegerModel,
    config: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    model.validate()?;
    config.validate()?;
    let start = Instant::now();
    let mut engine = Simplex::new(model, config.simplex_params());
    let status = engine.solve(config.deadline(start));
    let stats = SolveStats {
        pivots: engine.pivots,
        nodes: 0,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(finish_lp(model, config, &engine, lp_status(status), stats))
}

fn finish_lp(
    model: &MixedIntegerModel,
    config: &SolverConfig,
    engine: &Simplex,
    status: SolveStatus,
    stats: SolveStats,
) -> SolveResult {
    if status != SolveStatus::Optimal {
        return SolveResult::without_solution(status, stats);
    }
    let values = engine.values().to_vec();
    let audit = check_feasibility(model, &values);
    if audit.max_row_violation > config.feasibility_tol
        || audit.max_bound_violation > config.feasibility_tol
    {
        log::warn!("LP solution failed the residual audit: {audit:?}");
        return SolveResult::without_solution(SolveStatus::SolverFailure, stats);
    }
    SolveResult {
        status,
        objective_value: model.objective_value(&values),
        values,
        relative_gap: 0.0,
        stats,
    }
}
