//! LP-based branch-and-bound over the binary variables.
//!
//! A single simplex engine is kept alive for the whole search. Each node only
//! differs from the root in the bounds of some binaries, so switching nodes
//! is a handful of bound changes followed by a warm re-optimization from the
//! current basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::simplex::{LpStatus, Simplex};
use super::{
    check_feasibility, relative_gap, BranchingRule, MixedIntegerModel, NodeSelection, SolveResult,
    SolveStats, SolveStatus, SolverConfig, SolverError,
};

#[derive(Debug)]
struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    /// (binary position, fixed value)
    fixings: Vec<(usize, f64)>,
    best_bound_order: bool,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the greatest element.
    fn cmp(&self, other: &Self) -> Ordering {
        let by_depth = self.depth.cmp(&other.depth);
        let by_seq = other.seq.cmp(&self.seq);
        if self.best_bound_order {
            other
                .bound
                .total_cmp(&self.bound)
                .then(by_depth)
                .then(by_seq)
        } else {
            by_depth.then(by_seq)
        }
    }
}

/// Open nodes. Until an incumbent exists nodes are explored last-in
/// first-out, so a failed dive backtracks to its nearest sibling.
struct Frontier {
    stack: Vec<Node>,
    heap: BinaryHeap<Node>,
}

impl Frontier {
    fn push(&mut self, node: Node, have_incumbent: bool) {
        if have_incumbent {
            self.heap.push(node);
        } else {
            self.stack.push(node);
        }
    }

    fn pop(&mut self, have_incumbent: bool) -> Option<Node> {
        if have_incumbent {
            self.heap.extend(self.stack.drain(..));
            self.heap.pop()
        } else {
            self.stack.pop().or_else(|| self.heap.pop())
        }
    }

    fn bounds(&self) -> impl Iterator<Item = f64> + '_ {
        self.stack.iter().chain(self.heap.iter()).map(|n| n.bound)
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

struct Search<'a> {
    model: &'a MixedIntegerModel,
    config: &'a SolverConfig,
    binaries: Vec<usize>,
    priorities: Vec<i32>,
    root_bounds: Vec<(f64, f64)>,
    engine: Simplex,
    retired_pivots: u64,
    incumbent: Option<Incumbent>,
    deadline: Option<Instant>,
}

enum NodeOutcome {
    Pruned,
    Integral,
    Branch { pos: usize, value: f64, bound: f64 },
}

enum Abort {
    Time,
    Unbounded,
    Failure,
}

impl<'a> Search<'a> {
    fn apply(&mut self, fixings: &[(usize, f64)]) {
        let mut want = self.root_bounds.clone();
        for &(pos, v) in fixings {
            want[pos] = (v, v);
        }
        for (pos, &(lo, hi)) in want.iter().enumerate() {
            self.engine.set_bounds(self.binaries[pos], lo, hi);
        }
    }

    /// Re-optimizes, rebuilding the engine once on numerical trouble.
    fn optimize(&mut self, fixings: &[(usize, f64)]) -> LpStatus {
        let status = self.engine.solve(self.deadline);
        if !matches!(
            status,
            LpStatus::NumericalFailure | LpStatus::IterationLimit
        ) {
            return status;
        }
        log::debug!("rebuilding simplex engine after {status:?}");
        self.retired_pivots += self.engine.pivots;
        self.engine = Simplex::new(self.model, self.config.simplex_params());
        self.apply(fixings);
        self.engine.solve(self.deadline)
    }

    fn objective(&self) -> f64 {
        self.engine.objective() + self.model.objective.constant
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some(inc) => bound >= inc.objective - self.cutoff_margin(inc.objective),
            None => false,
        }
    }

    fn cutoff_margin(&self, incumbent: f64) -> f64 {
        exact_margin(incumbent).max(self.config.mip_gap * incumbent.abs())
    }

    fn evaluate(&mut self, fixings: &[(usize, f64)]) -> Result<NodeOutcome, Abort> {
        self.apply(fixings);
        match self.optimize(fixings) {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok(NodeOutcome::Pruned),
            LpStatus::Unbounded => return Err(Abort::Unbounded),
            LpStatus::TimeLimit => return Err(Abort::Time),
            LpStatus::IterationLimit | LpStatus::NumericalFailure => return Err(Abort::Failure),
        }
        let bound = self.objective();
        if self.prunable(bound) {
            return Ok(NodeOutcome::Pruned);
        }
        let x = self.engine.values();
        let tol = self.config.integrality_tol;
        // (position, value, priority, score)
        let mut pick: Option<(usize, f64, i32, f64)> = None;
        for (pos, &j) in self.binaries.iter().enumerate() {
            let v = x[j];
            let frac = (v - v.round()).abs();
            if frac <= tol {
                continue;
            }
            let prio = self.priorities[pos];
            let score = match self.config.branching {
                BranchingRule::MostFractional => frac,
                BranchingRule::FirstFractional => 0.0,
            };
            if pick.is_none_or(|(_, _, p, s)| prio > p || (prio == p && score > s)) {
                pick = Some((pos, v, prio, score));
            }
        }
        if let Some((pos, value, _, _)) = pick {
            return Ok(NodeOutcome::Branch { pos, value, bound });
        }
        // Within tolerance but not exact: snapping can still cut off the LP
        // point, in which case the least integral binary is branched on.
        let residue = self
            .binaries
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, x[j], (x[j] - x[j].round()).abs()))
            .filter(|&(_, _, frac)| frac > 0.0)
            .max_by(|a, b| a.2.total_cmp(&b.2));
        if self.polish(fixings)? {
            return Ok(NodeOutcome::Integral);
        }
        match residue {
            Some((pos, value, _)) => Ok(NodeOutcome::Branch { pos, value, bound }),
            None => {
                log::warn!("integral LP point could not be polished; node dropped");
                Ok(NodeOutcome::Pruned)
            }
        }
    }

    /// Snaps the binaries of an integral LP point and re-solves so the stored
    /// incumbent is exactly integral. False when the snapped LP has no
    /// audited solution.
    fn polish(&mut self, fixings: &[(usize, f64)]) -> Result<bool, Abort> {
        let snapped: Vec<(usize, f64)> = self
            .binaries
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, self.engine.values()[j].round()))
            .collect();
        self.apply(&snapped);
        let status = self.optimize(&snapped);
        let result = match status {
            LpStatus::Optimal => {
                let values = self.engine.values().to_vec();
                let audit = check_feasibility(self.model, &values);
                let tol = self.config.feasibility_tol;
                if audit.is_feasible(tol, self.config.integrality_tol) {
                    let objective = self.model.objective_value(&values);
                    if self
                        .incumbent
                        .as_ref()
                        .is_none_or(|inc| objective < inc.objective)
                    {
                        log::debug!("new incumbent {objective}");
                        self.incumbent = Some(Incumbent { objective, values });
                    }
                    Ok(true)
                } else {
                    log::debug!("polished point failed the audit: {audit:?}");
                    Ok(false)
                }
            }
            LpStatus::TimeLimit => Err(Abort::Time),
            _ => Ok(false),
        };
        self.apply(fixings);
        result
    }
}

fn exact_margin(incumbent: f64) -> f64 {
    1e-9 * (1.0 + incumbent.abs())
}

/// Solves `model` to optimality (or the configured gap) by branch-and-bound.
pub fn solve_milp(
    model: &MixedIntegerModel,
    config: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    model.validate()?;
    config.validate()?;
    let start = Instant::now();
    let binaries: Vec<usize> = model.binaries().into_iter().map(|v| v.0).collect();
    let priorities = binaries
        .iter()
        .map(|&j| model.variables[j].priority)
        .collect();
    let root_bounds = binaries
        .iter()
        .map(|&j| (model.variables[j].lower, model.variables[j].upper))
        .collect();
    let mut search = Search {
        model,
        config,
        binaries,
        priorities,
        root_bounds,
        engine: Simplex::new(model, config.simplex_params()),
        retired_pivots: 0,
        incumbent: None,
        deadline: config.deadline(start),
    };
    let best_bound_order = config.node_selection == NodeSelection::BestBound;
    let mut frontier = Frontier {
        stack: Vec::new(),
        heap: BinaryHeap::new(),
    };
    let mut seq = 0u64;
    frontier.push(
        Node {
            bound: f64::NEG_INFINITY,
            depth: 0,
            seq,
            fixings: Vec::new(),
            best_bound_order,
        },
        false,
    );
    let mut nodes = 0u64;
    // Lowest bound among nodes discarded only because of the relative gap.
    let mut gap_pruned_bound = f64::INFINITY;
    let mut stop: Option<SolveStatus> = None;

    'outer: while let Some(node) = frontier.pop(search.incumbent.is_some()) {
        if let Some(inc) = &search.incumbent {
            if search.prunable(node.bound) {
                if node.bound < inc.objective - exact_margin(inc.objective) {
                    gap_pruned_bound = gap_pruned_bound.min(node.bound);
                }
                continue;
            }
        }
        let mut fixings = node.fixings;
        let mut depth = node.depth;
        loop {
            if config.node_limit.is_some_and(|lim| nodes >= lim) {
                stop = Some(SolveStatus::NodeLimit);
                frontier.push(
                    Node {
                        bound: node.bound,
                        depth,
                        seq,
                        fixings,
                        best_bound_order,
                    },
                    true,
                );
                break 'outer;
            }
            if search.deadline.is_some_and(|d| Instant::now() >= d) {
                stop = Some(SolveStatus::TimeLimit);
                break 'outer;
            }
            nodes += 1;
            match search.evaluate(&fixings) {
                Ok(NodeOutcome::Pruned | NodeOutcome::Integral) => break,
                Ok(NodeOutcome::Branch { pos, value, bound }) => {
                    let (first, second) = if value >= 0.5 { (1.0, 0.0) } else { (0.0, 1.0) };
                    let mut other = fixings.clone();
                    other.push((pos, second));
                    seq += 1;
                    frontier.push(
                        Node {
                            bound,
                            depth: depth + 1,
                            seq,
                            fixings: other,
                            best_bound_order,
                        },
                        search.incumbent.is_some(),
                    );
                    fixings.push((pos, first));
                    depth += 1;
                }
                Err(Abort::Time) => {
                    stop = Some(SolveStatus::TimeLimit);
                    break 'outer;
                }
                Err(Abort::Unbounded) => {
                    stop = Some(SolveStatus::Unbounded);
                    break 'outer;
                }
                Err(Abort::Failure) => {
                    stop = Some(SolveStatus::SolverFailure);
                    break 'outer;
                }
            }
        }
    }

    let stats = SolveStats {
        pivots: search.retired_pivots + search.engine.pivots,
        nodes,
        seconds: start.elapsed().as_secs_f64(),
    };
    let open_bound = frontier.bounds().fold(gap_pruned_bound, f64::min);
    let status = match stop {
        Some(SolveStatus::Unbounded) => {
            return Ok(SolveResult::without_solution(SolveStatus::Unbounded, stats))
        }
        Some(s) => s,
        None if search.incumbent.is_none() => SolveStatus::Infeasible,
        None if gap_pruned_bound.is_finite() => SolveStatus::GapLimit,
        None => SolveStatus::Optimal,
    };
    Ok(match search.incumbent {
        Some(inc) => SolveResult {
            status,
            relative_gap: if status == SolveStatus::Optimal {
                0.0
            } else {
                relative_gap(inc.objective, open_bound.min(inc.objective))
            },
            objective_value: inc.objective,
            values: inc.values,
            stats,
        },
        None => SolveResult::without_solution(status, stats),
    })
}
