//! Exhaustive enumeration of binary assignments: the reference oracle for
//! branch-and-bound on small instances.

use std::time::Instant;

use super::simplex::{LpStatus, Simplex};
use super::{
    check_feasibility, MixedIntegerModel, SolveResult, SolveStats, SolveStatus, SolverConfig,
    SolverError,
};
use crate::par;

enum Leaf {
    Skipped,
    Infeasible,
    Unbounded,
    Failed,
    Solved {
        objective: f64,
        values: Vec<f64>,
        pivots: u64,
    },
}

/// Fixes every free binary to each of its `2^k` assignments, solves the
/// remaining LP from scratch, and keeps the best. Ties go to the lowest
/// assignment index. Binaries already fixed by their bounds are not
/// enumerated. Refuses models with more free binaries than the configured
/// ceiling.
pub fn brute_force_milp(
    model: &MixedIntegerModel,
    config: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    model.validate()?;
    config.validate()?;
    let (fixed, binaries): (Vec<usize>, Vec<usize>) = model
        .binaries()
        .into_iter()
        .map(|v| v.0)
        .partition(|&j| model.variables[j].lower == model.variables[j].upper);
    if fixed
        .iter()
        .any(|&j| model.variables[j].lower.fract() != 0.0)
    {
        return Ok(SolveResult::without_solution(
            SolveStatus::Infeasible,
            SolveStats::default(),
        ));
    }
    let k = binaries.len();
    if k > config.brute_force_ceiling {
        return Err(SolverError::TooManyBinaries {
            count: k,
            ceiling: config.brute_force_ceiling,
        });
    }
    let start = Instant::now();
    let leaves = par::map_range(1usize << k, |mask| {
        let mut engine = Simplex::new(model, config.simplex_params());
        for (bit, &j) in binaries.iter().enumerate() {
            let v = ((mask >> bit) & 1) as f64;
            let var = &model.variables[j];
            if v < var.lower || v > var.upper {
                return Leaf::Skipped;
            }
            engine.set_bounds(j, v, v);
        }
        match engine.solve(None) {
            LpStatus::Optimal => {
                let values = engine.values().to_vec();
                let audit = check_feasibility(model, &values);
                if !audit.is_feasible(config.feasibility_tol, config.integrality_tol) {
                    return Leaf::Failed;
                }
                Leaf::Solved {
                    objective: model.objective_value(&values),
                    values,
                    pivots: engine.pivots,
                }
            }
            LpStatus::Infeasible => Leaf::Infeasible,
            LpStatus::Unbounded => Leaf::Unbounded,
            _ => Leaf::Failed,
        }
    });

    let mut stats = SolveStats {
        pivots: 0,
        nodes: leaves.len() as u64,
        seconds: 0.0,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut unbounded = false;
    let mut failed = false;
    for leaf in leaves {
        match leaf {
            Leaf::Solved {
                objective,
                values,
                pivots,
            } => {
                stats.pivots += pivots;
                if best.as_ref().is_none_or(|(b, _)| objective < *b) {
                    best = Some((objective, values));
                }
            }
            Leaf::Unbounded => unbounded = true,
            Leaf::Failed => failed = true,
            Leaf::Skipped | Leaf::Infeasible => {}
        }
    }
    stats.seconds = start.elapsed().as_secs_f64();
    if failed {
        return Ok(SolveResult::without_solution(
            SolveStatus::SolverFailure,
            stats,
        ));
    }
    if unbounded {
        return Ok(SolveResult::without_solution(SolveStatus::Unbounded, stats));
    }
    Ok(match best {
        Some((objective_value, values)) => SolveResult {
            status: SolveStatus::Optimal,
            values,
            objective_value,
            relative_gap: 0.0,
            stats,
        },
        None => SolveResult::without_solution(SolveStatus::Infeasible, stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{ConstraintSense, LinExpr};

    #[test]
    fn ceiling_is_enforced() {
        let mut m = MixedIntegerModel::new();
        for i in 0..3 {
            m.add_binary(format!("b{i}"));
        }
        let cfg = SolverConfig {
            brute_force_ceiling: 2,
            ..SolverConfig::default()
        };
        assert!(matches!(
            brute_force_milp(&m, &cfg),
            Err(SolverError::TooManyBinaries {
                count: 3,
                ceiling: 2
            })
        ));
    }

    #[test]
    fn picks_best_assignment() {
        let mut m = MixedIntegerModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_constraint(
            "cap",
            LinExpr::new().with(x, 1.0).with(a, -3.0).with(b, -5.0),
            ConstraintSense::Le,
            0.0,
        );
        m.set_objective(LinExpr::new().with(x, -1.0).with(a, 1.0).with(b, 2.5));
        let r = brute_force_milp(&m, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // a=1,b=1: -8+3.5 = -4.5; a=0,b=1: -2.5; a=1,b=0: -2
        assert!((r.objective_value + 4.5).abs() < 1e-9);
        assert_eq!(r.stats.nodes, 4);
    }
}
