use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for ConstraintSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintSense::Le => "<=",
            ConstraintSense::Eq => "=",
            ConstraintSense::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    /// Branching priority; higher is branched first.
    pub priority: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            ConstraintSense::Le => (lhs - self.rhs).max(0.0),
            ConstraintSense::Ge => (self.rhs - lhs).max(0.0),
            ConstraintSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Sparse affine expression `Σ c·x + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(var: VarId, coeff: f64) -> Self {
        Self {
            terms: vec![(var, coeff)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, var: VarId, coeff: f64) -> &mut Self {
        self.terms.push((var, coeff));
        self
    }

    pub fn with(mut self, var: VarId, coeff: f64) -> Self {
        self.terms.push((var, coeff));
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, factor: f64) -> &mut Self {
        self.terms
            .extend(other.terms.iter().map(|&(v, c)| (v, c * factor)));
        self.constant += other.constant * factor;
        self
    }

    pub fn scaled(&self, factor: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_expr(self, factor);
        e
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
    }

    /// Merges duplicate variables and drops zero coefficients, keeping the
    /// first-occurrence order.
    pub fn compacted(&self) -> LinExpr {
        let mut order: Vec<VarId> = Vec::new();
        let mut acc: std::collections::HashMap<VarId, f64> = Default::default();
        for &(v, c) in &self.terms {
            match acc.get_mut(&v) {
                Some(x) => *x += c,
                None => {
                    order.push(v);
                    acc.insert(v, c);
                }
            }
        }
        LinExpr {
            terms: order
                .into_iter()
                .map(|v| (v, acc[&v]))
                .filter(|&(_, c)| c != 0.0)
                .collect(),
            constant: self.constant,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("constraint {constraint:?} references undeclared variable {var}")]
    UnknownVariable { constraint: String, var: usize },
    #[error("variable {name:?} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("binary variable {name:?} has bounds [{lower}, {upper}] outside [0, 1]")]
    BinaryBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite number in {0}")]
    NonFinite(String),
}

/// A minimization MILP over continuous and binary variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MixedIntegerModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: LinExpr,
}

impl MixedIntegerModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
            priority: 0,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    /// Adds `expr (sense) rhs`; the expression's constant moves to the
    /// right-hand side. Returns the row index.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        sense: ConstraintSense,
        rhs: f64,
    ) -> usize {
        let e = expr.compacted();
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs: e.terms,
            sense,
            rhs: rhs - e.constant,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, objective: LinExpr) {
        self.objective = objective.compacted();
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_priority(&mut self, var: VarId, priority: i32) {
        self.variables[var.0].priority = priority;
    }

    pub fn fix(&mut self, var: VarId, value: f64) {
        self.set_bounds(var, value, value);
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), ModelError> {
        for v in &self.variables {
            if v.lower.is_nan()
                || v.upper.is_nan()
                || v.lower == f64::INFINITY
                || v.upper == f64::NEG_INFINITY
            {
                return Err(ModelError::NonFinite(format!("bounds of {:?}", v.name)));
            }
            if v.lower > v.upper {
                return Err(ModelError::InvalidBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        let n = self.variables.len();
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(ModelError::NonFinite(format!("rhs of {:?}", c.name)));
            }
            for &(v, a) in &c.coeffs {
                if v.0 >= n {
                    return Err(ModelError::UnknownVariable {
                        constraint: c.name.clone(),
                        var: v.0,
                    });
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite(format!(
                        "coefficient in {:?}",
                        c.name
                    )));
                }
            }
        }
        for &(v, a) in &self.objective.terms {
            if v.0 >= n {
                return Err(ModelError::UnknownVariable {
                    constraint: "objective".into(),
                    var: v.0,
                });
            }
            if !a.is_finite() {
                return Err(ModelError::NonFinite("objective coefficient".into()));
            }
        }
        if !self.objective.constant.is_finite() {
            return Err(ModelError::NonFinite("objective constant".into()));
        }
        Ok(())
    }
}

/// Result of the independent feasibility audit of an assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub max_row_violation: f64,
    pub worst_row: Option<usize>,
    pub max_bound_violation: f64,
    pub max_integrality_violation: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, feas_tol: f64, int_tol: f64) -> bool {
        self.max_row_violation <= feas_tol
            && self.max_bound_violation <= feas_tol
            && self.max_integrality_violation <= int_tol
    }
}

/// Recomputes every residual from scratch with plain dot products.
pub fn check_feasibility(model: &MixedIntegerModel, values: &[f64]) -> FeasibilityReport {
    let mut worst = (0.0f64, None);
    for (i, c) in model.constraints.iter().enumerate() {
        let v = c.violation(values);
        if v > worst.0 || v.is_nan() {
            worst = (v, Some(i));
        }
    }
    let mut bound = 0.0f64;
    let mut integ = 0.0f64;
    for (var, &x) in model.variables.iter().zip(values) {
        bound = bound.max(var.lower - x).max(x - var.upper);
        if var.kind == VarKind::Binary {
            integ = integ.max((x - x.round()).abs());
        }
    }
    FeasibilityReport {
        max_row_violation: worst.0,
        worst_row: worst.1,
        max_bound_violation: bound,
        max_integrality_violation: integ,
    }
}
