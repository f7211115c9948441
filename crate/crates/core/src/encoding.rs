//! Linear embeddings of a ReLU network into a [`MixedIntegerModel`].
//!
//! Each layer contributes equality rows `x = W a_prev + b`. Hidden neurons
//! then get activation rows according to the chosen method:
//!
//! | method | rows per unstable neuron | binaries | penalty |
//! |--------|--------------------------|----------|---------|
//! | BPWL   | 4: `a <= x + M(1-d)`, `a >= x`, `a <= M d`, `a >= 0` | 1 | no |
//! | CTAR   | 3: `a >= x`, `a >= 0`, chord through `(lb, 0)` and `(ub, ub)` | 0 | no |
//! | P-CTAR | the CTAR rows | 0 | `c_h * a` |
//! | PCAR   | 2: `a >= x`, `a >= 0` | 0 | `c_h * a` |
//!
//! A neuron is unstable when its pre-activation interval straddles zero.
//! Stable neurons are bypassed with one equality (`a = x` when `lb >= 0`,
//! `a = 0` when `ub <= 0`) unless [`EmbedOptions::faithful`] is set, in which
//! case every hidden neuron is encoded by the method. The output layer is
//! affine and only ever gets its equality row.

use std::fmt;

use thiserror::Error;

use crate::milp::{ConstraintSense, LinExpr, MixedIntegerModel, VarId};
use crate::nn::{
    propagate_bounds, Activation, Interval, MlpNetwork, NetworkError, NeuronBoundTable,
};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("big-M must be positive and finite, got {0}")]
    InvalidBigM(f64),
    #[error("penalty coefficients must be nonnegative and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("penalty has {got} layer values, network has {want} hidden layers")]
    PenaltyLayers { got: usize, want: usize },
    #[error("{0} needs finite neuron bounds")]
    MissingBounds(&'static str),
    #[error("chord relaxation needs lb < 0 < ub, got [{lb}, {ub}]")]
    DegenerateBounds { lb: f64, ub: f64 },
    #[error("expected {want} input variables, got {got}")]
    InputCount { got: usize, want: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BigM {
    /// One constant for every neuron.
    Global(f64),
    /// `max(|lb|, |ub|)` per neuron from the bound table.
    PerNeuron,
}

impl fmt::Display for BigM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BigM::Global(m) => write!(f, "{m}"),
            BigM::PerNeuron => f.write_str("auto"),
        }
    }
}

/// Per-hidden-layer penalty coefficients `c_h`.
#[derive(Clone, Debug, PartialEq)]
pub enum Penalty {
    Uniform(f64),
    PerLayer(Vec<f64>),
}

impl Penalty {
    pub fn coefficient(&self, layer: usize) -> f64 {
        match self {
            Penalty::Uniform(c) => *c,
            Penalty::PerLayer(cs) => cs[layer],
        }
    }

    fn validate(&self, hidden_layers: usize) -> Result<(), EncodingError> {
        let values: &[f64] = match self {
            Penalty::Uniform(c) => std::slice::from_ref(c),
            Penalty::PerLayer(cs) => {
                if cs.len() != hidden_layers {
                    return Err(EncodingError::PenaltyLayers {
                        got: cs.len(),
                        want: hidden_layers,
                    });
                }
                cs
            }
        };
        match values.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            Some(&c) => Err(EncodingError::InvalidPenalty(c)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncodingMethod {
    Bpwl { big_m: BigM },
    Ctar,
    PCtar { penalty: Penalty },
    Pcar { penalty: Penalty },
}

impl EncodingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            EncodingMethod::Bpwl { .. } => "bpwl",
            EncodingMethod::Ctar => "ctar",
            EncodingMethod::PCtar { .. } => "pctar",
            EncodingMethod::Pcar { .. } => "pcar",
        }
    }

    pub fn penalty(&self) -> Option<&Penalty> {
        match self {
            EncodingMethod::PCtar { penalty } | EncodingMethod::Pcar { penalty } => Some(penalty),
            _ => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, EncodingMethod::Bpwl { .. })
    }

    /// Activation rows for one encoded (unstable or faithful) neuron.
    pub fn rows_per_unstable_neuron(&self) -> usize {
        match self {
            EncodingMethod::Bpwl { .. } => 4,
            EncodingMethod::Ctar | EncodingMethod::PCtar { .. } => 3,
            EncodingMethod::Pcar { .. } => 2,
        }
    }

    fn needs_bounds(&self) -> bool {
        matches!(
            self,
            EncodingMethod::Ctar
                | EncodingMethod::PCtar { .. }
                | EncodingMethod::Bpwl {
                    big_m: BigM::PerNeuron
                }
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmbedOptions {
    /// Encode every hidden neuron with the method, stable or not.
    pub faithful: bool,
    /// Prefix for generated variable and row names.
    pub prefix: String,
    /// Branching priority of the first hidden layer's binaries; each later
    /// layer is one lower, so branching follows the network's topology.
    pub base_priority: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    /// `lb >= 0`: the ReLU is the identity.
    Active,
    /// `ub <= 0`: the ReLU is zero.
    Inactive,
    Unstable,
}

impl Stability {
    pub fn of(bounds: Interval) -> Self {
        if bounds.lo >= 0.0 {
            Stability::Active
        } else if bounds.hi <= 0.0 {
            Stability::Inactive
        } else {
            Stability::Unstable
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronEncoding {
    pub x_var: VarId,
    pub a_var: VarId,
    pub delta_var: Option<VarId>,
    pub bounds: Interval,
    pub stability: Stability,
    /// False when the neuron was replaced by a single equality.
    pub encoded: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkEmbedding {
    pub input_vars: Vec<VarId>,
    /// Output pre-scaling (the value of the network's final affine layer).
    pub output_var: VarId,
    /// Hidden neurons, by layer.
    pub neurons: Vec<Vec<NeuronEncoding>>,
    /// `(a_var, c_h)` pairs for the caller to add to the objective.
    pub penalty_terms: Vec<(VarId, f64)>,
    pub rows_added: usize,
    pub bounds: NeuronBoundTable,
    /// Non-fatal problems, e.g. a big-M smaller than a neuron's bound.
    pub warnings: Vec<String>,
}

impl NetworkEmbedding {
    pub fn invalid_big_m(&self) -> bool {
        self.warnings.iter().any(|w| w.starts_with(BIG_M_WARNING))
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.neurons.iter().flatten().filter_map(|n| n.delta_var)
    }
}

const BIG_M_WARNING: &str = "big-M below bound magnitude";

fn ge0(a: VarId) -> LinExpr {
    LinExpr::term(a, 1.0)
}

/// Big-M rows; `a >= 0` is emitted as a row so the count is exact.
pub fn encode_bpwl_neuron(
    model: &mut MixedIntegerModel,
    name: &str,
    x: VarId,
    a: VarId,
    delta: VarId,
    big_m: f64,
) -> Result<usize, EncodingError> {
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(EncodingError::InvalidBigM(big_m));
    }
    use ConstraintSense::*;
    let ax = LinExpr::new().with(a, 1.0).with(x, -1.0);
    model.add_constraint(
        format!("{name}_on"),
        ax.clone().with(delta, big_m),
        Le,
        big_m,
    );
    model.add_constraint(format!("{name}_ge_x"), ax, Ge, 0.0);
    model.add_constraint(
        format!("{name}_off"),
        LinExpr::new().with(a, 1.0).with(delta, -big_m),
        Le,
        0.0,
    );
    model.add_constraint(format!("{name}_ge0"), ge0(a), Ge, 0.0);
    Ok(4)
}

/// The triangle hull: `a >= x`, `a >= 0`, and the chord through `(lb, 0)`
/// and `(ub, ub)`.
pub fn encode_ctar_neuron(
    model: &mut MixedIntegerModel,
    name: &str,
    x: VarId,
    a: VarId,
    lb: f64,
    ub: f64,
) -> Result<usize, EncodingError> {
    if !(lb < 0.0 && 0.0 < ub && lb.is_finite() && ub.is_finite()) {
        return Err(EncodingError::DegenerateBounds { lb, ub });
    }
    use ConstraintSense::*;
    let slope = ub / (ub - lb);
    model.add_constraint(
        format!("{name}_ge_x"),
        LinExpr::new().with(a, 1.0).with(x, -1.0),
        Ge,
        0.0,
    );
    model.add_constraint(format!("{name}_ge0"), ge0(a), Ge, 0.0);
    model.add_constraint(
        format!("{name}_chord"),
        LinExpr::new().with(a, 1.0).with(x, -slope),
        Le,
        -ub * lb / (ub - lb),
    );
    Ok(3)
}

fn check_penalty(c: f64) -> Result<(), EncodingError> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(EncodingError::InvalidPenalty(c))
    }
}

/// CTAR rows plus the penalty term `(a, c)`.
pub fn encode_pctar_neuron(
    model: &mut MixedIntegerModel,
    name: &str,
    x: VarId,
    a: VarId,
    lb: f64,
    ub: f64,
    c: f64,
) -> Result<(usize, (VarId, f64)), EncodingError> {
    check_penalty(c)?;
    let rows = encode_ctar_neuron(model, name, x, a, lb, ub)?;
    Ok((rows, (a, c)))
}

/// The open epigraph `a >= x`, `a >= 0` plus the penalty term `(a, c)`.
pub fn encode_pcar_neuron(
    model: &mut MixedIntegerModel,
    name: &str,
    x: VarId,
    a: VarId,
    c: f64,
) -> Result<(usize, (VarId, f64)), EncodingError> {
    check_penalty(c)?;
    model.add_constraint(
        format!("{name}_ge_x"),
        LinExpr::new().with(a, 1.0).with(x, -1.0),
        ConstraintSense::Ge,
        0.0,
    );
    model.add_constraint(format!("{name}_ge0"), ge0(a), ConstraintSense::Ge, 0.0);
    Ok((2, (a, c)))
}

/// Bounds used by the chord when a stable neuron is encoded faithfully: the
/// interval is mirrored so that it straddles zero and still contains the
/// original one.
fn straddling(b: Interval) -> (f64, f64) {
    let m = b.magnitude();
    if m == 0.0 {
        (-1.0, 1.0)
    } else if b.lo >= 0.0 {
        (-b.hi, b.hi)
    } else if b.hi <= 0.0 {
        (b.lo, -b.lo)
    } else {
        (b.lo, b.hi)
    }
}

fn input_box(model: &MixedIntegerModel, input_vars: &[VarId]) -> Option<Vec<Interval>> {
    input_vars
        .iter()
        .map(|&v| {
            let var = model.var(v);
            (var.lower.is_finite() && var.upper.is_finite())
                .then(|| Interval::new(var.lower, var.upper))
        })
        .collect()
}

/// Number of rows [`embed_network`] adds for `net` under `method`.
pub fn expected_rows(
    net: &MlpNetwork,
    bounds: &NeuronBoundTable,
    method: &EncodingMethod,
    options: &EmbedOptions,
) -> usize {
    let mut rows = 0;
    for (layer, lb) in net.layers().iter().zip(&bounds.layers) {
        rows += layer.out_width();
        if layer.activation == Activation::Relu {
            for b in lb {
                rows += if options.faithful || Stability::of(*b) == Stability::Unstable {
                    method.rows_per_unstable_neuron()
                } else {
                    1
                };
            }
        }
    }
    rows
}

/// Embeds `net` on top of `input_vars` (normalized features, one per network
/// input). When `bounds` is `None` they are propagated from the input
/// variables' bounds.
pub fn embed_network(
    model: &mut MixedIntegerModel,
    net: &MlpNetwork,
    input_vars: &[VarId],
    method: &EncodingMethod,
    bounds: Option<&NeuronBoundTable>,
    options: &EmbedOptions,
) -> Result<NetworkEmbedding, EncodingError> {
    if input_vars.len() != net.input_width() {
        return Err(EncodingError::InputCount {
            got: input_vars.len(),
            want: net.input_width(),
        });
    }
    let hidden_layers = net.layers().len() - 1;
    if let Some(p) = method.penalty() {
        p.validate(hidden_layers)?;
    }
    if let EncodingMethod::Bpwl {
        big_m: BigM::Global(m),
    } = method
    {
        if !(*m > 0.0 && m.is_finite()) {
            return Err(EncodingError::InvalidBigM(*m));
        }
    }
    let table = match bounds {
        Some(t) => {
            t.check_against(net)?;
            Some(t.clone())
        }
        None => match input_box(model, input_vars) {
            Some(b) => Some(propagate_bounds(net, &b)?),
            None => None,
        },
    };
    if table.is_none() && method.needs_bounds() {
        return Err(EncodingError::MissingBounds(method.name()));
    }
    let unbounded = Interval::new(f64::NEG_INFINITY, f64::INFINITY);
    let bound_of = |h: usize, i: usize| table.as_ref().map_or(unbounded, |t| t.neuron(h, i));

    let rows_before = model.num_constraints();
    let prefix = &options.prefix;
    let mut warnings = Vec::new();
    let mut neurons = Vec::with_capacity(hidden_layers);
    let mut penalty_terms = Vec::new();
    let mut prev: Vec<VarId> = input_vars.to_vec();
    let mut output_var = None;

    for (h, layer) in net.layers().iter().enumerate() {
        let is_hidden = layer.activation == Activation::Relu;
        let mut next = Vec::with_capacity(layer.out_width());
        let mut layer_neurons = Vec::new();
        for i in 0..layer.out_width() {
            let b = bound_of(h, i);
            let name = format!("{prefix}l{h}n{i}");
            let x = model.add_continuous(format!("{name}_x"), b.lo, b.hi);
            let mut affine = LinExpr::term(x, 1.0);
            for (&w, &p) in layer.weights[i].iter().zip(&prev) {
                affine.add_term(p, -w);
            }
            model.add_constraint(
                format!("{name}_aff"),
                affine,
                ConstraintSense::Eq,
                layer.biases[i],
            );
            if !is_hidden {
                output_var = Some(x);
                next.push(x);
                continue;
            }
            let stability = if table.is_some() {
                Stability::of(b)
            } else {
                Stability::Unstable
            };
            let a_hi = match method {
                EncodingMethod::Pcar { .. } => f64::INFINITY,
                _ => b.hi.max(0.0),
            };
            let a = model.add_continuous(format!("{name}_a"), 0.0, a_hi);
            let encode = options.faithful || stability == Stability::Unstable;
            let mut delta_var = None;
            if encode {
                match method {
                    EncodingMethod::Bpwl { big_m } => {
                        let magnitude = b.magnitude();
                        let m = match big_m {
                            BigM::Global(m) => *m,
                            BigM::PerNeuron if magnitude > 0.0 => magnitude,
                            BigM::PerNeuron => 1.0,
                        };
                        if magnitude.is_finite() && m < magnitude {
                            warnings.push(format!(
                                "{BIG_M_WARNING}: neuron {h}/{i} has |x| up to {magnitude}, M = {m}"
                            ));
                        }
                        let d = model.add_binary(format!("{name}_d"));
                        model.set_priority(d, options.base_priority - h as i32);
                        encode_bpwl_neuron(model, &name, x, a, d, m)?;
                        delta_var = Some(d);
                    }
                    EncodingMethod::Ctar => {
                        let (lo, hi) = straddling(b);
                        encode_ctar_neuron(model, &name, x, a, lo, hi)?;
                    }
                    EncodingMethod::PCtar { penalty } => {
                        let (lo, hi) = straddling(b);
                        let c = penalty.coefficient(h);
                        encode_pctar_neuron(model, &name, x, a, lo, hi, c)?;
                    }
                    EncodingMethod::Pcar { penalty } => {
                        encode_pcar_neuron(model, &name, x, a, penalty.coefficient(h))?;
                    }
                }
            } else if stability == Stability::Active {
                model.add_constraint(
                    format!("{name}_id"),
                    LinExpr::new().with(a, 1.0).with(x, -1.0),
                    ConstraintSense::Eq,
                    0.0,
                );
            } else {
                model.add_constraint(
                    format!("{name}_zero"),
                    LinExpr::term(a, 1.0),
                    ConstraintSense::Eq,
                    0.0,
                );
            }
            if let Some(p) = method.penalty() {
                penalty_terms.push((a, p.coefficient(h)));
            }
            layer_neurons.push(NeuronEncoding {
                x_var: x,
                a_var: a,
                delta_var,
                bounds: b,
                stability,
                encoded: encode,
            });
            next.push(a);
        }
        if is_hidden {
            neurons.push(layer_neurons);
        }
        prev = next;
    }

    if let Some(first) = warnings.first() {
        let prefix = if options.prefix.is_empty() {
            "network"
        } else {
            &options.prefix
        };
        match warnings.len() {
            1 => log::warn!("{prefix}: {first}"),
            n => log::warn!("{prefix}: {first} (and {} more)", n - 1),
        }
    }
    let bounds = table.unwrap_or_else(|| NeuronBoundTable {
        layers: net
            .layers()
            .iter()
            .map(|l| vec![unbounded; l.out_width()])
            .collect(),
    });
    Ok(NetworkEmbedding {
        input_vars: input_vars.to_vec(),
        output_var: output_var.expect("validated networks end in a linear layer"),
        neurons,
        penalty_terms,
        rows_added: model.num_constraints() - rows_before,
        bounds,
        warnings,
    })
}

/// `Σ c_h a` as an expression.
pub fn penalty_expr(terms: &[(VarId, f64)]) -> LinExpr {
    let mut e = LinExpr::new();
    for &(v, c) in terms {
        e.add_term(v, c);
    }
    e
}
