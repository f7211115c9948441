//! Fully-connected ReLU networks: evaluation, interval bounds, and the
//! weight-file format.
//!
//! A network maps raw features through a per-input affine scaler, a chain of
//! dense layers (ReLU on every hidden layer, identity on the output layer),
//! and finally a scalar output scaler. Encoders in [`crate::encoding`]
//! reproduce exactly this map with linear constraints.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

/// Schema tag written into every weight file.
pub const NETWORK_FORMAT: &str = "relumilp-net-v1";

/// Number of inputs of the battery degradation predictor.
pub const NNBD_FEATURES: usize = 5;

const DOD_INDEX: usize = 3;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("invalid scaler: {0}")]
    InvalidScaler(String),
    #[error("invalid layer widths {widths:?}: {reason}")]
    InvalidWidths { widths: Vec<usize>, reason: String },
    #[error("malformed weight file: {0}")]
    Malformed(String),
    #[error("unsupported weight file format {0:?}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("synthetic network failed its sampling check: {0}")]
    SamplingCheck(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("relu"),
            Activation::Linear => f.write_str("linear"),
        }
    }
}

/// One dense layer: `out = act(weights · in + biases)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    /// Row-major, `out_width × in_width`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, activation: Activation) -> Self {
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn out_width(&self) -> usize {
        self.biases.len()
    }

    pub fn in_width(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Pre-activation values for a given input.
    pub fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>())
            .collect()
    }

    fn validate(&self, index: usize, expected_in: usize) -> Result<(), NetworkError> {
        let bad = |reason: String| NetworkError::InvalidLayer {
            layer: index,
            reason,
        };
        if self.weights.len() != self.biases.len() {
            return Err(bad(format!(
                "{} weight rows but {} biases",
                self.weights.len(),
                self.biases.len()
            )));
        }
        if self.biases.is_empty() {
            return Err(bad("layer has no neurons".into()));
        }
        for (r, row) in self.weights.iter().enumerate() {
            if row.len() != expected_in {
                return Err(bad(format!(
                    "weight row {r} has width {} but the layer input width is {expected_in}",
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|w| !w.is_finite()) {
                return Err(bad(format!("non-finite weight at ({r}, {c})")));
            }
        }
        if let Some(i) = self.biases.iter().position(|b| !b.is_finite()) {
            return Err(bad(format!("non-finite bias at {i}")));
        }
        Ok(())
    }
}

/// Per-input affine map, `normalized = scale * raw + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(n: usize) -> Self {
        Self {
            scale: vec![1.0; n],
            offset: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(x, (s, o))| s * x + o)
            .collect()
    }

    pub fn invert(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(z, (s, o))| (z - o) / s)
            .collect()
    }

    /// Image of a raw interval under feature `i`'s map.
    pub fn map_interval(&self, i: usize, raw: Interval) -> Interval {
        let a = self.scale[i] * raw.lo + self.offset[i];
        let b = self.scale[i] * raw.hi + self.offset[i];
        Interval::new(a.min(b), a.max(b))
    }
}

/// Scalar affine map from network output to degradation fraction per cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScaler {
    pub scale: f64,
    pub offset: f64,
}

impl OutputScaler {
    pub const IDENTITY: OutputScaler = OutputScaler {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, y: f64) -> f64 {
        self.scale * y + self.offset
    }
}

/// The five inputs of the degradation predictor, in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector {
    /// Ambient temperature, °C.
    pub temperature: f64,
    /// Per-hour rate.
    pub c_rate: f64,
    pub soc: f64,
    pub dod: f64,
    pub soh: f64,
}

impl FeatureVector {
    /// Network input order: temperature, C-rate, SOC, DOD, SOH.
    pub fn to_array(&self) -> [f64; NNBD_FEATURES] {
        [self.temperature, self.c_rate, self.soc, self.dod, self.soh]
    }

    /// Clamps the fractional features into their physical ranges.
    pub fn clamped(self) -> Self {
        Self {
            soc: self.soc.clamp(0.0, 1.0),
            dod: self.dod.clamp(0.0, 1.0),
            soh: self.soh.clamp(f64::MIN_POSITIVE, 1.0),
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn relu(&self) -> Self {
        Self::new(self.lo.max(0.0), self.hi.max(0.0))
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Pre-activation bounds for every neuron of every layer (output included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronBoundTable {
    pub layers: Vec<Vec<Interval>>,
}

impl NeuronBoundTable {
    pub fn neuron(&self, layer: usize, index: usize) -> Interval {
        self.layers[layer][index]
    }

    /// Checks the table's shape against `net` and that `lo <= hi` everywhere.
    pub fn check_against(&self, net: &MlpNetwork) -> Result<(), NetworkError> {
        if self.layers.len() != net.layers.len() {
            return Err(NetworkError::Dimension(format!(
                "bound table has {} layers, network has {}",
                self.layers.len(),
                net.layers.len()
            )));
        }
        for (h, (bounds, layer)) in self.layers.iter().zip(&net.layers).enumerate() {
            if bounds.len() != layer.out_width() {
                return Err(NetworkError::Dimension(format!(
                    "bound table layer {h} has {} neurons, network layer has {}",
                    bounds.len(),
                    layer.out_width()
                )));
            }
            if let Some(i) = bounds
                .iter()
                .position(|b| !b.lo.is_finite() || !b.hi.is_finite() || b.lo > b.hi)
            {
                return Err(NetworkError::InvalidLayer {
                    layer: h,
                    reason: format!("bad bound interval at neuron {i}: {:?}", bounds[i]),
                });
            }
        }
        Ok(())
    }
}

/// A validated feed-forward network with input and output scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<LayerSpec>,
    feature_scaler: FeatureScaler,
    output_scaler: OutputScaler,
}

impl MlpNetwork {
    /// Builds a network, checking every structural invariant: widths chain,
    /// hidden layers are ReLU, the last layer is linear with one output, and
    /// all numbers are finite.
    pub fn new(
        layers: Vec<LayerSpec>,
        feature_scaler: FeatureScaler,
        output_scaler: OutputScaler,
    ) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Dimension("network has no layers".into()));
        }
        let n_in = feature_scaler.len();
        if feature_scaler.offset.len() != n_in {
            return Err(NetworkError::InvalidScaler(format!(
                "{} scales but {} offsets",
                n_in,
                feature_scaler.offset.len()
            )));
        }
        if n_in == 0 {
            return Err(NetworkError::InvalidScaler("no input features".into()));
        }
        for (i, (s, o)) in feature_scaler
            .scale
            .iter()
            .zip(&feature_scaler.offset)
            .enumerate()
        {
            if !s.is_finite() || !o.is_finite() || *s == 0.0 {
                return Err(NetworkError::InvalidScaler(format!(
                    "feature {i} has scale {s} and offset {o}"
                )));
            }
        }
        if !output_scaler.scale.is_finite() || !output_scaler.offset.is_finite() {
            return Err(NetworkError::InvalidScaler(format!(
                "output scaler {output_scaler:?} is not finite"
            )));
        }
        let last = layers.len() - 1;
        let mut width = n_in;
        for (h, layer) in layers.iter().enumerate() {
            layer.validate(h, width)?;
            let expected = if h == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            if layer.activation != expected {
                return Err(NetworkError::InvalidLayer {
                    layer: h,
                    reason: format!(
                        "activation is {} but a {} layer must be {expected}",
                        layer.activation,
                        if h == last { "final" } else { "hidden" }
                    ),
                });
            }
            width = layer.out_width();
        }
        if width != 1 {
            return Err(NetworkError::InvalidLayer {
                layer: last,
                reason: format!("output width is {width}, expected 1"),
            });
        }
        Ok(Self {
            layers,
            feature_scaler,
            output_scaler,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn feature_scaler(&self) -> &FeatureScaler {
        &self.feature_scaler
    }

    pub fn output_scaler(&self) -> OutputScaler {
        self.output_scaler
    }

    pub fn input_width(&self) -> usize {
        self.feature_scaler.len()
    }

    /// Widths including the input layer, e.g. `[5, 20, 10, 1]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(LayerSpec::out_width))
            .collect()
    }

    pub fn hidden_neuron_count(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(LayerSpec::out_width)
            .sum()
    }

    /// Pre-activations of every layer for an already normalized input.
    pub fn pre_activations(&self, normalized: &[f64]) -> Result<Vec<Vec<f64>>, NetworkError> {
        self.check_width(normalized.len())?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut a = normalized.to_vec();
        for layer in &self.layers {
            let x = layer.affine(&a);
            a = match layer.activation {
                Activation::Relu => x.iter().map(|v| v.max(0.0)).collect(),
                Activation::Linear => x.clone(),
            };
            out.push(x);
        }
        Ok(out)
    }

    /// Raw network output (before output scaling) for a normalized input.
    pub fn output_normalized(&self, normalized: &[f64]) -> Result<f64, NetworkError> {
        let pre = self.pre_activations(normalized)?;
        Ok(pre.last().expect("at least one layer")[0])
    }

    /// Full map from raw features to the scaled output.
    pub fn forward_raw(&self, raw: &[f64]) -> Result<f64, NetworkError> {
        self.check_width(raw.len())?;
        let z = self.feature_scaler.apply(raw);
        Ok(self.output_scaler.apply(self.output_normalized(&z)?))
    }

    fn check_width(&self, n: usize) -> Result<(), NetworkError> {
        if n != self.input_width() {
            return Err(NetworkError::Dimension(format!(
                "input has {n} features, network expects {}",
                self.input_width()
            )));
        }
        Ok(())
    }
}

/// Degradation fraction per cycle predicted for `x`.
pub fn forward(net: &MlpNetwork, x: &FeatureVector) -> Result<f64, NetworkError> {
    net.forward_raw(&x.to_array())
}

/// Evaluates many raw inputs; parallel when the `parallel` feature is on.
pub fn forward_batch(net: &MlpNetwork, inputs: &[Vec<f64>]) -> Result<Vec<f64>, NetworkError> {
    par::map(inputs, |x| net.forward_raw(x))
        .into_iter()
        .collect()
}

/// Sequential counterpart of [`forward_batch`].
pub fn forward_batch_seq(net: &MlpNetwork, inputs: &[Vec<f64>]) -> Result<Vec<f64>, NetworkError> {
    inputs.iter().map(|x| net.forward_raw(x)).collect()
}

/// The unit box `[0, 1]^n` in normalized feature space.
pub fn unit_box(n: usize) -> Vec<Interval> {
    vec![Interval::new(0.0, 1.0); n]
}

/// Interval arithmetic through the network. `input_box` is in normalized
/// feature space; returned bounds are pre-activation.
pub fn propagate_bounds(
    net: &MlpNetwork,
    input_box: &[Interval],
) -> Result<NeuronBoundTable, NetworkError> {
    net.check_width(input_box.len())?;
    if let Some(i) = input_box
        .iter()
        .position(|b| !b.lo.is_finite() || !b.hi.is_finite() || b.lo > b.hi)
    {
        return Err(NetworkError::Dimension(format!(
            "input box entry {i} is not a finite interval: {:?}",
            input_box[i]
        )));
    }
    let mut layers = Vec::with_capacity(net.layers.len());
    let mut incoming: Vec<Interval> = input_box.to_vec();
    for layer in &net.layers {
        let bounds = propagate_layer(layer, &incoming);
        incoming = match layer.activation {
            Activation::Relu => bounds.iter().map(Interval::relu).collect(),
            Activation::Linear => bounds.clone(),
        };
        layers.push(bounds);
    }
    Ok(NeuronBoundTable { layers })
}

/// Counts pre-activations falling outside `table` over `samples` uniform
/// draws from `input_box` (normalized space).
pub fn count_bound_violations(
    net: &MlpNetwork,
    table: &NeuronBoundTable,
    input_box: &[Interval],
    samples: usize,
    seed: u64,
) -> Result<usize, NetworkError> {
    let points = sample_box(input_box, samples, seed);
    let counts = par::map(&points, |z| -> Result<usize, NetworkError> {
        let pre = net.pre_activations(z)?;
        Ok(pre
            .iter()
            .zip(&table.layers)
            .flat_map(|(xs, bs)| xs.iter().zip(bs))
            .filter(|(x, b)| !b.contains(**x, 1e-12))
            .count())
    });
    counts.into_iter().sum()
}

/// Uniform samples from a box; deterministic in `seed`.
pub fn sample_box(input_box: &[Interval], samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            input_box
                .iter()
                .map(|iv| iv.lo + rng.random::<f64>() * iv.width())
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Weight file

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    layers: Vec<LayerFile>,
    feature_scaler: FeatureScaler,
    output_scaler: OutputScaler,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<FileNumber>>,
    biases: Vec<FileNumber>,
    activation: Activation,
}

/// A number that may have been written as `NaN`/`Infinity` by other tools;
/// those are read as NaN so validation can name the offending layer.
#[derive(Clone, Copy)]
struct FileNumber(f64);

impl Serialize for FileNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for FileNumber {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(FileNumber(
            Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN),
        ))
    }
}

/// Replaces bare `NaN`, `Infinity` and `-Infinity` tokens (as emitted by some
/// JSON writers) with `null`.
fn neutralize_nonfinite_tokens(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            rest = &rest[1..];
            continue;
        }
        let token = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        if let Some(t) = token {
            out.push_str("null");
            rest = &rest[t.len()..];
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

/// Parses and validates a weight document.
pub fn parse_network(text: &str) -> Result<MlpNetwork, NetworkError> {
    let cleaned = neutralize_nonfinite_tokens(text);
    let file: NetworkFile =
        serde_json::from_str(&cleaned).map_err(|e| NetworkError::Malformed(e.to_string()))?;
    if file.format != NETWORK_FORMAT {
        return Err(NetworkError::Format(file.format));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            LayerSpec::new(
                l.weights
                    .into_iter()
                    .map(|r| r.into_iter().map(|v| v.0).collect())
                    .collect(),
                l.biases.into_iter().map(|v| v.0).collect(),
                l.activation,
            )
        })
        .collect();
    MlpNetwork::new(layers, file.feature_scaler, file.output_scaler)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<MlpNetwork, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network(&text)
}

/// Serializes a network to the weight-file format (pretty JSON, shortest
/// round-trip number formatting).
pub fn network_to_json(net: &MlpNetwork) -> String {
    let file = NetworkFile {
        format: NETWORK_FORMAT.to_string(),
        layers: net
            .layers
            .iter()
            .map(|l| LayerFile {
                weights: l
                    .weights
                    .iter()
                    .map(|r| r.iter().map(|&v| FileNumber(v)).collect())
                    .collect(),
                biases: l.biases.iter().map(|&v| FileNumber(v)).collect(),
                activation: l.activation,
            })
            .collect(),
        feature_scaler: net.feature_scaler.clone(),
        output_scaler: net.output_scaler,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("network serializes");
    s.push('\n');
    s
}

pub fn save_network(net: &MlpNetwork, path: impl AsRef<Path>) -> Result<(), NetworkError> {
    let path = path.as_ref();
    fs::write(path, network_to_json(net)).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Bound tables as JSON: `{"layers": [[{"lo": .., "hi": ..}, ..], ..]}`.
pub fn bounds_to_json(table: &NeuronBoundTable) -> String {
    serde_json::to_string_pretty(table).expect("bound tables serialize")
}

pub fn parse_bounds(text: &str) -> Result<NeuronBoundTable, NetworkError> {
    serde_json::from_str(text).map_err(|e| NetworkError::Malformed(e.to_string()))
}

pub fn load_bounds(path: impl AsRef<Path>) -> Result<NeuronBoundTable, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_bounds(&text)
}

// ---------------------------------------------------------------------------
// Synthetic degradation predictor

/// Physical ranges mapped onto `[0, 1]` by the synthetic feature scaler:
/// temperature °C, C-rate 1/h, SOC, DOD, SOH.
pub const SYNTHETIC_FEATURE_RANGES: [(f64, f64); NNBD_FEATURES] = [
    (-20.0, 60.0),
    (0.0, 2.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.5, 1.0),
];

/// Degradation per cycle spanned by the synthetic output scaler over the
/// unit input box.
pub const SYNTHETIC_DEGRADATION_RANGE: (f64, f64) = (1e-4, 1e-3);

/// Raw weight range for every layer after the first. Mostly nonnegative, so
/// the surface is close to convex, as empirical cycle-ageing curves are.
pub const SYNTHETIC_DEEP_WEIGHTS: (f64, f64) = (-0.2, 1.0);

/// Deterministic stand-in for a trained degradation predictor.
///
/// Every hidden neuron is rescaled so its interval bound over the unit box
/// has magnitude exactly 1; the output scaler maps the output's interval
/// bound onto [`SYNTHETIC_DEGRADATION_RANGE`], oriented (by reflecting the
/// depth-of-discharge input) so degradation grows with depth of discharge
/// near the box centre.
pub fn generate_synthetic_nnbd(seed: u64, widths: &[usize]) -> Result<MlpNetwork, NetworkError> {
    let invalid = |reason: &str| NetworkError::InvalidWidths {
        widths: widths.to_vec(),
        reason: reason.to_string(),
    };
    if widths.len() < 2 {
        return Err(invalid("need at least an input and an output width"));
    }
    if widths[0] != NNBD_FEATURES {
        return Err(invalid("first width must be 5"));
    }
    if *widths.last().unwrap() != 1 {
        return Err(invalid("last width must be 1"));
    }
    if widths.contains(&0) {
        return Err(invalid("widths must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = SYNTHETIC_FEATURE_RANGES
        .iter()
        .map(|(lo, hi)| 1.0 / (hi - lo))
        .collect();
    let offset: Vec<f64> = SYNTHETIC_FEATURE_RANGES
        .iter()
        .zip(&scale)
        .map(|((lo, _), s)| -lo * s)
        .collect();
    let feature_scaler = FeatureScaler { scale, offset };

    let n_layers = widths.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    let mut incoming = unit_box(NNBD_FEATURES);
    for k in 0..n_layers {
        let (fan_in, fan_out) = (widths[k], widths[k + 1]);
        let activation = if k + 1 == n_layers {
            Activation::Linear
        } else {
            Activation::Relu
        };
        let mut weights = Vec::with_capacity(fan_out);
        let mut biases = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            let (wlo, whi) = if k == 0 {
                (-1.0, 1.0)
            } else {
                SYNTHETIC_DEEP_WEIGHTS
            };
            let mut row: Vec<f64> = (0..fan_in).map(|_| rng.random_range(wlo..whi)).collect();
            let mut bias: f64 = rng.random_range(-0.5..0.5);
            let (mut lo, mut hi) = (bias, bias);
            for (w, iv) in row.iter().zip(&incoming) {
                let (p, q) = (w * iv.lo, w * iv.hi);
                lo += p.min(q);
                hi += p.max(q);
            }
            let mag = lo.abs().max(hi.abs());
            if mag > 0.0 {
                row.iter_mut().for_each(|w| *w /= mag);
                bias /= mag;
            }
            weights.push(row);
            biases.push(bias);
        }
        let layer = LayerSpec::new(weights, biases, activation);
        let pre = propagate_layer(&layer, &incoming);
        incoming = pre.iter().map(Interval::relu).collect();
        layers.push(layer);
    }

    let mut provisional = MlpNetwork::new(layers, feature_scaler, OutputScaler::IDENTITY)?;

    // Orient so that deeper discharge costs more around the box centre.
    // Reflecting the input keeps the interval bounds and the curvature.
    let probe = |net: &MlpNetwork, dod: f64| -> Result<f64, NetworkError> {
        net.output_normalized(&[0.5, 0.5, 0.5, dod, 0.5])
    };
    if probe(&provisional, 0.75)? < probe(&provisional, 0.25)? {
        let first = &mut provisional.layers[0];
        for (row, b) in first.weights.iter_mut().zip(first.biases.iter_mut()) {
            *b += row[DOD_INDEX];
            row[DOD_INDEX] = -row[DOD_INDEX];
        }
    }

    let table = propagate_bounds(&provisional, &unit_box(NNBD_FEATURES))?;
    let out = table.layers.last().unwrap()[0];
    let (dmin, dmax) = SYNTHETIC_DEGRADATION_RANGE;
    let span = out.width().max(1e-12);
    let out_scale = (dmax - dmin) / span;
    let out_offset = dmin - out_scale * out.lo;
    let net = MlpNetwork::new(
        provisional.layers,
        provisional.feature_scaler,
        OutputScaler {
            scale: out_scale,
            offset: out_offset,
        },
    )?;

    let samples = sample_box(&unit_box(NNBD_FEATURES), 10_000, seed ^ 0x5eed);
    let outputs = par::map(&samples, |z| {
        net.output_normalized(z).map(|y| net.output_scaler.apply(y))
    });
    for y in outputs {
        let y = y?;
        if y.is_nan() || y < 0.0 {
            return Err(NetworkError::SamplingCheck(format!(
                "negative degradation {y} over the unit box"
            )));
        }
    }
    Ok(net)
}

fn propagate_layer(layer: &LayerSpec, incoming: &[Interval]) -> Vec<Interval> {
    layer
        .weights
        .iter()
        .zip(&layer.biases)
        .map(|(row, &b)| {
            let (mut lo, mut hi) = (b, b);
            for (&w, iv) in row.iter().zip(incoming) {
                let (p, q) = (w * iv.lo, w * iv.hi);
                lo += p.min(q);
                hi += p.max(q);
            }
            Interval::new(lo, hi)
        })
        .collect()
}
