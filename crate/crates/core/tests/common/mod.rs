//! Helpers shared by the integration tests: an independent dense tableau
//! simplex, seeded random LP/MILP generators, and MILP output probes.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relumilp_core::encoding::{embed_network, EmbedOptions, EncodingMethod, NetworkEmbedding};
use relumilp_core::milp::{
    solve_milp, ConstraintSense, LinExpr, MixedIntegerModel, SolveStatus, SolverConfig, VarKind,
};
use relumilp_core::nn::MlpNetwork;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
        .join(name)
}

/// Dense LP in the form `min c x + c0`, rows `a x (sense) b`, `lo <= x <= hi`,
/// all bounds finite.
#[derive(Clone, Debug)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub c0: f64,
    pub rows: Vec<(Vec<f64>, ConstraintSense, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleResult {
    Optimal(f64),
    Infeasible,
}

impl DenseLp {
    pub fn to_model(&self) -> MixedIntegerModel {
        let mut m = MixedIntegerModel::new();
        let vars: Vec<_> = (0..self.c.len())
            .map(|j| m.add_continuous(format!("x{j}"), self.lo[j], self.hi[j]))
            .collect();
        for (i, (a, sense, b)) in self.rows.iter().enumerate() {
            let mut e = LinExpr::new();
            for (j, &aj) in a.iter().enumerate() {
                if aj != 0.0 {
                    e.add_term(vars[j], aj);
                }
            }
            m.add_constraint(format!("r{i}"), e, *sense, *b);
        }
        let mut obj = LinExpr::constant(self.c0);
        for (j, &cj) in self.c.iter().enumerate() {
            obj.add_term(vars[j], cj);
        }
        m.set_objective(obj);
        m
    }

    /// Two-phase full-tableau simplex with Bland's rule on the shifted
    /// variables `y = x - lo`, upper bounds as explicit rows.
    pub fn solve(&self) -> OracleResult {
        let n = self.c.len();
        let mut rows: Vec<(Vec<f64>, ConstraintSense, f64)> = Vec::new();
        for (a, s, b) in &self.rows {
            let shift: f64 = a.iter().zip(&self.lo).map(|(x, y)| x * y).sum();
            rows.push((a.clone(), *s, b - shift));
        }
        for j in 0..n {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, ConstraintSense::Le, self.hi[j] - self.lo[j]));
        }
        for r in rows.iter_mut() {
            if r.2 < 0.0 {
                r.0.iter_mut().for_each(|v| *v = -*v);
                r.2 = -r.2;
                r.1 = match r.1 {
                    ConstraintSense::Le => ConstraintSense::Ge,
                    ConstraintSense::Ge => ConstraintSense::Le,
                    ConstraintSense::Eq => ConstraintSense::Eq,
                };
            }
        }
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != ConstraintSense::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != ConstraintSense::Le).count();
        let width = n + n_slack + n_art;
        let mut t = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0usize; m];
        let (mut si, mut ai) = (n, n + n_slack);
        let mut artificial = vec![false; width];
        for (i, (a, s, b)) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(a);
            t[i][width] = *b;
            match s {
                ConstraintSense::Le => {
                    t[i][si] = 1.0;
                    basis[i] = si;
                    si += 1;
                }
                ConstraintSense::Ge => {
                    t[i][si] = -1.0;
                    si += 1;
                    t[i][ai] = 1.0;
                    artificial[ai] = true;
                    basis[i] = ai;
                    ai += 1;
                }
                ConstraintSense::Eq => {
                    t[i][ai] = 1.0;
                    artificial[ai] = true;
                    basis[i] = ai;
                    ai += 1;
                }
            }
        }
        let phase1: Vec<f64> = (0..width)
            .map(|j| if artificial[j] { 1.0 } else { 0.0 })
            .collect();
        run_tableau(&mut t, &mut basis, &phase1, &vec![true; width]);
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| artificial[b])
            .map(|(i, _)| t[i][width])
            .sum();
        if infeas > 1e-7 {
            return OracleResult::Infeasible;
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if artificial[basis[i]] {
                if let Some(j) = (0..width).find(|&j| !artificial[j] && t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
        let mut cost = vec![0.0; width];
        cost[..n].copy_from_slice(&self.c);
        let allowed: Vec<bool> = (0..width).map(|j| !artificial[j]).collect();
        run_tableau(&mut t, &mut basis, &cost, &allowed);
        let mut y = vec![0.0; width];
        for (i, &b) in basis.iter().enumerate() {
            y[b] = t[i][width];
        }
        let obj: f64 = (0..n).map(|j| self.c[j] * (y[j] + self.lo[j])).sum::<f64>() + self.c0;
        OracleResult::Optimal(obj)
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    t[r].iter_mut().for_each(|v| *v /= p);
    let row = t[r].clone();
    for (i, ti) in t.iter_mut().enumerate() {
        if i != r && ti[c] != 0.0 {
            let f = ti[c];
            ti.iter_mut().zip(&row).for_each(|(v, w)| *v -= f * w);
        }
    }
    basis[r] = c;
}

/// Minimizes `cost` over the tableau; columns with `allowed[j] == false`
/// never enter. Assumes the problem is bounded.
fn run_tableau(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: &[bool]) {
    let width = cost.len();
    for _ in 0..100_000 {
        let reduced = |j: usize, t: &[Vec<f64>]| {
            cost[j]
                - basis
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| cost[b] * t[i][j])
                    .sum::<f64>()
        };
        let Some(enter) = (0..width).find(|&j| allowed[j] && reduced(j, t) < -1e-10) else {
            return;
        };
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[enter] > 1e-10 {
                let ratio = row[width] / row[enter];
                let better = match leave {
                    None => true,
                    Some((l, r)) => {
                        ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[l])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("oracle LP is bounded");
        pivot(t, basis, r, enter);
    }
    panic!("oracle simplex did not terminate");
}

/// A feasible, bounded random LP: rows are built around an interior point.
pub fn random_lp(seed: u64) -> DenseLp {
    let mut r = rng(seed);
    let n = r.random_range(2..=20);
    let m = r.random_range(1..=15);
    let lo: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..0.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + r.random_range(0.5..10.0)).collect();
    let x0: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| r.random_range(*l..*h))
        .collect();
    let mut rows = Vec::new();
    for _ in 0..m {
        let a: Vec<f64> = (0..n)
            .map(|_| {
                if r.random_bool(0.6) {
                    r.random_range(-3.0..3.0)
                } else {
                    0.0
                }
            })
            .collect();
        let act: f64 = a.iter().zip(&x0).map(|(x, y)| x * y).sum();
        let (sense, b) = match r.random_range(0..5) {
            0 => (ConstraintSense::Eq, act),
            1 | 2 => (ConstraintSense::Le, act + r.random_range(0.0..2.0)),
            _ => (ConstraintSense::Ge, act - r.random_range(0.0..2.0)),
        };
        rows.push((a, sense, b));
    }
    let c = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    DenseLp {
        c,
        c0: r.random_range(-1.0..1.0),
        rows,
        lo,
        hi,
    }
}

/// A random MILP with `1..=max_binaries` binaries and a few continuous
/// variables; feasible by construction.
pub fn random_milp(seed: u64, max_binaries: usize) -> MixedIntegerModel {
    let mut r = rng(seed);
    let k = r.random_range(1..=max_binaries);
    let n = r.random_range(0..=6);
    let mut m = MixedIntegerModel::new();
    let mut vars = Vec::new();
    let mut x0 = Vec::new();
    for j in 0..k {
        vars.push(m.add_binary(format!("b{j}")));
        x0.push(if r.random_bool(0.5) { 1.0 } else { 0.0 });
    }
    for j in 0..n {
        let lo = r.random_range(-3.0..0.0);
        let hi = lo + r.random_range(0.5..6.0);
        vars.push(m.add_continuous(format!("x{j}"), lo, hi));
        x0.push(r.random_range(lo..hi));
    }
    let rows = r.random_range(1..=(k + n).max(2));
    for i in 0..rows {
        let mut e = LinExpr::new();
        let mut act = 0.0;
        for (j, &v) in vars.iter().enumerate() {
            if r.random_bool(0.5) {
                let a = r.random_range(-4.0..4.0);
                e.add_term(v, a);
                act += a * x0[j];
            }
        }
        if r.random_bool(0.5) {
            m.add_constraint(
                format!("r{i}"),
                e,
                ConstraintSense::Le,
                act + r.random_range(0.0..1.5),
            );
        } else {
            m.add_constraint(
                format!("r{i}"),
                e,
                ConstraintSense::Ge,
                act - r.random_range(0.0..1.5),
            );
        }
    }
    let mut obj = LinExpr::new();
    for &v in &vars {
        obj.add_term(v, r.random_range(-5.0..5.0));
    }
    m.set_objective(obj);
    m
}

pub fn exact_config() -> SolverConfig {
    SolverConfig {
        mip_gap: 1e-9,
        ..SolverConfig::default()
    }
}

/// A model holding `net` on normalized inputs fixed to `z`.
pub fn fixed_input_model(
    net: &MlpNetwork,
    z: &[f64],
    method: &EncodingMethod,
    faithful: bool,
) -> (MixedIntegerModel, NetworkEmbedding) {
    let mut model = MixedIntegerModel::new();
    let inputs: Vec<_> = z
        .iter()
        .enumerate()
        .map(|(i, &v)| model.add_var(format!("z{i}"), v, v, VarKind::Continuous))
        .collect();
    let options = EmbedOptions {
        faithful,
        ..EmbedOptions::default()
    };
    let emb = embed_network(&mut model, net, &inputs, method, None, &options).unwrap();
    (model, emb)
}

/// Network embedded over the unit input box, then pinned to `z` by equality
/// rows. Unstable neurons keep their activation encoding.
pub fn pinned_input_model(
    net: &MlpNetwork,
    z: &[f64],
    method: &EncodingMethod,
) -> (MixedIntegerModel, NetworkEmbedding) {
    let mut model = MixedIntegerModel::new();
    let inputs: Vec<_> = (0..z.len())
        .map(|i| model.add_var(format!("z{i}"), 0.0, 1.0, VarKind::Continuous))
        .collect();
    let emb = embed_network(
        &mut model,
        net,
        &inputs,
        method,
        None,
        &EmbedOptions::default(),
    )
    .unwrap();
    for (i, (&v, &x)) in inputs.iter().zip(z).enumerate() {
        model.add_constraint(
            format!("pin{i}"),
            LinExpr::term(v, 1.0),
            ConstraintSense::Eq,
            x,
        );
    }
    (model, emb)
}

/// Minimum and maximum of `emb.output_var` over the model's feasible set.
pub fn probe(model: &mut MixedIntegerModel, emb: &NetworkEmbedding) -> (f64, f64) {
    let config = exact_config();
    let mut ends = [0.0; 2];
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        model.set_objective(LinExpr::term(emb.output_var, sign));
        let res = solve_milp(model, &config).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        ends[k] = sign * res.objective_value;
    }
    (ends[0], ends[1])
}

/// Output range with inputs fixed to `z` through their variable bounds.
pub fn probe_output(net: &MlpNetwork, z: &[f64], method: &EncodingMethod) -> (f64, f64) {
    let (mut model, emb) = fixed_input_model(net, z, method, false);
    probe(&mut model, &emb)
}

/// Output range with the network embedded over the unit box and inputs
/// pinned to `z` by rows.
pub fn probe_pinned(net: &MlpNetwork, z: &[f64], method: &EncodingMethod) -> (f64, f64) {
    let (mut model, emb) = pinned_input_model(net, z, method);
    probe(&mut model, &emb)
}

/// Plain loop evaluation of the normalized output, independent of the
/// library's forward pass.
#[allow(clippy::needless_range_loop)]
pub fn naive_forward(net: &MlpNetwork, raw: &[f64]) -> f64 {
    let fs = net.feature_scaler();
    let mut v: Vec<f64> = (0..raw.len())
        .map(|i| fs.scale[i] * raw[i] + fs.offset[i])
        .collect();
    let last = net.layers().len() - 1;
    for (h, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::new();
        for i in 0..layer.biases.len() {
            let mut s = layer.biases[i];
            for j in 0..v.len() {
                s += layer.weights[i][j] * v[j];
            }
            next.push(if h < last && s < 0.0 { 0.0 } else { s });
        }
        v = next;
    }
    let os = net.output_scaler();
    os.scale * v[0] + os.offset
}
