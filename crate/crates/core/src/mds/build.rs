//! Assembly of the scheduling MILP and its degradation coupling.

use crate::encoding::{
    embed_network, penalty_expr, EmbedOptions, EncodingMethod, NetworkEmbedding,
};
use crate::milp::{ConstraintSense, LinExpr, MixedIntegerModel, VarId};
use crate::nn::{count_bound_violations, Interval, MlpNetwork, NeuronBoundTable, NNBD_FEATURES};

use super::{MdsError, MicrogridScenario};

use ConstraintSense::{Eq, Ge, Le};

#[derive(Clone, Debug, PartialEq)]
pub struct MdsOptions {
    /// Generator limits as bare bounds `P_min <= P <= P_max`, not coupled to
    /// the commitment binary.
    pub uncoupled_gen_limits: bool,
    /// Reserve headroom counts only committed capacity, `U P_max - P`.
    pub strict_reserve: bool,
    /// Allow curtailing wind and PV.
    pub allow_spill: bool,
    /// Use each unit's `e_min` as the lower energy bound instead of 0.
    pub use_e_min: bool,
    /// Pre-activation bounds used for every interval instead of propagating
    /// each interval's feature box.
    pub bounds: Option<NeuronBoundTable>,
}

/// Samples per interval when checking supplied bounds.
const BOUND_CHECK_SAMPLES: usize = 2000;

impl Default for MdsOptions {
    fn default() -> Self {
        Self {
            uncoupled_gen_limits: false,
            strict_reserve: false,
            allow_spill: true,
            use_e_min: false,
            bounds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorVars {
    pub p: Vec<VarId>,
    pub u: Vec<VarId>,
    pub v: Vec<VarId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BessVars {
    pub p_ch: Vec<VarId>,
    pub p_dis: Vec<VarId>,
    pub u_ch: Vec<VarId>,
    pub u_dis: Vec<VarId>,
    /// Stored energy at the end of each interval.
    pub e: Vec<VarId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdsVars {
    pub generators: Vec<GeneratorVars>,
    pub bess: Vec<BessVars>,
    pub p_buy: Vec<VarId>,
    pub p_sell: Vec<VarId>,
    pub u_buy: Vec<VarId>,
    pub u_sell: Vec<VarId>,
    pub spill: Option<Vec<VarId>>,
    /// Operating cost: energy, no-load, start-up, purchases minus sales.
    pub base_cost: LinExpr,
}

/// Builds the scheduling model without degradation. Its objective is set to
/// the operating cost.
pub fn build_base_mds(
    scenario: &MicrogridScenario,
    options: &MdsOptions,
) -> Result<(MixedIntegerModel, MdsVars), MdsError> {
    scenario.validate()?;
    let h = scenario.horizon();
    let dt = scenario.dt;
    let mut m = MixedIntegerModel::new();
    let mut cost = LinExpr::new();

    let p_buy: Vec<VarId> = (0..h)
        .map(|t| m.add_continuous(format!("p_buy_t{t}"), 0.0, scenario.p_grid_max))
        .collect();
    let p_sell: Vec<VarId> = (0..h)
        .map(|t| m.add_continuous(format!("p_sell_t{t}"), 0.0, scenario.p_grid_max))
        .collect();
    let u_buy: Vec<VarId> = (0..h)
        .map(|t| m.add_binary(format!("u_buy_t{t}")))
        .collect();
    let u_sell: Vec<VarId> = (0..h)
        .map(|t| m.add_binary(format!("u_sell_t{t}")))
        .collect();
    let spill = options.allow_spill.then(|| {
        (0..h)
            .map(|t| m.add_continuous(format!("spill_t{t}"), 0.0, scenario.res(t)))
            .collect::<Vec<_>>()
    });
    for t in 0..h {
        let d = &scenario.series[t];
        cost.add_term(p_buy[t], dt * d.buy_price);
        cost.add_term(p_sell[t], -dt * d.sell_price);
        m.add_constraint(
            format!("grid_excl_t{t}"),
            LinExpr::new().with(u_buy[t], 1.0).with(u_sell[t], 1.0),
            Le,
            1.0,
        );
        m.add_constraint(
            format!("buy_lim_t{t}"),
            LinExpr::new()
                .with(p_buy[t], 1.0)
                .with(u_buy[t], -scenario.p_grid_max),
            Le,
            0.0,
        );
        m.add_constraint(
            format!("sell_lim_t{t}"),
            LinExpr::new()
                .with(p_sell[t], 1.0)
                .with(u_sell[t], -scenario.p_grid_max),
            Le,
            0.0,
        );
    }

    let mut generators = Vec::with_capacity(scenario.generators.len());
    for (g, gp) in scenario.generators.iter().enumerate() {
        let (lo, hi) = if options.uncoupled_gen_limits {
            (gp.p_min, gp.p_max)
        } else {
            (0.0, gp.p_max)
        };
        let p: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("g{g}_p_t{t}"), lo, hi))
            .collect();
        let u: Vec<VarId> = (0..h)
            .map(|t| m.add_binary(format!("g{g}_u_t{t}")))
            .collect();
        let v: Vec<VarId> = (0..h)
            .map(|t| m.add_binary(format!("g{g}_v_t{t}")))
            .collect();
        let u_prev_init = if gp.initially_on { 1.0 } else { 0.0 };
        for t in 0..h {
            cost.add_term(p[t], dt * gp.c_g);
            cost.add_term(u[t], gp.c_g_nl);
            cost.add_term(v[t], gp.c_g_su);
            if !options.uncoupled_gen_limits {
                m.add_constraint(
                    format!("g{g}_pmax_t{t}"),
                    LinExpr::new().with(p[t], 1.0).with(u[t], -gp.p_max),
                    Le,
                    0.0,
                );
                if gp.p_min > 0.0 {
                    m.add_constraint(
                        format!("g{g}_pmin_t{t}"),
                        LinExpr::new().with(p[t], 1.0).with(u[t], -gp.p_min),
                        Ge,
                        0.0,
                    );
                }
            }
            if t + 1 < h {
                let ramp = dt * gp.ramp;
                m.add_constraint(
                    format!("g{g}_rup_t{t}"),
                    LinExpr::new().with(p[t + 1], 1.0).with(p[t], -1.0),
                    Le,
                    ramp,
                );
                m.add_constraint(
                    format!("g{g}_rdn_t{t}"),
                    LinExpr::new().with(p[t], 1.0).with(p[t + 1], -1.0),
                    Le,
                    ramp,
                );
            }
            // v_t >= u_t - u_{t-1}
            let mut start = LinExpr::new().with(v[t], 1.0).with(u[t], -1.0);
            if t == 0 {
                start.add_constant(u_prev_init);
            } else {
                start.add_term(u[t - 1], 1.0);
            }
            m.add_constraint(format!("g{g}_su_t{t}"), start, Ge, 0.0);
            // v_t <= 1 - u_{t-1}
            if t == 0 {
                if gp.initially_on {
                    m.add_constraint(format!("g{g}_nosu_t0"), LinExpr::term(v[0], 1.0), Le, 0.0);
                }
            } else {
                m.add_constraint(
                    format!("g{g}_nosu_t{t}"),
                    LinExpr::new().with(v[t], 1.0).with(u[t - 1], 1.0),
                    Le,
                    1.0,
                );
            }
            m.add_constraint(
                format!("g{g}_vu_t{t}"),
                LinExpr::new().with(v[t], 1.0).with(u[t], -1.0),
                Le,
                0.0,
            );
        }
        generators.push(GeneratorVars { p, u, v });
    }

    let mut bess = Vec::with_capacity(scenario.bess.len());
    for (s, bp) in scenario.bess.iter().enumerate() {
        let e_lo = if options.use_e_min { bp.e_min } else { 0.0 };
        let p_ch: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("s{s}_ch_t{t}"), 0.0, bp.p_max))
            .collect();
        let p_dis: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("s{s}_dis_t{t}"), 0.0, bp.p_max))
            .collect();
        let u_ch: Vec<VarId> = (0..h)
            .map(|t| m.add_binary(format!("s{s}_uch_t{t}")))
            .collect();
        let u_dis: Vec<VarId> = (0..h)
            .map(|t| m.add_binary(format!("s{s}_udis_t{t}")))
            .collect();
        let e: Vec<VarId> = (0..h)
            .map(|t| m.add_continuous(format!("s{s}_e_t{t}"), e_lo, bp.e_max))
            .collect();
        for t in 0..h {
            m.add_constraint(
                format!("s{s}_excl_t{t}"),
                LinExpr::new().with(u_ch[t], 1.0).with(u_dis[t], 1.0),
                Le,
                1.0,
            );
            for (tag, p, u) in [("ch", p_ch[t], u_ch[t]), ("dis", p_dis[t], u_dis[t])] {
                m.add_constraint(
                    format!("s{s}_{tag}max_t{t}"),
                    LinExpr::new().with(p, 1.0).with(u, -bp.p_max),
                    Le,
                    0.0,
                );
                if bp.p_min > 0.0 {
                    m.add_constraint(
                        format!("s{s}_{tag}min_t{t}"),
                        LinExpr::new().with(p, 1.0).with(u, -bp.p_min),
                        Ge,
                        0.0,
                    );
                }
            }
            // E_t - E_{t-1} + dt (dis / eta_d - ch * eta_c) = 0
            let mut rec = LinExpr::new()
                .with(e[t], 1.0)
                .with(p_dis[t], dt / bp.eta_disc)
                .with(p_ch[t], -dt * bp.eta_char);
            if t == 0 {
                rec.add_constant(-bp.e_initial);
            } else {
                rec.add_term(e[t - 1], -1.0);
            }
            m.add_constraint(format!("s{s}_energy_t{t}"), rec, Eq, 0.0);
        }
        m.add_constraint(
            format!("s{s}_terminal"),
            LinExpr::term(e[h - 1], 1.0),
            Eq,
            bp.e_initial,
        );
        bess.push(BessVars {
            p_ch,
            p_dis,
            u_ch,
            u_dis,
            e,
        });
    }

    for t in 0..h {
        let d = &scenario.series[t];
        let mut bal = LinExpr::new().with(p_buy[t], 1.0).with(p_sell[t], -1.0);
        for gv in &generators {
            bal.add_term(gv.p[t], 1.0);
        }
        for bv in &bess {
            bal.add_term(bv.p_dis[t], 1.0);
            bal.add_term(bv.p_ch[t], -1.0);
        }
        if let Some(sp) = &spill {
            bal.add_term(sp[t], -1.0);
        }
        m.add_constraint(
            format!("balance_t{t}"),
            bal,
            Eq,
            d.load_kw - scenario.res(t),
        );

        let mut reserve = LinExpr::new().with(p_buy[t], -1.0).with(p_sell[t], 1.0);
        reserve.add_constant(scenario.p_grid_max);
        for (gp, gv) in scenario.generators.iter().zip(&generators) {
            if options.strict_reserve {
                reserve.add_term(gv.u[t], gp.p_max);
            } else {
                reserve.add_constant(gp.p_max);
            }
            reserve.add_term(gv.p[t], -1.0);
        }
        m.add_constraint(
            format!("reserve_t{t}"),
            reserve,
            Ge,
            scenario.reserve_ratio * d.load_kw,
        );
    }

    let cost = cost.compacted();
    m.set_objective(cost.clone());
    Ok((
        m,
        MdsVars {
            generators,
            bess,
            p_buy,
            p_sell,
            u_buy,
            u_sell,
            spill,
            base_cost: cost,
        },
    ))
}

/// Raw feature intervals reachable by unit `s` in interval `t`:
/// temperature, C-rate, SOC, DOD, SOH.
pub fn feature_box(
    scenario: &MicrogridScenario,
    options: &MdsOptions,
    s: usize,
    t: usize,
) -> [Interval; NNBD_FEATURES] {
    let bp = &scenario.bess[s];
    let e_lo = if options.use_e_min { bp.e_min } else { 0.0 };
    let per_step = scenario.dt * bp.p_max * (1.0 / bp.eta_disc).max(bp.eta_char) / bp.e_max;
    let dod_hi = per_step.min((bp.e_max - e_lo) / bp.e_max);
    [
        Interval::point(scenario.series[t].temp_c),
        Interval::new(0.0, dod_hi / scenario.dt),
        Interval::new(e_lo / bp.e_max, 1.0),
        Interval::new(0.0, dod_hi),
        Interval::point(bp.soh_now),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradationAttachment {
    /// `[unit][interval]`; empty for units with no energy capacity.
    pub embeddings: Vec<Vec<NetworkEmbedding>>,
    /// Normalized feature variables, `[unit][interval]`.
    pub feature_vars: Vec<Vec<[VarId; NNBD_FEATURES]>>,
    /// Per-unit, per-interval degradation fraction (output-scaled).
    pub interval_degradation: Vec<Vec<LinExpr>>,
    /// SOH-weighted total degradation, summed over units.
    pub degradation: LinExpr,
    /// Equivalent degradation cost in $.
    pub cost: LinExpr,
    pub penalty_terms: Vec<(VarId, f64)>,
    pub warnings: Vec<String>,
}

/// Couples every storage unit to one network embedding per interval.
///
/// DOD is the exact throughput `dt (P_dis / eta_d + P_ch eta_c) / e_max`,
/// which equals `|SOC_t - SOC_{t-1}|` whenever at most one of the two powers
/// is nonzero; C-rate is DOD per hour; SOC uses end-of-interval energy;
/// temperature and SOH are fixed inputs.
pub fn attach_degradation(
    model: &mut MixedIntegerModel,
    vars: &MdsVars,
    scenario: &MicrogridScenario,
    options: &MdsOptions,
    net: &MlpNetwork,
    method: &EncodingMethod,
    embed: &EmbedOptions,
) -> Result<DegradationAttachment, MdsError> {
    if net.input_width() != NNBD_FEATURES {
        return Err(MdsError::Config(format!(
            "degradation network must take {NNBD_FEATURES} inputs, has {}",
            net.input_width()
        )));
    }
    if let Some(table) = &options.bounds {
        table
            .check_against(net)
            .map_err(|e| MdsError::Config(format!("supplied bounds: {e}")))?;
    }
    let scaler = net.feature_scaler();
    let out = net.output_scaler();
    let dt = scenario.dt;
    let mut att = DegradationAttachment {
        embeddings: Vec::new(),
        feature_vars: Vec::new(),
        interval_degradation: Vec::new(),
        degradation: LinExpr::new(),
        cost: LinExpr::new(),
        penalty_terms: Vec::new(),
        warnings: Vec::new(),
    };
    for (s, (bp, bv)) in scenario.bess.iter().zip(&vars.bess).enumerate() {
        let mut embs = Vec::new();
        let mut feats = Vec::new();
        let mut per_t = Vec::new();
        if bp.e_max > 0.0 {
            for t in 0..scenario.horizon() {
                let raw = feature_box(scenario, options, s, t);
                let mut z = [VarId(0); NNBD_FEATURES];
                let mut zbox = [Interval::point(0.0); NNBD_FEATURES];
                for k in 0..NNBD_FEATURES {
                    let b = scaler.map_interval(k, raw[k]);
                    zbox[k] = b;
                    if b.lo < -1e-9 || b.hi > 1.0 + 1e-9 {
                        return Err(MdsError::Config(format!(
                            "feature {k} of unit {s} at t={t} spans [{}, {}] after scaling, outside [0, 1]",
                            b.lo, b.hi
                        )));
                    }
                    z[k] = model.add_continuous(format!("s{s}t{t}_z{k}"), b.lo, b.hi);
                }
                // throughput / e_max, per hour
                let rate = LinExpr::new()
                    .with(bv.p_dis[t], 1.0 / (bp.eta_disc * bp.e_max))
                    .with(bv.p_ch[t], bp.eta_char / bp.e_max);
                let tie = |model: &mut MixedIntegerModel, k: usize, raw: LinExpr, name: &str| {
                    let mut e = LinExpr::term(z[k], 1.0);
                    e.add_expr(&raw, -scaler.scale[k]);
                    model.add_constraint(format!("s{s}t{t}_{name}"), e, Eq, scaler.offset[k]);
                };
                tie(model, 1, rate.clone(), "crate");
                tie(model, 2, LinExpr::term(bv.e[t], 1.0 / bp.e_max), "soc");
                tie(model, 3, rate.scaled(dt), "dod");
                if let Some(table) = &options.bounds {
                    let seed = (s * scenario.horizon() + t) as u64;
                    let bad = count_bound_violations(net, table, &zbox, BOUND_CHECK_SAMPLES, seed)
                        .map_err(|e| MdsError::Config(e.to_string()))?;
                    if bad > 0 {
                        return Err(MdsError::Config(format!(
                            "supplied bounds are unsound for unit {s} at t={t}: {bad} sampled pre-activations fall outside"
                        )));
                    }
                }
                let emb = embed_network(
                    model,
                    net,
                    &z,
                    method,
                    options.bounds.as_ref(),
                    &EmbedOptions {
                        prefix: format!("s{s}t{t}_"),
                        ..embed.clone()
                    },
                )?;
                let mut deg = LinExpr::term(emb.output_var, out.scale);
                deg.add_constant(out.offset);
                att.degradation.add_expr(&deg, bp.soh_now);
                att.cost.add_expr(&deg, bp.soh_now * bp.degradation_price());
                att.penalty_terms.extend_from_slice(&emb.penalty_terms);
                att.warnings
                    .extend(emb.warnings.iter().map(|w| format!("unit {s} t={t}: {w}")));
                per_t.push(deg);
                feats.push(z);
                embs.push(emb);
            }
        }
        att.embeddings.push(embs);
        att.feature_vars.push(feats);
        att.interval_degradation.push(per_t);
    }
    att.degradation = att.degradation.compacted();
    att.cost = att.cost.compacted();
    Ok(att)
}

/// Sets the objective to operating cost plus degradation cost, plus the
/// penalty for the penalized methods. Returns the penalty expression.
pub fn assemble_objective(
    model: &mut MixedIntegerModel,
    base_cost: &LinExpr,
    degradation_cost: &LinExpr,
    penalty_terms: &[(VarId, f64)],
    method: &EncodingMethod,
) -> Result<LinExpr, MdsError> {
    let penalized = method.penalty().is_some();
    if !penalized && !penalty_terms.is_empty() {
        return Err(MdsError::Config(format!(
            "{} takes no penalty terms",
            method.name()
        )));
    }
    let penalty = penalty_expr(penalty_terms);
    let mut f = base_cost.clone();
    f.add_expr(degradation_cost, 1.0);
    if penalized {
        f.add_expr(&penalty, 1.0);
    }
    model.set_objective(f);
    Ok(penalty)
}
