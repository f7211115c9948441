//! Solving a built model, extracting the schedule, and checking it.

use crate::encoding::{EmbedOptions, EncodingMethod};
use crate::milp::{
    export_lp_text, solve_milp, LinExpr, MixedIntegerModel, SolveResult, SolveStats, SolveStatus,
    SolverConfig,
};
use crate::nn::{forward, FeatureVector, MlpNetwork};

use super::build::{
    assemble_objective, attach_degradation, build_base_mds, DegradationAttachment, MdsOptions,
    MdsVars,
};
use super::{MdsError, MicrogridScenario};

/// A complete degradation-aware scheduling model.
#[derive(Clone, Debug)]
pub struct NnbdModel {
    pub model: MixedIntegerModel,
    pub vars: MdsVars,
    pub attachment: DegradationAttachment,
    pub penalty: LinExpr,
    pub method: EncodingMethod,
    pub options: MdsOptions,
}

impl NnbdModel {
    pub fn build(
        scenario: &MicrogridScenario,
        net: &MlpNetwork,
        method: &EncodingMethod,
        options: &MdsOptions,
        embed: &EmbedOptions,
    ) -> Result<Self, MdsError> {
        let (mut model, vars) = build_base_mds(scenario, options)?;
        let attachment =
            attach_degradation(&mut model, &vars, scenario, options, net, method, embed)?;
        let terms = if method.penalty().is_some() {
            attachment.penalty_terms.clone()
        } else {
            Vec::new()
        };
        let penalty = assemble_objective(
            &mut model,
            &vars.base_cost,
            &attachment.cost,
            &terms,
            method,
        )?;
        Ok(Self {
            model,
            vars,
            attachment,
            penalty,
            method: method.clone(),
            options: options.clone(),
        })
    }

    pub fn lp_text(&self) -> String {
        export_lp_text(&self.model)
    }

    pub fn solve(
        &self,
        scenario: &MicrogridScenario,
        net: &MlpNetwork,
        config: &SolverConfig,
    ) -> Result<ScheduleReport, MdsError> {
        let result = solve_milp(&self.model, config)?;
        let mut report = self.extract(scenario, &result);
        if report.has_solution() {
            verify_real_degradation(net, scenario, &mut report);
        }
        Ok(report)
    }

    /// Reads a schedule out of a solver result. Real degradation is left
    /// unset.
    pub fn extract(&self, scenario: &MicrogridScenario, result: &SolveResult) -> ScheduleReport {
        let mut report = ScheduleReport {
            method: self.method.name().to_string(),
            status: result.status,
            gap: result.relative_gap,
            stats: result.stats,
            warnings: self.attachment.warnings.clone(),
            intervals: Vec::new(),
            degradation: f64::NAN,
            real_degradation: f64::NAN,
            error_pct: None,
            mg_cost: f64::NAN,
            bess_cost: f64::NAN,
            real_bess_cost: f64::NAN,
            penalty_cost: f64::NAN,
            objective: f64::NAN,
            total_cost: f64::NAN,
            real_cost: f64::NAN,
        };
        if result.values.is_empty() {
            return report;
        }
        let x = &result.values;
        let v = &self.vars;
        for t in 0..scenario.horizon() {
            let gens = v
                .generators
                .iter()
                .map(|g| GeneratorState {
                    p: x[g.p[t].0],
                    u: x[g.u[t].0],
                    v: x[g.v[t].0],
                })
                .collect();
            let units = scenario
                .bess
                .iter()
                .zip(&v.bess)
                .enumerate()
                .map(|(s, (bp, b))| {
                    let (ch, dis) = (x[b.p_ch[t].0], x[b.p_dis[t].0]);
                    let dod = if bp.e_max > 0.0 {
                        scenario.dt * (dis / bp.eta_disc + ch * bp.eta_char) / bp.e_max
                    } else {
                        0.0
                    };
                    let energy = x[b.e[t].0];
                    let degradation = self.attachment.interval_degradation[s]
                        .get(t)
                        .map_or(0.0, |e| bp.soh_now * e.eval(x));
                    BessState {
                        ch,
                        dis,
                        u_ch: x[b.u_ch[t].0],
                        u_dis: x[b.u_dis[t].0],
                        energy,
                        soc: if bp.e_max > 0.0 {
                            energy / bp.e_max
                        } else {
                            0.0
                        },
                        dod,
                        c_rate: dod / scenario.dt,
                        degradation,
                        real_degradation: f64::NAN,
                    }
                })
                .collect();
            report.intervals.push(IntervalSchedule {
                t,
                generators: gens,
                bess: units,
                buy: x[v.p_buy[t].0],
                sell: x[v.p_sell[t].0],
                u_buy: x[v.u_buy[t].0],
                u_sell: x[v.u_sell[t].0],
                spill: v.spill.as_ref().map_or(0.0, |s| x[s[t].0]),
            });
        }
        report.degradation = self.attachment.degradation.eval(x);
        report.mg_cost = v.base_cost.eval(x);
        report.bess_cost = self.attachment.cost.eval(x);
        report.penalty_cost = if self.method.penalty().is_some() {
            self.penalty.eval(x)
        } else {
            0.0
        };
        report.objective = result.objective_value;
        report.total_cost = report.objective - report.penalty_cost;
        report
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorState {
    pub p: f64,
    /// Commitment.
    pub u: f64,
    /// Start-up.
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BessState {
    pub ch: f64,
    pub dis: f64,
    pub u_ch: f64,
    pub u_dis: f64,
    /// End-of-interval stored energy, kWh.
    pub energy: f64,
    pub soc: f64,
    pub dod: f64,
    pub c_rate: f64,
    /// SOH-weighted encoded degradation.
    pub degradation: f64,
    /// SOH-weighted degradation from an exact forward pass.
    pub real_degradation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSchedule {
    pub t: usize,
    pub generators: Vec<GeneratorState>,
    pub bess: Vec<BessState>,
    pub buy: f64,
    pub sell: f64,
    pub u_buy: f64,
    pub u_sell: f64,
    pub spill: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleReport {
    pub method: String,
    pub status: SolveStatus,
    pub gap: f64,
    pub stats: SolveStats,
    pub warnings: Vec<String>,
    pub intervals: Vec<IntervalSchedule>,
    /// SOH-weighted total degradation as a fraction (not percent).
    pub degradation: f64,
    pub real_degradation: f64,
    pub error_pct: Option<f64>,
    pub mg_cost: f64,
    pub bess_cost: f64,
    pub real_bess_cost: f64,
    pub penalty_cost: f64,
    pub objective: f64,
    /// Objective minus penalty.
    pub total_cost: f64,
    /// Operating cost plus degradation cost priced from real degradation.
    pub real_cost: f64,
}

impl ScheduleReport {
    pub fn has_solution(&self) -> bool {
        !self.intervals.is_empty()
    }

    pub fn degradation_pct(&self) -> f64 {
        100.0 * self.degradation
    }

    pub fn real_degradation_pct(&self) -> f64 {
        100.0 * self.real_degradation
    }

    pub fn invalid_big_m(&self) -> bool {
        self.warnings.iter().any(|w| w.contains("big-M below"))
    }
}

/// Realized features of unit `s` at interval `t`, with DOD from the energy
/// trajectory.
pub fn realized_features(
    scenario: &MicrogridScenario,
    report: &ScheduleReport,
    s: usize,
    t: usize,
) -> FeatureVector {
    let bp = &scenario.bess[s];
    let e_now = report.intervals[t].bess[s].energy;
    let e_prev = if t == 0 {
        bp.e_initial
    } else {
        report.intervals[t - 1].bess[s].energy
    };
    let dod = (e_now - e_prev).abs() / bp.e_max;
    FeatureVector {
        temperature: scenario.series[t].temp_c,
        c_rate: dod / scenario.dt,
        soc: e_now / bp.e_max,
        dod,
        soh: bp.soh_now,
    }
    .clamped()
}

/// Recomputes degradation with exact forward passes on the realized
/// trajectory and fills the real-degradation fields of `report`.
pub fn verify_real_degradation(
    net: &MlpNetwork,
    scenario: &MicrogridScenario,
    report: &mut ScheduleReport,
) {
    let mut total = 0.0;
    let mut cost = 0.0;
    for (s, bp) in scenario.bess.iter().enumerate() {
        for t in 0..report.intervals.len() {
            let real = if bp.e_max > 0.0 {
                let f = realized_features(scenario, report, s, t);
                bp.soh_now * forward(net, &f).expect("validated network width")
            } else {
                0.0
            };
            report.intervals[t].bess[s].real_degradation = real;
            total += real;
            cost += real * bp.degradation_price();
        }
    }
    report.real_degradation = total;
    report.real_bess_cost = cost;
    report.real_cost = report.mg_cost + cost;
    report.error_pct = (total > 0.0).then(|| (report.degradation - total).abs() / total * 100.0);
}

/// Largest violation per constraint family, recomputed from the schedule
/// alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScheduleAudit {
    pub entries: Vec<(&'static str, f64)>,
}

impl ScheduleAudit {
    pub fn max_violation(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn get(&self, label: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == label)
            .map_or(0.0, |e| e.1)
    }

    fn record(&mut self, label: &'static str, v: f64) {
        let v = v.max(0.0);
        match self.entries.iter_mut().find(|e| e.0 == label) {
            Some(e) => e.1 = e.1.max(v),
            None => self.entries.push((label, v)),
        }
    }
}

/// Checks balance, limits, ramps, start-up logic, exclusivity, energy
/// recursion, terminal energy, energy bounds, and reserve.
pub fn audit_schedule(
    scenario: &MicrogridScenario,
    options: &MdsOptions,
    report: &ScheduleReport,
) -> ScheduleAudit {
    let mut a = ScheduleAudit::default();
    let dt = scenario.dt;
    let h = report.intervals.len();
    let gmax = scenario.p_grid_max;
    for (t, iv) in report.intervals.iter().enumerate() {
        let d = &scenario.series[t];
        let supply = iv.buy + iv.generators.iter().map(|g| g.p).sum::<f64>() + scenario.res(t)
            - iv.spill
            + iv.bess.iter().map(|b| b.dis).sum::<f64>();
        let demand = iv.sell + d.load_kw + iv.bess.iter().map(|b| b.ch).sum::<f64>();
        a.record("balance", (supply - demand).abs());
        a.record("spill", (iv.spill - scenario.res(t)).max(-iv.spill));

        for (g, gs) in iv.generators.iter().enumerate() {
            let gp = &scenario.generators[g];
            if options.uncoupled_gen_limits {
                a.record("gen_limits", (gp.p_min - gs.p).max(gs.p - gp.p_max));
            } else {
                a.record(
                    "gen_limits",
                    (gs.u * gp.p_min - gs.p).max(gs.p - gs.u * gp.p_max),
                );
            }
            if t + 1 < h {
                let next = report.intervals[t + 1].generators[g].p;
                a.record("ramp_up", next - gs.p - dt * gp.ramp);
                a.record("ramp_down", gs.p - next - dt * gp.ramp);
            }
            let u_prev = if t == 0 {
                if gp.initially_on {
                    1.0
                } else {
                    0.0
                }
            } else {
                report.intervals[t - 1].generators[g].u
            };
            a.record("startup", gs.u - u_prev - gs.v);
            a.record("startup_after_on", gs.v - (1.0 - u_prev));
            a.record("startup_committed", gs.v - gs.u);
            a.record(
                "integrality",
                (gs.u - gs.u.round()).abs().max((gs.v - gs.v.round()).abs()),
            );
        }

        for (s, bs) in iv.bess.iter().enumerate() {
            let bp = &scenario.bess[s];
            a.record("storage_exclusive", bs.u_ch + bs.u_dis - 1.0);
            a.record("storage_simultaneous", bs.ch.min(bs.dis));
            a.record(
                "charge_limits",
                (bs.u_ch * bp.p_min - bs.ch).max(bs.ch - bs.u_ch * bp.p_max),
            );
            a.record(
                "discharge_limits",
                (bs.u_dis * bp.p_min - bs.dis).max(bs.dis - bs.u_dis * bp.p_max),
            );
            let e_prev = if t == 0 {
                bp.e_initial
            } else {
                report.intervals[t - 1].bess[s].energy
            };
            let rec = bs.energy - e_prev + dt * (bs.dis / bp.eta_disc - bs.ch * bp.eta_char);
            a.record("energy_recursion", rec.abs());
            let e_lo = if options.use_e_min { bp.e_min } else { 0.0 };
            a.record(
                "energy_bounds",
                (e_lo - bs.energy).max(bs.energy - bp.e_max),
            );
            a.record(
                "integrality",
                (bs.u_ch - bs.u_ch.round())
                    .abs()
                    .max((bs.u_dis - bs.u_dis.round()).abs()),
            );
            if t + 1 == h {
                a.record("terminal_energy", (bs.energy - bp.e_initial).abs());
            }
        }

        a.record("grid_exclusive", iv.u_buy + iv.u_sell - 1.0);
        a.record("buy_limits", (-iv.buy).max(iv.buy - iv.u_buy * gmax));
        a.record("sell_limits", (-iv.sell).max(iv.sell - iv.u_sell * gmax));
        a.record(
            "integrality",
            (iv.u_buy - iv.u_buy.round())
                .abs()
                .max((iv.u_sell - iv.u_sell.round()).abs()),
        );

        let headroom: f64 = iv
            .generators
            .iter()
            .zip(&scenario.generators)
            .map(|(gs, gp)| {
                let cap = if options.strict_reserve {
                    gs.u * gp.p_max
                } else {
                    gp.p_max
                };
                cap - gs.p
            })
            .sum();
        let reserve = gmax - iv.buy + iv.sell + headroom;
        a.record("reserve", scenario.reserve_ratio * d.load_kw - reserve);
    }
    a
}
