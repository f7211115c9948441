//! Scenario data: device parameters and per-interval series.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MdsError;

pub const PARAMS_FORMAT: &str = "relumilp-params-v1";
pub const SERIES_HEADER: [&str; 7] = [
    "t",
    "load_kw",
    "wind_kw",
    "pv_kw",
    "temp_c",
    "buy_price",
    "sell_price",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub name: String,
    /// $/kWh.
    pub c_g: f64,
    /// $ per committed interval.
    pub c_g_nl: f64,
    /// $ per start.
    pub c_g_su: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// kW/h.
    pub ramp: f64,
    #[serde(default)]
    pub initially_on: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BessParams {
    pub name: String,
    pub e_max: f64,
    pub e_min: f64,
    pub e_initial: f64,
    /// Shared by charging and discharging.
    pub p_min: f64,
    pub p_max: f64,
    pub eta_char: f64,
    pub eta_disc: f64,
    pub capital_cost: f64,
    pub salvage_value: f64,
    pub soh_eol: f64,
    pub soh_now: f64,
}

impl BessParams {
    /// Defaults for a unit of the given size: capital $300/kWh, 10% salvage,
    /// end of life at 80% SOH, 90% roundtrip split evenly.
    pub fn with_size(name: &str, e_max: f64, p_max: f64) -> Self {
        let capital = 300.0 * e_max;
        let eta = 0.9f64.sqrt();
        Self {
            name: name.to_string(),
            e_max,
            e_min: 0.0,
            e_initial: 0.5 * e_max,
            p_min: 0.0,
            p_max,
            eta_char: eta,
            eta_disc: eta,
            capital_cost: capital,
            salvage_value: 0.1 * capital,
            soh_eol: 0.8,
            soh_now: 0.95,
        }
    }

    /// $ per unit of SOH-weighted degradation.
    pub fn degradation_price(&self) -> f64 {
        (self.capital_cost - self.salvage_value) / (1.0 - self.soh_eol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalData {
    pub load_kw: f64,
    pub wind_kw: f64,
    pub pv_kw: f64,
    pub temp_c: f64,
    pub buy_price: f64,
    pub sell_price: f64,
}

/// Device and grid parameters as stored in the params file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub format: String,
    pub dt_hours: f64,
    pub p_grid_max: f64,
    pub reserve_ratio: f64,
    #[serde(default = "one")]
    pub res_scale: f64,
    /// Installed capacities, for reference; the series carry availability.
    #[serde(default)]
    pub wind_capacity_kw: f64,
    #[serde(default)]
    pub pv_capacity_kw: f64,
    pub generators: Vec<GeneratorParams>,
    pub bess: Vec<BessParams>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct MicrogridScenario {
    /// Hours per interval.
    pub dt: f64,
    pub series: Vec<IntervalData>,
    pub p_grid_max: f64,
    pub reserve_ratio: f64,
    pub generators: Vec<GeneratorParams>,
    pub bess: Vec<BessParams>,
    /// Multiplier on wind and PV availability.
    pub res_scale: f64,
    pub wind_capacity_kw: f64,
    pub pv_capacity_kw: f64,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), MdsError> {
    if cond {
        Ok(())
    } else {
        Err(MdsError::Scenario(msg()))
    }
}

impl MicrogridScenario {
    pub fn horizon(&self) -> usize {
        self.series.len()
    }

    pub fn wind(&self, t: usize) -> f64 {
        self.series[t].wind_kw * self.res_scale
    }

    pub fn pv(&self, t: usize) -> f64 {
        self.series[t].pv_kw * self.res_scale
    }

    pub fn res(&self, t: usize) -> f64 {
        self.wind(t) + self.pv(t)
    }

    /// Keeps the first `horizon` intervals.
    pub fn truncated(&self, horizon: usize) -> Result<Self, MdsError> {
        check(horizon >= 1 && horizon <= self.horizon(), || {
            format!("horizon {horizon} outside 1..={}", self.horizon())
        })?;
        let mut s = self.clone();
        s.series.truncate(horizon);
        Ok(s)
    }

    /// Checks the invariants. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, MdsError> {
        let finite = |v: f64| v.is_finite();
        check(self.dt > 0.0 && finite(self.dt), || {
            format!("dt must be positive, got {}", self.dt)
        })?;
        check(!self.series.is_empty(), || "empty series".into())?;
        check(self.p_grid_max >= 0.0 && finite(self.p_grid_max), || {
            "p_grid_max must be >= 0".into()
        })?;
        check(
            self.reserve_ratio >= 0.0 && finite(self.reserve_ratio),
            || "reserve_ratio must be >= 0".into(),
        )?;
        check(self.res_scale >= 0.0 && finite(self.res_scale), || {
            "res_scale must be >= 0".into()
        })?;
        let mut warnings = Vec::new();
        for (t, d) in self.series.iter().enumerate() {
            for (name, v) in [
                ("load_kw", d.load_kw),
                ("wind_kw", d.wind_kw),
                ("pv_kw", d.pv_kw),
                ("buy_price", d.buy_price),
                ("sell_price", d.sell_price),
            ] {
                check(v >= 0.0 && finite(v), || {
                    format!("{name} at t={t} must be a finite nonnegative number, got {v}")
                })?;
            }
            check(finite(d.temp_c), || {
                format!("temp_c at t={t} is not finite")
            })?;
            if d.sell_price > d.buy_price {
                warnings.push(format!(
                    "sell price {} exceeds buy price {} at t={t}",
                    d.sell_price, d.buy_price
                ));
            }
        }
        for g in &self.generators {
            let n = &g.name;
            check(
                0.0 <= g.p_min && g.p_min <= g.p_max && finite(g.p_max),
                || format!("generator {n}: need 0 <= p_min <= p_max"),
            )?;
            check(g.c_g >= 0.0 && g.c_g_nl >= 0.0 && g.c_g_su >= 0.0, || {
                format!("generator {n}: costs must be nonnegative")
            })?;
            check(g.ramp > 0.0, || {
                format!("generator {n}: ramp must be positive")
            })?;
        }
        for b in &self.bess {
            let n = &b.name;
            check(
                0.0 <= b.e_min
                    && b.e_min <= b.e_initial
                    && b.e_initial <= b.e_max
                    && finite(b.e_max),
                || format!("bess {n}: need 0 <= e_min <= e_initial <= e_max"),
            )?;
            check(
                0.0 <= b.p_min && b.p_min <= b.p_max && finite(b.p_max),
                || format!("bess {n}: need 0 <= p_min <= p_max"),
            )?;
            check(
                b.eta_char > 0.0 && b.eta_char <= 1.0 && b.eta_disc > 0.0 && b.eta_disc <= 1.0,
                || format!("bess {n}: efficiencies must lie in (0, 1]"),
            )?;
            check(
                0.0 < b.soh_eol && b.soh_eol < b.soh_now && b.soh_now <= 1.0,
                || format!("bess {n}: need 0 < soh_eol < soh_now <= 1"),
            )?;
            // A unit with no capital value has nothing to salvage.
            check(
                b.salvage_value >= 0.0
                    && (b.salvage_value < b.capital_cost
                        || (b.capital_cost == 0.0 && b.salvage_value == 0.0)),
                || format!("bess {n}: need 0 <= salvage_value < capital_cost"),
            )?;
        }
        Ok(warnings)
    }

    pub fn device_params(&self) -> DeviceParams {
        DeviceParams {
            format: PARAMS_FORMAT.to_string(),
            dt_hours: self.dt,
            p_grid_max: self.p_grid_max,
            reserve_ratio: self.reserve_ratio,
            res_scale: self.res_scale,
            wind_capacity_kw: self.wind_capacity_kw,
            pv_capacity_kw: self.pv_capacity_kw,
            generators: self.generators.clone(),
            bess: self.bess.clone(),
        }
    }

    pub fn from_parts(params: DeviceParams, series: Vec<IntervalData>) -> Result<Self, MdsError> {
        if params.format != PARAMS_FORMAT {
            return Err(MdsError::Scenario(format!(
                "unsupported params format `{}`, expected `{PARAMS_FORMAT}`",
                params.format
            )));
        }
        let s = Self {
            dt: params.dt_hours,
            series,
            p_grid_max: params.p_grid_max,
            reserve_ratio: params.reserve_ratio,
            generators: params.generators,
            bess: params.bess,
            res_scale: params.res_scale,
            wind_capacity_kw: params.wind_capacity_kw,
            pv_capacity_kw: params.pv_capacity_kw,
        };
        for w in s.validate()? {
            log::warn!("{w}");
        }
        Ok(s)
    }
}

pub fn params_to_json(params: &DeviceParams) -> String {
    let mut s = serde_json::to_string_pretty(params).expect("params serialize");
    s.push('\n');
    s
}

pub fn parse_params(text: &str) -> Result<DeviceParams, MdsError> {
    serde_json::from_str(text).map_err(|e| MdsError::Scenario(format!("params file: {e}")))
}

pub fn series_to_csv(series: &[IntervalData]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SERIES_HEADER).expect("in-memory write");
    for (t, d) in series.iter().enumerate() {
        w.write_record([
            t.to_string(),
            d.load_kw.to_string(),
            d.wind_kw.to_string(),
            d.pv_kw.to_string(),
            d.temp_c.to_string(),
            d.buy_price.to_string(),
            d.sell_price.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn parse_series_csv(text: &str) -> Result<Vec<IntervalData>, MdsError> {
    let bad = |msg: String| MdsError::Scenario(format!("series file: {msg}"));
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(SERIES_HEADER) {
        return Err(bad(format!("header must be `{}`", SERIES_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64, MdsError> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{}` is not a number", i + 1, &rec[k])))
        };
        let t: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("row {}: bad interval index `{}`", i + 1, &rec[0])))?;
        if t != i {
            return Err(bad(format!("row {}: expected t = {i}, got {t}", i + 1)));
        }
        out.push(IntervalData {
            load_kw: num(1)?,
            wind_kw: num(2)?,
            pv_kw: num(3)?,
            temp_c: num(4)?,
            buy_price: num(5)?,
            sell_price: num(6)?,
        });
    }
    Ok(out)
}

pub fn load_scenario(
    series: impl AsRef<Path>,
    params: impl AsRef<Path>,
) -> Result<MicrogridScenario, MdsError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| MdsError::Scenario(format!("{}: {e}", p.display())))
    };
    let params = parse_params(&read(params.as_ref())?)?;
    let series = parse_series_csv(&read(series.as_ref())?)?;
    MicrogridScenario::from_parts(params, series)
}

pub fn save_scenario(
    scenario: &MicrogridScenario,
    series: impl AsRef<Path>,
    params: impl AsRef<Path>,
) -> Result<(), MdsError> {
    let write = |p: &Path, text: String| {
        std::fs::write(p, text).map_err(|e| MdsError::Scenario(format!("{}: {e}", p.display())))
    };
    write(series.as_ref(), series_to_csv(&scenario.series))?;
    write(params.as_ref(), params_to_json(&scenario.device_params()))
}
