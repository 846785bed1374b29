//! Exogenous time series: CSV ingestion, forecast-error Monte Carlo, and the
//! per-step data the environment consumes.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{Exogenous, ForecastPoint};
use crate::error::{Error, Result};
use crate::grid::{Network, RenewableKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub values: Vec<f64>,
    /// Step length in hours.
    pub step: f64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The four forecast signals read from one CSV, aligned step by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecasts {
    pub wind: TimeSeries,
    pub pv: TimeSeries,
    pub load: TimeSeries,
    pub price: TimeSeries,
}

impl Forecasts {
    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    /// Steps `[start, start + len)` of every signal.
    pub fn window(&self, start: usize, len: usize) -> Result<Forecasts> {
        if start + len > self.len() {
            return Err(Error::Validation(format!(
                "window {start}..{} exceeds series length {}",
                start + len,
                self.len()
            )));
        }
        let cut = |s: &TimeSeries| TimeSeries {
            name: s.name.clone(),
            values: s.values[start..start + len].to_vec(),
            step: s.step,
        };
        Ok(Forecasts {
            wind: cut(&self.wind),
            pv: cut(&self.pv),
            load: cut(&self.load),
            price: cut(&self.price),
        })
    }

    /// Consecutive whole days of `steps_per_day` steps; a trailing partial
    /// day is dropped.
    pub fn days(&self, steps_per_day: usize) -> Vec<Forecasts> {
        (0..self.len() / steps_per_day)
            .map(|d| self.window(d * steps_per_day, steps_per_day).expect("in range"))
            .collect()
    }

    /// First `n_train` days for training, the rest for testing.
    pub fn split_days(&self, steps_per_day: usize, n_train: usize) -> (Vec<Forecasts>, Vec<Forecasts>) {
        let mut days = self.days(steps_per_day);
        let test = days.split_off(n_train.min(days.len()));
        (days, test)
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    hour: f64,
    wind_kw: f64,
    pv_kw: f64,
    load_kw: f64,
    price_per_kwh: f64,
}

pub fn parse_timeseries(text: &str) -> Result<Forecasts> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .clone();
    let expected = ["hour", "wind_kw", "pv_kw", "load_kw", "price_per_kwh"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(1, format!("expected header {}", expected.join(","))));
    }
    let mut hours = Vec::new();
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, rec) in reader.deserialize::<Row>().enumerate() {
        let row_no = i + 2;
        let row = rec.map_err(|e| Error::parse(row_no, e.to_string()))?;
        for (name, v) in [
            ("wind_kw", row.wind_kw),
            ("pv_kw", row.pv_kw),
            ("load_kw", row.load_kw),
            ("price_per_kwh", row.price_per_kwh),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!("row {row_no}: {name} must be >= 0, got {v}")));
            }
        }
        hours.push(row.hour);
        cols[0].push(row.wind_kw);
        cols[1].push(row.pv_kw);
        cols[2].push(row.load_kw);
        cols[3].push(row.price_per_kwh);
    }
    if hours.is_empty() {
        return Err(Error::Validation("time series has no rows".into()));
    }
    let step = if hours.len() > 1 { hours[1] - hours[0] } else { 1.0 };
    if !(step > 0.0) || hours.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9) {
        return Err(Error::Validation("hour column must be evenly increasing".into()));
    }
    let [wind, pv, load, price] = cols;
    let ts = |name: &str, values| TimeSeries {
        name: name.into(),
        values,
        step,
    };
    Ok(Forecasts {
        wind: ts("wind_kw", wind),
        pv: ts("pv_kw", pv),
        load: ts("load_kw", load),
        price: ts("price_per_kwh", price),
    })
}

pub fn load_timeseries(path: impl AsRef<Path>) -> Result<Forecasts> {
    parse_timeseries(&fs::read_to_string(path)?)
}

/// Reactive load at a constant power factor.
pub fn reactive_load(d: f64, power_factor: f64) -> f64 {
    d * power_factor.acos().tan()
}

/// Relative standard deviations, `[day_ahead, intra_day]` per signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastErrorModel {
    pub wind: [f64; 2],
    pub pv: [f64; 2],
    pub load: [f64; 2],
    pub price: [f64; 2],
}

impl Default for ForecastErrorModel {
    fn default() -> Self {
        ForecastErrorModel {
            wind: [0.1, 0.05],
            pv: [0.1, 0.05],
            load: [0.05, 0.02],
            price: [0.05, 0.03],
        }
    }
}

impl ForecastErrorModel {
    pub fn zero() -> Self {
        ForecastErrorModel {
            wind: [0.0; 2],
            pv: [0.0; 2],
            load: [0.0; 2],
            price: [0.0; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [self.wind, self.pv, self.load, self.price].iter().flatten() {
            if !(*s >= 0.0) {
                return Err(Error::Config(format!("forecast error std-dev must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// One episode: realized values per step plus the day-ahead series the agent
/// sees as its look-ahead window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub wind: Vec<f64>,
    pub pv: Vec<f64>,
    pub load: Vec<f64>,
    pub q: Vec<f64>,
    pub price: Vec<f64>,
    /// Day-ahead (agent-visible) forecasts, `[pv, wind, price, load]` per step.
    pub day_ahead: Vec<ForecastPoint>,
    pub window: usize,
}

impl Scenario {
    /// A scenario whose realization is exactly the forecast.
    pub fn deterministic(f: &Forecasts, power_factor: f64, window: usize) -> Self {
        let n = f.len();
        Scenario {
            wind: f.wind.values.clone(),
            pv: f.pv.values.clone(),
            load: f.load.values.clone(),
            q: f.load.values.iter().map(|&d| reactive_load(d, power_factor)).collect(),
            price: f.price.values.clone(),
            day_ahead: (0..n)
                .map(|t| [f.pv.values[t], f.wind.values[t], f.price.values[t], f.load.values[t]])
                .collect(),
            window,
        }
    }

    pub fn horizon(&self) -> usize {
        self.load.len()
    }

    /// Exogenous data at step `t`. Past the horizon the final step repeats,
    /// which gives the terminal transition a well-defined next state.
    pub fn exogenous(&self, t: usize) -> Exogenous {
        let last = self.horizon() - 1;
        let k = t.min(last);
        Exogenous {
            p_pv: self.pv[k],
            p_wt: self.wind[k],
            d: self.load[k],
            q: self.q[k],
            price: self.price[k],
            forecast: (1..=self.window)
                .map(|h| self.day_ahead[(t + h).min(last)])
                .collect(),
        }
    }

    /// Largest price anywhere in the scenario.
    pub fn max_price(&self) -> f64 {
        self.price.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn max_price(&self) -> f64 {
        self.scenarios.iter().map(Scenario::max_price).fold(0.0, f64::max)
    }
}

/// Options for scenario generation beyond the forecasts and error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationOptions {
    pub power_factor: f64,
    pub window: usize,
    pub wind_capacity: f64,
    pub pv_capacity: f64,
}

impl GenerationOptions {
    pub fn for_network(net: &Network, power_factor: f64, window: usize) -> Self {
        GenerationOptions {
            power_factor,
            window,
            wind_capacity: net.installed_capacity(RenewableKind::Wind),
            pv_capacity: net.installed_capacity(RenewableKind::Pv),
        }
    }
}

/// Monte-Carlo scenarios: each step draws a multiplicative day-ahead error,
/// then a further multiplicative intra-day error on top. Values are clipped
/// to `[0, capacity]` for renewables and `>= 0` otherwise.
pub fn generate_scenarios(
    forecasts: &Forecasts,
    model: &ForecastErrorModel,
    n: usize,
    seed: u64,
    opts: &GenerationOptions,
) -> Result<ScenarioSet> {
    if n == 0 {
        return Err(Error::Config("scenario count must be >= 1".into()));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = forecasts.len();
    let mut scenarios = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = Scenario {
            wind: Vec::with_capacity(steps),
            pv: Vec::with_capacity(steps),
            load: Vec::with_capacity(steps),
            q: Vec::with_capacity(steps),
            price: Vec::with_capacity(steps),
            day_ahead: Vec::with_capacity(steps),
            window: opts.window,
        };
        for t in 0..steps {
            let mut draw = |f: f64, sd: [f64; 2], cap: f64| {
                let e_da: f64 = StandardNormal.sample(&mut rng);
                let e_id: f64 = StandardNormal.sample(&mut rng);
                let da = (f * (1.0 + sd[0] * e_da)).clamp(0.0, cap);
                let real = (da * (1.0 + sd[1] * e_id)).clamp(0.0, cap);
                (da, real)
            };
            let (wind_da, wind) = draw(forecasts.wind.values[t], model.wind, opts.wind_capacity);
            let (pv_da, pv) = draw(forecasts.pv.values[t], model.pv, opts.pv_capacity);
            let (load_da, load) = draw(forecasts.load.values[t], model.load, f64::INFINITY);
            let (price_da, price) = draw(forecasts.price.values[t], model.price, f64::INFINITY);
            s.wind.push(wind);
            s.pv.push(pv);
            s.load.push(load);
            s.q.push(reactive_load(load, opts.power_factor));
            s.price.push(price);
            s.day_ahead.push([pv_da, wind_da, price_da, load_da]);
        }
        scenarios.push(s);
    }
    Ok(ScenarioSet { seed, scenarios })
}
