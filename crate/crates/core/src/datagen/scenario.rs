//! Bundled data-generation scenarios.

use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::datagen::prbs::make_prbs_setpoints;
use crate::datagen::schedule::{make_gain_profile, make_setpoint_schedule, ScheduleConfig};
use crate::datagen::thermostat::{run_true_model, ThermostatConfig, TrueModelRun};
use crate::datagen::weather::{ingest_weather, synthetic_weather, ClimatePreset, WeatherFormat, WeatherSeries, WindowOrientation};
use crate::error::{Error, Result};
use crate::model::ThetaParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrbsConfig {
    /// Day offset from the scenario start at which excitation begins.
    pub start_day: usize,
    pub days: usize,
    pub order: u32,
    pub hold_s: i64,
    pub levels: (f64, f64),
    /// Heating and cooling setpoints sit this far below/above the PRBS level.
    pub half_band: f64,
}

impl Default for PrbsConfig {
    fn default() -> Self {
        PrbsConfig {
            start_day: 5,
            days: 2,
            order: 4,
            hold_s: 7200,
            levels: (18.0, 25.0),
            half_band: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherSource {
    pub path: PathBuf,
    pub format: WeatherFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    /// Synthetic climate preset used when no weather file is given.
    pub climate: String,
    pub weather_file: Option<WeatherSource>,
    pub start: NaiveDate,
    pub days: usize,
    pub ts_seconds: i64,
    pub theta: ThetaParams,
    pub schedule: ScheduleConfig,
    pub thermostat: ThermostatConfig,
    pub prbs: Option<PrbsConfig>,
    pub window: WindowOrientation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::two_week_identification()
    }
}

impl ScenarioConfig {
    /// Two summer weeks starting on a Monday with PRBS excitation over the
    /// first weekend, mild coastal climate.
    pub fn two_week_identification() -> Self {
        ScenarioConfig {
            name: "two-week-identification".into(),
            climate: "oakland".into(),
            weather_file: None,
            start: NaiveDate::from_ymd_opt(2021, 8, 2).unwrap(),
            days: 14,
            ts_seconds: 900,
            theta: ThetaParams::TRUE,
            schedule: ScheduleConfig::default(),
            thermostat: ThermostatConfig::default(),
            prbs: Some(PrbsConfig::default()),
            window: WindowOrientation::default(),
        }
    }

    /// Plain office operation without excitation.
    pub fn operation(climate: &str, start: NaiveDate, days: usize) -> Self {
        ScenarioConfig {
            name: format!("{climate}-{start}-{days}d"),
            climate: climate.into(),
            start,
            days,
            prbs: None,
            ..Self::two_week_identification()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "two-week-identification" => Some(Self::two_week_identification()),
            _ => None,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.days * 86400 / self.ts_seconds as usize
    }

    fn weather(&self, seed: u64) -> Result<WeatherSeries> {
        match &self.weather_file {
            Some(src) => ingest_weather(&src.path, src.format, self.window, None),
            None => {
                let preset = ClimatePreset::by_name(&self.climate)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown climate preset `{}`", self.climate)))?;
                Ok(synthetic_weather(&preset, self.start, self.days + 1, seed, self.window))
            }
        }
    }
}

/// Generates the scenario's operational dataset. Weather, schedule, gains
/// and excitation draw from independent streams of `seed`.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<TrueModelRun> {
    if cfg.days == 0 || cfg.ts_seconds <= 0 || 86400 % cfg.ts_seconds != 0 {
        return Err(Error::InvalidArgument("scenario needs days > 0 and a step dividing one day".into()));
    }
    cfg.theta.validate()?;
    let start = cfg.start.and_hms_opt(0, 0, 0).unwrap();
    let n = cfg.n_steps();
    let weather = cfg.weather(seed)?;
    let mut sp = make_setpoint_schedule(&cfg.schedule, start, n, cfg.ts_seconds, seed)?;
    if let Some(p) = &cfg.prbs {
        let per_day = (86400 / cfg.ts_seconds) as usize;
        let first = p.start_day * per_day;
        let len = (p.days * per_day).min(n.saturating_sub(first));
        if len > 0 {
            let sig = make_prbs_setpoints(p.order, p.hold_s, p.levels, len as i64 * cfg.ts_seconds, cfg.ts_seconds, seed)?;
            for (i, s) in sig.setpoints.iter().enumerate() {
                sp.t_hsp[first + i] = s - p.half_band;
                sp.t_csp[first + i] = s + p.half_band;
            }
        }
    }
    let gains = make_gain_profile(&cfg.schedule, start, n, cfg.ts_seconds, seed)?;
    let run = run_true_model(&cfg.theta, &weather, &sp, &gains, start, cfg.ts_seconds, &cfg.thermostat, seed)?;
    debug_assert_eq!(run.dataset.timestamps.last().copied(), Some(start + Duration::seconds(cfg.ts_seconds * (n as i64 - 1))));
    Ok(run)
}
