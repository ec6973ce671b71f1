//! Closed-loop ON/OFF operation of the reference building model.

use chrono::{Duration, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::dataset::OperationalDataset;
use crate::datagen::schedule::SetpointSeries;
use crate::datagen::weather::WeatherSeries;
use crate::error::{Error, Result};
use crate::model::{build_continuous, discretize, simulate, StateVector, ThetaParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermostatConfig {
    /// Controller and integration step, s.
    pub inner_step_s: i64,
    /// Half-width of the switching band around each setpoint, K.
    pub deadband: f64,
    /// Minimum time a mode (including OFF) is held, s.
    pub min_cycle_s: i64,
    /// Days of spin-up obtained by repeating the first day.
    pub spinup_days: usize,
    /// Std of Gaussian noise added to the recorded zone temperature, K.
    pub sensor_noise_std: f64,
}

impl Default for ThermostatConfig {
    fn default() -> Self {
        ThermostatConfig {
            inner_step_s: 60,
            deadband: 0.25,
            min_cycle_s: 300,
            spinup_days: 2,
            sensor_noise_std: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Off,
    Heat,
    Cool,
}

/// Dataset plus the inner-step mode log (spin-up excluded).
#[derive(Clone, Debug)]
pub struct TrueModelRun {
    pub dataset: OperationalDataset,
    pub modes: Vec<Mode>,
    pub inner_step_s: i64,
    /// Model state at the first recorded sample.
    pub x0: StateVector,
}

struct Thermostat {
    mode: Mode,
    held: i64,
    deadband: f64,
    min_cycle: i64,
}

impl Thermostat {
    fn update(&mut self, t: f64, hsp: f64, csp: f64, dt: i64) -> Mode {
        let can_switch = self.held >= self.min_cycle;
        let next = match self.mode {
            Mode::Heat if can_switch && t > hsp + self.deadband => Mode::Off,
            Mode::Cool if can_switch && t < csp - self.deadband => Mode::Off,
            Mode::Off if can_switch && t < hsp - self.deadband => Mode::Heat,
            Mode::Off if can_switch && t > csp + self.deadband => Mode::Cool,
            m => m,
        };
        if next != self.mode {
            self.mode = next;
            self.held = 0;
        }
        self.held += dt;
        self.mode
    }
}

/// Runs the reference model under thermostat control and records the
/// result every `ts` seconds from `start`.
///
/// Within each recording interval weather and gains are held at their
/// interval values; only the HVAC mode switches on the inner grid.
pub fn run_true_model(
    theta: &ThetaParams,
    weather: &WeatherSeries,
    setpoints: &SetpointSeries,
    gains: &[f64],
    start: NaiveDateTime,
    ts: i64,
    cfg: &ThermostatConfig,
    seed: u64,
) -> Result<TrueModelRun> {
    let n = gains.len();
    if setpoints.t_hsp.len() != n || setpoints.t_csp.len() != n {
        return Err(Error::LengthMismatch {
            what: "setpoints vs gains",
            expected: n,
            found: setpoints.t_hsp.len().min(setpoints.t_csp.len()),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData("empty input series".into()));
    }
    if cfg.inner_step_s <= 0 || ts % cfg.inner_step_s != 0 {
        return Err(Error::InvalidArgument("inner step must divide the recording step".into()));
    }
    if cfg.min_cycle_s < cfg.inner_step_s {
        return Err(Error::InvalidArgument("minimum cycle shorter than controller step".into()));
    }
    let end = start + Duration::seconds(ts * n as i64);
    if weather.len() < 2 || weather.timestamps[0] > start || *weather.timestamps.last().unwrap() + Duration::hours(1) < end {
        return Err(Error::InvalidArgument("weather does not cover the simulation window".into()));
    }
    let model = discretize(&build_continuous(theta)?, cfg.inner_step_s as f64)?;

    let w: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let (t_oa, q) = weather.sample(start + Duration::seconds(ts * k as i64 + ts / 2));
            [t_oa, q]
        })
        .collect();

    let per = (ts / cfg.inner_step_s) as usize;
    let steps_per_day = (86400 / ts) as usize;
    let spin: Vec<usize> = (0..cfg.spinup_days).flat_map(|_| 0..steps_per_day.min(n)).collect();

    let mut x = StateVector::uniform(0.5 * (setpoints.t_hsp[0] + setpoints.t_csp[0])).to_vector();
    let mut stat = Thermostat {
        mode: Mode::Off,
        held: cfg.min_cycle_s,
        deadband: cfg.deadband,
        min_cycle: cfg.min_cycle_s,
    };
    let mut run_interval = |k: usize, x: &mut crate::model::Vector<2>, log: Option<&mut Vec<Mode>>| -> [f64; 3] {
        let mut on = [0usize; 2];
        let y0 = model.output(x);
        let mut modes = Vec::with_capacity(per);
        for _ in 0..per {
            let mode = stat.update(model.output(x), setpoints.t_hsp[k], setpoints.t_csp[k], cfg.inner_step_s);
            let u = match mode {
                Mode::Heat => [1.0, 0.0],
                Mode::Cool => [0.0, 1.0],
                Mode::Off => [0.0, 0.0],
            };
            on[0] += (mode == Mode::Heat) as usize;
            on[1] += (mode == Mode::Cool) as usize;
            *x = model.step(x, &w[k], &u, gains[k]);
            modes.push(mode);
        }
        if let Some(log) = log {
            log.extend(modes);
        }
        [y0, on[0] as f64 / per as f64, on[1] as f64 / per as f64]
    };

    for &k in &spin {
        run_interval(k, &mut x, None);
    }
    let x0 = StateVector::from_vector(&x);
    let mut modes = Vec::with_capacity(n * per);
    let mut rec = Vec::with_capacity(n);
    for k in 0..n {
        rec.push(run_interval(k, &mut x, Some(&mut modes)));
    }
    if let Some(k) = rec.iter().position(|r| !r[0].is_finite()) {
        return Err(Error::NonFinite(format!("zone temperature at step {k}")));
    }

    let mut y: Vec<f64> = rec.iter().map(|r| r[0]).collect();
    if cfg.sensor_noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(4);
        let noise = Normal::new(0.0, cfg.sensor_noise_std)
            .map_err(|_| Error::InvalidArgument("sensor noise std must be finite".into()))?;
        for v in &mut y {
            *v += noise.sample(&mut rng);
        }
    }

    let dataset = OperationalDataset {
        timestamps: (0..n).map(|k| start + Duration::seconds(ts * k as i64)).collect(),
        t_oa: w.iter().map(|v| v[0]).collect(),
        q_sol_win: w.iter().map(|v| v[1]).collect(),
        u_h: rec.iter().map(|r| r[1]).collect(),
        u_c: rec.iter().map(|r| r[2]).collect(),
        y_za: y,
        t_hsp: setpoints.t_hsp.clone(),
        t_csp: setpoints.t_csp.clone(),
        q_g: Some(gains.to_vec()),
    };
    Ok(TrueModelRun {
        dataset,
        modes,
        inner_step_s: cfg.inner_step_s,
        x0,
    })
}

/// Replaces the measured temperature with the open-loop response of the
/// sampled-data model to the recorded inputs (gains included), starting
/// from `x0` (both states at the first measurement when `None`). The result
/// is exactly consistent with the discrete model.
pub fn replay_dataset(theta: &ThetaParams, data: &OperationalDataset, x0: Option<StateVector>) -> Result<OperationalDataset> {
    let model = discretize(&build_continuous(theta)?, data.step_seconds()?)?;
    let inputs = data.inputs(true);
    let y = simulate(&model, &x0.unwrap_or(StateVector::uniform(data.y_za[0])).to_vector(), &inputs.w, &inputs.u, &inputs.q_g)?;
    Ok(OperationalDataset {
        y_za: y,
        ..data.clone()
    })
}

/// Lengths of consecutive runs of identical modes.
pub fn mode_runs(modes: &[Mode]) -> Vec<(Mode, usize)> {
    let mut runs: Vec<(Mode, usize)> = Vec::new();
    for &m in modes {
        match runs.last_mut() {
            Some((last, len)) if *last == m => *len += 1,
            _ => runs.push((m, 1)),
        }
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::schedule::{make_gain_profile, make_setpoint_schedule, ScheduleConfig};
    use crate::datagen::weather::{synthetic_weather, ClimatePreset, WindowOrientation};
    use chrono::NaiveDate;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 8, 2).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn constant_weather(days: usize, t_oa: f64) -> WeatherSeries {
        WeatherSeries {
            timestamps: (0..days * 24 + 1).map(|h| start() + Duration::hours(h as i64)).collect(),
            t_oa: vec![t_oa; days * 24 + 1],
            q_sol_win: vec![0.0; days * 24 + 1],
        }
    }

    #[test]
    fn wide_band_never_runs_hvac() {
        let n = 3 * 96;
        let sp = SetpointSeries {
            t_hsp: vec![5.0; n],
            t_csp: vec![45.0; n],
        };
        let run = run_true_model(
            &ThetaParams::TRUE,
            &constant_weather(3, 18.0),
            &sp,
            &vec![0.5; n],
            start(),
            900,
            &ThermostatConfig::default(),
            0,
        )
        .unwrap();
        assert!(run.dataset.u_h.iter().chain(&run.dataset.u_c).all(|&u| u == 0.0));
    }

    fn office_run(days: usize, seed: u64) -> TrueModelRun {
        let n = days * 96;
        let s = ScheduleConfig::default();
        let w = synthetic_weather(&ClimatePreset::oakland(), start().date(), days + 1, seed, WindowOrientation::default());
        let sp = make_setpoint_schedule(&s, start(), n, 900, seed).unwrap();
        let g = make_gain_profile(&s, start(), n, 900, seed).unwrap();
        run_true_model(&ThetaParams::TRUE, &w, &sp, &g, start(), 900, &ThermostatConfig::default(), seed).unwrap()
    }

    #[test]
    fn every_interval_respects_minimum_cycle() {
        let run = office_run(7, 1);
        let runs = mode_runs(&run.modes);
        assert!(runs.iter().any(|r| r.0 == Mode::Cool));
        for r in &runs[1..runs.len() - 1] {
            assert!(r.1 as i64 * run.inner_step_s >= 300, "{r:?}");
        }
        for k in 0..run.dataset.len() {
            assert!(run.dataset.u_h[k] * run.dataset.u_c[k] == 0.0 || run.dataset.u_h[k] + run.dataset.u_c[k] <= 1.0);
            assert!((0.0..=1.0).contains(&run.dataset.u_h[k]));
        }
    }

    #[test]
    fn cold_weather_regulated_within_band() {
        let n = 4 * 96;
        let sp = SetpointSeries {
            t_hsp: vec![20.0; n],
            t_csp: vec![30.0; n],
        };
        let run = run_true_model(
            &ThetaParams::TRUE,
            &constant_weather(4, 0.0),
            &sp,
            &vec![0.0; n],
            start(),
            900,
            &ThermostatConfig::default(),
            0,
        )
        .unwrap();
        let d = &run.dataset;
        // overshoot from a 5 min heating pulse is bounded by 5/60 h * 6 K/h
        for &y in &d.y_za[96..] {
            assert!((19.75 - 0.55..=20.25 + 0.55).contains(&y), "{y}");
        }
        let mean = d.y_za[96..].iter().sum::<f64>() / (n - 96) as f64;
        assert!((mean - 20.0).abs() < 0.3, "{mean}");
        let mean_u = d.u_h.iter().sum::<f64>() / n as f64;
        // steady heating demand (20 - 0) / R_zo / Q_h
        assert!((mean_u - 20.0 / 9.0 / 6.0).abs() < 0.02, "{mean_u}");
    }

    #[test]
    fn replay_reproduces_measured_temperature() {
        let run = office_run(7, 2);
        let replay = replay_dataset(&ThetaParams::TRUE, &run.dataset, Some(run.x0)).unwrap();
        let max = run
            .dataset
            .y_za
            .iter()
            .zip(&replay.y_za)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 0.1, "max deviation {max}");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = office_run(2, 3);
        let b = office_run(2, 3);
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn rejects_misaligned_inputs() {
        let sp = SetpointSeries {
            t_hsp: vec![20.0; 10],
            t_csp: vec![24.0; 10],
        };
        let w = constant_weather(1, 10.0);
        let cfg = ThermostatConfig::default();
        assert!(run_true_model(&ThetaParams::TRUE, &w, &sp, &[0.0; 9], start(), 900, &cfg, 0).is_err());
        let long = SetpointSeries {
            t_hsp: vec![20.0; 500],
            t_csp: vec![24.0; 500],
        };
        assert!(run_true_model(&ThetaParams::TRUE, &w, &long, &[0.0; 500], start(), 900, &cfg, 0).is_err());
    }
}
