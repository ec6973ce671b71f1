//! Office setpoint schedule and internal-gain profile.

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_WEEK: usize = 168;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// First occupied hour on weekdays (inclusive).
    pub occupied_start_hour: u32,
    /// End of occupancy on weekdays (exclusive).
    pub occupied_end_hour: u32,
    /// Range from which each day's occupied cooling setpoint is drawn, °C.
    pub occupied_cooling: (f64, f64),
    pub unoccupied_cooling: (f64, f64),
    pub occupied_heating: (f64, f64),
    pub unoccupied_heating: (f64, f64),
    /// Base internal gain per hour of week (Monday 00:00 = 0), kW.
    pub gain_levels: Vec<f64>,
    /// Gaussian noise std as a fraction of the base level.
    pub gain_noise_frac: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            occupied_start_hour: 6,
            occupied_end_hour: 19,
            occupied_cooling: (23.0, 25.0),
            unoccupied_cooling: (28.0, 30.0),
            occupied_heating: (20.0, 21.0),
            unoccupied_heating: (15.0, 16.0),
            gain_levels: office_gain_profile(0.6, 0.35),
            gain_noise_frac: 0.15,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gain_levels.len() != HOURS_PER_WEEK {
            return Err(Error::LengthMismatch {
                what: "gain_levels",
                expected: HOURS_PER_WEEK,
                found: self.gain_levels.len(),
            });
        }
        if self.gain_levels.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("gain levels must be finite and non-negative".into()));
        }
        if !(self.gain_noise_frac >= 0.0) {
            return Err(Error::InvalidArgument("gain noise fraction must be non-negative".into()));
        }
        for (name, (lo, hi)) in [
            ("occupied_cooling", self.occupied_cooling),
            ("unoccupied_cooling", self.unoccupied_cooling),
            ("occupied_heating", self.occupied_heating),
            ("unoccupied_heating", self.unoccupied_heating),
        ] {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!("{name}: lower bound exceeds upper bound")));
            }
        }
        if self.occupied_heating.1 >= self.occupied_cooling.0 || self.unoccupied_heating.1 >= self.unoccupied_cooling.0 {
            return Err(Error::InvalidArgument("heating setpoint range must lie below cooling range".into()));
        }
        if self.occupied_start_hour >= self.occupied_end_hour || self.occupied_end_hour > 24 {
            return Err(Error::InvalidArgument("invalid occupied hours".into()));
        }
        Ok(())
    }

    pub fn is_occupied(&self, t: NaiveDateTime) -> bool {
        t.weekday().num_days_from_monday() < 5
            && t.hour() >= self.occupied_start_hour
            && t.hour() < self.occupied_end_hour
    }

    pub fn base_gain(&self, t: NaiveDateTime) -> f64 {
        self.gain_levels[hour_of_week(t)]
    }
}

pub fn hour_of_week(t: NaiveDateTime) -> usize {
    t.weekday().num_days_from_monday() as usize * 24 + t.hour() as usize
}

/// Weekday office profile built from an occupancy and a lighting step
/// schedule; weekends are empty.
///
/// Occupancy is full 8-12 and 13-17 and half at 7-8, 12-13 and 17-18.
/// Lighting is full 7-16 and half at 6-7 and 16-20.
pub fn office_gain_profile(occupancy_full_kw: f64, lighting_full_kw: f64) -> Vec<f64> {
    let occupancy = |h: usize| match h {
        8..=11 | 13..=16 => 1.0,
        7 | 12 | 17 => 0.5,
        _ => 0.0,
    };
    let lighting = |h: usize| match h {
        7..=15 => 1.0,
        6 | 16..=19 => 0.5,
        _ => 0.0,
    };
    (0..HOURS_PER_WEEK)
        .map(|how| {
            let (day, h) = (how / 24, how % 24);
            if day >= 5 {
                0.0
            } else {
                occupancy(h) * occupancy_full_kw + lighting(h) * lighting_full_kw
            }
        })
        .collect()
}

/// Internal gains sampled every `step_s` seconds from `start`.
pub fn make_gain_profile(schedule: &ScheduleConfig, start: NaiveDateTime, n_steps: usize, step_s: i64, seed: u64) -> Result<Vec<f64>> {
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let unit = Normal::new(0.0, 1.0).unwrap();
    Ok((0..n_steps)
        .map(|k| {
            let base = schedule.base_gain(start + Duration::seconds(step_s * k as i64));
            let noise = unit.sample(&mut rng);
            (base * (1.0 + schedule.gain_noise_frac * noise)).max(0.0)
        })
        .collect())
}

/// Heating and cooling setpoints sampled every `step_s` seconds.
///
/// One value per band is drawn for each calendar day and reused for every
/// occupied (or unoccupied) step of that day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetpointSeries {
    pub t_hsp: Vec<f64>,
    pub t_csp: Vec<f64>,
}

pub fn make_setpoint_schedule(schedule: &ScheduleConfig, start: NaiveDateTime, n_steps: usize, step_s: i64, seed: u64) -> Result<SetpointSeries> {
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut out = SetpointSeries {
        t_hsp: Vec::with_capacity(n_steps),
        t_csp: Vec::with_capacity(n_steps),
    };
    let mut day = None;
    let mut today = [0.0; 4];
    for k in 0..n_steps {
        let t = start + Duration::seconds(step_s * k as i64);
        if day != Some(t.date()) {
            day = Some(t.date());
            today = [
                draw(schedule.occupied_heating),
                draw(schedule.occupied_cooling),
                draw(schedule.unoccupied_heating),
                draw(schedule.unoccupied_cooling),
            ];
        }
        let (h, c) = if schedule.is_occupied(t) {
            (today[0], today[1])
        } else {
            (today[2], today[3])
        };
        out.t_hsp.push(h);
        out.t_csp.push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn monday() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 8, 2).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn weekday_mid_morning_is_full_occupancy_plus_full_lighting() {
        let s = ScheduleConfig::default();
        assert!((s.base_gain(monday() + Duration::hours(10)) - 0.95).abs() < 1e-12);
        assert_eq!(s.base_gain(monday() + Duration::hours(5 * 24 + 10)), 0.0);
        assert_eq!(s.base_gain(monday() + Duration::hours(2)), 0.0);
    }

    #[test]
    fn zero_noise_reproduces_base_profile() {
        let s = ScheduleConfig {
            gain_noise_frac: 0.0,
            ..Default::default()
        };
        let g = make_gain_profile(&s, monday(), 2 * HOURS_PER_WEEK, 3600, 3).unwrap();
        for (k, v) in g.iter().enumerate() {
            assert_eq!(*v, s.gain_levels[k % HOURS_PER_WEEK]);
        }
    }

    #[test]
    fn noisy_gain_mean_matches_base_level() {
        let s = ScheduleConfig::default();
        let weeks = 100;
        let g = make_gain_profile(&s, monday(), weeks * HOURS_PER_WEEK, 3600, 11).unwrap();
        let hour = 10;
        let samples: Vec<f64> = (0..weeks).map(|w| g[w * HOURS_PER_WEEK + hour]).collect();
        let mean = samples.iter().sum::<f64>() / weeks as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (weeks - 1) as f64;
        let se = (var / weeks as f64).sqrt();
        assert!((mean - 0.95).abs() < 3.0 * se, "mean {mean}, se {se}");
        assert!(g.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn setpoints_respect_bands_and_ordering() {
        let s = ScheduleConfig::default();
        let sp = make_setpoint_schedule(&s, monday(), 14 * 96, 900, 5).unwrap();
        for k in 0..sp.t_hsp.len() {
            assert!(sp.t_hsp[k] < sp.t_csp[k]);
            let t = monday() + Duration::seconds(900 * k as i64);
            if s.is_occupied(t) {
                assert!((23.0..=25.0).contains(&sp.t_csp[k]));
            } else {
                assert!((28.0..=30.0).contains(&sp.t_csp[k]));
            }
        }
    }

    #[test]
    fn invalid_schedule_rejected() {
        let s = ScheduleConfig {
            occupied_heating: (24.0, 26.0),
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = ScheduleConfig {
            gain_levels: vec![0.0; 10],
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
