//! Weather ingestion (EPW and CSV), window irradiance on a tilted surface,
//! and a seeded synthetic climate generator.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{format_timestamp, parse_timestamp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub timestamps: Vec<NaiveDateTime>,
    /// Outdoor air temperature, °C.
    pub t_oa: Vec<f64>,
    /// Solar irradiance incident on the zone window, kW/m².
    pub q_sol_win: Vec<f64>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Sampling step in seconds, checked to be uniform.
    pub fn step_seconds(&self) -> Result<f64> {
        uniform_step(&self.timestamps)
    }

    /// Linear interpolation of `(T_oa, q_sol_win)` at an arbitrary instant.
    /// Instants outside the series are clamped to the end values.
    pub fn sample(&self, t: NaiveDateTime) -> (f64, f64) {
        let n = self.timestamps.len();
        let t0 = self.timestamps[0];
        let step = (self.timestamps[1] - t0).num_milliseconds() as f64;
        let pos = (t - t0).num_milliseconds() as f64 / step;
        if pos <= 0.0 {
            return (self.t_oa[0], self.q_sol_win[0]);
        }
        if pos >= (n - 1) as f64 {
            return (self.t_oa[n - 1], self.q_sol_win[n - 1]);
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        (
            self.t_oa[i] + frac * (self.t_oa[i + 1] - self.t_oa[i]),
            self.q_sol_win[i] + frac * (self.q_sol_win[i + 1] - self.q_sol_win[i]),
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["timestamp", "Toa", "qsol_win"]).map_err(csv_err)?;
        for i in 0..self.len() {
            wtr.write_record([
                format_timestamp(&self.timestamps[i]),
                self.t_oa[i].to_string(),
                self.q_sol_win[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: "csv".into(),
        message: e.to_string(),
    }
}

pub(crate) fn uniform_step(ts: &[NaiveDateTime]) -> Result<f64> {
    if ts.len() < 2 {
        return Err(Error::InsufficientData("need at least two timestamps".into()));
    }
    let step = (ts[1] - ts[0]).num_seconds();
    if step <= 0 {
        return Err(Error::InvalidArgument("timestamps are not increasing".into()));
    }
    for (i, pair) in ts.windows(2).enumerate() {
        if (pair[1] - pair[0]).num_seconds() != step {
            return Err(Error::InvalidArgument(format!("non-uniform sampling at index {}", i + 1)));
        }
    }
    Ok(step as f64)
}

/// Orientation of the window surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowOrientation {
    /// Degrees clockwise from north (180 = facing south).
    pub azimuth_deg: f64,
    /// Degrees from horizontal (90 = vertical).
    pub tilt_deg: f64,
}

impl Default for WindowOrientation {
    fn default() -> Self {
        WindowOrientation {
            azimuth_deg: 180.0,
            tilt_deg: 90.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteLocation {
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east.
    pub longitude: f64,
    /// Standard-time offset from UTC in hours.
    pub tz_hours: f64,
}

const GROUND_ALBEDO: f64 = 0.2;

/// Cosine of the solar zenith angle and of the incidence angle on the
/// window at local standard time `t`.
pub fn solar_angles(site: &SiteLocation, window: &WindowOrientation, t: NaiveDateTime) -> (f64, f64) {
    let doy = t.ordinal() as f64;
    let b = (doy - 1.0) * 2.0 * std::f64::consts::PI / 365.0;
    // equation of time, minutes
    let eot = 229.2
        * (0.000075 + 0.001868 * b.cos() - 0.032077 * b.sin() - 0.014615 * (2.0 * b).cos() - 0.04089 * (2.0 * b).sin());
    let clock_h = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let solar_h = clock_h + (4.0 * (site.longitude - 15.0 * site.tz_hours) + eot) / 60.0;
    let omega = (15.0 * (solar_h - 12.0)).to_radians();
    let delta = (23.45 * (2.0 * std::f64::consts::PI * (284.0 + doy) / 365.0).sin()).to_radians();
    let phi = site.latitude.to_radians();
    let beta = window.tilt_deg.to_radians();
    let gamma = (window.azimuth_deg - 180.0).to_radians();

    let cos_zen = phi.sin() * delta.sin() + phi.cos() * delta.cos() * omega.cos();
    let cos_inc = delta.sin() * phi.sin() * beta.cos() - delta.sin() * phi.cos() * beta.sin() * gamma.cos()
        + delta.cos() * phi.cos() * beta.cos() * omega.cos()
        + delta.cos() * phi.sin() * beta.sin() * gamma.cos() * omega.cos()
        + delta.cos() * beta.sin() * gamma.sin() * omega.sin();
    (cos_zen, cos_inc)
}

/// Isotropic-sky irradiance on the window in kW/m² from direct-normal and
/// diffuse-horizontal irradiance in W/m².
pub fn window_irradiance(site: &SiteLocation, window: &WindowOrientation, t: NaiveDateTime, dni: f64, dhi: f64) -> f64 {
    let (cos_zen, cos_inc) = solar_angles(site, window, t);
    let beta = window.tilt_deg.to_radians();
    let sun_up = cos_zen > 0.0;
    let beam = if sun_up { dni * cos_inc.max(0.0) } else { 0.0 };
    let ghi = if sun_up { dni * cos_zen } else { 0.0 } + dhi;
    let sky = dhi * (1.0 + beta.cos()) / 2.0;
    let ground = GROUND_ALBEDO * ghi * (1.0 - beta.cos()) / 2.0;
    ((beam + sky + ground) / 1000.0).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherFormat {
    Epw,
    Csv,
}

/// Reads an hourly weather file.
///
/// CSV files need a `timestamp` and `Toa` column plus either `qsol_win`
/// (used as is) or `dni` and `dhi` in W/m², which require `site`. EPW files
/// carry their own site in the LOCATION header; `site` overrides it.
pub fn ingest_weather(
    path: &Path,
    format: WeatherFormat,
    window: WindowOrientation,
    site: Option<SiteLocation>,
) -> Result<WeatherSeries> {
    let text = std::fs::read_to_string(path)?;
    match format {
        WeatherFormat::Epw => parse_epw(&text, window, site),
        WeatherFormat::Csv => parse_weather_csv(&text, window, site),
    }
}

const EPW_HEADER_LINES: usize = 8;
const EPW_FIELDS: usize = 35;
const EPW_DRY_BULB: usize = 6;
const EPW_DNI: usize = 14;
const EPW_DHI: usize = 15;

pub fn parse_epw(text: &str, window: WindowOrientation, site: Option<SiteLocation>) -> Result<WeatherSeries> {
    let mut lines = text.lines();
    let location = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let loc: Vec<&str> = location.split(',').map(str::trim).collect();
    if loc.first().map(|s| s.eq_ignore_ascii_case("LOCATION")) != Some(true) || loc.len() < 9 {
        return Err(parse_err(1, "missing LOCATION header"));
    }
    let header_site = SiteLocation {
        latitude: parse_f64(loc[6], 1, "latitude")?,
        longitude: parse_f64(loc[7], 1, "longitude")?,
        tz_hours: parse_f64(loc[8], 1, "time zone")?,
    };
    let site = site.unwrap_or(header_site);
    for i in 1..EPW_HEADER_LINES {
        lines.next().ok_or_else(|| parse_err(i + 1, "truncated header"))?;
    }

    let mut out = WeatherSeries {
        timestamps: Vec::new(),
        t_oa: Vec::new(),
        q_sol_win: Vec::new(),
    };
    let mut year: Option<i32> = None;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + EPW_HEADER_LINES + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < EPW_FIELDS {
            return Err(parse_err(lineno, "expected 35 fields"));
        }
        // TMY files mix source years; the first row's year is used throughout.
        let y = *year.get_or_insert(parse_f64(f[0], lineno, "year")? as i32);
        let month = parse_f64(f[1], lineno, "month")? as u32;
        let day = parse_f64(f[2], lineno, "day")? as u32;
        let hour = parse_f64(f[3], lineno, "hour")? as i64;
        let date = NaiveDate::from_ymd_opt(y, month, day).ok_or_else(|| parse_err(lineno, "invalid date"))?;
        // EPW hour h covers (h-1, h]
        let start = date.and_hms_opt(0, 0, 0).unwrap() + Duration::hours(hour - 1);
        let mid = start + Duration::minutes(30);
        let t_oa = parse_f64(f[EPW_DRY_BULB], lineno, "dry bulb")?;
        let dni = parse_f64(f[EPW_DNI], lineno, "direct normal")?;
        let dhi = parse_f64(f[EPW_DHI], lineno, "diffuse horizontal")?;
        if let Some(last) = out.timestamps.last() {
            if start <= *last {
                return Err(parse_err(lineno, "non-monotone timestamps"));
            }
        }
        out.timestamps.push(start);
        out.t_oa.push(t_oa);
        out.q_sol_win.push(window_irradiance(&site, &window, mid, dni, dhi));
    }
    if out.timestamps.is_empty() {
        return Err(parse_err(EPW_HEADER_LINES, "no data rows"));
    }
    Ok(out)
}

pub fn parse_weather_csv(text: &str, window: WindowOrientation, site: Option<SiteLocation>) -> Result<WeatherSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let ts_col = col("timestamp").ok_or_else(|| parse_err(1, "missing column `timestamp`"))?;
    let toa_col = col("Toa").ok_or_else(|| parse_err(1, "missing column `Toa`"))?;
    let qsol_col = col("qsol_win");
    let (dni_col, dhi_col) = (col("dni"), col("dhi"));
    if qsol_col.is_none() && (dni_col.is_none() || dhi_col.is_none()) {
        return Err(parse_err(1, "need `qsol_win` or both `dni` and `dhi` columns"));
    }
    if qsol_col.is_none() && site.is_none() {
        return Err(Error::InvalidArgument("site location required to transpose dni/dhi".into()));
    }
    let mut out = WeatherSeries {
        timestamps: Vec::new(),
        t_oa: Vec::new(),
        q_sol_win: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(csv_err)?;
        let get = |c: usize| rec.get(c).ok_or_else(|| parse_err(lineno, "short row"));
        let t = parse_timestamp(get(ts_col)?).map_err(|m| parse_err(lineno, &m))?;
        if let Some(last) = out.timestamps.last() {
            if t <= *last {
                return Err(parse_err(lineno, "non-monotone timestamps"));
            }
        }
        let t_oa = parse_f64(get(toa_col)?, lineno, "Toa")?;
        let q = match qsol_col {
            Some(c) => parse_f64(get(c)?, lineno, "qsol_win")?,
            None => {
                let dni = parse_f64(get(dni_col.unwrap())?, lineno, "dni")?;
                let dhi = parse_f64(get(dhi_col.unwrap())?, lineno, "dhi")?;
                window_irradiance(site.as_ref().unwrap(), &window, t + Duration::minutes(30), dni, dhi)
            }
        };
        if q < 0.0 {
            return Err(parse_err(lineno, "negative irradiance"));
        }
        out.timestamps.push(t);
        out.t_oa.push(t_oa);
        out.q_sol_win.push(q);
    }
    uniform_step(&out.timestamps)?;
    Ok(out)
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        location: format!("line {line}"),
        message: message.to_string(),
    }
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, &format!("cannot parse {what} from `{s}`")))
}

/// Monthly climate normals used by the synthetic weather generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClimatePreset {
    pub name: String,
    pub site: SiteLocation,
    /// Mean daily temperature per calendar month, °C.
    pub monthly_mean: [f64; 12],
    /// Half of the mean diurnal range per month, K.
    pub diurnal_amplitude: [f64; 12],
    /// Mean daily clearness (0 overcast, 1 clear) per month.
    pub clearness: [f64; 12],
    /// Standard deviation of the day-to-day temperature anomaly, K.
    pub synoptic_std: f64,
}

impl ClimatePreset {
    /// Mild marine climate of the east San Francisco Bay.
    pub fn oakland() -> Self {
        ClimatePreset {
            name: "oakland".into(),
            site: SiteLocation {
                latitude: 37.72,
                longitude: -122.22,
                tz_hours: -8.0,
            },
            monthly_mean: [10.4, 12.1, 13.3, 14.6, 16.3, 18.0, 18.5, 19.0, 19.4, 17.5, 13.6, 10.4],
            diurnal_amplitude: [4.0, 4.2, 4.3, 4.5, 4.5, 4.8, 4.6, 4.6, 5.0, 5.0, 4.5, 4.0],
            clearness: [0.55, 0.6, 0.65, 0.72, 0.75, 0.78, 0.75, 0.74, 0.76, 0.72, 0.62, 0.55],
            synoptic_std: 1.5,
        }
    }

    pub fn berkeley() -> Self {
        ClimatePreset {
            name: "berkeley".into(),
            site: SiteLocation {
                latitude: 37.87,
                longitude: -122.27,
                tz_hours: -8.0,
            },
            ..Self::oakland()
        }
    }

    /// Continental climate with four distinct seasons.
    pub fn chicago() -> Self {
        ClimatePreset {
            name: "chicago".into(),
            site: SiteLocation {
                latitude: 41.98,
                longitude: -87.90,
                tz_hours: -6.0,
            },
            monthly_mean: [-4.6, -2.5, 3.2, 9.6, 15.5, 21.0, 23.5, 22.6, 18.5, 11.8, 4.8, -1.8],
            diurnal_amplitude: [3.5, 4.0, 4.5, 5.5, 5.8, 5.8, 5.5, 5.3, 5.5, 5.5, 4.2, 3.5],
            clearness: [0.45, 0.5, 0.52, 0.55, 0.6, 0.65, 0.68, 0.66, 0.62, 0.56, 0.45, 0.42],
            synoptic_std: 4.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "oakland" => Some(Self::oakland()),
            "berkeley" => Some(Self::berkeley()),
            "chicago" => Some(Self::chicago()),
            _ => None,
        }
    }

    fn seasonal(&self, table: &[f64; 12], t: NaiveDateTime) -> f64 {
        // linear interpolation between mid-month anchors
        let pos = (t.ordinal0() as f64 + t.hour() as f64 / 24.0) / 365.0 * 12.0 - 0.5;
        let i0 = pos.floor();
        let frac = pos - i0;
        let a = table[(i0 as i64).rem_euclid(12) as usize];
        let b = table[(i0 as i64 + 1).rem_euclid(12) as usize];
        a + frac * (b - a)
    }
}

/// Hourly synthetic weather for `days` days starting at midnight of `start`.
pub fn synthetic_weather(preset: &ClimatePreset, start: NaiveDate, days: usize, seed: u64, window: WindowOrientation) -> WeatherSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5745_4154_4845_5221);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let t0 = start.and_hms_opt(0, 0, 0).unwrap();
    let hours = days * 24;
    let mut out = WeatherSeries {
        timestamps: Vec::with_capacity(hours),
        t_oa: Vec::with_capacity(hours),
        q_sol_win: Vec::with_capacity(hours),
    };

    let mut day_anom = preset.synoptic_std * unit.sample(&mut rng);
    let mut hour_anom = 0.0;
    let mut cloud_anom = 0.0;
    let mut clear = 0.0;
    for h in 0..hours {
        let t = t0 + Duration::hours(h as i64);
        if h % 24 == 0 {
            // day-to-day persistence of weather systems
            day_anom = 0.7 * day_anom + (1.0f64 - 0.49).sqrt() * preset.synoptic_std * unit.sample(&mut rng);
            cloud_anom = 0.5 * cloud_anom + 0.2 * unit.sample(&mut rng);
            let base = preset.seasonal(&preset.clearness, t);
            clear = (base + cloud_anom).clamp(0.05, 1.0);
        }
        hour_anom = 0.9 * hour_anom + 0.25 * unit.sample(&mut rng);
        let mid = t + Duration::minutes(30);
        let hod = mid.hour() as f64 + mid.minute() as f64 / 60.0;
        let mean = preset.seasonal(&preset.monthly_mean, t);
        let amp = preset.seasonal(&preset.diurnal_amplitude, t) * (0.6 + 0.6 * clear);
        let t_oa = mean + day_anom + amp * (2.0 * std::f64::consts::PI * (hod - 15.0) / 24.0).cos() + hour_anom;

        let (cos_zen, _) = solar_angles(&preset.site, &window, mid);
        let (dni, dhi) = if cos_zen > 0.01 {
            let doy = mid.ordinal() as f64;
            let g_on = 1367.0 * (1.0 + 0.033 * (2.0 * std::f64::consts::PI * doy / 365.0).cos());
            let air_mass = 1.0 / cos_zen;
            let dni_clear = g_on * 0.7f64.powf(air_mass.powf(0.678));
            let hourly_clear = (clear + 0.05 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0);
            let dni = dni_clear * hourly_clear;
            let dhi = 0.1 * dni_clear * cos_zen + (1.0 - hourly_clear) * 0.25 * g_on * cos_zen;
            (dni, dhi)
        } else {
            (0.0, 0.0)
        };
        out.timestamps.push(t);
        out.t_oa.push(t_oa);
        out.q_sol_win.push(window_irradiance(&preset.site, &window, mid, dni, dhi));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epw_text(rows: &[(u32, u32, u32, f64, f64, f64)]) -> String {
        let mut s = String::from("LOCATION,OAKLAND,CA,USA,TMY3,724930,37.72,-122.22,-8.0,2.0\n");
        for _ in 1..EPW_HEADER_LINES {
            s.push_str("HEADER,x\n");
        }
        for &(m, d, h, tdb, dni, dhi) in rows {
            let mut f = vec!["0".to_string(); EPW_FIELDS];
            f[0] = "2005".into();
            f[1] = m.to_string();
            f[2] = d.to_string();
            f[3] = h.to_string();
            f[4] = "60".into();
            f[5] = "?".into();
            f[EPW_DRY_BULB] = tdb.to_string();
            f[EPW_DNI] = dni.to_string();
            f[EPW_DHI] = dhi.to_string();
            s.push_str(&f.join(","));
            s.push('\n');
        }
        s
    }

    #[test]
    fn epw_dark_row_gives_zero() {
        let w = parse_epw(&epw_text(&[(6, 21, 1, 12.5, 0.0, 0.0)]), WindowOrientation::default(), None).unwrap();
        assert_eq!(w.t_oa, vec![12.5]);
        assert_eq!(w.q_sol_win, vec![0.0]);
        assert_eq!(w.timestamps[0], NaiveDate::from_ymd_opt(2005, 6, 21).unwrap().and_hms_opt(0, 0, 0).unwrap());
    }

    #[test]
    fn epw_noon_row_matches_hand_computation() {
        // June 21, hour 13 covers 12:00-13:00, evaluated at 12:30 local standard time.
        let w = parse_epw(&epw_text(&[(6, 21, 13, 20.0, 800.0, 100.0)]), WindowOrientation::default(), None).unwrap();

        // Independent step-by-step evaluation for a south-facing vertical surface.
        let n = 172.0_f64;
        let b = (n - 1.0) * 360.0 / 365.0;
        let br = b.to_radians();
        let eot = 229.2
            * (0.000075 + 0.001868 * br.cos() - 0.032077 * br.sin() - 0.014615 * (2.0 * br).cos()
                - 0.04089 * (2.0 * br).sin());
        let solar_time = 12.5 + (4.0 * (-122.22 - 15.0 * -8.0) + eot) / 60.0;
        let omega = (15.0 * (solar_time - 12.0)).to_radians();
        let decl = (23.45 * (360.0 * (284.0 + n) / 365.0).to_radians().sin()).to_radians();
        let lat = 37.72_f64.to_radians();
        let cos_zen = lat.sin() * decl.sin() + lat.cos() * decl.cos() * omega.cos();
        // vertical south: cos(inc) = -sin(d)cos(lat) + cos(d)sin(lat)cos(w)
        let cos_inc = -decl.sin() * lat.cos() + decl.cos() * lat.sin() * omega.cos();
        let ghi = 800.0 * cos_zen + 100.0;
        let expected = (800.0 * cos_inc.max(0.0) + 100.0 * 0.5 + 0.2 * ghi * 0.5) / 1000.0;
        assert!((w.q_sol_win[0] - expected).abs() < 1e-9, "{} vs {}", w.q_sol_win[0], expected);
    }

    #[test]
    fn epw_rejects_bad_input() {
        let e = parse_epw("NOT,A,HEADER\n", WindowOrientation::default(), None);
        assert!(matches!(e, Err(Error::Parse { .. })));
        let text = epw_text(&[(6, 21, 2, 12.0, 0.0, 0.0), (6, 21, 1, 12.0, 0.0, 0.0)]);
        assert!(parse_epw(&text, WindowOrientation::default(), None).is_err());
        let short = epw_text(&[]) + "2005,1,1,1,60\n";
        assert!(parse_epw(&short, WindowOrientation::default(), None).is_err());
    }

    #[test]
    fn csv_passthrough_and_missing_columns() {
        let text = "timestamp,Toa,qsol_win\n2021-08-02T00:00:00,15.0,0.0\n2021-08-02T01:00:00,14.5,0.25\n";
        let w = parse_weather_csv(text, WindowOrientation::default(), None).unwrap();
        assert_eq!(w.q_sol_win, vec![0.0, 0.25]);
        assert_eq!(w.step_seconds().unwrap(), 3600.0);

        let missing = "timestamp,Toa\n2021-08-02T00:00:00,15.0\n";
        assert!(parse_weather_csv(missing, WindowOrientation::default(), None).is_err());
        let dni_no_site = "timestamp,Toa,dni,dhi\n2021-08-02T00:00:00,15.0,0,0\n2021-08-02T01:00:00,15.0,0,0\n";
        assert!(parse_weather_csv(dni_no_site, WindowOrientation::default(), None).is_err());
        let backwards = "timestamp,Toa,qsol_win\n2021-08-02T01:00:00,15.0,0.0\n2021-08-02T00:00:00,14.5,0.25\n";
        assert!(parse_weather_csv(backwards, WindowOrientation::default(), None).is_err());
    }

    #[test]
    fn synthetic_weather_is_deterministic_and_plausible() {
        let start = NaiveDate::from_ymd_opt(2021, 8, 2).unwrap();
        let a = synthetic_weather(&ClimatePreset::oakland(), start, 14, 7, WindowOrientation::default());
        let b = synthetic_weather(&ClimatePreset::oakland(), start, 14, 7, WindowOrientation::default());
        assert_eq!(a, b);
        assert_eq!(a.len(), 14 * 24);
        assert!(a.q_sol_win.iter().all(|&q| q >= 0.0 && q < 1.2));
        assert!(a.q_sol_win.iter().any(|&q| q > 0.1));
        let mean = a.t_oa.iter().sum::<f64>() / a.len() as f64;
        assert!((mean - 19.0).abs() < 4.0, "{mean}");
        // nights are dark
        assert_eq!(a.q_sol_win[2], 0.0);
    }
}
