//! Supervised windows for disturbance forecasting.
//!
//! Signals are resampled to hourly means, z-scored per signal with a
//! normalizer fitted on the training period, and cut into windows of
//! `pattern_days * 24` past hours and a 24-hour forecast horizon.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use greybox_nnet::{Arch, Normalizer};
use serde::{Deserialize, Serialize};

use crate::datagen::OperationalDataset;
use crate::error::{Error, Result};
use crate::estimation::DisturbanceTrace;
use crate::io::format_timestamp;

pub const HOURS_PER_DAY: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    /// Hour of week, Monday 00:00 = 0.
    pub how: u32,
    pub hod: u32,
    /// Day of week, Monday = 0.
    pub dow: u32,
    /// 1 on Monday–Friday.
    pub weekday: u32,
}

pub fn calendar(t: &NaiveDateTime) -> Calendar {
    let dow = t.weekday().num_days_from_monday();
    let hod = t.hour();
    Calendar {
        how: 24 * dow + hod,
        hod,
        dow,
        weekday: u32::from(dow < 5),
    }
}

pub fn calendar_features(timestamps: &[NaiveDateTime]) -> Vec<Calendar> {
    timestamps.iter().map(calendar).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// The estimated disturbance trace (ID or OD).
    Zeta,
    How,
    Hod,
    Dow,
    Weekday,
    Toa,
    QsolWin,
    IHeat,
    ICool,
}

impl Signal {
    pub const ALL: [Signal; 9] = [
        Signal::Zeta,
        Signal::How,
        Signal::Hod,
        Signal::Dow,
        Signal::Weekday,
        Signal::Toa,
        Signal::QsolWin,
        Signal::IHeat,
        Signal::ICool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Zeta => "zeta",
            Signal::How => "how",
            Signal::Hod => "hod",
            Signal::Dow => "dow",
            Signal::Weekday => "weekday",
            Signal::Toa => "Toa",
            Signal::QsolWin => "qsol_win",
            Signal::IHeat => "i_heat",
            Signal::ICool => "i_cool",
        }
    }

    pub fn is_calendar(self) -> bool {
        matches!(self, Signal::How | Signal::Hod | Signal::Dow | Signal::Weekday)
    }

    fn period(self) -> f64 {
        match self {
            Signal::How => 168.0,
            Signal::Hod => 24.0,
            Signal::Dow => 7.0,
            _ => 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalendarEncoding {
    /// Integer-valued calendar features, z-scored like any other signal.
    #[default]
    Raw,
    /// Each periodic calendar feature becomes a (sin, cos) pair.
    Cyclic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// MLP and CNN: one flat input vector.
    FeedForward,
    /// RNN and LSTM: a per-step feature sequence.
    Recurrent,
}

impl Family {
    pub fn of(arch: Arch) -> Family {
        if arch.is_recurrent() {
            Family::Recurrent
        } else {
            Family::FeedForward
        }
    }
}

/// One row of the input-feature case catalog.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCase {
    pub id: String,
    pub family: Family,
    pub pattern_days: usize,
    pub past: Vec<Signal>,
    pub future: Vec<Signal>,
}

impl FeatureCase {
    pub fn n_k_psi(&self) -> usize {
        self.pattern_days * HOURS_PER_DAY
    }

    pub fn has_time(&self) -> bool {
        self.past.iter().chain(&self.future).any(|s| s.is_calendar())
    }

    pub fn has_past_w(&self) -> bool {
        self.past.iter().any(|s| matches!(s, Signal::Toa | Signal::QsolWin))
    }

    pub fn has_future_w(&self) -> bool {
        self.future.iter().any(|s| matches!(s, Signal::Toa | Signal::QsolWin))
    }
}

fn case(id: usize, family: Family, days: usize, past: &[Signal], future: &[Signal]) -> FeatureCase {
    FeatureCase {
        id: format!("case{id:02}"),
        family,
        pattern_days: days,
        past: past.to_vec(),
        future: future.to_vec(),
    }
}

/// The 21 feed-forward (MLP/CNN) cases.
pub fn feed_forward_cases() -> Vec<FeatureCase> {
    use Signal::*;
    let ff = Family::FeedForward;
    vec![
        case(1, ff, 1, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(2, ff, 4, &[Zeta], &[Toa, QsolWin]),
        case(3, ff, 4, &[Zeta, How], &[How, Toa, QsolWin]),
        case(4, ff, 4, &[Zeta, Weekday], &[Weekday, Toa, QsolWin]),
        case(5, ff, 4, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(6, ff, 4, &[Zeta, Weekday, Toa, QsolWin], &[Weekday, Toa, QsolWin]),
        case(7, ff, 7, &[Zeta], &[Toa, QsolWin]),
        case(8, ff, 7, &[Zeta, How], &[How, Toa, QsolWin]),
        case(9, ff, 7, &[Zeta, Weekday], &[Weekday, Toa, QsolWin]),
        case(10, ff, 7, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(11, ff, 7, &[Zeta, Weekday, Toa, QsolWin], &[Weekday, Toa, QsolWin]),
        case(12, ff, 4, &[Zeta, Dow, Toa, QsolWin], &[Dow, Toa, QsolWin]),
        case(13, ff, 7, &[Zeta, Dow, Toa, QsolWin], &[Dow, Toa, QsolWin]),
        case(14, ff, 4, &[Zeta, Toa, QsolWin], &[Toa, QsolWin]),
        case(15, ff, 7, &[Zeta, Toa, QsolWin], &[Toa, QsolWin]),
        case(16, ff, 4, &[Zeta, Weekday, Toa, QsolWin, IHeat, ICool], &[Dow, Toa, QsolWin]),
        case(17, ff, 7, &[Zeta, Weekday, Toa, QsolWin, IHeat, ICool], &[Dow, Toa, QsolWin]),
        case(18, ff, 4, &[Zeta, Dow, Toa, QsolWin, IHeat, ICool], &[Dow, Toa, QsolWin]),
        case(19, ff, 7, &[Zeta, Dow, Toa, QsolWin, IHeat, ICool], &[Dow, Toa, QsolWin]),
        case(20, ff, 4, &[Zeta, How, Toa, QsolWin, IHeat, ICool], &[Dow, Toa, QsolWin]),
        case(21, ff, 7, &[Zeta, How, Toa, QsolWin, IHeat, ICool], &[Dow, Toa, QsolWin]),
    ]
}

/// The 17 recurrent (RNN/LSTM) cases.
pub fn recurrent_cases() -> Vec<FeatureCase> {
    use Signal::*;
    let rc = Family::Recurrent;
    vec![
        case(1, rc, 1, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(2, rc, 1, &[Zeta, How], &[How]),
        case(3, rc, 1, &[Zeta, Toa, QsolWin], &[Toa, QsolWin]),
        case(4, rc, 1, &[Zeta, Hod, Toa, QsolWin], &[Hod, Toa, QsolWin]),
        case(5, rc, 1, &[Zeta, Dow, Toa, QsolWin], &[Dow, Toa, QsolWin]),
        case(6, rc, 1, &[Zeta, Weekday, Toa, QsolWin], &[Weekday, Toa, QsolWin]),
        case(7, rc, 2, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(8, rc, 4, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(9, rc, 7, &[Zeta, How, Toa, QsolWin], &[How, Toa, QsolWin]),
        case(10, rc, 4, &[Zeta, Toa, QsolWin], &[Toa, QsolWin]),
        case(11, rc, 7, &[Zeta, Toa, QsolWin], &[Toa, QsolWin]),
        case(12, rc, 2, &[Zeta, Weekday, Toa, QsolWin], &[Weekday, Toa, QsolWin]),
        case(13, rc, 4, &[Zeta, Weekday, Toa, QsolWin], &[Weekday, Toa, QsolWin]),
        case(14, rc, 7, &[Zeta, Weekday, Toa, QsolWin], &[Weekday, Toa, QsolWin]),
        case(15, rc, 2, &[Zeta, Dow, Toa, QsolWin], &[Dow, Toa, QsolWin]),
        case(16, rc, 4, &[Zeta, Dow, Toa, QsolWin], &[Dow, Toa, QsolWin]),
        case(17, rc, 7, &[Zeta, Dow, Toa, QsolWin], &[Dow, Toa, QsolWin]),
    ]
}

pub fn lookup_case(family: Family, id: &str) -> Option<FeatureCase> {
    let cases = match family {
        Family::FeedForward => feed_forward_cases(),
        Family::Recurrent => recurrent_cases(),
    };
    cases.into_iter().find(|c| c.id == id)
}

/// Hourly means of a uniformly sampled dataset. Timestamps mark the hour
/// start; leading and trailing partial hours are dropped.
pub fn resample_hourly(data: &OperationalDataset) -> Result<OperationalDataset> {
    data.validate()?;
    let step = data.step_seconds()?;
    if step > 3600.0 || 3600.0 % step != 0.0 {
        return Err(Error::InvalidArgument(format!("step {step} s does not divide one hour")));
    }
    let per = (3600.0 / step) as usize;
    let first = data
        .timestamps
        .iter()
        .position(|t| t.minute() == 0 && t.second() == 0)
        .ok_or_else(|| Error::InsufficientData("no full hour in dataset".into()))?;
    let n_hours = (data.len() - first) / per;
    let dropped = data.len() - first - n_hours * per;
    if dropped > 0 {
        log::warn!("dropping {dropped} samples of a partial trailing hour");
    }
    if n_hours == 0 {
        return Err(Error::InsufficientData("no full hour in dataset".into()));
    }
    let mean = |v: &[f64]| -> Vec<f64> {
        (0..n_hours)
            .map(|h| v[first + h * per..first + (h + 1) * per].iter().sum::<f64>() / per as f64)
            .collect()
    };
    Ok(OperationalDataset {
        timestamps: (0..n_hours).map(|h| data.timestamps[first + h * per]).collect(),
        t_oa: mean(&data.t_oa),
        q_sol_win: mean(&data.q_sol_win),
        u_h: mean(&data.u_h),
        u_c: mean(&data.u_c),
        y_za: mean(&data.y_za),
        t_hsp: mean(&data.t_hsp),
        t_csp: mean(&data.t_csp),
        q_g: data.q_g.as_ref().map(|g| mean(g)),
    })
}

/// Hourly means of a disturbance trace, aligned like [`resample_hourly`].
pub fn resample_trace_hourly(trace: &DisturbanceTrace) -> Result<DisturbanceTrace> {
    if trace.len() < 2 {
        return Err(Error::InsufficientData("trace shorter than two samples".into()));
    }
    let step = (trace.timestamps[1] - trace.timestamps[0]).num_seconds();
    if step <= 0 || 3600 % step != 0 {
        return Err(Error::InvalidArgument(format!("trace step {step} s does not divide one hour")));
    }
    let per = (3600 / step) as usize;
    let first = trace
        .timestamps
        .iter()
        .position(|t| t.minute() == 0 && t.second() == 0)
        .ok_or_else(|| Error::InsufficientData("no full hour in trace".into()))?;
    let n_hours = (trace.len() - first) / per;
    Ok(DisturbanceTrace {
        kind: trace.kind,
        timestamps: (0..n_hours).map(|h| trace.timestamps[first + h * per]).collect(),
        values: (0..n_hours)
            .map(|h| trace.values[first + h * per..first + (h + 1) * per].iter().sum::<f64>() / per as f64)
            .collect(),
        source_fingerprint: trace.source_fingerprint.clone(),
    })
}

/// Hourly signals keyed by column name. Calendar columns are derived from
/// the timestamps; the disturbance column may be absent (NaN) beyond the
/// last estimate, which only matters for targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTable {
    pub timestamps: Vec<NaiveDateTime>,
    pub columns: BTreeMap<String, Vec<f64>>,
    pub encoding: CalendarEncoding,
}

impl SignalTable {
    /// Builds the table from an hourly dataset and an hourly trace. The trace
    /// may be shorter than the dataset; missing disturbance values are NaN.
    pub fn new(hourly: &OperationalDataset, trace: &DisturbanceTrace, encoding: CalendarEncoding) -> Result<Self> {
        let n = hourly.len();
        let offset = match trace.timestamps.first() {
            Some(t0) => hourly
                .index_of(*t0)
                .ok_or_else(|| Error::InvalidArgument("trace does not start inside the dataset".into()))?,
            None => n,
        };
        let mut zeta = vec![f64::NAN; n];
        for (i, v) in trace.values.iter().enumerate() {
            if offset + i >= n {
                break;
            }
            if hourly.timestamps[offset + i] != trace.timestamps[i] {
                return Err(Error::InvalidArgument(format!(
                    "trace and dataset timestamps diverge at {}",
                    format_timestamp(&trace.timestamps[i])
                )));
            }
            zeta[offset + i] = *v;
        }
        let mut t = SignalTable {
            timestamps: hourly.timestamps.clone(),
            columns: BTreeMap::new(),
            encoding,
        };
        t.columns.insert(Signal::Zeta.name().into(), zeta);
        t.columns.insert(Signal::Toa.name().into(), hourly.t_oa.clone());
        t.columns.insert(Signal::QsolWin.name().into(), hourly.q_sol_win.clone());
        t.columns
            .insert(Signal::IHeat.name().into(), hourly.u_h.iter().map(|&u| f64::from(u8::from(u > 0.0))).collect());
        t.columns
            .insert(Signal::ICool.name().into(), hourly.u_c.iter().map(|&u| f64::from(u8::from(u > 0.0))).collect());
        let cal = calendar_features(&hourly.timestamps);
        for s in [Signal::How, Signal::Hod, Signal::Dow, Signal::Weekday] {
            let raw: Vec<f64> = cal
                .iter()
                .map(|c| match s {
                    Signal::How => c.how,
                    Signal::Hod => c.hod,
                    Signal::Dow => c.dow,
                    _ => c.weekday,
                } as f64)
                .collect();
            match encoding {
                CalendarEncoding::Raw => {
                    t.columns.insert(s.name().into(), raw);
                }
                CalendarEncoding::Cyclic if s == Signal::Weekday => {
                    t.columns.insert(s.name().into(), raw);
                }
                CalendarEncoding::Cyclic => {
                    let w = 2.0 * std::f64::consts::PI / s.period();
                    t.columns.insert(format!("{}_sin", s.name()), raw.iter().map(|v| (w * v).sin()).collect());
                    t.columns.insert(format!("{}_cos", s.name()), raw.iter().map(|v| (w * v).cos()).collect());
                }
            }
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Column names carrying `signal` under the table's encoding.
    pub fn column_names(&self, signal: Signal) -> Vec<String> {
        if self.encoding == CalendarEncoding::Cyclic && signal.is_calendar() && signal != Signal::Weekday {
            vec![format!("{}_sin", signal.name()), format!("{}_cos", signal.name())]
        } else {
            vec![signal.name().to_string()]
        }
    }

    fn column(&self, name: &str) -> &[f64] {
        &self.columns[name]
    }

    /// Fits a per-column normalizer on rows `range` (NaN entries ignored).
    pub fn fit_normalizer(&self, range: std::ops::Range<usize>) -> Result<Normalizer> {
        let names: Vec<String> = self.columns.keys().cloned().collect();
        let cols: Vec<Vec<f64>> = names
            .iter()
            .map(|n| self.columns[n][range.clone()].iter().copied().filter(|v| v.is_finite()).collect())
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        Ok(Normalizer::fit_columns(&refs)?.with_names(names))
    }

    /// Copy of the table with every column z-scored by `norm`.
    pub fn normalized(&self, norm: &Normalizer) -> Result<SignalTable> {
        let mut out = self.clone();
        for (name, col) in out.columns.iter_mut() {
            let j = norm
                .index_of(name)
                .ok_or_else(|| Error::InvalidArgument(format!("normalizer lacks column `{name}`")))?;
            for v in col.iter_mut() {
                *v = norm.apply(j, *v);
            }
        }
        Ok(out)
    }

    /// True when rows `range` are consecutive hours.
    fn gapless(&self, range: std::ops::Range<usize>) -> bool {
        self.timestamps[range].windows(2).all(|w| w[1] - w[0] == Duration::hours(1))
    }
}

/// Input/output geometry of a case for network specs: `(n_psi, n_k_psi, n_k_xi)`.
pub fn case_geometry(case: &FeatureCase, table: &SignalTable, horizon: usize) -> (usize, usize, usize) {
    let width = |sigs: &[Signal]| sigs.iter().map(|s| table.column_names(*s).len()).sum::<usize>();
    match case.family {
        Family::FeedForward => (1, width(&case.past) * case.n_k_psi() + width(&case.future) * horizon, horizon),
        Family::Recurrent => (width(&case.past), case.n_k_psi(), horizon),
    }
}

/// Input vector for a window whose first past hour is row `start` of a
/// normalized table. Disturbance values are only read from the past block.
pub fn window_input(table: &SignalTable, case: &FeatureCase, start: usize, horizon: usize) -> Result<Vec<f64>> {
    let n_past = case.n_k_psi();
    if start + n_past + horizon > table.len() {
        return Err(Error::InsufficientData(format!(
            "window at row {start} needs {} rows, table has {}",
            n_past + horizon,
            table.len()
        )));
    }
    let past = start..start + n_past;
    let future = start + n_past..start + n_past + horizon;
    let mut x = Vec::new();
    match case.family {
        Family::FeedForward => {
            for s in &case.past {
                for name in table.column_names(*s) {
                    x.extend_from_slice(&table.column(&name)[past.clone()]);
                }
            }
            for s in &case.future {
                for name in table.column_names(*s) {
                    x.extend_from_slice(&table.column(&name)[future.clone()]);
                }
            }
        }
        Family::Recurrent => {
            let names: Vec<(Signal, String)> = case
                .past
                .iter()
                .flat_map(|s| table.column_names(*s).into_iter().map(move |n| (*s, n)))
                .collect();
            for k in past.clone() {
                for (_, name) in &names {
                    x.push(table.column(name)[k]);
                }
            }
            for k in future {
                for (s, name) in &names {
                    // unknown future disturbance: zero = training mean after z-scoring
                    x.push(if *s == Signal::Zeta { 0.0 } else { table.column(name)[k] });
                }
            }
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("window input at row {start}")));
    }
    Ok(x)
}

/// Supervised windows of one feature case.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub case_id: String,
    pub family: Family,
    pub n_psi: usize,
    pub n_k_psi: usize,
    pub n_k_xi: usize,
    /// Hours of history each window covers.
    pub past_hours: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// Timestamp of each window's first past hour.
    pub starts: Vec<NaiveDateTime>,
    /// Names of the normalizer columns the inputs were scaled with.
    pub normalizer_columns: Vec<String>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dataset(&self) -> greybox_nnet::Dataset {
        greybox_nnet::Dataset::new(self.x.clone(), self.y.clone())
    }

    /// Windows whose targets end before `t` (exclusive) and those starting at
    /// or after it, for train/test splits without overlap.
    pub fn split_at(&self, t: NaiveDateTime) -> (WindowSet, WindowSet) {
        let span = Duration::hours((self.past_hours + self.n_k_xi) as i64);
        let mut a = self.empty_like();
        let mut b = self.empty_like();
        for i in 0..self.len() {
            let dst = if self.starts[i] + span <= t {
                &mut a
            } else if self.starts[i] >= t {
                &mut b
            } else {
                continue;
            };
            dst.x.push(self.x[i].clone());
            dst.y.push(self.y[i].clone());
            dst.starts.push(self.starts[i]);
        }
        (a, b)
    }

    fn empty_like(&self) -> WindowSet {
        WindowSet {
            x: Vec::new(),
            y: Vec::new(),
            starts: Vec::new(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> WindowSet {
        WindowSet {
            case_id: self.case_id.clone(),
            family: self.family,
            n_psi: self.n_psi,
            n_k_psi: self.n_k_psi,
            past_hours: self.past_hours,
            n_k_xi: self.n_k_xi,
            x: Vec::new(),
            y: Vec::new(),
            starts: Vec::new(),
            normalizer_columns: self.normalizer_columns.clone(),
        }
    }

    /// One row per window: start timestamp, flattened inputs, targets.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let nx = self.x.first().map_or(0, |v| v.len());
        let mut header = vec!["start".to_string()];
        header.extend((0..nx).map(|i| format!("x{i}")));
        header.extend((0..self.n_k_xi).map(|i| format!("y{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut row = vec![format_timestamp(&self.starts[i])];
            row.extend(self.x[i].iter().map(|v| format!("{v}")));
            row.extend(self.y[i].iter().map(|v| format!("{v}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: "window csv".into(),
        message: e.to_string(),
    }
}

/// Cuts every gapless window with a finite disturbance target out of a
/// normalized table.
pub fn build_windows(table: &SignalTable, case: &FeatureCase, horizon: usize) -> Result<WindowSet> {
    let n_past = case.n_k_psi();
    let span = n_past + horizon;
    if table.len() < span {
        return Err(Error::InsufficientData(format!(
            "{} hourly rows, case {} needs at least {span}",
            table.len(),
            case.id
        )));
    }
    let (n_psi, n_k_psi, n_k_xi) = case_geometry(case, table, horizon);
    let mut set = WindowSet {
        case_id: case.id.clone(),
        family: case.family,
        n_psi,
        n_k_psi,
        n_k_xi,
        past_hours: n_past,
        x: Vec::new(),
        y: Vec::new(),
        starts: Vec::new(),
        normalizer_columns: table.columns.keys().cloned().collect(),
    };
    let zeta = table.column(Signal::Zeta.name());
    for start in 0..=table.len() - span {
        if !table.gapless(start..start + span) {
            continue;
        }
        let target = &zeta[start + n_past..start + span];
        if target.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = match window_input(table, case, start, horizon) {
            Ok(x) => x,
            Err(Error::NonFinite(_)) => continue,
            Err(e) => return Err(e),
        };
        set.x.push(x);
        set.y.push(target.to_vec());
        set.starts.push(table.timestamps[start]);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::DisturbanceKind;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn ts(d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 8, d).unwrap().and_hms_opt(h, 0, 0).unwrap()
    }

    fn hourly_fixture(hours: usize) -> (OperationalDataset, DisturbanceTrace) {
        let t0 = ts(2, 0);
        let timestamps: Vec<NaiveDateTime> = (0..hours).map(|h| t0 + Duration::hours(h as i64)).collect();
        let f = |a: f64| -> Vec<f64> { (0..hours).map(|h| a + (h as f64 * 0.3).sin()).collect() };
        let data = OperationalDataset {
            timestamps: timestamps.clone(),
            t_oa: f(15.0),
            q_sol_win: f(1.0).into_iter().map(|v| v.max(0.0)).collect(),
            u_h: (0..hours).map(|h| if h % 5 == 0 { 0.5 } else { 0.0 }).collect(),
            u_c: vec![0.0; hours],
            y_za: f(22.0),
            t_hsp: vec![20.0; hours],
            t_csp: vec![24.0; hours],
            q_g: None,
        };
        let trace = DisturbanceTrace {
            kind: DisturbanceKind::Id,
            timestamps,
            values: (0..hours).map(|h| h as f64).collect(),
            source_fingerprint: String::new(),
        };
        (data, trace)
    }

    #[test]
    fn calendar_anchors() {
        // 2021-08-02 is a Monday
        let c = calendar(&ts(2, 0));
        assert_eq!(c, Calendar { how: 0, hod: 0, dow: 0, weekday: 1 });
        let c = calendar(&ts(8, 23));
        assert_eq!((c.how, c.dow, c.weekday), (167, 6, 0));
        for h in 0..400 {
            let c = calendar(&(ts(2, 0) + Duration::minutes(37 * h)));
            assert_eq!(c.how, 24 * c.dow + c.hod);
        }
    }

    #[test]
    fn catalog_sizes_and_lookups() {
        let ff = feed_forward_cases();
        let rc = recurrent_cases();
        assert_eq!(ff.len(), 21);
        assert_eq!(rc.len(), 17);
        for c in ff.iter().chain(&rc) {
            assert_eq!(lookup_case(c.family, &c.id).as_ref(), Some(c));
            assert_eq!(c.past[0], Signal::Zeta);
        }
        // recurrent future features are the past ones minus the disturbance
        for c in &rc {
            assert_eq!(&c.past[1..], c.future.as_slice());
        }
        let c = lookup_case(Family::FeedForward, "case02").unwrap();
        assert_eq!((c.pattern_days, c.past.clone(), c.future.clone()), (4, vec![Signal::Zeta], vec![Signal::Toa, Signal::QsolWin]));
        let c = lookup_case(Family::Recurrent, "case01").unwrap();
        assert_eq!(c.pattern_days, 1);
        assert_eq!(c.past, vec![Signal::Zeta, Signal::How, Signal::Toa, Signal::QsolWin]);
        assert!(lookup_case(Family::Recurrent, "case18").is_none());
    }

    #[test]
    fn window_count_and_widths() {
        let (d, tr) = hourly_fixture(720);
        let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
        let lstm = lookup_case(Family::Recurrent, "case01").unwrap();
        let w = build_windows(&table, &lstm, 24).unwrap();
        assert_eq!(w.len(), 720 - 47);
        assert_eq!(w.n_psi, 4);
        assert_eq!(w.x[0].len(), 4 * 48);
        let mlp = lookup_case(Family::FeedForward, "case02").unwrap();
        let w = build_windows(&table, &mlp, 24).unwrap();
        assert_eq!(w.x[0].len(), 96 + 2 * 24);
        assert_eq!(w.len(), 720 - (96 + 24) + 1);
        // past block is the disturbance only; future block is weather
        assert_eq!(&w.x[0][..96], &tr.values[..96]);
        assert_eq!(&w.x[0][96..120], &d.t_oa[96..120]);
        assert_eq!(w.y[0], tr.values[96..120].to_vec());
    }

    #[test]
    fn split_separates_windows_by_covered_hours() {
        let (d, tr) = hourly_fixture(720);
        let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
        let cut = ts(2, 0) + Duration::days(20);
        for (family, id) in [(Family::FeedForward, "case01"), (Family::FeedForward, "case02"), (Family::Recurrent, "case01")] {
            let case = lookup_case(family, id).unwrap();
            let w = build_windows(&table, &case, 24).unwrap();
            let (a, b) = w.split_at(cut);
            let span = Duration::hours((case.n_k_psi() + 24) as i64);
            assert!(!a.is_empty() && !b.is_empty(), "{id}");
            assert!(a.starts.iter().all(|s| *s + span <= cut));
            assert!(b.starts.iter().all(|s| *s >= cut));
            // straddling windows are dropped
            assert_eq!(a.len() + b.len() + case.n_k_psi() + 24 - 1, w.len());
        }
    }

    #[test]
    fn recurrent_future_disturbance_is_zero() {
        let (d, tr) = hourly_fixture(100);
        let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
        let case = lookup_case(Family::Recurrent, "case03").unwrap();
        let x = window_input(&table, &case, 5, 24).unwrap();
        let w = 3;
        for k in 0..48 {
            let z = x[k * w];
            if k < 24 {
                assert_eq!(z, tr.values[5 + k]);
            } else {
                assert_eq!(z, 0.0);
            }
            assert_eq!(x[k * w + 1], d.t_oa[5 + k]);
        }
    }

    #[test]
    fn gaps_are_skipped() {
        let (mut d, mut tr) = hourly_fixture(100);
        // remove hour 50 from both
        d = {
            let mut a = d.slice(0..50);
            let b = d.slice(51..100);
            a.timestamps.extend(b.timestamps);
            a.t_oa.extend(b.t_oa);
            a.q_sol_win.extend(b.q_sol_win);
            a.u_h.extend(b.u_h);
            a.u_c.extend(b.u_c);
            a.y_za.extend(b.y_za);
            a.t_hsp.extend(b.t_hsp);
            a.t_csp.extend(b.t_csp);
            a
        };
        tr.timestamps.remove(50);
        tr.values.remove(50);
        let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
        let case = lookup_case(Family::Recurrent, "case01").unwrap();
        let w = build_windows(&table, &case, 24).unwrap();
        let gap = ts(2, 0) + Duration::hours(50);
        for s in &w.starts {
            assert!(!(*s < gap && *s + Duration::hours(48) > gap));
        }
        assert_eq!(w.len(), (50 - 47) + (49 - 47));
    }

    #[test]
    fn resample_means_and_runtime_fraction() {
        let t0 = ts(2, 0);
        let n = 13; // three full hours plus one trailing sample
        let data = OperationalDataset {
            timestamps: (0..n).map(|k| t0 + Duration::minutes(15 * k as i64)).collect(),
            t_oa: (0..n).map(|k| k as f64).collect(),
            q_sol_win: vec![0.2; n],
            u_h: vec![0.0; n],
            u_c: (0..n).map(|k| if k % 4 < 2 { 1.0 } else { 0.0 }).collect(),
            y_za: vec![21.0; n],
            t_hsp: vec![20.0; n],
            t_csp: vec![24.0; n],
            q_g: Some(vec![0.4; n]),
        };
        let h = resample_hourly(&data).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h.t_oa, vec![1.5, 5.5, 9.5]);
        assert_eq!(h.u_c, vec![0.5; 3]);
        assert_eq!(h.y_za, vec![21.0; 3]);
        assert_eq!(h.q_g, Some(vec![0.4; 3]));
        assert_eq!(h.timestamps[1], t0 + Duration::hours(1));
    }

    #[test]
    fn cyclic_encoding_widens_calendar_features() {
        let (d, tr) = hourly_fixture(60);
        let table = SignalTable::new(&d, &tr, CalendarEncoding::Cyclic).unwrap();
        let case = lookup_case(Family::Recurrent, "case01").unwrap();
        assert_eq!(case_geometry(&case, &table, 24).0, 5);
        let w = build_windows(&table, &case, 24).unwrap();
        assert_eq!(w.x[0].len(), 5 * 48);
    }

    #[test]
    fn csv_export_has_one_row_per_window() {
        let (d, tr) = hourly_fixture(60);
        let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
        let w = build_windows(&table, &lookup_case(Family::Recurrent, "case02").unwrap(), 24).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), w.len() + 1);
        assert!(text.starts_with("start,x0,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn windows_shift_with_the_series(ci in 0usize..38, shift in 1usize..5) {
            let all: Vec<FeatureCase> = feed_forward_cases().into_iter().chain(recurrent_cases()).collect();
            let case = &all[ci];
            let (d, tr) = hourly_fixture(24 * 9);
            let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
            let w = build_windows(&table, case, 24).unwrap();
            let d2 = d.slice(shift..d.len());
            let tr2 = DisturbanceTrace { timestamps: tr.timestamps[shift..].to_vec(), values: tr.values[shift..].to_vec(), ..tr.clone() };
            let t2 = SignalTable::new(&d2, &tr2, CalendarEncoding::Raw).unwrap();
            let w2 = build_windows(&t2, case, 24).unwrap();
            prop_assert_eq!(w2.len() + shift, w.len());
            for i in 0..w2.len() {
                prop_assert_eq!(&w2.x[i], &w.x[i + shift]);
                prop_assert_eq!(&w2.y[i], &w.y[i + shift]);
            }
        }

        #[test]
        fn no_target_leaks_into_inputs(ci in 0usize..38, start in 0usize..40) {
            let all: Vec<FeatureCase> = feed_forward_cases().into_iter().chain(recurrent_cases()).collect();
            let case = &all[ci];
            let (d, mut tr) = hourly_fixture(24 * 9);
            let n_past = case.n_k_psi();
            prop_assume!(start + n_past + 24 <= d.len());
            // poison the target hours with a sentinel that cannot occur elsewhere
            for v in &mut tr.values[start + n_past..start + n_past + 24] {
                *v = 1.0e9;
            }
            let table = SignalTable::new(&d, &tr, CalendarEncoding::Raw).unwrap();
            let x = window_input(&table, case, start, 24).unwrap();
            prop_assert!(x.iter().all(|v| *v != 1.0e9));
        }
    }
}
