//! Conventional and disturbance-aware temperature prediction, required
//! runtime fractions, and prediction metrics.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use greybox_nnet::{forward, NetParams, NetSpec, Normalizer};
use serde::{Deserialize, Serialize};

use crate::datagen::OperationalDataset;
use crate::error::{Error, Result};
use crate::estimation::{id_filter, warm_start_plain, DisturbanceKind, NoiseConfig};
use crate::features::{window_input, FeatureCase, Signal, SignalTable};
use crate::io::{format_timestamp, parse_timestamp};
use crate::model::{build_continuous, discretize, simulate, DiscreteModel, ThetaParams, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMethod {
    Conventional,
    HybridId,
    HybridOd,
}

impl PredictionMethod {
    pub const ALL: [PredictionMethod; 3] = [PredictionMethod::Conventional, PredictionMethod::HybridId, PredictionMethod::HybridOd];

    pub fn name(self) -> &'static str {
        match self {
            PredictionMethod::Conventional => "conventional",
            PredictionMethod::HybridId => "hybrid-ID",
            PredictionMethod::HybridOd => "hybrid-OD",
        }
    }

    pub fn parse(s: &str) -> Option<PredictionMethod> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" | "conv" => Some(PredictionMethod::Conventional),
            "hybrid-id" | "id" => Some(PredictionMethod::HybridId),
            "hybrid-od" | "od" => Some(PredictionMethod::HybridOd),
            _ => None,
        }
    }

    pub fn disturbance(self) -> Option<DisturbanceKind> {
        match self {
            PredictionMethod::Conventional => None,
            PredictionMethod::HybridId => Some(DisturbanceKind::Id),
            PredictionMethod::HybridOd => Some(DisturbanceKind::Od),
        }
    }
}

/// Future model inputs over the prediction horizon, at the model step.
#[derive(Clone, Debug, PartialEq)]
pub struct FutureInputs {
    pub timestamps: Vec<NaiveDateTime>,
    pub w: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
}

impl FutureInputs {
    /// Weather and recorded runtime fractions of `data` over `range`.
    pub fn from_dataset(data: &OperationalDataset, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > data.len() {
            return Err(Error::InsufficientData(format!(
                "inputs requested up to step {}, dataset has {}",
                range.end,
                data.len()
            )));
        }
        let inputs = data.inputs(false).slice(range.clone());
        Ok(FutureInputs {
            timestamps: data.timestamps[range].to_vec(),
            w: inputs.w,
            u: inputs.u,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Disturbance forecast at the model step.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceForecast {
    pub kind: DisturbanceKind,
    pub values: Vec<f64>,
}

impl DisturbanceForecast {
    pub fn zeros(kind: DisturbanceKind, n: usize) -> Self {
        DisturbanceForecast {
            kind,
            values: vec![0.0; n],
        }
    }

    /// Holds each hourly value for `steps_per_hour` model steps.
    pub fn from_hourly(kind: DisturbanceKind, hourly: &[f64], steps_per_hour: usize) -> Self {
        DisturbanceForecast {
            kind,
            values: hourly.iter().flat_map(|v| std::iter::repeat_n(*v, steps_per_hour)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    pub origin: NaiveDateTime,
    pub method: PredictionMethod,
    pub step_seconds: f64,
    pub timestamps: Vec<NaiveDateTime>,
    pub predicted: Vec<f64>,
    #[serde(default)]
    pub fingerprints: BTreeMap<String, String>,
}

impl PredictionRun {
    pub fn horizon(&self) -> usize {
        self.predicted.len()
    }
}

fn model_for(theta: &ThetaParams, step_seconds: f64) -> Result<DiscreteModel<2>> {
    discretize(&build_continuous(theta)?, step_seconds)
}

fn check_horizon(future: &FutureInputs, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if future.len() < horizon {
        return Err(Error::InsufficientData(format!(
            "horizon of {horizon} steps exceeds the {} available input steps",
            future.len()
        )));
    }
    Ok(())
}

/// Open-loop prediction without any disturbance.
pub fn predict_conventional(
    theta: &ThetaParams,
    step_seconds: f64,
    x0: &Vector<2>,
    future: &FutureInputs,
    horizon: usize,
) -> Result<PredictionRun> {
    check_horizon(future, horizon)?;
    let model = model_for(theta, step_seconds)?;
    let predicted = simulate(&model, x0, &future.w[..horizon], &future.u[..horizon], &vec![0.0; horizon])?;
    finish(PredictionMethod::Conventional, step_seconds, future, predicted)
}

/// Open-loop prediction with a disturbance forecast. The ID variant feeds
/// the forecast through the gain channel; the OD variant adds it to the
/// simulated output.
pub fn predict_hybrid(
    theta: &ThetaParams,
    step_seconds: f64,
    x0: &Vector<2>,
    future: &FutureInputs,
    forecast: &DisturbanceForecast,
    method: PredictionMethod,
    horizon: usize,
) -> Result<PredictionRun> {
    check_horizon(future, horizon)?;
    let expected = method
        .disturbance()
        .ok_or_else(|| Error::InvalidArgument("predict_hybrid needs a hybrid method".into()))?;
    if forecast.kind != expected {
        return Err(Error::KindMismatch(format!(
            "{} forecast passed to the {} predictor",
            forecast.kind.as_str(),
            method.name()
        )));
    }
    if forecast.values.len() < horizon {
        return Err(Error::InsufficientData(format!(
            "disturbance forecast has {} steps, horizon is {horizon}",
            forecast.values.len()
        )));
    }
    let model = model_for(theta, step_seconds)?;
    let d = &forecast.values[..horizon];
    let predicted = match expected {
        DisturbanceKind::Id => simulate(&model, x0, &future.w[..horizon], &future.u[..horizon], d)?,
        DisturbanceKind::Od => simulate(&model, x0, &future.w[..horizon], &future.u[..horizon], &vec![0.0; horizon])?
            .into_iter()
            .zip(d)
            .map(|(y, nu)| y + nu)
            .collect(),
    };
    finish(method, step_seconds, future, predicted)
}

fn finish(method: PredictionMethod, step_seconds: f64, future: &FutureInputs, predicted: Vec<f64>) -> Result<PredictionRun> {
    if predicted.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} prediction", method.name())));
    }
    let n = predicted.len();
    Ok(PredictionRun {
        origin: future.timestamps[0],
        method,
        step_seconds,
        timestamps: future.timestamps[..n].to_vec(),
        predicted,
        fingerprints: BTreeMap::new(),
    })
}

/// Initial state at the step following `trailing` for the given method.
///
/// Conventional: plain filter. Hybrid-ID: augmented filter, disturbance
/// state dropped. Hybrid-OD: open-loop simulation from the first sample of
/// `trailing`, matching how the OD trace was produced; pass the full history
/// up to the origin so the state continues the trace's simulation.
pub fn warm_start(method: PredictionMethod, theta: &ThetaParams, noise: &NoiseConfig, trailing: &OperationalDataset) -> Result<Vector<2>> {
    if trailing.len() < 2 {
        return Err(Error::InsufficientData("warm-up needs at least two samples".into()));
    }
    match method {
        PredictionMethod::Conventional => warm_start_plain(theta, noise, trailing, false),
        PredictionMethod::HybridId => {
            let out = id_filter(theta, noise, trailing)?;
            Ok(Vector::<2>::new(out.last.x[0], out.last.x[1]))
        }
        PredictionMethod::HybridOd => {
            let model = model_for(theta, trailing.step_seconds()?)?;
            let inputs = trailing.inputs(false);
            let y0 = trailing.y_za[0];
            let mut x = Vector::<2>::new(y0, y0);
            for k in 0..inputs.len() {
                x = model.step(&x, &inputs.w[k], &inputs.u[k], 0.0);
            }
            Ok(x)
        }
    }
}

/// Runtime fractions that make the model reproduce a measured trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadRequirement {
    pub u_h: Vec<f64>,
    pub u_c: Vec<f64>,
    /// Reconstructed states `x̂(0..=N−1)`.
    pub states: Vec<[f64; 2]>,
    /// Steps where the required fraction exceeds the installed capacity.
    pub over_capacity: Vec<bool>,
}

impl LoadRequirement {
    pub fn len(&self) -> usize {
        self.u_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_h.is_empty()
    }

    /// Heating (positive) and cooling (negative) rates in kW.
    pub fn rates(&self, theta: &ThetaParams) -> (Vec<f64>, Vec<f64>) {
        (
            self.u_h.iter().map(|u| theta.q_h * u).collect(),
            self.u_c.iter().map(|u| theta.q_c * u).collect(),
        )
    }
}

/// Inverts the one-step output map for the runtime fraction.
///
/// For each step the residual `q = y(k+1) − C(A x̂ + B_w w + B_g g)` is
/// attributed to heating when positive and to cooling when negative, each
/// through its own scalar gain `C B_u[:, j]`. The state is then advanced
/// with the recovered input. `y` and `w` have length `N`; the result has
/// `N − 1` steps. `gain` is an optional known or forecast gain input.
pub fn required_rtf(
    theta: &ThetaParams,
    step_seconds: f64,
    y: &[f64],
    w: &[[f64; 2]],
    x0: &Vector<2>,
    gain: Option<&[f64]>,
) -> Result<LoadRequirement> {
    if y.len() != w.len() {
        return Err(Error::LengthMismatch {
            what: "measured output vs weather",
            expected: w.len(),
            found: y.len(),
        });
    }
    if let Some(g) = gain {
        if g.len() + 1 < y.len() {
            return Err(Error::LengthMismatch {
                what: "gain vs trajectory steps",
                expected: y.len().saturating_sub(1),
                found: g.len(),
            });
        }
    }
    if y.len() < 2 {
        return Err(Error::InsufficientData("trajectory needs at least two samples".into()));
    }
    let model = model_for(theta, step_seconds)?;
    let r = model.c_d * model.b_ud;
    let (r_h, r_c) = (r[(0, 0)], r[(0, 1)]);
    let scale = model.c_d.norm() * model.b_wd.norm().max(1.0);
    if r_h.abs() <= 1e-12 * scale || r_c.abs() <= 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "degenerate input gain row [{r_h:e}, {r_c:e}]"
        )));
    }
    let n = y.len() - 1;
    let mut out = LoadRequirement {
        u_h: Vec::with_capacity(n),
        u_c: Vec::with_capacity(n),
        states: Vec::with_capacity(n + 1),
        over_capacity: Vec::with_capacity(n),
    };
    let mut x = *x0;
    for k in 0..n {
        out.states.push([x[0], x[1]]);
        let g = gain.map_or(0.0, |g| g[k]);
        let free = model.step(&x, &w[k], &[0.0, 0.0], g);
        let q = y[k + 1] - model.output(&free);
        let (uh, uc) = if q >= 0.0 { (q / r_h, 0.0) } else { (0.0, q / r_c) };
        if !uh.is_finite() || !uc.is_finite() {
            return Err(Error::NonFinite(format!("required runtime at step {k}")));
        }
        out.u_h.push(uh);
        out.u_c.push(uc);
        out.over_capacity.push(uh.abs() > 1.0 || uc.abs() > 1.0);
        x = model.step(&x, &w[k], &[uh, uc], g);
    }
    out.states.push([x[0], x[1]]);
    Ok(out)
}

/// Forecasts the next `horizon` hourly disturbance values from a normalized
/// hourly table whose row `origin` is the first forecast hour.
pub fn forecast_disturbance(
    spec: &NetSpec,
    params: &NetParams,
    normalizer: &Normalizer,
    case: &FeatureCase,
    table: &SignalTable,
    origin: usize,
) -> Result<Vec<f64>> {
    let n_past = case.n_k_psi();
    if origin < n_past {
        return Err(Error::InsufficientData(format!(
            "forecast origin at hour {origin} needs {n_past} hours of history"
        )));
    }
    let x = window_input(table, case, origin - n_past, spec.n_k_xi)?;
    let z = forward(spec, params, &x)?;
    let j = normalizer
        .index_of(Signal::Zeta.name())
        .ok_or_else(|| Error::InvalidArgument("normalizer lacks the disturbance column".into()))?;
    Ok(z.into_iter().map(|v| normalizer.invert(j, v)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

pub fn metrics(predicted: &[f64], measured: &[f64]) -> Result<Metrics> {
    if predicted.len() != measured.len() {
        return Err(Error::LengthMismatch {
            what: "predicted vs measured",
            expected: measured.len(),
            found: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::InsufficientData("empty overlap".into()));
    }
    let n = predicted.len() as f64;
    let (sq, ab) = predicted
        .iter()
        .zip(measured)
        .fold((0.0, 0.0), |(s, a), (p, m)| (s + (p - m).powi(2), a + (p - m).abs()));
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: ab / n,
        n: predicted.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub origin: NaiveDateTime,
    pub method: PredictionMethod,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: PredictionMethod,
    pub runs: usize,
    pub mean_rmse: f64,
    pub mean_mae: f64,
    /// RMSE over all pooled prediction steps.
    pub pooled_rmse: f64,
}

/// Per-origin RMSE difference of a hybrid method against the conventional
/// prediction from the same origin. Negative is an improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub origin: NaiveDateTime,
    pub method: PredictionMethod,
    pub rmse_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub runs: Vec<RunMetrics>,
    pub summary: Vec<MethodSummary>,
    /// Daily RMSE per method, keyed by calendar date of the predicted steps.
    pub per_day: BTreeMap<NaiveDate, BTreeMap<PredictionMethod, f64>>,
    pub deltas: Vec<Delta>,
}

impl EvaluationReport {
    pub fn summary_for(&self, method: PredictionMethod) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn mean_delta(&self, method: PredictionMethod) -> Option<f64> {
        let d: Vec<f64> = self.deltas.iter().filter(|d| d.method == method).map(|d| d.rmse_delta).collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }

    /// Per-day RMSE table, one column per method present.
    pub fn write_per_day_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let methods: Vec<PredictionMethod> = PredictionMethod::ALL
            .into_iter()
            .filter(|m| self.summary.iter().any(|s| s.method == *m))
            .collect();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(methods.iter().map(|m| format!("rmse_{}", m.name())));
        w.write_record(&header).map_err(csv_err)?;
        for (day, row) in &self.per_day {
            let mut rec = vec![day.format("%Y-%m-%d").to_string()];
            rec.extend(methods.iter().map(|m| row.get(m).map_or(String::new(), |v| format!("{v:.6}"))));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores prediction runs against measured output.
pub fn evaluate(runs: &[PredictionRun], measured: &OperationalDataset) -> Result<EvaluationReport> {
    let lookup: BTreeMap<NaiveDateTime, f64> = measured.timestamps.iter().copied().zip(measured.y_za.iter().copied()).collect();
    let mut report = EvaluationReport {
        runs: Vec::new(),
        summary: Vec::new(),
        per_day: BTreeMap::new(),
        deltas: Vec::new(),
    };
    let mut pooled: BTreeMap<PredictionMethod, (f64, usize)> = BTreeMap::new();
    let mut daily: BTreeMap<(NaiveDate, PredictionMethod), (f64, usize)> = BTreeMap::new();
    for run in runs {
        let mut p = Vec::new();
        let mut m = Vec::new();
        for (t, y) in run.timestamps.iter().zip(&run.predicted) {
            if let Some(v) = lookup.get(t) {
                p.push(*y);
                m.push(*v);
                let e = daily.entry((t.date(), run.method)).or_default();
                e.0 += (y - v).powi(2);
                e.1 += 1;
            }
        }
        let met = metrics(&p, &m).map_err(|_| {
            Error::InsufficientData(format!("run at {} has no overlap with measurements", format_timestamp(&run.origin)))
        })?;
        let e = pooled.entry(run.method).or_default();
        e.0 += met.rmse.powi(2) * met.n as f64;
        e.1 += met.n;
        report.runs.push(RunMetrics {
            origin: run.origin,
            method: run.method,
            metrics: met,
        });
    }
    if report.runs.is_empty() {
        return Err(Error::InsufficientData("no prediction runs".into()));
    }
    for method in PredictionMethod::ALL {
        let rs: Vec<&RunMetrics> = report.runs.iter().filter(|r| r.method == method).collect();
        if rs.is_empty() {
            continue;
        }
        let (sq, n) = pooled[&method];
        report.summary.push(MethodSummary {
            method,
            runs: rs.len(),
            mean_rmse: rs.iter().map(|r| r.metrics.rmse).sum::<f64>() / rs.len() as f64,
            mean_mae: rs.iter().map(|r| r.metrics.mae).sum::<f64>() / rs.len() as f64,
            pooled_rmse: (sq / n as f64).sqrt(),
        });
    }
    for ((day, method), (sq, n)) in daily {
        report.per_day.entry(day).or_default().insert(method, (sq / n as f64).sqrt());
    }
    let conv: BTreeMap<NaiveDateTime, f64> = report
        .runs
        .iter()
        .filter(|r| r.method == PredictionMethod::Conventional)
        .map(|r| (r.origin, r.metrics.rmse))
        .collect();
    for r in &report.runs {
        if r.method == PredictionMethod::Conventional {
            continue;
        }
        if let Some(c) = conv.get(&r.origin) {
            report.deltas.push(Delta {
                origin: r.origin,
                method: r.method,
                rmse_delta: r.metrics.rmse - c,
            });
        }
    }
    Ok(report)
}

/// Long-format prediction export: one row per run step.
pub fn write_predictions_csv<W: std::io::Write>(runs: &[PredictionRun], measured: Option<&OperationalDataset>, out: W) -> Result<()> {
    let lookup: BTreeMap<NaiveDateTime, f64> = measured
        .map(|d| d.timestamps.iter().copied().zip(d.y_za.iter().copied()).collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["origin", "timestamp", "method", "predicted", "measured"]).map_err(csv_err)?;
    for run in runs {
        for (t, y) in run.timestamps.iter().zip(&run.predicted) {
            w.write_record([
                format_timestamp(&run.origin),
                format_timestamp(t),
                run.method.name().to_string(),
                format!("{y}"),
                lookup.get(t).map_or(String::new(), |v| format!("{v}")),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the long-format export back into runs, in order of appearance.
pub fn read_predictions_csv(text: &str) -> Result<Vec<PredictionRun>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            location: "predictions header".into(),
            message: format!("missing column `{name}`"),
        })
    };
    let (ci_o, ci_t, ci_m, ci_p) = (col("origin")?, col("timestamp")?, col("method")?, col("predicted")?);
    let mut runs: Vec<PredictionRun> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |message: String| Error::Parse {
            location: format!("predictions row {}", line + 2),
            message,
        };
        let origin = parse_timestamp(&rec[ci_o]).map_err(bad)?;
        let t = parse_timestamp(&rec[ci_t]).map_err(bad)?;
        let method = PredictionMethod::parse(&rec[ci_m]).ok_or_else(|| bad(format!("unknown method `{}`", &rec[ci_m])))?;
        let y: f64 = rec[ci_p].parse().map_err(|e| bad(format!("{e}")))?;
        match runs.last_mut() {
            Some(r) if r.origin == origin && r.method == method => {
                if r.timestamps.len() == 1 {
                    r.step_seconds = (t - r.timestamps[0]).num_seconds() as f64;
                }
                r.timestamps.push(t);
                r.predicted.push(y);
            }
            _ => runs.push(PredictionRun {
                origin,
                method,
                step_seconds: 0.0,
                timestamps: vec![t],
                predicted: vec![y],
                fingerprints: BTreeMap::new(),
            }),
        }
    }
    Ok(runs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: "prediction csv".into(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_states;
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TS: f64 = 900.0;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 10, 4).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn future(n: usize, seed: u64) -> FutureInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FutureInputs {
            timestamps: (0..n).map(|k| t0() + Duration::minutes(15 * k as i64)).collect(),
            w: (0..n)
                .map(|k| [12.0 + 6.0 * (k as f64 / 96.0 * 6.283).sin(), (0.4 * (k as f64 / 96.0 * 6.283).sin()).max(0.0)])
                .collect(),
            u: (0..n).map(|_| [rng.random_range(0.0..1.0), 0.0]).collect(),
        }
    }

    #[test]
    fn zero_forecast_matches_conventional() {
        let th = ThetaParams::TRUE;
        let f = future(96, 1);
        let x0 = Vector::<2>::new(20.0, 21.0);
        let conv = predict_conventional(&th, TS, &x0, &f, 96).unwrap();
        for (m, kind) in [(PredictionMethod::HybridId, DisturbanceKind::Id), (PredictionMethod::HybridOd, DisturbanceKind::Od)] {
            let h = predict_hybrid(&th, TS, &x0, &f, &DisturbanceForecast::zeros(kind, 96), m, 96).unwrap();
            assert_eq!(h.predicted, conv.predicted);
        }
    }

    #[test]
    fn kind_mismatch_and_short_forecast_are_rejected() {
        let th = ThetaParams::TRUE;
        let f = future(96, 1);
        let x0 = Vector::<2>::new(20.0, 20.0);
        let id = DisturbanceForecast::zeros(DisturbanceKind::Id, 96);
        assert!(matches!(
            predict_hybrid(&th, TS, &x0, &f, &id, PredictionMethod::HybridOd, 96),
            Err(Error::KindMismatch(_))
        ));
        let short = DisturbanceForecast::zeros(DisturbanceKind::Id, 10);
        assert!(predict_hybrid(&th, TS, &x0, &f, &short, PredictionMethod::HybridId, 96).is_err());
        assert!(predict_conventional(&th, TS, &x0, &f, 97).is_err());
    }

    #[test]
    fn id_forecast_matches_simulation_with_gains() {
        let th = ThetaParams::TRUE;
        let f = future(96, 2);
        let g: Vec<f64> = (0..96).map(|k| if (32..72).contains(&k) { 1.5 } else { 0.2 }).collect();
        let x0 = Vector::<2>::new(20.0, 21.0);
        let model = model_for(&th, TS).unwrap();
        let truth = simulate(&model, &x0, &f.w, &f.u, &g).unwrap();
        let fc = DisturbanceForecast {
            kind: DisturbanceKind::Id,
            values: g,
        };
        let h = predict_hybrid(&th, TS, &x0, &f, &fc, PredictionMethod::HybridId, 96).unwrap();
        assert_eq!(h.predicted, truth);
    }

    #[test]
    fn hourly_forecast_is_held() {
        let f = DisturbanceForecast::from_hourly(DisturbanceKind::Id, &[1.0, 2.0], 4);
        assert_eq!(f.values, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn rtf_roundtrip_heating_then_cooling() {
        let th = ThetaParams::TRUE;
        let n = 288;
        let mut f = future(n, 3);
        for k in 0..n {
            f.u[k] = if k < n / 2 { [f.u[k][0], 0.0] } else { [0.0, f.u[k][0]] };
        }
        let model = model_for(&th, TS).unwrap();
        let x0 = Vector::<2>::new(19.0, 20.5);
        let y = simulate(&model, &x0, &f.w, &f.u, &vec![0.0; n]).unwrap();
        let req = required_rtf(&th, TS, &y, &f.w, &x0, None).unwrap();
        for k in 0..n - 1 {
            assert!((req.u_h[k] - f.u[k][0]).abs() < 1e-6, "uh at {k}");
            assert!((req.u_c[k] - f.u[k][1]).abs() < 1e-6, "uc at {k}");
        }
    }

    #[test]
    fn equilibrium_needs_no_conditioning() {
        let th = ThetaParams::TRUE;
        let n = 50;
        let y = vec![15.0; n];
        let w = vec![[15.0, 0.0]; n];
        let req = required_rtf(&th, TS, &y, &w, &Vector::<2>::new(15.0, 15.0), None).unwrap();
        assert!(req.u_h.iter().chain(&req.u_c).all(|u| u.abs() < 1e-12));
        assert!(!req.over_capacity.iter().any(|b| *b));
    }

    #[test]
    fn capacity_is_flagged() {
        let th = ThetaParams::TRUE;
        let n = 10;
        let y: Vec<f64> = (0..n).map(|k| 15.0 + 5.0 * k as f64).collect();
        let w = vec![[15.0, 0.0]; n];
        let req = required_rtf(&th, TS, &y, &w, &Vector::<2>::new(15.0, 15.0), None).unwrap();
        assert!(req.over_capacity.iter().any(|b| *b));
    }

    #[test]
    fn metrics_fixtures() {
        let a: Vec<f64> = (0..48).map(|k| k as f64 * 0.1).collect();
        assert_eq!(metrics(&a, &a).unwrap().rmse, 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        let m = metrics(&a, &b).unwrap();
        assert!((m.rmse - 1.0).abs() < 1e-12);
        assert!((m.mae - 1.0).abs() < 1e-12);
        // hand-computed: errors alternate ±0.5 and 2.0 on every 4th step
        let c: Vec<f64> = (0..48).map(|k| a[k] + if k % 4 == 0 { 2.0 } else if k % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let expect = ((12.0 * 4.0 + 36.0 * 0.25) / 48.0f64).sqrt();
        assert!((metrics(&c, &a).unwrap().rmse - expect).abs() < 1e-12);
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn evaluation_report_deltas_and_days() {
        let th = ThetaParams::TRUE;
        let f = future(192, 4);
        let x0 = Vector::<2>::new(20.0, 20.0);
        let model = model_for(&th, TS).unwrap();
        let g = vec![1.0; 192];
        let states = simulate_states(&model, &x0, &f.w, &f.u, &g).unwrap();
        let data = OperationalDataset {
            timestamps: f.timestamps.clone(),
            t_oa: f.w.iter().map(|w| w[0]).collect(),
            q_sol_win: f.w.iter().map(|w| w[1]).collect(),
            u_h: f.u.iter().map(|u| u[0]).collect(),
            u_c: vec![0.0; 192],
            y_za: states[..192].iter().map(|x| model.output(x)).collect(),
            t_hsp: vec![20.0; 192],
            t_csp: vec![24.0; 192],
            q_g: Some(g.clone()),
        };
        let conv = predict_conventional(&th, TS, &x0, &f, 192).unwrap();
        let fc = DisturbanceForecast {
            kind: DisturbanceKind::Id,
            values: g,
        };
        let hyb = predict_hybrid(&th, TS, &x0, &f, &fc, PredictionMethod::HybridId, 192).unwrap();
        let rep = evaluate(&[conv, hyb], &data).unwrap();
        assert_eq!(rep.summary_for(PredictionMethod::HybridId).unwrap().mean_rmse, 0.0);
        assert!(rep.summary_for(PredictionMethod::Conventional).unwrap().mean_rmse > 0.1);
        assert!(rep.mean_delta(PredictionMethod::HybridId).unwrap() < -0.1);
        assert_eq!(rep.per_day.len(), 2);
        let mut buf = Vec::new();
        rep.write_per_day_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("date,rmse_conventional,rmse_hybrid-ID"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn prediction_csv_roundtrip() {
        let th = ThetaParams::TRUE;
        let f = future(8, 7);
        let x0 = Vector::<2>::new(20.0, 21.0);
        let a = predict_conventional(&th, TS, &x0, &f, 8).unwrap();
        let fc = DisturbanceForecast::zeros(DisturbanceKind::Od, 8);
        let b = predict_hybrid(&th, TS, &x0, &f, &fc, PredictionMethod::HybridOd, 8).unwrap();
        let mut buf = Vec::new();
        write_predictions_csv(&[a.clone(), b.clone()], None, &mut buf).unwrap();
        let back = read_predictions_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn od_warm_start_continues_open_loop() {
        let th = ThetaParams::TRUE;
        let f = future(20, 5);
        let model = model_for(&th, TS).unwrap();
        let x0 = Vector::<2>::new(18.0, 18.0);
        let states = simulate_states(&model, &x0, &f.w, &f.u, &[0.0; 20]).unwrap();
        let data = OperationalDataset {
            timestamps: f.timestamps.clone(),
            t_oa: f.w.iter().map(|w| w[0]).collect(),
            q_sol_win: f.w.iter().map(|w| w[1]).collect(),
            u_h: f.u.iter().map(|u| u[0]).collect(),
            u_c: vec![0.0; 20],
            y_za: (0..20).map(|k| if k == 0 { 18.0 } else { 99.0 }).collect(),
            t_hsp: vec![20.0; 20],
            t_csp: vec![24.0; 20],
            q_g: None,
        };
        let noise = NoiseConfig::default_for(TS);
        let x = warm_start(PredictionMethod::HybridOd, &th, &noise, &data).unwrap();
        assert!((x - states[20]).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip_for_random_theta(
            c_w in 0.5f64..20.0, c_za in 0.2f64..5.0, r_zw in 0.3f64..10.0, r_zo in 1.0f64..20.0,
            f in 0.05f64..0.9, a_win in 0.5f64..10.0, q_h in 1.0f64..15.0, q_c in -15.0f64..-1.0, seed in 0u64..1000,
        ) {
            let th = ThetaParams { c_w, c_za, r_zw, r_zo, f, a_win, q_h, q_c };
            let n = 96;
            let mut fi = future(n, seed);
            for k in 0..n {
                if (k / 12) % 2 == 1 {
                    fi.u[k] = [0.0, fi.u[k][0]];
                }
            }
            let model = model_for(&th, TS).unwrap();
            let x0 = Vector::<2>::new(20.0, 22.0);
            let y = simulate(&model, &x0, &fi.w, &fi.u, &vec![0.0; n]).unwrap();
            let req = required_rtf(&th, TS, &y, &fi.w, &x0, None).unwrap();
            for k in 0..n - 1 {
                prop_assert!((req.u_h[k] - fi.u[k][0]).abs() < 1e-6);
                prop_assert!((req.u_c[k] - fi.u[k][1]).abs() < 1e-6);
            }
        }

        #[test]
        fn predictions_are_linear_in_the_forecast(a in -3.0f64..3.0, b in -3.0f64..3.0, od in proptest::bool::ANY) {
            let th = ThetaParams::TRUE;
            let fi = future(48, 6);
            let x0 = Vector::<2>::new(20.0, 21.0);
            let (m, kind) = if od { (PredictionMethod::HybridOd, DisturbanceKind::Od) } else { (PredictionMethod::HybridId, DisturbanceKind::Id) };
            let d1: Vec<f64> = (0..48).map(|k| (k as f64 * 0.2).sin()).collect();
            let d2: Vec<f64> = (0..48).map(|k| (k as f64 * 0.05).cos()).collect();
            let run = |d: Vec<f64>| predict_hybrid(&th, TS, &x0, &fi, &DisturbanceForecast { kind, values: d }, m, 48).unwrap().predicted;
            let base = run(vec![0.0; 48]);
            let y1 = run(d1.clone());
            let y2 = run(d2.clone());
            let y12 = run(d1.iter().zip(&d2).map(|(p, q)| a * p + b * q).collect());
            for k in 0..48 {
                let lin = base[k] + a * (y1[k] - base[k]) + b * (y2[k] - base[k]);
                prop_assert!((y12[k] - lin).abs() < 1e-9);
            }
        }
    }
}
