//! End-to-end hybrid evaluation: estimate the disturbance trace, train a
//! forecaster on one period, and compare conventional and hybrid day-ahead
//! predictions over the following period.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use greybox_nnet::{train, Activation, Arch, History, NetParams, NetSpec, Normalizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_scenario, OperationalDataset, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimation::{estimate_id_trace, estimate_od_trace, DisturbanceKind, DisturbanceTrace, NoiseConfig, OdParams};
use crate::features::{
    build_windows, case_geometry, lookup_case, resample_hourly, resample_trace_hourly, CalendarEncoding, FeatureCase, Family,
    SignalTable, HOURS_PER_DAY,
};
use crate::hybrid::{
    evaluate, forecast_disturbance, predict_conventional, predict_hybrid, required_rtf, warm_start, DisturbanceForecast,
    EvaluationReport, FutureInputs, PredictionMethod, PredictionRun,
};
use crate::io::format_timestamp;
use crate::model::ThetaParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetChoice {
    pub arch: Arch,
    pub case_id: String,
    pub n_layer: usize,
    pub n_z: usize,
    pub activation: Activation,
    pub n_channel: usize,
    pub n_filter: usize,
    pub n_pool: usize,
}

impl Default for NetChoice {
    fn default() -> Self {
        NetChoice {
            arch: Arch::Lstm,
            case_id: "case01".into(),
            n_layer: 1,
            n_z: 20,
            activation: Activation::Relu,
            n_channel: 8,
            n_filter: 3,
            n_pool: 2,
        }
    }
}

impl NetChoice {
    pub fn case(&self) -> Result<FeatureCase> {
        lookup_case(Family::of(self.arch), &self.case_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown {} case `{}`", self.arch.name(), self.case_id)))
    }

    pub fn spec(&self, geometry: (usize, usize, usize)) -> NetSpec {
        let (n_psi, n_k_psi, n_k_xi) = geometry;
        let mut spec = NetSpec::new(self.arch, self.n_layer, self.n_z, self.activation).with_io(n_psi, n_k_psi, n_k_xi);
        if self.arch == Arch::Cnn {
            spec = spec.with_conv(self.n_channel, self.n_filter, self.n_pool);
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridExperimentConfig {
    pub climate: String,
    pub start: NaiveDate,
    pub train_days: usize,
    pub test_days: usize,
    /// Trailing days of the training period held out for early stopping.
    pub validation_days: usize,
    pub kind: DisturbanceKind,
    pub theta: ThetaParams,
    pub od: OdParams,
    pub net: NetChoice,
    pub train: TrainConfig,
    pub horizon_hours: usize,
    /// Filter warm-up before each prediction origin, in model steps.
    pub warmup_steps: usize,
    pub encoding: CalendarEncoding,
}

impl HybridExperimentConfig {
    pub fn month_pair(climate: &str, start: NaiveDate) -> Self {
        HybridExperimentConfig {
            climate: climate.into(),
            start,
            train_days: 30,
            test_days: 30,
            validation_days: 7,
            kind: DisturbanceKind::Id,
            theta: ThetaParams::TRUE,
            od: OdParams { rho1: 0.99, rho2: 0.5 },
            net: NetChoice::default(),
            train: TrainConfig {
                max_epochs: 300,
                patience: 40,
                ..TrainConfig::default()
            },
            horizon_hours: HOURS_PER_DAY,
            warmup_steps: 96,
            encoding: CalendarEncoding::Raw,
        }
    }
}

/// Heating-rate comparison over the test period, kW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingRateErrors {
    pub conventional_rmse: f64,
    pub hybrid_rmse: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridExperimentResult {
    pub report: EvaluationReport,
    pub heating: HeatingRateErrors,
    pub history: History,
    pub spec: NetSpec,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub runs: Vec<PredictionRun>,
}

impl HybridExperimentResult {
    pub fn mean_rmse(&self, method: PredictionMethod) -> f64 {
        self.report.summary_for(method).map_or(f64::NAN, |s| s.mean_rmse)
    }
}

/// Trained disturbance forecaster plus what is needed to apply it.
#[derive(Clone, Debug)]
pub struct Forecaster {
    pub spec: NetSpec,
    pub params: NetParams,
    pub normalizer: Normalizer,
    pub case: FeatureCase,
    pub history: History,
    pub train_windows: usize,
    pub validation_windows: usize,
}

/// Fits the forecaster on hourly rows before `train_end`, with the trailing
/// `validation_days` held out.
pub fn fit_forecaster(
    table: &SignalTable,
    net: &NetChoice,
    cfg: &TrainConfig,
    train_end: NaiveDateTime,
    validation_days: usize,
    horizon: usize,
) -> Result<Forecaster> {
    let case = net.case()?;
    let end_row = table.timestamps.iter().position(|t| *t >= train_end).unwrap_or(table.len());
    let normalizer = table.fit_normalizer(0..end_row)?;
    let norm = table.normalized(&normalizer)?;
    let windows = build_windows(&norm, &case, horizon)?;
    let (train_set, _) = windows.split_at(train_end);
    let (fit, val) = train_set.split_at(train_end - Duration::days(validation_days as i64));
    if fit.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} training and {} validation windows",
            fit.len(),
            val.len()
        )));
    }
    let spec = net.spec(case_geometry(&case, table, horizon));
    spec.validate()?;
    let (params, history) = train(&spec, &fit.dataset(), &val.dataset(), cfg)?;
    Ok(Forecaster {
        spec,
        params,
        normalizer,
        case,
        history,
        train_windows: fit.len(),
        validation_windows: val.len(),
    })
}

impl Forecaster {
    /// Hourly forecast starting at `origin`, in physical units.
    pub fn forecast(&self, table: &SignalTable, origin: NaiveDateTime) -> Result<Vec<f64>> {
        let row = table
            .timestamps
            .iter()
            .position(|t| *t == origin)
            .ok_or_else(|| Error::InvalidArgument(format!("origin {origin} not in hourly table")))?;
        let norm = table.normalized(&self.normalizer)?;
        forecast_disturbance(&self.spec, &self.params, &self.normalizer, &self.case, &norm, row)
    }
}

pub fn disturbance_trace(
    kind: DisturbanceKind,
    theta: &ThetaParams,
    od: &OdParams,
    data: &OperationalDataset,
) -> Result<DisturbanceTrace> {
    match kind {
        DisturbanceKind::Id => estimate_id_trace(theta, &NoiseConfig::default_for(data.step_seconds()?), data),
        DisturbanceKind::Od => estimate_od_trace(theta, od, data),
    }
}

/// Required heating at one step, kW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadRow {
    pub origin: NaiveDateTime,
    pub timestamp: NaiveDateTime,
    pub actual: f64,
    pub conventional: f64,
    pub hybrid: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestPeriodOutput {
    pub runs: Vec<PredictionRun>,
    pub loads: Vec<LoadRow>,
}

impl TestPeriodOutput {
    pub fn heating_errors(&self) -> HeatingRateErrors {
        let n = self.loads.len().max(1) as f64;
        let rmse = |f: &dyn Fn(&LoadRow) -> f64| (self.loads.iter().map(|r| (f(r) - r.actual).powi(2)).sum::<f64>() / n).sqrt();
        HeatingRateErrors {
            conventional_rmse: rmse(&|r| r.conventional),
            hybrid_rmse: rmse(&|r| r.hybrid.unwrap_or(f64::NAN)),
            steps: self.loads.len(),
        }
    }

    pub fn write_loads_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse {
            location: "load csv".into(),
            message: e.to_string(),
        };
        w.write_record(["origin", "timestamp", "actual_kw", "conventional_kw", "hybrid_kw"]).map_err(err)?;
        for r in &self.loads {
            w.write_record([
                format_timestamp(&r.origin),
                format_timestamp(&r.timestamp),
                format!("{}", r.actual),
                format!("{}", r.conventional),
                r.hybrid.map_or(String::new(), |v| format!("{v}")),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A trained forecaster applied to an hourly table.
#[derive(Clone, Copy)]
pub struct HybridSource<'a> {
    pub forecaster: &'a Forecaster,
    pub table: &'a SignalTable,
    pub kind: DisturbanceKind,
}

/// Conventional and, when a forecaster is given, hybrid predictions from each
/// origin, plus the heating each predictor needs to follow the measured
/// trajectory.
pub fn predict_test_period(
    data: &OperationalDataset,
    theta: &ThetaParams,
    hybrid: Option<HybridSource<'_>>,
    origins: &[NaiveDateTime],
    horizon_hours: usize,
    warmup_steps: usize,
) -> Result<TestPeriodOutput> {
    let ts = data.step_seconds()?;
    let per_hour = (3600.0 / ts).round() as usize;
    let horizon = horizon_hours * per_hour;
    let noise = NoiseConfig::default_for(ts);
    let mut out = TestPeriodOutput {
        runs: Vec::new(),
        loads: Vec::new(),
    };
    for &origin in origins {
        let k = data
            .index_of(origin)
            .ok_or_else(|| Error::InvalidArgument(format!("origin {origin} not in dataset")))?;
        if k < warmup_steps || k + horizon + 1 > data.len() {
            return Err(Error::InsufficientData(format!("origin {origin} lacks warm-up or horizon data")));
        }
        let trailing = data.slice(k - warmup_steps..k);
        let future = FutureInputs::from_dataset(data, k..k + horizon)?;
        let x_conv = warm_start(PredictionMethod::Conventional, theta, &noise, &trailing)?;
        out.runs.push(predict_conventional(theta, ts, &x_conv, &future, horizon)?);

        // heating needed to follow the measured trajectory
        let y = &data.y_za[k..=k + horizon];
        let w: Vec<[f64; 2]> = (k..=k + horizon).map(|i| [data.t_oa[i], data.q_sol_win[i]]).collect();
        let conv = required_rtf(theta, ts, y, &w, &x_conv, None)?;
        let hyb = match hybrid {
            None => None,
            Some(src) => {
                let method = match src.kind {
                    DisturbanceKind::Id => PredictionMethod::HybridId,
                    DisturbanceKind::Od => PredictionMethod::HybridOd,
                };
                let history = match src.kind {
                    DisturbanceKind::Id => trailing.clone(),
                    DisturbanceKind::Od => data.slice(0..k),
                };
                let x_hyb = warm_start(method, theta, &noise, &history)?;
                let hourly = src.forecaster.forecast(src.table, origin)?;
                let fc = DisturbanceForecast::from_hourly(src.kind, &hourly[..horizon_hours], per_hour);
                out.runs.push(predict_hybrid(theta, ts, &x_hyb, &future, &fc, method, horizon)?);
                Some(match src.kind {
                    DisturbanceKind::Id => required_rtf(theta, ts, y, &w, &x_hyb, Some(&fc.values))?,
                    DisturbanceKind::Od => {
                        let y_adj: Vec<f64> = y.iter().enumerate().map(|(i, v)| v - fc.values[i.min(horizon - 1)]).collect();
                        required_rtf(theta, ts, &y_adj, &w, &x_hyb, None)?
                    }
                })
            }
        };
        for i in 0..horizon {
            out.loads.push(LoadRow {
                origin,
                timestamp: data.timestamps[k + i],
                actual: theta.q_h * data.u_h[k + i],
                conventional: theta.q_h * conv.u_h[i],
                hybrid: hyb.as_ref().map(|h| theta.q_h * h.u_h[i]),
            });
        }
    }
    Ok(out)
}

/// Generates the two periods, trains the forecaster on the first and scores
/// day-ahead predictions over the second.
pub fn run_hybrid_experiment(cfg: &HybridExperimentConfig, seed: u64) -> Result<HybridExperimentResult> {
    let days = cfg.train_days + cfg.test_days + 1;
    let scenario = ScenarioConfig {
        theta: cfg.theta,
        ..ScenarioConfig::operation(&cfg.climate, cfg.start, days)
    };
    let data = generate_scenario(&scenario, seed)?.dataset.without_gains();
    let trace = disturbance_trace(cfg.kind, &cfg.theta, &cfg.od, &data)?;
    let hourly = resample_hourly(&data)?;
    let htrace = resample_trace_hourly(&trace)?;
    let table = SignalTable::new(&hourly, &htrace, cfg.encoding)?;
    let t0 = cfg.start.and_hms_opt(0, 0, 0).expect("midnight");
    let train_end = t0 + Duration::days(cfg.train_days as i64);
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let forecaster = fit_forecaster(&table, &cfg.net, &train_cfg, train_end, cfg.validation_days, cfg.horizon_hours)?;
    let origins: Vec<NaiveDateTime> = (0..cfg.test_days).map(|d| train_end + Duration::days(d as i64)).collect();
    let source = HybridSource {
        forecaster: &forecaster,
        table: &table,
        kind: cfg.kind,
    };
    let out = predict_test_period(&data, &cfg.theta, Some(source), &origins, cfg.horizon_hours, cfg.warmup_steps)?;
    let report = evaluate(&out.runs, &data)?;
    let heating = out.heating_errors();
    let runs = out.runs;
    Ok(HybridExperimentResult {
        report,
        heating,
        history: forecaster.history,
        spec: forecaster.spec,
        train_windows: forecaster.train_windows,
        validation_windows: forecaster.validation_windows,
        runs,
    })
}
