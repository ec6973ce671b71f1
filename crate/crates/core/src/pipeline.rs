//! File-based pipeline behind the command-line front end. Every command
//! reads its inputs from the output directory, checks their provenance
//! sidecars and writes new artifacts atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use greybox_nnet::{ModelFile, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_scenario, OperationalDataset, ScenarioConfig, WeatherFormat};
use crate::datagen::scenario::WeatherSource;
use crate::error::{Error, Result};
use crate::estimation::{estimate_id_trace, estimate_od_trace, DisturbanceKind, DisturbanceTrace, NoiseConfig, OdParams};
use crate::experiment::{fit_forecaster, predict_test_period, Forecaster, HybridSource, NetChoice, TestPeriodOutput};
use crate::features::{lookup_case, resample_hourly, resample_trace_hourly, CalendarEncoding, Family, SignalTable, HOURS_PER_DAY};
use crate::hybrid::{evaluate as evaluate_runs, read_predictions_csv, write_predictions_csv, EvaluationReport, PredictionMethod};
use crate::io::{file_fingerprint, meta_path, read_json, sha256_hex, verify_artifact, write_artifact, ArtifactMeta};
use crate::model::{bode_magnitude, build_continuous, step_response, Channel, ThetaParams};
use crate::selection::{fit_effect_regression, fit_lognormal_many, rank_cases, DesignObservation, RankReport, SamplerConfig};
use crate::svg::{line_plot, Axes, Scale, Series};
use crate::sysid::{comparison_table, identify as run_identification, IdentProblem, IdentResult, Method, ParamBounds};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Weather file (EPW or CSV by extension) replacing the synthetic climate.
    pub weather: Option<PathBuf>,
    /// Identification dataset used instead of the generated one.
    pub dataset: Option<PathBuf>,
    /// Operation dataset used instead of the generated one.
    pub operation_dataset: Option<PathBuf>,
    /// Model directory; defaults to `<output_dir>/models`.
    pub model_store: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            weather: None,
            dataset: None,
            operation_dataset: None,
            model_store: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperationSettings {
    pub climate: String,
    pub start: NaiveDate,
    pub train_days: usize,
    pub test_days: usize,
    pub validation_days: usize,
}

impl Default for OperationSettings {
    fn default() -> Self {
        OperationSettings {
            climate: "berkeley".into(),
            start: NaiveDate::from_ymd_opt(2021, 10, 4).expect("valid date"),
            train_days: 30,
            test_days: 30,
            validation_days: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifySettings {
    pub restarts: usize,
    pub init_steps: usize,
    pub bounds: ParamBounds,
    pub gains_known: bool,
}

impl Default for IdentifySettings {
    fn default() -> Self {
        IdentifySettings {
            restarts: 50,
            init_steps: 96,
            bounds: ParamBounds::default(),
            gains_known: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaSource {
    /// Parameters identified with the method matching the disturbance kind.
    #[default]
    Identified,
    /// The parameters the scenario was generated with.
    True,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    pub candidates: Vec<NetChoice>,
    pub kinds: Vec<DisturbanceKind>,
    pub sampler: SamplerConfig,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        let pick = |arch: &str, case: &str| NetChoice {
            arch: greybox_nnet::Arch::parse(arch).expect("known arch"),
            case_id: case.into(),
            ..NetChoice::default()
        };
        SelectionSettings {
            candidates: vec![
                pick("lstm", "case01"),
                pick("lstm", "case03"),
                pick("rnn", "case01"),
                pick("mlp", "case01"),
                pick("mlp", "case02"),
            ],
            kinds: vec![DisturbanceKind::Id],
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeSettings {
    pub step_horizon_h: f64,
    pub step_dt_s: f64,
    /// Log10 frequency range in Hz and number of points.
    pub bode_log10_hz: (f64, f64),
    pub bode_points: usize,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            step_horizon_h: 72.0,
            step_dt_s: 900.0,
            bode_log10_hz: (-7.0, -3.0),
            bode_points: 81,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub format_version: u32,
    pub name: String,
    pub seed: u64,
    pub paths: Paths,
    /// Identification scenario.
    pub scenario: ScenarioConfig,
    pub operation: OperationSettings,
    pub identify: IdentifySettings,
    pub theta_from: ThetaSource,
    /// OD filter parameters used when `theta_from` is `true`.
    pub od_params: OdParams,
    pub disturbance: DisturbanceKind,
    pub net: NetChoice,
    pub train: TrainConfig,
    pub horizon_hours: usize,
    pub warmup_steps: usize,
    pub encoding: CalendarEncoding,
    pub selection: SelectionSettings,
    pub analyze: AnalyzeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            name: "default".into(),
            seed: 1,
            paths: Paths::default(),
            scenario: ScenarioConfig::two_week_identification(),
            operation: OperationSettings::default(),
            identify: IdentifySettings::default(),
            theta_from: ThetaSource::Identified,
            od_params: OdParams { rho1: 0.99, rho2: 0.5 },
            disturbance: DisturbanceKind::Id,
            net: NetChoice::default(),
            train: TrainConfig {
                max_epochs: 300,
                patience: 40,
                ..TrainConfig::default()
            },
            horizon_hours: HOURS_PER_DAY,
            warmup_steps: 96,
            encoding: CalendarEncoding::Raw,
            selection: SelectionSettings::default(),
            analyze: AnalyzeSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing {
                what: "config",
                path: path.display().to_string(),
            },
            _ => e.into(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Version {
                what: "run config".into(),
                found: self.format_version,
                expected: CONFIG_FORMAT_VERSION,
            });
        }
        self.scenario.theta.validate()?;
        self.identify.bounds.validate()?;
        self.train.validate()?;
        self.net.case()?;
        for c in &self.selection.candidates {
            c.case()?;
        }
        if self.horizon_hours == 0 {
            return Err(Error::InvalidArgument("horizon_hours must be positive".into()));
        }
        if self.operation.validation_days >= self.operation.train_days || self.operation.test_days == 0 {
            return Err(Error::InvalidArgument(
                "operation needs validation_days < train_days and test_days > 0".into(),
            ));
        }
        Ok(())
    }

    /// Hash of the canonical JSON form, recorded in every artifact sidecar.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Which predictors `predict` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictSelection {
    Conventional,
    Hybrid,
    All,
}

impl PredictSelection {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" | "conv" => Some(Self::Conventional),
            "hybrid" => Some(Self::Hybrid),
            "all" => Some(Self::All),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub ranking: RankReport,
    pub effects: Vec<crate::selection::CoefficientSummary>,
    pub dropped_regressors: Vec<String>,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    out: PathBuf,
    hash: String,
}

fn method_for(kind: DisturbanceKind) -> Method {
    match kind {
        DisturbanceKind::Id => Method::Id,
        DisturbanceKind::Od => Method::Od,
    }
}

fn kind_tag(kind: DisturbanceKind) -> &'static str {
    match kind {
        DisturbanceKind::Id => "id",
        DisturbanceKind::Od => "od",
    }
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.paths.output_dir.clone();
        let hash = cfg.hash();
        Ok(Pipeline { cfg, out, hash })
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn model_dir(&self) -> PathBuf {
        self.cfg.paths.model_store.clone().unwrap_or_else(|| self.out.join("models"))
    }

    pub fn model_path(&self, kind: DisturbanceKind) -> PathBuf {
        self.model_dir().join(format!("model_{}.json", kind_tag(kind)))
    }

    fn write(&self, path: &Path, bytes: &[u8], kind: &str, upstream: &[&Path]) -> Result<ArtifactMeta> {
        let mut up = BTreeMap::new();
        for p in upstream {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            up.insert(name, file_fingerprint(p)?);
        }
        write_artifact(path, bytes, kind, &self.hash, up)
    }

    /// Checks an artifact produced by an earlier command: it exists, matches
    /// its sidecar, and its upstream files are unchanged.
    fn check_input(&self, path: &Path, what: &'static str) -> Result<()> {
        if !path.exists() {
            return Err(Error::Missing {
                what,
                path: path.display().to_string(),
            });
        }
        if !meta_path(path).exists() {
            // external input without provenance
            return Ok(());
        }
        let meta = verify_artifact(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for (name, fp) in &meta.upstream {
            let candidates = [dir.join(name), self.out.join(name), self.model_dir().join(name)];
            if let Some(up) = candidates.iter().find(|p| p.exists()) {
                if &file_fingerprint(up)? != fp {
                    return Err(Error::Lineage(format!(
                        "{} was produced from a different {}; re-run the upstream command",
                        path.display(),
                        name
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_config(&self, path: &Path) -> Result<()> {
        let meta = verify_artifact(path)?;
        if meta.config_hash != self.hash {
            return Err(Error::Lineage(format!(
                "{} was produced under a different configuration",
                path.display()
            )));
        }
        Ok(())
    }

    fn with_weather(&self, mut sc: ScenarioConfig) -> ScenarioConfig {
        if let Some(w) = &self.cfg.paths.weather {
            let is_epw = w.extension().is_some_and(|e| e.eq_ignore_ascii_case("epw"));
            sc.weather_file = Some(WeatherSource {
                path: w.clone(),
                format: if is_epw { WeatherFormat::Epw } else { WeatherFormat::Csv },
            });
        }
        sc
    }

    pub fn operation_scenario(&self) -> ScenarioConfig {
        let op = &self.cfg.operation;
        let sc = ScenarioConfig {
            theta: self.cfg.scenario.theta,
            ts_seconds: self.cfg.scenario.ts_seconds,
            ..ScenarioConfig::operation(&op.climate, op.start, op.train_days + op.test_days + 1)
        };
        self.with_weather(sc)
    }

    fn dataset_path(&self) -> PathBuf {
        self.cfg.paths.dataset.clone().unwrap_or_else(|| self.path("dataset.csv"))
    }

    fn operation_path(&self) -> PathBuf {
        self.cfg.paths.operation_dataset.clone().unwrap_or_else(|| self.path("operation.csv"))
    }

    fn identify_path(&self, m: Method) -> PathBuf {
        self.path(&format!("identify_{}.json", m.name().to_ascii_lowercase()))
    }

    fn trace_path(&self, kind: DisturbanceKind) -> PathBuf {
        self.path(&format!("trace_{}.csv", kind_tag(kind)))
    }

    /// Identification and operation datasets.
    pub fn generate(&self) -> Result<(OperationalDataset, OperationalDataset)> {
        let sc = self.with_weather(self.cfg.scenario.clone());
        let ident = generate_scenario(&sc, self.cfg.seed)?.dataset;
        let op = generate_scenario(&self.operation_scenario(), self.cfg.seed.wrapping_add(1_000))?.dataset;
        self.write(&self.path("dataset.csv"), ident.to_csv_string()?.as_bytes(), "dataset", &[])?;
        self.write(&self.path("operation.csv"), op.to_csv_string()?.as_bytes(), "dataset", &[])?;
        Ok((ident, op))
    }

    fn read_dataset(&self, path: &Path) -> Result<OperationalDataset> {
        self.check_input(path, "dataset")?;
        OperationalDataset::read_csv(path)
    }

    pub fn identify(&self, method: Method) -> Result<IdentResult> {
        let path = self.dataset_path();
        let data = self.read_dataset(&path)?;
        let problem = IdentProblem {
            restarts: self.cfg.identify.restarts,
            init_steps: self.cfg.identify.init_steps,
            bounds: self.cfg.identify.bounds.clone(),
            gains_known: self.cfg.identify.gains_known,
            ..IdentProblem::new(method)
        };
        let res = run_identification(&problem, &data, self.cfg.seed)?;
        let mut text = serde_json::to_string_pretty(&res)?;
        text.push('\n');
        self.write(&self.identify_path(method), text.as_bytes(), "identification", &[&path])?;
        self.write_comparison()?;
        Ok(res)
    }

    fn write_comparison(&self) -> Result<()> {
        let mut results = Vec::new();
        let mut upstream = Vec::new();
        for m in [Method::Conv, Method::Id, Method::Od] {
            let p = self.identify_path(m);
            if p.exists() {
                results.push(read_json::<IdentResult>(&p)?);
                upstream.push(p);
            }
        }
        let ups: Vec<&Path> = upstream.iter().map(|p| p.as_path()).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(ThetaParams::NAMES.iter().map(|s| s.to_string()));
        header.extend(["extra1", "extra2", "objective"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        let mut row = |name: &str, th: &ThetaParams, extra: [String; 2], obj: String| -> Result<()> {
            let mut r = vec![name.to_string()];
            r.extend(th.to_array().iter().map(|v| format!("{v:.6}")));
            r.extend(extra);
            r.push(obj);
            w.write_record(&r).map_err(csv_err)
        };
        row("TRUE", &self.cfg.scenario.theta, [String::new(), String::new()], String::new())?;
        for r in &results {
            let extra = match (r.noise, r.od) {
                (Some(n), _) => [format!("{:.6e}", n.sigma_x), format!("{:.6e}", n.sigma_zeta)],
                (_, Some(o)) => [format!("{:.6}", o.rho1), format!("{:.6}", o.rho2)],
                _ => [String::new(), String::new()],
            };
            row(r.method.name(), &r.theta, extra, format!("{:.6e}", r.objective))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(&self.path("comparison.csv"), &bytes, "comparison", &ups)?;
        let table = comparison_table(Some(&self.cfg.scenario.theta), &results);
        self.write(&self.path("comparison.txt"), table.as_bytes(), "comparison", &ups)?;
        Ok(())
    }

    /// Parameters for `kind` per `theta_from`, with the file they came from.
    fn params_for(&self, kind: DisturbanceKind) -> Result<(ThetaParams, Option<NoiseConfig>, OdParams, Option<PathBuf>)> {
        match self.cfg.theta_from {
            ThetaSource::True => Ok((self.cfg.scenario.theta, None, self.cfg.od_params, None)),
            ThetaSource::Identified => {
                let p = self.identify_path(method_for(kind));
                if !p.exists() {
                    return Err(Error::Missing {
                        what: "identification result",
                        path: p.display().to_string(),
                    });
                }
                self.check_input(&p, "identification result")?;
                let r: IdentResult = read_json(&p)?;
                Ok((r.theta, r.noise, r.od.unwrap_or(self.cfg.od_params), Some(p)))
            }
        }
    }

    fn compute_trace(&self, kind: DisturbanceKind, data: &OperationalDataset) -> Result<(DisturbanceTrace, Option<PathBuf>)> {
        let (theta, noise, od, src) = self.params_for(kind)?;
        let trace = match kind {
            DisturbanceKind::Id => {
                let noise = noise.unwrap_or(NoiseConfig::default_for(data.step_seconds()?));
                estimate_id_trace(&theta, &noise, data)?
            }
            DisturbanceKind::Od => estimate_od_trace(&theta, &od, data)?,
        };
        Ok((trace, src))
    }

    pub fn estimate(&self) -> Result<DisturbanceTrace> {
        let kind = self.cfg.disturbance;
        let op_path = self.operation_path();
        let data = self.read_dataset(&op_path)?;
        let (trace, src) = self.compute_trace(kind, &data)?;
        let mut ups: Vec<&Path> = vec![&op_path];
        if let Some(p) = &src {
            ups.push(p);
        }
        self.write(&self.trace_path(kind), trace.to_csv_string()?.as_bytes(), "disturbance-trace", &ups)?;
        Ok(trace)
    }

    fn train_end(&self) -> NaiveDateTime {
        let op = &self.cfg.operation;
        op.start.and_hms_opt(0, 0, 0).expect("midnight") + Duration::days(op.train_days as i64)
    }

    fn test_origins(&self) -> Vec<NaiveDateTime> {
        let end = self.train_end();
        (0..self.cfg.operation.test_days).map(|d| end + Duration::days(d as i64)).collect()
    }

    fn load_table(&self, kind: DisturbanceKind) -> Result<(OperationalDataset, SignalTable, PathBuf)> {
        let op_path = self.operation_path();
        let data = self.read_dataset(&op_path)?;
        let tpath = self.trace_path(kind);
        self.check_input(&tpath, "disturbance trace")?;
        let fp = file_fingerprint(&tpath)?;
        let trace = DisturbanceTrace::from_csv_str(&std::fs::read_to_string(&tpath)?, &fp)?;
        if trace.kind != kind {
            return Err(Error::KindMismatch(format!(
                "{} holds a {} trace, configuration asks for {}",
                tpath.display(),
                trace.kind.as_str(),
                kind.as_str()
            )));
        }
        let table = SignalTable::new(&resample_hourly(&data)?, &resample_trace_hourly(&trace)?, self.cfg.encoding)?;
        Ok((data, table, tpath))
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.cfg.seed,
            ..self.cfg.train.clone()
        }
    }

    pub fn train(&self) -> Result<PathBuf> {
        let kind = self.cfg.disturbance;
        let (_, table, tpath) = self.load_table(kind)?;
        let f = fit_forecaster(
            &table,
            &self.cfg.net,
            &self.train_config(),
            self.train_end(),
            self.cfg.operation.validation_days,
            self.cfg.horizon_hours,
        )?;
        let mut file = ModelFile::new(f.spec.clone(), f.params.clone())?;
        file.normalizer = Some(f.normalizer.clone());
        file.history = Some(f.history.clone());
        file.meta.insert("case_id".into(), f.case.id.clone());
        file.meta.insert("kind".into(), kind.as_str().into());
        file.meta.insert("config_hash".into(), self.hash.clone());
        file.meta.insert("trace_fingerprint".into(), file_fingerprint(&tpath)?);
        let path = self.model_path(kind);
        let mut text = file.to_json()?;
        text.push('\n');
        self.write(&path, text.as_bytes(), "model", &[&tpath])?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "train_loss", "validation_loss"]).map_err(csv_err)?;
        for (i, (a, b)) in f.history.train_loss.iter().zip(&f.history.test_loss).enumerate() {
            w.write_record([i.to_string(), format!("{a}"), format!("{b}")]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(&self.path(&format!("history_{}.csv", kind_tag(kind))), &bytes, "training-history", &[&path])?;
        Ok(path)
    }

    fn load_forecaster(&self, kind: DisturbanceKind) -> Result<(Forecaster, PathBuf)> {
        let path = self.model_path(kind);
        self.check_input(&path, "model")?;
        let file = ModelFile::from_json(&std::fs::read_to_string(&path)?)?;
        let case_id = file
            .meta
            .get("case_id")
            .ok_or_else(|| Error::InvalidArgument(format!("{} lacks a case_id", path.display())))?;
        let case = lookup_case(Family::of(file.spec.arch), case_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown case `{case_id}` in {}", path.display())))?;
        if file.meta.get("kind").map(|s| s.as_str()) != Some(kind.as_str()) {
            return Err(Error::KindMismatch(format!("{} was not trained on a {} trace", path.display(), kind.as_str())));
        }
        let normalizer = file
            .normalizer
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("{} lacks its normalizer", path.display())))?;
        Ok((
            Forecaster {
                spec: file.spec,
                params: file.params,
                normalizer,
                case,
                history: file.history.unwrap_or_default(),
                train_windows: 0,
                validation_windows: 0,
            },
            path,
        ))
    }

    pub fn predict(&self, which: PredictSelection) -> Result<TestPeriodOutput> {
        let kind = self.cfg.disturbance;
        let (theta, _, _, src) = self.params_for(kind)?;
        let op_path = self.operation_path();
        let mut ups: Vec<PathBuf> = vec![op_path.clone()];
        ups.extend(src);
        let hybrid = match which {
            PredictSelection::Conventional => None,
            _ => {
                let model = self.model_path(kind);
                if !model.exists() {
                    return Err(Error::Missing {
                        what: "model",
                        path: format!("{} (run `greybox train` first)", model.display()),
                    });
                }
                let (f, mpath) = self.load_forecaster(kind)?;
                let (_, table, tpath) = self.load_table(kind)?;
                ups.push(mpath);
                ups.push(tpath);
                Some((f, table))
            }
        };
        let data = self.read_dataset(&op_path)?;
        let source = hybrid.as_ref().map(|(f, t)| HybridSource {
            forecaster: f,
            table: t,
            kind,
        });
        let mut out = predict_test_period(&data, &theta, source, &self.test_origins(), self.cfg.horizon_hours, self.cfg.warmup_steps)?;
        if which == PredictSelection::Hybrid {
            out.runs.retain(|r| r.method != PredictionMethod::Conventional);
        }
        let ups: Vec<&Path> = ups.iter().map(|p| p.as_path()).collect();
        let mut buf = Vec::new();
        write_predictions_csv(&out.runs, None, &mut buf)?;
        self.write(&self.path("predictions.csv"), &buf, "predictions", &ups)?;
        let mut buf = Vec::new();
        out.write_loads_csv(&mut buf)?;
        self.write(&self.path("loads.csv"), &buf, "required-heating", &ups)?;
        Ok(out)
    }

    pub fn evaluate(&self) -> Result<EvaluationReport> {
        let ppath = self.path("predictions.csv");
        self.check_input(&ppath, "predictions")?;
        self.check_config(&ppath)?;
        let op_path = self.operation_path();
        let data = self.read_dataset(&op_path)?;
        let runs = read_predictions_csv(&std::fs::read_to_string(&ppath)?)?;
        let report = evaluate_runs(&runs, &data)?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        self.write(&self.path("metrics.json"), text.as_bytes(), "metrics", &[&ppath, &op_path])?;
        let mut buf = Vec::new();
        report.write_per_day_csv(&mut buf)?;
        self.write(&self.path("per_day.csv"), &buf, "per-day-rmse", &[&ppath, &op_path])?;
        Ok(report)
    }

    /// Trains every candidate, scores its day-ahead hybrid predictions and
    /// ranks the candidates.
    pub fn select(&self) -> Result<SelectionOutcome> {
        let sel = &self.cfg.selection;
        if sel.candidates.is_empty() || sel.kinds.is_empty() {
            return Err(Error::InvalidArgument("selection needs candidates and kinds".into()));
        }
        let op_path = self.operation_path();
        let data = self.read_dataset(&op_path)?;
        let hourly = resample_hourly(&data)?;
        let mut tables = Vec::new();
        let mut thetas = Vec::new();
        let mut ups = vec![op_path.clone()];
        for &kind in &sel.kinds {
            let (trace, src) = self.compute_trace(kind, &data)?;
            tables.push(SignalTable::new(&hourly, &resample_trace_hourly(&trace)?, self.cfg.encoding)?);
            thetas.push(self.params_for(kind)?.0);
            ups.extend(src);
        }
        let jobs: Vec<(usize, &NetChoice)> = (0..sel.kinds.len())
            .flat_map(|k| sel.candidates.iter().map(move |c| (k, c)))
            .collect();
        let origins = self.test_origins();
        let results: Vec<(String, DesignObservation, Vec<f64>)> = jobs
            .par_iter()
            .map(|(k, cand)| -> Result<(String, DesignObservation, Vec<f64>)> {
                let kind = sel.kinds[*k];
                let f = fit_forecaster(
                    &tables[*k],
                    cand,
                    &self.train_config(),
                    self.train_end(),
                    self.cfg.operation.validation_days,
                    self.cfg.horizon_hours,
                )?;
                let src = HybridSource {
                    forecaster: &f,
                    table: &tables[*k],
                    kind,
                };
                let out = predict_test_period(&data, &thetas[*k], Some(src), &origins, self.cfg.horizon_hours, self.cfg.warmup_steps)?;
                let report = evaluate_runs(&out.runs, &data)?;
                let errs: Vec<f64> = report
                    .runs
                    .iter()
                    .filter(|r| r.method != PredictionMethod::Conventional)
                    .map(|r| r.metrics.rmse)
                    .collect();
                let label = format!("{}-{}-{}", cand.arch.name(), cand.case_id, kind_tag(kind));
                let case = &f.case;
                let obs = DesignObservation {
                    case_id: label.clone(),
                    chi_cnn: cand.arch == greybox_nnet::Arch::Cnn,
                    chi_rnn: cand.arch == greybox_nnet::Arch::Rnn,
                    chi_lstm: cand.arch == greybox_nnet::Arch::Lstm,
                    chi_time: case.has_time(),
                    chi_pattern: case.pattern_days as f64,
                    chi_past_w: case.has_past_w(),
                    chi_future_w: case.has_future_w(),
                    chi_id: kind == DisturbanceKind::Id,
                    upsilon: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
                };
                Ok((label, obs, errs))
            })
            .collect::<Result<Vec<_>>>()?;

        let ups: Vec<&Path> = ups.iter().map(|p| p.as_path()).collect();
        // one regression row per model and test day
        let mut rows = Vec::new();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case", "day", "cnn", "rnn", "lstm", "time", "pattern", "past_w", "future_w", "id", "rmse"])
            .map_err(csv_err)?;
        for (label, obs, errs) in &results {
            for (d, e) in errs.iter().enumerate() {
                let o = DesignObservation {
                    upsilon: *e,
                    ..obs.clone()
                };
                let b = |v: bool| u8::from(v).to_string();
                w.write_record([
                    label.clone(),
                    d.to_string(),
                    b(o.chi_cnn),
                    b(o.chi_rnn),
                    b(o.chi_lstm),
                    b(o.chi_time),
                    format!("{}", o.chi_pattern),
                    b(o.chi_past_w),
                    b(o.chi_future_w),
                    b(o.chi_id),
                    format!("{e}"),
                ])
                .map_err(csv_err)?;
                rows.push(o);
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(&self.path("selection_observations.csv"), &bytes, "selection-observations", &ups)?;

        let sampler = SamplerConfig {
            seed: self.cfg.seed,
            ..sel.sampler
        };
        let (effects, dropped) = match fit_effect_regression(&rows, &sampler) {
            Ok(post) => (post.summary(), post.dropped),
            Err(e @ (Error::Collinear(_) | Error::InsufficientData(_))) => {
                log::warn!("effect regression skipped: {e}");
                (Vec::new(), Vec::new())
            }
            Err(e) => return Err(e),
        };
        let cases: Vec<(String, Vec<f64>)> = results.iter().map(|(l, _, e)| (l.clone(), e.clone())).collect();
        let fits = fit_lognormal_many(&cases, &sampler)?;
        let ranking = rank_cases(&fits, self.cfg.seed)?;

        let obs_path = self.path("selection_observations.csv");
        let mut buf = Vec::new();
        ranking.write_csv(&mut buf)?;
        self.write(&self.path("ranking.csv"), &buf, "ranking", &[&obs_path])?;
        self.write(&self.path("ranking.svg"), ranking.to_svg().as_bytes(), "ranking-plot", &[&obs_path])?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["coefficient", "mean", "std", "q025", "q975", "prob_negative"]).map_err(csv_err)?;
        for c in &effects {
            w.write_record([
                c.name.clone(),
                format!("{:.6}", c.mean),
                format!("{:.6}", c.std),
                format!("{:.6}", c.q025),
                format!("{:.6}", c.q975),
                format!("{:.4}", c.prob_negative),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(&self.path("effects.csv"), &bytes, "effects", &[&obs_path])?;
        let outcome = SelectionOutcome {
            ranking,
            effects,
            dropped_regressors: dropped,
        };
        let mut text = serde_json::to_string_pretty(&outcome)?;
        text.push('\n');
        self.write(&self.path("selection.json"), text.as_bytes(), "selection", &[&obs_path])?;
        Ok(outcome)
    }

    /// Bode magnitudes and step responses of every input channel.
    pub fn analyze(&self) -> Result<()> {
        let (theta, _, _, src) = self.params_for(self.cfg.disturbance)?;
        let ups: Vec<&Path> = src.iter().map(|p| p.as_path()).collect();
        let model = build_continuous(&theta)?;
        let a = &self.cfg.analyze;
        let n = a.bode_points.max(2);
        let freqs: Vec<f64> = (0..n)
            .map(|i| 10f64.powf(a.bode_log10_hz.0 + (a.bode_log10_hz.1 - a.bode_log10_hz.0) * i as f64 / (n - 1) as f64))
            .collect();
        // the model's time unit is hours
        let freqs_per_h: Vec<f64> = freqs.iter().map(|f| f * 3600.0).collect();
        let mut bode = Vec::new();
        let mut steps = Vec::new();
        for ch in Channel::ALL {
            bode.push(bode_magnitude(&model, ch, &freqs_per_h)?);
            steps.push(step_response(&model, ch, a.step_horizon_h, a.step_dt_s)?);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["frequency_hz".to_string()];
        header.extend(Channel::ALL.iter().map(|c| c.name().to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (i, f) in freqs.iter().enumerate() {
            let mut r = vec![format!("{f:.6e}")];
            r.extend(bode.iter().map(|b| format!("{:.9e}", b[i])));
            w.write_record(&r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(&self.path("bode.csv"), &bytes, "bode", &ups)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["time_s".to_string()];
        header.extend(Channel::ALL.iter().map(|c| c.name().to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..steps[0].len() {
            let mut r = vec![format!("{}", steps[0][i].0)];
            r.extend(steps.iter().map(|s| format!("{:.9e}", s[i].1)));
            w.write_record(&r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(&self.path("step.csv"), &bytes, "step-response", &ups)?;

        let bode_series: Vec<Series> = Channel::ALL
            .iter()
            .zip(&bode)
            .map(|(c, b)| Series {
                label: c.name().into(),
                x: freqs.clone(),
                y: b.clone(),
            })
            .collect();
        let svg = line_plot(
            &Axes {
                title: "Bode magnitude".into(),
                x_label: "frequency (Hz)".into(),
                y_label: "|G| (K per unit input)".into(),
                x_scale: Scale::Log10,
                y_scale: Scale::Log10,
            },
            &bode_series,
        );
        self.write(&self.path("bode.svg"), svg.as_bytes(), "bode-plot", &ups)?;
        let step_series: Vec<Series> = Channel::ALL
            .iter()
            .zip(&steps)
            .map(|(c, s)| Series {
                label: c.name().into(),
                x: s.iter().map(|p| p.0 / 3600.0).collect(),
                y: s.iter().map(|p| p.1).collect(),
            })
            .collect();
        let svg = line_plot(
            &Axes {
                title: "Unit step response".into(),
                x_label: "time (h)".into(),
                y_label: "zone temperature change (K)".into(),
                ..Axes::default()
            },
            &step_series,
        );
        self.write(&self.path("step.svg"), svg.as_bytes(), "step-plot", &ups)?;
        Ok(())
    }

    /// generate → identify (all methods) → estimate → train → predict →
    /// evaluate → analyze.
    pub fn run_all(&self) -> Result<EvaluationReport> {
        self.generate()?;
        for m in [Method::Conv, Method::Id, Method::Od] {
            self.identify(m)?;
        }
        self.estimate()?;
        self.train()?;
        self.predict(PredictSelection::All)?;
        let report = self.evaluate()?;
        self.analyze()?;
        Ok(report)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: "pipeline csv".into(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn smoke_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig {
            name: "smoke".into(),
            ..RunConfig::default()
        };
        cfg.paths.output_dir = dir.to_path_buf();
        cfg.scenario.days = 4;
        cfg.operation.train_days = 6;
        cfg.operation.validation_days = 2;
        cfg.operation.test_days = 2;
        cfg.identify.restarts = 2;
        cfg.train.max_epochs = 4;
        cfg.train.patience = 2;
        cfg.net.n_z = 4;
        cfg
    }

    #[test]
    fn config_roundtrip_and_version_check() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let partial = RunConfig::from_json(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert!(matches!(
            RunConfig::from_json(r#"{"format_version": 2}"#),
            Err(Error::Version { .. })
        ));
        assert_ne!(partial.hash(), cfg.hash());
    }

    #[test]
    fn hybrid_prediction_without_model_reports_missing_model() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path());
        cfg.theta_from = ThetaSource::True;
        let p = Pipeline::new(cfg).unwrap();
        p.generate().unwrap();
        p.estimate().unwrap();
        let err = p.predict(PredictSelection::Hybrid).unwrap_err();
        assert!(err.to_string().starts_with("missing model"), "{err}");
        p.predict(PredictSelection::Conventional).unwrap();
    }

    #[test]
    fn stale_lineage_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path());
        cfg.theta_from = ThetaSource::True;
        let p = Pipeline::new(cfg.clone()).unwrap();
        p.generate().unwrap();
        p.predict(PredictSelection::Conventional).unwrap();
        p.evaluate().unwrap();
        // a different configuration must not evaluate these predictions
        cfg.seed = 2;
        let q = Pipeline::new(cfg).unwrap();
        assert!(matches!(q.evaluate(), Err(Error::Lineage(_))));
        // regenerated upstream data invalidates the predictions
        q.generate().unwrap();
        assert!(matches!(p.evaluate(), Err(Error::Lineage(_))));
    }

    #[test]
    fn full_smoke_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(smoke_config(dir.path())).unwrap();
        let report = p.run_all().unwrap();
        assert_eq!(report.summary.len(), 2);
        for f in ["comparison.csv", "trace_id.csv", "predictions.csv", "loads.csv", "per_day.csv", "bode.csv", "step.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
            assert!(meta_path(&dir.path().join(f)).exists(), "{f} sidecar");
        }
        assert!(p.model_path(DisturbanceKind::Id).exists());
    }
}
