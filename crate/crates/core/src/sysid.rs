//! Parameter identification of the zone model with the unmeasured gain
//! treated as white output noise (CONV), as an input-disturbance state (ID)
//! or as a filtered output disturbance (OD).

use nalgebra::SMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::OperationalDataset;
use crate::error::{Error, Result};
use crate::estimation::{augment_id, innovation_sse, kalman_filter, od_sse, NoiseConfig, OdParams};
use crate::model::{build_continuous, discretize, simulate, ThetaParams, Vector};
use crate::optim::{nelder_mead, NelderMeadOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Conv,
    Id,
    Od,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Conv => "CONV",
            Method::Id => "ID",
            Method::Od => "OD",
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            Method::Conv => 8,
            Method::Id | Method::Od => 10,
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "conv" => Some(Method::Conv),
            "id" => Some(Method::Id),
            "od" => Some(Method::Od),
            _ => None,
        }
    }
}

/// Map between a bounded parameter and an unconstrained coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    /// Logit of the position of `ln|v|` between `ln|lo|` and `ln|hi|`.
    LogLogit { lo: f64, hi: f64 },
    /// Logit of the position of `v` between `lo` and `hi`.
    Logit { lo: f64, hi: f64 },
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    /// Position in `[0, 1]` of a bounded value.
    pub fn to_unit(&self, v: f64) -> f64 {
        match *self {
            Transform::LogLogit { lo, hi } => {
                let (a, b) = (lo.abs().ln(), hi.abs().ln());
                (v.abs().ln() - a) / (b - a)
            }
            Transform::Logit { lo, hi } => (v - lo) / (hi - lo),
        }
    }

    pub fn from_unit(&self, p: f64) -> f64 {
        match *self {
            Transform::LogLogit { lo, hi } => {
                let (a, b) = (lo.abs().ln(), hi.abs().ln());
                let m = (a + p * (b - a)).exp();
                let v = if lo < 0.0 { -m } else { m };
                v.clamp(lo.min(hi), lo.max(hi))
            }
            Transform::Logit { lo, hi } => (lo + p * (hi - lo)).clamp(lo, hi),
        }
    }

    pub fn to_free(&self, v: f64) -> f64 {
        logit(self.to_unit(v))
    }

    pub fn from_free(&self, z: f64) -> f64 {
        self.from_unit(sigmoid(z))
    }
}

/// Search box of the physical parameters in `ThetaParams::NAMES` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds(pub [(f64, f64); 8]);

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds(ThetaParams::BOUNDS)
    }
}

impl ParamBounds {
    pub fn transforms(&self, method: Method) -> Vec<Transform> {
        let mut t: Vec<Transform> = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                if i == 4 {
                    Transform::Logit { lo, hi }
                } else if i == 7 {
                    // cooling capacity is negative; lower magnitude first
                    Transform::LogLogit { lo: hi, hi: lo }
                } else {
                    Transform::LogLogit { lo, hi }
                }
            })
            .collect();
        match method {
            Method::Conv => {}
            Method::Id => {
                let (lo, hi) = NoiseConfig::SIGMA_BOUNDS;
                t.push(Transform::LogLogit { lo, hi });
                t.push(Transform::LogLogit { lo, hi });
            }
            Method::Od => {
                let (lo, hi) = OdParams::BOUNDS;
                t.push(Transform::Logit { lo, hi });
                t.push(Transform::Logit { lo, hi });
            }
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(lo, hi)) in self.0.iter().enumerate() {
            let (glo, ghi) = ThetaParams::BOUNDS[i];
            if !(lo < hi) || lo < glo || hi > ghi {
                return Err(Error::InvalidArgument(format!(
                    "bounds for {} must satisfy {glo} <= lo < hi <= {ghi}",
                    ThetaParams::NAMES[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentProblem {
    pub method: Method,
    pub bounds: ParamBounds,
    /// Steps filtered to initialize the CONV simulation.
    pub init_steps: usize,
    pub restarts: usize,
    /// Feed recorded internal gains to the model as a known input.
    pub gains_known: bool,
    pub optimizer: NelderMeadOptions,
    /// Noise of the CONV initialization filter.
    pub init_noise: Option<NoiseConfig>,
    /// Extra starting points (physical units, method parameter order),
    /// tried after the random restarts.
    pub seed_points: Vec<Vec<f64>>,
}

impl IdentProblem {
    pub fn new(method: Method) -> Self {
        IdentProblem {
            method,
            bounds: ParamBounds::default(),
            init_steps: 96,
            restarts: 50,
            gains_known: false,
            optimizer: NelderMeadOptions::default(),
            init_noise: None,
            seed_points: Vec::new(),
        }
    }
}

/// Full parameter vector of a method, split into its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub theta: ThetaParams,
    pub noise: Option<NoiseConfig>,
    pub od: Option<OdParams>,
}

impl MethodParams {
    pub fn from_vec(method: Method, v: &[f64], ts: f64) -> MethodParams {
        let theta = ThetaParams::from_array(v[..8].try_into().expect("eight physical parameters"));
        match method {
            Method::Conv => MethodParams {
                theta,
                noise: None,
                od: None,
            },
            Method::Id => MethodParams {
                theta,
                noise: Some(NoiseConfig::new(v[8], v[9], ts)),
                od: None,
            },
            Method::Od => MethodParams {
                theta,
                noise: None,
                od: Some(OdParams { rho1: v[8], rho2: v[9] }),
            },
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.theta.to_array().to_vec();
        if let Some(n) = &self.noise {
            v.extend([n.sigma_x, n.sigma_zeta]);
        }
        if let Some(o) = &self.od {
            v.extend([o.rho1, o.rho2]);
        }
        v
    }
}

/// Squared simulation error after a filtered initialization over the first
/// `init_steps` samples.
pub fn objective_conv(theta: &ThetaParams, data: &OperationalDataset, init_steps: usize, gains_known: bool, init_noise: Option<&NoiseConfig>) -> Result<f64> {
    let ts = data.step_seconds()?;
    if init_steps == 0 || init_steps >= data.len() {
        return Err(Error::InsufficientData(format!(
            "need more than {init_steps} samples, have {}",
            data.len()
        )));
    }
    let model = discretize(&build_continuous(theta)?, ts)?;
    let inputs = data.inputs(gains_known);
    let noise = init_noise.copied().unwrap_or_else(|| NoiseConfig::default_for(ts));
    let y0 = data.y_za[0];
    let head = inputs.slice(0..init_steps);
    let filt = kalman_filter(
        &model,
        &head,
        &data.y_za[..init_steps],
        &noise.process_covariance::<2>(),
        noise.r_meas,
        Vector::<2>::new(y0, y0),
        SMatrix::identity(),
    )?;
    let tail = inputs.slice(init_steps..data.len());
    let yhat = simulate(&model, &filt.last.x, &tail.w, &tail.u, &tail.q_g)?;
    let sse: f64 = yhat
        .iter()
        .zip(&data.y_za[init_steps..])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if sse.is_finite() {
        Ok(sse)
    } else {
        Err(Error::NonFinite("simulation error".into()))
    }
}

/// Sum of squared one-step innovations of the augmented filter.
pub fn objective_id(theta: &ThetaParams, noise: &NoiseConfig, data: &OperationalDataset, gains_known: bool) -> Result<f64> {
    noise.validate()?;
    let model = discretize(&augment_id(&build_continuous(theta)?), data.step_seconds()?)?;
    let y0 = data.y_za[0];
    Ok(innovation_sse(
        &model,
        &data.inputs(gains_known),
        &data.y_za,
        &noise.process_covariance::<3>(),
        noise.r_meas,
        Vector::<3>::new(y0, y0, 0.0),
        SMatrix::identity(),
    ))
}

/// Sum of squared one-step innovations of the output-disturbance predictor.
pub fn objective_od(theta: &ThetaParams, od: &OdParams, data: &OperationalDataset, gains_known: bool) -> Result<f64> {
    od.validate()?;
    let model = discretize(&build_continuous(theta)?, data.step_seconds()?)?;
    Ok(od_sse(&model, &data.inputs(gains_known), &data.y_za, od))
}

/// Objective of `problem` at a physical parameter vector.
pub fn evaluate(problem: &IdentProblem, data: &OperationalDataset, params: &MethodParams) -> Result<f64> {
    match problem.method {
        Method::Conv => objective_conv(&params.theta, data, problem.init_steps, problem.gains_known, problem.init_noise.as_ref()),
        Method::Id => objective_id(
            &params.theta,
            params.noise.as_ref().ok_or_else(|| Error::InvalidArgument("ID needs noise parameters".into()))?,
            data,
            problem.gains_known,
        ),
        Method::Od => objective_od(
            &params.theta,
            params.od.as_ref().ok_or_else(|| Error::InvalidArgument("OD needs disturbance parameters".into()))?,
            data,
            problem.gains_known,
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartLog {
    pub index: usize,
    /// Starting point in physical units.
    pub start: Vec<f64>,
    pub final_params: Vec<f64>,
    pub final_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentResult {
    pub method: Method,
    pub theta: ThetaParams,
    pub noise: Option<NoiseConfig>,
    pub od: Option<OdParams>,
    pub objective: f64,
    pub best_restart: usize,
    pub seed: u64,
    pub restarts: Vec<RestartLog>,
}

impl IdentResult {
    pub fn params(&self) -> MethodParams {
        MethodParams {
            theta: self.theta,
            noise: self.noise,
            od: self.od,
        }
    }
}

/// Unit-box starting point of restart `index`: the box midpoint for index 0,
/// uniform draws from `[0.02, 0.98]` otherwise.
pub fn restart_point(n: usize, seed: u64, index: usize) -> Vec<f64> {
    if index == 0 {
        return vec![0.5; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..n).map(|_| rng.random_range(0.02..0.98)).collect()
}

/// Multi-start minimization of the method's objective in transformed
/// coordinates. Deterministic in `seed`; restarts run in parallel.
pub fn identify(problem: &IdentProblem, data: &OperationalDataset, seed: u64) -> Result<IdentResult> {
    if problem.restarts == 0 && problem.seed_points.is_empty() {
        return Err(Error::InvalidArgument("at least one restart required".into()));
    }
    problem.bounds.validate()?;
    data.validate()?;
    let ts = data.step_seconds()?;
    if problem.method == Method::Conv && problem.init_steps >= data.len() {
        return Err(Error::InsufficientData("dataset shorter than the initialization window".into()));
    }
    let n = problem.method.n_params();
    let tr = problem.bounds.transforms(problem.method);
    for p in &problem.seed_points {
        if p.len() != n {
            return Err(Error::LengthMismatch {
                what: "seed point",
                expected: n,
                found: p.len(),
            });
        }
    }

    let to_phys = |z: &[f64]| -> Vec<f64> { z.iter().zip(&tr).map(|(z, t)| t.from_free(*z)).collect() };
    let objective = |z: &[f64]| -> f64 {
        let params = MethodParams::from_vec(problem.method, &to_phys(z), ts);
        evaluate(problem, data, &params).unwrap_or(f64::INFINITY)
    };

    let starts: Vec<Vec<f64>> = (0..problem.restarts)
        .map(|i| restart_point(n, seed, i).iter().zip(&tr).map(|(u, _)| logit(*u)).collect::<Vec<f64>>())
        .chain(problem.seed_points.iter().map(|p| {
            p.iter()
                .zip(&tr)
                .map(|(v, t)| logit(t.to_unit(*v).clamp(1e-9, 1.0 - 1e-9)))
                .collect()
        }))
        .collect();

    let logs: Vec<RestartLog> = starts
        .par_iter()
        .enumerate()
        .map(|(index, z0)| {
            let r = nelder_mead(objective, z0, &problem.optimizer);
            RestartLog {
                index,
                start: to_phys(z0),
                final_params: to_phys(&r.x),
                final_value: r.f,
                iterations: r.iterations,
                evaluations: r.evaluations,
                converged: r.converged,
            }
        })
        .collect();

    let best = logs
        .iter()
        .filter(|l| l.final_value.is_finite())
        .min_by(|a, b| a.final_value.total_cmp(&b.final_value).then(a.index.cmp(&b.index)))
        .ok_or(Error::AllRestartsDiverged(logs.len()))?;
    let params = MethodParams::from_vec(problem.method, &best.final_params, ts);
    // re-evaluate at the reported parameters so the value is never stale
    let objective = evaluate(problem, data, &params)?;
    log::info!(
        "{} identification: best objective {objective:.6e} from restart {} of {}",
        problem.method.name(),
        best.index,
        logs.len()
    );
    Ok(IdentResult {
        method: problem.method,
        theta: params.theta,
        noise: params.noise,
        od: params.od,
        objective,
        best_restart: best.index,
        seed,
        restarts: logs,
    })
}

/// Plain-text comparison of identified parameters against a reference row.
pub fn comparison_table(reference: Option<&ThetaParams>, results: &[IdentResult]) -> String {
    let mut s = String::new();
    let header: Vec<String> = std::iter::once("method".to_string())
        .chain(ThetaParams::NAMES.iter().map(|n| n.to_string()))
        .chain(["extra1".to_string(), "extra2".to_string(), "objective".to_string()])
        .collect();
    s.push_str(&header.join("\t"));
    s.push('\n');
    let row = |name: &str, th: &ThetaParams, extra: [Option<f64>; 2], obj: Option<f64>| -> String {
        let mut cells = vec![name.to_string()];
        cells.extend(th.to_array().iter().map(|v| format!("{v:.3}")));
        cells.extend(extra.iter().map(|e| e.map(|v| format!("{v:.3e}")).unwrap_or_default()));
        cells.push(obj.map(|v| format!("{v:.4e}")).unwrap_or_default());
        cells.join("\t")
    };
    if let Some(r) = reference {
        s.push_str(&row("TRUE", r, [None, None], None));
        s.push('\n');
    }
    for res in results {
        let extra = match (res.noise, res.od) {
            (Some(n), _) => [Some(n.sigma_x), Some(n.sigma_zeta)],
            (_, Some(o)) => [Some(o.rho1), Some(o.rho2)],
            _ => [None, None],
        };
        s.push_str(&row(res.method.name(), &res.theta, extra, Some(res.objective)));
        s.push('\n');
    }
    s
}
