//! Mini-batch Adam training with early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;
use crate::net::{loss_and_gradient, mse};
use crate::params::NetParams;
use crate::spec::NetSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Independent restarts; the run with the lowest test loss is kept.
    pub repeat: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 1000,
            patience: 150,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            repeat: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.repeat == 0 {
            return Err(NetError::Spec("max_epochs, batch_size and repeat must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(NetError::Spec(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::Spec(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Supervised samples, each input already flattened for the target spec.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Self {
        Dataset { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn refs(&self) -> (Vec<&[f64]>, Vec<&[f64]>) {
        (
            self.x.iter().map(|v| v.as_slice()).collect(),
            self.y.iter().map(|v| v.as_slice()).collect(),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_test_loss: f64,
    pub stopped_early: bool,
    /// Which repeat produced this history.
    pub repeat: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has not improved for `patience` epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
        }
    }

    pub fn update(&mut self, loss: f64) -> StopDecision {
        let e = self.epoch;
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = e;
            return StopDecision::Improved;
        }
        if e - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

fn check_sets(spec: &NetSpec, train: &Dataset, test: &Dataset) -> Result<(), NetError> {
    if train.is_empty() {
        return Err(NetError::Empty("training set"));
    }
    if test.is_empty() {
        return Err(NetError::Empty("test set"));
    }
    for (name, d) in [("train", train), ("test", test)] {
        if d.x.len() != d.y.len() {
            return Err(NetError::Shape(format!("{name}: {} inputs, {} targets", d.x.len(), d.y.len())));
        }
        if let Some(x) = d.x.iter().find(|x| x.len() != spec.input_len()) {
            return Err(NetError::Shape(format!("{name}: input of {} values, expected {}", x.len(), spec.input_len())));
        }
        if let Some(y) = d.y.iter().find(|y| y.len() != spec.output_len()) {
            return Err(NetError::Shape(format!("{name}: target of {} values, expected {}", y.len(), spec.output_len())));
        }
    }
    Ok(())
}

fn train_once(spec: &NetSpec, train: &Dataset, test: &Dataset, cfg: &TrainConfig, repeat: usize) -> Result<(NetParams, History), NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(repeat as u64);
    let mut params = NetParams::init(spec, rng.random());
    let mut best_params = params.clone();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (test_x, test_y) = test.refs();
    let mut history = History {
        repeat,
        ..Default::default()
    };

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train.x[i].as_slice()).collect();
            let ys: Vec<&[f64]> = chunk.iter().map(|&i| train.y[i].as_slice()).collect();
            let (loss, grad) = loss_and_gradient(spec, &params, &xs, &ys, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params.values, &grad);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let test_loss = mse(spec, &params, &test_x, &test_y)?;
        if !test_loss.is_finite() {
            return Err(NetError::NonFiniteLoss { epoch, loss: test_loss });
        }
        history.train_loss.push(train_loss);
        history.test_loss.push(test_loss);
        match stopper.update(test_loss) {
            StopDecision::Improved => best_params.values.copy_from_slice(&params.values),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch();
    history.best_test_loss = stopper.best();
    log::debug!(
        "{} repeat {repeat}: best test mse {:.4e} at epoch {} of {}",
        spec.label(),
        history.best_test_loss,
        history.best_epoch,
        history.test_loss.len()
    );
    Ok((best_params, history))
}

/// Trains `spec` on `train`, early-stopping on `test`, and returns the
/// parameters of the best test epoch. With `cfg.repeat > 1` the repeat with
/// the lowest best test loss is returned. Deterministic in `cfg.seed`.
pub fn train(spec: &NetSpec, train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<(NetParams, History), NetError> {
    spec.validate()?;
    cfg.validate()?;
    check_sets(spec, train, test)?;
    let mut best: Option<(NetParams, History)> = None;
    for r in 0..cfg.repeat {
        let run = train_once(spec, train, test, cfg, r)?;
        if best.as_ref().is_none_or(|b| run.1.best_test_loss < b.1.best_test_loss) {
            best = Some(run);
        }
    }
    Ok(best.expect("repeat >= 1"))
}
