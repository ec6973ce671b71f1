//! Bayesian model selection: marginal effects of design choices on test
//! error, and log-normal comparisons of per-case error distributions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svg::{interval_plot, Axes, Interval, Scale};

/// Lower bound on any noise scale the samplers visit.
pub const SIGMA_FLOOR: f64 = 1e-6;
const TARGET_ACCEPTANCE: f64 = 0.35;
const ADAPT_EVERY: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 2000,
            draws: 8000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig { seed, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidArgument("sampler needs at least one draw".into()));
        }
        Ok(())
    }
}

/// One trained model's design indicators and test error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignObservation {
    pub case_id: String,
    pub chi_cnn: bool,
    pub chi_rnn: bool,
    pub chi_lstm: bool,
    pub chi_time: bool,
    pub chi_pattern: f64,
    pub chi_past_w: bool,
    pub chi_future_w: bool,
    pub chi_id: bool,
    /// Test temperature RMSE, °C.
    pub upsilon: f64,
}

impl DesignObservation {
    pub const REGRESSORS: [&'static str; 8] = ["cnn", "rnn", "lstm", "time", "pattern", "past_w", "future_w", "id"];

    fn row(&self) -> [f64; 8] {
        let b = |v: bool| f64::from(u8::from(v));
        [
            b(self.chi_cnn),
            b(self.chi_rnn),
            b(self.chi_lstm),
            b(self.chi_time),
            self.chi_pattern,
            b(self.chi_past_w),
            b(self.chi_future_w),
            b(self.chi_id),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if [self.chi_cnn, self.chi_rnn, self.chi_lstm].iter().filter(|v| **v).count() > 1 {
            return Err(Error::InvalidArgument(format!("case {}: more than one architecture indicator", self.case_id)));
        }
        if !(self.upsilon > 0.0 && self.upsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("case {}: test error {} must be positive", self.case_id, self.upsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionPosterior {
    /// `intercept` followed by the regressors that vary in the data.
    pub names: Vec<String>,
    /// Regressors left out because they take a single value.
    pub dropped: Vec<String>,
    /// Draws of the coefficient vector, one row per draw.
    pub beta: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Rao–Blackwellized posterior mean of the coefficients.
    pub mean: Vec<f64>,
    pub sigma_acceptance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub q025: f64,
    pub q975: f64,
    pub prob_negative: f64,
}

impl RegressionPosterior {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.beta.iter().map(|b| b[j]).collect()
    }

    pub fn summary(&self) -> Vec<CoefficientSummary> {
        (0..self.names.len())
            .map(|j| {
                let mut c = self.column(j);
                let n = c.len() as f64;
                let m = c.iter().sum::<f64>() / n;
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
                c.sort_by(f64::total_cmp);
                CoefficientSummary {
                    name: self.names[j].clone(),
                    mean: self.mean[j],
                    std: sd,
                    q025: quantile_sorted(&c, 0.025),
                    q975: quantile_sorted(&c, 0.975),
                    prob_negative: c.iter().filter(|v| **v < 0.0).count() as f64 / n,
                }
            })
            .collect()
    }
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Random-walk step that adapts toward the target acceptance during burn-in.
#[derive(Clone, Copy, Debug)]
struct Adaptive {
    step: f64,
    accepted: usize,
    proposed: usize,
    window_accepted: usize,
    window_proposed: usize,
}

impl Adaptive {
    fn new(step: f64) -> Self {
        Adaptive {
            step,
            accepted: 0,
            proposed: 0,
            window_accepted: 0,
            window_proposed: 0,
        }
    }

    fn record(&mut self, accepted: bool, adapting: bool) {
        if adapting {
            self.window_proposed += 1;
            self.window_accepted += usize::from(accepted);
            if self.window_proposed == ADAPT_EVERY {
                let rate = self.window_accepted as f64 / ADAPT_EVERY as f64;
                self.step *= (2.0 * (rate - TARGET_ACCEPTANCE)).exp();
                self.window_proposed = 0;
                self.window_accepted = 0;
            }
        } else {
            self.proposed += 1;
            self.accepted += usize::from(accepted);
        }
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn metropolis<F: Fn(f64) -> f64>(rng: &mut ChaCha8Rng, current: f64, current_lp: f64, step: f64, log_target: F) -> (f64, f64, bool) {
    let z: f64 = StandardNormal.sample(rng);
    let prop = current + step * z;
    let lp = log_target(prop);
    if lp.is_finite() && (lp >= current_lp || rng.random::<f64>().ln() < lp - current_lp) {
        (prop, lp, true)
    } else {
        (current, current_lp, false)
    }
}

/// Bayesian linear regression of test error on design indicators with
/// `β ~ Normal(0, 10²)` and `σ ~ HalfNormal(1)`.
pub fn fit_effect_regression(observations: &[DesignObservation], cfg: &SamplerConfig) -> Result<RegressionPosterior> {
    fit_effect_regression_with_prior(observations, cfg, 10.0)
}

/// As [`fit_effect_regression`] with a chosen prior standard deviation on
/// the coefficients.
pub fn fit_effect_regression_with_prior(observations: &[DesignObservation], cfg: &SamplerConfig, prior_std: f64) -> Result<RegressionPosterior> {
    cfg.validate()?;
    for o in observations {
        o.validate()?;
    }
    let rows: Vec<[f64; 8]> = observations.iter().map(|o| o.row()).collect();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in DesignObservation::REGRESSORS.iter().enumerate() {
        let first = rows.first().map(|r| r[j]);
        if rows.iter().any(|r| Some(r[j]) != first) {
            keep.push(j);
        } else {
            dropped.push(name.to_string());
        }
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(keep.iter().map(|j| DesignObservation::REGRESSORS[*j].to_string()));
    let x = DMatrix::from_fn(rows.len(), names.len(), |i, j| if j == 0 { 1.0 } else { rows[i][keep[j - 1]] });
    let y = DVector::from_iterator(rows.len(), observations.iter().map(|o| o.upsilon));
    sample_regression(&x, &y, names, dropped, cfg, prior_std)
}

/// Gibbs sampler on a generic design matrix: exact normal draws of `β | σ`
/// and a Metropolis step on `log σ`.
pub fn sample_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: Vec<String>,
    dropped: Vec<String>,
    cfg: &SamplerConfig,
    prior_std: f64,
) -> Result<RegressionPosterior> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} observations for {p} coefficients")));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let eig = xtx.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    if lo <= 1e-10 * hi {
        let j = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(j);
        let involved: Vec<&str> = (0..p).filter(|i| v[*i].abs() > 1e-3).map(|i| names[i].as_str()).collect();
        return Err(Error::Collinear(format!("linear dependence among {}", involved.join(", "))));
    }
    let prior_prec = 1.0 / (prior_std * prior_std);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ols = xtx.clone().cholesky().expect("positive definite").solve(&xty);
    let rss = |b: &DVector<f64>| (y - x * b).norm_squared();
    let mut log_s = (rss(&ols) / (n - p) as f64).sqrt().max(SIGMA_FLOOR).ln();
    let mut adapt = Adaptive::new(1.0 / (2.0 * n as f64).sqrt());
    let mut post = RegressionPosterior {
        names,
        dropped,
        beta: Vec::with_capacity(cfg.draws),
        sigma: Vec::with_capacity(cfg.draws),
        mean: vec![0.0; p],
        sigma_acceptance: 0.0,
    };
    let mut mean_acc = DVector::<f64>::zeros(p);
    for it in 0..cfg.burn_in + cfg.draws {
        let s2 = (2.0 * log_s).exp();
        let prec = &xtx / s2 + DMatrix::identity(p, p) * prior_prec;
        let chol = prec
            .cholesky()
            .ok_or_else(|| Error::Collinear("posterior precision not positive definite".into()))?;
        let m = chol.solve(&(&xty / s2));
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let l_t = chol.l().transpose();
        let beta = &m + l_t.solve_upper_triangular(&z).expect("triangular factor is invertible");
        let r = rss(&beta);
        let log_target = |s: f64| {
            if s < SIGMA_FLOOR.ln() {
                return f64::NEG_INFINITY;
            }
            -(n as f64) * s - 0.5 * r * (-2.0 * s).exp() - 0.5 * (2.0 * s).exp() + s
        };
        let cur = log_target(log_s);
        let (ns, _, acc) = metropolis(&mut rng, log_s, cur, adapt.step, log_target);
        log_s = ns;
        let keep = it >= cfg.burn_in;
        adapt.record(acc, !keep);
        if keep {
            mean_acc += &m;
            post.beta.push(beta.iter().copied().collect());
            post.sigma.push(log_s.exp());
        }
    }
    post.mean = (mean_acc / cfg.draws as f64).iter().copied().collect();
    post.sigma_acceptance = adapt.rate();
    if post.beta.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression draws".into()));
    }
    Ok(post)
}

/// Posterior draws of a log-normal error model `log υ ~ Normal(μ, σ²)` with
/// `μ ~ Normal(0, 10²)` and `σ ~ HalfNormal(1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LognormalPosterior {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub acceptance_mu: f64,
    pub acceptance_sigma: f64,
}

impl LognormalPosterior {
    pub fn mean_mu(&self) -> f64 {
        self.mu.iter().sum::<f64>() / self.mu.len() as f64
    }

    pub fn mean_sigma(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }

    /// One posterior predictive error draw per posterior draw, sorted.
    pub fn predictive(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = self
            .mu
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (m + s * z).exp()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

pub fn fit_lognormal(errors: &[f64], cfg: &SamplerConfig) -> Result<LognormalPosterior> {
    cfg.validate()?;
    if errors.len() < 3 {
        return Err(Error::InsufficientData(format!("{} error samples, need at least 3", errors.len())));
    }
    if let Some(v) = errors.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("error sample {v} is not positive")));
    }
    let logs: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = logs.len() as f64;
    let sum: f64 = logs.iter().sum();
    let sum2: f64 = logs.iter().map(|v| v * v).sum();
    let m0 = sum / n;
    let sd0 = ((sum2 / n - m0 * m0).max(0.0)).sqrt().max(SIGMA_FLOOR);
    // sufficient statistics keep each evaluation O(1)
    let log_post = |mu: f64, s: f64| {
        if s < SIGMA_FLOOR.ln() {
            return f64::NEG_INFINITY;
        }
        let sig2 = (2.0 * s).exp();
        let ss = sum2 - 2.0 * mu * sum + n * mu * mu;
        -n * s - 0.5 * ss / sig2 - 0.5 * mu * mu / 100.0 - 0.5 * sig2 + s
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut mu, mut s) = (m0, sd0.ln());
    let mut a_mu = Adaptive::new(2.4 * sd0 / n.sqrt());
    let mut a_s = Adaptive::new(2.4 / (2.0 * n).sqrt());
    let mut post = LognormalPosterior {
        mu: Vec::with_capacity(cfg.draws),
        sigma: Vec::with_capacity(cfg.draws),
        acceptance_mu: 0.0,
        acceptance_sigma: 0.0,
    };
    for it in 0..cfg.burn_in + cfg.draws {
        let adapting = it < cfg.burn_in;
        let cur = log_post(mu, s);
        let (nm, lp, acc) = metropolis(&mut rng, mu, cur, a_mu.step, |m| log_post(m, s));
        mu = nm;
        a_mu.record(acc, adapting);
        let (ns, _, acc) = metropolis(&mut rng, s, lp, a_s.step, |v| log_post(mu, v));
        s = ns;
        a_s.record(acc, adapting);
        if !adapting {
            post.mu.push(mu);
            post.sigma.push(s.exp());
        }
    }
    post.acceptance_mu = a_mu.rate();
    post.acceptance_sigma = a_s.rate();
    Ok(post)
}

/// Fits every case in parallel; case `i` uses seed `cfg.seed + i`.
pub fn fit_lognormal_many(cases: &[(String, Vec<f64>)], cfg: &SamplerConfig) -> Result<Vec<(String, LognormalPosterior)>> {
    cases
        .par_iter()
        .enumerate()
        .map(|(i, (id, errs))| {
            let c = SamplerConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..*cfg
            };
            fit_lognormal(errs, &c).map(|p| (id.clone(), p))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub p: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate of `P(υ₁ < υ₂)` for posterior predictive draws of
/// two fitted cases.
pub fn prob_better(c1: &LognormalPosterior, c2: &LognormalPosterior, seed: u64) -> ProbEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c1.mu.len().max(c2.mu.len()).max(1);
    let mut wins = 0.0;
    for i in 0..n {
        let za: f64 = StandardNormal.sample(&mut rng);
        let zb: f64 = StandardNormal.sample(&mut rng);
        let a = c1.mu[i % c1.mu.len()] + c1.sigma[i % c1.sigma.len()] * za;
        let j = rng.random_range(0..c2.mu.len());
        let b = c2.mu[j] + c2.sigma[j] * zb;
        // comparing logs is the same event and avoids overflow
        if a < b {
            wins += 1.0;
        } else if a == b {
            wins += 0.5;
        }
    }
    let p = wins / n as f64;
    ProbEstimate {
        p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCase {
    pub case_id: String,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    /// `P(best < this)`; 0.5 for the best case itself.
    pub prob_best_better: f64,
    pub indistinguishable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub cases: Vec<RankedCase>,
}

/// Sorts cases by posterior predictive median and compares the best case
/// with every other one.
pub fn rank_cases(fits: &[(String, LognormalPosterior)], seed: u64) -> Result<RankReport> {
    if fits.len() < 2 {
        return Err(Error::InsufficientData("ranking needs at least two cases".into()));
    }
    let mut cases: Vec<(usize, RankedCase)> = fits
        .par_iter()
        .enumerate()
        .map(|(i, (id, post))| {
            let pred = post.predictive(seed.wrapping_add(i as u64));
            (
                i,
                RankedCase {
                    case_id: id.clone(),
                    median: quantile_sorted(&pred, 0.5),
                    q05: quantile_sorted(&pred, 0.05),
                    q25: quantile_sorted(&pred, 0.25),
                    q75: quantile_sorted(&pred, 0.75),
                    q95: quantile_sorted(&pred, 0.95),
                    prob_best_better: 0.5,
                    indistinguishable: true,
                },
            )
        })
        .collect();
    cases.sort_by(|a, b| a.1.median.total_cmp(&b.1.median).then(a.0.cmp(&b.0)));
    let best = cases[0].0;
    let probs: Vec<f64> = cases
        .par_iter()
        .map(|(i, _)| prob_better(&fits[best].1, &fits[*i].1, seed ^ 0x9e37_79b9_7f4a_7c15).p)
        .collect();
    for ((_, c), p) in cases.iter_mut().zip(probs).skip(1) {
        c.prob_best_better = p;
        c.indistinguishable = (0.05..=0.95).contains(&p);
    }
    Ok(RankReport {
        cases: cases.into_iter().map(|(_, c)| c).collect(),
    })
}

impl RankReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "case", "median", "q05", "q25", "q75", "q95", "prob_best_better", "indistinguishable"])
            .map_err(csv_err)?;
        for (i, c) in self.cases.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                c.case_id.clone(),
                format!("{:.6}", c.median),
                format!("{:.6}", c.q05),
                format!("{:.6}", c.q25),
                format!("{:.6}", c.q75),
                format!("{:.6}", c.q95),
                format!("{:.4}", c.prob_best_better),
                c.indistinguishable.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Interval plot of the predictive distributions, best case on top.
    pub fn to_svg(&self) -> String {
        let items: Vec<Interval> = self
            .cases
            .iter()
            .map(|c| Interval {
                label: c.case_id.clone(),
                outer: (c.q05, c.q95),
                inner: (c.q25, c.q75),
                center: c.median,
                highlight: c.indistinguishable,
            })
            .collect();
        let axes = Axes {
            title: "Posterior predictive test RMSE by case".into(),
            x_label: "RMSE (°C)".into(),
            y_label: String::new(),
            x_scale: Scale::Log10,
            y_scale: Scale::Linear,
        };
        interval_plot(&axes, &items)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: "ranking csv".into(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn quick() -> SamplerConfig {
        SamplerConfig {
            burn_in: 1000,
            draws: 4000,
            seed: 3,
        }
    }

    fn synthetic_observations(n: usize, seed: u64, noise: f64) -> Vec<DesignObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Normal::new(0.0, noise).unwrap();
        (0..n)
            .map(|i| {
                let arch = i % 4;
                let time = rng.random::<bool>();
                let future = rng.random::<bool>();
                let pattern = [1.0, 4.0, 7.0][rng.random_range(0..3)];
                DesignObservation {
                    case_id: format!("c{i}"),
                    chi_cnn: arch == 1,
                    chi_rnn: arch == 2,
                    chi_lstm: arch == 3,
                    chi_time: time,
                    chi_pattern: pattern,
                    chi_past_w: rng.random::<bool>(),
                    chi_future_w: future,
                    chi_id: rng.random::<bool>(),
                    upsilon: 2.0 + f64::from(u8::from(time)) + e.sample(&mut rng),
                }
            })
            .collect()
    }

    #[test]
    fn planted_effect_is_recovered() {
        let obs = synthetic_observations(200, 1, 0.1);
        let post = fit_effect_regression(&obs, &SamplerConfig::with_seed(1)).unwrap();
        let s = &post.summary()[post.index_of("time").unwrap()];
        assert!(s.q025 < 1.0 && 1.0 < s.q975, "{s:?}");
        assert!(post.beta.len() >= 4000);
        assert!((0.1..0.7).contains(&post.sigma_acceptance));
    }

    #[test]
    fn flat_response_centres_effects_at_zero() {
        let mut obs = synthetic_observations(60, 2, 0.1);
        for o in &mut obs {
            o.upsilon = 1.3;
        }
        let post = fit_effect_regression(&obs, &quick()).unwrap();
        for s in post.summary().iter().skip(1) {
            assert!(s.mean.abs() < 2.0 * s.std, "{s:?}");
        }
    }

    #[test]
    fn wide_prior_matches_least_squares() {
        let obs = synthetic_observations(200, 4, 0.05);
        let post = fit_effect_regression_with_prior(&obs, &quick(), 1e3).unwrap();
        let rows: Vec<[f64; 8]> = obs.iter().map(|o| o.row()).collect();
        let x = DMatrix::from_fn(rows.len(), 9, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.upsilon));
        let ols = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * y));
        for j in 0..9 {
            assert!((post.mean[j] - ols[j]).abs() < 1e-3, "coef {j}: {} vs {}", post.mean[j], ols[j]);
        }
    }

    #[test]
    fn collinear_and_constant_regressors() {
        let mut obs = synthetic_observations(50, 5, 0.1);
        for o in &mut obs {
            o.chi_past_w = o.chi_time;
        }
        assert!(matches!(fit_effect_regression(&obs, &quick()), Err(Error::Collinear(_))));
        let mut obs = synthetic_observations(50, 5, 0.1);
        for o in &mut obs {
            o.chi_id = true;
        }
        let post = fit_effect_regression(&obs, &quick()).unwrap();
        assert_eq!(post.dropped, vec!["id".to_string()]);
        assert!(post.index_of("id").is_none());
    }

    #[test]
    fn invalid_observations_are_rejected() {
        let mut obs = synthetic_observations(20, 6, 0.1);
        obs[0].chi_cnn = true;
        obs[0].chi_rnn = true;
        assert!(fit_effect_regression(&obs, &quick()).is_err());
        assert!(fit_lognormal(&[1.0, 0.0, 2.0], &quick()).is_err());
        assert!(fit_lognormal(&[1.0, 2.0], &quick()).is_err());
    }

    fn lognormal_sample(mu: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mu, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng).exp()).collect()
    }

    #[test]
    fn lognormal_recovers_planted_parameters() {
        let v = lognormal_sample(0.5, 0.2, 500, 7);
        let post = fit_lognormal(&v, &SamplerConfig::with_seed(7)).unwrap();
        assert!((post.mean_mu() - 0.5).abs() < 0.05);
        assert!((post.mean_sigma() - 0.2).abs() < 0.05);
        assert!((0.1..=0.7).contains(&post.acceptance_mu), "{}", post.acceptance_mu);
        assert!((0.1..=0.7).contains(&post.acceptance_sigma), "{}", post.acceptance_sigma);
        assert_eq!(post.mu.len(), 8000);
    }

    #[test]
    fn repeated_value_concentrates_mu() {
        let post = fit_lognormal(&[0.8; 20], &quick()).unwrap();
        assert!((post.mean_mu() - 0.8f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn scaling_errors_shifts_mu() {
        let v = lognormal_sample(0.0, 0.3, 100, 8);
        let scaled: Vec<f64> = v.iter().map(|x| x * 3.0).collect();
        let a = fit_lognormal(&v, &quick()).unwrap();
        let b = fit_lognormal(&scaled, &quick()).unwrap();
        let se: f64 = a.mu.iter().map(|m| (m - a.mean_mu()).powi(2)).sum::<f64>().sqrt() / a.mu.len() as f64 * 10.0;
        assert!((b.mean_mu() - a.mean_mu() - 3f64.ln()).abs() < 0.01 + se);
    }

    #[test]
    fn prob_better_symmetry_and_separation() {
        let a = fit_lognormal(&lognormal_sample(0.0, 0.1, 100, 9), &quick()).unwrap();
        let b = fit_lognormal(&lognormal_sample(1.0, 0.1, 100, 10), &quick()).unwrap();
        let same = prob_better(&a, &a, 1);
        assert!((same.p - 0.5).abs() < 0.02, "{same:?}");
        assert!(prob_better(&a, &b, 2).p > 0.99);
        let ab = prob_better(&a, &b, 3).p;
        let ba = prob_better(&b, &a, 4).p;
        assert!((ab + ba - 1.0).abs() < 0.01);
        let c = fit_lognormal(&lognormal_sample(0.1, 0.3, 100, 11), &quick()).unwrap();
        let p1 = prob_better(&a, &c, 5);
        let p2 = prob_better(&c, &a, 6);
        assert!((p1.p + p2.p - 1.0).abs() < 4.0 * (p1.stderr + p2.stderr));
    }

    #[test]
    fn ranking_flags_and_exports() {
        let base = lognormal_sample(0.0, 0.2, 50, 12);
        let dominated: Vec<f64> = base.iter().map(|v| v * 10.0).collect();
        let cases = vec![
            ("a".to_string(), base.clone()),
            ("b".to_string(), base.clone()),
            ("slow".to_string(), dominated),
        ];
        let fits = fit_lognormal_many(&cases, &quick()).unwrap();
        let rep = rank_cases(&fits, 13).unwrap();
        assert_eq!(rep.cases.len(), 3);
        assert_eq!(rep.cases[2].case_id, "slow");
        assert!(!rep.cases[2].indistinguishable);
        assert!(rep.cases[0].indistinguishable && rep.cases[1].indistinguishable);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        assert_eq!(rep.to_svg().matches("<circle").count(), 3);
        assert!(rank_cases(&fits[..1], 0).is_err());
    }

    #[test]
    fn fits_are_seed_deterministic() {
        let v = lognormal_sample(0.0, 0.2, 30, 14);
        assert_eq!(fit_lognormal(&v, &quick()).unwrap(), fit_lognormal(&v, &quick()).unwrap());
    }
}
