//! Seeded ensembles of independent trials and parameter sweeps.
//!
//! Trial `i` draws from `RngStream(seed, i)` and trials are reduced in index
//! order, so a report depends only on the configuration and never on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{self, AnalyticError};
use crate::estimators::{self, EstimatorConfig, EstimatorError};
use crate::model::{ModelParams, NoiseConvention, ParamErrors, RobustSign, Scheme};
use crate::simulate::{self, RngStream};

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamErrors),
    #[error("invalid ensemble: {0}")]
    Config(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        source: EstimatorError,
    },
    #[error("{scheme}: empty steady-state window (burn-in {burn_in}, {samples} samples)")]
    EmptyWindow {
        scheme: Scheme,
        burn_in: usize,
        samples: usize,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl From<EstimatorError> for MonteCarloError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Analytic(a) => MonteCarloError::Analytic(a),
            other => MonteCarloError::Trial {
                trial: 0,
                source: other,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub params: ModelParams,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    /// Overrides [`ModelParams::default_burn_in`].
    pub burn_in: Option<usize>,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub sign: RobustSign,
    /// Scheme pairs whose error cross-covariance is also estimated.
    pub cross_pairs: Vec<(Scheme, Scheme)>,
}

impl EnsembleConfig {
    pub fn new(params: ModelParams, schemes: Vec<Scheme>, trials: usize) -> Self {
        Self {
            params,
            schemes,
            trials,
            burn_in: None,
            jobs: 0,
            sign: RobustSign::default(),
            cross_pairs: Vec::new(),
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| self.params.default_burn_in())
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        self.params.validate()?;
        if self.trials < 2 {
            return Err(MonteCarloError::Config(format!(
                "trials must be ≥ 2 (got {})",
                self.trials
            )));
        }
        if self.schemes.is_empty() {
            return Err(MonteCarloError::Config("no schemes requested".into()));
        }
        Ok(())
    }

    /// Every scheme that has to be run, requested ones first.
    fn run_list(&self) -> Vec<Scheme> {
        let mut out = self.schemes.clone();
        for &(a, b) in &self.cross_pairs {
            for s in [a, b] {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }
}

/// Sample mean and between-trial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_trials(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `(mean − reference)/se`.
    pub fn z(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeRow {
    pub scheme: Scheme,
    pub analytic: f64,
    pub empirical: f64,
    pub se: f64,
    pub z: f64,
    pub trials: usize,
    pub interior_samples: usize,
    pub mean_error: f64,
    pub mean_error_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossRow {
    pub first: Scheme,
    pub second: Scheme,
    /// Steady-state `E[e₁e₂]` from the analytic moments where available.
    pub analytic: Option<f64>,
    pub empirical: f64,
    pub se: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub params: ModelParams,
    pub seed: u64,
    pub rows: Vec<SchemeRow>,
    pub cross: Vec<CrossRow>,
}

impl MseReport {
    pub fn row(&self, scheme: Scheme) -> Option<&SchemeRow> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }
}

struct TrialStats {
    mse: Vec<f64>,
    mean_err: Vec<f64>,
    samples: Vec<usize>,
    cross: Vec<f64>,
}

fn run_trial(
    trial: usize,
    cfg: &EnsembleConfig,
    configs: &[EstimatorConfig],
    offset: f64,
) -> Result<TrialStats, MonteCarloError> {
    let p = &cfg.params;
    let mut rng = RngStream::new(p.seed, trial as u64);
    let mut truth = simulate::simulate_ou(p, &mut rng);
    if offset != 0.0 {
        truth.values.iter_mut().for_each(|v| *v += offset);
    }
    let meas =
        simulate::simulate_measurements(&truth, p, NoiseConvention::LinearizedHomodyne, &mut rng)
            .expect("linearized homodyne has a noise density");
    let mut errors = Vec::with_capacity(configs.len());
    let mut windows = Vec::with_capacity(configs.len());
    let mut stats = TrialStats {
        mse: Vec::new(),
        mean_err: Vec::new(),
        samples: Vec::new(),
        cross: Vec::new(),
    };
    for c in configs {
        let est =
            estimators::run(&meas, c).map_err(|source| MonteCarloError::Trial { trial, source })?;
        let window = est.interior();
        if window.is_empty() {
            return Err(MonteCarloError::EmptyWindow {
                scheme: c.scheme,
                burn_in: c.burn_in,
                samples: meas.len(),
            });
        }
        let err: Vec<f64> = truth
            .values
            .iter()
            .zip(&est.values)
            .map(|(t, e)| t - e)
            .collect();
        let n = window.len() as f64;
        stats
            .mse
            .push(err[window.clone()].iter().map(|e| e * e).sum::<f64>() / n);
        stats
            .mean_err
            .push(err[window.clone()].iter().sum::<f64>() / n);
        stats.samples.push(window.len());
        errors.push(err);
        windows.push(window);
    }
    let index = |s: Scheme| configs.iter().position(|c| c.scheme == s).unwrap();
    for &(a, b) in &cfg.cross_pairs {
        let (i, j) = (index(a), index(b));
        let lo = windows[i].start.max(windows[j].start);
        let hi = windows[i].end.min(windows[j].end).max(lo);
        if lo == hi {
            return Err(MonteCarloError::EmptyWindow {
                scheme: a,
                burn_in: cfg.burn_in(),
                samples: meas.len(),
            });
        }
        let sum: f64 = (lo..hi).map(|k| errors[i][k] * errors[j][k]).sum();
        stats.cross.push(sum / (hi - lo) as f64);
    }
    Ok(stats)
}

fn run_trials(
    cfg: &EnsembleConfig,
    offset: f64,
) -> Result<(Vec<Scheme>, Vec<TrialStats>), MonteCarloError> {
    cfg.validate()?;
    let schemes = cfg.run_list();
    let burn_in = cfg.burn_in();
    let configs = schemes
        .iter()
        .map(|&s| Ok(EstimatorConfig::with_sign(s, &cfg.params, cfg.sign)?.with_burn_in(burn_in)))
        .collect::<Result<Vec<_>, MonteCarloError>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| MonteCarloError::Pool(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_trial(i, cfg, &configs, offset))
            .collect()
    });
    let stats = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((schemes, stats))
}

/// Runs `cfg.trials` independent trials and aggregates interior-window MSEs.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<MseReport, MonteCarloError> {
    let (schemes, stats) = run_trials(cfg, 0.0)?;
    let column = |f: &dyn Fn(&TrialStats) -> f64| stats.iter().map(f).collect::<Vec<f64>>();
    let mut rows = Vec::with_capacity(cfg.schemes.len());
    for (i, &scheme) in schemes.iter().enumerate().take(cfg.schemes.len()) {
        let mse = Estimate::from_trials(&column(&|t| t.mse[i]));
        let bias = Estimate::from_trials(&column(&|t| t.mean_err[i]));
        let analytic = analytic::scheme_covariance_with_sign(scheme, &cfg.params, cfg.sign)?;
        rows.push(SchemeRow {
            scheme,
            analytic,
            empirical: mse.mean,
            se: mse.se,
            z: mse.z(analytic),
            trials: cfg.trials,
            interior_samples: stats[0].samples[i],
            mean_error: bias.mean,
            mean_error_se: bias.se,
        });
    }
    let cross = cfg
        .cross_pairs
        .iter()
        .enumerate()
        .map(|(k, &(first, second))| {
            let e = Estimate::from_trials(&column(&|t| t.cross[k]));
            CrossRow {
                first,
                second,
                analytic: analytic_cross(first, second, &cfg.params),
                empirical: e.mean,
                se: e.se,
                trials: cfg.trials,
            }
        })
        .collect();
    Ok(MseReport {
        params: cfg.params,
        seed: cfg.params.seed,
        rows,
        cross,
    })
}

fn analytic_cross(a: Scheme, b: Scheme, p: &ModelParams) -> Option<f64> {
    let pair = [a, b];
    if pair.contains(&Scheme::Kalman)
        && pair.contains(&Scheme::InfoBackward)
        && p.mu * p.delta == 0.0
    {
        analytic::kalman_pair_cross_cov(p).ok()
    } else {
        None
    }
}

/// Outcome of the constant-offset bias probe on the robust smoother.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignCheck {
    pub sign: RobustSign,
    pub offset: f64,
    pub forward: Estimate,
    pub backward: Estimate,
    pub combined: Estimate,
}

impl SignCheck {
    /// Whether the combined mean error lies in the hull of the two component
    /// mean errors, widened by three standard errors.
    pub fn passes(&self) -> bool {
        let lo = (self.forward.mean - 3.0 * self.forward.se)
            .min(self.backward.mean - 3.0 * self.backward.se);
        let hi = (self.forward.mean + 3.0 * self.forward.se)
            .max(self.backward.mean + 3.0 * self.backward.se);
        (lo - 3.0 * self.combined.se..=hi + 3.0 * self.combined.se).contains(&self.combined.mean)
    }
}

/// Adds `offset` to the truth and measures the mean error of the robust
/// smoother and of its forward and backward components.
pub fn check_robust_sign(
    params: &ModelParams,
    sign: RobustSign,
    offset: f64,
    trials: usize,
    jobs: usize,
) -> Result<SignCheck, MonteCarloError> {
    let cfg = EnsembleConfig {
        sign,
        jobs,
        ..EnsembleConfig::new(*params, vec![Scheme::Robust], trials)
    };
    cfg.validate()?;
    let burn_in = cfg.burn_in();
    let est = EstimatorConfig::with_sign(Scheme::Robust, params, sign)?.with_burn_in(burn_in);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MonteCarloError::Pool(e.to_string()))?;
    let per_trial: Vec<Result<[f64; 3], MonteCarloError>> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = RngStream::new(params.seed, trial as u64);
                let mut truth = simulate::simulate_ou(params, &mut rng);
                truth.values.iter_mut().for_each(|v| *v += offset);
                let meas = simulate::simulate_measurements(
                    &truth,
                    params,
                    NoiseConvention::LinearizedHomodyne,
                    &mut rng,
                )
                .expect("linearized homodyne has a noise density");
                let c = estimators::run_robust_components(&meas, &est)
                    .map_err(|source| MonteCarloError::Trial { trial, source })?;
                let n = truth.len();
                let window = burn_in..n.saturating_sub(burn_in);
                if window.is_empty() {
                    return Err(MonteCarloError::EmptyWindow {
                        scheme: Scheme::Robust,
                        burn_in,
                        samples: n,
                    });
                }
                let mean_err = |xs: &[f64]| {
                    window.clone().map(|k| truth.values[k] - xs[k]).sum::<f64>()
                        / window.len() as f64
                };
                Ok([
                    mean_err(&c.forward),
                    mean_err(&c.backward),
                    mean_err(&c.combined),
                ])
            })
            .collect()
    });
    let rows = per_trial.into_iter().collect::<Result<Vec<_>, _>>()?;
    let col = |i: usize| Estimate::from_trials(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    Ok(SignCheck {
        sign,
        offset,
        forward: col(0),
        backward: col(1),
        combined: col(2),
    })
}

/// Runs the offset probe for both conventions and returns the unique one that
/// passes, preferring [`RobustSign::Negative`] if both do.
pub fn resolve_robust_sign(
    params: &ModelParams,
    offset: f64,
    trials: usize,
    jobs: usize,
) -> Result<(RobustSign, Vec<SignCheck>), MonteCarloError> {
    let checks = [RobustSign::Negative, RobustSign::Positive]
        .into_iter()
        .map(|s| check_robust_sign(params, s, offset, trials, jobs))
        .collect::<Result<Vec<_>, _>>()?;
    let chosen = checks
        .iter()
        .find(|c| c.passes())
        .map_or(RobustSign::Negative, |c| c.sign);
    Ok((chosen, checks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lambda,
    Delta,
    Mu,
    Chi,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Delta => "delta",
            SweepAxis::Mu => "mu",
            SweepAxis::Chi => "chi",
        }
    }

    pub fn apply(self, p: &ModelParams, value: f64) -> ModelParams {
        match self {
            SweepAxis::Lambda => ModelParams {
                lambda: value,
                ..*p
            },
            SweepAxis::Delta => ModelParams { delta: value, ..*p },
            SweepAxis::Mu => ModelParams { mu: value, ..*p },
            SweepAxis::Chi => ModelParams {
                chi: Some(value),
                ..*p
            },
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            SweepAxis::Lambda,
            SweepAxis::Delta,
            SweepAxis::Mu,
            SweepAxis::Chi,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| format!("unknown axis '{s}' (expected lambda, delta, mu or chi)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub params: ModelParams,
    /// Analytic MSE per requested scheme, or the reason the point failed.
    pub analytic: Result<Vec<(Scheme, f64)>, String>,
    pub ensemble: Option<Result<MseReport, String>>,
}

impl SweepRow {
    pub fn analytic(&self, scheme: Scheme) -> Option<f64> {
        self.analytic
            .as_ref()
            .ok()?
            .iter()
            .find(|(s, _)| *s == scheme)
            .map(|(_, v)| *v)
    }

    pub fn empirical(&self, scheme: Scheme) -> Option<&SchemeRow> {
        self.ensemble.as_ref()?.as_ref().ok()?.row(scheme)
    }

    pub fn error(&self) -> Option<&str> {
        match (&self.analytic, &self.ensemble) {
            (Err(e), _) | (_, Some(Err(e))) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// Sweeps one parameter of `cfg.params` across `grid`.
///
/// Analytic values are always produced; ensembles run only when `empirical`
/// is set. A failing point is recorded on its row and the sweep continues.
pub fn sweep(
    axis: SweepAxis,
    grid: &[f64],
    cfg: &EnsembleConfig,
    empirical: bool,
) -> Result<SweepReport, MonteCarloError> {
    if grid.is_empty() {
        return Err(MonteCarloError::Config("empty grid".into()));
    }
    if grid
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(MonteCarloError::Config(
            "grid must be strictly increasing".into(),
        ));
    }
    if cfg.schemes.is_empty() {
        return Err(MonteCarloError::Config("no schemes requested".into()));
    }
    if empirical && cfg.trials < 2 {
        return Err(MonteCarloError::Config(format!(
            "trials must be ≥ 2 (got {})",
            cfg.trials
        )));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &value) in grid.iter().enumerate() {
        let params = axis.apply(&cfg.params, value);
        let analytic = point_analytic(&params, &cfg.schemes, cfg.sign);
        let ensemble = (empirical && analytic.is_ok()).then(|| {
            let point = EnsembleConfig {
                params,
                ..cfg.clone()
            };
            run_ensemble(&point).map_err(|e| e.to_string())
        });
        let row = SweepRow {
            value,
            params,
            analytic,
            ensemble,
        };
        match row.error() {
            Some(e) => log::warn!("{axis} = {value}: {e}"),
            None => log::info!("{axis} = {value} ({}/{})", i + 1, grid.len()),
        }
        rows.push(row);
    }
    Ok(SweepReport {
        axis,
        grid: grid.to_vec(),
        rows,
    })
}

fn point_analytic(
    p: &ModelParams,
    schemes: &[Scheme],
    sign: RobustSign,
) -> Result<Vec<(Scheme, f64)>, String> {
    let p = p.validate().map_err(|e| e.to_string())?;
    if p.lambda_true() <= 0.0 && p.mu * p.delta != 0.0 {
        return Err(AnalyticError::Nonstationary(p.lambda_true()).to_string());
    }
    schemes
        .iter()
        .map(|&s| {
            analytic::scheme_covariance_with_sign(s, &p, sign)
                .map(|v| (s, v))
                .map_err(|e| e.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ModelParams {
        ModelParams {
            horizon: 30.0,
            dt: 2e-3,
            seed,
            ..ModelParams::default()
        }
    }

    fn cfg(schemes: Vec<Scheme>, trials: usize, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            burn_in: Some(2500),
            ..EnsembleConfig::new(small(seed), schemes, trials)
        }
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            cfg(vec![Scheme::Kalman], 1, 0).validate(),
            Err(MonteCarloError::Config(_))
        ));
        assert!(matches!(
            cfg(vec![], 5, 0).validate(),
            Err(MonteCarloError::Config(_))
        ));
        let mut c = cfg(vec![Scheme::Kalman], 5, 0);
        c.params.kappa = -1.0;
        assert!(matches!(c.validate(), Err(MonteCarloError::Params(_))));
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let mut c = cfg(Scheme::ALL.to_vec(), 6, 11);
        c.cross_pairs = vec![(Scheme::Kalman, Scheme::InfoBackward)];
        c.jobs = 1;
        let a = run_ensemble(&c).unwrap();
        c.jobs = 4;
        let b = run_ensemble(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), Scheme::ALL.len());
        assert_eq!(a.cross.len(), 1);
        assert!(a.rows.iter().all(|r| r.empirical >= 0.0 && r.se > 0.0));
    }

    #[test]
    fn seeds_differ() {
        let a = run_ensemble(&cfg(vec![Scheme::Kalman], 4, 1)).unwrap();
        let b = run_ensemble(&cfg(vec![Scheme::Kalman], 4, 2)).unwrap();
        assert_ne!(a.rows[0].empirical, b.rows[0].empirical);
    }

    #[test]
    fn se_shrinks_with_trials() {
        let se = |n| run_ensemble(&cfg(vec![Scheme::Kalman], n, 5)).unwrap().rows[0].se;
        let ratio = se(16) / se(64);
        assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    }

    #[test]
    fn noiseless_surrogate_has_vanishing_mse() {
        let p = ModelParams {
            kappa: 1e-12,
            alpha: 1e6,
            horizon: 20.0,
            ..ModelParams::default()
        };
        let c = EnsembleConfig {
            jobs: 2,
            ..EnsembleConfig::new(p, Scheme::ALL.to_vec(), 3)
        };
        let r = run_ensemble(&c).unwrap();
        for row in &r.rows {
            assert!(row.empirical < 1e-9, "{:?}: {}", row.scheme, row.empirical);
        }
    }

    #[test]
    fn empty_window_is_reported() {
        let mut c = cfg(vec![Scheme::Rts], 2, 0);
        c.burn_in = Some(10_000);
        assert!(matches!(
            run_ensemble(&c),
            Err(MonteCarloError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn stability_errors_carry_trial_index() {
        let mut c = cfg(vec![Scheme::Kalman], 2, 0);
        c.params.dt = 0.3;
        c.params.horizon = 30.0;
        c.burn_in = Some(1);
        assert!(matches!(
            run_ensemble(&c),
            Err(MonteCarloError::Trial { trial: 0, .. })
        ));
    }

    #[test]
    fn sweep_rows_and_errors() {
        let base =
            EnsembleConfig::new(ModelParams::default(), vec![Scheme::Kalman, Scheme::Rts], 2);
        let r = sweep(SweepAxis::Lambda, &[-1.0, 0.0, 1.0, 2.0], &base, false).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows[0].error().unwrap().contains("lambda"));
        for row in &r.rows[1..] {
            assert!(row.error().is_none());
            assert!(row.analytic(Scheme::Rts).unwrap() <= row.analytic(Scheme::Kalman).unwrap());
            assert!(row.ensemble.is_none());
        }
        assert!(sweep(SweepAxis::Lambda, &[], &base, false).is_err());
        assert!(sweep(SweepAxis::Lambda, &[1.0, 1.0], &base, false).is_err());
    }

    #[test]
    fn axis_names_round_trip() {
        for a in [
            SweepAxis::Lambda,
            SweepAxis::Delta,
            SweepAxis::Mu,
            SweepAxis::Chi,
        ] {
            assert_eq!(a.name().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("sigma".parse::<SweepAxis>().is_err());
    }
}
