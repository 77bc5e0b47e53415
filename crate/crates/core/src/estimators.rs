//! Trajectory-level estimators.
//!
//! Every scheme is a constant-gain first-order recursion (or a combination of
//! two). States advance with explicit Euler steps; the measurement input over
//! a step is the average of its two end samples, which keeps forward and
//! reverse-time passes symmetric on the grid. Backward passes reverse the
//! record, run the same recursion and reverse the result.

use thiserror::Error;

use crate::analytic::{self, AnalyticError, GainSet};
use crate::model::{
    EstimateSeries, MeasurementRecord, ModelParams, NoiseConvention, RobustSign, Scheme,
};

/// Largest admissible `rate·Δt` for an explicit step.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("{scheme}: step too large for rate {rate} (rate·dt = {product} ≥ {STABILITY_LIMIT})")]
    StabilityGuard {
        scheme: Scheme,
        rate: f64,
        product: f64,
    },
    #[error("{scheme}: supplied gains do not match the nominal parameters")]
    GainMismatch { scheme: Scheme },
    #[error("{scheme}: expected linearized-homodyne measurements, got {got}")]
    WrongConvention { scheme: Scheme, got: &'static str },
    #[error("empty measurement record")]
    EmptyRecord,
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

/// Scheme, resolved gains and nominal design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub scheme: Scheme,
    pub gains: GainSet,
    pub nominal: ModelParams,
    pub sign: RobustSign,
    pub burn_in: usize,
}

impl EstimatorConfig {
    pub fn new(scheme: Scheme, nominal: &ModelParams) -> Result<Self, EstimatorError> {
        Self::with_sign(scheme, nominal, RobustSign::default())
    }

    pub fn with_sign(
        scheme: Scheme,
        nominal: &ModelParams,
        sign: RobustSign,
    ) -> Result<Self, EstimatorError> {
        let gains = analytic::scheme_gains(scheme, nominal)?.gains;
        Ok(Self {
            scheme,
            gains,
            nominal: *nominal,
            sign,
            burn_in: nominal.default_burn_in(),
        })
    }

    /// Accepts externally resolved gains after recomputing them from
    /// `nominal`.
    pub fn from_gains(
        scheme: Scheme,
        nominal: &ModelParams,
        gains: GainSet,
        sign: RobustSign,
    ) -> Result<Self, EstimatorError> {
        let cfg = Self::with_sign(scheme, nominal, sign)?;
        if !gains_match(&cfg.gains, &gains) {
            return Err(EstimatorError::GainMismatch { scheme });
        }
        Ok(Self { gains, ..cfg })
    }

    pub fn with_burn_in(self, burn_in: usize) -> Self {
        Self { burn_in, ..self }
    }

    fn series(&self, values: Vec<f64>, dt: f64) -> EstimateSeries {
        EstimateSeries {
            scheme: self.scheme,
            dt,
            values,
            burn_in: self.burn_in,
        }
    }

    fn lag(&self) -> (f64, f64) {
        match self.gains {
            GainSet::Lag { chi, k1 } => (chi, k1),
            _ => unreachable!("lag gains for {}", self.scheme),
        }
    }

    fn optimal(&self) -> (f64, f64, f64, f64, f64) {
        match self.gains {
            GainSet::Optimal {
                k_f,
                k_b,
                smoother_gain,
                p_f,
                p_b,
            } => (k_f, k_b, smoother_gain, p_f, p_b),
            _ => unreachable!("optimal gains for {}", self.scheme),
        }
    }

    /// Same design, different scheme.
    fn as_scheme(&self, scheme: Scheme) -> Result<Self, EstimatorError> {
        Ok(Self {
            scheme,
            gains: analytic::scheme_gains(scheme, &self.nominal)?.gains,
            ..*self
        })
    }
}

fn gains_match(a: &GainSet, b: &GainSet) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    match (a, b) {
        (GainSet::Lag { chi: c1, k1: w1 }, GainSet::Lag { chi: c2, k1: w2 }) => {
            close(*c1, *c2) && close(*w1, *w2)
        }
        (
            GainSet::Optimal {
                k_f,
                k_b,
                smoother_gain,
                p_f,
                p_b,
            },
            GainSet::Optimal {
                k_f: k_f2,
                k_b: k_b2,
                smoother_gain: f2,
                p_f: p_f2,
                p_b: p_b2,
            },
        ) => {
            close(*k_f, *k_f2)
                && close(*k_b, *k_b2)
                && close(*smoother_gain, *f2)
                && close(*p_f, *p_f2)
                && close(*p_b, *p_b2)
        }
        (GainSet::Robust(g1), GainSet::Robust(g2)) => {
            close(g1.l, g2.l) && close(g1.x, g2.x) && close(g1.y, g2.y)
        }
        _ => false,
    }
}

fn guard(scheme: Scheme, rate: f64, dt: f64) -> Result<(), EstimatorError> {
    let product = rate * dt;
    if product < STABILITY_LIMIT {
        Ok(())
    } else {
        Err(EstimatorError::StabilityGuard {
            scheme,
            rate,
            product,
        })
    }
}

fn check_record(meas: &MeasurementRecord, scheme: Scheme) -> Result<(), EstimatorError> {
    if meas.is_empty() {
        return Err(EstimatorError::EmptyRecord);
    }
    if meas.convention != NoiseConvention::LinearizedHomodyne {
        return Err(EstimatorError::WrongConvention {
            scheme,
            got: meas.convention.name(),
        });
    }
    Ok(())
}

/// `y' = −pole·y + gain·u` from `y(0) = init`.
fn integrate_lag(input: &[f64], pole: f64, gain: f64, dt: f64, init: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(input.len());
    let mut y = init;
    out.push(y);
    for w in input.windows(2) {
        y += dt * (-pole * y + gain * 0.5 * (w[0] + w[1]));
        out.push(y);
    }
    out
}

/// The same recursion in reverse time, from `y(T) = init`.
fn integrate_lag_reversed(input: &[f64], pole: f64, gain: f64, dt: f64, init: f64) -> Vec<f64> {
    let reversed: Vec<f64> = input.iter().rev().copied().collect();
    let mut out = integrate_lag(&reversed, pole, gain, dt, init);
    out.reverse();
    out
}

/// Low-pass `χ/(s+χ)` forward in time from the first measurement.
pub fn run_tw_forward(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    check_record(meas, cfg.scheme)?;
    let (chi, _) = cfg.lag();
    let v = integrate_lag(&meas.values, chi, chi, meas.dt, meas.values[0]);
    Ok(cfg.series(v, meas.dt))
}

/// Low-pass in reverse time from the last measurement.
pub fn run_tw_backward(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    check_record(meas, cfg.scheme)?;
    let (chi, _) = cfg.lag();
    let v = integrate_lag_reversed(
        &meas.values,
        chi,
        chi,
        meas.dt,
        *meas.values.last().unwrap(),
    );
    Ok(cfg.series(v, meas.dt))
}

pub fn run_tw_smoother(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    let (_, k1) = cfg.lag();
    let f = run_tw_forward(meas, cfg)?;
    let b = run_tw_backward(meas, cfg)?;
    let v = f
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| k1 * x + (1.0 - k1) * y)
        .collect();
    Ok(cfg.series(v, meas.dt))
}

/// Steady-state Kalman filter `φ̂_f' = −(λ + K_f)φ̂_f + K_f·θ`.
pub fn run_kalman(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    check_record(meas, cfg.scheme)?;
    let (k_f, ..) = cfg.optimal();
    let pole = cfg.nominal.lambda + k_f;
    guard(cfg.scheme, pole, meas.dt)?;
    let v = integrate_lag(&meas.values, pole, k_f, meas.dt, meas.values[0]);
    Ok(cfg.series(v, meas.dt))
}

/// Backward Kalman filter `φ̂_b' = (λ − K_b)φ̂_b + K_b·θ`, integrated in
/// reverse time from `θ_T`.
pub fn run_info_backward(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    check_record(meas, cfg.scheme)?;
    let (_, k_b, ..) = cfg.optimal();
    let pole = k_b - cfg.nominal.lambda;
    guard(cfg.scheme, pole, meas.dt)?;
    let v = integrate_lag_reversed(
        &meas.values,
        pole,
        k_b,
        meas.dt,
        *meas.values.last().unwrap(),
    );
    Ok(cfg.series(v, meas.dt))
}

/// RTS backward sweep over a forward Kalman pass.
///
/// In reverse time `dφ̂/dτ = (λ − F)φ̂ + F·φ̂_f` from `φ̂(T) = φ̂_f(T)`.
pub fn run_rts(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    let (_, _, f, ..) = cfg.optimal();
    let rate = f - cfg.nominal.lambda;
    guard(cfg.scheme, rate, meas.dt)?;
    let fwd = run_kalman(meas, &cfg.as_scheme(Scheme::Kalman)?)?.values;
    let n = fwd.len();
    let mut v = vec![0.0; n];
    v[n - 1] = fwd[n - 1];
    for k in (0..n - 1).rev() {
        v[k] = v[k + 1] + meas.dt * (-rate * v[k + 1] + f * fwd[k + 1]);
    }
    Ok(cfg.series(v, meas.dt))
}

/// Mayne-Fraser combination of the forward and backward Kalman filters,
/// weighted `P_b/(P_f+P_b)` and `P_f/(P_f+P_b)`.
pub fn run_two_filter(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    let (.., p_f, p_b) = cfg.optimal();
    let w = analytic::combine_unbiased(p_f, p_b, 0.0)?;
    let f = run_kalman(meas, &cfg.as_scheme(Scheme::Kalman)?)?;
    let b = run_info_backward(meas, &cfg.as_scheme(Scheme::InfoBackward)?)?;
    let v = f
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| w.k1 * x + w.k2 * y)
        .collect();
    Ok(cfg.series(v, meas.dt))
}

/// Internal signals of the robust smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustComponents {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    /// Forward ellipse-centre filter `η/X`.
    pub forward: Vec<f64>,
    /// Backward ellipse-centre filter, oriented so it tracks `+φ` under
    /// either sign convention.
    pub backward: Vec<f64>,
    /// `(η − ξ)/(X + Y)`.
    pub combined: Vec<f64>,
}

/// Runs the η and ξ recursions of the robust smoother.
///
/// `η' = −Lη + 4|α|²θ` forward from 0, `ξ` in reverse time from 0 with
/// measurement drive `±4|α|²θ` per the sign convention.
pub fn run_robust_components(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<RobustComponents, EstimatorError> {
    check_record(meas, cfg.scheme)?;
    let g = match cfg.gains {
        GainSet::Robust(g) => g,
        _ => unreachable!("robust gains for {}", cfg.scheme),
    };
    guard(cfg.scheme, g.l, meas.dt)?;
    let drive = 4.0 * cfg.nominal.alpha * cfg.nominal.alpha;
    let eta = integrate_lag(&meas.values, g.l, drive, meas.dt, 0.0);
    let xi = integrate_lag_reversed(&meas.values, g.l, cfg.sign.drive() * drive, meas.dt, 0.0);
    let total = g.x + g.y;
    let forward = eta.iter().map(|e| e / g.x).collect();
    let backward = xi.iter().map(|x| cfg.sign.drive() * x / g.y).collect();
    let combined = eta.iter().zip(&xi).map(|(e, x)| (e - x) / total).collect();
    Ok(RobustComponents {
        eta,
        xi,
        forward,
        backward,
        combined,
    })
}

pub fn run_robust(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    let c = run_robust_components(meas, cfg)?;
    Ok(cfg.series(c.combined, meas.dt))
}

/// Dispatches on `cfg.scheme`.
pub fn run(
    meas: &MeasurementRecord,
    cfg: &EstimatorConfig,
) -> Result<EstimateSeries, EstimatorError> {
    match cfg.scheme {
        Scheme::TwFilter => run_tw_forward(meas, cfg),
        Scheme::TwBackward => run_tw_backward(meas, cfg),
        Scheme::TwSmoother => run_tw_smoother(meas, cfg),
        Scheme::Kalman => run_kalman(meas, cfg),
        Scheme::InfoBackward => run_info_backward(meas, cfg),
        Scheme::Rts => run_rts(meas, cfg),
        Scheme::TwoFilter => run_two_filter(meas, cfg),
        Scheme::Robust => run_robust(meas, cfg),
    }
}
