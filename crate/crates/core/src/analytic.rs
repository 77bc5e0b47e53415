//! Closed-form steady-state covariances and gains.
//!
//! Every quantity is implemented literally as a closed form and, where one
//! exists, also through the [`crate::solvers`] kernels (Lyapunov or Riccati).
//! [`dual_routes`] pairs the two for cross-checking.
//!
//! Two measurement-noise densities coexist. The standard-quantum-limit and
//! `σ²(χ)` analysis sees dual-homodyne noise `R = 1/(2|α|²)`; everything from
//! the reference smoother onward sees adaptive-homodyne noise
//! `R = 1/(4|α|²)`. Each function below names the one it uses.

use nalgebra::dmatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CovarianceReport, ModelParams, NoiseConvention, RobustSign, Scheme};
use crate::solvers::{self, LyapunovProblem, ScalarQuadratic, SolverError, StabilityForm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("true process nonstationary: lambda_true = {0} ≤ 0")]
    Nonstationary(f64),
    #[error("{0} requires lambda > 0")]
    NeedsPositiveLambda(&'static str),
    #[error("estimates perfectly correlated: E1 + E2 - 2·E12 = {0:e}")]
    PerfectlyCorrelated(f64),
}

fn adaptive_r(p: &ModelParams) -> f64 {
    NoiseConvention::LinearizedHomodyne
        .noise_density(p.alpha)
        .unwrap()
}

fn dual_r(p: &ModelParams) -> f64 {
    NoiseConvention::DualHomodyne
        .noise_density(p.alpha)
        .unwrap()
}

/// `√(λ² + 4κ|α|²)`, the closed-loop rate shared by the optimal filters.
fn kalman_rate(p: &ModelParams) -> f64 {
    (p.lambda * p.lambda + 4.0 * p.kappa * p.alpha * p.alpha).sqrt()
}

/// Reference-filter bandwidth that is optimal as λ → 0: `2|α|√κ`.
pub fn chi_opt(p: &ModelParams) -> f64 {
    2.0 * p.alpha * p.kappa.sqrt()
}

/// Standard quantum limit for OU phase noise (dual-homodyne Kalman filter).
pub fn sql_ou(p: &ModelParams) -> f64 {
    let a2 = p.alpha * p.alpha;
    // (−λ + √(λ² + 2κ|α|²)) / (2|α|²), rearranged to avoid cancellation.
    p.kappa / (p.lambda + (p.lambda * p.lambda + 2.0 * p.kappa * a2).sqrt())
}

/// `−2λP − 2|α|²P² + κ = 0`.
pub fn sql_riccati(p: &ModelParams) -> ScalarQuadratic {
    ScalarQuadratic::new(
        -2.0 * p.alpha * p.alpha,
        -2.0 * p.lambda,
        p.kappa,
        StabilityForm::Covariance,
    )
}

/// Error covariance of the low-pass `χ/(s+χ)` fed with dual-homodyne phase
/// readings: `κ/(2(λ+χ)) + χ/(4|α|²)`.
pub fn tw_filter_cov(p: &ModelParams, chi: f64) -> f64 {
    p.kappa / (2.0 * (p.lambda + chi)) + chi / (4.0 * p.alpha * p.alpha)
}

/// Stationary second moments of `(φ, estimate)` for a first-order estimator
/// `ẋ = −pole·x + gain·θ` with measurement-noise density `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMoments {
    /// `E[φ²]`
    pub sigma: f64,
    /// `E[φ·x]`
    pub cross: f64,
    /// `E[x²]`
    pub est: f64,
}

impl PairMoments {
    pub fn error_cov(&self) -> f64 {
        self.sigma - 2.0 * self.cross + self.est
    }
}

/// Solves the augmented 2-state Lyapunov system for truth rate `lambda_true`.
pub fn pair_moments(
    lambda_true: f64,
    kappa: f64,
    r: f64,
    gain: f64,
    pole: f64,
) -> Result<PairMoments, AnalyticError> {
    let a = dmatrix![-lambda_true, 0.0; gain, -pole];
    let q = dmatrix![kappa, 0.0; 0.0, gain * gain * r];
    let s = solvers::solve_lyapunov(&LyapunovProblem::new(a, q))?;
    Ok(PairMoments {
        sigma: s[(0, 0)],
        cross: s[(0, 1)],
        est: s[(1, 1)],
    })
}

/// Lyapunov route for [`tw_filter_cov`] (dual-homodyne noise).
pub fn tw_filter_cov_lyapunov(p: &ModelParams, chi: f64) -> Result<f64, AnalyticError> {
    if p.lambda <= 0.0 {
        return Err(AnalyticError::NeedsPositiveLambda(
            "tw_filter_cov Lyapunov route",
        ));
    }
    Ok(pair_moments(p.lambda, p.kappa, dual_r(p), chi, chi)?.error_cov())
}

/// Forward low-pass at `χ_opt` on adaptive-homodyne readings.
pub fn tw_forward_cov(p: &ModelParams) -> f64 {
    let sk = p.kappa.sqrt();
    sk * (p.lambda + 4.0 * p.alpha * sk) / (4.0 * p.alpha * (p.lambda + 2.0 * p.alpha * sk))
}

/// Reverse-time low-pass at `χ_opt`; identical to the forward value.
pub fn tw_backward_cov(p: &ModelParams) -> f64 {
    let chi = chi_opt(p);
    chi * (p.lambda + 2.0 * chi) / (8.0 * p.alpha * p.alpha * (p.lambda + chi))
}

/// `E[(φ − Θ₋)(φ − Θ₊)] = κλ / (2(λ + χ_opt)²)`.
pub fn tw_cross_cov(p: &ModelParams) -> f64 {
    let s = p.lambda + chi_opt(p);
    p.kappa * p.lambda / (2.0 * s * s)
}

/// Lyapunov entries of the reference forward and backward systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwMoments {
    pub forward: PairMoments,
    pub backward: PairMoments,
}

impl TwMoments {
    /// `Σ − M_f − M_b + M_f Σ⁻¹ Σ Σ⁻¹ M_b`.
    pub fn cross_cov(&self) -> f64 {
        error_cross(&self.forward, &self.backward)
    }
}

fn error_cross(f: &PairMoments, b: &PairMoments) -> f64 {
    let sigma = f.sigma;
    let alpha = f.cross / sigma;
    let beta = b.cross / sigma;
    sigma - f.cross - b.cross + alpha * sigma * beta
}

/// Lyapunov solution for the reference forward/backward pair at `χ_opt`.
///
/// The backward system reuses the forward template: the reversed stationary
/// output has the same autocorrelation, hence the same generator.
pub fn tw_moments(p: &ModelParams) -> Result<TwMoments, AnalyticError> {
    if p.lambda <= 0.0 {
        return Err(AnalyticError::NeedsPositiveLambda(
            "reference smoother Lyapunov route",
        ));
    }
    let chi = chi_opt(p);
    let m = pair_moments(p.lambda, p.kappa, adaptive_r(p), chi, chi)?;
    Ok(TwMoments {
        forward: m,
        backward: m,
    })
}

/// Optimal unbiased combination of two estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub k1: f64,
    pub k2: f64,
    pub mse: f64,
}

/// Combines estimates with error variances `e1`, `e2` and error covariance
/// `e12` using weights that sum to one.
pub fn combine_unbiased(e1: f64, e2: f64, e12: f64) -> Result<Combination, AnalyticError> {
    let den = e1 + e2 - 2.0 * e12;
    if den.is_nan() || den <= 1e-300 {
        return Err(AnalyticError::PerfectlyCorrelated(den));
    }
    let k1 = (e2 - e12) / den;
    let mse = (e1 * e2 - e12 * e12) / den;
    Ok(Combination {
        k1,
        k2: 1.0 - k1,
        mse,
    })
}

/// Smoothed error covariance of the reference smoother at `χ_opt`.
pub fn tw_smoothed_cov(p: &ModelParams) -> f64 {
    let sk = p.kappa.sqrt();
    let a = p.alpha;
    let l = p.lambda;
    let d = l + 2.0 * a * sk;
    sk * (l * l + 8.0 * a * l * sk + 8.0 * a * a * p.kappa) / (8.0 * a * d * d)
}

/// Combination weights of the reference smoother from the closed forms.
pub fn tw_smoother_weights(p: &ModelParams) -> Combination {
    // σ_f² = σ_b² > σ_fb² for every admissible parameter set.
    combine_unbiased(tw_forward_cov(p), tw_backward_cov(p), tw_cross_cov(p))
        .expect("reference forward and backward errors are never perfectly correlated")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanGain {
    /// Steady-state error covariance.
    pub cov: f64,
    pub gain: f64,
}

/// Forward Kalman filter: `P_f = (−λ + √(4κ|α|² + λ²))/(4|α|²)`, `K_f = 4|α|²P_f`.
pub fn kalman_cov_gain(p: &ModelParams) -> KalmanGain {
    let s = kalman_rate(p);
    // −λ + S without cancellation at large λ.
    let k = 4.0 * p.kappa * p.alpha * p.alpha / (p.lambda + s);
    KalmanGain {
        cov: k / (4.0 * p.alpha * p.alpha),
        gain: k,
    }
}

/// `−2λP_f − 4|α|²P_f² + κ = 0`.
pub fn kalman_riccati(p: &ModelParams) -> ScalarQuadratic {
    ScalarQuadratic::new(
        -4.0 * p.alpha * p.alpha,
        -2.0 * p.lambda,
        p.kappa,
        StabilityForm::Covariance,
    )
}

/// Backward (information) filter: `P_b = (λ + √(4κ|α|² + λ²))/(4|α|²)`.
pub fn backward_cov_gain(p: &ModelParams) -> KalmanGain {
    let s = kalman_rate(p);
    let k = p.lambda + s;
    KalmanGain {
        cov: k / (4.0 * p.alpha * p.alpha),
        gain: k,
    }
}

/// `2λP_b − 4|α|²P_b² + κ = 0`.
pub fn backward_riccati(p: &ModelParams) -> ScalarQuadratic {
    ScalarQuadratic::new(
        -4.0 * p.alpha * p.alpha,
        2.0 * p.lambda,
        p.kappa,
        StabilityForm::Covariance,
    )
}

/// RTS smoother: `P = κ/(2√(4κ|α|² + λ²))` and gain `F = κ/P_f`.
pub fn rts_cov_gain(p: &ModelParams) -> KalmanGain {
    let s = kalman_rate(p);
    // 4|α|²κ / (−λ + S) = λ + S
    let f = p.lambda + s;
    KalmanGain {
        cov: p.kappa / (2.0 * s),
        gain: f,
    }
}

/// Solves the linear steady-state RTS equation `−2λP + 2κP_f⁻¹P − κ = 0`
/// given the forward Riccati root.
pub fn rts_riccati_solution(p: &ModelParams, p_f: f64) -> f64 {
    p.kappa / (2.0 * p.kappa / p_f - 2.0 * p.lambda)
}

/// Robust smoother Riccati solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustGains {
    /// `√(λ² − μ²λ² + 4|α|²κ)`
    pub l: f64,
    /// Forward information-form root.
    pub x: f64,
    /// Backward root.
    pub y: f64,
}

impl RobustGains {
    /// Gain of the forward ellipse-centre filter `η/X`.
    pub fn forward_gain(&self, p: &ModelParams) -> f64 {
        4.0 * p.alpha * p.alpha / self.x
    }

    /// Gain of the backward ellipse-centre filter `ξ/Y`.
    pub fn backward_gain(&self, p: &ModelParams) -> f64 {
        4.0 * p.alpha * p.alpha / self.y
    }
}

pub fn robust_riccati(p: &ModelParams) -> RobustGains {
    let l2 = p.lambda * p.lambda * (1.0 - p.mu * p.mu) + 4.0 * p.alpha * p.alpha * p.kappa;
    let l = l2.sqrt();
    // Y = (−λ + L)/κ, rearranged to avoid cancellation.
    let y = (4.0 * p.alpha * p.alpha * p.kappa - (p.mu * p.lambda).powi(2))
        / (p.kappa * (p.lambda + l));
    RobustGains {
        l,
        x: (p.lambda + l) / p.kappa,
        y,
    }
}

/// `−2λX + κX² + μ²λ²/κ − 4|α|² = 0` (information form).
pub fn robust_forward_riccati(p: &ModelParams) -> ScalarQuadratic {
    let c = (p.mu * p.lambda).powi(2) / p.kappa - 4.0 * p.alpha * p.alpha;
    ScalarQuadratic::new(p.kappa, -2.0 * p.lambda, c, StabilityForm::Information)
}

/// `−2λY − κY² − μ²λ²/κ + 4|α|² = 0`.
pub fn robust_backward_riccati(p: &ModelParams) -> ScalarQuadratic {
    let c = -(p.mu * p.lambda).powi(2) / p.kappa + 4.0 * p.alpha * p.alpha;
    ScalarQuadratic::new(-p.kappa, -2.0 * p.lambda, c, StabilityForm::Covariance)
}

/// One first-order estimator branch `ẋ = −pole·x + gain·θ`, run in its own
/// time direction, entering the final estimate with `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub gain: f64,
    pub pole: f64,
    pub weight: f64,
}

/// Every scheme as a weighted sum of a forward and a backward branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStructure {
    pub forward: Option<Branch>,
    pub backward: Option<Branch>,
}

/// Steady-state structure of a scheme designed at `p` (the nominal model).
///
/// The RTS smoother is represented by its two-filter equivalent, which
/// matches it exactly at the design point.
pub fn filter_structure(scheme: Scheme, p: &ModelParams, sign: RobustSign) -> FilterStructure {
    let chi = chi_opt(p);
    let kf = kalman_cov_gain(p);
    let kb = backward_cov_gain(p);
    let s = kalman_rate(p);
    let lag = |weight| Branch {
        gain: chi,
        pole: chi,
        weight,
    };
    let fwd = |weight| Branch {
        gain: kf.gain,
        pole: p.lambda + kf.gain,
        weight,
    };
    let bwd = |weight| Branch {
        gain: kb.gain,
        pole: kb.gain - p.lambda,
        weight,
    };
    match scheme {
        Scheme::TwFilter => FilterStructure {
            forward: Some(lag(1.0)),
            backward: None,
        },
        Scheme::TwBackward => FilterStructure {
            forward: None,
            backward: Some(lag(1.0)),
        },
        Scheme::TwSmoother => {
            let c = tw_smoother_weights(p);
            FilterStructure {
                forward: Some(lag(c.k1)),
                backward: Some(lag(c.k2)),
            }
        }
        Scheme::Kalman => FilterStructure {
            forward: Some(fwd(1.0)),
            backward: None,
        },
        Scheme::InfoBackward => FilterStructure {
            forward: None,
            backward: Some(bwd(1.0)),
        },
        Scheme::Rts | Scheme::TwoFilter => {
            let w1 = kb.cov / (kf.cov + kb.cov);
            debug_assert!((p.lambda + kf.gain - s).abs() <= 1e-9 * s);
            FilterStructure {
                forward: Some(fwd(w1)),
                backward: Some(bwd(1.0 - w1)),
            }
        }
        Scheme::Robust => {
            let g = robust_riccati(p);
            let total = g.x + g.y;
            // The backward branch is the ellipse-centre filter ξ/Y as driven
            // with +θ; the negative convention negates ξ, which negates both
            // its drive and its sign in the output.
            let bw = match sign {
                RobustSign::Positive => -g.y / total,
                RobustSign::Negative => g.y / total,
            };
            FilterStructure {
                forward: Some(Branch {
                    gain: g.forward_gain(p),
                    pole: g.l,
                    weight: g.x / total,
                }),
                backward: Some(Branch {
                    gain: g.backward_gain(p),
                    pole: g.l,
                    weight: bw,
                }),
            }
        }
    }
}

/// Steady-state MSE of a fixed estimator driven by a truth process with
/// mean-reversion rate `lambda_true`.
pub fn structure_mse(
    st: &FilterStructure,
    p: &ModelParams,
    lambda_true: f64,
) -> Result<f64, AnalyticError> {
    if lambda_true.is_nan() || lambda_true <= 0.0 {
        return Err(AnalyticError::Nonstationary(lambda_true));
    }
    let r = adaptive_r(p);
    let f = st
        .forward
        .map(|b| pair_moments(lambda_true, p.kappa, r, b.gain, b.pole).map(|m| (b, m)))
        .transpose()?;
    let bk = st
        .backward
        .map(|b| pair_moments(lambda_true, p.kappa, r, b.gain, b.pole).map(|m| (b, m)))
        .transpose()?;
    let sigma = p.kappa / (2.0 * lambda_true);

    // e = φ − w_f·x_f − w_b·x_b; x_f and x_b are conditionally independent
    // given φ(t), so E[x_f x_b] = M_f M_b / Σ.
    let mut mse = sigma;
    if let Some((b, m)) = f {
        mse += -2.0 * b.weight * m.cross + b.weight * b.weight * m.est;
    }
    if let Some((b, m)) = bk {
        mse += -2.0 * b.weight * m.cross + b.weight * b.weight * m.est;
    }
    if let (Some((bf, mf)), Some((bb, mb))) = (f, bk) {
        mse += 2.0 * bf.weight * bb.weight * mf.cross * mb.cross / sigma;
    }
    Ok(mse)
}

/// Steady-state MSE of `scheme`, designed at the nominal `p`, when the truth
/// runs at `λ(1 − μΔ)`.
pub fn mismatch_mse(scheme: Scheme, p: &ModelParams, delta: f64) -> Result<f64, AnalyticError> {
    mismatch_mse_with_sign(scheme, p, delta, RobustSign::default())
}

pub fn mismatch_mse_with_sign(
    scheme: Scheme,
    p: &ModelParams,
    delta: f64,
    sign: RobustSign,
) -> Result<f64, AnalyticError> {
    let lambda_true = p.lambda * (1.0 - p.mu * delta);
    structure_mse(&filter_structure(scheme, p, sign), p, lambda_true)
}

/// Analytic MSE of `scheme` at `p`, including any `Δ` mismatch in `p`.
///
/// Without mismatch the closed forms are used, which stay valid at λ = 0.
pub fn scheme_covariance(scheme: Scheme, p: &ModelParams) -> Result<f64, AnalyticError> {
    scheme_covariance_with_sign(scheme, p, RobustSign::default())
}

pub fn scheme_covariance_with_sign(
    scheme: Scheme,
    p: &ModelParams,
    sign: RobustSign,
) -> Result<f64, AnalyticError> {
    if p.mu * p.delta != 0.0 {
        return mismatch_mse_with_sign(scheme, p, p.delta, sign);
    }
    Ok(match scheme {
        Scheme::TwFilter => tw_forward_cov(p),
        Scheme::TwBackward => tw_backward_cov(p),
        Scheme::TwSmoother => tw_smoothed_cov(p),
        Scheme::Kalman => kalman_cov_gain(p).cov,
        Scheme::InfoBackward => backward_cov_gain(p).cov,
        Scheme::Rts | Scheme::TwoFilter => rts_cov_gain(p).cov,
        Scheme::Robust if (p.mu == 0.0 || p.lambda == 0.0) && sign == RobustSign::Negative => {
            rts_cov_gain(p).cov
        }
        Scheme::Robust => mismatch_mse_with_sign(scheme, p, 0.0, sign)?,
    })
}

/// Gains resolved for one scheme, with its nominal steady covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeGains {
    pub scheme: Scheme,
    pub gains: GainSet,
    pub covariance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainSet {
    /// Reference low-pass bandwidth and the forward smoothing weight.
    Lag {
        chi: f64,
        k1: f64,
    },
    Optimal {
        k_f: f64,
        k_b: f64,
        smoother_gain: f64,
        p_f: f64,
        p_b: f64,
    },
    Robust(RobustGains),
}

pub fn scheme_gains(scheme: Scheme, p: &ModelParams) -> Result<SchemeGains, AnalyticError> {
    let gains = match scheme {
        Scheme::TwFilter | Scheme::TwBackward | Scheme::TwSmoother => {
            // Estimators run at the configured χ, smoothing weights at χ_opt.
            GainSet::Lag {
                chi: p.chi(),
                k1: tw_smoother_weights(p).k1,
            }
        }
        Scheme::Kalman | Scheme::InfoBackward | Scheme::Rts | Scheme::TwoFilter => {
            let f = kalman_cov_gain(p);
            let b = backward_cov_gain(p);
            GainSet::Optimal {
                k_f: f.gain,
                k_b: b.gain,
                smoother_gain: rts_cov_gain(p).gain,
                p_f: f.cov,
                p_b: b.cov,
            }
        }
        Scheme::Robust => GainSet::Robust(robust_riccati(p)),
    };
    Ok(SchemeGains {
        scheme,
        gains,
        covariance: scheme_covariance(scheme, p)?,
    })
}

/// One quantity computed by a closed form and by an independent solver route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRoute {
    pub name: &'static str,
    pub closed_form: f64,
    pub solver: f64,
}

impl DualRoute {
    pub fn relative_error(&self) -> f64 {
        let scale = self.closed_form.abs().max(self.solver.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.closed_form - self.solver).abs() / scale
        }
    }
}

/// Every closed-form covariance paired with its solver route.
///
/// Lyapunov routes need a stationary truth, so λ > 0 is required.
pub fn dual_routes(p: &ModelParams) -> Result<Vec<DualRoute>, AnalyticError> {
    if p.lambda <= 0.0 {
        return Err(AnalyticError::NeedsPositiveLambda("dual_routes"));
    }
    let chi = p.chi();
    let tw = tw_moments(p)?;
    let sigma_f = tw.forward.error_cov();
    let sigma_b = tw.backward.error_cov();
    let sigma_fb = tw.cross_cov();
    let kf = kalman_cov_gain(p);
    let kb = backward_cov_gain(p);
    let p_f_root = solvers::stabilizing_root(&kalman_riccati(p))?;
    let p_b_root = solvers::stabilizing_root(&backward_riccati(p))?;
    let r = adaptive_r(p);
    let kalman_lyap = pair_moments(p.lambda, p.kappa, r, kf.gain, p.lambda + kf.gain)?;
    let info_lyap = pair_moments(p.lambda, p.kappa, r, kb.gain, kb.gain - p.lambda)?;
    let g = robust_riccati(p);

    let route = |name, closed_form, solver| DualRoute {
        name,
        closed_form,
        solver,
    };
    Ok(vec![
        route(
            "sigma2_dual",
            tw_filter_cov(p, chi),
            tw_filter_cov_lyapunov(p, chi)?,
        ),
        route("sigma_f2", tw_forward_cov(p), sigma_f),
        route("sigma_b2", tw_backward_cov(p), sigma_b),
        route("sigma_fb2", tw_cross_cov(p), sigma_fb),
        route(
            "sigma_s2",
            tw_smoothed_cov(p),
            combine_unbiased(sigma_f, sigma_b, sigma_fb)?.mse,
        ),
        route(
            "p_sql",
            sql_ou(p),
            solvers::stabilizing_root(&sql_riccati(p))?,
        ),
        route("p_f", kf.cov, p_f_root),
        route("p_f_lyapunov", kf.cov, kalman_lyap.error_cov()),
        route(
            "p_rts",
            rts_cov_gain(p).cov,
            rts_riccati_solution(p, p_f_root),
        ),
        route("p_rts_two_filter", rts_cov_gain(p).cov, {
            let e12 = error_cross(&kalman_lyap, &info_lyap);
            combine_unbiased(kalman_lyap.error_cov(), info_lyap.error_cov(), e12)?.mse
        }),
        route("p_b", kb.cov, p_b_root),
        route("p_b_lyapunov", kb.cov, info_lyap.error_cov()),
        route(
            "x",
            g.x,
            solvers::stabilizing_root(&robust_forward_riccati(p))?,
        ),
        route(
            "y",
            g.y,
            solvers::stabilizing_root(&robust_backward_riccati(p))?,
        ),
    ])
}

/// `E[(φ − φ̂_f)(φ − φ̂_b)]` for the forward/backward Kalman pair at the
/// design point, assembled from the Lyapunov entries.
pub fn kalman_pair_cross_cov(p: &ModelParams) -> Result<f64, AnalyticError> {
    if p.lambda <= 0.0 {
        return Err(AnalyticError::NeedsPositiveLambda("kalman_pair_cross_cov"));
    }
    let r = adaptive_r(p);
    let kf = kalman_cov_gain(p);
    let kb = backward_cov_gain(p);
    let f = pair_moments(p.lambda, p.kappa, r, kf.gain, p.lambda + kf.gain)?;
    let b = pair_moments(p.lambda, p.kappa, r, kb.gain, kb.gain - p.lambda)?;
    Ok(error_cross(&f, &b))
}

/// Every closed-form value for `p`, with gains, roots and weights.
pub fn covariance_report(p: &ModelParams) -> Result<CovarianceReport, AnalyticError> {
    let schemes = Scheme::ALL
        .iter()
        .map(|&s| scheme_covariance(s, p).map(|v| (s, v)))
        .collect::<Result<Vec<_>, _>>()?;
    let kf = kalman_cov_gain(p);
    let kb = backward_cov_gain(p);
    let rts = rts_cov_gain(p);
    let g = robust_riccati(p);
    let tw = tw_smoother_weights(p);
    let chi = p.chi();
    let mut aux: Vec<(String, f64)> = vec![
        ("chi".into(), chi),
        ("chi_opt".into(), chi_opt(p)),
        ("p_sql".into(), sql_ou(p)),
        ("sigma2_dual".into(), tw_filter_cov(p, chi)),
        ("sigma_f2".into(), tw_forward_cov(p)),
        ("sigma_b2".into(), tw_backward_cov(p)),
        ("sigma_fb2".into(), tw_cross_cov(p)),
        ("sigma_s2".into(), tw_smoothed_cov(p)),
        ("k1_tw".into(), tw.k1),
        ("k2_tw".into(), tw.k2),
        ("p_f".into(), kf.cov),
        ("k_f".into(), kf.gain),
        ("p_b".into(), kb.cov),
        ("k_b".into(), kb.gain),
        ("p_rts".into(), rts.cov),
        ("f_rts".into(), rts.gain),
        ("k1_rts".into(), kb.cov / (kf.cov + kb.cov)),
        ("k2_rts".into(), kf.cov / (kf.cov + kb.cov)),
        ("l".into(), g.l),
        ("x".into(), g.x),
        ("y".into(), g.y),
    ];
    if p.lambda > 0.0 {
        let tw_m = tw_moments(p)?;
        let dual = pair_moments(p.lambda, p.kappa, dual_r(p), chi, chi)?;
        aux.extend([
            ("Sigma".into(), tw_m.forward.sigma),
            ("M_f".into(), tw_m.forward.cross),
            ("N_f".into(), tw_m.forward.est),
            ("M_b".into(), tw_m.backward.cross),
            ("N_b".into(), tw_m.backward.est),
            ("P1".into(), dual.sigma),
            ("P2".into(), dual.cross),
            ("P3".into(), dual.est),
        ]);
    }
    Ok(CovarianceReport {
        params: *p,
        schemes,
        auxiliary: aux,
    })
}

/// Closed-form λ → 0 value of a scheme's covariance.
pub fn lambda_zero_limit(scheme: Scheme, p: &ModelParams) -> f64 {
    let p0 = ModelParams {
        lambda: 0.0,
        mu: 0.0,
        delta: 0.0,
        ..*p
    };
    scheme_covariance(scheme, &p0).expect("closed forms are total at lambda = 0")
}
