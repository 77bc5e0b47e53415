//! Parameter and series types shared by every other module.
//!
//! All rates are in 1/time against a single time base and all phases are in
//! radians. [`ModelParams::validate`] is the only gate: everything downstream
//! assumes validated parameters.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical and estimator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mean-reversion rate λ of the phase process.
    pub lambda: f64,
    /// Inverse coherence time κ (process-noise power).
    pub kappa: f64,
    /// Field amplitude |α|.
    pub alpha: f64,
    /// Reference low-pass bandwidth χ. `None` selects `2|α|√κ`.
    pub chi: Option<f64>,
    /// Uncertainty level μ in `[0, 1)`.
    pub mu: f64,
    /// Uncertainty realisation Δ in `[-1, 1]`.
    pub delta: f64,
    /// Total simulated time T.
    pub horizon: f64,
    /// Integration step Δt.
    pub dt: f64,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            kappa: 1.0,
            alpha: 1.0,
            chi: None,
            mu: 0.0,
            delta: 0.0,
            horizon: 100.0,
            dt: 1e-3,
            seed: 0,
        }
    }
}

/// A single violated parameter bound.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field} must {bound} (got {value})")]
pub struct ParamError {
    pub field: &'static str,
    pub bound: &'static str,
    pub value: f64,
}

/// Every bound violated by a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamErrors(pub Vec<ParamError>);

impl fmt::Display for ParamErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParamErrors {}

impl ParamErrors {
    pub fn fields(&self) -> Vec<&'static str> {
        self.0.iter().map(|e| e.field).collect()
    }
}

impl ModelParams {
    /// Checks every bound and returns the parameters unchanged when all hold.
    pub fn validate(self) -> Result<Self, ParamErrors> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &'static str, bound: &'static str, value: f64| {
            if !ok {
                errs.push(ParamError {
                    field,
                    bound,
                    value,
                });
            }
        };
        // `!(x > 0)` style comparisons also reject NaN.
        check(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "lambda",
            "be >= 0 and finite",
            self.lambda,
        );
        check(
            self.kappa > 0.0 && self.kappa.is_finite(),
            "kappa",
            "be > 0",
            self.kappa,
        );
        check(
            self.alpha > 0.0 && self.alpha.is_finite(),
            "alpha",
            "be > 0",
            self.alpha,
        );
        if let Some(chi) = self.chi {
            check(chi > 0.0 && chi.is_finite(), "chi", "be > 0", chi);
        }
        check(
            (0.0..1.0).contains(&self.mu),
            "mu",
            "satisfy 0 ≤ mu < 1",
            self.mu,
        );
        check(
            self.delta.abs() <= 1.0,
            "delta",
            "satisfy |delta| ≤ 1",
            self.delta,
        );
        check(
            self.dt > 0.0 && self.dt.is_finite(),
            "dt",
            "be > 0",
            self.dt,
        );
        check(
            self.horizon.is_finite() && self.horizon >= 10.0 * self.dt,
            "horizon",
            "be ≥ 10·dt",
            self.horizon,
        );
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ParamErrors(errs))
        }
    }

    /// Reference-filter bandwidth, defaulting to the λ→0 optimum.
    pub fn chi(&self) -> f64 {
        self.chi.unwrap_or_else(|| crate::analytic::chi_opt(self))
    }

    /// Mean-reversion rate seen by the true process, `λ(1 − μΔ)`.
    pub fn lambda_true(&self) -> f64 {
        self.lambda * (1.0 - self.mu * self.delta)
    }

    /// Number of grid points, `floor(T/Δt) + 1`.
    pub fn steps(&self) -> usize {
        // Tolerate T/Δt landing a hair below an integer.
        (self.horizon / self.dt * (1.0 + 1e-12)).floor() as usize + 1
    }

    /// Ten time constants of the slowest estimator mode, in samples.
    pub fn default_burn_in(&self) -> usize {
        let s = (self.lambda * self.lambda + 4.0 * self.kappa * self.alpha * self.alpha).sqrt();
        let l = crate::analytic::robust_riccati(self).l;
        let slowest = s.min(self.chi()).min(l);
        (10.0 / slowest / self.dt).ceil() as usize
    }
}

/// Uniformly sampled true phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Measurement noise model attached to a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseConvention {
    /// Adaptive homodyne: per-sample variance `1/(4|α|²Δt)`.
    LinearizedHomodyne,
    /// Linearised dual homodyne: per-sample variance `1/(2|α|²Δt)`.
    DualHomodyne,
    /// Arctangent of the two quadrature photocurrents, wrapped to (−π, π].
    DualHomodyneNonlinear,
}

impl NoiseConvention {
    pub fn name(self) -> &'static str {
        match self {
            Self::LinearizedHomodyne => "linearized-homodyne",
            Self::DualHomodyne => "dual-homodyne",
            Self::DualHomodyneNonlinear => "dual-homodyne-nonlinear",
        }
    }

    /// Measurement-noise spectral density R of the linear conventions.
    pub fn noise_density(self, alpha: f64) -> Option<f64> {
        match self {
            Self::LinearizedHomodyne => Some(1.0 / (4.0 * alpha * alpha)),
            Self::DualHomodyne => Some(1.0 / (2.0 * alpha * alpha)),
            Self::DualHomodyneNonlinear => None,
        }
    }
}

impl std::str::FromStr for NoiseConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linearized-homodyne" => Ok(Self::LinearizedHomodyne),
            "dual-homodyne" => Ok(Self::DualHomodyne),
            "dual-homodyne-nonlinear" => Ok(Self::DualHomodyneNonlinear),
            other => Err(format!("unknown noise convention '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub dt: f64,
    pub values: Vec<f64>,
    pub convention: NoiseConvention,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Estimation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// First-order low-pass χ/(s+χ) run forward in time.
    TwFilter,
    /// The same low-pass run in reverse time.
    TwBackward,
    /// Unbiased combination of the two low-pass passes.
    TwSmoother,
    Kalman,
    /// Backward-time Kalman filter.
    InfoBackward,
    Rts,
    /// Mayne-Fraser combination of the forward and backward Kalman filters.
    TwoFilter,
    /// IQC robust fixed-interval smoother.
    Robust,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::TwFilter,
        Scheme::TwBackward,
        Scheme::TwSmoother,
        Scheme::Kalman,
        Scheme::InfoBackward,
        Scheme::Rts,
        Scheme::TwoFilter,
        Scheme::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TwFilter => "tw-filter",
            Scheme::TwBackward => "tw-backward",
            Scheme::TwSmoother => "tw-smoother",
            Scheme::Kalman => "kalman",
            Scheme::InfoBackward => "info-backward",
            Scheme::Rts => "rts",
            Scheme::TwoFilter => "two-filter",
            Scheme::Robust => "robust",
        }
    }

    /// Smoothers and backward passes carry terminal transients too.
    pub fn uses_future(self) -> bool {
        !matches!(self, Scheme::TwFilter | Scheme::Kalman)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

/// Sign of the measurement drive of the reverse-time ξ recursion in the
/// robust smoother.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustSign {
    /// ξ driven by `+4|α|²θ`, output `(η − ξ)/(X + Y)`.
    Positive,
    /// ξ driven by `−4|α|²θ`. The combination weights then sum to one.
    #[default]
    Negative,
}

impl RobustSign {
    pub fn name(self) -> &'static str {
        match self {
            RobustSign::Positive => "positive",
            RobustSign::Negative => "negative",
        }
    }

    /// Multiplier on the ξ measurement drive.
    pub fn drive(self) -> f64 {
        match self {
            RobustSign::Positive => 1.0,
            RobustSign::Negative => -1.0,
        }
    }
}

impl std::str::FromStr for RobustSign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Self::Positive),
            "negative" => Ok(Self::Negative),
            other => Err(format!("unknown robust sign convention '{other}'")),
        }
    }
}

/// Output of one estimator over a measurement record.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub scheme: Scheme,
    pub dt: f64,
    pub values: Vec<f64>,
    /// Samples excluded from steady-state statistics at the start, and at the
    /// end as well for schemes that look ahead.
    pub burn_in: usize,
}

impl EstimateSeries {
    /// Index range used for steady-state statistics.
    pub fn interior(&self) -> std::ops::Range<usize> {
        let n = self.values.len();
        let tail = if self.scheme.uses_future() {
            self.burn_in
        } else {
            0
        };
        let start = self.burn_in.min(n);
        let end = n.saturating_sub(tail).max(start);
        start..end
    }
}

/// Analytic steady-state quantities for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub params: ModelParams,
    /// Error covariance per scheme, in the order of [`Scheme::ALL`].
    pub schemes: Vec<(Scheme, f64)>,
    /// Named auxiliary values: gains, Riccati roots, weights, cross terms.
    pub auxiliary: Vec<(String, f64)>,
}

impl CovarianceReport {
    pub fn scheme(&self, scheme: Scheme) -> Option<f64> {
        self.schemes
            .iter()
            .find(|(s, _)| *s == scheme)
            .map(|(_, v)| *v)
    }

    pub fn aux(&self, name: &str) -> Option<f64> {
        self.auxiliary
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelParams {
        ModelParams {
            horizon: 100.0,
            ..ModelParams::default()
        }
    }

    #[test]
    fn accepts_unit_params() {
        assert_eq!(unit().validate(), Ok(unit()));
    }

    #[test]
    fn rejects_negative_kappa() {
        let err = ModelParams {
            kappa: -1.0,
            ..unit()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err.fields(), vec!["kappa"]);
        assert!(err.to_string().contains("kappa must be > 0"));
    }

    #[test]
    fn rejects_mu_of_one() {
        let err = ModelParams { mu: 1.0, ..unit() }.validate().unwrap_err();
        assert!(
            err.to_string().contains("mu must satisfy 0 ≤ mu < 1"),
            "{err}"
        );
    }

    #[test]
    fn reports_every_violation() {
        let p = ModelParams {
            kappa: 0.0,
            alpha: -2.0,
            delta: 1.5,
            horizon: 0.001,
            ..unit()
        };
        let err = p.validate().unwrap_err();
        assert_eq!(err.fields(), vec!["kappa", "alpha", "delta", "horizon"]);
    }

    #[test]
    fn rejects_nan() {
        let err = ModelParams {
            lambda: f64::NAN,
            dt: f64::NAN,
            ..unit()
        }
        .validate()
        .unwrap_err();
        assert!(err.fields().contains(&"lambda"));
        assert!(err.fields().contains(&"dt"));
    }

    #[test]
    fn lambda_zero_is_admitted() {
        assert!(ModelParams {
            lambda: 0.0,
            ..unit()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn grid_length() {
        let p = ModelParams {
            horizon: 1.0,
            dt: 1e-3,
            ..unit()
        };
        assert_eq!(p.steps(), 1001);
        let p = ModelParams {
            horizon: 0.3,
            dt: 0.1,
            ..unit()
        };
        assert_eq!(p.steps(), 4);
    }

    #[test]
    fn burn_in_uses_slowest_mode() {
        // chi_opt = 2 is slower than sqrt(5) at unit params.
        assert_eq!(unit().default_burn_in(), 5000);
    }

    #[test]
    fn interior_window() {
        let est = EstimateSeries {
            scheme: Scheme::Rts,
            dt: 1.0,
            values: vec![0.0; 10],
            burn_in: 3,
        };
        assert_eq!(est.interior(), 3..7);
        let est = EstimateSeries {
            scheme: Scheme::Kalman,
            ..est
        };
        assert_eq!(est.interior(), 3..10);
        let est = EstimateSeries {
            scheme: Scheme::Rts,
            burn_in: 6,
            ..est
        };
        assert!(est.interior().is_empty());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>(), Ok(s));
        }
        assert!("bogus".parse::<Scheme>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn validation_is_total(
                lambda in prop::num::f64::ANY,
                kappa in prop::num::f64::ANY,
                alpha in prop::num::f64::ANY,
                mu in prop::num::f64::ANY,
                delta in prop::num::f64::ANY,
                dt in prop::num::f64::ANY,
                horizon in prop::num::f64::ANY,
            ) {
                let p = ModelParams { lambda, kappa, alpha, chi: None, mu, delta, horizon, dt, seed: 1 };
                match p.validate() {
                    Ok(v) => {
                        prop_assert!(v.kappa > 0.0 && v.alpha > 0.0 && v.dt > 0.0);
                        prop_assert!(v.horizon >= 10.0 * v.dt);
                        prop_assert!((0.0..1.0).contains(&v.mu) && v.delta.abs() <= 1.0);
                    }
                    Err(e) => prop_assert!(!e.0.is_empty()),
                }
            }
        }
    }
}
