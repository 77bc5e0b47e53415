//! Ground-truth OU phase trajectories and measurement records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{MeasurementRecord, ModelParams, NoiseConvention, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulateError {
    #[error("convention {0} is not a linear additive-noise channel; use simulate_dual_homodyne_nonlinear")]
    UnsupportedConvention(&'static str),
}

/// Seeded Gaussian stream. Distinct `stream` indices under one master seed
/// are independent ChaCha streams; `(seed, stream)` always reproduces the
/// same sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            counter: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of Gaussian draws so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn normal(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(StandardNormal)
    }
}

/// Exact discretisation of `dφ = −λφ dt + √κ dW` on the grid of `p`.
///
/// The truth runs at `λ(1 − μΔ)`. With a positive rate the first sample is
/// drawn from the stationary law `N(0, κ/2λ)`; in the Wiener limit it is 0.
pub fn simulate_ou(p: &ModelParams, rng: &mut RngStream) -> Trajectory {
    let lambda = p.lambda_true();
    let phi0 = if lambda > 0.0 {
        (p.kappa / (2.0 * lambda)).sqrt() * rng.normal()
    } else {
        0.0
    };
    simulate_ou_from(p, phi0, rng)
}

/// Same recursion as [`simulate_ou`] from a given initial phase.
pub fn simulate_ou_from(p: &ModelParams, phi0: f64, rng: &mut RngStream) -> Trajectory {
    let n = p.steps();
    let lambda = p.lambda_true();
    let (decay, step_sd) = if lambda > 0.0 {
        // 1 − e^{−2λΔt} via expm1 to keep precision for small λΔt.
        let var = p.kappa * -(-2.0 * lambda * p.dt).exp_m1() / (2.0 * lambda);
        ((-lambda * p.dt).exp(), var.sqrt())
    } else {
        (1.0, (p.kappa * p.dt).sqrt())
    };
    let mut values = Vec::with_capacity(n);
    let mut phi = phi0;
    values.push(phi);
    for _ in 1..n {
        phi = decay * phi + step_sd * rng.normal();
        values.push(phi);
    }
    Trajectory {
        t0: 0.0,
        dt: p.dt,
        values,
    }
}

/// `θ_k = φ_k + n_k` with `n_k ~ N(0, R/Δt)`.
pub fn simulate_measurements(
    traj: &Trajectory,
    p: &ModelParams,
    convention: NoiseConvention,
    rng: &mut RngStream,
) -> Result<MeasurementRecord, SimulateError> {
    let r = convention
        .noise_density(p.alpha)
        .ok_or(SimulateError::UnsupportedConvention(convention.name()))?;
    let sd = (r / traj.dt).sqrt();
    let values = traj
        .values
        .iter()
        .map(|&phi| phi + sd * rng.normal())
        .collect();
    Ok(MeasurementRecord {
        dt: traj.dt,
        values,
        convention,
    })
}

/// Nonlinear dual-homodyne phase readings together with their first-order
/// linearisation, built from the same four noise draws per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHomodyneRecords {
    pub nonlinear: MeasurementRecord,
    pub linearized: MeasurementRecord,
}

/// Builds `ϑ = arg(2|α|cos φ + n3 − n4, 2|α|sin φ + n1 + n2)` and
/// `φ + (n1 + n2)/(2|α|)`, with each `n_i ~ N(0, 1/Δt)`.
pub fn simulate_dual_homodyne(
    traj: &Trajectory,
    p: &ModelParams,
    rng: &mut RngStream,
) -> DualHomodyneRecords {
    let sd = (1.0 / traj.dt).sqrt();
    let amp = 2.0 * p.alpha;
    // Each quadrature noise sum has standard deviation √2·sd.
    if amp < 3.0 * std::f64::consts::SQRT_2 * sd {
        log::warn!(
            "dual-homodyne denominator not bounded away from zero: 2|α| = {amp}, noise sd = {}",
            std::f64::consts::SQRT_2 * sd
        );
    }
    let n = traj.len();
    let mut nonlinear = Vec::with_capacity(n);
    let mut linearized = Vec::with_capacity(n);
    for &phi in &traj.values {
        let n1 = sd * rng.normal();
        let n2 = sd * rng.normal();
        let n3 = sd * rng.normal();
        let n4 = sd * rng.normal();
        // atan2 already returns (−π, π]; the common 1/√2 factor cancels.
        nonlinear.push((amp * phi.sin() + n1 + n2).atan2(amp * phi.cos() + n3 - n4));
        linearized.push(phi + (n1 + n2) / amp);
    }
    DualHomodyneRecords {
        nonlinear: MeasurementRecord {
            dt: traj.dt,
            values: nonlinear,
            convention: NoiseConvention::DualHomodyneNonlinear,
        },
        linearized: MeasurementRecord {
            dt: traj.dt,
            values: linearized,
            convention: NoiseConvention::DualHomodyne,
        },
    }
}

pub fn simulate_dual_homodyne_nonlinear(
    traj: &Trajectory,
    p: &ModelParams,
    rng: &mut RngStream,
) -> MeasurementRecord {
    simulate_dual_homodyne(traj, p, rng).nonlinear
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams {
            horizon: 10.0,
            ..ModelParams::default()
        }
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (
            m,
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, stream| {
            let mut r = RngStream::new(seed, stream);
            (0..8).map(|_| r.normal()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3, 5), draw(3, 5));
        assert_ne!(draw(3, 5), draw(3, 6));
        assert_ne!(draw(3, 5), draw(4, 5));
        let mut r = RngStream::new(1, 2);
        r.normal();
        r.normal();
        assert_eq!(r.counter(), 2);
    }

    #[test]
    fn independent_streams_are_uncorrelated() {
        let n = 200_000;
        let mut a = RngStream::new(9, 0);
        let mut b = RngStream::new(9, 1);
        let c: f64 = (0..n).map(|_| a.normal() * b.normal()).sum::<f64>() / n as f64;
        // Standard error of the product mean is 1/√n.
        assert!(c.abs() < 4.0 / (n as f64).sqrt(), "{c}");
    }

    #[test]
    fn grid_length_and_finiteness() {
        let p = params();
        let traj = simulate_ou(&p, &mut RngStream::new(0, 0));
        assert_eq!(traj.len(), 10_001);
        assert!(traj.values.iter().all(|v| v.is_finite()));
        let meas = simulate_measurements(
            &traj,
            &p,
            NoiseConvention::LinearizedHomodyne,
            &mut RngStream::new(0, 1),
        )
        .unwrap();
        assert_eq!(meas.len(), traj.len());
    }

    #[test]
    fn zero_noise_decays_deterministically() {
        let p = ModelParams {
            kappa: 1e-300,
            lambda: 2.0,
            ..params()
        };
        let traj = simulate_ou_from(&p, 1.0, &mut RngStream::new(0, 0));
        for (k, v) in traj.values.iter().enumerate().step_by(997) {
            let t = k as f64 * p.dt;
            assert!((v - (-p.lambda * t).exp()).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn wiener_increments() {
        let p = ModelParams {
            lambda: 0.0,
            kappa: 2.0,
            horizon: 200.0,
            ..params()
        };
        let traj = simulate_ou(&p, &mut RngStream::new(11, 0));
        assert_eq!(traj.values[0], 0.0);
        let inc: Vec<f64> = traj.values.windows(2).map(|w| w[1] - w[0]).collect();
        let (_, var) = mean_var(&inc);
        let expected = p.kappa * p.dt;
        // Sample variance SE is √(2/n)·σ².
        assert!((var - expected).abs() < 4.0 * (2.0 / inc.len() as f64).sqrt() * expected);
    }

    #[test]
    fn stationary_variance() {
        let p = ModelParams {
            lambda: 1.0,
            kappa: 1.0,
            horizon: 1000.0,
            dt: 1e-3,
            ..params()
        };
        // Many short independent runs keep samples near-independent.
        let trials = 2000;
        let mut draws = Vec::new();
        for i in 0..trials {
            let q = ModelParams { horizon: 5.0, ..p };
            let traj = simulate_ou(&q, &mut RngStream::new(5, i));
            draws.push(traj.values[0]);
            draws.push(*traj.values.last().unwrap());
        }
        let (_, var) = mean_var(&draws);
        let expected = 0.5;
        let se = (2.0 / draws.len() as f64).sqrt() * expected;
        assert!((var - expected).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn measurement_noise_variance() {
        let p = ModelParams {
            horizon: 1000.0,
            ..params()
        };
        let traj = Trajectory {
            t0: 0.0,
            dt: p.dt,
            values: vec![0.0; 1_000_001],
        };
        let lin = simulate_measurements(
            &traj,
            &p,
            NoiseConvention::LinearizedHomodyne,
            &mut RngStream::new(1, 0),
        )
        .unwrap();
        let dual = simulate_measurements(
            &traj,
            &p,
            NoiseConvention::DualHomodyne,
            &mut RngStream::new(1, 0),
        )
        .unwrap();
        let (_, v_lin) = mean_var(&lin.values);
        let (_, v_dual) = mean_var(&dual.values);
        let r_lin = 1.0 / (4.0 * p.dt);
        assert!((v_lin / r_lin - 1.0).abs() < 0.01);
        assert!((v_dual / (2.0 * r_lin) - 1.0).abs() < 0.01);
        // Same draws: the dual-homodyne record is exactly √2 × the other.
        assert!((dual.values[7] / lin.values[7] - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn huge_alpha_is_noiseless() {
        let p = ModelParams {
            alpha: 1e12,
            ..params()
        };
        let traj = simulate_ou(&p, &mut RngStream::new(0, 0));
        let meas = simulate_measurements(
            &traj,
            &p,
            NoiseConvention::LinearizedHomodyne,
            &mut RngStream::new(0, 1),
        )
        .unwrap();
        let err = meas
            .values
            .iter()
            .zip(&traj.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn nonlinear_convention_rejected_for_linear_channel() {
        let p = params();
        let traj = simulate_ou(&p, &mut RngStream::new(0, 0));
        let r = simulate_measurements(
            &traj,
            &p,
            NoiseConvention::DualHomodyneNonlinear,
            &mut RngStream::new(0, 1),
        );
        assert!(matches!(r, Err(SimulateError::UnsupportedConvention(_))));
    }

    #[test]
    fn nonlinear_without_noise_is_exact() {
        // Overwhelming amplitude drives the noise terms to zero.
        let p = ModelParams {
            alpha: 1e15,
            ..params()
        };
        let traj = Trajectory {
            t0: 0.0,
            dt: p.dt,
            values: vec![-3.0, -1.2, 0.0, 0.4, 1.5, 3.1],
        };
        let rec = simulate_dual_homodyne_nonlinear(&traj, &p, &mut RngStream::new(0, 0));
        for (a, b) in rec.values.iter().zip(&traj.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlinear_wraps() {
        let p = ModelParams {
            alpha: 1e15,
            ..params()
        };
        let traj = Trajectory {
            t0: 0.0,
            dt: p.dt,
            values: vec![4.0],
        };
        let rec = simulate_dual_homodyne_nonlinear(&traj, &p, &mut RngStream::new(0, 0));
        assert!((rec.values[0] - (4.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_small_angle_variance() {
        // 2|α| = 400 against a per-quadrature noise sd of √2·√(1/Δt) ≈ 4.5.
        let p = ModelParams {
            alpha: 200.0,
            dt: 1e-1,
            ..params()
        };
        let n = 400_000;
        let traj = Trajectory {
            t0: 0.0,
            dt: p.dt,
            values: vec![0.05; n],
        };
        let rec = simulate_dual_homodyne_nonlinear(&traj, &p, &mut RngStream::new(2, 0));
        let diffs: Vec<f64> = rec.values.iter().map(|v| v - 0.05).collect();
        let (_, var) = mean_var(&diffs);
        let expected = 1.0 / (2.0 * p.alpha * p.alpha * p.dt);
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn linearisation_error_shrinks() {
        let p = ModelParams {
            horizon: 10.0,
            ..params()
        };
        let traj = simulate_ou(&p, &mut RngStream::new(0, 0));
        let ms = |alpha: f64| {
            let q = ModelParams { alpha, ..p };
            let r = simulate_dual_homodyne(&traj, &q, &mut RngStream::new(0, 1));
            r.nonlinear
                .values
                .iter()
                .zip(&r.linearized.values)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / traj.len() as f64
        };
        assert!(ms(100.0) < ms(10.0));
    }
}
