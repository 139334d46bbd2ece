//! Historical velocity priors and the simulated ground-truth driver.
//!
//! The driver advances along its (hidden) chosen path at the historical speed
//! plus a deviation, and emits noisy arc-length / speed / GPS measurements at
//! a fixed rate. `DriverTruth` is owned and stepped by the mission loop only;
//! `Measurement` values are immutable.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{PathMap, Point};

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrafficError {
    #[error("historical profile must stay positive (min over horizon: {0})")]
    NonPositiveProfile(f64),
    #[error("table profile needs equally many times and speeds, strictly increasing times")]
    MalformedTable,
    #[error("t = {t} outside table range [{lo}, {hi}]")]
    Extrapolation { t: f64, lo: f64, hi: f64 },
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
}

/// Mean historical speed along a path as a function of time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoricalProfile {
    Constant { speed: f64 },
    /// `mean + amplitude * sin(t / time_scale)`.
    Sinusoid { mean: f64, amplitude: f64, time_scale: f64 },
    /// Sampled table with linear interpolation; no extrapolation.
    Table { times: Vec<f64>, speeds: Vec<f64> },
}

impl HistoricalProfile {
    pub fn validate(&self) -> Result<(), TrafficError> {
        match self {
            Self::Constant { speed } => {
                if *speed <= 0.0 {
                    return Err(TrafficError::NonPositiveProfile(*speed));
                }
            }
            Self::Sinusoid { mean, amplitude, time_scale } => {
                if *amplitude < 0.0 || *time_scale <= 0.0 {
                    return Err(TrafficError::MalformedTable);
                }
                if mean - amplitude <= 0.0 {
                    return Err(TrafficError::NonPositiveProfile(mean - amplitude));
                }
            }
            Self::Table { times, speeds } => {
                if times.len() != speeds.len()
                    || times.len() < 2
                    || times.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(TrafficError::MalformedTable);
                }
                let min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
                if min <= 0.0 {
                    return Err(TrafficError::NonPositiveProfile(min));
                }
            }
        }
        Ok(())
    }

    /// Historical mean speed at time `t`.
    pub fn speed_at(&self, t: f64) -> Result<f64, TrafficError> {
        match self {
            Self::Constant { speed } => Ok(*speed),
            Self::Sinusoid { mean, amplitude, time_scale } => {
                Ok(mean + amplitude * (t / time_scale).sin())
            }
            Self::Table { times, speeds } => {
                let (lo, hi) = (times[0], *times.last().expect("validated"));
                if t < lo || t > hi {
                    return Err(TrafficError::Extrapolation { t, lo, hi });
                }
                let k = match times.binary_search_by(|x| x.total_cmp(&t)) {
                    Ok(exact) => return Ok(speeds[exact]),
                    Err(upper) => upper - 1,
                };
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                Ok(speeds[k] + s * (speeds[k + 1] - speeds[k]))
            }
        }
    }
}

/// Convenience wrapper matching the operation-style API.
pub fn historical_speed(profile: &HistoricalProfile, t: f64) -> Result<f64, TrafficError> {
    profile.speed_at(t)
}

/// True driver deviation as a function of the historical speed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviationRule {
    Zero,
    Constant { offset: f64 },
    /// `sign(hist_speed - center)`, zero exactly at the center.
    Sign { center: f64 },
    /// `tanh((hist_speed - center) / scale)`, a smooth sign.
    Tanh { center: f64, scale: f64 },
}

impl DeviationRule {
    pub fn deviation(&self, hist_speed: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { offset } => *offset,
            Self::Sign { center } => {
                let x = hist_speed - center;
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::Tanh { center, scale } => ((hist_speed - center) / scale).tanh(),
        }
    }
}

/// Ground-truth driver state. The chosen path is hidden from the planner
/// until pruning reveals it.
#[derive(Debug, Clone)]
pub struct DriverTruth {
    pub chosen_path: usize,
    pub deviation: DeviationRule,
    /// Current true arc length along the chosen path (m).
    pub theta: f64,
    /// Current time (s).
    pub t: f64,
    /// Measurement noise, speed channel (m/s).
    pub sigma_speed: f64,
    /// Measurement noise, position channels (m).
    pub sigma_pos: f64,
}

/// One noisy driver observation.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub t: f64,
    /// Noisy arc length (m).
    pub theta_meas: f64,
    /// Noisy path speed (m/s).
    pub speed_meas: f64,
    /// Historical mean speed at the measurement time (m/s).
    pub hist_speed: f64,
    /// Noisy planar GPS fix, used for reachability pruning.
    pub gps: Point,
}

impl Measurement {
    /// Observed deviation sample: measured speed minus the historical prior.
    pub fn deviation_observation(&self) -> f64 {
        self.speed_meas - self.hist_speed
    }
}

/// Maximum integration substep for the driver dynamics (s).
const MAX_SUBSTEP: f64 = 0.1;

/// Advance the driver by `dt` and emit a measurement at the new time.
///
/// The true speed `hist + d(hist)` is integrated with the trapezoid rule at
/// substeps of at most 0.1 s. Gaussian noise of the configured sigmas is
/// added to every measurement channel; a fixed RNG seed reproduces the
/// measurement stream bitwise.
pub fn step_driver<R: Rng>(
    truth: &DriverTruth,
    profile: &HistoricalProfile,
    map: &PathMap,
    dt: f64,
    rng: &mut R,
) -> Result<(DriverTruth, Measurement), TrafficError> {
    if dt <= 0.0 {
        return Err(TrafficError::NonPositiveStep(dt));
    }
    let speed = |t: f64| -> Result<f64, TrafficError> {
        let hist = profile.speed_at(t)?;
        Ok(hist + truth.deviation.deviation(hist))
    };

    let substeps = (dt / MAX_SUBSTEP).ceil() as usize;
    let h = dt / substeps as f64;
    let mut theta = truth.theta;
    let mut prev = speed(truth.t)?;
    for k in 1..=substeps {
        let next = speed(truth.t + h * k as f64)?;
        theta += 0.5 * h * (prev + next);
        prev = next;
    }

    let t = truth.t + dt;
    let hist = profile.speed_at(t)?;
    let true_speed = hist + truth.deviation.deviation(hist);
    let path = map
        .path(truth.chosen_path)
        .expect("driver path exists in map");
    let (true_point, _) = path.evaluate_clamped(theta);

    // Fixed draw order keeps streams reproducible: speed, theta, gps x, gps y.
    let speed_noise = Normal::new(0.0, truth.sigma_speed).expect("sigma >= 0");
    let pos_noise = Normal::new(0.0, truth.sigma_pos).expect("sigma >= 0");
    let measurement = Measurement {
        t,
        speed_meas: true_speed + speed_noise.sample(rng),
        theta_meas: theta + pos_noise.sample(rng),
        hist_speed: hist,
        gps: Point::new(
            true_point.x + pos_noise.sample(rng),
            true_point.y + pos_noise.sample(rng),
        ),
    };

    let next = DriverTruth {
        theta,
        t,
        ..truth.clone()
    };
    Ok((next, measurement))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Path;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn long_map() -> PathMap {
        let p = Path::new(1, vec![Point::new(0.0, 0.0), Point::new(1000.0, 0.0)]).unwrap();
        PathMap::new(vec![p], Point::new(0.0, 0.0), Point::new(0.0, 0.0)).unwrap()
    }

    fn truth(deviation: DeviationRule, sigma: f64) -> DriverTruth {
        DriverTruth {
            chosen_path: 1,
            deviation,
            theta: 0.0,
            t: 0.0,
            sigma_speed: sigma,
            sigma_pos: sigma,
        }
    }

    #[test]
    fn sinusoid_profile_values() {
        let p = HistoricalProfile::Sinusoid { mean: 8.0, amplitude: 1.0, time_scale: 10.0 };
        assert_eq!(p.speed_at(0.0).unwrap(), 8.0);
        assert!((p.speed_at(5.0 * PI).unwrap() - 9.0).abs() <= 1e-12);
    }

    #[test]
    fn constant_profile_is_constant() {
        let p = HistoricalProfile::Constant { speed: 8.0 };
        for t in [0.0, 13.7, 900.0] {
            assert_eq!(p.speed_at(t).unwrap(), 8.0);
        }
    }

    #[test]
    fn table_interpolates_and_refuses_extrapolation() {
        let p = HistoricalProfile::Table {
            times: vec![0.0, 10.0, 20.0],
            speeds: vec![5.0, 7.0, 6.0],
        };
        p.validate().unwrap();
        assert_eq!(p.speed_at(5.0).unwrap(), 6.0);
        assert_eq!(p.speed_at(10.0).unwrap(), 7.0);
        assert!(matches!(
            p.speed_at(21.0),
            Err(TrafficError::Extrapolation { .. })
        ));
    }

    #[test]
    fn profile_positivity_validated() {
        assert!(HistoricalProfile::Sinusoid { mean: 1.0, amplitude: 2.0, time_scale: 10.0 }
            .validate()
            .is_err());
        assert!(HistoricalProfile::Constant { speed: 0.0 }.validate().is_err());
    }

    #[test]
    fn constant_speed_advances_exactly() {
        let map = long_map();
        let profile = HistoricalProfile::Constant { speed: 8.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, m) =
            step_driver(&truth(DeviationRule::Zero, 0.0), &profile, &map, 1.0, &mut rng).unwrap();
        assert!((next.theta - 8.0).abs() <= 1e-12);
        assert_eq!(m.speed_meas, 8.0);
        assert_eq!(m.hist_speed, 8.0);
    }

    #[test]
    fn sign_deviation_matches_closed_form() {
        // int_0^{10pi} (8 + sin(t/10)) dt = 80 pi + 20; the sign deviation
        // contributes +1 on (0, 10 pi), i.e. another 10 pi.
        let map = long_map();
        let profile = HistoricalProfile::Sinusoid { mean: 8.0, amplitude: 1.0, time_scale: 10.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = truth(DeviationRule::Sign { center: 8.0 }, 0.0);
        let horizon = 10.0 * PI;
        let steps = 100;
        for _ in 0..steps {
            let (next, _) = step_driver(&d, &profile, &map, horizon / steps as f64, &mut rng).unwrap();
            d = next;
        }
        let expected = 80.0 * PI + 20.0 + 10.0 * PI;
        assert!(
            (d.theta - expected).abs() <= 0.2,
            "theta = {}, expected = {expected}",
            d.theta
        );
    }

    #[test]
    fn fixed_seed_reproduces_measurements_bitwise() {
        let map = long_map();
        let profile = HistoricalProfile::Sinusoid { mean: 8.0, amplitude: 1.0, time_scale: 10.0 };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut d = truth(DeviationRule::Sign { center: 8.0 }, 0.5);
            let mut stream = Vec::new();
            for _ in 0..50 {
                let (next, m) = step_driver(&d, &profile, &map, 0.1, &mut rng).unwrap();
                d = next;
                stream.push((m.t, m.theta_meas, m.speed_meas, m.gps.x, m.gps.y));
            }
            stream
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn noiseless_measurements_equal_truth() {
        let map = long_map();
        let profile = HistoricalProfile::Sinusoid { mean: 8.0, amplitude: 1.0, time_scale: 10.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = truth(DeviationRule::Zero, 0.0);
        for _ in 0..20 {
            let (next, m) = step_driver(&d, &profile, &map, 0.1, &mut rng).unwrap();
            assert_eq!(m.speed_meas, m.hist_speed);
            assert_eq!(m.theta_meas, next.theta);
            d = next;
        }
    }

    #[test]
    fn empirical_noise_variance_matches_sigma() {
        let map = long_map();
        let profile = HistoricalProfile::Constant { speed: 8.0 };
        let sigma = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut d = truth(DeviationRule::Zero, sigma);
        let mut sq_sum = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let (next, m) = step_driver(&d, &profile, &map, 0.1, &mut rng).unwrap();
            let err = m.speed_meas - 8.0;
            sq_sum += err * err;
            d = next;
        }
        let variance = sq_sum / n as f64;
        assert!(
            (variance - sigma * sigma).abs() <= 0.1 * sigma * sigma,
            "variance = {variance}"
        );
    }

    #[test]
    fn deviation_rules_shapes() {
        assert_eq!(DeviationRule::Sign { center: 8.0 }.deviation(8.0), 0.0);
        assert_eq!(DeviationRule::Sign { center: 8.0 }.deviation(8.3), 1.0);
        assert_eq!(DeviationRule::Sign { center: 8.0 }.deviation(7.7), -1.0);
        let smooth = DeviationRule::Tanh { center: 8.0, scale: 0.25 };
        assert!(smooth.deviation(9.0) > 0.99);
        assert!(smooth.deviation(7.0) < -0.99);
        assert_eq!(smooth.deviation(8.0), 0.0);
    }
}
