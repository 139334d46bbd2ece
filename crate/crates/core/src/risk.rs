//! Decision-time risk: the go/abort gate.
//!
//! For every still-reachable path the propagated position uncertainty is
//! pushed through that path's plan into a distribution of extra fuel
//! E_e = E_r - (E1 + E2 + E3). The gate compares the worst per-path lower-tail
//! CVaR against the threshold kappa: the mission commits only if even the
//! tail expectation of the worst path leaves enough fuel.
//!
//! The mapping is a Gaussian approximation (required energy evaluated at the
//! center and both edges of the confidence interval); when the energy map is
//! detectably non-monotone across the interval, a seeded Monte Carlo
//! evaluation takes over.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Path, Point};
use crate::numerics::gaussian_cvar_lower;
use crate::planner::MissionPlan;
use crate::sampler::PathCandidate;

#[derive(Debug, Clone, thiserror::Error)]
pub enum RiskError {
    #[error("no active paths to assess")]
    NoActivePaths,
    #[error("gamma must lie in (0, 1], got {0}")]
    BadGamma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proceed,
    Abort,
}

/// Extra-fuel statistics of one path.
#[derive(Debug, Clone, Copy)]
pub struct PathRisk {
    pub path_id: usize,
    /// Mean extra fuel (J); -inf when the path has no feasible plan.
    pub extra_fuel_mean: f64,
    /// Extra-fuel spread (J).
    pub extra_fuel_sigma: f64,
    /// Lower-tail CVaR of extra fuel (J).
    pub cvar: f64,
    /// Decision risk: -cvar, so larger means riskier.
    pub rho_d: f64,
    /// Whether the Monte Carlo fallback was used.
    pub monte_carlo: bool,
}

#[derive(Debug, Clone)]
pub struct RiskReport {
    pub per_path: Vec<PathRisk>,
    pub gamma: f64,
    pub kappa: f64,
    pub worst_path: usize,
    pub verdict: Verdict,
}

impl RiskReport {
    pub fn max_rho_d(&self) -> f64 {
        self.per_path.iter().map(|p| p.rho_d).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest rho_d over paths other than `target`; -inf with one path.
    pub fn secondary_rho_d(&self, target: usize) -> f64 {
        self.per_path
            .iter()
            .filter(|p| p.path_id != target)
            .map(|p| p.rho_d)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Everything known about one path at decision time.
pub struct PathDecisionInput<'a> {
    pub path: &'a Path,
    pub candidate: PathCandidate,
    /// Plan for rendezvousing with this path's candidate; `None` when no
    /// feasible plan exists (prices the path at infinite risk).
    pub plan: Option<MissionPlan>,
}

/// Draws used by the Monte Carlo fallback.
const MC_DRAWS: usize = 10_000;

/// Required rendezvous-branch energy if the driver sits at arc length
/// `theta`, holding the plan's timing fixed.
fn required_energy(path: &Path, plan: &MissionPlan, theta: f64, m_a: f64, m_b: f64, alpha: f64) -> f64 {
    let (point, _) = path.evaluate_clamped(theta);
    let t2 = plan.durations[1];
    let t3 = plan.durations[2];
    let v2 = (point - plan.pnr).norm() / t2;
    let v3 = (plan.landing - point).norm() / t3;
    plan.energies[0] + m_a * t2 * (0.5 * v2 * v2 + alpha) + m_b * t3 * (0.5 * v3 * v3 + alpha)
}

/// Mean of the worst `gamma` fraction of `samples` (lower tail).
pub fn empirical_cvar_lower(samples: &mut [f64], gamma: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let k = ((gamma * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    samples[..k].iter().sum::<f64>() / k as f64
}

/// Assess the one-time go/abort decision across all active paths.
pub fn assess_decision_risk<R: Rng>(
    inputs: &[PathDecisionInput<'_>],
    available_energy: f64,
    m_a: f64,
    m_b: f64,
    alpha: f64,
    gamma: f64,
    kappa: f64,
    gamma_scale: f64,
    rng: &mut R,
) -> Result<RiskReport, RiskError> {
    if inputs.is_empty() {
        return Err(RiskError::NoActivePaths);
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(RiskError::BadGamma(gamma));
    }

    let per_path = inputs
        .iter()
        .map(|input| {
            assess_path(input, available_energy, m_a, m_b, alpha, gamma, gamma_scale, rng)
        })
        .collect::<Vec<_>>();

    let worst = per_path
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.rho_d.total_cmp(&b.1.rho_d))
        .map(|(i, _)| i)
        .expect("nonempty inputs");
    let verdict = if per_path[worst].rho_d <= kappa {
        Verdict::Proceed
    } else {
        Verdict::Abort
    };
    Ok(RiskReport {
        worst_path: per_path[worst].path_id,
        per_path,
        gamma,
        kappa,
        verdict,
    })
}

#[allow(clippy::too_many_arguments)]
fn assess_path<R: Rng>(
    input: &PathDecisionInput<'_>,
    available_energy: f64,
    m_a: f64,
    m_b: f64,
    alpha: f64,
    gamma: f64,
    gamma_scale: f64,
    rng: &mut R,
) -> PathRisk {
    let path_id = input.path.id();
    let Some(plan) = input.plan.as_ref() else {
        return PathRisk {
            path_id,
            extra_fuel_mean: f64::NEG_INFINITY,
            extra_fuel_sigma: 0.0,
            cvar: f64::NEG_INFINITY,
            rho_d: f64::INFINITY,
            monte_carlo: false,
        };
    };

    let theta = input.candidate.theta;
    let h = input.candidate.half_width;
    let energy_at = |th: f64| required_energy(input.path, plan, th, m_a, m_b, alpha);

    if h <= 0.0 {
        let mean = available_energy - energy_at(theta);
        let cvar = mean;
        return PathRisk {
            path_id,
            extra_fuel_mean: mean,
            extra_fuel_sigma: 0.0,
            cvar,
            rho_d: -cvar,
            monte_carlo: false,
        };
    }

    let sigma_theta = h / gamma_scale;
    // Probe for monotonicity of the energy map across the interval.
    let probes = [-h, -0.5 * h, 0.0, 0.5 * h, h].map(|d| energy_at(theta + d));
    let mut increasing = true;
    let mut decreasing = true;
    for pair in probes.windows(2) {
        if pair[1] < pair[0] {
            increasing = false;
        }
        if pair[1] > pair[0] {
            decreasing = false;
        }
    }

    if increasing || decreasing {
        let mean = available_energy - probes[2];
        let sigma = (probes[4] - probes[0]).abs() / (2.0 * gamma_scale);
        let cvar = gaussian_cvar_lower(mean, sigma, gamma).expect("validated gamma and sigma");
        PathRisk {
            path_id,
            extra_fuel_mean: mean,
            extra_fuel_sigma: sigma,
            cvar,
            rho_d: -cvar,
            monte_carlo: false,
        }
    } else {
        let normal = Normal::new(theta, sigma_theta).expect("positive sigma");
        let mut samples: Vec<f64> = (0..MC_DRAWS)
            .map(|_| available_energy - energy_at(normal.sample(rng)))
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sigma = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let cvar = empirical_cvar_lower(&mut samples, gamma);
        PathRisk {
            path_id,
            extra_fuel_mean: mean,
            extra_fuel_sigma: sigma,
            cvar,
            rho_d: -cvar,
            monte_carlo: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Path, PathMap};
    use crate::planner::{solve_ocp, AbortTarget, PlannerParams, UasState};
    use crate::sampler::PathCandidate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> PlannerParams {
        PlannerParams {
            m_a: 3.0,
            m_b: 1.0,
            alpha: 20.0,
            v_max: 15.0,
            t_max: 200.0,
            t_c: 1.0,
            abort_target: AbortTarget::LandingSite,
        }
    }

    fn straight_map() -> PathMap {
        PathMap::new(
            vec![Path::new(1, vec![Point::new(0.0, 50.0), Point::new(400.0, 50.0)]).unwrap()],
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
        )
        .unwrap()
    }

    fn candidate(theta: f64, h: f64, point: Point) -> PathCandidate {
        PathCandidate {
            path_id: 1,
            t_r: 30.0,
            theta,
            point,
            half_width: h,
            energy: 0.0,
            rho_r: 0.0,
            clamped: false,
        }
    }

    fn planned_input(map: &PathMap, theta: f64, h: f64) -> (PathCandidate, MissionPlan) {
        let path = map.path(1).unwrap();
        let point = path.evaluate(theta).unwrap();
        let uas = UasState {
            position: Point::new(0.0, 0.0),
            energy: 1.6e4,
            t: 0.0,
        };
        let plan = solve_ocp(&uas, point, 30.0, map, &params()).unwrap();
        (candidate(theta, h, point), plan)
    }

    #[test]
    fn zero_variance_is_deterministic() {
        let map = straight_map();
        let (cand, plan) = planned_input(&map, 150.0, 0.0);
        let inputs = [PathDecisionInput {
            path: map.path(1).unwrap(),
            candidate: cand,
            plan: Some(plan),
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report =
            assess_decision_risk(&inputs, 1.6e4, 3.0, 1.0, 20.0, 0.05, 0.0, 1.96, &mut rng).unwrap();
        let risk = &report.per_path[0];
        assert_eq!(risk.extra_fuel_sigma, 0.0);
        assert_eq!(risk.cvar, risk.extra_fuel_mean);
        assert_eq!(
            report.verdict,
            if -risk.extra_fuel_mean <= 0.0 { Verdict::Proceed } else { Verdict::Abort }
        );
    }

    #[test]
    fn gaussian_tail_matches_closed_form() {
        // Extra fuel ~ N(1000, 200^2) at gamma = 0.05:
        // cvar = 1000 - 200 * 2.0627 = 587.5 within 1%.
        let cvar = gaussian_cvar_lower(1000.0, 200.0, 0.05).unwrap();
        assert!((cvar - 587.5).abs() <= 0.01 * 587.5, "cvar = {cvar}");
    }

    #[test]
    fn infeasible_path_forces_abort() {
        let map = straight_map();
        let (cand, plan) = planned_input(&map, 150.0, 0.5);
        let inputs = [
            PathDecisionInput {
                path: map.path(1).unwrap(),
                candidate: cand,
                plan: Some(plan),
            },
            PathDecisionInput {
                path: map.path(1).unwrap(),
                candidate: cand,
                plan: None,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report =
            assess_decision_risk(&inputs, 1.6e4, 3.0, 1.0, 20.0, 0.05, 0.0, 1.96, &mut rng).unwrap();
        assert_eq!(report.verdict, Verdict::Abort);
        assert!(report.max_rho_d().is_infinite());
    }

    #[test]
    fn gamma_one_recovers_risk_neutral_expectation() {
        let map = straight_map();
        let (cand, plan) = planned_input(&map, 150.0, 2.0);
        let inputs = [PathDecisionInput {
            path: map.path(1).unwrap(),
            candidate: cand,
            plan: Some(plan),
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report =
            assess_decision_risk(&inputs, 1.6e4, 3.0, 1.0, 20.0, 1.0, 0.0, 1.96, &mut rng).unwrap();
        let risk = &report.per_path[0];
        assert!(!risk.monte_carlo);
        assert!((risk.cvar - risk.extra_fuel_mean).abs() <= 1e-6);
    }

    #[test]
    fn wider_uncertainty_never_reduces_risk() {
        let map = straight_map();
        let mut last = f64::NEG_INFINITY;
        for h in [0.0, 1.0, 4.0, 10.0] {
            let (cand, plan) = planned_input(&map, 150.0, h);
            let inputs = [PathDecisionInput {
                path: map.path(1).unwrap(),
                candidate: cand,
                plan: Some(plan),
            }];
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let report =
                assess_decision_risk(&inputs, 1.6e4, 3.0, 1.0, 20.0, 0.05, 0.0, 1.96, &mut rng)
                    .unwrap();
            let rho = report.per_path[0].rho_d;
            assert!(rho >= last - 1e-9, "rho {rho} fell below {last} at h = {h}");
            last = rho;
        }
    }

    #[test]
    fn verdict_invariant_under_reindexing() {
        let map = straight_map();
        let (cand_a, plan_a) = planned_input(&map, 120.0, 1.0);
        let (cand_b, plan_b) = planned_input(&map, 220.0, 3.0);
        let path = map.path(1).unwrap();
        let run = |order: [usize; 2]| {
            let all = [(cand_a, plan_a), (cand_b, plan_b)];
            let inputs: Vec<PathDecisionInput> = order
                .iter()
                .map(|&i| PathDecisionInput {
                    path,
                    candidate: all[i].0,
                    plan: Some(all[i].1),
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            assess_decision_risk(&inputs, 1.6e4, 3.0, 1.0, 20.0, 0.05, 0.0, 1.96, &mut rng)
                .unwrap()
                .verdict
        };
        assert_eq!(run([0, 1]), run([1, 0]));
    }

    #[test]
    fn non_monotone_energy_map_uses_monte_carlo() {
        // A path that doubles back makes the required energy non-monotone in
        // theta around the turn.
        let back = Path::new(
            1,
            vec![Point::new(0.0, 50.0), Point::new(120.0, 50.0), Point::new(20.0, 50.1)],
        )
        .unwrap();
        let map = PathMap::new(vec![back], Point::new(0.0, 0.0), Point::new(0.0, 0.0)).unwrap();
        let path = map.path(1).unwrap();
        let theta = 120.0;
        let point = path.evaluate(theta).unwrap();
        let uas = UasState {
            position: Point::new(0.0, 0.0),
            energy: 1.6e4,
            t: 0.0,
        };
        let plan = solve_ocp(&uas, point, 30.0, &map, &params()).unwrap();
        let inputs = [PathDecisionInput {
            path,
            candidate: candidate(theta, 15.0, point),
            plan: Some(plan),
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report =
            assess_decision_risk(&inputs, 1.6e4, 3.0, 1.0, 20.0, 0.05, 0.0, 1.96, &mut rng).unwrap();
        let risk = &report.per_path[0];
        assert!(risk.monte_carlo);
        assert!(risk.rho_d.is_finite());
        assert!(risk.cvar <= risk.extra_fuel_mean + 1e-9);
    }

    #[test]
    fn empirical_cvar_on_known_samples() {
        let mut samples = vec![5.0, 1.0, 9.0, 3.0, 7.0, 2.0, 8.0, 4.0, 6.0, 0.0];
        // gamma 0.2 over 10 samples: mean of the lowest 2.
        assert_eq!(empirical_cvar_lower(&mut samples, 0.2), 0.5);
        let mut one = vec![42.0];
        assert_eq!(empirical_cvar_lower(&mut one, 0.05), 42.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            assess_decision_risk(&[], 1.0, 3.0, 1.0, 20.0, 0.05, 0.0, 1.96, &mut rng),
            Err(RiskError::NoActivePaths)
        ));
    }
}
