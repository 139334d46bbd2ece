//! Cross-entropy importance sampling over rendezvous times.
//!
//! Each iteration draws a matrix of candidate rendezvous times (one row per
//! path), propagates the expected driver position for every sample through
//! the GP model, prices each sample with a downside-risk-adjusted energy
//! cost, keeps the per-path elites, picks the target path and refits the
//! per-path Gaussian proposal to the elites.
//!
//! Sample evaluation is pure given immutable model snapshots, so batches may
//! be priced in parallel; ranking reduces in deterministic row/column order.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Path, Point, ReachableSet};
use crate::gpr::GpModel;
use crate::numerics::{integrate_with_limit, select_top_k, Direction, QuadratureError};
use crate::traffic::HistoricalProfile;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SamplerError {
    #[error("proposal invalid: {0}")]
    InvalidProposal(String),
    #[error("position propagation failed: {0}")]
    Propagation(#[from] QuadratureError),
    #[error("profile evaluation failed: {0}")]
    Profile(#[from] crate::traffic::TrafficError),
    #[error("no active path has a finite-cost sample")]
    AllSamplesInfeasible,
    #[error("batch shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Target-path selection rule applied to the best sample of each path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Cheapest best-of-path sample wins (ambitious).
    BestFirst,
    /// Most expensive best-of-path sample wins (conservative): if the worst
    /// path is affordable, every other path is too.
    WorstFirst,
}

/// Per-path Gaussian proposal over rendezvous times.
#[derive(Debug, Clone)]
pub struct ProposalDistribution {
    /// Mean rendezvous time per path (s).
    pub mu: Vec<f64>,
    /// Variance per path (s^2), diagonal covariance.
    pub sigma: Vec<f64>,
    /// Exploration floor added to every variance update (s^2).
    pub lambda: f64,
    /// Samples per path per iteration.
    pub n_s: usize,
    /// Elites kept per path.
    pub n_e: usize,
}

impl ProposalDistribution {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.mu.len() != self.sigma.len() {
            return Err(SamplerError::InvalidProposal(
                "mu and sigma must have equal length".into(),
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(SamplerError::InvalidProposal(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.sigma.iter().any(|&s| s < self.lambda) {
            return Err(SamplerError::InvalidProposal(
                "sigma entries must be >= lambda".into(),
            ));
        }
        if self.n_e == 0 || self.n_s <= self.n_e {
            return Err(SamplerError::InvalidProposal(format!(
                "need n_s > n_e >= 1, got n_s = {}, n_e = {}",
                self.n_s, self.n_e
            )));
        }
        Ok(())
    }
}

/// Retries before a too-early sample is clamped to the dwell floor.
const RESAMPLE_RETRIES: usize = 100;

/// Draw the N x n_s matrix of rendezvous-time samples.
///
/// Rows for pruned paths are still drawn (keeping shapes and RNG consumption
/// static) but are masked out of ranking by the caller via `active`. Samples
/// must land after `t0 + t_c`; violators are redrawn up to 100 times, then
/// clamped to the floor.
pub fn sample_batch<R: Rng>(
    prop: &ProposalDistribution,
    rng: &mut R,
    _active: &ReachableSet,
    t0: f64,
    t_c: f64,
) -> Result<Vec<Vec<f64>>, SamplerError> {
    prop.validate()?;
    let floor = t0 + t_c;
    let times = prop
        .mu
        .iter()
        .zip(&prop.sigma)
        .map(|(&mu, &sigma)| {
            let normal = Normal::new(mu, sigma.sqrt()).expect("validated sigma");
            (0..prop.n_s)
                .map(|_| {
                    for _ in 0..RESAMPLE_RETRIES {
                        let t = normal.sample(rng);
                        if t > floor {
                            return t;
                        }
                    }
                    floor
                })
                .collect()
        })
        .collect();
    Ok(times)
}

/// Expected driver position for one time sample, with the propagated
/// confidence half-width.
#[derive(Debug, Clone, Copy)]
pub struct PropagatedSample {
    /// Expected arc length at the sample time (m), before clamping.
    pub theta: f64,
    /// Path point at the (clamped) expected arc length.
    pub point: Point,
    /// Path point at theta + half_width (clamped).
    pub point_plus: Point,
    /// Path point at theta - half_width (clamped).
    pub point_minus: Point,
    /// Confidence half-width in arc length (m).
    pub half_width: f64,
    /// Whether any arc length was clamped to the path extent.
    pub clamped: bool,
}

/// Quadrature tolerances for position propagation: sub-millimeter arc-length
/// error at mission scale, negligible against GPS noise.
const PROP_ABS_TOL: f64 = 1e-8;
const PROP_REL_TOL: f64 = 1e-6;

/// Propagate the expected driver position on `path` from `(t0, theta0)` to
/// `t_sample`.
///
/// The expected arc length integrates `hist + mu_d(hist)`; the half-width
/// integrates the posterior variance and scales it by `gamma_scale`, giving
/// the confidence interval in arc length used by the downside-risk ranges.
pub fn propagate_position(
    path: &Path,
    gp: &GpModel,
    profile: &HistoricalProfile,
    theta0: f64,
    t0: f64,
    t_sample: f64,
    gamma_scale: f64,
) -> Result<PropagatedSample, SamplerError> {
    if t_sample <= t0 {
        return Err(SamplerError::ShapeMismatch(format!(
            "t_sample {t_sample} must exceed t0 {t0}"
        )));
    }
    // Profile errors (table extrapolation) surface as NaN and fail the
    // quadrature convergence check rather than panicking mid-integrand.
    let drift = |t: f64| {
        profile
            .speed_at(t)
            .map(|h| h + gp.predict(h).0)
            .unwrap_or(f64::NAN)
    };
    let spread = |t: f64| {
        profile
            .speed_at(t)
            .map(|h| gp.predict(h).1)
            .unwrap_or(f64::NAN)
    };
    let advance = integrate_with_limit(drift, t0, t_sample, PROP_ABS_TOL, PROP_REL_TOL, 200)?;
    let width = integrate_with_limit(spread, t0, t_sample, PROP_ABS_TOL, PROP_REL_TOL, 200)?;

    let theta = theta0 + advance.value;
    let half_width = gamma_scale * width.value;
    let (point, c0) = path.evaluate_clamped(theta);
    let (point_plus, c1) = path.evaluate_clamped(theta + half_width);
    let (point_minus, c2) = path.evaluate_clamped(theta - half_width);
    Ok(PropagatedSample {
        theta,
        point,
        point_plus,
        point_minus,
        half_width,
        clamped: c0 || c1 || c2,
    })
}

/// Fixed mission quantities needed to price a sample.
#[derive(Debug, Clone, Copy)]
pub struct EnergyContext {
    /// Current time (s).
    pub t0: f64,
    /// UAS position now.
    pub uas: Point,
    /// Landing site.
    pub landing: Point,
    /// UAS mass with the package (kg).
    pub m_a: f64,
    /// UAS mass after the drop (kg).
    pub m_b: f64,
    /// Hover consumption constant.
    pub alpha: f64,
    /// Speed limit (m/s).
    pub v_max: f64,
    /// Landing time from the previous plan (t1 + t2 + t3); absent on the
    /// first iteration, which then prices only the rendezvous leg.
    pub t_l: Option<f64>,
}

/// Downside-risk range gain: how much farther than the neutral range the UAS
/// may need to fly if the driver sits at the bad edge of the confidence
/// interval.
pub fn range_risk(sample: &PropagatedSample, anchor: Point) -> f64 {
    let r = (sample.point - anchor).norm();
    let r_plus = (sample.point_plus - anchor).norm();
    let r_minus = (sample.point_minus - anchor).norm();
    r.max(r_plus).max(r_minus) - r
}

/// Risk-adjusted energy cost of one sample; infeasible samples price as
/// infinity.
///
/// Velocities use the worst-case ranges ((range + risk gain) / time) for the
/// rendezvous leg from the UAS and the return leg to the landing site. The
/// return term is skipped when no previous plan supplies `t_l`.
pub fn energy_cost(sample: &PropagatedSample, t_sample: f64, ctx: &EnergyContext) -> f64 {
    let dt_r = t_sample - ctx.t0;
    if dt_r <= 0.0 {
        return f64::INFINITY;
    }
    let reach_r = (sample.point - ctx.uas).norm() + range_risk(sample, ctx.uas);
    let v_r = reach_r / dt_r;
    if v_r > ctx.v_max {
        return f64::INFINITY;
    }
    let mut cost = ctx.m_a * dt_r * (0.5 * v_r * v_r + ctx.alpha);

    if let Some(t_l) = ctx.t_l {
        let dt_l = t_l - t_sample;
        if dt_l <= 0.0 {
            return f64::INFINITY;
        }
        let reach_l = (sample.point - ctx.landing).norm() + range_risk(sample, ctx.landing);
        let v_l = reach_l / dt_l;
        if v_l > ctx.v_max {
            return f64::INFINITY;
        }
        cost += ctx.m_b * dt_l * (0.5 * v_l * v_l + ctx.alpha);
    }
    cost
}

/// Fully priced sample matrix.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// Path ids in row order.
    pub path_ids: Vec<usize>,
    /// N x n_s sampled rendezvous times.
    pub times: Vec<Vec<f64>>,
    /// Propagated positions; `None` where propagation failed.
    pub samples: Vec<Vec<Option<PropagatedSample>>>,
    /// N x n_s energy costs (infinity encodes infeasible).
    pub energies: Vec<Vec<f64>>,
    /// Downside-risk gain toward the UAS per sample (m).
    pub rho_r: Vec<Vec<f64>>,
    /// Row activity mask from the reachable set.
    pub active: Vec<bool>,
}

/// Best candidate of one path row.
#[derive(Debug, Clone, Copy)]
pub struct PathCandidate {
    pub path_id: usize,
    pub t_r: f64,
    pub theta: f64,
    pub point: Point,
    pub half_width: f64,
    pub energy: f64,
    pub rho_r: f64,
    pub clamped: bool,
}

/// Ranking outcome: per-path elites and the chosen target.
#[derive(Debug, Clone)]
pub struct EliteResult {
    /// Elite times per row, best first; empty rows had no finite sample.
    pub elite_times: Vec<Vec<f64>>,
    /// Best finite candidate per row.
    pub row_best: Vec<Option<PathCandidate>>,
    /// Rows flagged with fewer than n_e finite samples.
    pub infeasible_rows: Vec<usize>,
    pub target_path: usize,
    pub p_star: Point,
    pub t_r_target: f64,
    pub rho_r_star: f64,
    /// Worst-first landed on a flagged row and fell back to the worst
    /// fully-feasible one.
    pub fell_back: bool,
}

/// Rank a priced batch and pick the target path.
///
/// Per active row the `n_e` cheapest finite samples become elites. The target
/// is the arg-min over rows of `w_i * best_cost` (best-first) or
/// `-w_i * best_cost` (worst-first). A row with fewer than `n_e` finite
/// samples is flagged; if worst-first selects a flagged row while a fully
/// feasible row exists, the target falls back to the worst feasible row and
/// the flag is reported.
pub fn rank_and_select(
    batch: &SampleBatch,
    strategy: Strategy,
    weights: &[f64],
    n_e: usize,
) -> Result<EliteResult, SamplerError> {
    let n = batch.path_ids.len();
    if weights.len() != n {
        return Err(SamplerError::ShapeMismatch(format!(
            "{} weights for {} paths",
            weights.len(),
            n
        )));
    }

    let mut elite_times = vec![Vec::new(); n];
    let mut row_best: Vec<Option<PathCandidate>> = vec![None; n];
    let mut infeasible_rows = Vec::new();

    for row in 0..n {
        if !batch.active[row] {
            continue;
        }
        let costs = &batch.energies[row];
        let finite = costs.iter().filter(|c| c.is_finite()).count();
        if finite < n_e {
            infeasible_rows.push(batch.path_ids[row]);
        }
        if finite == 0 {
            continue;
        }
        let order = select_top_k(costs, finite.min(n_e), Direction::Min)
            .expect("k bounded by finite count <= len");
        elite_times[row] = order.iter().map(|&j| batch.times[row][j]).collect();
        let best = order[0];
        let sample = batch.samples[row][best].expect("finite cost implies propagated sample");
        row_best[row] = Some(PathCandidate {
            path_id: batch.path_ids[row],
            t_r: batch.times[row][best],
            theta: sample.theta,
            point: sample.point,
            half_width: sample.half_width,
            energy: costs[best],
            rho_r: batch.rho_r[row][best],
            clamped: sample.clamped,
        });
    }

    let scored: Vec<(usize, f64, bool)> = row_best
        .iter()
        .enumerate()
        .filter_map(|(row, cand)| {
            cand.map(|c| {
                let flagged = infeasible_rows.contains(&c.path_id);
                (row, weights[row] * c.energy, flagged)
            })
        })
        .collect();
    if scored.is_empty() {
        return Err(SamplerError::AllSamplesInfeasible);
    }

    let pick = |rows: &[(usize, f64, bool)]| -> usize {
        rows.iter()
            .fold(None::<(usize, f64)>, |acc, &(row, score, _)| {
                let score = match strategy {
                    Strategy::BestFirst => score,
                    Strategy::WorstFirst => -score,
                };
                match acc {
                    Some((_, best)) if best <= score => acc,
                    _ => Some((row, score)),
                }
            })
            .expect("nonempty rows")
            .0
    };

    let mut target_row = pick(&scored);
    let mut fell_back = false;
    if strategy == Strategy::WorstFirst
        && infeasible_rows.contains(&batch.path_ids[target_row])
    {
        let clean: Vec<_> = scored.iter().copied().filter(|&(_, _, f)| !f).collect();
        if !clean.is_empty() {
            target_row = pick(&clean);
            fell_back = true;
        }
    }

    let chosen = row_best[target_row].expect("target drawn from scored rows");
    Ok(EliteResult {
        elite_times,
        row_best,
        infeasible_rows,
        target_path: chosen.path_id,
        p_star: chosen.point,
        t_r_target: chosen.t_r,
        rho_r_star: chosen.rho_r,
        fell_back,
    })
}

/// Refit the proposal to the elites: row-wise mean and population variance
/// plus the exploration floor. Rows without elites keep their parameters.
pub fn update_parameters(
    prop: &ProposalDistribution,
    elite_times: &[Vec<f64>],
) -> ProposalDistribution {
    let mut next = prop.clone();
    for (row, elites) in elite_times.iter().enumerate() {
        if elites.is_empty() || row >= next.mu.len() {
            continue;
        }
        let n = elites.len() as f64;
        let mean = elites.iter().sum::<f64>() / n;
        let var = elites.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        next.mu[row] = mean;
        next.sigma[row] = var + prop.lambda;
    }
    next
}
