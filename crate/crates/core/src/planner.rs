//! Four-segment point-of-no-return planning.
//!
//! The plan chains UAS -> PNR -> rendezvous -> landing, with an abort leg
//! PNR -> landing. Per segment the control is a constant velocity held for a
//! duration; the solver places the PNR and splits the time budget so that the
//! decision time (segment 1) is maximized while both the rendezvous and the
//! abort branch stay inside the energy budget.
//!
//! Velocities are eliminated analytically (v_i = dx_i / t_i), leaving a
//! five-dimensional smooth program over (x1, t1, t3, t4) with
//! t2 = t_R - t0 - t1, solved by deterministic multi-start Nelder-Mead with
//! tightened penalties. `solve_ocp` is pure; multi-starts reduce in a fixed
//! order so results are reproducible.

pub mod check;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{PathMap, Point};

/// Where the abort leg terminates. The abort site is accepted as an alias of
/// the landing site; the kinematic chain always closes on the chosen target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortTarget {
    #[default]
    LandingSite,
    AbortSite,
}

/// Mission constants the solver needs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlannerParams {
    /// UAS mass with the package (kg).
    pub m_a: f64,
    /// UAS mass after the drop (kg).
    pub m_b: f64,
    /// Hover consumption constant.
    pub alpha: f64,
    /// Speed limit (m/s).
    pub v_max: f64,
    /// Cap on t1+t2+t3 and on t1+t4 (s).
    pub t_max: f64,
    /// Dwell: minimum duration of every segment (s).
    pub t_c: f64,
    /// Abort leg destination.
    pub abort_target: AbortTarget,
}

/// UAS snapshot the solver plans from.
#[derive(Debug, Clone, Copy)]
pub struct UasState {
    pub position: Point,
    /// Remaining energy (J).
    pub energy: f64,
    /// Current time (s).
    pub t: f64,
}

/// A feasible four-segment plan.
#[derive(Debug, Clone, Copy)]
pub struct MissionPlan {
    /// Where the plan starts (UAS position at solve time).
    pub origin: Point,
    /// Solve time t0 (s).
    pub solved_at: f64,
    /// Rendezvous time this plan was built for (s, absolute).
    pub t_r: f64,
    /// Point of no return.
    pub pnr: Point,
    /// Rendezvous point (p*).
    pub rendezvous: Point,
    /// Landing site.
    pub landing: Point,
    /// Abort leg endpoint.
    pub abort_end: Point,
    /// Constant velocity per segment: to PNR, to rendezvous, to landing,
    /// abort leg from PNR.
    pub velocities: [Vector2<f64>; 4],
    /// Segment durations t1..t4 (s).
    pub durations: [f64; 4],
    /// Segment energies E1..E4 (J).
    pub energies: [f64; 4],
    pub feasible: bool,
}

impl MissionPlan {
    /// Decision time: time left before the PNR is reached.
    pub fn decision_time(&self) -> f64 {
        self.durations[0]
    }

    /// Planned landing time of the rendezvous branch (absolute, s).
    pub fn landing_time(&self) -> f64 {
        self.solved_at + self.durations[0] + self.durations[1] + self.durations[2]
    }

    /// Energy demand of the rendezvous branch.
    pub fn rendezvous_energy(&self) -> f64 {
        self.energies[0] + self.energies[1] + self.energies[2]
    }

    /// Energy demand of the abort branch.
    pub fn abort_energy(&self) -> f64 {
        self.energies[0] + self.energies[3]
    }
}

/// Constraint that blocked an infeasible solve, named in safety-first order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingConstraint {
    EnergyAbort,
    EnergyRendezvous,
    VMax,
    TMax,
    Dwell,
}

impl std::fmt::Display for BindingConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::EnergyAbort => "energy-abort",
            Self::EnergyRendezvous => "energy-rendezvous",
            Self::VMax => "v_max",
            Self::TMax => "t_max",
            Self::Dwell => "dwell",
        };
        f.write_str(name)
    }
}

/// Why no feasible plan exists, with the least-violating candidate's numbers.
#[derive(Debug, Clone, Copy)]
pub struct InfeasibilityReport {
    pub binding: BindingConstraint,
    /// Raw violation of the binding constraint (J, m/s or s).
    pub violation: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PlannerError {
    #[error("no feasible plan: {} violated by {:.3}", report.binding, report.violation)]
    Infeasible { report: InfeasibilityReport },
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
}

/// Constraint values at a candidate; negative means satisfied with margin.
#[derive(Debug, Clone, Copy)]
struct ConstraintSlack {
    energy_abort: f64,
    energy_rendezvous: f64,
    v_max: f64,
    t_max: f64,
}

impl ConstraintSlack {
    /// First violated constraint in safety-first order. Meaningful at a
    /// minimizer of the hinge-sum of violations, where every reducible
    /// violation has been driven to zero and only the binding ones remain.
    fn diagnose(&self) -> Option<(BindingConstraint, f64)> {
        let ordered = [
            (BindingConstraint::EnergyAbort, self.energy_abort),
            (BindingConstraint::EnergyRendezvous, self.energy_rendezvous),
            (BindingConstraint::VMax, self.v_max),
            (BindingConstraint::TMax, self.t_max),
        ];
        ordered.into_iter().find(|&(_, v)| v > 1e-9)
    }
}

/// Cheapest admissible duration for a straight constant-velocity leg.
#[derive(Debug, Clone, Copy)]
struct Leg {
    duration: f64,
    energy: f64,
    /// Energy the leg needs beyond its budget (0 when affordable).
    energy_deficit: f64,
    /// Time the leg needs beyond its cap (0 when it fits).
    t_max_deficit: f64,
}

struct Problem {
    x0: Point,
    p_star: Point,
    landing: Point,
    abort_end: Point,
    e_r: f64,
    horizon: f64, // T_R = t_r - t0
    params: PlannerParams,
    e_scale: f64,
    t_scale: f64,
}

impl Problem {
    /// Dwell holds structurally: t1 is projected into [t_c, horizon - t_c]
    /// and the return legs are floored at t_c, so the only dwell
    /// infeasibility is horizon < 2 t_c, rejected before solving.
    fn project(&self, z: &[f64; 3]) -> (Point, f64) {
        let t_c = self.params.t_c;
        (
            Point::new(z[0], z[1]),
            z[2].clamp(t_c, (self.horizon - t_c).max(t_c)),
        )
    }

    /// Shortest duration of a leg of length `d` at mass `m` within `budget`
    /// joules and `cap` seconds, respecting the speed limit and dwell.
    ///
    /// Segment energy m*t*(d^2/(2 t^2) + alpha) is convex in t, so the
    /// admissible set is an interval whose lower end is either the speed
    /// floor or the smaller root of m*alpha*t^2 - budget*t + m*d^2/2.
    fn shortest_leg(&self, d: f64, m: f64, budget: f64, cap: f64) -> Leg {
        let p = &self.params;
        let energy_at = |t: f64| m * (d * d / (2.0 * t) + p.alpha * t);
        let floor = (d / p.v_max).max(p.t_c);
        let t_opt = (d / (2.0 * p.alpha).sqrt()).max(floor);
        let e_min = energy_at(t_opt);
        if budget < e_min {
            return Leg {
                duration: t_opt,
                energy: e_min,
                energy_deficit: e_min - budget,
                t_max_deficit: (t_opt - cap).max(0.0),
            };
        }
        let duration = if energy_at(floor) <= budget {
            floor
        } else {
            let disc = (budget * budget - 2.0 * m * m * p.alpha * d * d).max(0.0);
            ((budget - disc.sqrt()) / (2.0 * m * p.alpha)).max(floor)
        };
        Leg {
            duration,
            energy: energy_at(duration),
            energy_deficit: 0.0,
            t_max_deficit: (duration - cap).max(0.0),
        }
    }

    /// z = [x1.x, x1.y, t1]; the return legs are resolved in closed form.
    fn build(&self, z: &[f64; 3]) -> (MissionPlan, ConstraintSlack) {
        let p = &self.params;
        let (x1, t1) = self.project(z);
        let t2 = self.horizon - t1;

        let v1 = (x1 - self.x0) / t1;
        let v2 = (self.p_star - x1) / t2;
        let seg = |m: f64, t: f64, v: Vector2<f64>| m * t * (0.5 * v.norm_squared() + p.alpha);
        let e1 = seg(p.m_a, t1, v1);
        let e2 = seg(p.m_a, t2, v2);

        let leg3 = self.shortest_leg(
            (self.landing - self.p_star).norm(),
            p.m_b,
            self.e_r - e1 - e2,
            p.t_max - self.horizon,
        );
        let leg4 = self.shortest_leg(
            (self.abort_end - x1).norm(),
            p.m_a,
            self.e_r - e1,
            p.t_max - t1,
        );
        let (t3, t4) = (leg3.duration, leg4.duration);
        let v3 = (self.landing - self.p_star) / t3;
        let v4 = (self.abort_end - x1) / t4;

        let slack = ConstraintSlack {
            energy_abort: if leg4.energy_deficit > 0.0 {
                leg4.energy_deficit
            } else {
                e1 + leg4.energy - self.e_r
            },
            energy_rendezvous: if leg3.energy_deficit > 0.0 {
                leg3.energy_deficit
            } else {
                e1 + e2 + leg3.energy - self.e_r
            },
            v_max: v1.norm().max(v2.norm()) - p.v_max,
            t_max: leg3.t_max_deficit.max(leg4.t_max_deficit),
        };

        let plan = MissionPlan {
            origin: self.x0,
            solved_at: 0.0, // stamped by the caller
            t_r: 0.0,
            pnr: x1,
            rendezvous: self.p_star,
            landing: self.landing,
            abort_end: self.abort_end,
            velocities: [v1, v2, v3, v4],
            durations: [t1, t2, t3, t4],
            energies: [e1, e2, leg3.energy, leg4.energy],
            feasible: true,
        };
        (plan, slack)
    }

    fn objective(&self, z: &[f64; 3]) -> f64 {
        let (plan, slack) = self.build(z);
        let [t1, t2, t3, t4] = plan.durations;
        // The time objective is flat in the PNR position wherever the
        // constraints are slack; a tiny committed-branch energy term breaks
        // those ties toward the cheaper plan without competing with the time
        // terms.
        let obj = (t2 + t3 + t4 - t1) / self.t_scale
            + 1e-3 * plan.rendezvous_energy() / self.e_scale;
        // Constraints tightened by delta so the converged point is strictly
        // inside the true feasible set.
        let delta = 1e-6;
        let mu = 1e10;
        let pen = |g: f64, scale: f64| {
            let v = g / scale + delta;
            if v > 0.0 {
                mu * v * v
            } else {
                0.0
            }
        };
        obj + pen(slack.energy_abort, self.e_scale)
            + pen(slack.energy_rendezvous, self.e_scale)
            + pen(slack.v_max, self.params.v_max)
            + pen(slack.t_max, self.t_scale)
    }
}

/// Solve the point-of-no-return problem for a given rendezvous point/time.
pub fn solve_ocp(
    uas: &UasState,
    p_star: Point,
    t_r: f64,
    map: &PathMap,
    params: &PlannerParams,
) -> Result<MissionPlan, PlannerError> {
    validate_inputs(uas, p_star, map, params)?;
    let horizon = t_r - uas.t;
    if horizon < 2.0 * params.t_c {
        return Err(PlannerError::Infeasible {
            report: InfeasibilityReport {
                binding: BindingConstraint::Dwell,
                violation: 2.0 * params.t_c - horizon,
            },
        });
    }

    let abort_end = match params.abort_target {
        AbortTarget::LandingSite => map.landing_site(),
        AbortTarget::AbortSite => map.abort_site(),
    };
    let problem = Problem {
        x0: uas.position,
        p_star,
        landing: map.landing_site(),
        abort_end,
        e_r: uas.energy,
        horizon,
        params: *params,
        e_scale: uas.energy.abs().max(1.0),
        t_scale: horizon.max(params.t_max).max(1.0),
    };

    let mut candidates: Vec<[f64; 3]> = Vec::new();
    for start in starting_points(&problem) {
        let steps = simplex_steps(&problem, &start);
        let (z, _) = nelder_mead(|z| problem.objective(z), start, steps, 500);
        // Polish with a fine simplex to shave scatter in flat directions.
        let mut fine = simplex_steps(&problem, &z);
        for s in fine.iter_mut() {
            *s *= 0.03;
        }
        let (z, _) = nelder_mead(|z| problem.objective(z), z, fine, 300);
        candidates.push(z);
    }

    // Among near-optimal feasible candidates prefer the cheapest: the time
    // objective is exactly flat in the PNR position when no constraint
    // binds, and solver noise must not pick the winner there.
    let feasible: Vec<(MissionPlan, f64)> = candidates
        .iter()
        .filter_map(|z| {
            let (plan, slack) = problem.build(z);
            let [t1, t2, t3, t4] = plan.durations;
            let objective = t2 + t3 + t4 - t1;
            (total_violation(&problem, &slack) <= 1e-9).then_some((plan, objective))
        })
        .collect();
    let best = feasible
        .iter()
        .map(|&(_, o)| o)
        .fold(f64::INFINITY, f64::min);
    let chosen = feasible
        .into_iter()
        .filter(|&(_, o)| o <= best + 1e-3 * (1.0 + best.abs()))
        .min_by(|a, b| {
            // Tie-break on the branch that actually gets flown on commit;
            // the abort leg is a budget constraint, not a cost.
            a.0.rendezvous_energy().total_cmp(&b.0.rendezvous_energy())
        });

    match chosen {
        Some((mut plan, _)) => {
            plan.solved_at = uas.t;
            plan.t_r = t_r;
            Ok(plan)
        }
        None => Err(PlannerError::Infeasible {
            report: diagnose_infeasibility(&problem),
        }),
    }
}

/// Minimize the plain hinge-sum of violations (no objective, no tightening):
/// every constraint that can be traded away goes to zero, leaving exactly the
/// irreducible ones to name.
fn diagnose_infeasibility(problem: &Problem) -> InfeasibilityReport {
    let violation_of = |z: &[f64; 3]| {
        let (_, slack) = problem.build(z);
        total_violation(problem, &slack)
    };

    let mut best: Option<([f64; 3], f64)> = None;
    for start in starting_points(problem) {
        let steps = simplex_steps(problem, &start);
        let (z, v) = nelder_mead(violation_of, start, steps, 400);
        if best.as_ref().map(|&(_, bv)| v < bv).unwrap_or(true) {
            best = Some((z, v));
        }
    }
    let (z, _) = best.expect("at least one start evaluated");
    let (_, slack) = problem.build(&z);
    let (binding, violation) = slack
        .diagnose()
        .expect("infeasible problem keeps at least one violation at its hinge minimum");
    InfeasibilityReport { binding, violation }
}

fn validate_inputs(
    uas: &UasState,
    p_star: Point,
    map: &PathMap,
    params: &PlannerParams,
) -> Result<(), PlannerError> {
    if !(params.m_a > 0.0 && params.m_b > 0.0 && params.m_a >= params.m_b) {
        return Err(PlannerError::InvalidInput(format!(
            "masses must satisfy m_a >= m_b > 0, got {} / {}",
            params.m_a, params.m_b
        )));
    }
    if !(params.v_max > 0.0 && params.t_c > 0.0 && params.t_max > 0.0 && params.alpha > 0.0) {
        return Err(PlannerError::InvalidInput(
            "v_max, t_c, t_max, alpha must all be positive".into(),
        ));
    }
    let (lo, hi) = map.bounds();
    let span = ((hi - lo).norm()).max(1.0);
    let inside = |p: Point| {
        p.x >= lo.x - span && p.x <= hi.x + span && p.y >= lo.y - span && p.y <= hi.y + span
    };
    if !inside(p_star) {
        return Err(PlannerError::InvalidInput(format!(
            "rendezvous point ({}, {}) far outside map bounds",
            p_star.x, p_star.y
        )));
    }
    if !inside(uas.position) {
        return Err(PlannerError::InvalidInput(
            "UAS position far outside map bounds".into(),
        ));
    }
    Ok(())
}

fn total_violation(problem: &Problem, slack: &ConstraintSlack) -> f64 {
    (slack.energy_abort / problem.e_scale).max(0.0)
        + (slack.energy_rendezvous / problem.e_scale).max(0.0)
        + (slack.v_max / problem.params.v_max).max(0.0)
        + (slack.t_max / problem.t_scale).max(0.0)
}

/// Sixteen deterministic starting points spanning PNR placements and time
/// splits.
fn starting_points(problem: &Problem) -> Vec<[f64; 3]> {
    let p = &problem.params;
    let free = (problem.horizon - 2.0 * p.t_c).max(0.0);
    let t1_of = |f: f64| p.t_c + f * free;
    let along = |f: f64| problem.x0 + (problem.p_star - problem.x0) * f;

    let mut starts = Vec::with_capacity(16);
    for fx in [0.3, 0.6, 0.85, 0.97] {
        for ft in [0.35, 0.65, 0.92] {
            starts.push((along(fx), t1_of(ft)));
        }
    }
    let toward_home = problem.x0 + (problem.p_star - problem.x0) * 0.5
        + (problem.landing - problem.x0) * 0.35;
    starts.push((toward_home, t1_of(0.5)));
    starts.push((toward_home, t1_of(0.9)));
    starts.push((problem.x0, t1_of(0.35)));
    starts.push((problem.x0, t1_of(0.9)));

    starts
        .into_iter()
        .map(|(x1, t1)| [x1.x, x1.y, t1])
        .collect()
}

fn simplex_steps(problem: &Problem, _start: &[f64; 3]) -> [f64; 3] {
    let reach = (problem.p_star - problem.x0).norm().max(10.0);
    let dt = (0.08 * problem.horizon).max(0.25 * problem.params.t_c);
    [0.12 * reach, 0.12 * reach, dt]
}

/// Classic Nelder-Mead on a fixed-size simplex.
fn nelder_mead<const D: usize, F: Fn(&[f64; D]) -> f64>(
    f: F,
    start: [f64; D],
    steps: [f64; D],
    max_iter: usize,
) -> ([f64; D], f64) {
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    simplex.push((start, f(&start)));
    for i in 0..D {
        let mut v = start;
        v[i] += steps[i];
        simplex.push((v, f(&v)));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[D].1 - simplex[0].1;
        if spread.abs() <= 1e-12 * (1.0 + simplex[0].1.abs()) {
            break;
        }

        let mut centroid = [0.0; D];
        for (v, _) in &simplex[..D] {
            for i in 0..D {
                centroid[i] += v[i] / D as f64;
            }
        }
        let worst = simplex[D];
        let mut reflect = [0.0; D];
        for i in 0..D {
            reflect[i] = centroid[i] + (centroid[i] - worst.0[i]);
        }
        let fr = f(&reflect);

        if fr < simplex[0].1 {
            let mut expand = [0.0; D];
            for i in 0..D {
                expand[i] = centroid[i] + 2.0 * (centroid[i] - worst.0[i]);
            }
            let fe = f(&expand);
            simplex[D] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (reflect, fr);
        } else {
            let mut contract = [0.0; D];
            if fr < worst.1 {
                for i in 0..D {
                    contract[i] = centroid[i] + 0.5 * (reflect[i] - centroid[i]);
                }
            } else {
                for i in 0..D {
                    contract[i] = centroid[i] - 0.5 * (centroid[i] - worst.0[i]);
                }
            }
            let fc = f(&contract);
            if fc < worst.1.min(fr) {
                simplex[D] = (contract, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    for i in 0..D {
                        entry.0[i] = best[i] + 0.5 * (entry.0[i] - best[i]);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Outcome of preferring a fresh solve over holding the previous plan.
#[derive(Debug, Clone)]
pub enum ReplanOutcome {
    Fresh(MissionPlan),
    /// Fresh solve failed; previous plan time-shifted to `now`.
    Held(MissionPlan),
    /// Neither a fresh plan nor a valid hold exists: abort.
    AbortSignal,
}

/// Prefer `fresh`; fall back to the previous plan shifted by the elapsed
/// time. When the previous plan has expired too, signal abort so the mission
/// loop switches to the deterministic branch.
pub fn replan_or_hold(
    previous: &MissionPlan,
    fresh: Result<MissionPlan, PlannerError>,
    now: f64,
) -> ReplanOutcome {
    if let Ok(plan) = fresh {
        return ReplanOutcome::Fresh(plan);
    }
    let elapsed = now - previous.solved_at;
    let remaining = previous.durations[0] - elapsed;
    if remaining < 0.0 {
        return ReplanOutcome::AbortSignal;
    }
    let mut held = *previous;
    held.solved_at = now;
    held.origin = previous.origin + previous.velocities[0] * elapsed;
    held.durations[0] = remaining;
    held.energies[0] =
        previous.energies[0] * if previous.durations[0] > 0.0 { remaining / previous.durations[0] } else { 0.0 };
    ReplanOutcome::Held(held)
}

/// Cheapest energy to fly straight between two points under the dwell and
/// speed limits (deterministic, no uncertainty in the abort chain).
pub fn minimum_direct_energy(from: Point, to: Point, mass: f64, params: &PlannerParams) -> f64 {
    let d = (to - from).norm();
    let tau_opt = if params.alpha > 0.0 {
        d / (2.0 * params.alpha).sqrt()
    } else {
        params.t_c
    };
    let tau = tau_opt.max(d / params.v_max).max(params.t_c);
    mass * (d * d / (2.0 * tau) + params.alpha * tau)
}

#[cfg(test)]
mod tests {
    use super::check::{verify_plan, PlanContext};
    use super::*;
    use crate::geometry::Path;

    fn open_map() -> PathMap {
        PathMap::new(
            vec![Path::new(1, vec![Point::new(0.0, 0.0), Point::new(500.0, 0.0)]).unwrap()],
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
        )
        .unwrap()
    }

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

    fn uas(energy: f64) -> UasState {
        UasState {
            position: Point::new(0.0, 0.0),
            energy,
            t: 0.0,
        }
    }

    #[test]
    fn colocated_rendezvous_is_feasible_and_degenerate() {
        let map = open_map();
        let state = UasState {
            position: Point::new(100.0, 0.0),
            energy: 1.0e5,
            t: 0.0,
        };
        let plan = solve_ocp(&state, Point::new(100.0, 0.0), 2.0, &map, &params()).unwrap();
        // Both pre-rendezvous legs collapse onto the dwell floor; the
        // objective still shortens the abort leg by pulling the PNR toward
        // home as far as the speed limit allows.
        assert!((plan.durations[0] - 1.0).abs() <= 1e-9);
        assert!((plan.durations[1] - 1.0).abs() <= 1e-9);
        assert!(plan.velocities[1].norm() <= 15.0 + 1e-9);
        let report = verify_plan(
            &plan,
            &PlanContext {
                origin: state.position,
                p_star: Point::new(100.0, 0.0),
                landing: map.landing_site(),
                abort_end: map.landing_site(),
                t_r: 2.0,
                available_energy: state.energy,
            },
            &params(),
            1e-6,
        );
        assert!(report.ok, "violations: {:?}", report.violations);
    }

    #[test]
    fn straight_line_plan_energy_matches_resimulation() {
        let map = open_map();
        let plan = solve_ocp(&uas(1.6e4), Point::new(100.0, 0.0), 20.0, &map, &params()).unwrap();

        // Re-simulate the returned plan through the energy dynamics at a
        // fine substep and compare against the plan's segment bookkeeping.
        let masses = [3.0, 3.0, 1.0, 3.0];
        let mut spent = 0.0;
        for seg in 0..4 {
            let v2 = plan.velocities[seg].norm_squared();
            let steps = 20_000;
            let h = plan.durations[seg] / steps as f64;
            for _ in 0..steps {
                spent += masses[seg] * (0.5 * v2 + 20.0) * h;
            }
        }
        let planned: f64 = plan.energies.iter().sum();
        assert!(
            (spent - planned).abs() <= 1e-6 * planned,
            "resim {spent} vs planned {planned}"
        );

        let report = verify_plan(
            &plan,
            &PlanContext {
                origin: Point::new(0.0, 0.0),
                p_star: Point::new(100.0, 0.0),
                landing: map.landing_site(),
                abort_end: map.landing_site(),
                t_r: 20.0,
                available_energy: 1.6e4,
            },
            &params(),
            1e-6,
        );
        assert!(report.ok, "violations: {:?}", report.violations);
    }

    #[test]
    fn no_budget_names_energy_abort() {
        let map = open_map();
        match solve_ocp(&uas(0.0), Point::new(100.0, 0.0), 20.0, &map, &params()) {
            Err(PlannerError::Infeasible { report }) => {
                assert_eq!(report.binding, BindingConstraint::EnergyAbort);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn impossible_speed_names_vmax() {
        let map = open_map();
        // 400 m in 2 s with generous everything else.
        match solve_ocp(&uas(1.0e9), Point::new(400.0, 0.0), 2.5, &map, &params()) {
            Err(PlannerError::Infeasible { report }) => {
                assert_eq!(report.binding, BindingConstraint::VMax);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn too_late_rendezvous_names_tmax() {
        let map = open_map();
        let mut p = params();
        p.t_max = 30.0;
        match solve_ocp(&uas(1.0e9), Point::new(100.0, 0.0), 50.0, &map, &p) {
            Err(PlannerError::Infeasible { report }) => {
                assert_eq!(report.binding, BindingConstraint::TMax);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn immediate_rendezvous_names_dwell() {
        let map = open_map();
        match solve_ocp(&uas(1.6e4), Point::new(100.0, 0.0), 1.0, &map, &params()) {
            Err(PlannerError::Infeasible { report }) => {
                assert_eq!(report.binding, BindingConstraint::Dwell);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn decision_time_monotone_in_energy() {
        let map = open_map();
        let p_star = Point::new(300.0, 100.0);
        let mut last_t1 = -f64::INFINITY;
        for k in 0..10 {
            let energy = 8.0e3 + 1.0e3 * k as f64;
            if let Ok(plan) = solve_ocp(&uas(energy), p_star, 60.0, &map, &params()) {
                assert!(
                    plan.decision_time() >= last_t1 - 1e-2,
                    "t1 dropped from {last_t1} to {} at E = {energy}",
                    plan.decision_time()
                );
                last_t1 = last_t1.max(plan.decision_time());
            }
        }
        assert!(last_t1 > 0.0, "no feasible plan on the whole grid");
    }

    #[test]
    fn feasible_plans_pass_the_independent_checker() {
        let map = open_map();
        let cases = [
            (Point::new(0.0, 0.0), Point::new(250.0, 50.0), 1.6e4, 45.0),
            (Point::new(50.0, -30.0), Point::new(300.0, 0.0), 1.2e4, 60.0),
            (Point::new(-40.0, 10.0), Point::new(150.0, 150.0), 2.0e4, 35.0),
        ];
        for (pos, p_star, energy, t_r) in cases {
            let state = UasState { position: pos, energy, t: 5.0 };
            let plan = solve_ocp(&state, p_star, 5.0 + t_r, &map, &params()).unwrap();
            let report = verify_plan(
                &plan,
                &PlanContext {
                    origin: pos,
                    p_star,
                    landing: map.landing_site(),
                    abort_end: map.landing_site(),
                    t_r: 5.0 + t_r,
                    available_energy: energy,
                },
                &params(),
                1e-6,
            );
            assert!(report.ok, "case {pos:?}: {:?}", report.violations);
        }
    }

    #[test]
    fn abort_branch_ignores_uncertainty_state() {
        // Same inputs, same abort leg, independent of anything stochastic.
        let map = open_map();
        let a = solve_ocp(&uas(1.6e4), Point::new(200.0, 0.0), 40.0, &map, &params()).unwrap();
        let b = solve_ocp(&uas(1.6e4), Point::new(200.0, 0.0), 40.0, &map, &params()).unwrap();
        assert_eq!(a.durations, b.durations);
        assert_eq!(a.energies, b.energies);
    }

    #[test]
    fn replan_prefers_fresh_then_holds_then_aborts() {
        let map = open_map();
        let plan = solve_ocp(&uas(1.6e4), Point::new(200.0, 0.0), 40.0, &map, &params()).unwrap();

        let fresh = solve_ocp(&uas(1.6e4), Point::new(200.0, 0.0), 41.0, &map, &params());
        match replan_or_hold(&plan, fresh, 1.0) {
            ReplanOutcome::Fresh(p) => assert_eq!(p.t_r, 41.0),
            other => panic!("expected fresh, got {other:?}"),
        }

        let failed = Err(PlannerError::Infeasible {
            report: InfeasibilityReport {
                binding: BindingConstraint::EnergyAbort,
                violation: 1.0,
            },
        });
        match replan_or_hold(&plan, failed, plan.solved_at + 1.0) {
            ReplanOutcome::Held(held) => {
                assert!((held.durations[0] - (plan.durations[0] - 1.0)).abs() <= 1e-9);
                assert_eq!(held.durations[1], plan.durations[1]);
            }
            other => panic!("expected hold, got {other:?}"),
        }

        let failed = Err(PlannerError::Infeasible {
            report: InfeasibilityReport {
                binding: BindingConstraint::EnergyAbort,
                violation: 1.0,
            },
        });
        match replan_or_hold(&plan, failed, plan.solved_at + plan.durations[0] + 0.5) {
            ReplanOutcome::AbortSignal => {}
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn minimum_direct_energy_closed_form() {
        let p = params();
        // 100 m at the optimal cruise sqrt(2 alpha): E = m * d * sqrt(2 alpha).
        let e = minimum_direct_energy(Point::new(0.0, 0.0), Point::new(100.0, 0.0), 3.0, &p);
        let expected = 3.0 * 100.0 * (2.0_f64 * 20.0).sqrt();
        assert!((e - expected).abs() <= 1e-9);
        // Zero distance still pays the dwell hover.
        let hover = minimum_direct_energy(Point::new(5.0, 5.0), Point::new(5.0, 5.0), 3.0, &p);
        assert!((hover - 3.0 * 20.0 * 1.0).abs() <= 1e-9);
    }
}
