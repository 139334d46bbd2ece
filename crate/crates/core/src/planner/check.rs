//! Independent plan verification.
//!
//! Re-evaluates every plan constraint from the raw plan fields alone —
//! kinematic chains, speed and dwell limits, time caps, segment energies and
//! both branch budgets. Shares no code with the solver so it can stand as an
//! oracle against it.

use super::{MissionPlan, PlannerParams};
use crate::geometry::Point;

/// What the plan was solved against.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext {
    pub origin: Point,
    pub p_star: Point,
    pub landing: Point,
    pub abort_end: Point,
    /// Requested rendezvous time (absolute, s).
    pub t_r: f64,
    /// Energy budget at solve time (J).
    pub available_energy: f64,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub ok: bool,
    /// (constraint name, violation magnitude) for every failed check.
    pub violations: Vec<(String, f64)>,
}

/// Verify a plan against `ctx` at tolerance `tol` (relative where the
/// quantity has a natural scale).
pub fn verify_plan(
    plan: &MissionPlan,
    ctx: &PlanContext,
    params: &PlannerParams,
    tol: f64,
) -> CheckReport {
    let mut violations: Vec<(String, f64)> = Vec::new();
    let mut check = |name: &str, violation: f64, scale: f64| {
        if violation > tol * scale.max(1.0) {
            violations.push((name.to_string(), violation));
        }
    };

    let [t1, t2, t3, t4] = plan.durations;
    let [v1, v2, v3, v4] = plan.velocities;

    // Kinematic chains, recomputed step by step from raw fields.
    let x1 = ctx.origin + v1 * t1;
    let x2 = x1 + v2 * t2;
    let x3 = x2 + v3 * t3;
    let x4 = x1 + v4 * t4;
    check("kinematics-pnr", (x1 - plan.pnr).norm(), 1.0);
    check("kinematics-rendezvous", (x2 - ctx.p_star).norm(), 1.0);
    check("kinematics-landing", (x3 - ctx.landing).norm(), 1.0);
    check("kinematics-abort", (x4 - ctx.abort_end).norm(), 1.0);

    // Rendezvous timing: plan reaches p_star at the requested time.
    check(
        "timing-rendezvous",
        ((plan.solved_at + t1 + t2) - ctx.t_r).abs(),
        ctx.t_r.abs(),
    );

    // Speed and dwell limits.
    for (i, v) in [v1, v2, v3, v4].iter().enumerate() {
        check(&format!("v_max-segment-{}", i + 1), v.norm() - params.v_max, params.v_max);
    }
    for (i, t) in [t1, t2, t3, t4].iter().enumerate() {
        check(&format!("dwell-segment-{}", i + 1), params.t_c - t, params.t_c);
    }

    // Time caps on both branches.
    check("t_max-rendezvous", t1 + t2 + t3 - params.t_max, params.t_max);
    check("t_max-abort", t1 + t4 - params.t_max, params.t_max);

    // Segment energies from the energy dynamics, against the stored values
    // and both branch budgets.
    let masses = [params.m_a, params.m_a, params.m_b, params.m_a];
    let mut recomputed = [0.0_f64; 4];
    for i in 0..4 {
        let v = plan.velocities[i].norm();
        recomputed[i] = masses[i] * plan.durations[i] * (0.5 * v * v + params.alpha);
        check(
            &format!("energy-bookkeeping-segment-{}", i + 1),
            (recomputed[i] - plan.energies[i]).abs(),
            recomputed[i].abs(),
        );
    }
    check(
        "energy-rendezvous",
        recomputed[0] + recomputed[1] + recomputed[2] - ctx.available_energy,
        ctx.available_energy,
    );
    check(
        "energy-abort",
        recomputed[0] + recomputed[3] - ctx.available_energy,
        ctx.available_energy,
    );

    CheckReport {
        ok: violations.is_empty(),
        violations,
    }
}
