//! LP refinement of the proportion bound using the usual-care joint law.
//!
//! The unknowns are the harm-stratum mass `q_h` (one dimension once the trial
//! margins are fixed) and a distribution over physician rules. For each
//! `q_h` on a sweep grid the rule distribution is a linear program: rules are
//! discretized on a `(t_b, t_h)` grid — the only axes that move a rule's
//! value — while the inert axes `t_hh`, `t_nn` enter the constraints only
//! through their mass-weighted totals and are kept exact via the change of
//! variables `u = Σ w·t_hh`, `v = Σ w·t_nn`. The reported bound is the max
//! over the sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpInstance, LpRel, LpRow, LpStatus};
use crate::model::{
    harm_mass_range, strata_from, validate_setting, StrataDistribution, StudySummary,
    INTERNAL_TOL,
};

/// Outcome of one swept harm-mass value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QhOutcome {
    pub q_h: f64,
    pub status: LpStatus,
    pub optimum: Option<f64>,
}

/// Result of [`lp_refined_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRefinedResult {
    /// Max over the sweep of the per-`q_h` LP optimum; 0 when every
    /// instance is infeasible.
    pub value: f64,
    pub best_q_h: Option<f64>,
    pub per_q_h: Vec<QhOutcome>,
    pub grid_m: usize,
    pub q_h_steps: usize,
}

/// Build the rule-distribution LP for one strata distribution.
///
/// Variables are the masses `w` of the `(t_b, t_h)` grid points that survive
/// the no-bad-doctors exclusion, plus the exact aggregates `u` and `v` for
/// the inert axes. Constraints match total mass and the three free cells of
/// the usual-care joint law; the objective is the mass with value at least
/// `v_t + delta_star`.
pub fn build_lp(
    summary: &StudySummary,
    strata: &StrataDistribution,
    delta_star: f64,
    grid_m: usize,
) -> Result<LpInstance> {
    let joint = summary
        .joint
        .ok_or_else(|| Error::Precondition("build_lp requires a joint law".into()))?;
    if grid_m < 2 {
        return Err(Error::Domain(format!("grid_m = {grid_m} must be >= 2")));
    }
    if (strata.v_t() - summary.v_t).abs() > 1e-9 || (strata.v_c() - summary.v_c).abs() > 1e-9 {
        return Err(Error::Precondition(
            "strata margins do not match the summary".into(),
        ));
    }

    let step = 1.0 / (grid_m - 1) as f64;
    let mut w_coords = Vec::new();
    let mut names = Vec::new();
    for i in 0..grid_m {
        let t_b = (i as f64 * step).min(1.0);
        for j in 0..grid_m {
            let t_h = (j as f64 * step).min(1.0);
            let value = strata.q_hh + strata.q_b * t_b + strata.q_h * (1.0 - t_h);
            if value < summary.v_c - INTERNAL_TOL {
                continue; // Assumption 1 excludes this rule
            }
            w_coords.push((t_b, t_h, value));
            names.push(format!("w_tb{i}_th{j}"));
        }
    }
    let g = w_coords.len();
    let n = g + 2; // plus the u, v aggregates
    names.push("u_sum".into());
    names.push("v_sum".into());

    let mut objective = vec![0.0; n];
    for (k, &(_, _, value)) in w_coords.iter().enumerate() {
        if value >= summary.v_t + delta_star - INTERNAL_TOL {
            objective[k] = 1.0;
        }
    }

    let u_col = g;
    let v_col = g + 1;
    let mut mass = vec![0.0; n];
    let mut treated_healthy = vec![0.0; n];
    let mut treated_sick = vec![0.0; n];
    let mut untreated_sick = vec![0.0; n];
    for (k, &(t_b, t_h, _)) in w_coords.iter().enumerate() {
        mass[k] = 1.0;
        treated_healthy[k] = strata.q_b * t_b;
        treated_sick[k] = strata.q_h * t_h;
        untreated_sick[k] = strata.q_b * (1.0 - t_b) + strata.q_nn;
    }
    treated_healthy[u_col] = strata.q_hh;
    treated_sick[v_col] = strata.q_nn;
    untreated_sick[v_col] = -strata.q_nn;

    let mut u_bound = vec![0.0; n];
    u_bound[u_col] = 1.0;
    let mut v_bound = vec![0.0; n];
    v_bound[v_col] = 1.0;

    let rows = vec![
        LpRow {
            coeffs: mass,
            rel: LpRel::Eq,
            rhs: 1.0,
        },
        LpRow {
            coeffs: treated_healthy,
            rel: LpRel::Eq,
            rhs: joint.a1y1,
        },
        LpRow {
            coeffs: treated_sick,
            rel: LpRel::Eq,
            rhs: joint.a1y0,
        },
        LpRow {
            coeffs: untreated_sick,
            rel: LpRel::Eq,
            rhs: joint.a0y0,
        },
        LpRow {
            coeffs: u_bound,
            rel: LpRel::Le,
            rhs: 1.0,
        },
        LpRow {
            coeffs: v_bound,
            rel: LpRel::Le,
            rhs: 1.0,
        },
    ];

    Ok(LpInstance {
        objective,
        rows,
        var_names: names,
    })
}

/// Evenly spaced sweep grid over the feasible harm-mass interval.
pub fn qh_grid(summary: &StudySummary, steps: usize) -> Vec<f64> {
    let (lo, hi) = harm_mass_range(summary.v_t, summary.v_c);
    if steps <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..steps)
        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
        .collect()
}

/// Maximize the well-performing mass over the harm-mass sweep.
///
/// Instances that cannot reproduce the joint law at a given `q_h` are
/// reported infeasible and skipped; a solver failure aborts the sweep.
pub fn lp_refined_bound(
    summary: &StudySummary,
    delta_star: f64,
    grid_m: usize,
    q_h_steps: usize,
) -> Result<LpRefinedResult> {
    if !delta_star.is_finite() || delta_star < 0.0 {
        return Err(Error::Domain(format!(
            "delta_star = {delta_star} must be a finite nonnegative number"
        )));
    }
    if q_h_steps == 0 {
        return Err(Error::Domain("q_h_steps must be >= 1".into()));
    }
    let report = validate_setting(summary)?;
    if report.has_fail() {
        return Err(Error::Validation(report));
    }
    if summary.joint.is_none() {
        return Err(Error::Precondition(
            "lp_refined_bound requires a joint law".into(),
        ));
    }

    let grid = qh_grid(summary, q_h_steps);
    let outcomes: Vec<Result<QhOutcome>> = grid
        .par_iter()
        .map(|&q_h| {
            let strata = strata_from(summary, q_h)?;
            let instance = build_lp(summary, &strata, delta_star, grid_m)?;
            let sol = solve_lp(&instance);
            match sol.status {
                LpStatus::Optimal => Ok(QhOutcome {
                    q_h,
                    status: LpStatus::Optimal,
                    optimum: sol.objective,
                }),
                LpStatus::Infeasible => Ok(QhOutcome {
                    q_h,
                    status: LpStatus::Infeasible,
                    optimum: None,
                }),
                LpStatus::Unbounded | LpStatus::Failed => Err(Error::Solver(format!(
                    "q_h = {q_h}: {:?} {}",
                    sol.status,
                    sol.message.unwrap_or_default()
                ))),
            }
        })
        .collect();

    let mut per_q_h = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        per_q_h.push(o?);
    }

    let mut value = 0.0f64;
    let mut best_q_h = None;
    for o in &per_q_h {
        if let Some(opt) = o.optimum {
            if opt > value {
                value = opt;
                best_q_h = Some(o.q_h);
            }
        }
    }
    Ok(LpRefinedResult {
        value: value.clamp(0.0, 1.0),
        best_q_h,
        per_q_h,
        grid_m,
        q_h_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{phi_u_for_mode, proportion_bound, PhiUMode, ResolvedPhiUMode};
    use crate::model::JointLaw;
    use crate::sharpness::construct_sharp_population;

    fn worked_summary() -> StudySummary {
        StudySummary::with_joint(
            0.6,
            0.3,
            0.5,
            0.5,
            JointLaw {
                a1y1: 0.35,
                a1y0: 0.15,
                a0y1: 0.15,
                a0y0: 0.35,
            },
        )
        .unwrap()
    }

    #[test]
    fn corner_grid_instance_shape() {
        let s = worked_summary();
        let strata = strata_from(&s, 0.1).unwrap();
        let inst = build_lp(&s, &strata, 0.05, 2).unwrap();
        assert!(inst.n_vars() <= 12);
        let eq_rows = inst.rows.iter().filter(|r| r.rel == LpRel::Eq).count();
        assert_eq!(eq_rows, 4);
        // corner (t_b=0, t_h=1) violates Assumption 1 and is excluded
        assert_eq!(inst.n_vars(), 3 + 2);
    }

    #[test]
    fn zero_harm_strata_has_empty_objective() {
        let s = worked_summary();
        let strata = strata_from(&s, 0.0).unwrap();
        let inst = build_lp(&s, &strata, 0.05, 5).unwrap();
        assert!(inst.objective.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn missing_joint_is_a_precondition_error() {
        let s = StudySummary::new(0.6, 0.3, 0.5, 0.5).unwrap();
        let strata = strata_from(&s, 0.1).unwrap();
        assert!(matches!(
            build_lp(&s, &strata, 0.05, 5),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            lp_refined_bound(&s, 0.05, 5, 5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tiny_grid_is_a_domain_error() {
        let s = worked_summary();
        let strata = strata_from(&s, 0.1).unwrap();
        assert!(matches!(
            build_lp(&s, &strata, 0.05, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn worked_instance_respects_ratio_term() {
        let s = worked_summary();
        let strata = strata_from(&s, 0.1).unwrap();
        let inst = build_lp(&s, &strata, 0.05, 21).unwrap();
        let sol = solve_lp(&inst);
        assert_eq!(sol.status, LpStatus::Optimal);
        let ratio = 0.2 / 0.35;
        assert!(
            sol.objective.unwrap() <= ratio + 1e-9,
            "optimum {} above ratio term {ratio}",
            sol.objective.unwrap()
        );
    }

    #[test]
    fn sweep_dominated_by_closed_form() {
        let s = worked_summary();
        for delta_star in [0.0, 0.02, 0.05, 0.1] {
            let refined = lp_refined_bound(&s, delta_star, 11, 21).unwrap();
            let closed = proportion_bound(&s, delta_star, PhiUMode::WithJoint)
                .unwrap()
                .value;
            assert!(
                refined.value <= closed + 1e-6,
                "delta_star {delta_star}: refined {} > closed {closed}",
                refined.value
            );
        }
    }

    #[test]
    fn margin_above_cap_gives_zero() {
        let s = worked_summary();
        // min(v_c, 1 - v_t) = 0.3
        let refined = lp_refined_bound(&s, 0.35, 5, 11).unwrap();
        assert_eq!(refined.value, 0.0);
    }

    #[test]
    fn sharp_construction_is_nearly_feasible_for_the_lp() {
        let base = StudySummary::new(0.6, 0.2, 0.3, 0.68).unwrap();
        let c = construct_sharp_population(&base, 0.1).unwrap();
        let implied = c.population.implied_summary();
        // q_h sweep: cap = 0.2, 21 steps puts 0.1 exactly on the grid
        let refined = lp_refined_bound(&implied, 0.1, 41, 21).unwrap();
        let attained = c.attained_proportion();
        assert!(
            refined.value >= attained - 0.02,
            "refined {} below attained {attained}",
            refined.value
        );
    }

    #[test]
    fn refinement_is_monotone_on_nested_grids() {
        let s = worked_summary();
        let mut prev = -1.0;
        for grid_m in [3, 5, 9, 17] {
            let refined = lp_refined_bound(&s, 0.05, grid_m, 13).unwrap();
            assert!(
                refined.value >= prev - 1e-9,
                "value dropped at grid_m {grid_m}: {} < {prev}",
                refined.value
            );
            prev = refined.value;
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let s = worked_summary();
        let a = lp_refined_bound(&s, 0.05, 11, 21).unwrap();
        let b = lp_refined_bound(&s, 0.05, 11, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn phi_u_modes_agree_on_marginal_cap() {
        let s = worked_summary();
        let marg = phi_u_for_mode(&s, ResolvedPhiUMode::MarginalsOnly);
        assert!((marg - 0.3).abs() < 1e-15);
        let joint = phi_u_for_mode(&s, ResolvedPhiUMode::WithJoint);
        assert!(joint <= marg + 1e-15);
    }
}
