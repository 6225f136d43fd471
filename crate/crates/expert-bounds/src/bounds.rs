//! Closed-form identification quantities.
//!
//! Three operations over a [`StudySummary`]:
//!
//! * [`harm_bounds`] — the interval `[phi_l, phi_u]` for the proportion
//!   counterfactually harmed by treatment, `P(Y(1) < Y(0))`;
//! * [`gain`] — the informativeness gain `G = v_u − (p·v_t + (1−p)·v_c)`,
//!   equal to `cov(A, Y(1) − Y(0))`; a positive value certifies that
//!   physician decisions correlate, in the right direction, with some
//!   effect modifier;
//! * [`proportion_bound`] — the sharp upper bound on the proportion of
//!   physicians whose strategy value exceeds the treat-all value `v_t` by at
//!   least `delta_star`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_setting, StudySummary, INTERNAL_TOL};

/// Which candidate terms enter the harm upper bound `phi_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiUMode {
    /// `with_joint` when the summary carries a joint law, else `marginals_only`.
    Auto,
    /// All four candidate terms; requires the joint law.
    WithJoint,
    /// Only `v_c` and `1 − v_t`.
    MarginalsOnly,
}

/// The mode actually applied after resolving `Auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolvedPhiUMode {
    WithJoint,
    MarginalsOnly,
}

/// One evaluated candidate term of the harm upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmTerm {
    pub name: String,
    pub value: f64,
}

/// Bounds `[phi_l, phi_u]` on the proportion harmed, with every candidate
/// upper-bound term that was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmBounds {
    pub phi_l: f64,
    pub phi_u: f64,
    pub terms_used: Vec<HarmTerm>,
}

/// Which branch of the bound applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    DeltaZero,
    Interior,
    AbovePhiU,
}

/// Which term produced the reported value on the interior branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingTerm {
    RatioTerm,
    TreatmentShareTerm,
    ClampZero,
    NotApplicable,
}

/// Result of [`proportion_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Upper bound on the proportion of physicians with `V^d >= v_t + delta_star`.
    pub value: f64,
    pub branch: BoundBranch,
    pub binding_term: BindingTerm,
    pub phi_u_used: f64,
    pub phi_u_mode: ResolvedPhiUMode,
}

/// Bounds on the proportion counterfactually harmed by treatment.
///
/// `phi_l = max(0, v_c − v_u)`. `phi_u` is the minimum of `v_c`, `1 − v_t`,
/// and — when the joint law is present — the discordant-cell sum
/// `P(Y=1,A=0) + P(Y=0,A=1)` and the residual term
/// `v_c − P(Y=1,A=0) + (1 − v_t − P(Y=0,A=1))`.
pub fn harm_bounds(summary: &StudySummary) -> HarmBounds {
    let phi_l = (summary.v_c - summary.v_u).max(0.0);
    let mut terms = vec![
        HarmTerm {
            name: "v_c".into(),
            value: summary.v_c,
        },
        HarmTerm {
            name: "one_minus_v_t".into(),
            value: 1.0 - summary.v_t,
        },
    ];
    if let Some(j) = &summary.joint {
        terms.push(HarmTerm {
            name: "joint_discordant".into(),
            value: j.a0y1 + j.a1y0,
        });
        terms.push(HarmTerm {
            name: "joint_residual".into(),
            value: summary.v_c - j.a0y1 + (1.0 - summary.v_t - j.a1y0),
        });
    }
    let phi_u = terms
        .iter()
        .map(|t| t.value)
        .fold(f64::INFINITY, f64::min);
    HarmBounds {
        phi_l,
        phi_u,
        terms_used: terms,
    }
}

/// Informativeness gain `G = v_u − (p·v_t + (1−p)·v_c)`.
pub fn gain(summary: &StudySummary) -> f64 {
    summary.v_u - (summary.p * summary.v_t + (1.0 - summary.p) * summary.v_c)
}

fn resolve_mode(summary: &StudySummary, mode: PhiUMode) -> Result<ResolvedPhiUMode> {
    match mode {
        PhiUMode::Auto => Ok(if summary.joint.is_some() {
            ResolvedPhiUMode::WithJoint
        } else {
            ResolvedPhiUMode::MarginalsOnly
        }),
        PhiUMode::WithJoint => {
            if summary.joint.is_none() {
                return Err(Error::Precondition(
                    "phi_u_mode with_joint requires a joint law".into(),
                ));
            }
            Ok(ResolvedPhiUMode::WithJoint)
        }
        PhiUMode::MarginalsOnly => Ok(ResolvedPhiUMode::MarginalsOnly),
    }
}

/// The harm upper bound under a resolved mode.
pub fn phi_u_for_mode(summary: &StudySummary, mode: ResolvedPhiUMode) -> f64 {
    match mode {
        ResolvedPhiUMode::WithJoint => harm_bounds(summary).phi_u,
        ResolvedPhiUMode::MarginalsOnly => summary.v_c.min(1.0 - summary.v_t),
    }
}

/// Sharp upper bound on the proportion of physicians outperforming treat-all
/// by `delta_star`.
///
/// * `delta_star = 0`: `(v_u − v_c)/(v_t − v_c)`.
/// * `0 < delta_star <= phi_u`: the smaller of the ratio term
///   `(v_u − v_c)/(v_t − v_c + delta_star)` and the treatment-share term
///   `(1 − (v_t − v_c) + (v_u − v_c) − p)/(2·delta_star)`, clamped to [0, 1].
///   A clamp at zero means no physician compatible with the data clears the
///   margin.
/// * `delta_star > phi_u`: zero.
///
/// Ties `delta_star = phi_u` are resolved to the interior branch within
/// 1e-12.
pub fn proportion_bound(
    summary: &StudySummary,
    delta_star: f64,
    mode: PhiUMode,
) -> Result<BoundReport> {
    if !delta_star.is_finite() || delta_star < 0.0 {
        return Err(Error::Domain(format!(
            "delta_star = {delta_star} must be a finite nonnegative number"
        )));
    }
    let report = validate_setting(summary)?;
    if report.has_fail() {
        return Err(Error::Validation(report));
    }
    let resolved = resolve_mode(summary, mode)?;
    let phi_u_used = phi_u_for_mode(summary, resolved);

    let ate = summary.v_t - summary.v_c;
    let pie = summary.v_u - summary.v_c;

    if delta_star == 0.0 {
        return Ok(BoundReport {
            value: pie / ate,
            branch: BoundBranch::DeltaZero,
            binding_term: BindingTerm::NotApplicable,
            phi_u_used,
            phi_u_mode: resolved,
        });
    }
    if delta_star > phi_u_used + INTERNAL_TOL {
        return Ok(BoundReport {
            value: 0.0,
            branch: BoundBranch::AbovePhiU,
            binding_term: BindingTerm::NotApplicable,
            phi_u_used,
            phi_u_mode: resolved,
        });
    }

    let ratio = pie / (ate + delta_star);
    let share = (1.0 - ate + pie - summary.p) / (2.0 * delta_star);
    let raw = ratio.min(share);
    let (value, binding_term) = if raw < 0.0 {
        (0.0, BindingTerm::ClampZero)
    } else if ratio <= share {
        (raw.min(1.0), BindingTerm::RatioTerm)
    } else {
        (raw.min(1.0), BindingTerm::TreatmentShareTerm)
    };
    Ok(BoundReport {
        value,
        branch: BoundBranch::Interior,
        binding_term,
        phi_u_used,
        phi_u_mode: resolved,
    })
}
