//! Explicit physician population attaining the proportion bound.
//!
//! The construction puts harm mass `q_h = delta_star` in the strata, assigns
//! mass `pi` (the bound value) to "good" physicians who treat exactly the
//! benefit stratum beyond a shared background rate, and the remaining mass to
//! one "bad" type whose mean gain balances the usual-care mean. A single
//! interpolation parameter `lambda` slides every type's treatment probability
//! across its attainable interval so the mixture reproduces the observed
//! treatment share exactly.

use serde::{Deserialize, Serialize};

use crate::bounds::{proportion_bound, PhiUMode};
use crate::error::{Error, Result};
use crate::model::{
    strata_from, validate_setting, PhysicianPopulation, PhysicianType, StudySummary, INTERNAL_TOL,
};

/// A bound-attaining population together with the parameters that built it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpConstruction {
    /// Mass of good physicians; equals the marginals-only bound value.
    pub pi: f64,
    /// Treatment-probability interpolation parameter in [0, 1].
    pub lambda: f64,
    /// Bad physicians' mean gain over control.
    pub x_bar_b: f64,
    /// The advantage margin the good physicians attain exactly.
    pub delta_star: f64,
    /// Two types (good first) when `pi > 0`, otherwise a single bad type.
    pub population: PhysicianPopulation,
}

impl SharpConstruction {
    /// Mass of types whose value clears `v_t + delta_star`.
    pub fn attained_proportion(&self) -> f64 {
        self.population.proportion_with_advantage(self.delta_star)
    }
}

/// Largest treatment probability compatible with a gain `x` over control,
/// at ATE `delta`: `1 − delta + x` while `x <= delta`, then `1 + delta − x`.
pub fn max_treat_prob(x: f64, delta: f64) -> Result<f64> {
    if !x.is_finite() || !delta.is_finite() {
        return Err(Error::InvalidInput("non-finite argument".into()));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!(
            "gain over control x = {x} is negative (Assumption 1 violated)"
        )));
    }
    if x > 1.0 {
        return Err(Error::Domain(format!("gain over control x = {x} exceeds 1")));
    }
    if delta <= 0.0 || delta >= 1.0 {
        return Err(Error::Domain(format!("ate = {delta} must lie in (0, 1)")));
    }
    Ok(if x <= delta {
        1.0 - delta + x
    } else {
        1.0 + delta - x
    })
}

/// Build the bound-attaining population for `summary` at margin `delta_star`.
///
/// Requires `0 < delta_star <= min(v_c, 1 − v_t)` and a treatment share in
/// the range `[v_u − v_c, 1 − (v_t − v_u)]` that any population satisfying
/// the no-bad-doctors assumption can produce.
pub fn construct_sharp_population(
    summary: &StudySummary,
    delta_star: f64,
) -> Result<SharpConstruction> {
    let report = validate_setting(summary)?;
    if report.has_fail() {
        return Err(Error::Validation(report));
    }
    let cap = summary.v_c.min(1.0 - summary.v_t);
    if !delta_star.is_finite() || delta_star <= 0.0 {
        return Err(Error::Domain(format!(
            "delta_star = {delta_star} must be positive"
        )));
    }
    if delta_star > cap + INTERNAL_TOL {
        return Err(Error::Domain(format!(
            "delta_star = {delta_star} exceeds min(v_c, 1 - v_t) = {cap}"
        )));
    }
    let ate = summary.v_t - summary.v_c;
    let pie = summary.v_u - summary.v_c;
    if summary.p < pie - INTERNAL_TOL {
        return Err(Error::Infeasible(format!(
            "p = {} below v_u - v_c = {pie}: no population satisfies Assumption 1",
            summary.p
        )));
    }
    let p_max = 1.0 - ate + pie;
    if summary.p > p_max + INTERNAL_TOL {
        return Err(Error::Infeasible(format!(
            "p = {} above 1 - (v_t - v_u) = {p_max}: no population satisfies Assumption 1",
            summary.p
        )));
    }

    let strata = strata_from(summary, delta_star)?;
    let pi = proportion_bound(summary, delta_star, PhiUMode::MarginalsOnly)?.value;

    let good_gain = ate + delta_star; // equals q_b
    let lambda_raw = (summary.p - pie) / (1.0 - ate - 2.0 * delta_star * pi);
    assert!(
        (-1e-9..=1.0 + 1e-9).contains(&lambda_raw),
        "interpolation parameter {lambda_raw} outside [0, 1]; unreachable for feasible inputs"
    );
    let lambda = lambda_raw.clamp(0.0, 1.0);

    let x_bar_b = if pi > 0.0 {
        ((pie - pi * good_gain) / (1.0 - pi)).max(0.0)
    } else {
        pie
    };
    let bad = PhysicianType {
        mass: 1.0 - pi,
        t_hh: lambda,
        t_b: ((x_bar_b + lambda * delta_star) / strata.q_b).clamp(0.0, 1.0),
        t_h: lambda,
        t_nn: lambda,
    };
    let doctors = if pi > 0.0 {
        let good = PhysicianType {
            mass: pi,
            t_hh: lambda,
            t_b: 1.0,
            t_h: 0.0,
            t_nn: lambda,
        };
        vec![good, bad]
    } else {
        vec![bad]
    };

    Ok(SharpConstruction {
        pi,
        lambda,
        x_bar_b,
        delta_star,
        population: PhysicianPopulation { strata, doctors },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentCheck {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
}

/// Residual report of [`verify_attainment`]; never throws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentReport {
    pub checks: Vec<AttainmentCheck>,
    pub passed: bool,
}

/// Recompute the implied marginals, per-type Assumption-1 slack, and attained
/// proportion of a construction and compare them against `summary` and the
/// marginals-only bound at `delta_star`.
pub fn verify_attainment(
    construction: &SharpConstruction,
    summary: &StudySummary,
    delta_star: f64,
) -> AttainmentReport {
    let pop = &construction.population;
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64| {
        checks.push(AttainmentCheck {
            name: name.into(),
            pass: residual.abs() <= INTERNAL_TOL,
            residual,
        });
    };

    push("v_t_match", pop.strata.v_t() - summary.v_t);
    push("v_c_match", pop.strata.v_c() - summary.v_c);
    push("v_u_match", pop.implied_v_u() - summary.v_u);
    push("p_match", pop.implied_p() - summary.p);

    let min_gain = pop
        .doctors
        .iter()
        .map(|d| d.gain_over_control(&pop.strata))
        .fold(f64::INFINITY, f64::min);
    push("assumption1", (-min_gain).max(0.0));

    let bound = proportion_bound(summary, delta_star, PhiUMode::MarginalsOnly)
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    push(
        "attainment",
        construction.attained_proportion() - bound,
    );

    let rule_excess = pop
        .doctors
        .iter()
        .flat_map(|d| [d.t_hh, d.t_b, d.t_h, d.t_nn, d.mass])
        .map(|t| (-t).max(t - 1.0).max(0.0))
        .fold(0.0f64, f64::max);
    push("rules_in_range", rule_excess);
    push("mass_total", pop.mass_sum() - 1.0);

    let passed = checks.iter().all(|c| c.pass);
    AttainmentReport { checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(v_t: f64, v_c: f64, v_u: f64, p: f64) -> StudySummary {
        StudySummary::new(v_t, v_c, v_u, p).unwrap()
    }

    #[test]
    fn max_treat_prob_on_both_branches() {
        assert!((max_treat_prob(0.0, 0.25).unwrap() - 0.75).abs() < 1e-15);
        assert!((max_treat_prob(0.25, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!((max_treat_prob(0.30, 0.25).unwrap() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn max_treat_prob_rejects_negative_gain() {
        assert!(matches!(
            max_treat_prob(-0.1, 0.25),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn construction_reproduces_worked_parameters() {
        let s = summary(0.55, 0.30, 0.35, 0.40);
        let c = construct_sharp_population(&s, 0.05).unwrap();
        assert!((c.pi - 1.0 / 6.0).abs() < 1e-12);
        assert!((c.x_bar_b - 0.0).abs() < 1e-12);
        // lambda = 0.35 / (0.75 - 0.1/6) = 21/44
        assert!((c.lambda - 21.0 / 44.0).abs() < 1e-12);
        let q = c.population.strata;
        assert!((q.q_hh - 0.25).abs() < 1e-12);
        assert!((q.q_b - 0.30).abs() < 1e-12);
        assert!((q.q_h - 0.05).abs() < 1e-12);
        assert!((q.q_nn - 0.40).abs() < 1e-12);
        assert!(verify_attainment(&c, &s, 0.05).passed);
    }

    #[test]
    fn construction_with_share_term_binding() {
        let s = summary(0.6, 0.2, 0.3, 0.68);
        let c = construct_sharp_population(&s, 0.1).unwrap();
        assert!((c.pi - 0.1).abs() < 1e-12);
        // the share term binds, so the mixture sits at its maximal treatment share
        assert!((c.lambda - 1.0).abs() < 1e-12);
        assert!((c.attained_proportion() - 0.1).abs() < 1e-12);
        assert!(verify_attainment(&c, &s, 0.1).passed);
    }

    #[test]
    fn construction_rejects_margin_above_cap() {
        let s = summary(0.6, 0.2, 0.3, 0.25);
        assert!(matches!(
            construct_sharp_population(&s, 0.25),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn construction_rejects_infeasible_treatment_share() {
        // p below v_u - v_c
        assert!(matches!(
            construct_sharp_population(&summary(0.6, 0.2, 0.5, 0.1), 0.1),
            Err(Error::Infeasible(_))
        ));
        // p above 1 - (v_t - v_u)
        assert!(matches!(
            construct_sharp_population(&summary(0.6, 0.2, 0.3, 0.9), 0.1),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn perturbed_rule_breaks_marginal_match() {
        let s = summary(0.55, 0.30, 0.35, 0.40);
        let mut c = construct_sharp_population(&s, 0.05).unwrap();
        c.population.doctors[1].t_b += 0.01;
        let report = verify_attainment(&c, &s, 0.05);
        assert!(!report.passed);
        let failing: Vec<&str> = report
            .checks
            .iter()
            .filter(|k| !k.pass)
            .map(|k| k.name.as_str())
            .collect();
        assert!(failing.contains(&"v_u_match"));
        assert!(failing.contains(&"p_match"));
    }

    #[test]
    fn zero_bound_gives_single_type_at_mean_gain() {
        // dyadic values keep the share term exactly zero: p sits at the
        // feasibility edge 1 - ate + pie = 0.625
        let s = summary(0.75, 0.25, 0.375, 0.625);
        let c = construct_sharp_population(&s, 0.125).unwrap();
        assert_eq!(c.pi, 0.0);
        assert_eq!(c.population.doctors.len(), 1);
        assert!((c.x_bar_b - 0.125).abs() < 1e-12);
        assert_eq!(c.attained_proportion(), 0.0);
        assert!(verify_attainment(&c, &s, 0.125).passed);
    }

    #[test]
    fn good_and_bad_treatment_probabilities_stay_in_their_intervals() {
        let s = summary(0.55, 0.30, 0.35, 0.40);
        let c = construct_sharp_population(&s, 0.05).unwrap();
        let q = &c.population.strata;
        let ate = 0.25;
        let good_p = c.population.doctors[0].treat_prob(q);
        let bad_p = c.population.doctors[1].treat_prob(q);
        let expected_good = ate + 0.05 + c.lambda * (1.0 - ate - 2.0 * 0.05);
        let expected_bad = c.x_bar_b + c.lambda * (1.0 - ate);
        assert!((good_p - expected_good).abs() < 1e-12);
        assert!((bad_p - expected_bad).abs() < 1e-12);
        assert!(good_p <= 1.0 - 0.05 + 1e-12);
        assert!(bad_p <= 1.0 - ate + c.x_bar_b + 1e-12);
    }

    #[test]
    fn random_tuples_attain_the_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut built = 0usize;
        while built < 500 {
            let v_c: f64 = rng.random_range(0.01..0.9);
            let v_t: f64 = rng.random_range(v_c..1.0);
            if v_t - v_c < 1e-3 || v_t >= 0.999 {
                continue;
            }
            let v_u: f64 = rng.random_range(v_c..v_t);
            if v_u - v_c < 1e-4 || v_t - v_u < 1e-4 {
                continue;
            }
            let cap = v_c.min(1.0 - v_t);
            if cap < 1e-3 {
                continue;
            }
            let delta_star = rng.random_range(cap * 1e-3..=cap);
            let pie = v_u - v_c;
            let p = rng.random_range(pie..=1.0 - (v_t - v_c) + pie);
            let s = summary(v_t, v_c, v_u, p);
            let c = construct_sharp_population(&s, delta_star).unwrap();
            let report = verify_attainment(&c, &s, delta_star);
            assert!(
                report.passed,
                "attainment failed for {s:?} delta_star={delta_star}: {report:?}"
            );
            built += 1;
        }
    }
}
