//! Two-type subjective-trust model.
//!
//! With prior mass `pi` on "good" doctors whose strategies beat treat-all by
//! exactly `delta_star`, the remaining doctors' implied effect versus
//! treat-all is `v_bad = (v_u − v_t − pi·delta_star)/(1 − pi)`. A patient who
//! believes their own doctor is good with probability `belief` should follow
//! the doctor rather than the trial exactly when
//! `belief > −v_bad/(delta_star − v_bad)`.

use serde::{Deserialize, Serialize};

use crate::bounds::{proportion_bound, PhiUMode};
use crate::error::{Error, Result};
use crate::model::StudySummary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    /// Prior mass of good physicians used in the computation.
    pub pi_used: f64,
    /// Bad physicians' effect versus treat-all (negative when they hurt).
    pub v_bad: f64,
    /// Minimum belief in one's own doctor for trusting to beat the trial.
    /// Meaningful when `v_bad < 0`; at most zero otherwise.
    pub threshold: f64,
    /// Set when even the bad physicians weakly beat treat-all.
    pub trust_always: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustDecision {
    TrustDoctor,
    FollowTrial,
}

/// Compute the bad-doctor effect and the rational-trust threshold.
pub fn trust_threshold(v_t: f64, v_u: f64, delta_star: f64, pi: f64) -> Result<TrustReport> {
    for (name, x) in [("v_t", v_t), ("v_u", v_u), ("delta_star", delta_star), ("pi", pi)] {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("{name} is not finite")));
        }
    }
    if delta_star <= 0.0 {
        return Err(Error::Domain(format!(
            "delta_star = {delta_star} must be positive"
        )));
    }
    if !(0.0..1.0).contains(&pi) {
        return Err(Error::Domain(format!("pi = {pi} must lie in [0, 1)")));
    }

    let v_bad = (v_u - v_t - pi * delta_star) / (1.0 - pi);
    if v_bad >= 0.0 {
        // even bad doctors beat treat-all; the division below could hit
        // delta_star = v_bad, so resolve before it
        let threshold = if delta_star > v_bad {
            -v_bad / (delta_star - v_bad)
        } else {
            0.0
        };
        return Ok(TrustReport {
            pi_used: pi,
            v_bad,
            threshold,
            trust_always: true,
        });
    }
    Ok(TrustReport {
        pi_used: pi,
        v_bad,
        threshold: -v_bad / (delta_star - v_bad),
        trust_always: false,
    })
}

/// Trust the doctor iff the belief strictly exceeds the threshold.
pub fn decide_trust(report: &TrustReport, belief: f64) -> TrustDecision {
    if report.trust_always || belief > report.threshold {
        TrustDecision::TrustDoctor
    } else {
        TrustDecision::FollowTrial
    }
}

/// Use the proportion bound as the prior mass of good doctors, then decide.
pub fn trust_from_summary(
    summary: &StudySummary,
    delta_star: f64,
    belief: f64,
) -> Result<(TrustReport, TrustDecision)> {
    if !(0.0..=1.0).contains(&belief) {
        return Err(Error::Domain(format!("belief = {belief} outside [0, 1]")));
    }
    let pi = proportion_bound(summary, delta_star, PhiUMode::Auto)?.value;
    let report = trust_threshold(summary.v_t, summary.v_u, delta_star, pi)?;
    Ok((report, decide_trust(&report, belief)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_threshold() {
        let r = trust_threshold(0.5, 0.3, 0.05, 1.0 / 6.0).unwrap();
        assert!((r.v_bad + 0.25).abs() < 1e-12);
        assert!((r.threshold - 0.25 / 0.30).abs() < 1e-12);
        assert!(!r.trust_always);
    }

    #[test]
    fn symmetric_case_gives_half() {
        let r = trust_threshold(0.5, 0.5, 0.1, 0.5).unwrap();
        assert!((r.v_bad + 0.1).abs() < 1e-12);
        assert!((r.threshold - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trust_always_when_bad_doctors_beat_treat_all() {
        let r = trust_threshold(0.5, 0.6, 0.05, 0.5).unwrap();
        assert!((r.v_bad - 0.15).abs() < 1e-12);
        assert!(r.trust_always);
        assert!(r.threshold <= 0.0);
        assert_eq!(decide_trust(&r, 0.0), TrustDecision::TrustDoctor);
    }

    #[test]
    fn decision_boundary_is_strict() {
        let r = trust_threshold(0.5, 0.3, 0.05, 1.0 / 6.0).unwrap();
        assert_eq!(decide_trust(&r, 0.9), TrustDecision::TrustDoctor);
        assert_eq!(decide_trust(&r, r.threshold), TrustDecision::FollowTrial);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            trust_threshold(0.5, 0.3, 0.0, 0.2),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            trust_threshold(0.5, 0.3, 0.05, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn from_summary_composes_bound_and_threshold() {
        let s = StudySummary::new(0.55, 0.30, 0.35, 0.10).unwrap();
        let (report, decision) = trust_from_summary(&s, 0.05, 0.5).unwrap();
        assert!((report.pi_used - 1.0 / 6.0).abs() < 1e-12);
        assert!((report.v_bad + 0.25).abs() < 1e-12);
        assert!((report.threshold - 0.25 / 0.30).abs() < 1e-12);
        assert_eq!(decision, TrustDecision::FollowTrial);
        let (_, yes) = trust_from_summary(&s, 0.05, 0.9).unwrap();
        assert_eq!(yes, TrustDecision::TrustDoctor);
    }

    #[test]
    fn zero_prior_reduces_threshold_formula() {
        let s = StudySummary::new(0.55, 0.30, 0.35, 0.40).unwrap();
        // delta_star above phi_u zeroes the bound
        let (report, _) = trust_from_summary(&s, 0.31, 1.0).unwrap();
        assert_eq!(report.pi_used, 0.0);
        let expected_v_bad = 0.35 - 0.55;
        let expected_threshold = 0.20 / (0.31 + 0.20);
        assert!((report.v_bad - expected_v_bad).abs() < 1e-12);
        assert!((report.threshold - expected_threshold).abs() < 1e-12);
    }

    #[test]
    fn mixture_identity_holds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let v_t: f64 = rng.random_range(0.0..1.0);
            let v_u: f64 = rng.random_range(0.0..1.0);
            let delta_star: f64 = rng.random_range(1e-6..1.0);
            let pi: f64 = rng.random_range(0.0..1.0);
            let r = trust_threshold(v_t, v_u, delta_star, pi).unwrap();
            let mixture = pi * (v_t + delta_star) + (1.0 - pi) * (v_t + r.v_bad);
            assert!(
                (mixture - v_u).abs() < 1e-12,
                "identity broke: {mixture} vs {v_u}"
            );
        }
    }

    #[test]
    fn threshold_decreasing_in_delta_at_fixed_v_bad() {
        let v_bad = -0.25;
        let pi = 0.3;
        let v_t = 0.5;
        let mut prev = f64::INFINITY;
        for i in 1..=100 {
            let delta_star = i as f64 / 100.0;
            // choose v_u so that the implied v_bad stays fixed
            let v_u = v_t + pi * delta_star + (1.0 - pi) * v_bad;
            let r = trust_threshold(v_t, v_u, delta_star, pi).unwrap();
            assert!((r.v_bad - v_bad).abs() < 1e-12);
            assert!(r.threshold < prev, "threshold not decreasing at {delta_star}");
            assert!(r.threshold > 0.0 && r.threshold < 1.0);
            prev = r.threshold;
        }
    }
}
