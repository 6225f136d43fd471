//! Domain types, input validation, and feasibility checks.
//!
//! The observed data are four marginal summaries from the same population:
//! `v_t` (treated-arm mean outcome), `v_c` (control-arm mean), `v_u`
//! (usual-care mean), and `p` (usual-care treatment share), optionally
//! joined by the usual-care joint law of treatment and outcome. Unobserved
//! structure is carried by the four principal strata of the potential
//! outcomes `(Y(1), Y(0))` and a mixture of physician rule types, each rule
//! giving a treatment probability within every stratum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for equality-type checks on user-supplied inputs.
pub const INPUT_TOL: f64 = 1e-9;
/// Tolerance for equality-type checks on internally constructed objects.
pub const INTERNAL_TOL: f64 = 1e-12;

/// Usual-care joint law `P(A=a, Y=y)` over treatment and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLaw {
    /// P(A=1, Y=1)
    pub a1y1: f64,
    /// P(A=1, Y=0)
    pub a1y0: f64,
    /// P(A=0, Y=1)
    pub a0y1: f64,
    /// P(A=0, Y=0)
    pub a0y0: f64,
}

impl JointLaw {
    pub fn cells(&self) -> [f64; 4] {
        [self.a1y1, self.a1y0, self.a0y1, self.a0y0]
    }

    pub fn sum(&self) -> f64 {
        self.a1y1 + self.a1y0 + self.a0y1 + self.a0y0
    }

    /// Implied P(A=1).
    pub fn treated_share(&self) -> f64 {
        self.a1y1 + self.a1y0
    }

    /// Implied P(Y=1).
    pub fn outcome_mean(&self) -> f64 {
        self.a1y1 + self.a0y1
    }
}

/// Observed marginal summaries of the nested trial and the usual-care arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    /// Trial treatment-arm mean, E[Y(1)].
    pub v_t: f64,
    /// Trial control-arm mean, E[Y(0)].
    pub v_c: f64,
    /// Usual-care mean outcome, E[Y].
    pub v_u: f64,
    /// Usual-care treatment share, P(A=1).
    pub p: f64,
    /// Usual-care joint law, when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointLaw>,
}

impl StudySummary {
    /// Build a summary from the four marginals, rejecting non-finite or
    /// out-of-range values.
    pub fn new(v_t: f64, v_c: f64, v_u: f64, p: f64) -> Result<Self> {
        let s = StudySummary {
            v_t,
            v_c,
            v_u,
            p,
            joint: None,
        };
        s.check_numeric()?;
        Ok(s)
    }

    /// Build a summary carrying the usual-care joint law.
    ///
    /// Only numeric sanity is enforced here; consistency of the joint with
    /// `p` and `v_u` is reported (not thrown) by [`validate_setting`].
    pub fn with_joint(v_t: f64, v_c: f64, v_u: f64, p: f64, joint: JointLaw) -> Result<Self> {
        let s = StudySummary {
            v_t,
            v_c,
            v_u,
            p,
            joint: Some(joint),
        };
        s.check_numeric()?;
        Ok(s)
    }

    fn check_numeric(&self) -> Result<()> {
        let fields = [
            ("v_t", self.v_t),
            ("v_c", self.v_c),
            ("v_u", self.v_u),
            ("p", self.p),
        ];
        for (name, x) in fields {
            if !x.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite")));
            }
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidInput(format!(
                    "{name} = {x} outside [0, 1]"
                )));
            }
        }
        if let Some(j) = &self.joint {
            for (name, x) in [
                ("p_a1y1", j.a1y1),
                ("p_a1y0", j.a1y0),
                ("p_a0y1", j.a0y1),
                ("p_a0y0", j.a0y0),
            ] {
                if !x.is_finite() {
                    return Err(Error::InvalidInput(format!("{name} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Masses of the four principal strata of `(Y(1), Y(0))`.
///
/// `q_hh`: always-healthy (1,1); `q_b`: benefit (1,0); `q_h`: harm (0,1);
/// `q_nn`: never-healthy (0,0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrataDistribution {
    pub q_hh: f64,
    pub q_b: f64,
    pub q_h: f64,
    pub q_nn: f64,
}

impl StrataDistribution {
    pub fn cells(&self) -> [f64; 4] {
        [self.q_hh, self.q_b, self.q_h, self.q_nn]
    }

    /// Implied treated-arm mean, E[Y(1)] = q_hh + q_b.
    pub fn v_t(&self) -> f64 {
        self.q_hh + self.q_b
    }

    /// Implied control-arm mean, E[Y(0)] = q_hh + q_h.
    pub fn v_c(&self) -> f64 {
        self.q_hh + self.q_h
    }
}

/// Feasible interval for the harm-stratum mass given the trial margins:
/// all four strata cells must be nonnegative.
pub fn harm_mass_range(v_t: f64, v_c: f64) -> (f64, f64) {
    let lo = (v_c - v_t).max(0.0);
    let hi = v_c.min(1.0 - v_t);
    (lo, hi)
}

/// The unique strata distribution with harm mass `q_h` matching the margins
/// of `summary`.
pub fn strata_from(summary: &StudySummary, q_h: f64) -> Result<StrataDistribution> {
    if !q_h.is_finite() {
        return Err(Error::InvalidInput("q_h is not finite".into()));
    }
    let q_hh = summary.v_c - q_h;
    let q_b = summary.v_t - summary.v_c + q_h;
    let q_nn = 1.0 - summary.v_t - q_h;
    let negative: Vec<String> = [("q_h", q_h), ("q_hh", q_hh), ("q_b", q_b), ("q_nn", q_nn)]
        .iter()
        .filter(|(_, cell)| *cell < -INTERNAL_TOL)
        .map(|(name, cell)| format!("{name} = {cell}"))
        .collect();
    if !negative.is_empty() {
        return Err(Error::Domain(format!(
            "q_h = {q_h} makes stratum cells negative: {}",
            negative.join(", ")
        )));
    }
    Ok(StrataDistribution {
        q_hh: q_hh.max(0.0),
        q_b: q_b.max(0.0),
        q_h: q_h.max(0.0),
        q_nn: q_nn.max(0.0),
    })
}

/// One physician rule type: its population mass and its treatment
/// probability within each principal stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicianType {
    pub mass: f64,
    pub t_hh: f64,
    pub t_b: f64,
    pub t_h: f64,
    pub t_nn: f64,
}

impl PhysicianType {
    /// Expected outcome under this rule: q_hh + q_b·t_b + q_h·(1 − t_h).
    pub fn value(&self, strata: &StrataDistribution) -> f64 {
        strata.q_hh + strata.q_b * self.t_b + strata.q_h * (1.0 - self.t_h)
    }

    /// Overall treatment probability of this rule.
    pub fn treat_prob(&self, strata: &StrataDistribution) -> f64 {
        strata.q_hh * self.t_hh
            + strata.q_b * self.t_b
            + strata.q_h * self.t_h
            + strata.q_nn * self.t_nn
    }

    /// Value gain over treat-none: V^d − V_C = q_b·t_b − q_h·t_h.
    pub fn gain_over_control(&self, strata: &StrataDistribution) -> f64 {
        strata.q_b * self.t_b - strata.q_h * self.t_h
    }
}

/// A strata distribution shared by every physician (exchangeable patients)
/// plus a finite mixture of physician rule types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicianPopulation {
    pub strata: StrataDistribution,
    pub doctors: Vec<PhysicianType>,
}

impl PhysicianPopulation {
    pub fn mass_sum(&self) -> f64 {
        self.doctors.iter().map(|d| d.mass).sum()
    }

    /// Whether every type's value weakly exceeds the control-arm value.
    pub fn satisfies_assumption1(&self) -> bool {
        self.doctors
            .iter()
            .all(|d| d.gain_over_control(&self.strata) >= -INTERNAL_TOL)
    }

    /// Mass-weighted mean outcome under usual care, E[Y] = Σ mass·V^d.
    pub fn implied_v_u(&self) -> f64 {
        self.doctors
            .iter()
            .map(|d| d.mass * d.value(&self.strata))
            .sum()
    }

    /// Mass-weighted treatment share under usual care, P(A=1) = Σ mass·p_d.
    pub fn implied_p(&self) -> f64 {
        self.doctors
            .iter()
            .map(|d| d.mass * d.treat_prob(&self.strata))
            .sum()
    }

    /// Usual-care joint law of treatment and outcome implied by the mixture.
    pub fn implied_joint(&self) -> JointLaw {
        let q = &self.strata;
        let mut j = JointLaw {
            a1y1: 0.0,
            a1y0: 0.0,
            a0y1: 0.0,
            a0y0: 0.0,
        };
        for d in &self.doctors {
            j.a1y1 += d.mass * (q.q_hh * d.t_hh + q.q_b * d.t_b);
            j.a1y0 += d.mass * (q.q_h * d.t_h + q.q_nn * d.t_nn);
            j.a0y1 += d.mass * (q.q_hh * (1.0 - d.t_hh) + q.q_h * (1.0 - d.t_h));
            j.a0y0 += d.mass * (q.q_b * (1.0 - d.t_b) + q.q_nn * (1.0 - d.t_nn));
        }
        j
    }

    /// Summary carrying the implied marginals and joint law.
    pub fn implied_summary(&self) -> StudySummary {
        StudySummary {
            v_t: self.strata.v_t(),
            v_c: self.strata.v_c(),
            v_u: self.implied_v_u(),
            p: self.implied_p(),
            joint: Some(self.implied_joint()),
        }
    }

    /// Mass of types whose value exceeds the treat-all value by at least
    /// `delta_star` (compared with a 1e-12 slack so exactly-attaining types
    /// are counted).
    pub fn proportion_with_advantage(&self, delta_star: f64) -> f64 {
        let v_t = self.strata.v_t();
        self.doctors
            .iter()
            .filter(|d| d.value(&self.strata) - v_t >= delta_star - INTERNAL_TOL)
            .map(|d| d.mass)
            .sum()
    }
}

/// Expected outcome of the physician type at `index`.
pub fn physician_value(pop: &PhysicianPopulation, index: usize) -> Result<f64> {
    let doctor = pop
        .doctors
        .get(index)
        .ok_or_else(|| Error::Domain(format!("type index {index} out of bounds")))?;
    Ok(doctor.value(&pop.strata))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub status: CheckStatus,
    pub message: String,
}

/// Ordered result of the precondition checks. `Fail` marks a violated hard
/// precondition of the main bound; `Warn` marks data that are inconsistent
/// with the no-bad-doctors assumption but still computable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn has_fail(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }

    pub fn has_warn(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Warn)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Warn)
            .map(|c| format!("{}: {}", c.name, c.message))
            .collect()
    }

    /// Compact one-line rendering of the failed checks, for error messages.
    pub fn summary_line(&self) -> String {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name.as_str())
            .collect();
        if failed.is_empty() {
            "no failed checks".to_string()
        } else {
            failed.join(", ")
        }
    }
}

/// Run the precondition checks on a summary, in a fixed order:
///
/// 1. `ordering` — 0 ≤ v_c < v_u < v_t ≤ 1 (fail when violated);
/// 2. `treatment_share_floor` — p ≥ v_u − v_c, necessary for the
///    no-bad-doctors assumption (warn when violated);
/// 3. `joint_consistency` — joint cells nonnegative, summing to 1, with
///    margins matching `p` and `v_u` (fail when violated).
///
/// Never throws on bad values; only non-finite input is an error.
pub fn validate_setting(summary: &StudySummary) -> Result<ValidationReport> {
    let mut raw = vec![summary.v_t, summary.v_c, summary.v_u, summary.p];
    if let Some(j) = &summary.joint {
        raw.extend_from_slice(&j.cells());
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "summary contains a non-finite value".into(),
        ));
    }

    let mut checks = Vec::with_capacity(3);

    let ordered = 0.0 <= summary.v_c
        && summary.v_c < summary.v_u
        && summary.v_u < summary.v_t
        && summary.v_t <= 1.0;
    checks.push(ValidationCheck {
        name: "ordering".into(),
        status: if ordered {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        message: if ordered {
            format!(
                "0 <= v_c ({}) < v_u ({}) < v_t ({}) <= 1",
                summary.v_c, summary.v_u, summary.v_t
            )
        } else {
            format!(
                "requires 0 <= v_c < v_u < v_t <= 1, got v_c = {}, v_u = {}, v_t = {}",
                summary.v_c, summary.v_u, summary.v_t
            )
        },
    });

    let floor = summary.v_u - summary.v_c;
    let share_ok = summary.p >= floor;
    checks.push(ValidationCheck {
        name: "treatment_share_floor".into(),
        status: if share_ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Warn
        },
        message: if share_ok {
            format!("p ({}) >= v_u - v_c ({floor})", summary.p)
        } else {
            format!(
                "p ({}) < v_u - v_c ({floor}): inconsistent with Assumption 1",
                summary.p
            )
        },
    });

    let (joint_ok, joint_msg) = match &summary.joint {
        None => (true, "no joint law provided".to_string()),
        Some(j) => {
            let mut problems = Vec::new();
            if j.cells().iter().any(|&c| c < 0.0) {
                problems.push("negative cell".to_string());
            }
            if (j.sum() - 1.0).abs() > INPUT_TOL {
                problems.push(format!("cells sum to {} != 1", j.sum()));
            }
            if (j.treated_share() - summary.p).abs() > INPUT_TOL {
                problems.push(format!(
                    "P(A=1) from joint ({}) != p ({})",
                    j.treated_share(),
                    summary.p
                ));
            }
            if (j.outcome_mean() - summary.v_u).abs() > INPUT_TOL {
                problems.push(format!(
                    "P(Y=1) from joint ({}) != v_u ({})",
                    j.outcome_mean(),
                    summary.v_u
                ));
            }
            if problems.is_empty() {
                (true, "joint law consistent with p and v_u".to_string())
            } else {
                (false, problems.join("; "))
            }
        }
    };
    checks.push(ValidationCheck {
        name: "joint_consistency".into(),
        status: if joint_ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        message: joint_msg,
    });

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(v_t: f64, v_c: f64, v_u: f64, p: f64) -> StudySummary {
        StudySummary::new(v_t, v_c, v_u, p).unwrap()
    }

    #[test]
    fn validate_passes_on_ordered_summary() {
        let report = validate_setting(&summary(0.55, 0.30, 0.35, 0.40)).unwrap();
        assert!(!report.has_fail());
        assert!(!report.has_warn());
        assert_eq!(report.checks.len(), 3);
        assert_eq!(report.checks[0].name, "ordering");
    }

    #[test]
    fn validate_fails_on_degenerate_equality() {
        let report = validate_setting(&summary(0.5, 0.5, 0.5, 0.5)).unwrap();
        assert_eq!(report.checks[0].status, CheckStatus::Fail);
        assert!(report.has_fail());
    }

    #[test]
    fn validate_warns_on_low_treatment_share() {
        let report = validate_setting(&summary(0.6, 0.2, 0.5, 0.1)).unwrap();
        assert!(!report.has_fail());
        assert_eq!(report.checks[1].status, CheckStatus::Warn);
        assert!(report.checks[1].message.contains("Assumption 1"));
    }

    #[test]
    fn validate_rejects_nan() {
        let s = StudySummary {
            v_t: f64::NAN,
            v_c: 0.2,
            v_u: 0.3,
            p: 0.5,
            joint: None,
        };
        assert!(matches!(
            validate_setting(&s),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn validate_flags_inconsistent_joint() {
        let joint = JointLaw {
            a1y1: 0.5,
            a1y0: 0.1,
            a0y1: 0.1,
            a0y0: 0.3,
        };
        // P(A=1) from joint is 0.6, p says 0.4.
        let s = StudySummary::with_joint(0.7, 0.3, 0.6, 0.4, joint).unwrap();
        let report = validate_setting(&s).unwrap();
        assert_eq!(report.checks[2].status, CheckStatus::Fail);
    }

    #[test]
    fn validate_is_pure() {
        let s = summary(0.6, 0.2, 0.5, 0.1);
        assert_eq!(
            validate_setting(&s).unwrap(),
            validate_setting(&s).unwrap()
        );
    }

    #[test]
    fn strata_from_zero_harm() {
        let q = strata_from(&summary(0.6, 0.3, 0.5, 0.5), 0.0).unwrap();
        assert_eq!(q.cells(), [0.3, 0.3, 0.0, 0.4]);
    }

    #[test]
    fn strata_from_boundary_harm() {
        let q = strata_from(&summary(0.6, 0.3, 0.5, 0.5), 0.3).unwrap();
        let expected = [0.0, 0.6, 0.3, 0.1];
        for (got, want) in q.cells().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn strata_from_rejects_negative_cell() {
        let err = strata_from(&summary(0.6, 0.3, 0.5, 0.5), 0.5).unwrap_err();
        match err {
            Error::Domain(msg) => assert!(msg.contains("q_nn"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn strata_margins_round_trip() {
        let s = summary(0.73, 0.21, 0.4, 0.5);
        for q_h in [0.0, 0.05, 0.21] {
            let q = strata_from(&s, q_h).unwrap();
            assert!((q.v_t() - s.v_t).abs() < 1e-12);
            assert!((q.v_c() - s.v_c).abs() < 1e-12);
            assert!((q.cells().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn treat_all_and_treat_none_reproduce_trial_arms() {
        let strata = StrataDistribution {
            q_hh: 0.3,
            q_b: 0.3,
            q_h: 0.0,
            q_nn: 0.4,
        };
        let treat_all = PhysicianType {
            mass: 1.0,
            t_hh: 1.0,
            t_b: 1.0,
            t_h: 1.0,
            t_nn: 1.0,
        };
        let treat_none = PhysicianType {
            mass: 1.0,
            t_hh: 0.0,
            t_b: 0.0,
            t_h: 0.0,
            t_nn: 0.0,
        };
        assert_eq!(treat_all.value(&strata), 0.6);
        assert_eq!(treat_all.treat_prob(&strata), 1.0);
        assert_eq!(treat_none.value(&strata), 0.3);
        assert_eq!(treat_none.treat_prob(&strata), 0.0);
    }

    #[test]
    fn physician_value_matches_formula() {
        let pop = PhysicianPopulation {
            strata: StrataDistribution {
                q_hh: 0.25,
                q_b: 0.35,
                q_h: 0.05,
                q_nn: 0.35,
            },
            doctors: vec![PhysicianType {
                mass: 1.0,
                t_hh: 0.5,
                t_b: 1.0,
                t_h: 0.0,
                t_nn: 0.5,
            }],
        };
        let v = physician_value(&pop, 0).unwrap();
        assert!((v - 0.65).abs() < 1e-15);
        assert!(physician_value(&pop, 1).is_err());
    }

    // Independent oracle for the value formula: simulate patients one at a time.
    #[test]
    fn physician_value_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let strata = StrataDistribution {
            q_hh: 0.25,
            q_b: 0.35,
            q_h: 0.05,
            q_nn: 0.35,
        };
        let doctor = PhysicianType {
            mass: 1.0,
            t_hh: 0.5,
            t_b: 1.0,
            t_h: 0.0,
            t_nn: 0.5,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000usize;
        let mut healthy = 0u64;
        for _ in 0..n {
            let u: f64 = rng.random();
            // stratum draw, then treatment by the stratum-specific rule
            let (treat_prob, y1, y0) = if u < strata.q_hh {
                (doctor.t_hh, 1u8, 1u8)
            } else if u < strata.q_hh + strata.q_b {
                (doctor.t_b, 1, 0)
            } else if u < strata.q_hh + strata.q_b + strata.q_h {
                (doctor.t_h, 0, 1)
            } else {
                (doctor.t_nn, 0, 0)
            };
            let treated = rng.random::<f64>() < treat_prob;
            healthy += if treated { y1 } else { y0 } as u64;
        }
        let mc = healthy as f64 / n as f64;
        // three binomial standard errors at p ~ 0.65
        let se = (0.65f64 * 0.35 / n as f64).sqrt();
        assert!((mc - 0.65).abs() < 3.0 * se, "mc = {mc}");
    }

    #[test]
    fn gain_over_control_identity() {
        let strata = StrataDistribution {
            q_hh: 0.2,
            q_b: 0.4,
            q_h: 0.15,
            q_nn: 0.25,
        };
        let d = PhysicianType {
            mass: 1.0,
            t_hh: 0.3,
            t_b: 0.8,
            t_h: 0.2,
            t_nn: 0.9,
        };
        let lhs = d.value(&strata) - strata.v_c();
        let rhs = d.gain_over_control(&strata);
        assert!((lhs - rhs).abs() < 1e-15);
        // treatment share dominates the gain whenever the gain is nonnegative
        assert!(d.treat_prob(&strata) >= rhs);
    }
}
