//! Random feasible physician populations and nested trial-within-cohort
//! datasets.
//!
//! The generator is the independent brute-force oracle for the toolkit's
//! universal claims: dominance of the proportion bound, containment of the
//! harm-stratum mass, and the covariance identity for the gain. It also
//! emits patient-level record streams for the estimation layer.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{gain, harm_bounds, proportion_bound, PhiUMode};
use crate::error::{Error, Result};
use crate::estimate::Record;
use crate::model::{
    JointLaw, PhysicianPopulation, PhysicianType, StrataDistribution, StudySummary, INTERNAL_TOL,
};
use crate::rng::{derive_rng, STREAM_PATIENT, STREAM_STRATA, STREAM_TYPE};

const REJECTION_BUDGET: usize = 100_000;
/// Slack allowed before a dominance comparison counts as a violation.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Physician types per population.
    pub n_types: usize,
    /// Resample each type until its gain over control is nonnegative.
    pub enforce_assumption1: bool,
    /// Reject populations whose implied marginals violate v_c < v_u < v_t.
    pub require_ordering: bool,
    /// Records per emitted dataset.
    pub n_patients: usize,
    /// Probability a patient is recruited into the trial. The boundary 1.0
    /// is allowed (trial-only dataset) though estimation then has no
    /// usual-care cell.
    pub trial_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            n_types: 3,
            enforce_assumption1: true,
            require_ordering: true,
            n_patients: 10_000,
            trial_fraction: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_types < 1 {
            return Err(Error::Domain("n_types must be >= 1".into()));
        }
        if self.n_patients < 1 {
            return Err(Error::Domain("n_patients must be >= 1".into()));
        }
        if !self.trial_fraction.is_finite()
            || self.trial_fraction <= 0.0
            || self.trial_fraction > 1.0
        {
            return Err(Error::Domain(format!(
                "trial_fraction = {} outside (0, 1]",
                self.trial_fraction
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Observable quantities implied by a population, plus the ground truth the
/// observables cannot identify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedMarginals {
    pub v_t: f64,
    pub v_c: f64,
    pub v_u: f64,
    pub p: f64,
    pub joint: JointLaw,
    /// The actual harm-stratum mass (identified only up to the harm bounds).
    pub true_pi_h: f64,
    pub types: Vec<TypeMarginal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMarginal {
    pub mass: f64,
    pub value: f64,
    pub treat_prob: f64,
}

impl ImpliedMarginals {
    pub fn to_summary(&self) -> StudySummary {
        StudySummary {
            v_t: self.v_t,
            v_c: self.v_c,
            v_u: self.v_u,
            p: self.p,
            joint: Some(self.joint),
        }
    }

    /// Actual mass of types whose value clears `v_t + delta_star`.
    pub fn true_proportion_at(&self, delta_star: f64) -> f64 {
        self.types
            .iter()
            .filter(|t| t.value - self.v_t >= delta_star - INTERNAL_TOL)
            .map(|t| t.mass)
            .sum()
    }
}

/// Map a population to its observable marginals and joint law.
pub fn implied_marginals(pop: &PhysicianPopulation) -> ImpliedMarginals {
    let types = pop
        .doctors
        .iter()
        .map(|d| TypeMarginal {
            mass: d.mass,
            value: d.value(&pop.strata),
            treat_prob: d.treat_prob(&pop.strata),
        })
        .collect();
    ImpliedMarginals {
        v_t: pop.strata.v_t(),
        v_c: pop.strata.v_c(),
        v_u: pop.implied_v_u(),
        p: pop.implied_p(),
        joint: pop.implied_joint(),
        true_pi_h: pop.strata.q_h,
        types,
    }
}

/// The gain computed through the covariance route,
/// Σ mass·(q_b·t_b − q_h·t_h) − p·(v_t − v_c).
pub fn gain_covariance(pop: &PhysicianPopulation) -> f64 {
    let ate = pop.strata.v_t() - pop.strata.v_c();
    let weighted_gain: f64 = pop
        .doctors
        .iter()
        .map(|d| d.mass * d.gain_over_control(&pop.strata))
        .sum();
    weighted_gain - pop.implied_p() * ate
}

fn sample_simplex(rng: &mut impl Rng) -> [f64; 4] {
    let mut draws = [0.0f64; 4];
    let mut total = 0.0;
    for d in draws.iter_mut() {
        let u: f64 = rng.random();
        *d = -(1.0 - u).ln();
        total += *d;
    }
    draws.map(|d| d / total)
}

/// One uniformly random population under the configured constraints,
/// deterministic in `(config.seed, index)`.
pub fn random_population_at(config: &SimConfig, index: u64) -> Result<PhysicianPopulation> {
    config.validate()?;
    for attempt in 0..REJECTION_BUDGET as u64 {
        let mut strata_rng = derive_rng(config.seed, &[STREAM_STRATA, index, attempt]);
        let [q_hh, q_b, q_h, q_nn] = sample_simplex(&mut strata_rng);
        let strata = StrataDistribution {
            q_hh,
            q_b,
            q_h,
            q_nn,
        };
        // ordering requires v_t > v_c, i.e. q_b > q_h; reject early so the
        // per-type resampling below is not starved
        if config.require_ordering && q_b <= q_h {
            continue;
        }

        let mut doctors = Vec::with_capacity(config.n_types);
        let mut mass_total = 0.0;
        let mut types_ok = true;
        for k in 0..config.n_types {
            let mut type_rng =
                derive_rng(config.seed, &[STREAM_TYPE, index, attempt, k as u64]);
            let mass: f64 = type_rng.random();
            let mut found = false;
            for _ in 0..REJECTION_BUDGET {
                let t_hh: f64 = type_rng.random();
                let t_b: f64 = type_rng.random();
                let t_h: f64 = type_rng.random();
                let t_nn: f64 = type_rng.random();
                if config.enforce_assumption1 && q_b * t_b < q_h * t_h {
                    continue;
                }
                doctors.push(PhysicianType {
                    mass,
                    t_hh,
                    t_b,
                    t_h,
                    t_nn,
                });
                mass_total += mass;
                found = true;
                break;
            }
            if !found {
                types_ok = false;
                break;
            }
        }
        if !types_ok {
            return Err(Error::Generation(format!(
                "type resampling budget exhausted (seed {}, index {index})",
                config.seed
            )));
        }
        for d in doctors.iter_mut() {
            d.mass /= mass_total;
        }
        let pop = PhysicianPopulation { strata, doctors };

        if config.require_ordering {
            let v_u = pop.implied_v_u();
            if !(pop.strata.v_c() < v_u && v_u < pop.strata.v_t()) {
                continue;
            }
        }
        return Ok(pop);
    }
    Err(Error::Generation(format!(
        "population rejection budget exhausted (seed {}, index {index})",
        config.seed
    )))
}

/// One random population from the config's seed.
pub fn random_population(config: &SimConfig) -> Result<PhysicianPopulation> {
    random_population_at(config, 0)
}

/// Per-population outcome of the oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCheck {
    pub assumption1_holds: bool,
    pub true_proportion: f64,
    /// Proportion bound of the implied marginals; None when it cannot be
    /// computed (e.g. implied marginals fail validation).
    pub bound_value: Option<f64>,
    /// true_proportion − bound; dominance holds while this is <= tolerance.
    /// None when the bound is unavailable or Assumption 1 fails.
    pub dominance_slack: Option<f64>,
    pub harm_containment_ok: bool,
    pub covariance_ok: bool,
}

impl PopulationCheck {
    pub fn dominance_ok(&self) -> Option<bool> {
        self.dominance_slack.map(|s| s <= DOMINANCE_TOL)
    }
}

/// Check one population against the bound, the harm containment, and the
/// covariance identity.
pub fn check_population(pop: &PhysicianPopulation, delta_star: f64) -> PopulationCheck {
    let implied = implied_marginals(pop);
    let summary = implied.to_summary();
    let assumption1_holds = pop.satisfies_assumption1();
    let true_proportion = implied.true_proportion_at(delta_star);

    let bound_value = proportion_bound(&summary, delta_star, PhiUMode::WithJoint)
        .ok()
        .map(|r| r.value);
    let dominance_slack = match (assumption1_holds, bound_value) {
        (true, Some(b)) => Some(true_proportion - b),
        _ => None,
    };

    let hb = harm_bounds(&summary);
    let harm_containment_ok = hb.phi_l - INTERNAL_TOL <= implied.true_pi_h
        && implied.true_pi_h <= hb.phi_u + INTERNAL_TOL;

    let covariance_ok = (gain(&summary) - gain_covariance(pop)).abs() <= INTERNAL_TOL;

    PopulationCheck {
        assumption1_holds,
        true_proportion,
        bound_value,
        dominance_slack,
        harm_containment_ok,
        covariance_ok,
    }
}

/// A failed oracle check, carrying the counterexample population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleViolation {
    pub population_index: u64,
    pub kind: String,
    pub detail: String,
    pub population: PhysicianPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub populations_tested: usize,
    /// Populations excluded from the dominance assertion because a type
    /// violates Assumption 1 (possible only when enforcement is off).
    pub assumption_violated: usize,
    pub violations: Vec<OracleViolation>,
    /// Largest observed true_proportion − bound (negative means dominated
    /// with room to spare).
    pub max_dominance_slack: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Generate `n_populations` populations and assert dominance, harm
/// containment, and the covariance identity on each.
pub fn oracle_check(
    config: &SimConfig,
    delta_star: f64,
    n_populations: usize,
) -> Result<OracleReport> {
    if !config.enforce_assumption1 || !config.require_ordering {
        return Err(Error::Precondition(
            "oracle_check requires enforce_assumption1 and require_ordering".into(),
        ));
    }
    if !delta_star.is_finite() || delta_star < 0.0 {
        return Err(Error::Domain(format!(
            "delta_star = {delta_star} must be a finite nonnegative number"
        )));
    }
    config.validate()?;

    let per_pop: Vec<Result<(u64, PopulationCheck, PhysicianPopulation)>> = (0..n_populations
        as u64)
        .into_par_iter()
        .map(|index| {
            let pop = random_population_at(config, index)?;
            let check = check_population(&pop, delta_star);
            Ok((index, check, pop))
        })
        .collect();

    let mut report = OracleReport {
        populations_tested: 0,
        assumption_violated: 0,
        violations: Vec::new(),
        max_dominance_slack: f64::NEG_INFINITY,
    };
    for item in per_pop {
        let (index, check, pop) = item?;
        report.populations_tested += 1;
        if !check.assumption1_holds {
            report.assumption_violated += 1;
        }
        let mut violate = |kind: &str, detail: String, pop: &PhysicianPopulation| {
            report.violations.push(OracleViolation {
                population_index: index,
                kind: kind.into(),
                detail,
                population: pop.clone(),
            });
        };
        match check.dominance_slack {
            Some(slack) => {
                report.max_dominance_slack = report.max_dominance_slack.max(slack);
                if slack > DOMINANCE_TOL {
                    violate(
                        "dominance",
                        format!(
                            "true proportion {} exceeds bound {} by {slack:e}",
                            check.true_proportion,
                            check.bound_value.unwrap_or(f64::NAN)
                        ),
                        &pop,
                    );
                }
            }
            None => {
                if check.assumption1_holds {
                    violate(
                        "bound_unavailable",
                        "proportion bound could not be computed".into(),
                        &pop,
                    );
                }
            }
        }
        if !check.harm_containment_ok {
            violate(
                "harm_containment",
                format!("true pi_h {} outside harm bounds", pop.strata.q_h),
                &pop,
            );
        }
        if !check.covariance_ok {
            violate(
                "covariance_identity",
                "gain differs from covariance route beyond 1e-12".into(),
                &pop,
            );
        }
    }
    Ok(report)
}

/// Emit `n_patients` records: trial members get a fair-coin treatment, the
/// rest get a physician drawn by mass applying its stratum-specific rule.
/// Deterministic in `(config.seed, patient index)`.
pub fn emit_dataset(pop: &PhysicianPopulation, config: &SimConfig) -> Result<Vec<Record>> {
    config.validate()?;
    let q = pop.strata.cells();
    let mass_cum: Vec<f64> = pop
        .doctors
        .iter()
        .scan(0.0, |acc, d| {
            *acc += d.mass;
            Some(*acc)
        })
        .collect();

    let records = (0..config.n_patients as u64)
        .map(|i| {
            let mut rng = derive_rng(config.seed, &[STREAM_PATIENT, i]);
            let stratum = {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut s = 3usize;
                for (k, &cell) in q.iter().enumerate() {
                    cum += cell;
                    if u < cum {
                        s = k;
                        break;
                    }
                }
                s
            };
            let in_trial = rng.random::<f64>() < config.trial_fraction;
            let a = if in_trial {
                rng.random::<f64>() < 0.5
            } else {
                let u: f64 = rng.random();
                let d = mass_cum.partition_point(|&c| c < u).min(pop.doctors.len() - 1);
                let doc = &pop.doctors[d];
                let t = match stratum {
                    0 => doc.t_hh,
                    1 => doc.t_b,
                    2 => doc.t_h,
                    _ => doc.t_nn,
                };
                rng.random::<f64>() < t
            };
            // outcome by stratum: always-healthy, benefit, harm, never-healthy
            let y = match stratum {
                0 => true,
                1 => a,
                2 => !a,
                _ => false,
            };
            Record { in_trial, a, y }
        })
        .collect();
    Ok(records)
}

// ---- population wire schema -------------------------------------------------

/// Wire form of a population:
/// `{"q": {"hh": .., "b": .., "h": .., "nn": ..}, "doctors": [{"mass": .., "t": {..}}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationJson {
    pub q: CellsJson,
    pub doctors: Vec<DoctorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellsJson {
    pub hh: f64,
    pub b: f64,
    pub h: f64,
    pub nn: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoctorJson {
    pub mass: f64,
    pub t: CellsJson,
}

impl From<&PhysicianPopulation> for PopulationJson {
    fn from(pop: &PhysicianPopulation) -> Self {
        PopulationJson {
            q: CellsJson {
                hh: pop.strata.q_hh,
                b: pop.strata.q_b,
                h: pop.strata.q_h,
                nn: pop.strata.q_nn,
            },
            doctors: pop
                .doctors
                .iter()
                .map(|d| DoctorJson {
                    mass: d.mass,
                    t: CellsJson {
                        hh: d.t_hh,
                        b: d.t_b,
                        h: d.t_h,
                        nn: d.t_nn,
                    },
                })
                .collect(),
        }
    }
}

impl From<&PopulationJson> for PhysicianPopulation {
    fn from(json: &PopulationJson) -> Self {
        PhysicianPopulation {
            strata: StrataDistribution {
                q_hh: json.q.hh,
                q_b: json.q.b,
                q_h: json.q.h,
                q_nn: json.q.nn,
            },
            doctors: json
                .doctors
                .iter()
                .map(|d| PhysicianType {
                    mass: d.mass,
                    t_hh: d.t.hh,
                    t_b: d.t.b,
                    t_h: d.t.h,
                    t_nn: d.t.nn,
                })
                .collect(),
        }
    }
}

/// Serialize a population in the wire schema with 17-significant-digit
/// numbers.
pub fn population_to_json(pop: &PhysicianPopulation) -> String {
    crate::envelope::json_17(&PopulationJson::from(pop))
}

/// Parse a population from the wire schema.
pub fn population_from_json(s: &str) -> Result<PhysicianPopulation> {
    let json: PopulationJson = serde_json::from_str(s)
        .map_err(|e| Error::InvalidInput(format!("population JSON: {e}")))?;
    Ok(PhysicianPopulation::from(&json))
}
