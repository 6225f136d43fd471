//! Partial-identification toolkit for trial-within-cohort designs.
//!
//! Given the marginal summaries of a randomized trial nested in an
//! observational cohort (treated-arm mean, control-arm mean, usual-care mean,
//! usual-care treatment share, optionally the usual-care joint law of
//! treatment and outcome), this crate computes sharp bounds on the proportion
//! of physicians whose personal treatment strategies outperform the "treat
//! all" rule, together with the supporting quantities: bounds on the
//! counterfactually harmed fraction, the informativeness gain of physician
//! decisions, an LP refinement that exploits the full joint law, an explicit
//! bound-attaining physician population, and a subjective trust threshold.
//!
//! A simulator of feasible physician populations doubles as a brute-force
//! oracle for every identity and dominance claim, and an estimation layer
//! ingests patient-level records and attaches bootstrap uncertainty.

pub mod bounds;
pub mod envelope;
pub mod error;
pub mod estimate;
pub mod lp;
pub mod model;
pub mod refine;
pub(crate) mod rng;
pub mod sharpness;
pub mod sim;
pub mod trust;

pub use bounds::{
    gain, harm_bounds, proportion_bound, BindingTerm, BoundBranch, BoundReport, HarmBounds,
    PhiUMode, ResolvedPhiUMode,
};
pub use error::{Error, Result};
pub use model::{
    harm_mass_range, physician_value, strata_from, validate_setting, CheckStatus, JointLaw,
    PhysicianPopulation, PhysicianType, StrataDistribution, StudySummary, ValidationCheck,
    ValidationReport,
};
pub use sharpness::{
    construct_sharp_population, max_treat_prob, verify_attainment, AttainmentReport,
    SharpConstruction,
};
pub use trust::{decide_trust, trust_from_summary, trust_threshold, TrustDecision, TrustReport};
