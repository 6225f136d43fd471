//! Command-line front end.
//!
//! Every subcommand emits an [`OutputEnvelope`]: tool version, full echo of
//! the resolved parameters (defaults and seeds included), the result, the
//! validation report, and warnings. Exit codes: 0 success, 1 usage error,
//! 2 validation/domain failure, 3 computation failure, 4 oracle violation.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::json;

use expert_bounds::envelope::{exit_code_for, render_value_text, OutputEnvelope};
use expert_bounds::estimate::{
    bootstrap, estimate_summary, ingest, BootstrapOptions, BootstrapTarget, Dataset, IngestMode,
};
use expert_bounds::refine::{build_lp, lp_refined_bound, qh_grid};
use expert_bounds::sim::{
    emit_dataset, implied_marginals, oracle_check, population_to_json, random_population_at,
    PopulationJson, SimConfig,
};
use expert_bounds::{
    construct_sharp_population, decide_trust, gain, harm_bounds, proportion_bound, strata_from,
    trust_threshold, validate_setting, Error, JointLaw, PhiUMode, Result, StudySummary,
    ValidationReport,
};

#[derive(Parser)]
#[command(
    name = "expert-bounds",
    version,
    about = "Bounds on how often physician judgment beats a trial's treat-all rule"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for sweeps, oracle runs, and bootstrap
    /// (default: available parallelism; env EXPERT_BOUNDS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    WithJoint,
    MarginalsOnly,
}

impl ModeArg {
    fn to_mode(self) -> PhiUMode {
        match self {
            ModeArg::Auto => PhiUMode::Auto,
            ModeArg::WithJoint => PhiUMode::WithJoint,
            ModeArg::MarginalsOnly => PhiUMode::MarginalsOnly,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ModeArg::Auto => "auto",
            ModeArg::WithJoint => "with_joint",
            ModeArg::MarginalsOnly => "marginals_only",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    ProportionBound,
    HarmPhiU,
    Gain,
    TrustThreshold,
}

impl TargetArg {
    fn label(self) -> &'static str {
        match self {
            TargetArg::ProportionBound => "proportion_bound",
            TargetArg::HarmPhiU => "harm_phi_u",
            TargetArg::Gain => "gain",
            TargetArg::TrustThreshold => "trust_threshold",
        }
    }
}

#[derive(Args)]
struct MarginalArgs {
    /// Trial treatment-arm mean E[Y(1)].
    #[arg(long = "v-t")]
    v_t: f64,
    /// Trial control-arm mean E[Y(0)].
    #[arg(long = "v-c")]
    v_c: f64,
    /// Usual-care mean outcome E[Y].
    #[arg(long = "v-u")]
    v_u: f64,
    /// Usual-care treatment share P(A=1).
    #[arg(long)]
    p: f64,
}

#[derive(Args)]
struct JointArgs {
    /// Usual-care cell P(A=1, Y=1); all four cells go together.
    #[arg(long = "p-a1y1", requires_all = ["p_a1y0", "p_a0y1", "p_a0y0"])]
    p_a1y1: Option<f64>,
    #[arg(long = "p-a1y0", requires_all = ["p_a1y1", "p_a0y1", "p_a0y0"])]
    p_a1y0: Option<f64>,
    #[arg(long = "p-a0y1", requires_all = ["p_a1y1", "p_a1y0", "p_a0y0"])]
    p_a0y1: Option<f64>,
    #[arg(long = "p-a0y0", requires_all = ["p_a1y1", "p_a1y0", "p_a0y1"])]
    p_a0y0: Option<f64>,
}

impl JointArgs {
    fn to_joint(&self) -> Option<JointLaw> {
        match (self.p_a1y1, self.p_a1y0, self.p_a0y1, self.p_a0y0) {
            (Some(a1y1), Some(a1y0), Some(a0y1), Some(a0y0)) => Some(JointLaw {
                a1y1,
                a1y0,
                a0y1,
                a0y0,
            }),
            _ => None,
        }
    }

    fn echo(&self) -> serde_json::Value {
        json!({
            "p_a1y1": self.p_a1y1,
            "p_a1y0": self.p_a1y0,
            "p_a0y1": self.p_a0y1,
            "p_a0y0": self.p_a0y0,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Harm bounds, informativeness gain, and the proportion bound.
    Bounds {
        #[command(flatten)]
        marginals: MarginalArgs,
        #[command(flatten)]
        joint: JointArgs,
        /// Advantage margin over treat-all.
        #[arg(long = "delta-star")]
        delta_star: f64,
        #[arg(long = "phi-u-mode", value_enum, default_value_t = ModeArg::Auto)]
        phi_u_mode: ModeArg,
        /// Also emit a (delta_star, bound) table with this many rows.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Build and verify the bound-attaining physician population.
    Construct {
        #[command(flatten)]
        marginals: MarginalArgs,
        #[arg(long = "delta-star")]
        delta_star: f64,
        /// Write the population JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LP refinement of the bound using the usual-care joint law.
    Refine {
        #[command(flatten)]
        marginals: MarginalArgs,
        #[arg(long = "p-a1y1")]
        p_a1y1: f64,
        #[arg(long = "p-a1y0")]
        p_a1y0: f64,
        #[arg(long = "p-a0y1")]
        p_a0y1: f64,
        #[arg(long = "p-a0y0")]
        p_a0y0: f64,
        #[arg(long = "delta-star")]
        delta_star: f64,
        #[arg(long = "grid-m", default_value_t = 41)]
        grid_m: usize,
        #[arg(long = "qh-steps", default_value_t = 101)]
        qh_steps: usize,
        /// Dump every LP instance as a plain-text tableau into this directory.
        #[arg(long = "dump-lp")]
        dump_lp: Option<PathBuf>,
    },
    /// Rational-trust threshold for a patient's belief in their doctor.
    #[command(group(ArgGroup::new("prior").required(true).args(["pi", "auto_pi"])))]
    Trust {
        #[arg(long = "v-t")]
        v_t: f64,
        #[arg(long = "v-u")]
        v_u: f64,
        #[arg(long = "delta-star")]
        delta_star: f64,
        /// Patient's subjective probability that their doctor is good.
        #[arg(long)]
        belief: f64,
        /// Prior mass of good doctors.
        #[arg(long)]
        pi: Option<f64>,
        /// Derive the prior from the proportion bound (needs --v-c and --p).
        #[arg(long = "auto-pi", requires_all = ["v_c", "p"])]
        auto_pi: bool,
        #[arg(long = "v-c")]
        v_c: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Generate random feasible populations and run the oracle checks.
    Simulate {
        /// Base seed; generated and echoed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "n-populations", default_value_t = 1000)]
        n_populations: usize,
        #[arg(long = "n-types", default_value_t = 3)]
        n_types: usize,
        #[arg(long = "delta-star")]
        delta_star: f64,
        /// Exit nonzero on any oracle violation (CI-friendly).
        #[arg(long)]
        check: bool,
        /// Also emit a patient-level CSV from the first population.
        #[arg(long = "emit-csv")]
        emit_csv: Option<PathBuf>,
        #[arg(long = "n-patients", default_value_t = 10_000)]
        n_patients: usize,
        #[arg(long = "trial-fraction", default_value_t = 0.5)]
        trial_fraction: f64,
    },
    /// Ingest records, estimate the summary, and bootstrap a target.
    Estimate {
        /// CSV path, or `-` for stdin.
        #[arg(long)]
        input: String,
        #[arg(long = "delta-star")]
        delta_star: f64,
        /// Bootstrap replicates.
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Resample within arm cells instead of the whole cohort.
        #[arg(long)]
        stratified: bool,
        /// Skip malformed rows instead of aborting.
        #[arg(long)]
        lenient: bool,
        #[arg(long, value_enum, default_value_t = TargetArg::ProportionBound)]
        target: TargetArg,
    },
}

struct CommandOutput {
    name: &'static str,
    params: serde_json::Value,
    outcome: Result<serde_json::Value>,
    validation: Option<ValidationReport>,
    warnings: Vec<String>,
    exit_override: Option<u8>,
}

fn summary_result_json(
    summary: &StudySummary,
    delta_star: f64,
    mode: PhiUMode,
) -> Result<serde_json::Value> {
    let hb = harm_bounds(summary);
    let g = gain(summary);
    let bound = proportion_bound(summary, delta_star, mode)?;
    Ok(json!({
        "harm_bounds": hb,
        "gain": g,
        "proportion_bound": bound,
    }))
}

fn run_bounds(
    marginals: &MarginalArgs,
    joint: &JointArgs,
    delta_star: f64,
    mode_arg: ModeArg,
    sweep: Option<usize>,
) -> CommandOutput {
    let mut params = json!({
        "v_t": marginals.v_t,
        "v_c": marginals.v_c,
        "v_u": marginals.v_u,
        "p": marginals.p,
        "delta_star": delta_star,
        "phi_u_mode": mode_arg.label(),
        "sweep": sweep,
    });
    merge(&mut params, joint.echo());

    let outcome = (|| {
        let summary = build_summary(marginals, joint.to_joint())?;
        let validation = validate_setting(&summary)?;
        if validation.has_fail() {
            return Err(Error::Validation(validation));
        }
        let mut result = summary_result_json(&summary, delta_star, mode_arg.to_mode())?;
        if let Some(rows) = sweep {
            let phi_u = result["proportion_bound"]["phi_u_used"]
                .as_f64()
                .unwrap_or(0.0);
            let n = rows.max(2);
            let mut table = Vec::with_capacity(n);
            for k in 0..n {
                let d = phi_u * k as f64 / (n - 1) as f64;
                let r = proportion_bound(&summary, d, mode_arg.to_mode())?;
                table.push(json!({
                    "delta_star": d,
                    "value": r.value,
                    "branch": r.branch,
                    "binding_term": r.binding_term,
                }));
            }
            merge(&mut result, json!({ "sweep": table }));
        }
        Ok((result, validation))
    })();

    split_validated("bounds", params, outcome)
}

fn run_construct(
    marginals: &MarginalArgs,
    delta_star: f64,
    out: &Option<PathBuf>,
) -> CommandOutput {
    let params = json!({
        "v_t": marginals.v_t,
        "v_c": marginals.v_c,
        "v_u": marginals.v_u,
        "p": marginals.p,
        "delta_star": delta_star,
        "out": out.as_ref().map(|p| p.display().to_string()),
    });
    let outcome = (|| {
        let summary = build_summary(marginals, None)?;
        let validation = validate_setting(&summary)?;
        let construction = construct_sharp_population(&summary, delta_star)?;
        let attainment = expert_bounds::verify_attainment(&construction, &summary, delta_star);
        let bound = proportion_bound(&summary, delta_star, PhiUMode::MarginalsOnly)?;
        if let Some(path) = out {
            std::fs::write(path, population_to_json(&construction.population))?;
        }
        let result = json!({
            "pi": construction.pi,
            "lambda": construction.lambda,
            "x_bar_b": construction.x_bar_b,
            "attained_proportion": construction.attained_proportion(),
            "bound": bound,
            "population": PopulationJson::from(&construction.population),
            "attainment": attainment,
        });
        Ok((result, validation))
    })();
    split_validated("construct", params, outcome)
}

fn run_refine(
    marginals: &MarginalArgs,
    joint: JointLaw,
    delta_star: f64,
    grid_m: usize,
    qh_steps: usize,
    dump_lp: &Option<PathBuf>,
) -> CommandOutput {
    let params = json!({
        "v_t": marginals.v_t,
        "v_c": marginals.v_c,
        "v_u": marginals.v_u,
        "p": marginals.p,
        "p_a1y1": joint.a1y1,
        "p_a1y0": joint.a1y0,
        "p_a0y1": joint.a0y1,
        "p_a0y0": joint.a0y0,
        "delta_star": delta_star,
        "grid_m": grid_m,
        "qh_steps": qh_steps,
        "dump_lp": dump_lp.as_ref().map(|p| p.display().to_string()),
    });
    let outcome = (|| {
        let summary = build_summary(marginals, Some(joint))?;
        let validation = validate_setting(&summary)?;
        if validation.has_fail() {
            return Err(Error::Validation(validation));
        }
        let refined = lp_refined_bound(&summary, delta_star, grid_m, qh_steps)?;
        if let Some(dir) = dump_lp {
            std::fs::create_dir_all(dir)?;
            for (idx, q_h) in qh_grid(&summary, qh_steps).iter().enumerate() {
                let strata = strata_from(&summary, *q_h)?;
                let instance = build_lp(&summary, &strata, delta_star, grid_m)?;
                std::fs::write(
                    dir.join(format!("lp_{idx:04}.txt")),
                    instance.to_tableau_text(),
                )?;
            }
        }
        let closed_form = proportion_bound(&summary, delta_star, PhiUMode::WithJoint)?;
        let result = json!({
            "refined": refined,
            "closed_form": closed_form,
        });
        Ok((result, validation))
    })();
    split_validated("refine", params, outcome)
}

#[allow(clippy::too_many_arguments)]
fn run_trust(
    v_t: f64,
    v_u: f64,
    delta_star: f64,
    belief: f64,
    pi: Option<f64>,
    auto_pi: bool,
    v_c: Option<f64>,
    p: Option<f64>,
) -> CommandOutput {
    let params = json!({
        "v_t": v_t,
        "v_u": v_u,
        "delta_star": delta_star,
        "belief": belief,
        "pi": pi,
        "auto_pi": auto_pi,
        "v_c": v_c,
        "p": p,
    });
    let outcome = (|| {
        if !(0.0..=1.0).contains(&belief) {
            return Err(Error::Domain(format!("belief = {belief} outside [0, 1]")));
        }
        let (report, validation) = if auto_pi {
            let summary = StudySummary::new(
                v_t,
                v_c.expect("clap enforces --v-c with --auto-pi"),
                v_u,
                p.expect("clap enforces --p with --auto-pi"),
            )?;
            let validation = validate_setting(&summary)?;
            if validation.has_fail() {
                return Err(Error::Validation(validation));
            }
            let pi_used = proportion_bound(&summary, delta_star, PhiUMode::Auto)?.value;
            (
                trust_threshold(v_t, v_u, delta_star, pi_used)?,
                Some(validation),
            )
        } else {
            (
                trust_threshold(v_t, v_u, delta_star, pi.expect("clap enforces the group"))?,
                None,
            )
        };
        let decision = decide_trust(&report, belief);
        let result = json!({
            "report": report,
            "decision": decision,
            "belief": belief,
        });
        Ok((result, validation.unwrap_or(ValidationReport { checks: vec![] })))
    })();
    split_validated("trust", params, outcome)
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    seed: Option<u64>,
    n_populations: usize,
    n_types: usize,
    delta_star: f64,
    check: bool,
    emit_csv: &Option<PathBuf>,
    n_patients: usize,
    trial_fraction: f64,
) -> CommandOutput {
    let resolved_seed = seed.unwrap_or_else(|| rand::rng().random());
    let params = json!({
        "seed": resolved_seed,
        "n_populations": n_populations,
        "n_types": n_types,
        "delta_star": delta_star,
        "check": check,
        "emit_csv": emit_csv.as_ref().map(|p| p.display().to_string()),
        "n_patients": n_patients,
        "trial_fraction": trial_fraction,
    });
    let config = SimConfig {
        seed: resolved_seed,
        n_types,
        enforce_assumption1: true,
        require_ordering: true,
        n_patients,
        trial_fraction,
    };
    let mut exit_override = None;
    let outcome = (|| {
        if n_populations == 0 {
            return Err(Error::Domain("n_populations must be >= 1".into()));
        }
        let report = oracle_check(&config, delta_star, n_populations)?;
        if check && !report.passed() {
            exit_override = Some(4u8);
        }
        let mut result = json!({
            "oracle": {
                "populations_tested": report.populations_tested,
                "assumption_violated": report.assumption_violated,
                "violation_count": report.violations.len(),
                "violations": report.violations,
                "max_dominance_slack": report.max_dominance_slack,
                "passed": report.passed(),
            }
        });
        if let Some(path) = emit_csv {
            let pop = random_population_at(&config, 0)?;
            let records = emit_dataset(&pop, &config)?;
            let mut file = std::fs::File::create(path)?;
            expert_bounds::estimate::write_csv(&records, &mut file)?;
            let implied = implied_marginals(&pop);
            let truth = json!({
                "path": path.display().to_string(),
                "n_records": records.len(),
                "implied": implied,
                "true_proportion_at_delta_star": implied.true_proportion_at(delta_star),
            });
            merge(&mut result, json!({ "dataset": truth }));
        }
        Ok(result)
    })();
    CommandOutput {
        name: "simulate",
        params,
        outcome,
        validation: None,
        warnings: Vec::new(),
        exit_override,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_estimate(
    input: &str,
    delta_star: f64,
    replicates: usize,
    seed: Option<u64>,
    level: f64,
    stratified: bool,
    lenient: bool,
    target_arg: TargetArg,
) -> CommandOutput {
    let resolved_seed = seed.unwrap_or_else(|| rand::rng().random());
    let params = json!({
        "input": input,
        "delta_star": delta_star,
        "bootstrap": replicates,
        "seed": resolved_seed,
        "level": level,
        "stratified": stratified,
        "lenient": lenient,
        "target": target_arg.label(),
    });
    let mut validation_slot: Option<ValidationReport> = None;
    let mut warnings = Vec::new();
    let outcome = (|| {
        let text = if input == "-" {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        } else {
            std::fs::read_to_string(input)?
        };
        let mode = if lenient {
            IngestMode::Lenient
        } else {
            IngestMode::Strict
        };
        let report = ingest(text.as_bytes(), mode)?;
        for issue in &report.skipped {
            warnings.push(format!("line {}: {}", issue.line, issue.message));
        }
        let dataset: Dataset = report.dataset;
        let summary = estimate_summary(&dataset)?;
        let validation = validate_setting(&summary)?;
        warnings.extend(validation.warnings());
        validation_slot = Some(validation.clone());
        if validation.has_fail() {
            return Err(Error::Validation(validation));
        }

        let target = match target_arg {
            TargetArg::ProportionBound => BootstrapTarget::ProportionBound { delta_star },
            TargetArg::HarmPhiU => BootstrapTarget::HarmPhiU,
            TargetArg::Gain => BootstrapTarget::Gain,
            TargetArg::TrustThreshold => BootstrapTarget::TrustThreshold { delta_star },
        };
        let boot = bootstrap(
            &dataset,
            target,
            &BootstrapOptions {
                replicates,
                seed: resolved_seed,
                level,
                stratified,
            },
        )?;
        let mut result = summary_result_json(&summary, delta_star, PhiUMode::Auto)?;
        merge(
            &mut result,
            json!({
                "summary": summary,
                "n_records": dataset.len(),
                "skipped_rows": report.skipped,
                "bootstrap": boot,
            }),
        );
        Ok(result)
    })();
    CommandOutput {
        name: "estimate",
        params,
        outcome,
        validation: validation_slot,
        warnings,
        exit_override: None,
    }
}

fn build_summary(marginals: &MarginalArgs, joint: Option<JointLaw>) -> Result<StudySummary> {
    match joint {
        Some(j) => StudySummary::with_joint(
            marginals.v_t,
            marginals.v_c,
            marginals.v_u,
            marginals.p,
            j,
        ),
        None => StudySummary::new(marginals.v_t, marginals.v_c, marginals.v_u, marginals.p),
    }
}

/// Shallow-merge `extra`'s keys into `base` (both must be objects).
fn merge(base: &mut serde_json::Value, extra: serde_json::Value) {
    if let (serde_json::Value::Object(base), serde_json::Value::Object(extra)) = (base, extra) {
        for (k, v) in extra {
            base.insert(k, v);
        }
    }
}

fn split_validated(
    name: &'static str,
    params: serde_json::Value,
    outcome: Result<(serde_json::Value, ValidationReport)>,
) -> CommandOutput {
    match outcome {
        Ok((result, validation)) => {
            let warnings = validation.warnings();
            CommandOutput {
                name,
                params,
                outcome: Ok(result),
                validation: Some(validation),
                warnings,
                exit_override: None,
            }
        }
        Err(err) => CommandOutput {
            name,
            params,
            outcome: Err(err),
            validation: None,
            warnings: Vec::new(),
            exit_override: None,
        },
    }
}

fn dispatch(command: &Command) -> CommandOutput {
    match command {
        Command::Bounds {
            marginals,
            joint,
            delta_star,
            phi_u_mode,
            sweep,
        } => run_bounds(marginals, joint, *delta_star, *phi_u_mode, *sweep),
        Command::Construct {
            marginals,
            delta_star,
            out,
        } => run_construct(marginals, *delta_star, out),
        Command::Refine {
            marginals,
            p_a1y1,
            p_a1y0,
            p_a0y1,
            p_a0y0,
            delta_star,
            grid_m,
            qh_steps,
            dump_lp,
        } => run_refine(
            marginals,
            JointLaw {
                a1y1: *p_a1y1,
                a1y0: *p_a1y0,
                a0y1: *p_a0y1,
                a0y0: *p_a0y0,
            },
            *delta_star,
            *grid_m,
            *qh_steps,
            dump_lp,
        ),
        Command::Trust {
            v_t,
            v_u,
            delta_star,
            belief,
            pi,
            auto_pi,
            v_c,
            p,
        } => run_trust(*v_t, *v_u, *delta_star, *belief, *pi, *auto_pi, *v_c, *p),
        Command::Simulate {
            seed,
            n_populations,
            n_types,
            delta_star,
            check,
            emit_csv,
            n_patients,
            trial_fraction,
        } => run_simulate(
            *seed,
            *n_populations,
            *n_types,
            *delta_star,
            *check,
            emit_csv,
            *n_patients,
            *trial_fraction,
        ),
        Command::Estimate {
            input,
            delta_star,
            bootstrap,
            seed,
            level,
            stratified,
            lenient,
            target,
        } => run_estimate(
            input,
            *delta_star,
            *bootstrap,
            *seed,
            *level,
            *stratified,
            *lenient,
            *target,
        ),
    }
}

fn render_text(envelope: &OutputEnvelope) -> String {
    let value = serde_json::to_value(envelope).expect("envelope serializes");
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} | command: {}\n",
        envelope.tool.name, envelope.tool.version, envelope.command.name
    ));
    render_value_text(&value["command"]["params"], "param", &mut out);
    if let Some(validation) = value.get("validation").filter(|v| !v.is_null()) {
        render_value_text(validation, "validation", &mut out);
    }
    for w in &envelope.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    if let Some(result) = value.get("result").filter(|v| !v.is_null()) {
        render_value_text(result, "result", &mut out);
    }
    if let Some(err) = value.get("error").filter(|v| !v.is_null()) {
        render_value_text(err, "error", &mut out);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap uses exit 2 for everything; usage problems are exit 1 here
            let _ = err.print();
            return ExitCode::from(1);
        }
    };

    let threads = cli.threads.or_else(|| {
        std::env::var("EXPERT_BOUNDS_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    let output = dispatch(&cli.command);
    let mut envelope = OutputEnvelope::new(output.name, output.params);
    envelope.validation = output.validation;
    envelope.warnings = output.warnings;

    let code = match &output.outcome {
        Ok(result) => {
            envelope.result = Some(result.clone());
            output.exit_override.unwrap_or(0)
        }
        Err(err) => {
            envelope = envelope.with_error(err);
            output.exit_override.unwrap_or(exit_code_for(err) as u8)
        }
    };

    match cli.format {
        Format::Json => println!("{}", envelope.to_json()),
        Format::Text => print!("{}", render_text(&envelope)),
    }
    ExitCode::from(code)
}
