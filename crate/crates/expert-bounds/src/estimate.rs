//! Record ingestion, plug-in estimation, and bootstrap uncertainty.
//!
//! The record stream is a strict CSV: UTF-8, LF line endings, header
//! `in_trial,a,y`, values `0`/`1`, no quoting, no trailing delimiter.
//! Plug-in estimates are the empirical cell means; uncertainty comes from
//! i.i.d. row resampling with a percentile interval. Replicates whose
//! resample fails validation or empties a cell are excluded and counted.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{gain, harm_bounds, proportion_bound, PhiUMode};
use crate::error::{Error, Result};
use crate::model::{validate_setting, JointLaw, StudySummary};
use crate::rng::{derive_rng, STREAM_BOOTSTRAP};
use crate::trust::trust_threshold;

pub const CSV_HEADER: &str = "in_trial,a,y";

/// One patient record: trial membership, treatment, outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub in_trial: bool,
    pub a: bool,
    pub y: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestMode {
    /// Abort on the first malformed row.
    Strict,
    /// Skip malformed rows, reporting line numbers.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub skipped: Vec<RowIssue>,
}

fn parse_bit(field: &str) -> Option<bool> {
    match field {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn parse_row(line: &str) -> std::result::Result<Record, String> {
    let mut parts = line.split(',');
    let mut next_bit = |name: &str| -> std::result::Result<bool, String> {
        let field = parts
            .next()
            .ok_or_else(|| format!("missing field {name}"))?;
        parse_bit(field).ok_or_else(|| format!("field {name} = {field:?} is not 0/1"))
    };
    let in_trial = next_bit("in_trial")?;
    let a = next_bit("a")?;
    let y = next_bit("y")?;
    if parts.next().is_some() {
        return Err("extra fields".into());
    }
    Ok(Record { in_trial, a, y })
}

/// Parse a record stream. The header row is mandatory.
pub fn ingest<R: BufRead>(reader: R, mode: IngestMode) -> Result<IngestReport> {
    let mut dataset = Dataset::default();
    let mut skipped = Vec::new();
    let mut lines = reader.lines();

    let header = lines
        .next()
        .transpose()?
        .ok_or(Error::Format {
            line: 1,
            message: "empty input, expected header `in_trial,a,y`".into(),
        })?;
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(Error::Format {
            line: 1,
            message: format!("bad header {header:?}, expected `in_trial,a,y`"),
        });
    }

    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match parse_row(line) {
            Ok(record) => dataset.records.push(record),
            Err(message) => match mode {
                IngestMode::Strict => {
                    return Err(Error::Format {
                        line: line_no,
                        message,
                    })
                }
                IngestMode::Lenient => skipped.push(RowIssue {
                    line: line_no,
                    message,
                }),
            },
        }
    }
    Ok(IngestReport { dataset, skipped })
}

pub fn ingest_str(s: &str, mode: IngestMode) -> Result<IngestReport> {
    ingest(s.as_bytes(), mode)
}

/// Write records in the exact wire format (LF endings, no trailing newline
/// variance: one newline after every row).
pub fn write_csv<W: Write>(records: &[Record], mut w: W) -> std::io::Result<()> {
    w.write_all(CSV_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in records {
        let row = [
            if r.in_trial { b'1' } else { b'0' },
            b',',
            if r.a { b'1' } else { b'0' },
            b',',
            if r.y { b'1' } else { b'0' },
            b'\n',
        ];
        w.write_all(&row)?;
    }
    Ok(())
}

pub fn to_csv_string(records: &[Record]) -> String {
    let mut buf = Vec::with_capacity(records.len() * 6 + CSV_HEADER.len() + 1);
    write_csv(records, &mut buf).expect("vec write");
    String::from_utf8(buf).expect("ascii")
}

#[derive(Debug, Clone, Copy, Default)]
struct CellCounts {
    tt_n: u64,
    tt_y: u64,
    tc_n: u64,
    tc_y: u64,
    u_n: u64,
    u_a1y1: u64,
    u_a1y0: u64,
    u_a0y1: u64,
}

impl CellCounts {
    fn add(&mut self, r: &Record) {
        if r.in_trial {
            if r.a {
                self.tt_n += 1;
                self.tt_y += r.y as u64;
            } else {
                self.tc_n += 1;
                self.tc_y += r.y as u64;
            }
        } else {
            self.u_n += 1;
            match (r.a, r.y) {
                (true, true) => self.u_a1y1 += 1,
                (true, false) => self.u_a1y0 += 1,
                (false, true) => self.u_a0y1 += 1,
                (false, false) => {}
            }
        }
    }

    fn summary(&self) -> Result<StudySummary> {
        if self.tt_n == 0 {
            return Err(Error::Estimation("trial-treated cell empty".into()));
        }
        if self.tc_n == 0 {
            return Err(Error::Estimation("trial-control cell empty".into()));
        }
        if self.u_n == 0 {
            return Err(Error::Estimation("usual-care cell empty".into()));
        }
        let u_n = self.u_n as f64;
        let a1y1 = self.u_a1y1 as f64 / u_n;
        let a1y0 = self.u_a1y0 as f64 / u_n;
        let a0y1 = self.u_a0y1 as f64 / u_n;
        let a0y0 = (self.u_n - self.u_a1y1 - self.u_a1y0 - self.u_a0y1) as f64 / u_n;
        Ok(StudySummary {
            v_t: self.tt_y as f64 / self.tt_n as f64,
            v_c: self.tc_y as f64 / self.tc_n as f64,
            v_u: a1y1 + a0y1,
            p: a1y1 + a1y0,
            joint: Some(JointLaw {
                a1y1,
                a1y0,
                a0y1,
                a0y0,
            }),
        })
    }
}

/// Plug-in summary: cell means of the trial arms and the usual-care arm,
/// with the usual-care empirical joint law attached.
pub fn estimate_summary(dataset: &Dataset) -> Result<StudySummary> {
    let mut counts = CellCounts::default();
    for r in &dataset.records {
        counts.add(r);
    }
    counts.summary()
}

/// What the bootstrap tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "target")]
pub enum BootstrapTarget {
    ProportionBound { delta_star: f64 },
    HarmPhiU,
    Gain,
    TrustThreshold { delta_star: f64 },
}

/// The tracked quantity evaluated on one summary.
pub fn target_value(summary: &StudySummary, target: BootstrapTarget) -> Result<f64> {
    match target {
        BootstrapTarget::ProportionBound { delta_star } => {
            Ok(proportion_bound(summary, delta_star, PhiUMode::Auto)?.value)
        }
        BootstrapTarget::HarmPhiU => Ok(harm_bounds(summary).phi_u),
        BootstrapTarget::Gain => Ok(gain(summary)),
        BootstrapTarget::TrustThreshold { delta_star } => {
            let pi = proportion_bound(summary, delta_star, PhiUMode::Auto)?.value;
            Ok(trust_threshold(summary.v_t, summary.v_u, delta_star, pi)?.threshold)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Interval level, e.g. 0.95.
    pub level: f64,
    /// Resample within trial-treated / trial-control / usual-care cells
    /// instead of the whole cohort.
    pub stratified: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 1000,
            seed: 0,
            level: 0.95,
            stratified: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Full-data estimate.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub b_replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Replicates excluded because a cell emptied, validation failed, or the
    /// target was undefined.
    pub invalid_replicates: usize,
}

/// Linear-interpolated quantile of sorted values.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Percentile bootstrap for `target` over i.i.d. row resamples.
///
/// Pure function of `(dataset, target, options)`: replicate seeds derive
/// from `(seed, replicate index)` and aggregation is order-independent.
pub fn bootstrap(
    dataset: &Dataset,
    target: BootstrapTarget,
    options: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if options.replicates == 0 {
        return Err(Error::Domain("replicates must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&options.level) || options.level <= 0.0 {
        return Err(Error::Domain(format!(
            "level = {} outside (0, 1)",
            options.level
        )));
    }
    let full = estimate_summary(dataset)?;
    let point = target_value(&full, target)?;

    let n = dataset.len();
    let records = &dataset.records;
    // index pools per stratified cell: trial-treated, trial-control, usual care
    let pools: Option<[Vec<u32>; 3]> = options.stratified.then(|| {
        let mut pools: [Vec<u32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (i, r) in records.iter().enumerate() {
            let cell = if r.in_trial {
                if r.a {
                    0
                } else {
                    1
                }
            } else {
                2
            };
            pools[cell].push(i as u32);
        }
        pools
    });

    let replicate_values: Vec<Option<f64>> = (0..options.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_rng(options.seed, &[STREAM_BOOTSTRAP, rep]);
            let mut counts = CellCounts::default();
            match &pools {
                None => {
                    for _ in 0..n {
                        let idx = rng.random_range(0..n);
                        counts.add(&records[idx]);
                    }
                }
                Some(pools) => {
                    for pool in pools {
                        for _ in 0..pool.len() {
                            let idx = pool[rng.random_range(0..pool.len())] as usize;
                            counts.add(&records[idx]);
                        }
                    }
                }
            }
            let summary = counts.summary().ok()?;
            match validate_setting(&summary) {
                Ok(report) if !report.has_fail() => {}
                _ => return None,
            }
            target_value(&summary, target).ok()
        })
        .collect();

    let mut valid: Vec<f64> = replicate_values.iter().filter_map(|v| *v).collect();
    let invalid = options.replicates - valid.len();
    if invalid * 2 > options.replicates {
        return Err(Error::Inference(format!(
            "{invalid} of {} bootstrap replicates invalid; more data needed",
            options.replicates
        )));
    }
    valid.sort_by(|a, b| a.total_cmp(b));
    let alpha = 1.0 - options.level;
    Ok(BootstrapResult {
        point,
        ci_low: quantile_sorted(&valid, alpha / 2.0),
        ci_high: quantile_sorted(&valid, 1.0 - alpha / 2.0),
        b_replicates: options.replicates,
        seed: options.seed,
        level: options.level,
        invalid_replicates: invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_two_rows() {
        let report = ingest_str("in_trial,a,y\n1,1,1\n0,0,0\n", IngestMode::Strict).unwrap();
        assert_eq!(report.dataset.len(), 2);
        assert!(report.skipped.is_empty());
        assert_eq!(
            report.dataset.records[0],
            Record {
                in_trial: true,
                a: true,
                y: true
            }
        );
    }

    #[test]
    fn ingest_strict_rejects_non_binary() {
        let err = ingest_str("in_trial,a,y\n1,2,0\n", IngestMode::Strict).unwrap_err();
        match err {
            Error::Format { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains('a'), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_lenient_skips_and_reports() {
        let report = ingest_str(
            "in_trial,a,y\n1,2,0\n0,1,1\nnope\n",
            IngestMode::Lenient,
        )
        .unwrap();
        assert_eq!(report.dataset.len(), 1);
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(report.skipped[0].line, 2);
        assert_eq!(report.skipped[1].line, 4);
    }

    #[test]
    fn ingest_requires_header() {
        assert!(matches!(
            ingest_str("1,1,1\n", IngestMode::Strict),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            ingest_str("", IngestMode::Strict),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let records = vec![
            Record {
                in_trial: true,
                a: true,
                y: false,
            },
            Record {
                in_trial: false,
                a: false,
                y: true,
            },
        ];
        let csv = to_csv_string(&records);
        assert_eq!(csv, "in_trial,a,y\n1,1,0\n0,0,1\n");
        let back = ingest_str(&csv, IngestMode::Strict).unwrap();
        assert_eq!(back.dataset.records, records);
    }

    #[test]
    fn estimate_small_sample_arithmetic() {
        let report = ingest_str(
            "in_trial,a,y\n1,1,1\n1,0,0\n0,1,1\n0,0,0\n",
            IngestMode::Strict,
        )
        .unwrap();
        let s = estimate_summary(&report.dataset).unwrap();
        assert_eq!(s.v_t, 1.0);
        assert_eq!(s.v_c, 0.0);
        assert_eq!(s.v_u, 0.5);
        assert_eq!(s.p, 0.5);
        let j = s.joint.unwrap();
        assert_eq!(j.a1y1, 0.5);
        assert_eq!(j.a0y0, 0.5);
    }

    #[test]
    fn estimate_names_the_empty_cell() {
        let report = ingest_str("in_trial,a,y\n1,1,1\n0,1,1\n", IngestMode::Strict).unwrap();
        let err = estimate_summary(&report.dataset).unwrap_err();
        match err {
            Error::Estimation(msg) => assert!(msg.contains("trial-control"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn sim_dataset(seed: u64, n: usize) -> Dataset {
        let cfg = crate::sim::SimConfig {
            seed,
            n_patients: n,
            ..crate::sim::SimConfig::default()
        };
        let pop = crate::sim::random_population(&cfg).unwrap();
        Dataset {
            records: crate::sim::emit_dataset(&pop, &cfg).unwrap(),
        }
    }

    #[test]
    fn simulator_csv_round_trips() {
        let dataset = sim_dataset(12, 1000);
        let csv = to_csv_string(&dataset.records);
        let back = ingest_str(&csv, IngestMode::Strict).unwrap();
        assert_eq!(back.dataset, dataset);
    }

    #[test]
    fn single_replicate_collapses_interval() {
        let dataset = sim_dataset(13, 2000);
        let r = bootstrap(
            &dataset,
            BootstrapTarget::Gain,
            &BootstrapOptions {
                replicates: 1,
                seed: 1,
                ..BootstrapOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.ci_low, r.ci_high);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let dataset = sim_dataset(14, 2000);
        let opts = BootstrapOptions {
            replicates: 50,
            seed: 9,
            ..BootstrapOptions::default()
        };
        let a = bootstrap(&dataset, BootstrapTarget::Gain, &opts).unwrap();
        let b = bootstrap(&dataset, BootstrapTarget::Gain, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.ci_high);
    }

    #[test]
    fn stratified_bootstrap_runs() {
        let dataset = sim_dataset(15, 2000);
        let r = bootstrap(
            &dataset,
            BootstrapTarget::ProportionBound { delta_star: 0.02 },
            &BootstrapOptions {
                replicates: 50,
                seed: 2,
                stratified: true,
                ..BootstrapOptions::default()
            },
        )
        .unwrap();
        assert!(r.ci_low <= r.ci_high);
        assert!((0.0..=1.0).contains(&r.point));
    }

    #[test]
    fn bootstrap_interval_brackets_point_for_smooth_target() {
        let dataset = sim_dataset(16, 5000);
        let r = bootstrap(
            &dataset,
            BootstrapTarget::Gain,
            &BootstrapOptions {
                replicates: 200,
                seed: 3,
                ..BootstrapOptions::default()
            },
        )
        .unwrap();
        assert!(r.ci_low <= r.point && r.point <= r.ci_high);
        assert_eq!(r.invalid_replicates, 0);
    }
}
