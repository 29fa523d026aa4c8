//! Batch experiments over generated instances, emitted as CSV plus a JSON summary.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{
    coefficient_ratio, decompose_s, decompose_with, dual_witness, orthogonality_check, DecompositionTarget, ThresholdUnit,
};
use crate::bmo::{jn_rows, BmoSeqConfig, StoppingSequence};
use crate::error::{Error, Result};
use crate::fracint::{boundedness_ratio, BoundednessParams};
use crate::hardy::{equivalence_rows, RatioBand};
use crate::harness::generate::{generate, generate_companion, InstanceSpec};
use crate::lorentz::LorentzIndex;
use crate::process::Martingale;
use crate::scalar::{Mode, Rational, Scalar};

pub const REPORT_SCHEMA: &str = "mhl-experiment/1";

/// Relative tolerance of the scale-invariance checks.
const SCALE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Equivalence,
    Jn,
    Duality,
    Fractional,
    AtomicValidate,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::Equivalence,
        ExperimentName::Jn,
        ExperimentName::Duality,
        ExperimentName::Fractional,
        ExperimentName::AtomicValidate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Equivalence => "equivalence",
            ExperimentName::Jn => "jn",
            ExperimentName::Duality => "duality",
            ExperimentName::Fractional => "fractional",
            ExperimentName::AtomicValidate => "atomic-validate",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            ExperimentName::Equivalence => &["instance_id", "R", "p", "q", "norm_kind_a", "norm_kind_b", "ratio"],
            ExperimentName::Jn => &["instance_id", "R", "r", "q", "alpha", "estimate_r", "estimate_2", "ratio"],
            ExperimentName::Duality => &[
                "instance_id",
                "R",
                "p",
                "q",
                "terms",
                "identity",
                "min_slack_cauchy_schwarz",
                "min_slack_atom",
                "min_slack_bmo",
                "witness_ratio",
            ],
            ExperimentName::Fractional => &["instance_id", "R", "alpha", "p1", "q1", "p2", "q2", "ratio"],
            ExperimentName::AtomicValidate => {
                &["instance_id", "R", "target", "p", "q", "terms", "reconstruction", "atoms", "coefficient_ratio"]
            }
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::ConfigError(format!("unknown experiment {s:?}")))
    }
}

/// `count` instances from `template` with seeds `first_seed, first_seed + 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub template: InstanceSpec,
    pub count: u64,
    #[serde(default)]
    pub first_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub instances: Vec<InstanceSpec>,
    pub batch: Option<BatchSpec>,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub alpha: f64,
    /// Exponents compared against `r = 2` by the John-Nirenberg study.
    pub r_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub fractional: BoundednessParams,
    pub bmo: BmoSeqConfig,
    /// Crossing levels of the atomic-validate decompositions.
    pub threshold_unit: ThresholdUnit,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Rational,
            instances: Vec::new(),
            batch: None,
            p: 1.0,
            q: 2.0,
            r: 2.0,
            alpha: 0.0,
            r_values: vec![1.0, 1.5, 3.0, 4.0],
            p_values: vec![0.5, 1.0],
            q_values: vec![1.0, 2.0],
            fractional: BoundednessParams { p1: 0.5, q1: 0.5, p2: 1.0, q2: 1.0, alpha: 1.0 },
            bmo: BmoSeqConfig::default(),
            threshold_unit: ThresholdUnit::MaxAbs,
        }
    }
}

impl ExperimentConfig {
    /// Explicit instances followed by the batch.
    pub fn expanded_instances(&self) -> Vec<InstanceSpec> {
        let mut out = self.instances.clone();
        if let Some(batch) = &self.batch {
            out.extend((0..batch.count).map(|i| batch.template.with_seed(batch.first_seed + i)));
        }
        out
    }
}

/// Summary statistics of one group of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    #[serde(flatten)]
    pub band: RatioBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub name: ExperimentName,
    pub version: String,
    pub parameters: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub row_count: usize,
    pub summary: Vec<GroupSummary>,
    pub hard_failures: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.hard_failures.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Row {
    id: u64,
    cells: Vec<String>,
    group: String,
    ratio: Option<f64>,
    failure: Option<String>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn scale_invariant(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCALE_TOLERANCE * a.abs().max(b.abs())
}

pub fn run_experiment(name: ExperimentName, config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.mode {
        Mode::Rational => run_typed::<Rational>(name, config),
        Mode::Float => run_typed::<f64>(name, config),
    }
}

fn run_typed<S: Scalar>(name: ExperimentName, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let specs = config.expanded_instances();
    if specs.is_empty() {
        return Err(Error::ConfigError("the experiment has no instances".into()));
    }
    for spec in &specs {
        spec.validate().map_err(|e| Error::ConfigError(e.to_string()))?;
    }
    check_parameters(name, config)?;
    let per_instance: Vec<Vec<Row>> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let id = i as u64;
            run_instance::<S>(name, config, id, spec).unwrap_or_else(|e| {
                vec![Row { id, cells: Vec::new(), group: String::new(), ratio: None, failure: Some(format!("instance {id}: {e}")) }]
            })
        })
        .collect();
    let mut rows: Vec<Row> = per_instance.into_iter().flatten().collect();
    rows.sort_by_key(|r| r.id);

    let mut groups: Vec<String> = rows.iter().filter(|r| r.ratio.is_some()).map(|r| r.group.clone()).collect();
    groups.sort();
    groups.dedup();
    let summary = groups
        .into_iter()
        .filter_map(|g| {
            let ratios: Vec<f64> = rows.iter().filter(|r| r.group == g).filter_map(|r| r.ratio).collect();
            RatioBand::of(&ratios).map(|band| GroupSummary { group: g, band })
        })
        .collect();
    Ok(ExperimentReport {
        schema: REPORT_SCHEMA.to_string(),
        name,
        version: env!("CARGO_PKG_VERSION").to_string(),
        parameters: config.clone(),
        seeds: specs.iter().map(|s| s.seed).collect(),
        columns: name.columns().iter().map(|c| c.to_string()).collect(),
        row_count: rows.iter().filter(|r| !r.cells.is_empty()).count(),
        summary,
        hard_failures: rows.iter().filter_map(|r| r.failure.clone()).collect(),
        rows: rows.into_iter().filter(|r| !r.cells.is_empty()).map(|r| r.cells).collect(),
    })
}

fn check_parameters(name: ExperimentName, config: &ExperimentConfig) -> Result<()> {
    let cfg = |e: Error| Error::ConfigError(e.to_string());
    match name {
        ExperimentName::Equivalence => LorentzIndex::new(config.p, config.q).map(|_| ()).map_err(cfg),
        ExperimentName::Fractional => config.fractional.validate().map_err(cfg),
        ExperimentName::AtomicValidate => {
            for &p in &config.p_values {
                for &q in &config.q_values {
                    LorentzIndex::new(p, q).map_err(cfg)?;
                }
            }
            Ok(())
        }
        ExperimentName::Duality => LorentzIndex::new(config.p, config.q).map(|_| ()).map_err(cfg),
        ExperimentName::Jn => Ok(()),
    }
}

fn run_instance<S: Scalar>(name: ExperimentName, config: &ExperimentConfig, id: u64, spec: &InstanceSpec) -> Result<Vec<Row>> {
    let (tree, f) = generate::<S>(spec)?;
    let r_const = num(tree.regularity_constant().to_f64());
    let row = |cells: Vec<String>, group: String, ratio: Option<f64>, failure: Option<String>| Row {
        id,
        cells,
        group,
        ratio,
        failure,
    };
    match name {
        ExperimentName::Equivalence => {
            let idx = LorentzIndex::new(config.p, config.q)?;
            let base = equivalence_rows(id, &f, idx);
            let scaled = equivalence_rows(id, &f.scale(&S::from_i64(7)), idx);
            Ok(base
                .into_iter()
                .zip(scaled)
                .map(|(b, s)| {
                    let failure = if !(b.ratio.is_finite() && b.ratio > 0.0) {
                        Some(format!("instance {id}: {}/{} ratio {} is not finite and positive", b.a, b.b, b.ratio))
                    } else if !scale_invariant(b.ratio, s.ratio) {
                        Some(format!("instance {id}: {}/{} ratio changes under scaling", b.a, b.b))
                    } else {
                        None
                    };
                    row(
                        vec![id.to_string(), r_const.clone(), num(b.p), num(b.q), b.a.clone(), b.b.clone(), num(b.ratio)],
                        format!("R={} {}/{}", r_const, b.a, b.b),
                        Some(b.ratio),
                        failure,
                    )
                })
                .collect())
        }
        ExperimentName::Jn => {
            let bmo = BmoSeqConfig { seed: spec.seed, ..config.bmo.clone() };
            let rows = jn_rows(id, &f, &config.r_values, config.q, config.alpha, &bmo)?;
            Ok(rows
                .into_iter()
                .map(|j| {
                    let failure = (!(j.ratio.is_finite() && j.ratio > 0.0))
                        .then(|| format!("instance {id}: r = {} ratio {} is not finite and positive", j.r, j.ratio));
                    row(
                        vec![
                            id.to_string(),
                            r_const.clone(),
                            num(j.r),
                            num(j.q),
                            num(j.alpha),
                            num(j.estimate_r),
                            num(j.estimate_2),
                            num(j.ratio),
                        ],
                        format!("R={} r={}", r_const, j.r),
                        Some(j.ratio),
                        failure,
                    )
                })
                .collect())
        }
        ExperimentName::Duality => {
            let g = generate_companion(spec, &tree)?;
            let dec = decompose_s(&f, config.p)?;
            let mut failures = Vec::new();
            let (identity, cs, atom, bmo) = match orthogonality_check(&dec, &g) {
                Ok(report) => {
                    let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
                    (
                        report.rows.iter().all(|r| r.pairing == r.stopped_pairing || S::MODE == Mode::Float),
                        min(report.rows.iter().map(|r| r.slack_cauchy_schwarz).collect()),
                        min(report.rows.iter().map(|r| r.slack_atom).collect()),
                        min(report.rows.iter().filter_map(|r| r.slack_bmo).collect()),
                    )
                }
                Err(e) => {
                    failures.push(format!("instance {id}: {e}"));
                    (false, f64::NAN, f64::NAN, f64::NAN)
                }
            };
            let times: Vec<_> = decompose_s(&g, config.p)?.terms.into_iter().map(|t| t.atom.nu).collect();
            let witness_ratio = match decompose_s(&g, config.p)?.window {
                Some((lo, _)) if !g.is_zero() => {
                    let seq = StoppingSequence::new(lo, times)?;
                    let w = dual_witness(&g, &seq, config.p, config.q, config.r)?;
                    let w7 = dual_witness(&g.scale(&S::from_i64(7)), &seq, config.p, config.q, config.r)?;
                    if !(w.ratio.is_finite() && scale_invariant(w.ratio, w7.ratio)) {
                        failures.push(format!("instance {id}: witness ratio {} is not finite and scale invariant", w.ratio));
                    }
                    Some(w.ratio)
                }
                _ => None,
            };
            Ok(vec![row(
                vec![
                    id.to_string(),
                    r_const.clone(),
                    num(config.p),
                    num(config.q),
                    dec.terms.len().to_string(),
                    identity.to_string(),
                    num(cs),
                    num(atom),
                    num(bmo),
                    witness_ratio.map(num).unwrap_or_default(),
                ],
                format!("R={r_const}"),
                witness_ratio,
                (!failures.is_empty()).then(|| failures.join("; ")),
            )])
        }
        ExperimentName::Fractional => {
            let params = &config.fractional;
            let Some(ratio) = boundedness_ratio(&f, params)? else {
                return Ok(Vec::new());
            };
            let scaled = boundedness_ratio(&f.scale(&S::from_i64(7)), params)?.unwrap_or(f64::NAN);
            let failure = (!(ratio.is_finite() && scale_invariant(ratio, scaled)))
                .then(|| format!("instance {id}: ratio {ratio} is not finite and scale invariant"));
            Ok(vec![row(
                vec![
                    id.to_string(),
                    r_const.clone(),
                    num(params.alpha),
                    num(params.p1),
                    num(params.q1),
                    num(params.p2),
                    num(params.q2),
                    num(ratio),
                ],
                format!("R={} alpha={}", r_const, params.alpha),
                Some(ratio),
                failure,
            )])
        }
        ExperimentName::AtomicValidate => {
            let mut rows = Vec::new();
            let f7 = f.scale(&S::from_i64(7));
            for target in DecompositionTarget::ALL {
                for &p in &config.p_values {
                    let three = S::from_i64(3);
                    let dec = decompose_with(&f, target, p, three.clone(), config.threshold_unit)?;
                    let dec7 = decompose_with(&f7, target, p, three, config.threshold_unit)?;
                    let reconstruction = reconstruction_ok(&dec.reconstruct(), &f);
                    let atoms = dec.all_atoms_valid();
                    for &q in &config.q_values {
                        let ratio = coefficient_ratio(&dec, &f, q)?;
                        let ratio7 = coefficient_ratio(&dec7, &f7, q)?;
                        let mut problems = Vec::new();
                        if !reconstruction {
                            problems.push("reconstruction");
                        }
                        if !atoms {
                            problems.push("atom validation");
                        }
                        if !(ratio.is_finite() && scale_invariant(ratio, ratio7)) {
                            problems.push("coefficient ratio");
                        }
                        rows.push(row(
                            vec![
                                id.to_string(),
                                r_const.clone(),
                                target.name().to_string(),
                                num(p),
                                num(q),
                                dec.terms.len().to_string(),
                                reconstruction.to_string(),
                                atoms.to_string(),
                                num(ratio),
                            ],
                            format!("{} p={} q={}", target.name(), p, q),
                            (!f.is_zero()).then_some(ratio),
                            (!problems.is_empty())
                                .then(|| format!("instance {id}: {} p={p} q={q}: {}", target.name(), problems.join(", "))),
                        ));
                    }
                }
            }
            Ok(rows)
        }
    }
}

/// Exact equality in rational mode; `1e-10` relative to `max|f|` in float mode.
pub fn reconstruction_ok<S: Scalar>(sum: &Martingale<S>, f: &Martingale<S>) -> bool {
    match S::MODE {
        Mode::Rational => sum.values() == f.values(),
        Mode::Float => sum.max_abs_diff(f) <= 1e-10 * f.max_abs().max(f64::MIN_POSITIVE),
    }
}
