//! Hardy-Lorentz functionals of a martingale and minimal predictable envelopes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{NodeId, TreeRef};
use crate::lorentz::{lorentz_norm, lorentz_norm_of_squares, LorentzIndex};
use crate::process::{cond_quad_variation_sq, maximal, quad_variation_sq, AdaptedSequence, Martingale};
use crate::scalar::{max_of, sqrt, Scalar};

/// Which functional of a martingale is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormKind {
    /// `||f*||_{p,q}`.
    #[serde(rename = "star")]
    Star,
    /// `||S(f)||_{p,q}`.
    #[serde(rename = "S")]
    Square,
    /// `||s(f)||_{p,q}`.
    #[serde(rename = "s")]
    CondSquare,
    /// Infimum of `||lambda_inf||_{p,q}` over envelopes of `S_{n+1}`.
    #[serde(rename = "Q")]
    Q,
    /// Infimum of `||lambda_inf||_{p,q}` over envelopes of `|f_{n+1}|`.
    #[serde(rename = "D")]
    D,
}

impl NormKind {
    pub const ALL: [NormKind; 5] = [NormKind::Star, NormKind::Square, NormKind::CondSquare, NormKind::Q, NormKind::D];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::Star => "star",
            NormKind::Square => "S",
            NormKind::CondSquare => "s",
            NormKind::Q => "Q",
            NormKind::D => "D",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown norm kind {s:?}")))
    }
}

/// The statistic a predictable envelope must dominate one step ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvelopeTarget {
    /// `S_{n+1}(f) <= lambda_n`.
    Q,
    /// `|f_{n+1}| <= lambda_n`.
    D,
}

impl FromStr for EnvelopeTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Q" | "q" => Ok(EnvelopeTarget::Q),
            "D" | "d" => Ok(EnvelopeTarget::D),
            other => Err(Error::InvalidSpec(format!("unknown envelope target {other:?}"))),
        }
    }
}

/// How envelope values are stored. Q-envelopes keep `lambda^2` so that every
/// comparison against `S^2` stays exact in rational mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeScale {
    Linear,
    Squared,
}

/// A nonnegative, adapted sequence `lambda_n`, nondecreasing along paths,
/// with `lambda_n` stored at the level-`n` atoms.
#[derive(Debug, Clone)]
pub struct EnvelopeSequence<S> {
    target: EnvelopeTarget,
    scale: EnvelopeScale,
    values: AdaptedSequence<S>,
}

impl<S: Scalar> EnvelopeSequence<S> {
    /// Wraps candidate values given in the target's natural scale
    /// (squared for Q, linear for D) without validating them.
    pub fn new(target: EnvelopeTarget, values: AdaptedSequence<S>) -> Self {
        EnvelopeSequence { target, scale: scale_of(target), values }
    }

    pub fn target(&self) -> EnvelopeTarget {
        self.target
    }

    pub fn scale(&self) -> EnvelopeScale {
        self.scale
    }

    pub fn tree(&self) -> &TreeRef<S> {
        self.values.tree()
    }

    /// Stored values (squared for Q-envelopes).
    pub fn stored(&self) -> &AdaptedSequence<S> {
        &self.values
    }

    /// `lambda_n` itself; square roots are taken for Q-envelopes.
    pub fn linear(&self) -> AdaptedSequence<S> {
        match self.scale {
            EnvelopeScale::Linear => self.values.clone(),
            EnvelopeScale::Squared => self.values.map(sqrt),
        }
    }

    /// `||lambda_N||_{p,q}`.
    pub fn terminal_norm(&self, idx: LorentzIndex) -> f64 {
        let masses = self.tree().leaf_masses();
        let terminal = self.values.terminal();
        match self.scale {
            EnvelopeScale::Linear => lorentz_norm(&terminal, masses, idx),
            EnvelopeScale::Squared => lorentz_norm_of_squares(&terminal, masses, idx),
        }
    }

    /// Checks nonnegativity, monotonicity along paths and domination of the
    /// target of `f`; reports the first offending node.
    pub fn validate(&self, f: &Martingale<S>) -> Result<()> {
        let tree = self.tree();
        let tol = S::default_tolerance();
        let need = required_bounds(f, self.target);
        let fail = |which: &str, id: NodeId| Error::PropertyViolated {
            which: which.into(),
            witness: format!("node {}", id.0),
        };
        for id in tree.ids() {
            let v = self.values.value(id);
            if *v < S::zero() {
                return Err(fail("envelope nonnegativity", id));
            }
            if let Some(p) = tree.parent(id) {
                if !crate::scalar::le_tol(self.values.value(p), v, tol) {
                    return Err(fail("envelope monotonicity", id));
                }
            }
            if !crate::scalar::le_tol(&need[id.0], v, tol) {
                return Err(fail("envelope domination", id));
            }
        }
        Ok(())
    }

    /// Pointwise `self <= other`, compared in the stored scale.
    pub fn le(&self, other: &EnvelopeSequence<S>) -> bool {
        self.scale == other.scale
            && self
                .values
                .values()
                .iter()
                .zip(other.values.values())
                .all(|(a, b)| crate::scalar::le_tol(a, b, S::default_tolerance()))
    }
}

fn scale_of(target: EnvelopeTarget) -> EnvelopeScale {
    match target {
        EnvelopeTarget::Q => EnvelopeScale::Squared,
        EnvelopeTarget::D => EnvelopeScale::Linear,
    }
}

/// The smallest value `lambda_n(A)` may take given only the one-step
/// constraint: the maximum of the target over the children of `A`
/// (the node's own value at the terminal level). Stored scale.
pub fn required_bounds<S: Scalar>(f: &Martingale<S>, target: EnvelopeTarget) -> Vec<S> {
    let tree = f.tree();
    let stat: Vec<S> = match target {
        EnvelopeTarget::Q => quad_variation_sq(f).values().to_vec(),
        EnvelopeTarget::D => f.values().iter().map(|v| v.abs()).collect(),
    };
    tree.ids()
        .map(|id| {
            let children = tree.children(id);
            if children.is_empty() {
                stat[id.0].clone()
            } else {
                children.iter().fold(S::zero(), |acc, c| max_of(acc, stat[c.0].clone()))
            }
        })
        .collect()
}

/// The pointwise smallest valid envelope: `lambda_n(A) = max(lambda_{n-1}(parent), bound(A))`.
pub fn minimal_envelope<S: Scalar>(f: &Martingale<S>, target: EnvelopeTarget) -> EnvelopeSequence<S> {
    let tree = f.tree();
    let bounds = required_bounds(f, target);
    let mut values: Vec<S> = Vec::with_capacity(tree.len());
    for id in tree.ids() {
        let here = bounds[id.0].clone();
        let v = match tree.parent(id) {
            Some(p) => max_of(values[p.0].clone(), here),
            None => here,
        };
        values.push(v);
    }
    let seq = AdaptedSequence::new(tree.clone(), values).expect("one value per node");
    EnvelopeSequence::new(target, seq)
}

/// `||f*||`, `||S(f)||` or `||s(f)||` in `L_{p,q}`, or the Q/D functionals.
pub fn h_norm<S: Scalar>(f: &Martingale<S>, kind: NormKind, idx: LorentzIndex) -> f64 {
    let masses = f.tree().leaf_masses();
    match kind {
        NormKind::Star => lorentz_norm(&maximal(f).terminal(), masses, idx),
        NormKind::Square => lorentz_norm_of_squares(&quad_variation_sq(f).terminal(), masses, idx),
        NormKind::CondSquare => lorentz_norm_of_squares(&cond_quad_variation_sq(f).terminal(), masses, idx),
        NormKind::Q => qd_norm(f, EnvelopeTarget::Q, idx),
        NormKind::D => qd_norm(f, EnvelopeTarget::D, idx),
    }
}

/// `||lambda_N||_{p,q}` of the minimal envelope, which attains the infimum.
pub fn qd_norm<S: Scalar>(f: &Martingale<S>, target: EnvelopeTarget, idx: LorentzIndex) -> f64 {
    minimal_envelope(f, target).terminal_norm(idx)
}

/// `||f_N||_{p,q}`.
pub fn terminal_lorentz_norm<S: Scalar>(f: &Martingale<S>, idx: LorentzIndex) -> f64 {
    lorentz_norm(&f.terminal(), f.tree().leaf_masses(), idx)
}

/// One row of an equivalence table: `ratio = ||f||_a / ||f||_b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub instance_id: u64,
    pub regularity: f64,
    pub p: f64,
    pub q: f64,
    pub a: String,
    pub b: String,
    pub ratio: f64,
}

/// All pairwise ratios among the five functionals for one martingale, plus
/// the comparison against `||f_N||_{p,q}` when `p > 1`. Zero martingales
/// produce no rows.
pub fn equivalence_rows<S: Scalar>(instance_id: u64, f: &Martingale<S>, idx: LorentzIndex) -> Vec<EquivalenceRow> {
    if f.is_zero() {
        return Vec::new();
    }
    let mut named: Vec<(String, f64)> = NormKind::ALL.iter().map(|k| (k.name().to_string(), h_norm(f, *k, idx))).collect();
    if idx.p() > 1.0 {
        named.push(("Lpq".to_string(), terminal_lorentz_norm(f, idx)));
    }
    let regularity = f.tree().regularity_constant().to_f64();
    let mut rows = Vec::new();
    for i in 0..named.len() {
        for j in i + 1..named.len() {
            rows.push(EquivalenceRow {
                instance_id,
                regularity,
                p: idx.p(),
                q: idx.q(),
                a: named[i].0.clone(),
                b: named[j].0.clone(),
                ratio: named[i].1 / named[j].1,
            });
        }
    }
    rows
}

/// Min, median and max of a batch of ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBand {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl RatioBand {
    pub fn of(ratios: &[f64]) -> Option<RatioBand> {
        if ratios.is_empty() {
            return None;
        }
        let mut v = ratios.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(RatioBand { count: n, min: v[0], median, max: v[n - 1] })
    }
}

/// Groups equivalence rows by `(R, a, b)` and summarizes each group.
pub fn equivalence_bands(rows: &[EquivalenceRow]) -> Vec<(f64, String, String, RatioBand)> {
    let mut keys: Vec<(f64, String, String)> = rows.iter().map(|r| (r.regularity, r.a.clone(), r.b.clone())).collect();
    keys.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)).then_with(|| x.2.cmp(&y.2)));
    keys.dedup();
    keys.into_iter()
        .filter_map(|(r, a, b)| {
            let ratios: Vec<f64> =
                rows.iter().filter(|x| x.regularity == r && x.a == a && x.b == b).map(|x| x.ratio).collect();
            RatioBand::of(&ratios).map(|band| (r, a, b, band))
        })
        .collect()
}
