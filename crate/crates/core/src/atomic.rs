//! Atomic decompositions driven by level crossings of `s(f)` or of a minimal
//! envelope, atom validation, and the duality checks built on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bmo::{oscillations, StoppingSequence};
use crate::error::{Error, Result};
use crate::filtration::TreeRef;
use crate::hardy::{h_norm, minimal_envelope, EnvelopeTarget, NormKind};
use crate::lorentz::LorentzIndex;
use crate::process::{
    cond_quad_variation_sq, level_crossing_time, maximal, quad_variation_sq, stop_values, stopped,
    stopped_remainder, AdaptedSequence, Lookahead, Martingale, StoppingTime, StoppingTimeDoc,
};
use crate::scalar::{close, le_tol, pow, pow2, NumberText, Scalar};

/// Which maximal quantity of an atom is bounded by `P(nu < inf)^{-1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomCategory {
    /// `||s(a)||_inf`.
    Conditional = 1,
    /// `||S(a)||_inf`.
    Square = 2,
    /// `||a*||_inf`.
    Maximal = 3,
}

impl AtomCategory {
    pub fn number(self) -> u8 {
        self as u8
    }
}

/// The statistic whose level crossings define the stopping times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecompositionTarget {
    #[serde(rename = "s")]
    CondSquare,
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "D")]
    D,
}

impl DecompositionTarget {
    pub const ALL: [DecompositionTarget; 3] = [DecompositionTarget::CondSquare, DecompositionTarget::Q, DecompositionTarget::D];

    pub fn category(self) -> AtomCategory {
        match self {
            DecompositionTarget::CondSquare => AtomCategory::Conditional,
            DecompositionTarget::Q => AtomCategory::Square,
            DecompositionTarget::D => AtomCategory::Maximal,
        }
    }

    /// The Hardy-Lorentz functional the coefficients are compared with.
    pub fn norm_kind(self) -> NormKind {
        match self {
            DecompositionTarget::CondSquare => NormKind::CondSquare,
            DecompositionTarget::Q => NormKind::Q,
            DecompositionTarget::D => NormKind::D,
        }
    }

    pub fn name(self) -> &'static str {
        self.norm_kind().name()
    }
}

impl fmt::Display for DecompositionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecompositionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecompositionTarget::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown decomposition target {s:?}")))
    }
}

/// An atom with its stopping time, category and exponent.
#[derive(Debug, Clone)]
pub struct TriAtom<S> {
    pub atom: Martingale<S>,
    pub nu: StoppingTime<S>,
    pub category: AtomCategory,
    pub p: f64,
}

/// Outcome of [`validate_atom`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AtomReport {
    pub passed: bool,
    /// Offending node and the violated condition.
    pub violation: Option<(usize, String)>,
}

impl AtomReport {
    fn pass() -> Self {
        AtomReport { passed: true, violation: None }
    }

    fn fail(node: usize, reason: &str) -> Self {
        AtomReport { passed: false, violation: Some((node, reason.to_string())) }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(format!("p = {p} must be positive and finite")))
    }
}

/// Checks that `a_n = 0` on `{nu >= n}` and that the category's maximal
/// quantity is at most `P(nu < inf)^{-1/p}`.
pub fn validate_atom<S: Scalar>(atom: &TriAtom<S>) -> AtomReport {
    let a = &atom.atom;
    let tree = a.tree();
    let tol = S::default_tolerance();
    let stop_map = atom.nu.stop_map();
    for id in tree.ids() {
        let started = tree.parent(id).is_some_and(|p| stop_map[p.0].is_some());
        if !started && !close(a.value(id), &S::zero(), tol) {
            return AtomReport::fail(id.0, "nonzero before the stopping time");
        }
    }
    let prob = atom.nu.prob_finite();
    if prob.is_zero() {
        return AtomReport::pass();
    }
    // Compare stat * P^{1/p} <= 1, squared for the quadratic categories.
    let scale = pow(&prob, 1.0 / atom.p);
    let (stat, squared) = match atom.category {
        AtomCategory::Conditional => (cond_quad_variation_sq(a), true),
        AtomCategory::Square => (quad_variation_sq(a), true),
        AtomCategory::Maximal => (maximal(a), false),
    };
    let factor = if squared { scale.clone() * scale } else { scale };
    for leaf in tree.leaves() {
        if !le_tol(&(stat.value(*leaf).clone() * factor.clone()), &S::one(), tol) {
            return AtomReport::fail(leaf.0, "category bound exceeded");
        }
    }
    AtomReport::pass()
}

/// One term `mu_k a^k`.
#[derive(Debug, Clone)]
pub struct AtomTerm<S> {
    pub k: i32,
    pub mu: S,
    pub atom: TriAtom<S>,
}

/// The unit `c` of the crossing levels `c 2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdUnit {
    /// `c = 1`.
    #[default]
    One,
    /// `c = max |f|`, which makes the decomposition of `t f` the decomposition
    /// of `f` with every coefficient multiplied by `|t|`.
    MaxAbs,
}

impl FromStr for ThresholdUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(ThresholdUnit::One),
            "max-abs" => Ok(ThresholdUnit::MaxAbs),
            _ => Err(Error::InvalidSpec(format!("unknown threshold unit {s:?}"))),
        }
    }
}

/// `f = sum_k mu_k a^k` with `mu_k = A c 2^k P(nu_k < inf)^{1/p}`.
#[derive(Debug, Clone)]
pub struct AtomicDecomposition<S> {
    pub tree: TreeRef<S>,
    pub target: DecompositionTarget,
    pub p: f64,
    pub constant: S,
    pub unit: S,
    pub window: Option<(i32, i32)>,
    pub terms: Vec<AtomTerm<S>>,
}

/// Largest `k` with `base^k < x` for `x > 0`, where `base` is 2 or 4.
fn largest_below<S: Scalar>(x: &S, squared: bool) -> i32 {
    let thr = |k: i32| -> S { if squared { pow2(2 * k) } else { pow2(k) } };
    let step = if squared { 2.0 } else { 1.0 };
    let mut k = (x.to_f64().log2() / step).floor().clamp(-1000.0, 1000.0) as i32;
    while thr(k + 1) < *x {
        k += 1;
    }
    while thr(k) >= *x {
        k -= 1;
    }
    k
}

/// The decomposition for `target` with the constant `A = 3` and levels `2^k`.
pub fn decompose<S: Scalar>(f: &Martingale<S>, target: DecompositionTarget, p: f64) -> Result<AtomicDecomposition<S>> {
    decompose_with(f, target, p, S::from_i64(3), ThresholdUnit::One)
}

/// Like [`decompose`] with levels `max|f| 2^k`.
pub fn decompose_normalized<S: Scalar>(
    f: &Martingale<S>,
    target: DecompositionTarget,
    p: f64,
) -> Result<AtomicDecomposition<S>> {
    decompose_with(f, target, p, S::from_i64(3), ThresholdUnit::MaxAbs)
}

/// `nu_k = inf{n : s_{n+1}(f) > 2^k}`.
pub fn decompose_s<S: Scalar>(f: &Martingale<S>, p: f64) -> Result<AtomicDecomposition<S>> {
    decompose(f, DecompositionTarget::CondSquare, p)
}

/// `nu_k = inf{n : lambda_n > 2^k}` for the minimal Q or D envelope `lambda`.
pub fn decompose_qd<S: Scalar>(f: &Martingale<S>, p: f64, target: EnvelopeTarget) -> Result<AtomicDecomposition<S>> {
    let t = match target {
        EnvelopeTarget::Q => DecompositionTarget::Q,
        EnvelopeTarget::D => DecompositionTarget::D,
    };
    decompose(f, t, p)
}

/// The stopping statistic for `target`, how it is read, and whether it is squared.
fn crossing_statistic<S: Scalar>(f: &Martingale<S>, target: DecompositionTarget) -> (AdaptedSequence<S>, Lookahead, bool) {
    match target {
        DecompositionTarget::CondSquare => (cond_quad_variation_sq(f), Lookahead::NextStep, true),
        DecompositionTarget::Q => (minimal_envelope(f, EnvelopeTarget::Q).stored().clone(), Lookahead::Current, true),
        DecompositionTarget::D => (minimal_envelope(f, EnvelopeTarget::D).stored().clone(), Lookahead::Current, false),
    }
}

pub fn decompose_with_constant<S: Scalar>(
    f: &Martingale<S>,
    target: DecompositionTarget,
    p: f64,
    constant: S,
) -> Result<AtomicDecomposition<S>> {
    decompose_with(f, target, p, constant, ThresholdUnit::One)
}

pub fn decompose_with<S: Scalar>(
    f: &Martingale<S>,
    target: DecompositionTarget,
    p: f64,
    constant: S,
    unit: ThresholdUnit,
) -> Result<AtomicDecomposition<S>> {
    check_p(p)?;
    if constant <= S::zero() {
        return Err(Error::InvalidSpec(format!("constant {} must be positive", constant.repr())));
    }
    let tree = f.tree().clone();
    let (stat, lookahead, squared) = crossing_statistic(f, target);
    let unit = match unit {
        ThresholdUnit::MaxAbs if !f.is_zero() => f.terminal().iter().fold(S::zero(), |m, v| {
            let a = v.abs();
            if a > m {
                a
            } else {
                m
            }
        }),
        _ => S::one(),
    };
    let stat_unit = if squared { unit.clone() * unit.clone() } else { unit.clone() };
    let positive: Vec<&S> = stat.values().iter().filter(|v| **v > S::zero()).collect();
    let empty = AtomicDecomposition {
        tree: tree.clone(),
        target,
        p,
        constant: constant.clone(),
        unit: unit.clone(),
        window: None,
        terms: Vec::new(),
    };
    let (Some(lo), Some(hi)) = (
        positive.iter().copied().min_by(|a, b| a.partial_cmp(b).expect("ordered")),
        positive.iter().copied().max_by(|a, b| a.partial_cmp(b).expect("ordered")),
    ) else {
        if !f.is_zero() {
            return Err(Error::WindowInsufficient("the stopping statistic vanishes but f does not".into()));
        }
        return Ok(empty);
    };
    let (k_lo, k_hi) =
        (largest_below(&(lo.clone() / stat_unit.clone()), squared), largest_below(&(hi.clone() / stat_unit.clone()), squared));
    let crossing = |k: i32| -> Result<StoppingTime<S>> {
        let thr: S = stat_unit.clone() * if squared { pow2(2 * k) } else { pow2(k) };
        level_crossing_time(&stat, &thr, lookahead)
    };
    let times: Vec<StoppingTime<S>> = (k_lo..=k_hi + 1).map(crossing).collect::<Result<_>>()?;
    let stopped_all: Vec<Martingale<S>> = times.iter().map(|nu| stopped(f, nu)).collect::<Result<_>>()?;
    if !stopped_all[0].is_zero() {
        return Err(Error::WindowInsufficient(format!("f stopped at nu_{k_lo} is not zero")));
    }
    let tol = S::default_tolerance();
    let last = stopped_all.last().expect("non-empty");
    if last.values().iter().zip(f.values()).any(|(a, b)| !close(a, b, tol)) {
        return Err(Error::WindowInsufficient(format!("f stopped at nu_{} differs from f", k_hi + 1)));
    }
    let mut terms = Vec::new();
    for (i, k) in (k_lo..=k_hi).enumerate() {
        let nu = times[i].clone();
        let mu = constant.clone() * unit.clone() * pow2::<S>(k) * pow(&nu.prob_finite(), 1.0 / p);
        let diff = stopped_all[i + 1].sub(&stopped_all[i])?;
        let atom = if mu.is_zero() { Martingale::zero(tree.clone()) } else { diff.scale(&(S::one() / mu.clone())) };
        terms.push(AtomTerm { k, mu, atom: TriAtom { atom, nu, category: target.category(), p } });
    }
    Ok(AtomicDecomposition { tree, target, p, constant, unit, window: Some((k_lo, k_hi)), terms })
}

impl<S: Scalar> AtomicDecomposition<S> {
    /// `sum_k mu_k a^k`.
    pub fn reconstruct(&self) -> Martingale<S> {
        self.partial_sum(i32::MIN, i32::MAX)
    }

    /// `sum_{m <= k <= n} mu_k a^k`.
    pub fn partial_sum(&self, m: i32, n: i32) -> Martingale<S> {
        let mut values = vec![S::zero(); self.tree.len()];
        for term in self.terms.iter().filter(|t| (m..=n).contains(&t.k)) {
            for (v, a) in values.iter_mut().zip(term.atom.atom.values()) {
                *v = v.clone() + term.mu.clone() * a.clone();
            }
        }
        Martingale::from_parts(self.tree.clone(), values)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.mu.to_f64()).collect()
    }

    /// Every atom's report, paired with its `k`.
    pub fn validate(&self) -> Vec<(i32, AtomReport)> {
        self.terms.iter().map(|t| (t.k, validate_atom(&t.atom))).collect()
    }

    pub fn all_atoms_valid(&self) -> bool {
        self.terms.iter().all(|t| validate_atom(&t.atom).passed)
    }

    pub fn to_doc(&self) -> DecompositionDoc {
        DecompositionDoc {
            target: self.target,
            p: self.p,
            constant: NumberText::from_scalar(&self.constant),
            unit: NumberText::from_scalar(&self.unit),
            window: self.window,
            terms: self
                .terms
                .iter()
                .map(|t| TermDoc {
                    k: t.k,
                    mu: NumberText::from_scalar(&t.mu),
                    nu: t.atom.nu.to_doc(),
                    atom: t.atom.atom.terminal().iter().map(NumberText::from_scalar).collect(),
                })
                .collect(),
        }
    }

    pub fn from_doc(tree: TreeRef<S>, doc: &DecompositionDoc) -> Result<Self> {
        check_p(doc.p)?;
        let terms = doc
            .terms
            .iter()
            .map(|t| {
                let values = t.atom.iter().map(NumberText::parse::<S>).collect::<Result<Vec<_>>>()?;
                Ok(AtomTerm {
                    k: t.k,
                    mu: t.mu.parse()?,
                    atom: TriAtom {
                        atom: Martingale::from_terminal(tree.clone(), &values)?,
                        nu: StoppingTime::from_doc(tree.clone(), &t.nu)?,
                        category: doc.target.category(),
                        p: doc.p,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AtomicDecomposition {
            tree,
            target: doc.target,
            p: doc.p,
            constant: doc.constant.parse()?,
            unit: doc.unit.parse()?,
            window: doc.window,
            terms,
        })
    }
}

/// Serialized decomposition: atoms are given by their terminal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDoc {
    pub target: DecompositionTarget,
    pub p: f64,
    pub constant: NumberText,
    #[serde(default = "unit_one")]
    pub unit: NumberText,
    pub window: Option<(i32, i32)>,
    pub terms: Vec<TermDoc>,
}

fn unit_one() -> NumberText {
    NumberText::Text("1".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub k: i32,
    pub mu: NumberText,
    pub nu: StoppingTimeDoc,
    pub atom: Vec<NumberText>,
}

/// `||(mu_k)||_{l_q}`; `q = inf` gives the largest coefficient.
pub fn coefficient_norm<S: Scalar>(dec: &AtomicDecomposition<S>, q: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::InvalidExponent(format!("q = {q} must be positive")));
    }
    let mus = dec.coefficients();
    if q.is_infinite() {
        return Ok(mus.into_iter().fold(0.0, f64::max));
    }
    Ok(mus.iter().map(|m| m.powf(q)).sum::<f64>().powf(1.0 / q))
}

/// `||(mu_k)||_{l_q}` over the matching Hardy-Lorentz norm of `f` at `(p, q)`;
/// 0 when both vanish.
pub fn coefficient_ratio<S: Scalar>(dec: &AtomicDecomposition<S>, f: &Martingale<S>, q: f64) -> Result<f64> {
    let num = coefficient_norm(dec, q)?;
    let idx = LorentzIndex::new(dec.p, q)?;
    let den = h_norm(f, dec.target.norm_kind(), idx);
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DivisionByZero("f has zero norm but nonzero coefficients".into()));
    }
    Ok(num / den)
}

/// One step of [`partial_sum_convergence`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSumStep {
    /// `None` for the empty window.
    pub window: Option<(i32, i32)>,
    pub norm: f64,
}

/// `||f - sum_{k=m}^{k_max} mu_k a^k||_{H^s_{p,q}}` for `m` running down from
/// `k_max` to `k_min`, preceded by the empty window. The remainder is
/// `f^{nu_m}`, so the sequence is nonincreasing and ends at 0.
pub fn partial_sum_convergence<S: Scalar>(dec: &AtomicDecomposition<S>, f: &Martingale<S>, q: f64) -> Result<Vec<PartialSumStep>> {
    let idx = LorentzIndex::new(dec.p, q)?;
    let norm = |g: &Martingale<S>| h_norm(g, NormKind::CondSquare, idx);
    let mut out = vec![PartialSumStep { window: None, norm: norm(f) }];
    if let Some((lo, hi)) = dec.window {
        for m in (lo..=hi).rev() {
            let rest = f.sub(&dec.partial_sum(m, hi))?;
            out.push(PartialSumStep { window: Some((m, hi)), norm: norm(&rest) });
        }
    }
    Ok(out)
}

/// Per-term result of [`orthogonality_check`]. Slacks are differences of
/// the squared sides, so their sign is exact in rational mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityRow {
    pub k: i32,
    /// `E(a^k g)`.
    pub pairing: f64,
    /// `E(a^k (g - g^{nu_k}))`.
    pub stopped_pairing: f64,
    /// `||a||_2^2 ||h||_2^2 - E(a h)^2`.
    pub slack_cauchy_schwarz: f64,
    /// `P^{1-2/p} ||h||_2^2 - ||a||_2^2 ||h||_2^2`.
    pub slack_atom: f64,
    /// `||g||^2_{BMO_2(1/p-1)} - P^{1-2/p} ||h||_2^2`, present for `p <= 1`.
    pub slack_bmo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub rows: Vec<OrthogonalityRow>,
    /// `||g||^2_{BMO_2(1/p-1)}` when `p <= 1`.
    pub bmo_sq: Option<f64>,
}

/// Tolerance for comparisons involving `P^{1/p}`; exact in rational mode
/// only when `1/p` is an integer.
fn power_tolerance<S: Scalar>(p: f64) -> f64 {
    if (1.0 / p).fract() == 0.0 {
        S::default_tolerance()
    } else {
        S::default_tolerance().max(1e-12)
    }
}

/// For every term, `E(a^k g) = E(a^k (g - g^{nu_k}))` and the chain
/// `|E(a h)| <= ||a||_2 ||h||_2 <= P^{1/2-1/p} ||h||_2 <= ||g||_{BMO_2(1/p-1)}`
/// with `h = g - g^{nu_k}`; the last link only when `p <= 1`.
pub fn orthogonality_check<S: Scalar>(dec: &AtomicDecomposition<S>, g: &Martingale<S>) -> Result<OrthogonalityReport> {
    if !crate::filtration::same_tree(&dec.tree, g.tree()) {
        return Err(Error::TreeMismatch);
    }
    let tol = S::default_tolerance();
    let ptol = power_tolerance::<S>(dec.p);
    let masses = dec.tree.leaf_masses();
    let bmo_sq: Option<S> = (dec.p <= 1.0).then(|| {
        let e = 2.0 / dec.p - 1.0;
        let osc = oscillations(g, 2.0);
        dec.tree.ids().fold(S::zero(), |acc, id| {
            let v = osc[id.0].clone() / pow(dec.tree.mass(id), e);
            if v > acc {
                v
            } else {
                acc
            }
        })
    });
    let mut rows = Vec::new();
    for term in &dec.terms {
        let (a, nu, k) = (&term.atom.atom, &term.atom.nu, term.k);
        let h = stopped_remainder(g, nu)?;
        let pairing = a.pairing(g)?;
        let stopped_pairing = a.pairing(&h)?;
        if !close(&pairing, &stopped_pairing, tol) {
            return Err(Error::ChainViolated { k, link: "identity".into() });
        }
        let a_sq = crate::process::abs_moment(masses, &a.terminal(), 2.0);
        let h_sq = crate::process::abs_moment(masses, &h.terminal(), 2.0);
        let lhs_cs = stopped_pairing.clone() * stopped_pairing.clone();
        let rhs_cs = a_sq.clone() * h_sq.clone();
        if !le_tol(&lhs_cs, &rhs_cs, tol) {
            return Err(Error::ChainViolated { k, link: "cauchy-schwarz".into() });
        }
        let prob = nu.prob_finite();
        // P^{1-2/p} = P / (P^{1/p})^2
        let atom_rhs = if prob.is_zero() {
            S::zero()
        } else {
            let s = pow(&prob, 1.0 / dec.p);
            prob.clone() / (s.clone() * s) * h_sq.clone()
        };
        if !le_tol(&rhs_cs, &atom_rhs, ptol) {
            return Err(Error::ChainViolated { k, link: "atom bound".into() });
        }
        let slack_bmo = match &bmo_sq {
            Some(b) => {
                if !le_tol(&atom_rhs, b, ptol) {
                    return Err(Error::ChainViolated { k, link: "bmo bound".into() });
                }
                Some((b.clone() - atom_rhs.clone()).to_f64())
            }
            None => None,
        };
        rows.push(OrthogonalityRow {
            k,
            pairing: pairing.to_f64(),
            stopped_pairing: stopped_pairing.to_f64(),
            slack_cauchy_schwarz: (rhs_cs.clone() - lhs_cs).to_f64(),
            slack_atom: (atom_rhs - rhs_cs).to_f64(),
            slack_bmo,
        });
    }
    Ok(OrthogonalityReport { rows, bmo_sq: bmo_sq.map(|b| b.to_f64()) })
}

/// Result of [`dual_witness`].
#[derive(Debug, Clone)]
pub struct DualWitness<S> {
    pub f: Martingale<S>,
    /// `||f||_{H^s_{p,q}}`.
    pub norm: f64,
    /// `(sum_k (2^k P(nu_k < inf)^{1/p})^q)^{1/q}`.
    pub denominator: f64,
    pub ratio: f64,
}

/// Builds `f = sum_k 2^k P(nu_k < inf)^{1-1/r} (h_k - h_k^{nu_k})` with
/// `h_k = |g - g^{nu_k}|^{r-1} sign(g - g^{nu_k}) / ||g - g^{nu_k}||_r^{r-1}`
/// (with `0^0 = 1`), and compares its `H^s_{p,q}` norm with the weights.
/// Terms with `g = g^{nu_k}` are skipped.
pub fn dual_witness<S: Scalar>(
    g: &Martingale<S>,
    seq: &StoppingSequence<S>,
    p: f64,
    q: f64,
    r: f64,
) -> Result<DualWitness<S>> {
    check_p(p)?;
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::InvalidExponent(format!("r = {r} must be a finite number >= 1")));
    }
    let idx = LorentzIndex::new(p, q)?;
    let tree = g.tree();
    let masses = tree.leaf_masses();
    let mut values = vec![S::zero(); tree.len()];
    let mut used = 0usize;
    let mut weights: Vec<f64> = Vec::new();
    for (k, nu) in seq.iter() {
        let prob = nu.prob_finite();
        if !prob.is_zero() {
            weights.push(2f64.powi(k) * prob.to_f64().powf(1.0 / p));
        }
        let x = stopped_remainder(g, nu)?.terminal();
        let moment = crate::process::abs_moment(masses, &x, r);
        if moment.is_zero() {
            continue;
        }
        used += 1;
        let norm_pow = if r == 1.0 { S::one() } else { S::from_f64(moment.to_f64().powf((r - 1.0) / r)) };
        let h: Vec<S> = x.iter().map(|v| pow(&v.abs(), r - 1.0) * v.signum() / norm_pow.clone()).collect();
        let big_h = tree.node_expectations(&h)?;
        let frozen = stop_values(&big_h, nu);
        let c = pow2::<S>(k) * pow(&prob, 1.0 - 1.0 / r);
        for (i, v) in values.iter_mut().enumerate() {
            *v = v.clone() + c.clone() * (big_h[i].clone() - frozen[i].clone());
        }
    }
    if used == 0 {
        return Err(Error::DegenerateSequence);
    }
    let f = Martingale::from_parts(tree.clone(), values);
    let norm = h_norm(&f, NormKind::CondSquare, idx);
    let denominator = if q.is_infinite() {
        weights.iter().copied().fold(0.0, f64::max)
    } else {
        weights.iter().map(|w| w.powf(q)).sum::<f64>().powf(1.0 / q)
    };
    Ok(DualWitness { f, norm, denominator, ratio: norm / denominator })
}
