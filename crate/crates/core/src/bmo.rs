//! Lipschitz norms `BMO_r(alpha)` and the sequence functional `BMO_{r,q}(alpha)`.
//!
//! For a stopping sequence `(nu_k)` the sequence functional is the ratio
//!
//! ```text
//! sum_k 2^k P(nu_k < inf)^{1-1/r} ||g - g^{nu_k}||_r
//! ------------------------------------------------------
//!   ( sum_k (2^k P(nu_k < inf)^{e})^q )^{1/q}
//! ```
//!
//! with `e = 1 + alpha` by default. Terms with `P(nu_k < inf) = 0` vanish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{same_tree, NodeId, TreeRef};
use crate::hardy::{minimal_envelope, EnvelopeTarget};
use crate::process::{
    cond_quad_variation_sq, count_stopping_times, enumerate_stopping_times, level_crossing_time, maximal,
    quad_variation_sq, random_stopping_time, AdaptedSequence, Lookahead, Martingale, StoppingTime,
    StoppingTimeDoc,
};
use crate::scalar::{pow, pow2, Scalar};

fn check_exponents(r: f64, alpha: f64) -> Result<()> {
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::InvalidExponent(format!("r = {r} must be a finite number >= 1")));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidExponent(format!("alpha = {alpha} must be finite and >= 0")));
    }
    Ok(())
}

fn check_q(q: f64) -> Result<()> {
    if !(q.is_finite() && q >= 1.0) {
        return Err(Error::InvalidExponent(format!("q = {q} must be a finite number >= 1")));
    }
    Ok(())
}

/// `int_A |g_N - g_n(A)|^r` for every atom `A` (at its own level `n`).
pub fn oscillations<S: Scalar>(g: &Martingale<S>, r: f64) -> Vec<S> {
    let tree = g.tree();
    let terminal = g.terminal();
    let masses = tree.leaf_masses();
    tree.ids()
        .map(|id| {
            let here = g.value(id);
            tree.node(id).leaves.clone().fold(S::zero(), |acc, i| {
                acc + masses[i].clone() * pow(&(terminal[i].clone() - here.clone()).abs(), r)
            })
        })
        .collect()
}

fn normalized(osc: f64, mass: f64, r: f64, alpha: f64) -> f64 {
    if osc <= 0.0 {
        return 0.0;
    }
    osc.powf(1.0 / r) * mass.powf(-1.0 / r - alpha)
}

/// `sup_n sup_{A atom of F_n} P(A)^{-1/r-alpha} (int_A |g - E_n g|^r)^{1/r}`.
pub fn bmo_exact<S: Scalar>(g: &Martingale<S>, r: f64, alpha: f64) -> Result<f64> {
    check_exponents(r, alpha)?;
    let tree = g.tree();
    let osc = oscillations(g, r);
    Ok(tree
        .ids()
        .map(|id| normalized(osc[id.0].to_f64(), tree.mass(id).to_f64(), r, alpha))
        .fold(0.0, f64::max))
}

/// `sup_nu P(nu < inf)^{-1/r-alpha} ||g - g^nu||_r` over every stopping time.
pub fn bmo_stopping<S: Scalar>(g: &Martingale<S>, r: f64, alpha: f64, cap: u128) -> Result<f64> {
    Ok(bmo_stopping_multi(g, &[(r, alpha)], cap)?[0])
}

/// [`bmo_stopping`] for several `(r, alpha)` pairs with a single enumeration.
pub fn bmo_stopping_multi<S: Scalar>(g: &Martingale<S>, params: &[(f64, f64)], cap: u128) -> Result<Vec<f64>> {
    for (r, a) in params {
        check_exponents(*r, *a)?;
    }
    let tree = g.tree();
    let mut rs: Vec<f64> = params.iter().map(|p| p.0).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let osc: Vec<Vec<S>> = rs.iter().map(|r| oscillations(g, *r)).collect();
    let mut best = vec![0.0f64; params.len()];
    for nu in enumerate_stopping_times(tree, cap)? {
        if nu.is_never() {
            continue;
        }
        let p = nu.prob_finite().to_f64();
        let sums: Vec<f64> = osc
            .iter()
            .map(|o| nu.stop_set().iter().fold(S::zero(), |acc, s| acc + o[s.0].clone()).to_f64())
            .collect();
        for (i, (r, a)) in params.iter().enumerate() {
            let j = rs.iter().position(|x| x == r).expect("listed");
            best[i] = best[i].max(normalized(sums[j], p, *r, *a));
        }
    }
    Ok(best)
}

/// A finite stopping sequence `nu_k`, `k_min <= k <= k_max`; `nu_k = inf` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingSequence<S> {
    k_min: i32,
    times: Vec<StoppingTime<S>>,
}

/// Serialized stopping sequence: node indices per `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingSequenceDoc {
    pub k_min: i32,
    pub stop_sets: Vec<StoppingTimeDoc>,
}

impl<S: Scalar> StoppingSequence<S> {
    pub fn new(k_min: i32, times: Vec<StoppingTime<S>>) -> Result<Self> {
        if let Some(first) = times.first() {
            if times.iter().any(|t| !same_tree(t.tree(), first.tree())) {
                return Err(Error::TreeMismatch);
            }
        }
        Ok(StoppingSequence { k_min, times })
    }

    /// A sequence whose only finite member is `nu` at index `k`.
    pub fn singleton(k: i32, nu: StoppingTime<S>) -> Self {
        StoppingSequence { k_min: k, times: vec![nu] }
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_min + self.times.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn get(&self, k: i32) -> Option<&StoppingTime<S>> {
        usize::try_from(k - self.k_min).ok().and_then(|i| self.times.get(i))
    }

    /// `(k, nu_k)` pairs over the window.
    pub fn iter(&self) -> impl Iterator<Item = (i32, &StoppingTime<S>)> {
        self.times.iter().enumerate().map(move |(i, t)| (self.k_min + i as i32, t))
    }

    pub fn to_doc(&self) -> StoppingSequenceDoc {
        StoppingSequenceDoc { k_min: self.k_min, stop_sets: self.times.iter().map(StoppingTime::to_doc).collect() }
    }

    pub fn from_doc(tree: TreeRef<S>, doc: &StoppingSequenceDoc) -> Result<Self> {
        let times =
            doc.stop_sets.iter().map(|d| StoppingTime::from_doc(tree.clone(), d)).collect::<Result<Vec<_>>>()?;
        StoppingSequence::new(doc.k_min, times)
    }
}

/// Exponent `e` of `P(nu_k < inf)` in the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DenominatorExponent {
    /// `e = 1 + alpha`.
    #[default]
    OnePlusAlpha,
    /// A fixed `e`, for instance `1/p`.
    Explicit(f64),
}

impl DenominatorExponent {
    pub fn value(self, alpha: f64) -> f64 {
        match self {
            DenominatorExponent::OnePlusAlpha => 1.0 + alpha,
            DenominatorExponent::Explicit(e) => e,
        }
    }
}

/// Parameters of the sequence functional.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RatioParams {
    r: f64,
    q: f64,
    e: f64,
}

impl RatioParams {
    /// Numerator and denominator (before the `1/q` power) contributions of one term.
    fn term(&self, k: i32, p: f64, osc: f64) -> (f64, f64) {
        if p <= 0.0 {
            return (0.0, 0.0);
        }
        let scale = 2f64.powi(k);
        let n = if osc > 0.0 { scale * p.powf(1.0 - 1.0 / self.r) * osc.powf(1.0 / self.r) } else { 0.0 };
        (n, (scale * p.powf(self.e)).powf(self.q))
    }

    fn ratio(&self, n: f64, c: f64) -> Option<f64> {
        (c > 0.0).then(|| n / c.powf(1.0 / self.q))
    }
}

/// The sequence ratio at `seq`; `None` when every `P(nu_k < inf)` vanishes.
pub fn definition_ratio<S: Scalar>(
    g: &Martingale<S>,
    seq: &StoppingSequence<S>,
    r: f64,
    q: f64,
    alpha: f64,
    exponent: DenominatorExponent,
) -> Result<Option<f64>> {
    check_exponents(r, alpha)?;
    check_q(q)?;
    if seq.times.iter().any(|t| !same_tree(t.tree(), g.tree())) {
        return Err(Error::TreeMismatch);
    }
    let osc = oscillations(g, r);
    let params = RatioParams { r, q, e: exponent.value(alpha) };
    let (mut n, mut c) = (0.0, 0.0);
    for (k, nu) in seq.iter() {
        let p = nu.prob_finite().to_f64();
        let e = nu.stop_set().iter().fold(S::zero(), |acc, s| acc + osc[s.0].clone()).to_f64();
        let (dn, dc) = params.term(k, p, e);
        n += dn;
        c += dc;
    }
    Ok(params.ratio(n, c))
}

/// Which candidate family produced a [`BmoEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Exhaustive,
    Singleton,
    LevelCrossing,
    Random,
    LocalSearch,
}

/// A lower bound for `||g||_{BMO_{r,q}(alpha)}` together with the sequence attaining it.
#[derive(Debug, Clone)]
pub struct BmoEstimate<S> {
    pub value: f64,
    pub witness: StoppingSequence<S>,
    pub method: EstimateMethod,
}

/// Serialized [`BmoEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoEstimateDoc {
    pub value: f64,
    pub method: EstimateMethod,
    pub witness: StoppingSequenceDoc,
}

impl<S: Scalar> BmoEstimate<S> {
    pub fn to_doc(&self) -> BmoEstimateDoc {
        BmoEstimateDoc { value: self.value, method: self.method, witness: self.witness.to_doc() }
    }
}

/// Tuning for [`bmo_seq_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BmoSeqConfig {
    /// Inclusive `k` window; derived from the data when absent.
    pub window: Option<(i32, i32)>,
    pub exponent: DenominatorExponent,
    /// Enumerate every stopping time for the singleton family up to this count.
    pub singleton_cap: u128,
    /// Random singletons drawn when the enumeration is too large.
    pub singleton_samples: usize,
    pub random_sequences: usize,
    pub hill_climb_iterations: usize,
    /// Work budget for the exact search; 0 disables it.
    pub exhaustive_cap: u128,
    pub seed: u64,
}

impl Default for BmoSeqConfig {
    fn default() -> Self {
        BmoSeqConfig {
            window: None,
            exponent: DenominatorExponent::OnePlusAlpha,
            singleton_cap: 100_000,
            singleton_samples: 2_000,
            random_sequences: 200,
            hill_climb_iterations: 200,
            exhaustive_cap: 10_000_000,
            seed: 0,
        }
    }
}

/// Default window `[floor(log2 m) - 2, ceil(log2 M) + 1]` from the smallest
/// positive and the largest value of `s(g)`, `S(g)` and `g*`. `None` for `g = 0`.
pub fn default_window<S: Scalar>(g: &Martingale<S>) -> Option<(i32, i32)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let stats = [
        cond_quad_variation_sq(g).map(crate::scalar::sqrt),
        quad_variation_sq(g).map(crate::scalar::sqrt),
        maximal(g),
    ];
    for stat in &stats {
        for v in stat.values() {
            let x = v.to_f64();
            if x > 0.0 {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    (hi > 0.0).then(|| (lo.log2().floor() as i32 - 2, hi.log2().ceil() as i32 + 1))
}

/// Fast evaluation of candidate sequences on `f64` node data.
struct Search<'a, S> {
    tree: &'a TreeRef<S>,
    mass: Vec<f64>,
    osc: Vec<f64>,
    params: RatioParams,
    window: (i32, i32),
}

impl<S: Scalar> Search<'_, S> {
    fn slot_data(&self, stop: &[NodeId]) -> (f64, f64) {
        stop.iter().fold((0.0, 0.0), |(p, e), s| (p + self.mass[s.0], e + self.osc[s.0]))
    }

    fn evaluate(&self, slots: &[Vec<NodeId>]) -> Option<f64> {
        let (mut n, mut c) = (0.0, 0.0);
        for (i, stop) in slots.iter().enumerate() {
            let (p, e) = self.slot_data(stop);
            let (dn, dc) = self.params.term(self.window.0 + i as i32, p, e);
            n += dn;
            c += dc;
        }
        self.params.ratio(n, c)
    }

    fn slots_len(&self) -> usize {
        (self.window.1 - self.window.0 + 1) as usize
    }

    /// Stop set with `node` added and every comparable node removed.
    fn with_node(&self, stop: &[NodeId], node: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = stop
            .iter()
            .copied()
            .filter(|s| !self.tree.is_ancestor_or_self(*s, node) && !self.tree.is_ancestor_or_self(node, *s))
            .collect();
        out.push(node);
        out.sort_unstable();
        out
    }
}

/// Lower bound for `||g||_{BMO_{r,q}(alpha)}`: the best of the singleton,
/// level-crossing, random and hill-climbing families, and of the exact
/// search when it fits in `config.exhaustive_cap`.
pub fn bmo_seq_estimate<S: Scalar>(
    g: &Martingale<S>,
    r: f64,
    q: f64,
    alpha: f64,
    config: &BmoSeqConfig,
) -> Result<BmoEstimate<S>> {
    check_exponents(r, alpha)?;
    check_q(q)?;
    let tree = g.tree();
    let window = match config.window.or_else(|| default_window(g)) {
        Some(w) if w.0 <= w.1 => w,
        _ => {
            return Ok(BmoEstimate {
                value: 0.0,
                witness: StoppingSequence::singleton(0, StoppingTime::never(tree.clone())),
                method: EstimateMethod::Singleton,
            })
        }
    };
    let search = Search {
        tree,
        mass: tree.ids().map(|id| tree.mass(id).to_f64()).collect(),
        osc: oscillations(g, r).iter().map(Scalar::to_f64).collect(),
        params: RatioParams { r, q, e: config.exponent.value(alpha) },
        window,
    };
    let width = search.slots_len();
    let mut best: Option<(f64, Vec<Vec<NodeId>>, EstimateMethod)> = None;
    let offer = |slots: Vec<Vec<NodeId>>, method: EstimateMethod, best: &mut Option<(f64, Vec<Vec<NodeId>>, EstimateMethod)>| {
        if let Some(v) = search.evaluate(&slots) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                *best = Some((v, slots, method));
            }
        }
    };
    let singleton_slots = |stop: Vec<NodeId>| {
        let mut slots = vec![Vec::new(); width];
        slots[0] = stop;
        slots
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Singletons; the ratio of a one-term sequence does not depend on k.
    let total = count_stopping_times(tree);
    if total <= config.singleton_cap {
        for nu in enumerate_stopping_times(tree, config.singleton_cap)? {
            offer(singleton_slots(nu.stop_set().to_vec()), EstimateMethod::Singleton, &mut best);
        }
    } else {
        for id in tree.ids() {
            offer(singleton_slots(vec![id]), EstimateMethod::Singleton, &mut best);
        }
        for _ in 0..config.singleton_samples {
            let prob = rng.random_range(0.05..0.95);
            let nu = random_stopping_time(tree, &mut rng, prob);
            offer(singleton_slots(nu.stop_set().to_vec()), EstimateMethod::Singleton, &mut best);
        }
    }

    // Level crossings of s, S, g* and of the minimal Q and D envelopes, on every sub-window.
    for (stat, lookahead, squared) in crossing_statistics(g) {
        let mut per_k: Vec<Vec<NodeId>> = Vec::with_capacity(width);
        for k in window.0..=window.1 {
            let threshold: S = if squared { pow2(2 * k) } else { pow2(k) };
            per_k.push(level_crossing_time(&stat, &threshold, lookahead)?.stop_set().to_vec());
        }
        for a in 0..width {
            for b in a..width {
                let slots =
                    (0..width).map(|i| if (a..=b).contains(&i) { per_k[i].clone() } else { Vec::new() }).collect();
                offer(slots, EstimateMethod::LevelCrossing, &mut best);
            }
        }
    }

    for _ in 0..config.random_sequences {
        let a = rng.random_range(0..width);
        let b = rng.random_range(a..width);
        let prob = rng.random_range(0.05..0.95);
        let slots = (0..width)
            .map(|i| {
                if (a..=b).contains(&i) {
                    random_stopping_time(tree, &mut rng, prob).stop_set().to_vec()
                } else {
                    Vec::new()
                }
            })
            .collect();
        offer(slots, EstimateMethod::Random, &mut best);
    }

    if let Some((start, slots, _)) = best.clone() {
        let (v, climbed) = hill_climb(&search, slots, start, config.hill_climb_iterations);
        if v > start {
            best = Some((v, climbed, EstimateMethod::LocalSearch));
        }
    }

    if config.exhaustive_cap > 0 && total.saturating_mul(width as u128) <= config.exhaustive_cap {
        if let Ok((v, slots)) = pareto_search(&search, config.exhaustive_cap) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, slots, EstimateMethod::Exhaustive));
            }
        }
    }

    let Some((_, slots, method)) = best else {
        return Ok(BmoEstimate {
            value: 0.0,
            witness: StoppingSequence::singleton(0, StoppingTime::never(tree.clone())),
            method: EstimateMethod::Singleton,
        });
    };
    let witness = to_sequence(tree, window.0, slots)?;
    let value = definition_ratio(g, &witness, r, q, alpha, config.exponent)?.unwrap_or(0.0);
    Ok(BmoEstimate { value, witness, method })
}

fn to_sequence<S: Scalar>(tree: &TreeRef<S>, k_min: i32, slots: Vec<Vec<NodeId>>) -> Result<StoppingSequence<S>> {
    let times = slots.into_iter().map(|s| StoppingTime::new(tree.clone(), s)).collect::<Result<Vec<_>>>()?;
    StoppingSequence::new(k_min, times)
}

fn crossing_statistics<S: Scalar>(g: &Martingale<S>) -> Vec<(AdaptedSequence<S>, Lookahead, bool)> {
    let mut out = vec![
        (cond_quad_variation_sq(g), Lookahead::NextStep, true),
        (quad_variation_sq(g), Lookahead::Current, true),
        (maximal(g), Lookahead::Current, false),
    ];
    out.push((minimal_envelope(g, EnvelopeTarget::Q).stored().clone(), Lookahead::Current, true));
    out.push((minimal_envelope(g, EnvelopeTarget::D).stored().clone(), Lookahead::Current, false));
    out
}

fn hill_climb<S: Scalar>(
    search: &Search<'_, S>,
    mut slots: Vec<Vec<NodeId>>,
    mut value: f64,
    iterations: usize,
) -> (f64, Vec<Vec<NodeId>>) {
    for _ in 0..iterations {
        let mut improved: Option<(f64, usize, Vec<NodeId>)> = None;
        for i in 0..slots.len() {
            for id in search.tree.ids() {
                let candidate = if slots[i].contains(&id) {
                    slots[i].iter().copied().filter(|s| *s != id).collect()
                } else {
                    search.with_node(&slots[i], id)
                };
                let previous = std::mem::replace(&mut slots[i], candidate);
                if let Some(v) = search.evaluate(&slots) {
                    if v > value * (1.0 + 1e-14) && improved.as_ref().is_none_or(|b| v > b.0) {
                        improved = Some((v, i, slots[i].clone()));
                    }
                }
                slots[i] = previous;
            }
        }
        match improved {
            Some((v, i, stop)) => {
                value = v;
                slots[i] = stop;
            }
            None => break,
        }
    }
    (value, slots)
}

/// Exact maximum of the ratio over every assignment of a stopping time (or
/// infinity) to each `k` of the window.
///
/// The ratio increases with the numerator sum and decreases with the
/// denominator sum, so only Pareto-optimal partial sums need to be kept while
/// the window is processed one `k` at a time.
fn pareto_search<S: Scalar>(search: &Search<'_, S>, cap: u128) -> Result<(f64, Vec<Vec<NodeId>>)> {
    let all: Vec<StoppingTime<S>> = enumerate_stopping_times(search.tree, cap)?.collect();
    let data: Vec<(f64, f64)> = all.iter().map(|nu| search.slot_data(nu.stop_set())).collect();
    #[derive(Clone)]
    struct State {
        n: f64,
        c: f64,
        choice: Vec<u32>,
    }
    let mut front = vec![State { n: 0.0, c: 0.0, choice: Vec::new() }];
    let mut work: u128 = 0;
    for slot in 0..search.slots_len() {
        let k = search.window.0 + slot as i32;
        let options = pareto_prune(
            data.iter().enumerate().map(|(i, (p, e))| {
                let (n, c) = search.params.term(k, *p, *e);
                (n, c, i as u32)
            }),
        );
        work += (front.len() * options.len()) as u128;
        if work > cap {
            return Err(Error::EnumerationCapExceeded { count: format!("more than {work} search steps"), cap });
        }
        let mut next: Vec<(f64, f64, u32)> = Vec::with_capacity(front.len() * options.len());
        let mut parents = Vec::with_capacity(front.len() * options.len());
        for (si, state) in front.iter().enumerate() {
            for (on, oc, oi) in &options {
                next.push((state.n + on, state.c + oc, parents.len() as u32));
                parents.push((si, *oi));
            }
        }
        front = pareto_prune(next.into_iter())
            .into_iter()
            .map(|(n, c, i)| {
                let (si, oi) = parents[i as usize];
                let mut choice = front[si].choice.clone();
                choice.push(oi);
                State { n, c, choice }
            })
            .collect();
    }
    let best = front
        .into_iter()
        .filter_map(|s| search.params.ratio(s.n, s.c).map(|v| (v, s.choice)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((v, choice)) => Ok((v, choice.into_iter().map(|i| all[i as usize].stop_set().to_vec()).collect())),
        None => Ok((0.0, vec![Vec::new(); search.slots_len()])),
    }
}

/// Keeps the points not dominated by another with larger-or-equal `n` and
/// smaller-or-equal `c`.
fn pareto_prune(points: impl Iterator<Item = (f64, f64, u32)>) -> Vec<(f64, f64, u32)> {
    let mut v: Vec<(f64, f64, u32)> = points.collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)));
    let mut out: Vec<(f64, f64, u32)> = Vec::new();
    for p in v {
        if out.last().is_none_or(|last| p.0 > last.0) {
            out.push(p);
        }
    }
    out
}

/// Exact `max` of the sequence ratio over every assignment of an enumerated
/// stopping time or infinity to each `k` in `window`.
pub fn bmo_seq_exhaustive<S: Scalar>(
    g: &Martingale<S>,
    r: f64,
    q: f64,
    alpha: f64,
    window: (i32, i32),
    exponent: DenominatorExponent,
    cap: u128,
) -> Result<BmoEstimate<S>> {
    check_exponents(r, alpha)?;
    check_q(q)?;
    let tree = g.tree();
    if window.0 > window.1 {
        return Err(Error::InvalidSpec(format!("empty window [{}, {}]", window.0, window.1)));
    }
    let search = Search {
        tree,
        mass: tree.ids().map(|id| tree.mass(id).to_f64()).collect(),
        osc: oscillations(g, r).iter().map(Scalar::to_f64).collect(),
        params: RatioParams { r, q, e: exponent.value(alpha) },
        window,
    };
    let (_, slots) = pareto_search(&search, cap)?;
    let witness = to_sequence(tree, window.0, slots)?;
    let value = definition_ratio(g, &witness, r, q, alpha, exponent)?.unwrap_or(0.0);
    Ok(BmoEstimate { value, witness, method: EstimateMethod::Exhaustive })
}

/// One row of a John-Nirenberg comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JnRow {
    pub instance_id: u64,
    pub regularity: f64,
    pub r: f64,
    pub q: f64,
    pub alpha: f64,
    pub estimate_r: f64,
    pub estimate_2: f64,
    pub ratio: f64,
}

/// Ratios `estimate_r / estimate_2` for each `r` in `rs`; zero martingales are skipped.
pub fn jn_rows<S: Scalar>(
    instance_id: u64,
    g: &Martingale<S>,
    rs: &[f64],
    q: f64,
    alpha: f64,
    config: &BmoSeqConfig,
) -> Result<Vec<JnRow>> {
    if g.is_zero() {
        return Ok(Vec::new());
    }
    let base = bmo_seq_estimate(g, 2.0, q, alpha, config)?.value;
    let regularity = g.tree().regularity_constant().to_f64();
    rs.iter()
        .map(|&r| {
            let est = if r == 2.0 { base } else { bmo_seq_estimate(g, r, q, alpha, config)?.value };
            Ok(JnRow { instance_id, regularity, r, q, alpha, estimate_r: est, estimate_2: base, ratio: est / base })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::filtration::FiltrationTree;
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn binary(depth: usize) -> TreeRef<Rational> {
        Arc::new(FiltrationTree::uniform(2, depth).unwrap())
    }

    fn one_step() -> Martingale<Rational> {
        Martingale::from_terminal(binary(1), &[q(1, 1), q(-1, 1)]).unwrap()
    }

    #[test]
    fn exact_two_leaf_examples() {
        let g = one_step();
        assert_eq!(bmo_exact(&g, 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(bmo_exact(&g, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(bmo_stopping(&g, 2.0, 0.0, 100).unwrap(), 1.0);
        let z = Martingale::<Rational>::zero(binary(2));
        assert_eq!(bmo_exact(&z, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(bmo_stopping(&z, 3.0, 1.0, 100).unwrap(), 0.0);
        assert!(matches!(bmo_exact(&g, 0.5, 0.0), Err(Error::InvalidExponent(_))));
        assert!(matches!(bmo_exact(&g, 2.0, -1.0), Err(Error::InvalidExponent(_))));
        assert!(matches!(bmo_stopping(&g, 2.0, 0.0, 3), Err(Error::EnumerationCapExceeded { .. })));
    }

    #[test]
    fn never_contributes_nothing() {
        let g = one_step();
        let seq = StoppingSequence::singleton(0, StoppingTime::never(g.tree().clone()));
        assert_eq!(definition_ratio(&g, &seq, 2.0, 2.0, 0.0, DenominatorExponent::OnePlusAlpha).unwrap(), None);
    }

    #[test]
    fn singleton_ratio_cancels() {
        let t = binary(2);
        let g = Martingale::from_terminal(t.clone(), &[q(3, 1), q(-1, 1), q(0, 1), q(-2, 1)]).unwrap();
        let nu = StoppingTime::new(t, vec![NodeId(1)]).unwrap();
        let (r, alpha) = (2.0, 1.0);
        let rem = crate::process::stopped_remainder(&g, &nu).unwrap();
        let p = nu.prob_finite().to_f64();
        let direct = p.powf(-1.0 / r - alpha) * rem.lr_norm(r);
        for k in [-3, 0, 2] {
            let seq = StoppingSequence::singleton(k, nu.clone());
            let v = definition_ratio(&g, &seq, r, 5.0, alpha, DenominatorExponent::OnePlusAlpha).unwrap().unwrap();
            assert!((v - direct).abs() < 1e-14 * direct);
        }
    }

    #[test]
    fn exhaustive_two_leaf() {
        let g = one_step();
        let est = bmo_seq_exhaustive(&g, 2.0, 2.0, 0.0, (0, 0), DenominatorExponent::OnePlusAlpha, 1000).unwrap();
        assert_eq!(est.value, 1.0);
        let est = bmo_seq_estimate(&g, 2.0, 2.0, 0.0, &BmoSeqConfig::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12 || est.value > 1.0);
        let again = definition_ratio(&g, &est.witness, 2.0, 2.0, 0.0, DenominatorExponent::OnePlusAlpha).unwrap();
        assert_eq!(again, Some(est.value));
    }

    #[test]
    fn zero_martingale_estimate() {
        let z = Martingale::<Rational>::zero(binary(2));
        assert_eq!(bmo_seq_estimate(&z, 2.0, 2.0, 0.0, &BmoSeqConfig::default()).unwrap().value, 0.0);
        assert!(jn_rows(0, &z, &[1.0, 3.0], 2.0, 0.0, &BmoSeqConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn pareto_prune_keeps_the_frontier() {
        let pts = vec![(1.0, 1.0, 0), (2.0, 1.0, 1), (1.5, 2.0, 2), (3.0, 3.0, 3), (0.0, 0.0, 4)];
        let kept: Vec<u32> = pareto_prune(pts.into_iter()).into_iter().map(|p| p.2).collect();
        assert_eq!(kept, vec![4, 1, 3]);
    }

    #[test]
    fn sequence_doc_round_trip() {
        let t = binary(2);
        let seq = StoppingSequence::new(
            -1,
            vec![StoppingTime::new(t.clone(), vec![NodeId(1), NodeId(5)]).unwrap(), StoppingTime::never(t.clone())],
        )
        .unwrap();
        let doc = seq.to_doc();
        let json = serde_json::to_string(&doc).unwrap();
        let back = StoppingSequence::from_doc(t, &serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, seq);
        assert_eq!(back.k_max(), 0);
        assert!(back.get(1).is_none());
    }
}
