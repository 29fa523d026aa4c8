//! Martingales, adapted sequences and stopping times on a filtration tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{same_tree, FiltrationTree, NodeId, TreeRef};
use crate::scalar::{close, max_of, pow, sqrt, Scalar};

/// Default cap on the number of stopping times an exhaustive enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// A martingale with `f_0 = 0`, stored as one value per node.
#[derive(Debug, Clone)]
pub struct Martingale<S> {
    tree: TreeRef<S>,
    values: Vec<S>,
}

/// One value per node; the value at a level-`n` node is the process at time `n` on that atom.
#[derive(Debug, Clone)]
pub struct AdaptedSequence<S> {
    tree: TreeRef<S>,
    values: Vec<S>,
}

impl<S: Scalar> AdaptedSequence<S> {
    pub fn new(tree: TreeRef<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::MissingLeafValue { expected: tree.len(), got: values.len() });
        }
        Ok(AdaptedSequence { tree, values })
    }

    pub fn tree(&self) -> &TreeRef<S> {
        &self.tree
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn value(&self, id: NodeId) -> &S {
        &self.values[id.0]
    }

    /// Values on the terminal atoms, in canonical leaf order.
    pub fn terminal(&self) -> Vec<S> {
        self.tree.leaves().iter().map(|l| self.values[l.0].clone()).collect()
    }

    pub fn map(&self, f: impl Fn(&S) -> S) -> Self {
        AdaptedSequence { tree: self.tree.clone(), values: self.values.iter().map(f).collect() }
    }

    /// Whether the sequence is nondecreasing along every root-to-leaf path.
    pub fn is_nondecreasing(&self) -> bool {
        self.tree.ids().skip(1).all(|id| {
            let p = self.tree.parent(id).expect("non-root");
            self.values[p.0] <= self.values[id.0]
        })
    }
}

/// Subtracts the mass-weighted mean so the terminal variable has expectation 0.
pub fn center<S: Scalar>(tree: &FiltrationTree<S>, leaf_values: &[S]) -> Result<Vec<S>> {
    let mean = expectation(tree, leaf_values)?;
    Ok(leaf_values.iter().map(|v| v.clone() - mean.clone()).collect())
}

pub fn expectation<S: Scalar>(tree: &FiltrationTree<S>, leaf_values: &[S]) -> Result<S> {
    if leaf_values.len() != tree.leaf_count() {
        return Err(Error::MissingLeafValue { expected: tree.leaf_count(), got: leaf_values.len() });
    }
    Ok(tree
        .leaf_masses()
        .iter()
        .zip(leaf_values)
        .fold(S::zero(), |acc, (m, v)| acc + m.clone() * v.clone()))
}

/// `E|x|^r` on the leaves; exact when `r` is an integer.
pub fn abs_moment<S: Scalar>(masses: &[S], values: &[S], r: f64) -> S {
    masses.iter().zip(values).fold(S::zero(), |acc, (m, v)| acc + m.clone() * pow(&v.abs(), r))
}

/// `(E|x|^r)^{1/r}`.
pub fn lr_norm<S: Scalar>(masses: &[S], values: &[S], r: f64) -> f64 {
    abs_moment(masses, values, r).to_f64().max(0.0).powf(1.0 / r)
}

impl<S: Scalar> Martingale<S> {
    /// Fills every level by conditional expectation of the terminal values.
    pub fn from_terminal(tree: TreeRef<S>, leaf_values: &[S]) -> Result<Self> {
        Self::from_terminal_with_tolerance(tree, leaf_values, S::default_tolerance())
    }

    pub fn from_terminal_with_tolerance(tree: TreeRef<S>, leaf_values: &[S], tol: f64) -> Result<Self> {
        let mut values = tree.node_expectations(leaf_values)?;
        let mean = values[0].clone();
        if !close(&mean, &S::zero(), tol) {
            return Err(Error::NonCenteredTerminal { mean: mean.repr() });
        }
        values[0] = S::zero();
        Ok(Martingale { tree, values })
    }

    /// Wraps node values after checking the martingale property and `f_0 = 0`.
    pub fn from_node_values(tree: TreeRef<S>, values: Vec<S>) -> Result<Self> {
        Self::from_node_values_with_tolerance(tree, values, S::default_tolerance())
    }

    pub fn from_node_values_with_tolerance(tree: TreeRef<S>, values: Vec<S>, tol: f64) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::MissingLeafValue { expected: tree.len(), got: values.len() });
        }
        if !close(&values[0], &S::zero(), tol) {
            return Err(Error::NonCenteredTerminal { mean: values[0].repr() });
        }
        for id in tree.ids() {
            let children = tree.children(id);
            if children.is_empty() {
                continue;
            }
            let avg = children
                .iter()
                .fold(S::zero(), |acc, c| acc + tree.mass(*c).clone() * values[c.0].clone())
                / tree.mass(id).clone();
            if !close(&avg, &values[id.0], tol) {
                return Err(Error::NotAMartingale { node: id.0 });
            }
        }
        Ok(Martingale { tree, values })
    }

    pub fn zero(tree: TreeRef<S>) -> Self {
        let values = vec![S::zero(); tree.len()];
        Martingale { tree, values }
    }

    pub(crate) fn from_parts(tree: TreeRef<S>, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), tree.len());
        Martingale { tree, values }
    }

    pub fn tree(&self) -> &TreeRef<S> {
        &self.tree
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn value(&self, id: NodeId) -> &S {
        &self.values[id.0]
    }

    /// `f_N` in canonical leaf order.
    pub fn terminal(&self) -> Vec<S> {
        self.tree.leaves().iter().map(|l| self.values[l.0].clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn as_adapted(&self) -> AdaptedSequence<S> {
        AdaptedSequence { tree: self.tree.clone(), values: self.values.clone() }
    }

    pub fn scale(&self, c: &S) -> Self {
        Martingale { tree: self.tree.clone(), values: self.values.iter().map(|v| v.clone() * c.clone()).collect() }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: &S, other: &Martingale<S>, b: &S) -> Result<Self> {
        if !same_tree(&self.tree, &other.tree) {
            return Err(Error::TreeMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a.clone() * x.clone() + b.clone() * y.clone())
            .collect();
        Ok(Martingale { tree: self.tree.clone(), values })
    }

    pub fn sub(&self, other: &Martingale<S>) -> Result<Self> {
        self.combine(&S::one(), other, &-S::one())
    }

    pub fn add(&self, other: &Martingale<S>) -> Result<Self> {
        self.combine(&S::one(), other, &S::one())
    }

    /// `E(f_N g_N)`.
    pub fn pairing(&self, other: &Martingale<S>) -> Result<S> {
        if !same_tree(&self.tree, &other.tree) {
            return Err(Error::TreeMismatch);
        }
        Ok(self
            .tree
            .leaves()
            .iter()
            .zip(self.tree.leaf_masses())
            .fold(S::zero(), |acc, (l, m)| acc + m.clone() * self.values[l.0].clone() * other.values[l.0].clone()))
    }

    /// `||f_N||_r`.
    pub fn lr_norm(&self, r: f64) -> f64 {
        lr_norm(self.tree.leaf_masses(), &self.terminal(), r)
    }

    /// Largest absolute difference against another martingale on the same tree.
    pub fn max_abs_diff(&self, other: &Martingale<S>) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.clone() - b.clone()).abs().to_f64())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs().to_f64()).fold(0.0, f64::max)
    }
}

/// `d_n f = f_n - f_{n-1}` at every node (`d_0 = f_0 = 0` at the root).
pub fn differences<S: Scalar>(f: &Martingale<S>) -> AdaptedSequence<S> {
    let tree = f.tree();
    let values = tree
        .ids()
        .map(|id| match tree.parent(id) {
            Some(p) => f.values[id.0].clone() - f.values[p.0].clone(),
            None => f.values[id.0].clone(),
        })
        .collect();
    AdaptedSequence { tree: tree.clone(), values }
}

/// Running maximum `f*_n = max_{i<=n} |f_i|`; its terminal level is `f*`.
pub fn maximal<S: Scalar>(f: &Martingale<S>) -> AdaptedSequence<S> {
    path_accumulate(f.tree(), |id| f.values[id.0].abs(), max_of)
}

/// `S_n(f)^2`, exact in rational mode.
pub fn quad_variation_sq<S: Scalar>(f: &Martingale<S>) -> AdaptedSequence<S> {
    let d = differences(f);
    path_accumulate(f.tree(), |id| d.values[id.0].clone() * d.values[id.0].clone(), |a, b| a + b)
}

pub fn quad_variation<S: Scalar>(f: &Martingale<S>) -> AdaptedSequence<S> {
    quad_variation_sq(f).map(sqrt)
}

/// `E_n |d_{n+1} f|^2` stored at each level-`n` node (zero on leaves).
pub fn conditional_increment_sq<S: Scalar>(f: &Martingale<S>) -> Vec<S> {
    let tree = f.tree();
    tree.ids()
        .map(|id| {
            let children = tree.children(id);
            if children.is_empty() {
                return S::zero();
            }
            let here = f.values[id.0].clone();
            children.iter().fold(S::zero(), |acc, c| {
                let d = f.values[c.0].clone() - here.clone();
                acc + tree.mass(*c).clone() * d.clone() * d
            }) / tree.mass(id).clone()
        })
        .collect()
}

/// `s_n(f)^2 = sum_{i<=n} E_{i-1}|d_i f|^2`; predictable, so constant across siblings.
pub fn cond_quad_variation_sq<S: Scalar>(f: &Martingale<S>) -> AdaptedSequence<S> {
    let tree = f.tree();
    let inc = conditional_increment_sq(f);
    let mut values = vec![S::zero(); tree.len()];
    for id in tree.ids().skip(1) {
        let p = tree.parent(id).expect("non-root");
        values[id.0] = values[p.0].clone() + inc[p.0].clone();
    }
    AdaptedSequence { tree: tree.clone(), values }
}

pub fn cond_quad_variation<S: Scalar>(f: &Martingale<S>) -> AdaptedSequence<S> {
    cond_quad_variation_sq(f).map(sqrt)
}

fn path_accumulate<S: Scalar>(
    tree: &TreeRef<S>,
    term: impl Fn(NodeId) -> S,
    combine: impl Fn(S, S) -> S,
) -> AdaptedSequence<S> {
    let mut values: Vec<S> = Vec::with_capacity(tree.len());
    for id in tree.ids() {
        let t = term(id);
        let v = match tree.parent(id) {
            Some(p) => combine(values[p.0].clone(), t),
            None => t,
        };
        values.push(v);
    }
    AdaptedSequence { tree: tree.clone(), values }
}

/// A stopping time given by the antichain of atoms where it stops.
///
/// `nu(w)` is the level of the unique stop atom containing `w`, or infinity
/// when no stop atom contains it. The empty antichain is `nu = infinity`.
#[derive(Debug, Clone)]
pub struct StoppingTime<S> {
    tree: TreeRef<S>,
    stop_set: Vec<NodeId>,
}

impl<S> PartialEq for StoppingTime<S> {
    fn eq(&self, other: &Self) -> bool {
        self.stop_set == other.stop_set
    }
}

impl<S: Scalar> StoppingTime<S> {
    /// Validates the antichain property; the stop set is stored sorted.
    pub fn new(tree: TreeRef<S>, mut stop_set: Vec<NodeId>) -> Result<Self> {
        stop_set.sort_unstable();
        stop_set.dedup();
        if let Some(bad) = stop_set.iter().find(|id| id.0 >= tree.len()) {
            return Err(Error::InvalidStoppingTime(format!("node {} does not exist", bad.0)));
        }
        let mut marked = vec![false; tree.len()];
        for id in &stop_set {
            marked[id.0] = true;
        }
        for id in &stop_set {
            let mut cur = tree.parent(*id);
            while let Some(p) = cur {
                if marked[p.0] {
                    return Err(Error::InvalidStoppingTime(format!(
                        "node {} is an ancestor of node {}",
                        p.0, id.0
                    )));
                }
                cur = tree.parent(p);
            }
        }
        Ok(StoppingTime { tree, stop_set })
    }

    pub(crate) fn from_sorted_unchecked(tree: TreeRef<S>, stop_set: Vec<NodeId>) -> Self {
        StoppingTime { tree, stop_set }
    }

    /// `nu = infinity`.
    pub fn never(tree: TreeRef<S>) -> Self {
        StoppingTime { tree, stop_set: Vec::new() }
    }

    /// `nu = 0`.
    pub fn immediately(tree: TreeRef<S>) -> Self {
        StoppingTime { tree, stop_set: vec![NodeId::ROOT] }
    }

    /// `nu = N` on every path.
    pub fn at_terminal(tree: TreeRef<S>) -> Self {
        let stop_set = tree.leaves().to_vec();
        StoppingTime { tree, stop_set }
    }

    pub fn tree(&self) -> &TreeRef<S> {
        &self.tree
    }

    pub fn stop_set(&self) -> &[NodeId] {
        &self.stop_set
    }

    pub fn is_never(&self) -> bool {
        self.stop_set.is_empty()
    }

    /// `P(nu < infinity)`.
    pub fn prob_finite(&self) -> S {
        self.stop_set.iter().fold(S::zero(), |acc, id| acc + self.tree.mass(*id).clone())
    }

    /// For every node, its ancestor-or-self in the stop set, if any.
    pub fn stop_map(&self) -> Vec<Option<NodeId>> {
        let mut marked = vec![false; self.tree.len()];
        for id in &self.stop_set {
            marked[id.0] = true;
        }
        let mut map: Vec<Option<NodeId>> = Vec::with_capacity(self.tree.len());
        for id in self.tree.ids() {
            let inherited = self.tree.parent(id).and_then(|p| map[p.0]);
            map.push(inherited.or(if marked[id.0] { Some(id) } else { None }));
        }
        map
    }

    /// `nu(w)` per leaf in canonical order; `None` is infinity.
    pub fn leaf_levels(&self) -> Vec<Option<usize>> {
        let map = self.stop_map();
        self.tree.leaves().iter().map(|l| map[l.0].map(|s| self.tree.level(s))).collect()
    }

    /// Pointwise `self <= other` (infinity is the largest value).
    pub fn le(&self, other: &StoppingTime<S>) -> bool {
        self.leaf_levels().iter().zip(other.leaf_levels()).all(|(a, b)| match (a, b) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(x), Some(y)) => *x <= y,
        })
    }

    /// Indicator of `{nu < infinity}` on the leaves.
    pub fn finite_indicator(&self) -> Vec<bool> {
        self.leaf_levels().iter().map(Option::is_some).collect()
    }
}

/// Node values frozen at the stop atom: `x_{n ^ nu}`.
pub fn stop_values<S: Scalar>(values: &[S], nu: &StoppingTime<S>) -> Vec<S> {
    nu.stop_map()
        .into_iter()
        .enumerate()
        .map(|(id, s)| values[s.map_or(id, |s| s.0)].clone())
        .collect()
}

/// The stopped martingale `f^nu = (f_{n ^ nu})`.
pub fn stopped<S: Scalar>(f: &Martingale<S>, nu: &StoppingTime<S>) -> Result<Martingale<S>> {
    if !same_tree(f.tree(), nu.tree()) {
        return Err(Error::TreeMismatch);
    }
    Martingale::from_node_values(f.tree.clone(), stop_values(&f.values, nu))
}

/// `f - f^nu` without re-validating (it is a martingale whenever `f` is).
pub fn stopped_remainder<S: Scalar>(f: &Martingale<S>, nu: &StoppingTime<S>) -> Result<Martingale<S>> {
    if !same_tree(f.tree(), nu.tree()) {
        return Err(Error::TreeMismatch);
    }
    let frozen = stop_values(&f.values, nu);
    let values = f.values.iter().zip(frozen).map(|(a, b)| a.clone() - b).collect();
    Ok(Martingale { tree: f.tree.clone(), values })
}

/// Number of stopping times: `T(leaf) = 2`, `T(node) = 1 + prod T(child)`.
/// Saturates at `u128::MAX`.
pub fn count_stopping_times<S: Scalar>(tree: &FiltrationTree<S>) -> u128 {
    subtree_counts(tree)[0]
}

fn subtree_counts<S: Scalar>(tree: &FiltrationTree<S>) -> Vec<u128> {
    let mut counts = vec![0u128; tree.len()];
    for id in tree.ids().rev() {
        let children = tree.children(id);
        counts[id.0] = if children.is_empty() {
            2
        } else {
            children
                .iter()
                .fold(1u128, |acc, c| acc.saturating_mul(counts[c.0]))
                .saturating_add(1)
        };
    }
    counts
}

/// Every stopping time on the tree exactly once, `nu = infinity` included.
pub fn enumerate_stopping_times<S: Scalar>(tree: &TreeRef<S>, cap: u128) -> Result<StoppingTimes<S>> {
    let counts = subtree_counts(tree);
    let total = counts[0];
    if total > cap {
        let count = if total == u128::MAX { "more than 2^128".to_string() } else { total.to_string() };
        return Err(Error::EnumerationCapExceeded { count, cap });
    }
    Ok(StoppingTimes { tree: tree.clone(), counts, next: 0, total })
}

/// Lazy enumeration; index `i` decodes as "stop here" (0) or a mixed-radix
/// choice over the children's subtrees.
#[derive(Debug, Clone)]
pub struct StoppingTimes<S> {
    tree: TreeRef<S>,
    counts: Vec<u128>,
    next: u128,
    total: u128,
}

impl<S: Scalar> StoppingTimes<S> {
    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn decode(&self, index: u128) -> StoppingTime<S> {
        debug_assert!(index < self.total);
        let mut out = Vec::new();
        self.decode_into(NodeId::ROOT, index, &mut out);
        out.sort_unstable();
        StoppingTime::from_sorted_unchecked(self.tree.clone(), out)
    }

    fn decode_into(&self, node: NodeId, index: u128, out: &mut Vec<NodeId>) {
        if index == 0 {
            out.push(node);
            return;
        }
        let mut rest = index - 1;
        for c in self.tree.children(node) {
            let base = self.counts[c.0];
            self.decode_into(*c, rest % base, out);
            rest /= base;
        }
    }
}

impl<S: Scalar> Iterator for StoppingTimes<S> {
    type Item = StoppingTime<S>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let nu = self.decode(self.next);
        self.next += 1;
        Some(nu)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

impl<S: Scalar> ExactSizeIterator for StoppingTimes<S> {}

/// A random stopping time: each reached atom stops with probability `stop_prob`.
pub fn random_stopping_time<S: Scalar, R: Rng>(tree: &TreeRef<S>, rng: &mut R, stop_prob: f64) -> StoppingTime<S> {
    let mut out = Vec::new();
    let mut stack = vec![NodeId::ROOT];
    while let Some(id) = stack.pop() {
        if rng.random_bool(stop_prob.clamp(0.0, 1.0)) {
            out.push(id);
        } else {
            stack.extend(tree.children(id).iter().rev());
        }
    }
    out.sort_unstable();
    StoppingTime::from_sorted_unchecked(tree.clone(), out)
}

/// How the value deciding "stop at `n`" is read from an adapted sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lookahead {
    /// `inf{n : lambda_n > t}` with `lambda_n` read at the level-`n` atom.
    Current,
    /// `inf{n : lambda_{n+1} > t}` with `lambda_{n+1}` predictable, read on the
    /// children of the level-`n` atom (which must agree); at the terminal level
    /// `lambda_{N+1} = lambda_N`.
    NextStep,
}

/// First level at which the sequence strictly exceeds `threshold`.
pub fn level_crossing_time<S: Scalar>(
    lambda: &AdaptedSequence<S>,
    threshold: &S,
    lookahead: Lookahead,
) -> Result<StoppingTime<S>> {
    let tree = lambda.tree();
    let tol = S::default_tolerance();
    let mut out = Vec::new();
    let mut stack = vec![NodeId::ROOT];
    while let Some(id) = stack.pop() {
        let deciding = match lookahead {
            Lookahead::Current => lambda.value(id),
            Lookahead::NextStep => {
                let children = tree.children(id);
                match children.first() {
                    None => lambda.value(id),
                    Some(first) => {
                        let v = lambda.value(*first);
                        if children[1..].iter().any(|c| !close(lambda.value(*c), v, tol)) {
                            return Err(Error::NotMeasurable { node: id.0 });
                        }
                        v
                    }
                }
            }
        };
        if deciding > threshold {
            out.push(id);
        } else {
            stack.extend(tree.children(id).iter().rev());
        }
    }
    out.sort_unstable();
    Ok(StoppingTime::from_sorted_unchecked(tree.clone(), out))
}

/// Stop-set document: canonical node indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoppingTimeDoc(pub Vec<usize>);

impl<S: Scalar> StoppingTime<S> {
    pub fn to_doc(&self) -> StoppingTimeDoc {
        StoppingTimeDoc(self.stop_set.iter().map(|n| n.0).collect())
    }

    pub fn from_doc(tree: TreeRef<S>, doc: &StoppingTimeDoc) -> Result<Self> {
        StoppingTime::new(tree, doc.0.iter().map(|&i| NodeId(i)).collect())
    }
}
