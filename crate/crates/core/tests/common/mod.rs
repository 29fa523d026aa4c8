//! Independent reference computations used by the integration tests. They
//! work from the definitions (path sums, explicit antichain recursion,
//! numerical quadrature) and share no code paths with the library beyond
//! the tree and martingale containers.

#![allow(dead_code)]

use std::sync::Arc;

use mhl_core::filtration::{build_tree, FiltrationTree, NodeDoc, NodeId, TreeDoc, TreeRef};
use mhl_core::harness::generate::{generate, InstanceSpec, TreeKind, ValueDistribution};
use mhl_core::process::Martingale;
use mhl_core::scalar::{NumberText, Rational, Scalar};
use num_traits::{Signed, Zero};

pub fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

pub fn uniform<S: Scalar>(b: usize, depth: usize) -> TreeRef<S> {
    Arc::new(FiltrationTree::uniform(b, depth).unwrap())
}

/// A two-level tree whose root splits into the given fractions, each child
/// splitting again the same way.
pub fn split_tree(fractions: &[(i64, i64)], depth: usize) -> TreeRef<Rational> {
    fn node(fractions: &[(i64, i64)], mass: Rational, level: usize, depth: usize) -> NodeDoc {
        let text = NumberText::from_scalar(&mass);
        if level == depth {
            return NodeDoc::leaf(text);
        }
        let children =
            fractions.iter().map(|(n, d)| node(fractions, mass.clone() * q(*n, *d), level + 1, depth)).collect();
        NodeDoc { mass: text, children }
    }
    Arc::new(build_tree(&TreeDoc { levels: depth, root: node(fractions, q(1, 1), 0, depth) }).unwrap())
}

/// A varied instance for `seed`: tree shape, depth and value law all cycle.
pub fn varied_spec(seed: u64, max_depth: usize) -> InstanceSpec {
    let tree = [TreeKind::Dyadic, TreeKind::Ternary, TreeKind::Random][(seed % 3) as usize];
    let distribution = [ValueDistribution::Uniform, ValueDistribution::GaussianDiscretized, ValueDistribution::SparseSign]
        [((seed / 3) % 3) as usize];
    let max_depth = if tree == TreeKind::Ternary { max_depth.min(4) } else { max_depth };
    InstanceSpec {
        tree,
        depth: 1 + (seed / 9) as usize % max_depth,
        min_branching: 1,
        max_branching: 3,
        min_ratio: 0.2,
        distribution,
        seed,
    }
}

pub fn instance<S: Scalar>(spec: &InstanceSpec) -> Martingale<S> {
    generate::<S>(spec).unwrap().1
}

/// Every antichain of the tree (the stopping times), built by recursion:
/// at each node either stop there, or choose independently in every child.
/// The empty antichain (never stop) is included.
pub fn all_antichains<S: Scalar>(tree: &FiltrationTree<S>) -> Vec<Vec<NodeId>> {
    fn below<S: Scalar>(tree: &FiltrationTree<S>, id: NodeId) -> Vec<Vec<NodeId>> {
        let mut out = vec![vec![id]];
        let mut combos: Vec<Vec<NodeId>> = vec![Vec::new()];
        for c in tree.children(id) {
            let options = below(tree, *c);
            let mut next = Vec::new();
            for base in &combos {
                for opt in options.iter().chain(std::iter::once(&Vec::new())) {
                    let mut v = base.clone();
                    v.extend(opt.iter().copied());
                    next.push(v);
                }
            }
            combos = next;
        }
        // A leaf can only stop or not; its "choose in children" branch is the empty set.
        out.extend(combos.into_iter().filter(|c| !c.is_empty()));
        out
    }
    let mut all = below(tree, NodeId::ROOT);
    all.push(Vec::new());
    for a in &mut all {
        a.sort();
    }
    all
}

/// Terminal values of `g - g^nu` where `nu` stops on the atoms of `stop`.
pub fn remainder_terminal<S: Scalar>(g: &Martingale<S>, stop: &[NodeId]) -> Vec<S> {
    let tree = g.tree();
    tree.leaves()
        .iter()
        .map(|leaf| {
            let terminal = g.value(*leaf).clone();
            match stop.iter().find(|s| tree.is_ancestor_or_self(**s, *leaf)) {
                Some(s) => terminal - g.value(*s).clone(),
                None => S::zero(),
            }
        })
        .collect()
}

pub fn prob<S: Scalar>(tree: &FiltrationTree<S>, stop: &[NodeId]) -> f64 {
    stop.iter().map(|s| tree.mass(*s).to_f64()).sum()
}

pub fn lr_moment<S: Scalar>(tree: &FiltrationTree<S>, values: &[S], r: f64) -> f64 {
    tree.leaf_masses().iter().zip(values).map(|(m, v)| m.to_f64() * v.to_f64().abs().powf(r)).sum()
}

/// `sup_nu P(nu < inf)^{-1/r-alpha} ||g - g^nu||_r` by explicit enumeration.
pub fn brute_bmo_stopping<S: Scalar>(g: &Martingale<S>, r: f64, alpha: f64) -> f64 {
    let tree = g.tree();
    all_antichains(tree)
        .iter()
        .filter(|a| !a.is_empty())
        .map(|a| {
            let m = lr_moment(tree, &remainder_terminal(g, a), r);
            if m == 0.0 {
                0.0
            } else {
                m.powf(1.0 / r) * prob(tree, a).powf(-1.0 / r - alpha)
            }
        })
        .fold(0.0, f64::max)
}

/// The per-`k` choices of a sequence: `(numerator, denominator^q)` contributions.
fn slot_options<S: Scalar>(g: &Martingale<S>, r: f64, q: f64, e: f64, k: i32, times: &[Vec<NodeId>]) -> Vec<(f64, f64)> {
    let tree = g.tree();
    let mut opts: Vec<(f64, f64)> = times
        .iter()
        .map(|a| {
            let p = prob(tree, a);
            if p == 0.0 {
                return (0.0, 0.0);
            }
            let w = 2f64.powi(k);
            let n = w * p.powf(1.0 - 1.0 / r) * lr_moment(tree, &remainder_terminal(g, a), r).powf(1.0 / r);
            (n, (w * p.powf(e)).powf(q))
        })
        .collect();
    pareto(&mut opts);
    opts
}

/// Keeps the pairs not dominated by another with larger numerator and smaller cost.
fn pareto(v: &mut Vec<(f64, f64)>) {
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for x in v.iter() {
        if out.last().is_none_or(|l| x.0 > l.0) {
            out.push(*x);
        }
    }
    *v = out;
}

fn combine(slots: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut acc = vec![(0.0, 0.0)];
    for s in slots {
        let mut next = Vec::with_capacity(acc.len() * s.len());
        for a in &acc {
            for b in s {
                next.push((a.0 + b.0, a.1 + b.1));
            }
        }
        pareto(&mut next);
        acc = next;
    }
    acc
}

/// Exact maximum of the sequence ratio over all stopping sequences on
/// `window`, by meet-in-the-middle over per-slot Pareto sets. Uses the
/// exponent `e` on `P(nu_k < inf)` in the denominator.
pub fn seq_oracle<S: Scalar>(g: &Martingale<S>, r: f64, q: f64, e: f64, window: (i32, i32)) -> f64 {
    let times = all_antichains(g.tree());
    let slots: Vec<Vec<(f64, f64)>> = (window.0..=window.1).map(|k| slot_options(g, r, q, e, k, &times)).collect();
    let mid = slots.len() / 2;
    let left = combine(&slots[..mid]);
    let right = combine(&slots[mid..]);
    let mut best = 0.0f64;
    for a in &left {
        for b in &right {
            let c = a.1 + b.1;
            if c > 0.0 {
                best = best.max((a.0 + b.0) / c.powf(1.0 / q));
            }
        }
    }
    best
}

/// `||x||_{p,q} = ((q/p) int_0^inf (t^{1/p} x*(t))^q dt/t)^{1/q}` by tanh-sinh
/// quadrature on each interval where `x*` is constant; `q = inf` takes the
/// supremum of `t^{1/p} x*(t)` just left of every breakpoint.
pub fn lorentz_quadrature(values: &[f64], masses: &[f64], p: f64, q: f64) -> f64 {
    let lambda = |s: f64| -> f64 { values.iter().zip(masses).filter(|(v, _)| v.abs() > s).map(|(_, m)| m).sum() };
    // x*(t) = inf{s >= 0 : lambda(s) <= t}; the infimum is attained at 0 or a |value|.
    let star = |t: f64| -> f64 {
        let mut cands: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        cands.push(0.0);
        cands.into_iter().filter(|s| lambda(*s) <= t).fold(f64::INFINITY, f64::min)
    };
    // x* is constant between consecutive values of the distribution function.
    let mut breaks: Vec<f64> = values.iter().map(|v| lambda(v.abs())).collect();
    breaks.push(lambda(0.0));
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if q.is_infinite() {
        return breaks
            .iter()
            .filter(|b| **b > 0.0)
            .map(|b| {
                let t = b * (1.0 - 1e-13);
                t.powf(1.0 / p) * star(t)
            })
            .fold(0.0, f64::max);
    }
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let v = star(0.5 * (a + b));
        if v == 0.0 {
            continue;
        }
        total += v.powf(q) * tanh_sinh(|t| t.powf(q / p - 1.0), a, b);
    }
    (q / p * total).powf(1.0 / q)
}

/// Double-exponential quadrature; endpoint distances are computed directly so
/// algebraic singularities at `a` are resolved.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 1.0 / 64.0;
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    let n = (4.5 / h) as i64;
    for k in -n..=n {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        // Distance of the node from the nearer endpoint.
        let d = (b - a) / (1.0 + (2.0 * u.abs()).exp());
        if d <= 0.0 || !w.is_finite() {
            continue;
        }
        let x = if u < 0.0 { a + d } else { b - d };
        sum += w * f(x);
    }
    sum * half * h
}

/// Smallest value of `lambda(A)` allowed by the one-step constraint alone.
pub fn envelope_bound<S: Scalar>(tree: &FiltrationTree<S>, stat: &[S], id: NodeId) -> S {
    let children = tree.children(id);
    if children.is_empty() {
        return stat[id.0].clone();
    }
    let mut m = S::zero();
    for c in children {
        if stat[c.0] > m {
            m = stat[c.0].clone();
        }
    }
    m
}

/// Checks the envelope constraints node by node.
pub fn envelope_is_valid<S: Scalar>(tree: &FiltrationTree<S>, stat: &[S], lambda: &[S]) -> bool {
    tree.ids().all(|id| {
        let v = &lambda[id.0];
        *v >= S::zero()
            && *v >= envelope_bound(tree, stat, id)
            && tree.parent(id).is_none_or(|p| lambda[p.0] <= *v)
    })
}

/// `lambda(A) = max over ancestors-or-self B of bound(B)`, straight from the path.
pub fn minimal_envelope_oracle<S: Scalar>(tree: &FiltrationTree<S>, stat: &[S]) -> Vec<S> {
    tree.ids()
        .map(|id| {
            tree.path(id).iter().fold(S::zero(), |m, b| {
                let v = envelope_bound(tree, stat, *b);
                if v > m {
                    v
                } else {
                    m
                }
            })
        })
        .collect()
}

/// Target statistic of an envelope, in its stored scale: `S^2` for Q, `|f|` for D.
pub fn envelope_stat(f: &Martingale<Rational>, squared_variation: bool) -> Vec<Rational> {
    let tree = f.tree();
    if squared_variation {
        tree.ids()
            .map(|id| {
                let path = tree.path(id);
                path.windows(2).fold(Rational::zero(), |acc, w| {
                    let d = f.value(w[1]).clone() - f.value(w[0]).clone();
                    acc + d.clone() * d
                })
            })
            .collect()
    } else {
        f.values().iter().map(|v| v.abs()).collect()
    }
}

/// `(I_alpha f)(A) = sum over the path of P(parent)^alpha (f(child) - f(parent))`.
pub fn fracint_oracle(f: &Martingale<Rational>, weight: impl Fn(&Rational) -> Rational) -> Vec<Rational> {
    let tree = f.tree();
    tree.ids()
        .map(|id| {
            tree.path(id).windows(2).fold(Rational::zero(), |acc, w| {
                acc + weight(tree.mass(w[0])) * (f.value(w[1]).clone() - f.value(w[0]).clone())
            })
        })
        .collect()
}

/// Relative difference, with absolute comparison near zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
