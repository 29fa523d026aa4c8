//! Seeded random instances: a filtration tree and a centered martingale on it.

use std::sync::Arc;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{build_tree, FiltrationTree, NodeDoc, TreeDoc, TreeRef};
use crate::process::{center, Martingale};
use crate::scalar::{NumberText, Rational, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeKind {
    Dyadic,
    Ternary,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueDistribution {
    /// Half-integers in `[-3, 3]`.
    Uniform,
    /// Standard normal samples rounded to multiples of `1/4`.
    GaussianDiscretized,
    /// Mostly zero, otherwise `+c` or `-c`.
    SparseSign,
}

/// Everything needed to regenerate one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSpec {
    pub tree: TreeKind,
    pub depth: usize,
    /// Children per node for random trees, inclusive bounds.
    pub min_branching: usize,
    pub max_branching: usize,
    /// Lower bound on child/parent mass for random trees, so `R <= 1/min_ratio`.
    pub min_ratio: f64,
    pub distribution: ValueDistribution,
    pub seed: u64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            tree: TreeKind::Dyadic,
            depth: 3,
            min_branching: 2,
            max_branching: 3,
            min_ratio: 0.1,
            distribution: ValueDistribution::Uniform,
            seed: 0,
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.tree == TreeKind::Random {
            if self.min_branching == 0 || self.min_branching > self.max_branching {
                return bad(format!(
                    "branching bounds {}..={} are not a nonempty range of positive counts",
                    self.min_branching, self.max_branching
                ));
            }
            if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
                return bad(format!("min_ratio {} must lie in (0, 1]", self.min_ratio));
            }
            if self.min_ratio * self.max_branching as f64 > 1.0 + 1e-12 {
                return bad(format!(
                    "min_ratio {} is infeasible with {} children",
                    self.min_ratio, self.max_branching
                ));
            }
        }
        Ok(())
    }

    /// The same spec with another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        InstanceSpec { seed, ..self.clone() }
    }
}

/// The tree and martingale described by `spec`, in the arithmetic mode `S`.
///
/// Instances are generated in exact arithmetic and converted, so both modes
/// see the same numbers up to rounding.
pub fn generate<S: Scalar>(spec: &InstanceSpec) -> Result<(TreeRef<S>, Martingale<S>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tree = generate_tree(spec, &mut rng)?;
    let values = generate_values(&tree, spec.distribution, &mut rng)?;
    convert_instance(&tree, &values)
}

/// A second martingale on the tree of `spec`, drawn from an independent stream.
pub fn generate_companion<S: Scalar>(spec: &InstanceSpec, tree: &TreeRef<S>) -> Result<Martingale<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let exact: FiltrationTree<Rational> = tree.convert();
    let values = generate_values(&exact, spec.distribution, &mut rng)?;
    let converted: Vec<S> = values.iter().map(convert_scalar).collect();
    let centered = center(tree, &converted)?;
    Martingale::from_terminal(tree.clone(), &centered)
}

fn convert_scalar<S: Scalar>(x: &Rational) -> S {
    S::parse_text(&x.repr()).unwrap_or_else(|_| S::from_f64(x.to_f64()))
}

fn convert_instance<S: Scalar>(tree: &FiltrationTree<Rational>, values: &[Rational]) -> Result<(TreeRef<S>, Martingale<S>)> {
    let converted: TreeRef<S> = Arc::new(tree.convert());
    let leaf_values: Vec<S> = values.iter().map(convert_scalar).collect();
    let centered = center(&converted, &leaf_values)?;
    let f = Martingale::from_terminal(converted.clone(), &centered)?;
    Ok((converted, f))
}

pub fn generate_tree(spec: &InstanceSpec, rng: &mut ChaCha8Rng) -> Result<FiltrationTree<Rational>> {
    spec.validate()?;
    match spec.tree {
        TreeKind::Dyadic => FiltrationTree::uniform(2, spec.depth),
        TreeKind::Ternary => FiltrationTree::uniform(3, spec.depth),
        TreeKind::Random => {
            // Child fractions are floor + (1 - b * floor) * u_i / sum(u) with small
            // integer u_i; the floor is min_ratio rounded up to a multiple of 1/20.
            let floor = Rational::from_ratio((spec.min_ratio * 20.0 - 1e-9).ceil().max(1.0) as i64, 20);
            let root = random_node(spec, rng, &floor, Rational::one(), 0);
            build_tree(&TreeDoc { levels: spec.depth, root })
        }
    }
}

fn random_node(spec: &InstanceSpec, rng: &mut ChaCha8Rng, floor: &Rational, mass: Rational, level: usize) -> NodeDoc {
    let text = NumberText::from_scalar(&mass);
    if level == spec.depth {
        return NodeDoc::leaf(text);
    }
    let b = rng.random_range(spec.min_branching..=spec.max_branching);
    let floor = if floor.clone() * Rational::from_i64(b as i64) > Rational::one() {
        Rational::from_ratio(1, b as i64)
    } else {
        floor.clone()
    };
    let weights: Vec<i64> = (0..b).map(|_| rng.random_range(1..=4)).collect();
    let total: i64 = weights.iter().sum();
    let free = Rational::one() - floor.clone() * Rational::from_i64(b as i64);
    let children = weights
        .iter()
        .map(|w| {
            let frac = floor.clone() + free.clone() * Rational::from_ratio(*w, total);
            random_node(spec, rng, &floor, mass.clone() * frac, level + 1)
        })
        .collect();
    NodeDoc { mass: text, children }
}

/// Terminal values with mean exactly zero.
pub fn generate_values(
    tree: &FiltrationTree<Rational>,
    distribution: ValueDistribution,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Rational>> {
    let n = tree.leaf_count();
    let raw: Vec<Rational> = match distribution {
        ValueDistribution::Uniform => (0..n).map(|_| Rational::from_ratio(rng.random_range(-6..=6), 2)).collect(),
        ValueDistribution::GaussianDiscretized => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                Rational::from_ratio((z * 4.0).round() as i64, 4)
            })
            .collect(),
        ValueDistribution::SparseSign => sparse_sign(tree, rng),
    };
    center(tree, &raw)
}

/// Equal numbers of `+1` and `-1` leaves on equal-mass leaves; otherwise the
/// negative leaves carry `-P(plus)/P(minus)` so the mean still vanishes.
fn sparse_sign(tree: &FiltrationTree<Rational>, rng: &mut ChaCha8Rng) -> Vec<Rational> {
    let n = tree.leaf_count();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut values = vec![Rational::zero(); n];
    if n < 2 {
        return values;
    }
    let pairs = rng.random_range(1..=n / 2);
    let (plus, minus) = (&order[..pairs], &order[pairs..2 * pairs]);
    let masses = tree.leaf_masses();
    let uniform = masses.iter().all(|m| *m == masses[0]);
    let plus_mass = plus.iter().fold(Rational::zero(), |acc, i| acc + masses[*i].clone());
    let minus_mass = minus.iter().fold(Rational::zero(), |acc, i| acc + masses[*i].clone());
    let low = if uniform { -Rational::one() } else { -(plus_mass / minus_mass) };
    for i in plus {
        values[*i] = Rational::one();
    }
    for i in minus {
        values[*i] = low.clone();
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = InstanceSpec { depth: 3, seed: 7, ..InstanceSpec::default() };
        let (t1, f1) = generate::<Rational>(&spec).unwrap();
        let (t2, f2) = generate::<Rational>(&spec).unwrap();
        assert_eq!(serde_json::to_string(&t1.to_doc()).unwrap(), serde_json::to_string(&t2.to_doc()).unwrap());
        assert_eq!(f1.values(), f2.values());
        let (_, f3) = generate::<Rational>(&spec.with_seed(8)).unwrap();
        assert_ne!(f1.values(), f3.values());
    }

    #[test]
    fn random_trees_respect_the_ratio() {
        for seed in 0..20 {
            let spec = InstanceSpec {
                tree: TreeKind::Random,
                depth: 3,
                min_branching: 1,
                max_branching: 3,
                min_ratio: 0.25,
                distribution: ValueDistribution::GaussianDiscretized,
                seed,
            };
            let (t, f) = generate::<Rational>(&spec).unwrap();
            assert!(t.regularity_constant() <= Rational::from_i64(4));
            assert!(crate::process::expectation(&t, &f.terminal()).unwrap().is_zero());
        }
    }

    #[test]
    fn sparse_sign_alphabet_on_uniform_trees() {
        for seed in 0..10 {
            let spec = InstanceSpec { distribution: ValueDistribution::SparseSign, seed, ..InstanceSpec::default() };
            let (_, f) = generate::<Rational>(&spec).unwrap();
            assert!(f.terminal().iter().all(|v| v.is_zero() || *v == Rational::one() || *v == -Rational::one()));
        }
    }

    #[test]
    fn float_mode_matches_rational() {
        let spec = InstanceSpec { tree: TreeKind::Random, seed: 3, ..InstanceSpec::default() };
        let (_, exact) = generate::<Rational>(&spec).unwrap();
        let (_, float) = generate::<f64>(&spec).unwrap();
        for (a, b) in exact.values().iter().zip(float.values()) {
            assert!((a.to_f64() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(InstanceSpec { depth: 0, ..InstanceSpec::default() }.validate().is_err());
        let random = InstanceSpec { tree: TreeKind::Random, ..InstanceSpec::default() };
        assert!(InstanceSpec { min_ratio: 0.0, ..random.clone() }.validate().is_err());
        assert!(InstanceSpec { min_ratio: 0.5, ..random.clone() }.validate().is_err());
        assert!(InstanceSpec { min_branching: 4, ..random }.validate().is_err());
    }
}
