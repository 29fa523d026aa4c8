//! Finite filtrations as rooted trees of atoms.
//!
//! Level `n` of the tree is the partition generating `F_n`; every node is an
//! atom carrying its probability mass. Nodes are numbered once, depth-first
//! with children in input order, and that numbering is used by every
//! node-indexed table and every serialized document.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{max_of, NumberText, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Node<S> {
    pub level: usize,
    pub mass: S,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Positions of the leaves below this node in canonical leaf order.
    pub leaves: Range<usize>,
}

/// A validated, immutable filtration tree.
#[derive(Debug, Clone)]
pub struct FiltrationTree<S> {
    depth: usize,
    nodes: Vec<Node<S>>,
    levels: Vec<Vec<NodeId>>,
    leaf_masses: Vec<S>,
}

pub type TreeRef<S> = Arc<FiltrationTree<S>>;

/// JSON shape of a tree: `{"levels": N, "root": {"mass": "1", "children": [...]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub levels: usize,
    pub root: NodeDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub mass: NumberText,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeDoc>,
}

impl NodeDoc {
    pub fn leaf(mass: NumberText) -> Self {
        NodeDoc { mass, children: Vec::new() }
    }
}

/// Builds and validates a tree using the mode's default tolerance.
pub fn build_tree<S: Scalar>(doc: &TreeDoc) -> Result<FiltrationTree<S>> {
    build_tree_with_tolerance(doc, S::default_tolerance())
}

pub fn build_tree_with_tolerance<S: Scalar>(doc: &TreeDoc, tol: f64) -> Result<FiltrationTree<S>> {
    if doc.levels == 0 {
        return Err(Error::EmptyLevel("a tree needs at least one level below the root".into()));
    }
    let mut tree = FiltrationTree {
        depth: doc.levels,
        nodes: Vec::new(),
        levels: vec![Vec::new(); doc.levels + 1],
        leaf_masses: Vec::new(),
    };
    let root_mass: S = doc.root.mass.parse()?;
    if !mass_matches(&root_mass, &S::one(), tol) {
        return Err(Error::MassMismatch(format!("root mass is {}, expected 1", root_mass.repr())));
    }
    tree.push_node(&doc.root, None, 0, "root".to_string(), tol)?;
    Ok(tree)
}

fn mass_matches<S: Scalar>(sum: &S, parent: &S, tol: f64) -> bool {
    if tol == 0.0 {
        return sum == parent;
    }
    (sum.to_f64() - parent.to_f64()).abs() <= tol * parent.to_f64().abs()
}

impl<S: Scalar> FiltrationTree<S> {
    fn push_node(
        &mut self,
        doc: &NodeDoc,
        parent: Option<NodeId>,
        level: usize,
        path: String,
        tol: f64,
    ) -> Result<NodeId> {
        let mass: S = doc.mass.parse()?;
        if mass <= S::zero() {
            return Err(Error::NonPositiveMass { path, mass: mass.repr() });
        }
        if level < self.depth && doc.children.is_empty() {
            return Err(Error::EmptyLevel(format!(
                "node {path} at level {level} has no children but the tree has {} levels",
                self.depth
            )));
        }
        if level == self.depth && !doc.children.is_empty() {
            return Err(Error::EmptyLevel(format!(
                "node {path} at terminal level {level} has children"
            )));
        }
        let id = NodeId(self.nodes.len());
        let first_leaf = self.leaf_masses.len();
        self.nodes.push(Node {
            level,
            mass: mass.clone(),
            parent,
            children: Vec::new(),
            leaves: first_leaf..first_leaf,
        });
        self.levels[level].push(id);
        if doc.children.is_empty() {
            self.leaf_masses.push(mass.clone());
        } else {
            let mut sum = S::zero();
            for (i, child) in doc.children.iter().enumerate() {
                let child_id = self.push_node(child, Some(id), level + 1, format!("{path}.{i}"), tol)?;
                sum = sum + self.nodes[child_id.0].mass.clone();
                self.nodes[id.0].children.push(child_id);
            }
            if !mass_matches(&sum, &mass, tol) {
                return Err(Error::MassMismatch(format!(
                    "children of {path} sum to {} but the node has mass {}",
                    sum.repr(),
                    mass.repr()
                )));
            }
        }
        self.nodes[id.0].leaves = first_leaf..self.leaf_masses.len();
        Ok(id)
    }

    /// Uniform tree: every node splits into `branching` equal children.
    pub fn uniform(branching: usize, depth: usize) -> Result<Self> {
        fn spec(branching: u64, level: usize, depth: usize) -> NodeDoc {
            let den = branching.pow(level as u32);
            let mass = NumberText::Text(if den == 1 { "1".into() } else { format!("1/{den}") });
            let children =
                if level == depth { Vec::new() } else { (0..branching).map(|_| spec(branching, level + 1, depth)).collect() };
            NodeDoc { mass, children }
        }
        if branching == 0 {
            return Err(Error::EmptyLevel("branching factor must be positive".into()));
        }
        build_tree(&TreeDoc { levels: depth, root: spec(branching as u64, 0, depth) })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn mass(&self, id: NodeId) -> &S {
        &self.nodes[id.0].mass
    }

    pub fn level(&self, id: NodeId) -> usize {
        self.nodes[id.0].level
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].level == self.depth
    }

    /// Atoms of `F_n` in canonical order.
    pub fn atoms_at(&self, n: usize) -> Result<&[NodeId]> {
        self.levels
            .get(n)
            .map(Vec::as_slice)
            .ok_or(Error::LevelOutOfRange { level: n, depth: self.depth })
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.levels[self.depth]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_masses.len()
    }

    pub fn leaf_masses(&self) -> &[S] {
        &self.leaf_masses
    }

    /// Node ids in canonical (depth-first) order.
    pub fn ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.nodes.len()).map(NodeId)
    }

    /// The unique ancestor-or-self of `id` at `level` (which must not exceed `id`'s level).
    pub fn ancestor_at(&self, mut id: NodeId, level: usize) -> NodeId {
        debug_assert!(level <= self.level(id));
        while self.level(id) > level {
            id = self.parent(id).expect("non-root node has a parent");
        }
        id
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, node: NodeId) -> bool {
        let a = self.level(ancestor);
        a <= self.level(node) && self.ancestor_at(node, a) == ancestor
    }

    /// Root-to-node path, root first.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = Vec::with_capacity(self.level(id) + 1);
        let mut cur = Some(id);
        while let Some(c) = cur {
            path.push(c);
            cur = self.parent(c);
        }
        path.reverse();
        path
    }

    /// Least `R` with `f_n <= R f_{n-1}` for every nonnegative martingale:
    /// the largest parent/child mass ratio.
    pub fn regularity_constant(&self) -> S {
        self.nodes
            .iter()
            .filter_map(|n| n.parent.map(|p| self.nodes[p.0].mass.clone() / n.mass.clone()))
            .fold(S::one(), max_of)
    }

    /// `E_n` of a terminal variable, one value per atom of `F_n` in canonical order.
    pub fn conditional_expectation(&self, leaf_values: &[S], n: usize) -> Result<Vec<S>> {
        let atoms = self.atoms_at(n)?;
        let all = self.node_expectations(leaf_values)?;
        Ok(atoms.iter().map(|a| all[a.0].clone()).collect())
    }

    /// Conditional expectation on every node at once (node-indexed).
    pub fn node_expectations(&self, leaf_values: &[S]) -> Result<Vec<S>> {
        if leaf_values.len() != self.leaf_count() {
            return Err(Error::MissingLeafValue { expected: self.leaf_count(), got: leaf_values.len() });
        }
        let mut weighted: Vec<S> = vec![S::zero(); self.nodes.len()];
        for (leaf, value) in self.leaves().iter().zip(leaf_values) {
            weighted[leaf.0] = self.nodes[leaf.0].mass.clone() * value.clone();
        }
        // Children always carry larger ids than their parent.
        for id in (0..self.nodes.len()).rev() {
            if let Some(p) = self.nodes[id].parent {
                let w = weighted[id].clone();
                weighted[p.0] = weighted[p.0].clone() + w;
            }
        }
        Ok(weighted
            .into_iter()
            .zip(&self.nodes)
            .map(|(w, node)| w / node.mass.clone())
            .collect())
    }

    /// Converts the tree to another arithmetic mode without re-validating sums.
    pub fn convert<T: Scalar>(&self) -> FiltrationTree<T> {
        let conv = |s: &S| -> T {
            match T::parse_text(&s.repr()) {
                Ok(v) => v,
                Err(_) => T::from_f64(s.to_f64()),
            }
        };
        FiltrationTree {
            depth: self.depth,
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    level: n.level,
                    mass: conv(&n.mass),
                    parent: n.parent,
                    children: n.children.clone(),
                    leaves: n.leaves.clone(),
                })
                .collect(),
            levels: self.levels.clone(),
            leaf_masses: self.leaf_masses.iter().map(conv).collect(),
        }
    }

    pub fn to_doc(&self) -> TreeDoc {
        fn node_doc<S: Scalar>(tree: &FiltrationTree<S>, id: NodeId) -> NodeDoc {
            NodeDoc {
                mass: NumberText::from_scalar(tree.mass(id)),
                children: tree.children(id).iter().map(|&c| node_doc(tree, c)).collect(),
            }
        }
        TreeDoc { levels: self.depth, root: node_doc(self, NodeId::ROOT) }
    }

    /// Whether two trees have identical shape and masses.
    pub fn same_as(&self, other: &FiltrationTree<S>) -> bool {
        self.depth == other.depth
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.parent == b.parent && a.mass == b.mass)
    }
}

/// Whether two tree handles refer to the same tree (by identity or content).
pub fn same_tree<S: Scalar>(a: &TreeRef<S>, b: &TreeRef<S>) -> bool {
    Arc::ptr_eq(a, b) || a.same_as(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn text(s: &str) -> NumberText {
        NumberText::Text(s.into())
    }

    pub(crate) fn split_doc(masses: &[&str]) -> TreeDoc {
        TreeDoc {
            levels: 1,
            root: NodeDoc { mass: text("1"), children: masses.iter().map(|m| NodeDoc::leaf(text(m))).collect() },
        }
    }

    #[test]
    fn uniform_binary_depth_three_has_eight_eighths() {
        let t = FiltrationTree::<Rational>::uniform(2, 3).unwrap();
        assert_eq!(t.leaf_count(), 8);
        assert!(t.leaf_masses().iter().all(|m| *m == q(1, 8)));
        assert_eq!(t.len(), 15);
    }

    #[test]
    fn split_tree_keeps_input_order() {
        let t: FiltrationTree<Rational> = build_tree(&split_doc(&["2/3", "1/3"])).unwrap();
        assert_eq!(t.leaf_masses(), &[q(2, 3), q(1, 3)]);
        assert_eq!(t.regularity_constant(), q(3, 1));
    }

    #[test]
    fn mismatched_children_are_rejected() {
        let err = build_tree::<Rational>(&split_doc(&["0.5", "0.4"])).unwrap_err();
        assert!(matches!(err, Error::MassMismatch(_)));
        let err = build_tree::<f64>(&split_doc(&["0.5", "0.4"])).unwrap_err();
        assert!(matches!(err, Error::MassMismatch(_)));
    }

    #[test]
    fn non_positive_and_short_branches_are_rejected() {
        let err = build_tree::<Rational>(&split_doc(&["1", "0"])).unwrap_err();
        assert!(matches!(err, Error::NonPositiveMass { .. }));
        let mut doc = split_doc(&["1/2", "1/2"]);
        doc.levels = 2;
        assert!(matches!(build_tree::<Rational>(&doc).unwrap_err(), Error::EmptyLevel(_)));
    }

    #[test]
    fn float_mode_tolerates_rounding() {
        let t = build_tree::<f64>(&split_doc(&["0.1", "0.2", "0.7"])).unwrap();
        assert_eq!(t.leaf_count(), 3);
    }

    #[test]
    fn regularity_examples() {
        assert_eq!(FiltrationTree::<Rational>::uniform(2, 3).unwrap().regularity_constant(), q(2, 1));
        assert_eq!(FiltrationTree::<Rational>::uniform(3, 2).unwrap().regularity_constant(), q(3, 1));
        assert_eq!(FiltrationTree::<Rational>::uniform(1, 4).unwrap().regularity_constant(), q(1, 1));
    }

    #[test]
    fn atoms_at_levels() {
        let t = FiltrationTree::<Rational>::uniform(2, 2).unwrap();
        assert_eq!(t.atoms_at(2).unwrap().len(), 4);
        assert_eq!(t.atoms_at(0).unwrap(), &[NodeId::ROOT]);
        assert!(matches!(t.atoms_at(3).unwrap_err(), Error::LevelOutOfRange { level: 3, depth: 2 }));
    }

    #[test]
    fn conditional_expectation_examples() {
        let t = FiltrationTree::<Rational>::uniform(2, 1).unwrap();
        let vals = [q(1, 1), q(-1, 1)];
        assert_eq!(t.conditional_expectation(&vals, 0).unwrap(), vec![q(0, 1)]);
        assert_eq!(t.conditional_expectation(&vals, 1).unwrap(), vals.to_vec());

        let t = FiltrationTree::<Rational>::uniform(3, 2).unwrap();
        let c = vec![q(5, 7); 9];
        for n in 0..=2 {
            assert!(t.conditional_expectation(&c, n).unwrap().iter().all(|v| *v == q(5, 7)));
        }
        assert!(matches!(
            t.conditional_expectation(&c[..3], 0).unwrap_err(),
            Error::MissingLeafValue { expected: 9, got: 3 }
        ));
    }

    #[test]
    fn doc_round_trip_is_byte_stable() {
        let t: FiltrationTree<Rational> = build_tree(&split_doc(&["2/3", "1/3"])).unwrap();
        let a = serde_json::to_string(&t.to_doc()).unwrap();
        let t2: FiltrationTree<Rational> = build_tree(&serde_json::from_str(&a).unwrap()).unwrap();
        assert_eq!(a, serde_json::to_string(&t2.to_doc()).unwrap());
        assert!(t.same_as(&t2));
    }
}
