//! Serialized martingale instances.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filtration::{build_tree_with_tolerance, TreeDoc, TreeRef};
use crate::process::Martingale;
use crate::scalar::{NumberText, Scalar};

/// `{"tree": {...}, "terminal": ["1", "-1", ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDoc {
    pub tree: TreeDoc,
    pub terminal: Vec<NumberText>,
}

impl MartingaleDoc {
    pub fn from_martingale<S: Scalar>(f: &Martingale<S>) -> Self {
        MartingaleDoc { tree: f.tree().to_doc(), terminal: f.terminal().iter().map(NumberText::from_scalar).collect() }
    }

    pub fn load<S: Scalar>(&self) -> Result<Martingale<S>> {
        self.load_with_tolerance(S::default_tolerance())
    }

    /// Builds the tree and the martingale, checking masses and centering with `tol`.
    pub fn load_with_tolerance<S: Scalar>(&self, tol: f64) -> Result<Martingale<S>> {
        let tree: TreeRef<S> = Arc::new(build_tree_with_tolerance(&self.tree, tol)?);
        let values = self.terminal.iter().map(NumberText::parse::<S>).collect::<Result<Vec<_>>>()?;
        Martingale::from_terminal_with_tolerance(tree, &values, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generate::{generate, InstanceSpec, TreeKind};
    use crate::scalar::Rational;

    #[test]
    fn round_trip() {
        let spec = InstanceSpec { tree: TreeKind::Random, seed: 11, ..InstanceSpec::default() };
        let (_, f) = generate::<Rational>(&spec).unwrap();
        let doc = MartingaleDoc::from_martingale(&f);
        let json = serde_json::to_string(&doc).unwrap();
        let back: Martingale<Rational> = serde_json::from_str::<MartingaleDoc>(&json).unwrap().load().unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(serde_json::to_string(&MartingaleDoc::from_martingale(&back)).unwrap(), json);
    }

    #[test]
    fn accepts_plain_numbers() {
        let json = r#"{"tree": {"levels": 1, "root": {"mass": 1, "children": [{"mass": 0.5}, {"mass": "1/2"}]}},
                       "terminal": [1, "-1"]}"#;
        let f: Martingale<Rational> = serde_json::from_str::<MartingaleDoc>(json).unwrap().load().unwrap();
        assert_eq!(f.terminal(), vec![Rational::from_i64(1), Rational::from_i64(-1)]);
    }
}
