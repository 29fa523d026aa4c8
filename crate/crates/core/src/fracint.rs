//! The fractional integral `(I_alpha f)_n = sum_{k=1}^n b_{k-1}^alpha d_k f`,
//! where `b_k` is the mass of the level-`k` atom.

use serde::Serialize;

use crate::atomic::{AtomCategory, TriAtom};
use crate::error::{Error, Result};
use crate::filtration::{FiltrationTree, NodeId, TreeRef};
use crate::hardy::{h_norm, NormKind};
use crate::lorentz::LorentzIndex;
use crate::process::{maximal, AdaptedSequence, Martingale};
use crate::scalar::{pow, Scalar};

/// `b_k = P(B)` on the level-`k` atom `B`.
pub fn b_process<S: Scalar>(tree: &TreeRef<S>) -> AdaptedSequence<S> {
    let values = tree.ids().map(|id| tree.mass(id).clone()).collect();
    AdaptedSequence::new(tree.clone(), values).expect("one value per node")
}

pub fn fractional_integral<S: Scalar>(f: &Martingale<S>, alpha: f64) -> Result<Martingale<S>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::NegativeAlpha(alpha));
    }
    let tree = f.tree();
    let weights: Vec<S> = tree.ids().map(|id| pow(tree.mass(id), alpha)).collect();
    let mut values: Vec<S> = Vec::with_capacity(tree.len());
    for id in tree.ids() {
        let v = match tree.parent(id) {
            Some(p) => values[p.0].clone() + weights[p.0].clone() * (f.value(id).clone() - f.value(p).clone()),
            None => S::zero(),
        };
        values.push(v);
    }
    // Every child of a node shares the factor b_{k-1}^alpha, so the scaled
    // differences still average to zero.
    Ok(Martingale::from_parts(tree.clone(), values))
}

/// Support and size of `(I_alpha f)*` for `f* <= chi_B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    /// `(I_alpha f)*` vanishes on every leaf outside `B`.
    pub support_ok: bool,
    /// `||(I_alpha f)*||_inf / P(B)^alpha`.
    pub ratio: f64,
}

fn leaves_under<S: Scalar>(tree: &FiltrationTree<S>, b: NodeId) -> std::ops::Range<usize> {
    tree.node(b).leaves.clone()
}

pub fn support_check<S: Scalar>(f: &Martingale<S>, b: NodeId, alpha: f64) -> Result<SupportReport> {
    let tree = f.tree();
    if b.0 >= tree.len() {
        return Err(Error::PreconditionFailed(format!("node {} does not exist", b.0)));
    }
    let inside = leaves_under(tree, b);
    let star = maximal(f).terminal();
    for (i, v) in star.iter().enumerate() {
        let bound = if inside.contains(&i) { S::one() } else { S::zero() };
        if *v > bound {
            return Err(Error::PreconditionFailed(format!("f* exceeds the indicator of node {} at leaf {i}", b.0)));
        }
    }
    let image = maximal(&fractional_integral(f, alpha)?).terminal();
    let support_ok = image.iter().enumerate().all(|(i, v)| inside.contains(&i) || v.is_zero());
    let sup = image.iter().map(Scalar::to_f64).fold(0.0, f64::max);
    Ok(SupportReport { support_ok, ratio: sup / tree.mass(b).to_f64().powf(alpha) })
}

/// `||I_alpha a||_{H*_{p2,q2}}` for a maximal-type atom, with the bound
/// `||a*||_inf P(nu < inf)^{alpha + 1/p2}` obtained from
/// `|(I_alpha a)_n| <= b_nu^alpha ||a*||_inf` on `{nu < inf}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtomBound {
    pub norm: f64,
    pub chain_bound: f64,
}

pub fn atom_boundedness<S: Scalar>(atom: &TriAtom<S>, p1: f64, p2: f64, q2: f64, alpha: f64) -> Result<AtomBound> {
    let expected = 1.0 / p1 - 1.0 / p2;
    if (alpha - expected).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(Error::ExponentMismatch { alpha, expected });
    }
    if !(p1 > 0.0 && p1 <= p2 && p2.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("need 0 < p1 <= p2 < inf, got p1 = {p1}, p2 = {p2}")));
    }
    if atom.category != AtomCategory::Maximal {
        return Err(Error::PreconditionFailed("a maximal-type atom is required".into()));
    }
    let idx = LorentzIndex::new(p2, q2)?;
    let image = fractional_integral(&atom.atom, alpha)?;
    let norm = h_norm(&image, NormKind::Star, idx);
    let sup = maximal(&atom.atom).terminal().iter().map(Scalar::to_f64).fold(0.0, f64::max);
    let prob = atom.nu.prob_finite().to_f64();
    let chain_bound = if prob == 0.0 { 0.0 } else { sup * prob.powf(alpha + 1.0 / p2) };
    Ok(AtomBound { norm, chain_bound })
}

/// Exponents of a boundedness study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BoundednessParams {
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub alpha: f64,
}

impl BoundednessParams {
    /// `0 < q1 <= 1`, `q1 <= q2`, `q1 <= p2`, `0 < p1 < p2 < inf` and
    /// `alpha = 1/p1 - 1/p2`; `p1 = p2` is accepted together with `alpha = 0`.
    pub fn validate(&self) -> Result<()> {
        let BoundednessParams { p1, q1, p2, q2, alpha } = *self;
        let bad = |what: &str| Err(Error::ParameterOutOfRange(what.to_string()));
        if !(q1 > 0.0 && q1 <= 1.0) {
            return bad("q1 must lie in (0, 1]");
        }
        if !(q1 <= q2 && q1 <= p2) {
            return bad("q1 must not exceed q2 or p2");
        }
        if !(p1 > 0.0 && p1 <= p2 && p2.is_finite()) {
            return bad("need 0 < p1 < p2 < inf");
        }
        let expected = 1.0 / p1 - 1.0 / p2;
        if (alpha - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return bad("alpha must equal 1/p1 - 1/p2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessRow {
    pub instance_id: u64,
    pub regularity: f64,
    pub alpha: f64,
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub ratio: f64,
}

/// `||I_alpha f||_{H*_{p2,q2}} / ||f||_{H*_{p1,q1}}`; `None` when `f` has zero norm.
pub fn boundedness_ratio<S: Scalar>(f: &Martingale<S>, params: &BoundednessParams) -> Result<Option<f64>> {
    params.validate()?;
    let den = h_norm(f, NormKind::Star, LorentzIndex::new(params.p1, params.q1)?);
    if den == 0.0 {
        return Ok(None);
    }
    let image = fractional_integral(f, params.alpha)?;
    Ok(Some(h_norm(&image, NormKind::Star, LorentzIndex::new(params.p2, params.q2)?) / den))
}

/// One row per instance with nonzero norm.
pub fn boundedness_study<S: Scalar>(
    instances: &[(u64, Martingale<S>)],
    params: &BoundednessParams,
) -> Result<Vec<BoundednessRow>> {
    params.validate()?;
    let mut rows = Vec::new();
    for (id, f) in instances {
        if let Some(ratio) = boundedness_ratio(f, params)? {
            rows.push(BoundednessRow {
                instance_id: *id,
                regularity: f.tree().regularity_constant().to_f64(),
                alpha: params.alpha,
                p1: params.p1,
                q1: params.q1,
                p2: params.p2,
                q2: params.q2,
                ratio,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::process::StoppingTime;
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn binary(depth: usize) -> TreeRef<Rational> {
        Arc::new(FiltrationTree::uniform(2, depth).unwrap())
    }

    #[test]
    fn b_process_examples() {
        let t = binary(3);
        let b = b_process(&t);
        for id in t.ids() {
            assert_eq!(b.value(id), &crate::scalar::pow2::<Rational>(-(t.level(id) as i32)));
        }
        assert!(b.values().windows(1).all(|w| w[0] > q(0, 1)));
    }

    #[test]
    fn integral_examples() {
        let t = binary(2);
        let f = Martingale::from_terminal(t.clone(), &[q(3, 1), q(-1, 1), q(0, 1), q(-2, 1)]).unwrap();
        assert_eq!(fractional_integral(&f, 0.0).unwrap().values(), f.values());
        let i1 = fractional_integral(&f, 1.0).unwrap();
        // f_1 = (1, -1), d_2 = (2, -2, 1, -1) scaled by b_1 = 1/2.
        assert_eq!(i1.terminal(), vec![q(2, 1), q(0, 1), q(-1, 2), q(-3, 2)]);
        assert!(Martingale::from_node_values(t.clone(), i1.values().to_vec()).is_ok());
        let one = Martingale::from_terminal(binary(1), &[q(1, 1), q(-1, 1)]).unwrap();
        assert_eq!(fractional_integral(&one, 2.5).unwrap().values(), one.values());
        assert!(matches!(fractional_integral(&f, -0.5), Err(Error::NegativeAlpha(_))));
    }

    #[test]
    fn support_examples() {
        let t = binary(2);
        let z = Martingale::zero(t.clone());
        assert_eq!(support_check(&z, NodeId(1), 1.0).unwrap().ratio, 0.0);
        // f lives below node 1 with f* <= 1 there.
        let f = Martingale::from_terminal(t.clone(), &[q(1, 1), q(-1, 1), q(0, 1), q(0, 1)]).unwrap();
        let report = support_check(&f, NodeId(1), 1.0).unwrap();
        assert!(report.support_ok);
        assert!((report.ratio - 1.0).abs() < 1e-15);
        assert!(matches!(support_check(&f, NodeId(4), 1.0), Err(Error::PreconditionFailed(_))));
        let report = support_check(&f, NodeId::ROOT, 0.0).unwrap();
        assert!(report.support_ok && report.ratio <= 1.0);
    }

    #[test]
    fn atom_bound_examples() {
        let t = binary(1);
        let a = Martingale::from_terminal(t.clone(), &[q(1, 1), q(-1, 1)]).unwrap();
        let atom = TriAtom { atom: a, nu: StoppingTime::immediately(t.clone()), category: AtomCategory::Maximal, p: 0.5 };
        let b = atom_boundedness(&atom, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(b.norm, 1.0);
        assert!(b.norm <= b.chain_bound);
        assert!(matches!(atom_boundedness(&atom, 0.5, 1.0, 1.0, 0.5), Err(Error::ExponentMismatch { .. })));
        let zero = TriAtom { atom: Martingale::zero(t.clone()), nu: StoppingTime::never(t), category: AtomCategory::Maximal, p: 1.0 };
        assert_eq!(atom_boundedness(&zero, 1.0, 1.0, 1.0, 0.0).unwrap().norm, 0.0);
    }

    #[test]
    fn study_parameters() {
        let ok = BoundednessParams { p1: 0.5, q1: 0.5, p2: 1.0, q2: 1.0, alpha: 1.0 };
        ok.validate().unwrap();
        let t = binary(2);
        let f = Martingale::from_terminal(t.clone(), &[q(3, 1), q(-1, 1), q(0, 1), q(-2, 1)]).unwrap();
        let identity = BoundednessParams { p1: 1.0, q1: 1.0, p2: 1.0, q2: 1.0, alpha: 0.0 };
        let rows = boundedness_study(&[(0, f.clone()), (1, Martingale::zero(t))], &identity).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].ratio, 1.0);
        for bad in [
            BoundednessParams { q1: 2.0, ..ok },
            BoundednessParams { p1: 2.0, ..ok },
            BoundednessParams { alpha: 0.5, ..ok },
            BoundednessParams { q2: 0.25, ..ok },
        ] {
            assert!(matches!(bad.validate(), Err(Error::ParameterOutOfRange(_))));
        }
    }
}
