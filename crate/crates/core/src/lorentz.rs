//! Distribution functions, decreasing rearrangements and Lorentz quasi-norms
//! of simple functions on a finite probability space.
//!
//! A simple function is a pair of slices: values and the masses of the atoms
//! carrying them. For such a function the rearrangement `mu_t` is a step
//! function, so every Lorentz integral has a closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{pow, Scalar};

/// A validated Lorentz exponent pair; `q` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzIndex {
    p: f64,
    q: f64,
}

impl LorentzIndex {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let p_ok = p.is_finite() && p > 0.0;
        let q_ok = q > 0.0 && !q.is_nan();
        if p_ok && q_ok {
            Ok(LorentzIndex { p, q })
        } else {
            Err(Error::InvalidIndex { p, q })
        }
    }

    /// The diagonal index `(p, p)`, for which `L_{p,p} = L_p`.
    pub fn diagonal(p: f64) -> Result<Self> {
        Self::new(p, p)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_weak(&self) -> bool {
        self.q.is_infinite()
    }
}

/// `mu_t = v_i` on `[T_{i-1}, T_i)` and `0` for `t >= T_m` (`T_0 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRearrangement<S> {
    values: Vec<S>,
    cumulative: Vec<S>,
    step_masses: Vec<S>,
}

impl<S: Scalar> StepRearrangement<S> {
    /// Strictly decreasing positive step heights.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Strictly increasing right endpoints `T_i`.
    pub fn cumulative(&self) -> &[S] {
        &self.cumulative
    }

    /// `T_i - T_{i-1}`.
    pub fn step_masses(&self) -> &[S] {
        &self.step_masses
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Evaluates `mu_t`.
    pub fn at(&self, t: &S) -> S {
        self.cumulative
            .iter()
            .position(|c| t < c)
            .map_or_else(S::zero, |i| self.values[i].clone())
    }
}

/// `lambda_s(x) = P(|x| > s)`.
pub fn distribution<S: Scalar>(values: &[S], masses: &[S], s: &S) -> Result<S> {
    if *s < S::zero() {
        return Err(Error::NegativeThreshold(s.to_f64()));
    }
    Ok(values
        .iter()
        .zip(masses)
        .filter(|(v, _)| v.abs() > *s)
        .fold(S::zero(), |acc, (_, m)| acc + m.clone()))
}

/// Sorts the distinct nonzero `|x|` values in decreasing order with their
/// cumulative masses. Equal values merge into one step.
pub fn rearrangement<S: Scalar>(values: &[S], masses: &[S]) -> StepRearrangement<S> {
    let mut pairs: Vec<(S, S)> = values
        .iter()
        .zip(masses)
        .map(|(v, m)| (v.abs(), m.clone()))
        .filter(|(v, _)| !v.is_zero())
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("comparable values"));
    let mut out = StepRearrangement { values: Vec::new(), cumulative: Vec::new(), step_masses: Vec::new() };
    let mut total = S::zero();
    for (v, m) in pairs {
        total = total + m.clone();
        if out.values.last() == Some(&v) {
            *out.cumulative.last_mut().expect("non-empty") = total.clone();
            let last = out.step_masses.last_mut().expect("non-empty");
            *last = last.clone() + m;
        } else {
            out.values.push(v);
            out.cumulative.push(total.clone());
            out.step_masses.push(m);
        }
    }
    out
}

/// `||x||_{p,q}` from the rearrangement.
///
/// For `q < inf` this is `(sum_i v_i^q (T_i^{q/p} - T_{i-1}^{q/p}))^{1/q}`, the
/// exact value of `(q/p) int t^{q/p-1} mu_t^q dt`; for `q = inf` it is
/// `max_i T_i^{1/p} v_i`.
pub fn lorentz_norm<S: Scalar>(values: &[S], masses: &[S], idx: LorentzIndex) -> f64 {
    rearranged_norm(&rearrangement(values, masses), idx)
}

pub fn rearranged_norm<S: Scalar>(r: &StepRearrangement<S>, idx: LorentzIndex) -> f64 {
    step_norm(r, idx, 1.0)
}

/// `||sqrt(y)||_{p,q}` for nonnegative `y`, without taking square roots of
/// the step heights; exact up to the final power whenever `q` is even.
pub fn lorentz_norm_of_squares<S: Scalar>(squares: &[S], masses: &[S], idx: LorentzIndex) -> f64 {
    step_norm(&rearrangement(squares, masses), idx, 0.5)
}

fn step_norm<S: Scalar>(r: &StepRearrangement<S>, idx: LorentzIndex, root: f64) -> f64 {
    let (p, q) = (idx.p(), idx.q());
    if r.is_empty() {
        return 0.0;
    }
    if idx.is_weak() {
        return r
            .values
            .iter()
            .zip(&r.cumulative)
            .map(|(v, t)| t.to_f64().powf(1.0 / p) * v.to_f64().powf(root))
            .fold(0.0, f64::max);
    }
    let ratio = q / p;
    let mut sum = S::zero();
    let mut prev = S::zero();
    for i in 0..r.len() {
        let cur = pow(&r.cumulative[i], ratio);
        let weight = if ratio == 1.0 { r.step_masses[i].clone() } else { cur.clone() - prev.clone() };
        sum = sum + pow(&r.values[i], q * root) * weight;
        prev = cur;
    }
    sum.to_f64().max(0.0).powf(1.0 / q)
}

/// The same quasi-norm through the distribution function:
/// `(q int (t lambda_t^{1/p})^q dt/t)^{1/q}`, or `sup_t t lambda_t^{1/p}` for `q = inf`.
///
/// On a step function `lambda_t = T_i` for `t` in `[v_{i+1}, v_i)`, giving
/// `sum_i T_i^{q/p} (v_i^q - v_{i+1}^q)`.
pub fn lorentz_norm_distribution_form<S: Scalar>(values: &[S], masses: &[S], idx: LorentzIndex) -> f64 {
    let r = rearrangement(values, masses);
    let (p, q) = (idx.p(), idx.q());
    if r.is_empty() {
        return 0.0;
    }
    if idx.is_weak() {
        // The supremum over t in [v_{i+1}, v_i) is approached at t -> v_i.
        return r
            .values
            .iter()
            .zip(&r.cumulative)
            .map(|(v, t)| v.to_f64() * t.to_f64().powf(1.0 / p))
            .fold(0.0, f64::max);
    }
    let mut sum = S::zero();
    for i in 0..r.len() {
        let upper = pow(&r.values[i], q);
        let lower = r.values.get(i + 1).map_or_else(S::zero, |v| pow(v, q));
        sum = sum + pow(&r.cumulative[i], q / p) * (upper - lower);
    }
    sum.to_f64().max(0.0).powf(1.0 / q)
}

/// Plain `L_p` quasi-norm `(sum |x|^p m)^{1/p}` computed on the raw atoms.
pub fn lp_norm<S: Scalar>(values: &[S], masses: &[S], p: f64) -> f64 {
    let sum = values
        .iter()
        .zip(masses)
        .fold(S::zero(), |acc, (v, m)| acc + pow(&v.abs(), p) * m.clone());
    sum.to_f64().max(0.0).powf(1.0 / p)
}

/// `||xy||_{p,q} / (||x||_{p1,q1} ||y||_{p2,q2})` with `1/p = 1/p1 + 1/p2`
/// and `1/q = 1/q1 + 1/q2`. Returns 0 when numerator and denominator vanish.
pub fn holder_lorentz_ratio<S: Scalar>(
    x: &[S],
    y: &[S],
    masses: &[S],
    left: LorentzIndex,
    right: LorentzIndex,
) -> Result<f64> {
    let p = 1.0 / (1.0 / left.p() + 1.0 / right.p());
    let q = 1.0 / (1.0 / left.q() + 1.0 / right.q());
    let prod_idx = LorentzIndex::new(p, q)?;
    let product: Vec<S> = x.iter().zip(y).map(|(a, b)| a.clone() * b.clone()).collect();
    let num = lorentz_norm(&product, masses, prod_idx);
    let den = lorentz_norm(x, masses, left) * lorentz_norm(y, masses, right);
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DivisionByZero("a factor has zero norm but the product does not".into()));
    }
    Ok(num / den)
}

/// Grids on which [`check_rearrangement_properties`] evaluates the five properties.
#[derive(Debug, Clone)]
pub struct PropertyGrid<S> {
    pub thresholds: Vec<S>,
    pub times: Vec<S>,
    pub scalars: Vec<S>,
}

impl<S: Scalar> PropertyGrid<S> {
    /// Thresholds at every `|x|`, `|y|` value and midpoints; times at every
    /// cumulative mass and midpoints; a handful of scalars.
    pub fn for_pair(x: &[S], y: &[S], masses: &[S]) -> Self {
        let mut thresholds: Vec<S> = vec![S::zero()];
        thresholds.extend(x.iter().chain(y).map(|v| v.abs()));
        let mut extra = Vec::new();
        for w in thresholds.windows(2) {
            extra.push((w[0].clone() + w[1].clone()) / S::from_i64(2));
        }
        thresholds.extend(extra);
        let mut times: Vec<S> = vec![S::zero()];
        let mut acc = S::zero();
        for m in masses {
            acc = acc + m.clone();
            times.push(acc.clone());
            times.push(acc.clone() - m.clone() / S::from_i64(2));
        }
        let scalars = vec![S::from_i64(-2), S::from_ratio(1, 3), S::zero(), S::from_i64(5)];
        PropertyGrid { thresholds, times, scalars }
    }
}

/// Which properties were checked and how many evaluations each took.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PropertyReport {
    pub domination_distribution: usize,
    pub subadditive_distribution: usize,
    pub homogeneous_rearrangement: usize,
    pub domination_rearrangement: usize,
    pub subadditive_rearrangement: usize,
}

/// Checks the five classical properties of `lambda` and `mu` on a pair of
/// simple functions over the same atoms:
///
/// 1. `|x| <= |y|` implies `lambda_s(x) <= lambda_s(y)` (checked on `min(|x|,|y|)` vs `|y|`);
/// 2. `lambda_{s1+s2}(x+y) <= lambda_{s1}(x) + lambda_{s2}(y)`;
/// 3. `mu_t(a x) = |a| mu_t(x)`;
/// 4. domination for `mu` (same pair as 1);
/// 5. `mu_{t1+t2}(x+y) <= mu_{t1}(x) + mu_{t2}(y)`.
pub fn check_rearrangement_properties<S: Scalar>(
    x: &[S],
    y: &[S],
    masses: &[S],
    grid: &PropertyGrid<S>,
) -> Result<PropertyReport> {
    let violated = |which: &str, witness: String| Error::PropertyViolated { which: which.into(), witness };
    let mut report = PropertyReport::default();
    let dominated: Vec<S> = x
        .iter()
        .zip(y)
        .map(|(a, b)| if a.abs() <= b.abs() { a.abs() } else { b.abs() })
        .collect();
    let sum: Vec<S> = x.iter().zip(y).map(|(a, b)| a.clone() + b.clone()).collect();
    let (rx, ry, rd, rs) = (
        rearrangement(x, masses),
        rearrangement(y, masses),
        rearrangement(&dominated, masses),
        rearrangement(&sum, masses),
    );
    for s in &grid.thresholds {
        if distribution(&dominated, masses, s)? > distribution(y, masses, s)? {
            return Err(violated("(1) distribution domination", format!("s = {}", s.repr())));
        }
        report.domination_distribution += 1;
        for s2 in &grid.thresholds {
            let lhs = distribution(&sum, masses, &(s.clone() + s2.clone()))?;
            let rhs = distribution(x, masses, s)? + distribution(y, masses, s2)?;
            if lhs > rhs {
                return Err(violated(
                    "(2) distribution subadditivity",
                    format!("s1 = {}, s2 = {}", s.repr(), s2.repr()),
                ));
            }
            report.subadditive_distribution += 1;
        }
    }
    for t in &grid.times {
        for a in &grid.scalars {
            let scaled: Vec<S> = x.iter().map(|v| v.clone() * a.clone()).collect();
            let lhs = rearrangement(&scaled, masses).at(t);
            let rhs = a.abs() * rx.at(t);
            if !crate::scalar::close(&lhs, &rhs, S::default_tolerance()) {
                return Err(violated("(3) homogeneity", format!("t = {}, a = {}", t.repr(), a.repr())));
            }
            report.homogeneous_rearrangement += 1;
        }
        if rd.at(t) > ry.at(t) {
            return Err(violated("(4) rearrangement domination", format!("t = {}", t.repr())));
        }
        report.domination_rearrangement += 1;
        for t2 in &grid.times {
            let lhs = rs.at(&(t.clone() + t2.clone()));
            let rhs = rx.at(t) + ry.at(t2);
            if !crate::scalar::le_tol(&lhs, &rhs, S::default_tolerance()) {
                return Err(violated(
                    "(5) rearrangement subadditivity",
                    format!("t1 = {}, t2 = {}", t.repr(), t2.repr()),
                ));
            }
            report.subadditive_rearrangement += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn idx(p: f64, q: f64) -> LorentzIndex {
        LorentzIndex::new(p, q).unwrap()
    }

    #[test]
    fn index_validation() {
        assert!(LorentzIndex::new(0.5, f64::INFINITY).is_ok());
        assert!(matches!(LorentzIndex::new(0.0, 1.0), Err(Error::InvalidIndex { .. })));
        assert!(LorentzIndex::new(f64::INFINITY, 1.0).is_err());
        assert!(LorentzIndex::new(1.0, -1.0).is_err());
        assert!(LorentzIndex::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn distribution_examples() {
        let masses = [q(1, 4), q(3, 4)];
        let ind = [q(1, 1), q(0, 1)];
        assert_eq!(distribution(&ind, &masses, &q(0, 1)).unwrap(), q(1, 4));
        assert_eq!(distribution(&ind, &masses, &q(1, 1)).unwrap(), q(0, 1));
        assert_eq!(distribution(&[q(2, 1), q(2, 1)], &masses, &q(1, 1)).unwrap(), q(1, 1));
        assert!(matches!(distribution(&ind, &masses, &q(-1, 1)), Err(Error::NegativeThreshold(_))));
    }

    #[test]
    fn rearrangement_examples() {
        let r = rearrangement(&[q(-3, 1), q(1, 1)], &[q(1, 4), q(3, 4)]);
        assert_eq!(r.values(), &[q(3, 1), q(1, 1)]);
        assert_eq!(r.cumulative(), &[q(1, 4), q(1, 1)]);
        let r = rearrangement(&[q(2, 1), q(-2, 1)], &[q(1, 2), q(1, 2)]);
        assert_eq!(r.values(), &[q(2, 1)]);
        assert_eq!(r.cumulative(), &[q(1, 1)]);
        assert!(rearrangement(&vec![q(0, 1); 3], &vec![q(1, 3); 3]).is_empty());
    }

    #[test]
    fn norm_examples() {
        let masses = [q(1, 4), q(3, 4)];
        let ind = [q(1, 1), q(0, 1)];
        for (p, qq) in [(0.5, 1.0), (1.0, 2.0), (2.0, f64::INFINITY), (3.0, 0.5)] {
            let n = lorentz_norm(&ind, &masses, idx(p, qq));
            assert!((n - 0.25f64.powf(1.0 / p)).abs() < 1e-14, "{p} {qq} {n}");
        }
        let x = [q(2, 1), q(1, 1)];
        assert_eq!(lorentz_norm(&x, &masses, idx(1.0, 1.0)), 1.25);
        for p in [0.5, 1.0, 2.0, 3.0] {
            assert_eq!(lorentz_norm(&x, &masses, idx(p, p)), lp_norm(&x, &masses, p));
        }
        let squares = [q(4, 1), q(1, 1)];
        for (p, qq) in [(1.0, 1.0), (0.5, 2.0), (2.0, f64::INFINITY)] {
            let a = lorentz_norm_of_squares(&squares, &masses, idx(p, qq));
            let b = lorentz_norm(&x, &masses, idx(p, qq));
            assert!((a - b).abs() < 1e-14, "{p} {qq}");
        }
        assert_eq!(lorentz_norm(&[q(0, 1)], &[q(1, 1)], idx(1.0, 1.0)), 0.0);
    }

    #[test]
    fn distribution_form_agrees_on_steps() {
        let masses = [q(1, 8), q(1, 4), q(1, 8), q(1, 2)];
        let x = [q(3, 1), q(-1, 2), q(2, 1), q(0, 1)];
        for (p, qq) in [(0.5, 1.0), (1.0, 2.0), (2.0, 0.5), (1.0, f64::INFINITY)] {
            let a = lorentz_norm(&x, &masses, idx(p, qq));
            let b = lorentz_norm_distribution_form(&x, &masses, idx(p, qq));
            assert!((a - b).abs() <= 1e-12 * a, "{p} {qq}: {a} vs {b}");
        }
    }

    #[test]
    fn holder_ratio_examples() {
        let masses = [q(1, 4), q(3, 4)];
        let ind = [q(1, 1), q(0, 1)];
        let r = holder_lorentz_ratio(&ind, &ind, &masses, idx(2.0, 2.0), idx(2.0, 2.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let one = [q(1, 1), q(1, 1)];
        let r = holder_lorentz_ratio(&one, &one, &masses, idx(1.0, 2.0), idx(3.0, 4.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let other = [q(0, 1), q(1, 1)];
        assert_eq!(holder_lorentz_ratio(&ind, &other, &masses, idx(1.0, 1.0), idx(1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn property_examples() {
        let masses = [q(1, 2), q(1, 2)];
        let ind = [q(1, 1), q(0, 1)];
        let grid = PropertyGrid::for_pair(&ind, &ind, &masses);
        let report = check_rearrangement_properties(&ind, &ind, &masses, &grid).unwrap();
        assert!(report.subadditive_distribution > 0);
        // lambda_0(x + x) = 1/2 <= lambda_0(x) + lambda_0(x) = 1
        let sum = [q(2, 1), q(0, 1)];
        assert!(distribution(&sum, &masses, &q(0, 1)).unwrap() <= q(1, 1));
        let scaled = [q(-2, 1), q(0, 1)];
        assert_eq!(rearrangement(&scaled, &masses).at(&q(1, 4)), q(2, 1));
    }
}
