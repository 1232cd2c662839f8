//! Sparse multivariate (Laurent) polynomials over the rationals, used by the
//! constraint solvers to expand and match coefficients exactly. Conversion
//! from [`Expr`] fails on `exp` and `seq` nodes and on division by anything
//! that is not a monomial; [`RatFunc`] covers the general division case by
//! tracking an explicit denominator.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Expr, ExprError, Symbol};

/// A monomial: symbol -> integer exponent (negative allowed), zero exponents
/// never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Monomial(pub BTreeMap<Symbol, i32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(BTreeMap::new())
    }

    pub fn var(s: Symbol) -> Self {
        let mut m = BTreeMap::new();
        m.insert(s, 1);
        Monomial(m)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (s, e) in &other.0 {
            let v = out.entry(s.clone()).or_insert(0);
            *v += e;
            if *v == 0 {
                out.remove(s);
            }
        }
        Monomial(out)
    }

    pub fn inv(&self) -> Monomial {
        Monomial(self.0.iter().map(|(s, e)| (s.clone(), -e)).collect())
    }

    pub fn degree_of(&self, s: &Symbol) -> i32 {
        self.0.get(s).copied().unwrap_or(0)
    }

    pub fn total_degree(&self) -> i32 {
        self.0.values().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_expr(&self) -> Expr {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for (s, e) in &self.0 {
            if *e > 0 {
                num.push(Expr::pow(Expr::Var(s.clone()), *e as i64));
            } else {
                den.push(Expr::pow(Expr::Var(s.clone()), (-*e) as i64));
            }
        }
        let n = Expr::mul(num);
        if den.is_empty() {
            n
        } else {
            Expr::div(n, Expr::mul(den))
        }
    }
}

/// Sparse polynomial: monomial -> coefficient; zero coefficients never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct MultiPoly {
    pub terms: BTreeMap<Monomial, BigRational>,
}

impl MultiPoly {
    pub fn zero() -> Self {
        MultiPoly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = MultiPoly::default();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn one() -> Self {
        MultiPoly::constant(BigRational::one())
    }

    pub fn var(s: Symbol) -> Self {
        let mut p = MultiPoly::default();
        p.terms.insert(Monomial::var(s), BigRational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.terms.is_empty() {
            return Some(BigRational::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&Monomial::one()) {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let v = self
            .terms
            .entry(m.clone())
            .or_insert_with(BigRational::zero);
        *v += c;
        if v.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> MultiPoly {
        MultiPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn mul(&self, other: &MultiPoly) -> MultiPoly {
        let mut out = MultiPoly::default();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> MultiPoly {
        if c.is_zero() {
            return MultiPoly::zero();
        }
        MultiPoly {
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> MultiPoly {
        let mut out = MultiPoly::one();
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Divide by a single monomial with coefficient.
    pub fn div_monomial(&self, m: &Monomial, c: &BigRational) -> MultiPoly {
        let mi = m.inv();
        MultiPoly {
            terms: self
                .terms
                .iter()
                .map(|(mm, cc)| (mm.mul(&mi), cc / c))
                .collect(),
        }
    }

    pub fn vars(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        for m in self.terms.keys() {
            for s in m.0.keys() {
                out.insert(s.clone());
            }
        }
        out
    }

    pub fn degree_in(&self, s: &Symbol) -> i32 {
        self.terms.keys().map(|m| m.degree_of(s)).max().unwrap_or(0)
    }

    /// Split as A*x + B with A and B free of x; None when not affine in x.
    pub fn affine_in(&self, x: &Symbol) -> Option<(MultiPoly, MultiPoly)> {
        let mut a = MultiPoly::default();
        let mut b = MultiPoly::default();
        for (m, c) in &self.terms {
            match m.degree_of(x) {
                0 => b.add_term(m.clone(), c.clone()),
                1 => {
                    let mut m2 = m.clone();
                    m2.0.remove(x);
                    a.add_term(m2, c.clone());
                }
                _ => return None,
            }
        }
        if a.is_zero() {
            None
        } else {
            Some((a, b))
        }
    }

    /// Substitute x := num/den, clearing denominators: the result is the old
    /// polynomial times den^deg_x (valid for equations `p = 0` when den != 0).
    pub fn substitute_cleared(&self, x: &Symbol, num: &MultiPoly, den: &MultiPoly) -> MultiPoly {
        let d = self.degree_in(x);
        if d <= 0 {
            return self.clone();
        }
        // group by power of x
        let mut by_pow: BTreeMap<i32, MultiPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let k = m.degree_of(x);
            let mut m2 = m.clone();
            m2.0.remove(x);
            by_pow.entry(k).or_default().add_term(m2, c.clone());
        }
        let mut out = MultiPoly::default();
        for (k, coeff) in by_pow {
            debug_assert!(k >= 0, "substitution into Laurent-negative power");
            let term = coeff.mul(&num.pow(k as u32)).mul(&den.pow((d - k) as u32));
            out = out.add(&term);
        }
        out
    }

    /// The common monomial factor of all terms (positive exponents only).
    pub fn content_monomial(&self) -> Monomial {
        let mut content: Option<BTreeMap<Symbol, i32>> = None;
        for m in self.terms.keys() {
            match &mut content {
                None => {
                    content = Some(
                        m.0.iter()
                            .filter(|(_, e)| **e > 0)
                            .map(|(s, e)| (s.clone(), *e))
                            .collect(),
                    )
                }
                Some(c) => {
                    let mut next = BTreeMap::new();
                    for (s, e) in c.iter() {
                        let other = m.degree_of(s);
                        let min = (*e).min(other);
                        if min > 0 {
                            next.insert(s.clone(), min);
                        }
                    }
                    *c = next;
                }
            }
        }
        Monomial(content.unwrap_or_default())
    }

    /// Scale so the leading (largest) monomial has coefficient 1; canonical
    /// representative of the equation `p = 0`.
    pub fn monic(&self) -> MultiPoly {
        match self.terms.iter().next_back() {
            None => MultiPoly::zero(),
            Some((_, c)) => {
                let c = c.clone();
                self.scale(&c.recip())
            }
        }
    }

    pub fn eval(&self, point: &BTreeMap<Symbol, BigRational>) -> Result<BigRational, ExprError> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (s, e) in &m.0 {
                let v = point
                    .get(s)
                    .ok_or_else(|| ExprError::UnboundVariable(s.to_string()))?;
                if *e < 0 && v.is_zero() {
                    return Err(ExprError::Pole);
                }
                let base = if *e < 0 { v.recip() } else { v.clone() };
                for _ in 0..e.unsigned_abs() {
                    term *= base.clone();
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    pub fn to_expr(&self) -> Expr {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, c) in &self.terms {
            terms.push(Expr::mul2(Expr::Rat(c.clone()), m.to_expr()));
        }
        Expr::add(terms)
    }

    pub fn from_expr(e: &Expr) -> Result<MultiPoly, ExprError> {
        match e {
            Expr::Rat(r) => Ok(MultiPoly::constant(r.clone())),
            Expr::Var(s) => Ok(MultiPoly::var(s.clone())),
            Expr::Add(ts) => {
                let mut acc = MultiPoly::default();
                for t in ts {
                    acc = acc.add(&MultiPoly::from_expr(t)?);
                }
                Ok(acc)
            }
            Expr::Mul(fs) => {
                let mut acc = MultiPoly::one();
                for f in fs {
                    acc = acc.mul(&MultiPoly::from_expr(f)?);
                }
                Ok(acc)
            }
            Expr::Pow(b, k) => {
                let bp = MultiPoly::from_expr(b)?;
                if *k >= 0 {
                    Ok(bp.pow(*k as u32))
                } else if bp.terms.len() == 1 {
                    let (m, c) = bp.terms.iter().next().unwrap();
                    Ok(MultiPoly::constant(BigRational::one())
                        .div_monomial(m, c)
                        .pow((-k) as u32))
                } else {
                    Err(ExprError::NotPolynomial(e.to_string()))
                }
            }
            Expr::Div(n, d) => {
                let np = MultiPoly::from_expr(n)?;
                let dp = MultiPoly::from_expr(d)?;
                if dp.terms.len() == 1 {
                    let (m, c) = dp.terms.iter().next().unwrap();
                    Ok(np.div_monomial(m, c))
                } else {
                    Err(ExprError::NotPolynomial(e.to_string()))
                }
            }
            Expr::Exp(_) | Expr::Seq(_) => Err(ExprError::NotPolynomial(e.to_string())),
        }
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " {} ", if c.is_negative() { "-" } else { "+" })?;
            } else if c.is_negative() {
                write!(f, "-")?;
            }
            let ac = c.abs();
            if m.is_one() {
                write!(f, "{ac}")?;
            } else {
                if !ac.is_one() {
                    write!(f, "{ac}*")?;
                }
                let mut first = true;
                for (s, e) in &m.0 {
                    if !first {
                        write!(f, "*")?;
                    }
                    first = false;
                    if *e == 1 {
                        write!(f, "{s}")?;
                    } else {
                        write!(f, "{s}^{e}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// A quotient of polynomials; no gcd reduction is attempted, denominators
/// stay as products of the pivots/divisors that created them.
#[derive(Clone, Debug)]
pub struct RatFunc {
    pub num: MultiPoly,
    pub den: MultiPoly,
}

impl RatFunc {
    pub fn zero() -> Self {
        RatFunc {
            num: MultiPoly::zero(),
            den: MultiPoly::one(),
        }
    }

    pub fn one() -> Self {
        RatFunc {
            num: MultiPoly::one(),
            den: MultiPoly::one(),
        }
    }

    pub fn from_poly(p: MultiPoly) -> Self {
        RatFunc {
            num: p,
            den: MultiPoly::one(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn add(&self, other: &RatFunc) -> RatFunc {
        if self.den == other.den {
            return RatFunc {
                num: self.num.add(&other.num),
                den: self.den.clone(),
            };
        }
        RatFunc {
            num: self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
    }

    pub fn sub(&self, other: &RatFunc) -> RatFunc {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> RatFunc {
        RatFunc {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, other: &RatFunc) -> RatFunc {
        RatFunc {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
    }

    pub fn div(&self, other: &RatFunc) -> Result<RatFunc, ExprError> {
        if other.num.is_zero() {
            return Err(ExprError::Pole);
        }
        Ok(RatFunc {
            num: self.num.mul(&other.den),
            den: self.den.mul(&other.num),
        })
    }

    pub fn to_expr(&self) -> Expr {
        Expr::div(self.num.to_expr(), self.den.to_expr())
    }

    /// General conversion: unlike [`MultiPoly::from_expr`], arbitrary
    /// denominators are allowed. Fails on `exp` and `seq`.
    pub fn from_expr(e: &Expr) -> Result<RatFunc, ExprError> {
        match e {
            Expr::Rat(_) | Expr::Var(_) => Ok(RatFunc::from_poly(MultiPoly::from_expr(e)?)),
            Expr::Add(ts) => {
                let mut acc = RatFunc::zero();
                for t in ts {
                    acc = acc.add(&RatFunc::from_expr(t)?);
                }
                Ok(acc)
            }
            Expr::Mul(fs) => {
                let mut acc = RatFunc::one();
                for f in fs {
                    acc = acc.mul(&RatFunc::from_expr(f)?);
                }
                Ok(acc)
            }
            Expr::Pow(b, k) => {
                let bf = RatFunc::from_expr(b)?;
                if *k >= 0 {
                    Ok(RatFunc {
                        num: bf.num.pow(*k as u32),
                        den: bf.den.pow(*k as u32),
                    })
                } else {
                    if bf.num.is_zero() {
                        return Err(ExprError::Pole);
                    }
                    Ok(RatFunc {
                        num: bf.den.pow((-k) as u32),
                        den: bf.num.pow((-k) as u32),
                    })
                }
            }
            Expr::Div(n, d) => RatFunc::from_expr(n)?.div(&RatFunc::from_expr(d)?),
            Expr::Exp(_) | Expr::Seq(_) => Err(ExprError::NotPolynomial(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::rat;

    fn s(name: &str) -> Symbol {
        Symbol::new(name)
    }

    #[test]
    fn expand_square() {
        // (u+1)^2 - u^2 - 2u - 1 expands to zero
        let u = Expr::var("u");
        let e = Expr::add(vec![
            Expr::pow(Expr::add2(u.clone(), Expr::one()), 2),
            Expr::neg(Expr::pow(u.clone(), 2)),
            Expr::neg(Expr::mul2(Expr::int(2), u.clone())),
            Expr::int(-1),
        ]);
        assert!(MultiPoly::from_expr(&e).unwrap().is_zero());
    }

    #[test]
    fn laurent_monomial_division() {
        // (2x) / h is a Laurent polynomial
        let e = Expr::div(Expr::mul2(Expr::int(2), Expr::var("x")), Expr::var("h"));
        let p = MultiPoly::from_expr(&e).unwrap();
        assert_eq!(p.terms.len(), 1);
        let (m, c) = p.terms.iter().next().unwrap();
        assert_eq!(c, &rat(2, 1));
        assert_eq!(m.degree_of(&s("x")), 1);
        assert_eq!(m.degree_of(&s("h")), -1);
        // round trip through Expr
        let back = p.to_expr();
        assert_eq!(MultiPoly::from_expr(&back).unwrap(), p);
    }

    #[test]
    fn affine_split() {
        // b11 - b33*b44 + b34*b43 is affine in b11
        let e = Expr::add(vec![
            Expr::var("b11"),
            Expr::neg(Expr::mul2(Expr::var("b33"), Expr::var("b44"))),
            Expr::mul2(Expr::var("b34"), Expr::var("b43")),
        ]);
        let p = MultiPoly::from_expr(&e).unwrap();
        let (a, b) = p.affine_in(&s("b11")).unwrap();
        assert_eq!(a, MultiPoly::one());
        assert_eq!(b.terms.len(), 2);
        assert!(p.affine_in(&s("b33")).is_some());
        let sq = p.mul(&p);
        assert!(sq.affine_in(&s("b11")).is_none());
    }

    #[test]
    fn substitution_clears_denominators() {
        // p = x^2 y + 3; x := a/b  =>  a^2 y + 3 b^2
        let p = MultiPoly::from_expr(&Expr::add2(
            Expr::mul2(Expr::pow(Expr::var("x"), 2), Expr::var("y")),
            Expr::int(3),
        ))
        .unwrap();
        let num = MultiPoly::var(s("a"));
        let den = MultiPoly::var(s("b"));
        let q = p.substitute_cleared(&s("x"), &num, &den);
        let expect = MultiPoly::from_expr(&Expr::add2(
            Expr::mul2(Expr::pow(Expr::var("a"), 2), Expr::var("y")),
            Expr::mul2(Expr::int(3), Expr::pow(Expr::var("b"), 2)),
        ))
        .unwrap();
        assert_eq!(q, expect);
    }

    #[test]
    fn content_extraction() {
        // b34*b55 + b34 has content b34
        let p = MultiPoly::from_expr(&Expr::add2(
            Expr::mul2(Expr::var("b34"), Expr::var("b55")),
            Expr::var("b34"),
        ))
        .unwrap();
        let c = p.content_monomial();
        assert_eq!(c, Monomial::var(s("b34")));
    }

    #[test]
    fn ratfunc_clears_general_denominators() {
        // 1/(u+1) + 1/(u-1) = 2u/(u^2-1)
        let e = Expr::add2(
            Expr::div(Expr::one(), Expr::add2(Expr::var("u"), Expr::one())),
            Expr::div(Expr::one(), Expr::add2(Expr::var("u"), Expr::int(-1))),
        );
        let rf = RatFunc::from_expr(&e).unwrap();
        // cross-multiplied equality: num * (u^2-1) == 2u * den
        let u2m1 =
            MultiPoly::from_expr(&Expr::add2(Expr::pow(Expr::var("u"), 2), Expr::int(-1))).unwrap();
        let two_u = MultiPoly::from_expr(&Expr::mul2(Expr::int(2), Expr::var("u"))).unwrap();
        assert_eq!(rf.num.mul(&u2m1), two_u.mul(&rf.den));
    }
}
