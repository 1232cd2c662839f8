//! Exact-symbolic expression kernel.
//!
//! Expressions are immutable trees over arbitrary-precision rationals,
//! variables (with optional lattice-site offsets and continuous-derivative
//! tags), the four arithmetic operations, integer powers and `exp`.
//! Division is an explicit node so that poles stay syntactically visible.
//! A `Seq` node holds a periodic rational sequence over a lattice axis;
//! it is how site-dependent factors such as (-1)^n enter coefficients.
//!
//! [`Expr::normalize`] puts trees into a canonical form (flattened sums and
//! products, sorted commutative operands, folded constants, combined like
//! terms) so that structural equality is decidable and idempotent.

mod calculus;
mod eval;
pub mod json;
mod poly;

pub use calculus::{LatticeCtx, LatticeRule};
pub use eval::{EvalCtx, IdentityOptions, QEvalCtx};
pub use poly::{Monomial, MultiPoly, RatFunc};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Errors produced by the expression kernel.
#[derive(Debug, Error)]
pub enum ExprError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unbound variable `{0}` during evaluation")]
    UnboundVariable(String),
    #[error("evaluation hit a pole (division by zero or near-zero)")]
    Pole,
    #[error("no lattice site bound for axis `{0}`")]
    UnboundSite(String),
    #[error("exact evaluation of a non-rational node (exp)")]
    NotRational,
    #[error("identity test inconclusive: all sample points hit singular loci")]
    Inconclusive,
    #[error("expression is not polynomial in its variables: {0}")]
    NotPolynomial(String),
    #[error("invalid expression JSON: {0}")]
    Json(String),
    #[error("cannot differentiate `{0}` with respect to a site-dependent sequence")]
    NonSmooth(String),
}

/// A scalar symbol: a name plus an optional lattice-site offset per axis and
/// an optional list of continuous-derivative tags (`u` with derivs `["t","t"]`
/// is u_tt). Offsets of zero are never stored, so structural equality of
/// symbols is well defined.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub name: String,
    pub offsets: BTreeMap<String, i64>,
    pub derivs: Vec<String>,
}

impl Symbol {
    pub fn new(name: impl Into<String>) -> Self {
        Symbol {
            name: name.into(),
            offsets: BTreeMap::new(),
            derivs: Vec::new(),
        }
    }

    /// Same symbol shifted to site `offset` on `axis`.
    pub fn at(mut self, axis: impl Into<String>, offset: i64) -> Self {
        self.set_offset(&axis.into(), offset);
        self
    }

    /// Same symbol with one more continuous derivative along `axis`.
    pub fn d(mut self, axis: impl Into<String>) -> Self {
        self.derivs.push(axis.into());
        self
    }

    pub fn offset(&self, axis: &str) -> i64 {
        self.offsets.get(axis).copied().unwrap_or(0)
    }

    pub fn set_offset(&mut self, axis: &str, offset: i64) {
        if offset == 0 {
            self.offsets.remove(axis);
        } else {
            self.offsets.insert(axis.to_string(), offset);
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (axis, k) in &self.offsets {
            if *k >= 0 {
                write!(f, "[{axis}+{k}]")?;
            } else {
                write!(f, "[{axis}{k}]")?;
            }
        }
        for d in &self.derivs {
            write!(f, "_{d}")?;
        }
        Ok(())
    }
}

/// A periodic rational sequence over a lattice axis, evaluated at the site
/// index: value = values[(site + phase) mod period]. `Seq("n", [1,-1], 0)`
/// is (-1)^n.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeqTerm {
    pub axis: String,
    pub values: Vec<BigRational>,
    pub phase: i64,
}

impl SeqTerm {
    pub fn new(axis: impl Into<String>, values: Vec<BigRational>) -> Self {
        SeqTerm {
            axis: axis.into(),
            values,
            phase: 0,
        }
    }

    pub fn value_at(&self, site: i64) -> &BigRational {
        let p = self.values.len() as i64;
        let idx = (site + self.phase).rem_euclid(p);
        &self.values[idx as usize]
    }
}

/// Immutable symbolic expression tree. Construct through the smart
/// constructors ([`Expr::add`], [`Expr::mul`], ...) or normalize after
/// building by hand; all kernel operations return normalized trees.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Rat(BigRational),
    Var(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, i64),
    Exp(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Seq(SeqTerm),
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Rat(BigRational::zero())
    }

    pub fn one() -> Expr {
        Expr::Rat(BigRational::one())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Rat(BigRational::from(BigInt::from(n)))
    }

    pub fn rational(n: i64, d: i64) -> Expr {
        Expr::Rat(rat(n, d))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(Symbol::new(name))
    }

    pub fn sym(s: Symbol) -> Expr {
        Expr::Var(s)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Rat(r) if r.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Rat(r) if r.is_one())
    }

    pub fn as_rat(&self) -> Option<&BigRational> {
        match self {
            Expr::Rat(r) => Some(r),
            _ => None,
        }
    }

    // ---- smart constructors (always return normalized results when
    // operands are normalized) ----

    pub fn add(terms: Vec<Expr>) -> Expr {
        normalize_add(terms)
    }

    pub fn add2(a: Expr, b: Expr) -> Expr {
        normalize_add(vec![a, b])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        normalize_add(vec![a, Expr::neg(b)])
    }

    pub fn mul(factors: Vec<Expr>) -> Expr {
        normalize_mul(factors)
    }

    pub fn mul2(a: Expr, b: Expr) -> Expr {
        normalize_mul(vec![a, b])
    }

    pub fn neg(e: Expr) -> Expr {
        normalize_mul(vec![Expr::int(-1), e])
    }

    pub fn pow(base: Expr, exp: i64) -> Expr {
        normalize_pow(base, exp)
    }

    pub fn exp(arg: Expr) -> Expr {
        normalize_exp(arg)
    }

    pub fn div(num: Expr, den: Expr) -> Expr {
        normalize_div(num, den)
    }

    pub fn scale(c: BigRational, e: Expr) -> Expr {
        normalize_mul(vec![Expr::Rat(c), e])
    }

    /// Recursively normalize an arbitrarily built tree. Idempotent.
    pub fn normalize(&self) -> Expr {
        match self {
            Expr::Rat(_) | Expr::Var(_) => self.clone(),
            Expr::Seq(s) => normalize_seq(s.clone()),
            Expr::Add(ts) => normalize_add(ts.iter().map(|t| t.normalize()).collect()),
            Expr::Mul(fs) => normalize_mul(fs.iter().map(|f| f.normalize()).collect()),
            Expr::Pow(b, k) => normalize_pow(b.normalize(), *k),
            Expr::Exp(a) => normalize_exp(a.normalize()),
            Expr::Div(n, d) => normalize_div(n.normalize(), d.normalize()),
        }
    }

    /// All symbols occurring in the expression.
    pub fn symbols(&self) -> Vec<Symbol> {
        let mut set = std::collections::BTreeSet::new();
        self.collect_symbols(&mut set);
        set.into_iter().collect()
    }

    fn collect_symbols(&self, set: &mut std::collections::BTreeSet<Symbol>) {
        match self {
            Expr::Rat(_) | Expr::Seq(_) => {}
            Expr::Var(s) => {
                set.insert(s.clone());
            }
            Expr::Add(ts) | Expr::Mul(ts) => {
                for t in ts {
                    t.collect_symbols(set)
                }
            }
            Expr::Pow(b, _) => b.collect_symbols(set),
            Expr::Exp(a) => a.collect_symbols(set),
            Expr::Div(n, d) => {
                n.collect_symbols(set);
                d.collect_symbols(set);
            }
        }
    }

    /// Lattice axes referenced by `Seq` nodes.
    pub fn seq_axes(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        self.collect_seq_axes(&mut set);
        set.into_iter().collect()
    }

    fn collect_seq_axes(&self, set: &mut std::collections::BTreeSet<String>) {
        match self {
            Expr::Rat(_) | Expr::Var(_) => {}
            Expr::Seq(s) => {
                set.insert(s.axis.clone());
            }
            Expr::Add(ts) | Expr::Mul(ts) => {
                for t in ts {
                    t.collect_seq_axes(set)
                }
            }
            Expr::Pow(b, _) => b.collect_seq_axes(set),
            Expr::Exp(a) => a.collect_seq_axes(set),
            Expr::Div(n, d) => {
                n.collect_seq_axes(set);
                d.collect_seq_axes(set);
            }
        }
    }

    pub fn contains(&self, sym: &Symbol) -> bool {
        match self {
            Expr::Rat(_) | Expr::Seq(_) => false,
            Expr::Var(s) => s == sym,
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().any(|t| t.contains(sym)),
            Expr::Pow(b, _) => b.contains(sym),
            Expr::Exp(a) => a.contains(sym),
            Expr::Div(n, d) => n.contains(sym) || d.contains(sym),
        }
    }

    pub fn contains_exp(&self) -> bool {
        match self {
            Expr::Rat(_) | Expr::Var(_) | Expr::Seq(_) => false,
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().any(|t| t.contains_exp()),
            Expr::Pow(b, _) => b.contains_exp(),
            Expr::Exp(_) => true,
            Expr::Div(n, d) => n.contains_exp() || d.contains_exp(),
        }
    }

    pub fn contains_div(&self) -> bool {
        match self {
            Expr::Rat(_) | Expr::Var(_) | Expr::Seq(_) => false,
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().any(|t| t.contains_div()),
            Expr::Pow(b, _) => b.contains_div(),
            Expr::Exp(a) => a.contains_div(),
            Expr::Div(_, _) => true,
        }
    }
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

/// Split a normalized term into (rational coefficient, non-constant core).
/// The core is `None` for pure constants. The coefficient of a division is
/// carried by its numerator, so peel through `Div` nodes as well.
fn coeff_core(e: Expr) -> (BigRational, Option<Expr>) {
    match e {
        Expr::Rat(r) => (r, None),
        Expr::Mul(fs) => {
            let mut coeff = BigRational::one();
            let mut rest = Vec::with_capacity(fs.len());
            for f in fs {
                if let Expr::Rat(r) = f {
                    coeff *= r;
                } else {
                    rest.push(f);
                }
            }
            let core = match rest.len() {
                0 => None,
                1 => Some(rest.pop().unwrap()),
                _ => Some(Expr::Mul(rest)),
            };
            (coeff, core)
        }
        Expr::Div(n, d) => {
            let (c, ncore) = coeff_core(*n);
            let num = ncore.unwrap_or_else(Expr::one);
            (c, Some(Expr::Div(Box::new(num), d)))
        }
        other => (BigRational::one(), Some(other)),
    }
}

fn reassemble_term(coeff: BigRational, core: Option<Expr>) -> Expr {
    match core {
        None => Expr::Rat(coeff),
        Some(Expr::Div(n, d)) => {
            // keep the coefficient inside the numerator: canonical Div form
            let num = if coeff.is_one() {
                *n
            } else if n.is_one() {
                Expr::Rat(coeff)
            } else if let Expr::Mul(fs) = *n {
                let mut v = vec![Expr::Rat(coeff)];
                v.extend(fs);
                Expr::Mul(v)
            } else {
                Expr::Mul(vec![Expr::Rat(coeff), *n])
            };
            Expr::Div(Box::new(num), d)
        }
        Some(c) => {
            if coeff.is_one() {
                c
            } else if let Expr::Mul(fs) = c {
                let mut v = vec![Expr::Rat(coeff)];
                v.extend(fs);
                Expr::Mul(v)
            } else {
                Expr::Mul(vec![Expr::Rat(coeff), c])
            }
        }
    }
}

fn normalize_add(terms: Vec<Expr>) -> Expr {
    let mut constant = BigRational::zero();
    let mut cores: BTreeMap<Expr, BigRational> = BTreeMap::new();
    let mut stack: Vec<Expr> = terms;
    stack.reverse();
    while let Some(t) = stack.pop() {
        match t {
            Expr::Add(inner) => {
                for x in inner.into_iter().rev() {
                    stack.push(x);
                }
            }
            other => {
                let (c, core) = coeff_core(other);
                match core {
                    None => constant += c,
                    Some(k) => {
                        let entry = cores.entry(k).or_insert_with(BigRational::zero);
                        *entry += c;
                    }
                }
            }
        }
    }
    let mut out: Vec<Expr> = Vec::new();
    if !constant.is_zero() {
        out.push(Expr::Rat(constant));
    }
    for (core, c) in cores {
        if !c.is_zero() {
            out.push(reassemble_term(c, Some(core)));
        }
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::Add(out),
    }
}

/// Split a normalized factor into (base, positive exponent).
fn base_exp(e: Expr) -> (Expr, i64) {
    match e {
        Expr::Pow(b, k) => (*b, k),
        other => (other, 1),
    }
}

fn normalize_mul(factors: Vec<Expr>) -> Expr {
    let mut coeff = BigRational::one();
    let mut bases: BTreeMap<Expr, i64> = BTreeMap::new();
    let mut exp_args: Vec<Expr> = Vec::new();
    let mut num_div: Vec<Expr> = Vec::new();
    let mut den_div: Vec<Expr> = Vec::new();
    let mut stack: Vec<Expr> = factors;
    stack.reverse();
    while let Some(f) = stack.pop() {
        match f {
            Expr::Mul(inner) => {
                for x in inner.into_iter().rev() {
                    stack.push(x);
                }
            }
            Expr::Rat(r) => {
                if r.is_zero() {
                    return Expr::zero();
                }
                coeff *= r;
            }
            Expr::Exp(a) => exp_args.push(*a),
            Expr::Div(n, d) => {
                num_div.push(*n);
                den_div.push(*d);
            }
            other => {
                let (b, k) = base_exp(other);
                *bases.entry(b).or_insert(0) += k;
            }
        }
    }
    if !den_div.is_empty() {
        // pull divisions up to a single top-level Div
        let mut nfs: Vec<Expr> = vec![Expr::Rat(coeff)];
        for (b, k) in bases {
            nfs.push(if k == 1 { b } else { Expr::Pow(Box::new(b), k) });
        }
        if !exp_args.is_empty() {
            nfs.push(normalize_exp(normalize_add(exp_args)));
        }
        nfs.extend(num_div);
        let num = normalize_mul(nfs);
        let den = normalize_mul(den_div);
        return normalize_div(num, den);
    }
    let mut out: Vec<Expr> = Vec::new();
    for (b, k) in bases {
        if k == 0 {
            continue;
        }
        if k < 0 {
            // negative exponents only arise from hand-built trees
            den_div.push(if k == -1 {
                b
            } else {
                Expr::Pow(Box::new(b), -k)
            });
        } else if k == 1 {
            out.push(b);
        } else {
            out.push(Expr::Pow(Box::new(b), k));
        }
    }
    if !exp_args.is_empty() {
        let merged = normalize_exp(normalize_add(exp_args));
        if !merged.is_one() {
            out.push(merged);
        }
    }
    if !den_div.is_empty() {
        let mut nfs = vec![Expr::Rat(coeff)];
        nfs.extend(out);
        return normalize_div(normalize_mul(nfs), normalize_mul(den_div));
    }
    if out.is_empty() {
        return Expr::Rat(coeff);
    }
    if coeff.is_one() && out.len() == 1 {
        return out.pop().unwrap();
    }
    let mut v = Vec::with_capacity(out.len() + 1);
    if !coeff.is_one() {
        v.push(Expr::Rat(coeff));
    }
    v.extend(out);
    if v.len() == 1 {
        v.pop().unwrap()
    } else {
        Expr::Mul(v)
    }
}

fn normalize_pow(base: Expr, k: i64) -> Expr {
    if k == 0 {
        return Expr::one();
    }
    if k == 1 {
        return base;
    }
    match base {
        Expr::Rat(r) => {
            if k > 0 {
                Expr::Rat(pow_rat(&r, k as u32))
            } else if r.is_zero() {
                // 0^negative: keep syntactic; evaluation reports the pole
                Expr::Div(Box::new(Expr::one()), Box::new(Expr::zero()))
            } else {
                Expr::Rat(pow_rat(&r.recip(), (-k) as u32))
            }
        }
        Expr::Mul(fs) => normalize_mul(fs.into_iter().map(|f| normalize_pow(f, k)).collect()),
        Expr::Pow(b, k2) => normalize_pow(*b, k * k2),
        Expr::Exp(a) => normalize_exp(normalize_mul(vec![Expr::int(k), *a])),
        Expr::Div(n, d) => {
            if k > 0 {
                normalize_div(normalize_pow(*n, k), normalize_pow(*d, k))
            } else {
                normalize_div(normalize_pow(*d, -k), normalize_pow(*n, -k))
            }
        }
        other => {
            if k > 0 {
                Expr::Pow(Box::new(other), k)
            } else if k == -1 {
                normalize_div(Expr::one(), other)
            } else {
                normalize_div(Expr::one(), Expr::Pow(Box::new(other), -k))
            }
        }
    }
}

fn pow_rat(r: &BigRational, k: u32) -> BigRational {
    let mut out = BigRational::one();
    for _ in 0..k {
        out *= r.clone();
    }
    out
}

fn normalize_exp(arg: Expr) -> Expr {
    if arg.is_zero() {
        Expr::one()
    } else {
        Expr::Exp(Box::new(arg))
    }
}

fn normalize_div(num: Expr, den: Expr) -> Expr {
    if den.is_one() {
        return num;
    }
    // flatten nested divisions
    if let Expr::Div(n2, d2) = num {
        return normalize_div(*n2, normalize_mul(vec![den, *d2]));
    }
    if let Expr::Div(dn, dd) = den {
        return normalize_div(normalize_mul(vec![num, *dd]), *dn);
    }
    if let Expr::Rat(c) = &den {
        if !c.is_zero() {
            return normalize_mul(vec![Expr::Rat(c.recip()), num]);
        }
        return Expr::Div(Box::new(num), Box::new(den));
    }
    if num.is_zero() {
        return Expr::zero();
    }
    // pull the rational coefficient out of the denominator (and keep the
    // numerator coefficient inside, so Div(num, den) has a monic-ish den)
    let (dc, dcore) = coeff_core(den);
    let den = match dcore {
        None => unreachable!("constant denominator handled above"),
        Some(core) => core,
    };
    let num = if dc.is_one() {
        num
    } else {
        normalize_mul(vec![Expr::Rat(dc.recip()), num])
    };
    if num == den {
        return Expr::one();
    }
    Expr::Div(Box::new(num), Box::new(den))
}

fn normalize_seq(s: SeqTerm) -> Expr {
    if s.values.is_empty() {
        return Expr::zero();
    }
    if s.values.iter().all(|v| v == &s.values[0]) {
        return Expr::Rat(s.values[0].clone());
    }
    let p = s.values.len() as i64;
    Expr::Seq(SeqTerm {
        axis: s.axis,
        values: s.values,
        phase: s.phase.rem_euclid(p),
    })
}

// ---------------------------------------------------------------------------
// display
// ---------------------------------------------------------------------------

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Rat(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Expr::Var(s) => write!(f, "{s}"),
            Expr::Add(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    if i == 0 {
                        write!(f, "{t}")?;
                    } else {
                        let (c, core) = coeff_core(t.clone());
                        if c.is_negative() {
                            write!(f, " - {}", reassemble_term(-c, core))?;
                        } else {
                            write!(f, " + {t}")?;
                        }
                    }
                }
                Ok(())
            }
            Expr::Mul(fs) => {
                for (i, x) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    match x {
                        Expr::Add(_) | Expr::Div(_, _) => write!(f, "({x})")?,
                        Expr::Rat(r) if !r.is_integer() || r.is_negative() => write!(f, "({x})")?,
                        _ => write!(f, "{x}")?,
                    }
                }
                Ok(())
            }
            Expr::Pow(b, k) => match **b {
                Expr::Var(_) | Expr::Rat(_) => write!(f, "{b}^{k}"),
                _ => write!(f, "({b})^{k}"),
            },
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Div(n, d) => {
                match **n {
                    Expr::Add(_) | Expr::Mul(_) | Expr::Div(_, _) => write!(f, "({n})")?,
                    _ => write!(f, "{n}")?,
                }
                write!(f, "/")?;
                match **d {
                    Expr::Var(_) | Expr::Seq(_) => write!(f, "{d}"),
                    Expr::Rat(ref r) if r.is_integer() && !r.is_negative() => write!(f, "{d}"),
                    _ => write!(f, "({d})"),
                }
            }
            Expr::Seq(s) => {
                write!(f, "seq[{}", s.axis)?;
                if s.phase != 0 {
                    write!(f, "+{}", s.phase)?;
                }
                write!(f, "](")?;
                for (i, v) in s.values.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    if v.is_integer() {
                        write!(f, "{}", v.numer())?;
                    } else {
                        write!(f, "{}/{}", v.numer(), v.denom())?;
                    }
                }
                write!(f, ")")
            }
        }
    }
}
