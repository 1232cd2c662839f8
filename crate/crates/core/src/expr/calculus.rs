//! Differentiation, substitution and lattice shifts.

use std::collections::{BTreeMap, BTreeSet};

use super::{Expr, ExprError, Symbol};

impl Expr {
    /// Partial derivative with respect to the symbol `v`. Distinct site
    /// offsets and derivative tags are distinct symbols, so d u[n+1] / d u = 0.
    pub fn differentiate(&self, v: &Symbol) -> Expr {
        match self {
            Expr::Rat(_) | Expr::Seq(_) => Expr::zero(),
            Expr::Var(s) => {
                if s == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.differentiate(v)).collect()),
            Expr::Mul(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for (i, fi) in fs.iter().enumerate() {
                    let d = fi.differentiate(v);
                    if d.is_zero() {
                        continue;
                    }
                    let mut prod: Vec<Expr> = Vec::with_capacity(fs.len());
                    for (j, fj) in fs.iter().enumerate() {
                        if i != j {
                            prod.push(fj.clone());
                        }
                    }
                    prod.push(d);
                    terms.push(Expr::mul(prod));
                }
                Expr::add(terms)
            }
            Expr::Pow(b, k) => {
                let db = b.differentiate(v);
                if db.is_zero() {
                    return Expr::zero();
                }
                Expr::mul(vec![Expr::int(*k), Expr::pow((**b).clone(), k - 1), db])
            }
            Expr::Exp(a) => {
                let da = a.differentiate(v);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::mul2(da, self.clone())
            }
            Expr::Div(n, d) => {
                let dn = n.differentiate(v);
                let dd = d.differentiate(v);
                if dd.is_zero() {
                    return Expr::div(dn, (**d).clone());
                }
                let num = Expr::sub(Expr::mul2(dn, (**d).clone()), Expr::mul2((**n).clone(), dd));
                Expr::div(num, Expr::pow((**d).clone(), 2))
            }
        }
    }

    /// Derivative that checks `v` against a set of declared variables first.
    pub fn differentiate_checked(
        &self,
        v: &Symbol,
        declared: &BTreeSet<Symbol>,
    ) -> Result<Expr, ExprError> {
        if !declared.contains(v) {
            return Err(ExprError::UnknownVariable(v.to_string()));
        }
        Ok(self.differentiate(v))
    }

    /// Simultaneous substitution of symbols by expressions, then
    /// normalization.
    pub fn substitute(&self, bindings: &BTreeMap<Symbol, Expr>) -> Expr {
        match self {
            Expr::Rat(_) | Expr::Seq(_) => self.clone(),
            Expr::Var(s) => bindings.get(s).cloned().unwrap_or_else(|| self.clone()),
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.substitute(bindings)).collect()),
            Expr::Mul(fs) => Expr::mul(fs.iter().map(|f| f.substitute(bindings)).collect()),
            Expr::Pow(b, k) => Expr::pow(b.substitute(bindings), *k),
            Expr::Exp(a) => Expr::exp(a.substitute(bindings)),
            Expr::Div(n, d) => Expr::div(n.substitute(bindings), d.substitute(bindings)),
        }
    }

    pub fn substitute1(&self, v: &Symbol, value: &Expr) -> Expr {
        let mut m = BTreeMap::new();
        m.insert(v.clone(), value.clone());
        self.substitute(&m)
    }

    /// Relabel lattice sites: every site-dependent variable has its offset on
    /// `axis` incremented by `k`, and lattice coordinates with a declared
    /// rule (x_{n+1} = x_n + h) are folded back to site zero.
    pub fn shift(&self, axis: &str, k: i64, ctx: &LatticeCtx) -> Expr {
        match self {
            Expr::Rat(_) => self.clone(),
            Expr::Var(s) => {
                if !ctx.site_vars.contains(&s.name) {
                    return self.clone();
                }
                let mut s2 = s.clone();
                s2.set_offset(axis, s.offset(axis) + k);
                ctx.fold_symbol(s2)
            }
            Expr::Seq(s) => {
                if s.axis == axis {
                    let mut s2 = s.clone();
                    s2.phase += k;
                    Expr::Seq(s2).normalize()
                } else {
                    self.clone()
                }
            }
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.shift(axis, k, ctx)).collect()),
            Expr::Mul(fs) => Expr::mul(fs.iter().map(|f| f.shift(axis, k, ctx)).collect()),
            Expr::Pow(b, e) => Expr::pow(b.shift(axis, k, ctx), *e),
            Expr::Exp(a) => Expr::exp(a.shift(axis, k, ctx)),
            Expr::Div(n, d) => Expr::div(n.shift(axis, k, ctx), d.shift(axis, k, ctx)),
        }
    }
}

/// A uniform step rule for a lattice coordinate: `var[axis+1] = var + step`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeRule {
    pub var: String,
    pub axis: String,
    pub step: Expr,
}

/// Declares which variable names live on the lattice and which coordinates
/// obey uniform step rules. Needed by [`Expr::shift`].
#[derive(Clone, Debug, Default)]
pub struct LatticeCtx {
    pub site_vars: BTreeSet<String>,
    pub rules: Vec<LatticeRule>,
}

impl LatticeCtx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_site_var(mut self, name: impl Into<String>) -> Self {
        self.site_vars.insert(name.into());
        self
    }

    pub fn with_rule(
        mut self,
        var: impl Into<String>,
        axis: impl Into<String>,
        step: Expr,
    ) -> Self {
        let var = var.into();
        self.site_vars.insert(var.clone());
        self.rules.push(LatticeRule {
            var,
            axis: axis.into(),
            step,
        });
        self
    }

    /// Rewrite a symbol whose coordinate has a rule: x at offset j becomes
    /// x + j*step. Symbols without a rule are returned as plain variables.
    pub fn fold_symbol(&self, s: Symbol) -> Expr {
        for rule in &self.rules {
            if rule.var == s.name {
                let j = s.offset(&rule.axis);
                if j != 0 {
                    let mut base = s.clone();
                    base.set_offset(&rule.axis, 0);
                    return Expr::add2(
                        Expr::Var(base),
                        Expr::mul2(Expr::int(j), rule.step.clone()),
                    );
                }
            }
        }
        Expr::Var(s)
    }

    /// Fold every ruled coordinate in an expression back to site zero.
    pub fn fold(&self, e: &Expr) -> Expr {
        match e {
            Expr::Rat(_) | Expr::Seq(_) => e.clone(),
            Expr::Var(s) => self.fold_symbol(s.clone()),
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| self.fold(t)).collect()),
            Expr::Mul(fs) => Expr::mul(fs.iter().map(|f| self.fold(f)).collect()),
            Expr::Pow(b, k) => Expr::pow(self.fold(b), *k),
            Expr::Exp(a) => Expr::exp(self.fold(a)),
            Expr::Div(n, d) => Expr::div(self.fold(n), self.fold(d)),
        }
    }
}
