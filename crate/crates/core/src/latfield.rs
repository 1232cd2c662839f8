//! Lattice vector fields, discrete prolongation, determining-equation
//! residuals, and verification that given fields close into a symmetry
//! algebra of a difference system.
//!
//! A vector field acts pointwise at a lattice site; its prolongation is the
//! sum of shifted copies over the equation's stencil. For
//! differential-difference systems the dependent variable carries
//! t-derivative tags and the prolongation extends continuously in t by the
//! standard first and second prolongation formulas. The admissible field
//! class in that case is
//!
//! ```text
//! X = xi1(t) d_t + xi2(t, x_m) d_{x_m} + phi(t, x_m, u_m) d_{u_m},
//! ```
//!
//! the shape that survives the continuum limit in the time direction (the
//! time coordinate of a differential-difference equation cannot be remapped
//! nonuniformly without breaking the fixed spacing that was sent to zero).

use num_rational::BigRational;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{Expr, ExprError, IdentityOptions, LatticeCtx, QEvalCtx, Symbol};
use crate::liealg::{qmat_solve_overdetermined, LieAlgebra};

#[derive(Debug, Error)]
pub enum LatError {
    #[error("vector field coefficient `{0}` references a shifted or derivative variable; coefficients are functions of same-site variables only")]
    NotPointCoefficient(String),
    #[error("the t-component of a field for a differential-difference system must depend on t only, got `{0}`")]
    BadTimeComponent(String),
    #[error("equation is not affine in the designated elimination variable `{0}`")]
    NotAffineInElimination(String),
    #[error("no dependent-variable occurrence found to eliminate in the residual")]
    NothingToEliminate,
    #[error("lattice equation `{0}` is not of the supported uniform-step form")]
    UnsupportedLattice(String),
    #[error("bracket of fields {0} and {1} is not in the span of the basis")]
    ClosureFailure(usize, usize),
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// A point vector field: one coefficient per independent variable plus the
/// coefficient of the dependent variable, all functions of same-site
/// variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeVectorField {
    pub xi: BTreeMap<String, Expr>,
    pub phi: Expr,
}

impl LatticeVectorField {
    pub fn new(xi: BTreeMap<String, Expr>, phi: Expr) -> Self {
        LatticeVectorField { xi, phi }
    }

    pub fn xi_of(&self, var: &str) -> Expr {
        self.xi.get(var).cloned().unwrap_or_else(Expr::zero)
    }

    /// Same-site property: no coefficient may reference shifted or
    /// derivative-tagged variables.
    pub fn validate(&self) -> Result<(), LatError> {
        for e in self.xi.values().chain(std::iter::once(&self.phi)) {
            for s in e.symbols() {
                if !s.offsets.is_empty() || !s.derivs.is_empty() {
                    return Err(LatError::NotPointCoefficient(s.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Apply the field to a same-site function: X(f) = sum xi^w df/dw + phi df/du.
    pub fn apply(&self, f: &Expr, dependent: &str) -> Expr {
        let mut terms = Vec::new();
        for (w, coeff) in &self.xi {
            let d = f.differentiate(&Symbol::new(w.clone()));
            if !d.is_zero() && !coeff.is_zero() {
                terms.push(Expr::mul2(coeff.clone(), d));
            }
        }
        let du = f.differentiate(&Symbol::new(dependent));
        if !du.is_zero() && !self.phi.is_zero() {
            terms.push(Expr::mul2(self.phi.clone(), du));
        }
        Expr::add(terms)
    }

    pub fn scale(&self, c: &BigRational) -> LatticeVectorField {
        LatticeVectorField {
            xi: self
                .xi
                .iter()
                .map(|(k, v)| (k.clone(), Expr::scale(c.clone(), v.clone())))
                .collect(),
            phi: Expr::scale(c.clone(), self.phi.clone()),
        }
    }

    pub fn add(&self, other: &LatticeVectorField) -> LatticeVectorField {
        let mut xi = self.xi.clone();
        for (k, v) in &other.xi {
            let cur = xi.entry(k.clone()).or_insert_with(Expr::zero);
            *cur = Expr::add2(cur.clone(), v.clone());
        }
        LatticeVectorField {
            xi,
            phi: Expr::add2(self.phi.clone(), other.phi.clone()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.xi.values().all(|e| e.is_zero()) && self.phi.is_zero()
    }

    pub fn substituted(&self, sym: &Symbol, value: &Expr) -> LatticeVectorField {
        LatticeVectorField {
            xi: self
                .xi
                .iter()
                .map(|(k, v)| (k.clone(), v.substitute1(sym, value)))
                .collect(),
            phi: self.phi.substitute1(sym, value),
        }
    }

    pub fn to_json(&self) -> Value {
        let xi: serde_json::Map<String, Value> = self
            .xi
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        json!({"xi": xi, "phi": self.phi.to_json()})
    }

    pub fn from_json(v: &Value) -> Result<Self, LatError> {
        let obj = v
            .as_object()
            .ok_or_else(|| LatError::Json("field must be an object".into()))?;
        let mut xi = BTreeMap::new();
        if let Some(x) = obj.get("xi") {
            let x = x
                .as_object()
                .ok_or_else(|| LatError::Json("xi must be an object".into()))?;
            for (k, e) in x {
                xi.insert(k.clone(), Expr::from_json(e)?);
            }
        }
        let phi = match obj.get("phi") {
            Some(p) => Expr::from_json(p)?,
            None => Expr::zero(),
        };
        let f = LatticeVectorField { xi, phi };
        f.validate()?;
        Ok(f)
    }
}

/// A difference (or differential-difference) system: the equation residual,
/// the lattice-defining equations, the stencil, and bookkeeping.
#[derive(Clone, Debug)]
pub struct DifferenceSystem {
    /// Delta in raw site form (shifted variables explicit).
    pub delta: Expr,
    /// Lattice equations in raw site form, each read as `expr = 0`.
    pub lattice: Vec<Expr>,
    /// axis -> (lowest offset, highest offset)
    pub stencil: BTreeMap<String, (i64, i64)>,
    pub dependent: String,
    pub independent: Vec<String>,
    pub singular: Vec<Expr>,
    /// Override for the variable eliminated on-shell; default is the highest
    /// derivative, then the highest shift, of the dependent variable.
    pub eliminate: Option<Symbol>,
}

impl DifferenceSystem {
    /// Lattice context: the dependent variable lives on every stencil axis;
    /// independent variables with an equation of the uniform-step shape
    /// w[axis+1] - w - step = 0 get fold rules.
    pub fn lattice_ctx(&self) -> Result<LatticeCtx, LatError> {
        let mut ctx = LatticeCtx::new().with_site_var(self.dependent.clone());
        for eq in &self.lattice {
            let (var, axis, step) =
                parse_step_rule(eq).ok_or_else(|| LatError::UnsupportedLattice(eq.to_string()))?;
            ctx = ctx.with_rule(var, axis, step);
        }
        Ok(ctx)
    }

    /// Does the system involve continuous t-derivatives of the dependent
    /// variable?
    pub fn has_time_derivatives(&self) -> bool {
        self.delta
            .symbols()
            .iter()
            .any(|s| s.name == self.dependent && !s.derivs.is_empty())
    }

    /// The on-shell elimination variable: highest derivative order first,
    /// then highest lattice shift.
    pub fn elimination_variable(&self) -> Result<Symbol, LatError> {
        if let Some(e) = &self.eliminate {
            return Ok(e.clone());
        }
        self.delta
            .symbols()
            .into_iter()
            .filter(|s| s.name == self.dependent)
            .max_by_key(|s| (s.derivs.len(), s.offsets.values().map(|k| *k).sum::<i64>()))
            .ok_or(LatError::NothingToEliminate)
    }

    /// Singular loci including their shifted copies across the stencil.
    pub fn singular_all_sites(&self) -> Result<Vec<Expr>, LatError> {
        let ctx = self.lattice_ctx()?;
        let mut out = Vec::new();
        for g in &self.singular {
            for (axis, (lo, hi)) in &self.stencil {
                for j in *lo..=*hi {
                    let s = g.shift(axis, j, &ctx);
                    if !out.contains(&s) {
                        out.push(s);
                    }
                }
            }
            if self.stencil.is_empty() && !out.contains(g) {
                out.push(g.clone());
            }
        }
        Ok(out)
    }

    /// Substitute a symbol (typically the lattice spacing h) throughout the
    /// system. The spacing in the lattice rule and in any coefficients must
    /// agree, so instantiation is all-or-nothing.
    pub fn substituted(&self, sym: &Symbol, value: &Expr) -> DifferenceSystem {
        DifferenceSystem {
            delta: self.delta.substitute1(sym, value),
            lattice: self
                .lattice
                .iter()
                .map(|e| e.substitute1(sym, value))
                .collect(),
            stencil: self.stencil.clone(),
            dependent: self.dependent.clone(),
            independent: self.independent.clone(),
            singular: self
                .singular
                .iter()
                .map(|e| e.substitute1(sym, value))
                .collect(),
            eliminate: self.eliminate.clone(),
        }
    }

    pub fn to_json(&self) -> Value {
        let stencil: serde_json::Map<String, Value> = self
            .stencil
            .iter()
            .map(|(k, (lo, hi))| (k.clone(), json!([lo, hi])))
            .collect();
        json!({
            "delta": self.delta.to_json(),
            "lattice": self.lattice.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
            "stencil": stencil,
            "singular": self.singular.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
            "dependent": self.dependent,
            "independent": self.independent,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, LatError> {
        let obj = v
            .as_object()
            .ok_or_else(|| LatError::Json("system must be an object".into()))?;
        let delta = Expr::from_json(
            obj.get("delta")
                .ok_or_else(|| LatError::Json("missing delta".into()))?,
        )?;
        let mut lattice = Vec::new();
        if let Some(l) = obj.get("lattice") {
            for e in l
                .as_array()
                .ok_or_else(|| LatError::Json("lattice must be an array".into()))?
            {
                lattice.push(Expr::from_json(e)?);
            }
        }
        let mut stencil = BTreeMap::new();
        if let Some(st) = obj.get("stencil") {
            for (axis, range) in st
                .as_object()
                .ok_or_else(|| LatError::Json("stencil must be an object".into()))?
            {
                let r = range
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| LatError::Json("stencil ranges are [lo, hi]".into()))?;
                let lo = r[0]
                    .as_i64()
                    .ok_or_else(|| LatError::Json("stencil bounds must be integers".into()))?;
                let hi = r[1]
                    .as_i64()
                    .ok_or_else(|| LatError::Json("stencil bounds must be integers".into()))?;
                stencil.insert(axis.clone(), (lo, hi));
            }
        }
        let mut singular = Vec::new();
        if let Some(sg) = obj.get("singular") {
            for e in sg
                .as_array()
                .ok_or_else(|| LatError::Json("singular must be an array".into()))?
            {
                singular.push(Expr::from_json(e)?);
            }
        }
        let dependent = obj
            .get("dependent")
            .and_then(|d| d.as_str())
            .unwrap_or("u")
            .to_string();
        let independent: Vec<String> = match obj.get("independent") {
            Some(iv) => iv
                .as_array()
                .ok_or_else(|| LatError::Json("independent must be an array".into()))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .map(|s| s.to_string())
                        .ok_or_else(|| LatError::Json("independent names must be strings".into()))
                })
                .collect::<Result<_, _>>()?,
            None => {
                // derive: ruled lattice coordinates, plus t when derivative
                // tags appear
                let mut out = BTreeSet::new();
                for eq in &lattice {
                    if let Some((var, _, _)) = parse_step_rule(eq) {
                        out.insert(var);
                    }
                }
                for s in delta.symbols() {
                    for d in &s.derivs {
                        out.insert(d.clone());
                    }
                }
                out.into_iter().collect()
            }
        };
        Ok(DifferenceSystem {
            delta,
            lattice,
            stencil,
            dependent,
            independent,
            singular,
            eliminate: None,
        })
    }
}

/// Match `w[axis+1] - w - step = 0` (or `w[axis+1] - w = step` folded into
/// one expression) and return (w, axis, step).
fn parse_step_rule(eq: &Expr) -> Option<(String, String, Expr)> {
    let terms: Vec<Expr> = match eq {
        Expr::Add(ts) => ts.clone(),
        other => vec![other.clone()],
    };
    // find a +1-shifted variable and its unshifted negative partner
    for t in &terms {
        if let Expr::Var(s) = t {
            if s.derivs.is_empty() && s.offsets.len() == 1 {
                let (axis, k) = s.offsets.iter().next().unwrap();
                if *k == 1 {
                    let mut base = s.clone();
                    base.set_offset(axis, 0);
                    let neg_base = Expr::neg(Expr::Var(base.clone()));
                    if terms.contains(&neg_base) {
                        // step = -(remaining terms)
                        let rest: Vec<Expr> = terms
                            .iter()
                            .filter(|x| *x != t && **x != neg_base)
                            .cloned()
                            .collect();
                        let step = Expr::neg(Expr::add(rest));
                        return Some((base.name, axis.clone(), step));
                    }
                }
            }
        }
    }
    None
}

/// The prolonged field as a list of (jet coordinate, coefficient). Jet
/// coordinates are raw site variables: u at each stencil offset with its
/// derivative tags, independent variables at each offset, and t once.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedField {
    pub terms: Vec<(Symbol, Expr)>,
}

impl ProlongedField {
    pub fn coefficient(&self, s: &Symbol) -> Expr {
        self.terms
            .iter()
            .find(|(t, _)| t == s)
            .map(|(_, e)| e.clone())
            .unwrap_or_else(Expr::zero)
    }

    /// Apply to an expression in the raw jet variables.
    pub fn apply(&self, f: &Expr) -> Expr {
        let mut out = Vec::new();
        for (target, coeff) in &self.terms {
            if coeff.is_zero() {
                continue;
            }
            let d = f.differentiate(target);
            if !d.is_zero() {
                out.push(Expr::mul2(coeff.clone(), d));
            }
        }
        Expr::add(out)
    }

    pub fn add(&self, other: &ProlongedField) -> ProlongedField {
        let mut map: BTreeMap<Symbol, Expr> = BTreeMap::new();
        for (s, e) in self.terms.iter().chain(other.terms.iter()) {
            let cur = map.entry(s.clone()).or_insert_with(Expr::zero);
            *cur = Expr::add2(cur.clone(), e.clone());
        }
        ProlongedField {
            terms: map.into_iter().collect(),
        }
    }

    pub fn scale(&self, c: &BigRational) -> ProlongedField {
        ProlongedField {
            terms: self
                .terms
                .iter()
                .map(|(s, e)| (s.clone(), Expr::scale(c.clone(), e.clone())))
                .collect(),
        }
    }
}

/// All stencil offset tuples (cartesian product over axes).
fn stencil_offsets(stencil: &BTreeMap<String, (i64, i64)>) -> Vec<Vec<(String, i64)>> {
    let mut out: Vec<Vec<(String, i64)>> = vec![Vec::new()];
    for (axis, (lo, hi)) in stencil {
        let mut next = Vec::new();
        for base in &out {
            for j in *lo..=*hi {
                let mut b = base.clone();
                b.push((axis.clone(), j));
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// Discrete prolongation: the sum of shifted copies of the field over the
/// stencil, with continuous t-prolongation coefficients added for every
/// derivative order appearing in the system.
pub fn prolong(
    field: &LatticeVectorField,
    system: &DifferenceSystem,
) -> Result<ProlongedField, LatError> {
    field.validate()?;
    let ctx = system.lattice_ctx()?;
    let dep = &system.dependent;
    let has_t = system.has_time_derivatives();
    let xi_t = field.xi_of("t");
    if has_t {
        for s in xi_t.symbols() {
            if s.name != "t" {
                return Err(LatError::BadTimeComponent(xi_t.to_string()));
            }
        }
    }
    // derivative orders of the dependent variable appearing in delta
    let max_order = system
        .delta
        .symbols()
        .iter()
        .filter(|s| s.name == *dep)
        .map(|s| s.derivs.len())
        .max()
        .unwrap_or(0);

    let mut terms: Vec<(Symbol, Expr)> = Vec::new();
    // single d_t term (t is shared by all sites)
    if field.xi.contains_key("t") && !xi_t.is_zero() {
        terms.push((Symbol::new("t"), xi_t.clone()));
    }
    for offsets in stencil_offsets(&system.stencil) {
        let shift_all = |e: &Expr| -> Expr {
            let mut out = e.clone();
            for (axis, j) in &offsets {
                out = out.shift(axis, *j, &ctx);
            }
            out
        };
        // site symbol builder
        let site_sym = |name: &str, derivs: &[String]| -> Symbol {
            let mut s = Symbol::new(name);
            for (axis, j) in &offsets {
                s.set_offset(axis, *j);
            }
            s.derivs = derivs.to_vec();
            s
        };
        // independent-variable components at this site
        for w in &system.independent {
            if w == "t" {
                continue; // handled once above
            }
            let c = field.xi_of(w);
            if !c.is_zero() {
                terms.push((site_sym(w, &[]), shift_all(&c)));
            }
        }
        // dependent-variable component and its t-prolongations
        let phi_j = shift_all(&field.phi);
        terms.push((site_sym(dep, &[]), phi_j.clone()));
        if has_t && max_order > 0 {
            let dxi_dt = xi_t.differentiate(&Symbol::new("t"));
            let mut prev = phi_j;
            let mut derivs: Vec<String> = Vec::new();
            for ord in 1..=max_order {
                derivs.push("t".to_string());
                // phi^{(k)} = D_t phi^{(k-1)} - u^{(k)} D_t xi_t
                let u_k = Expr::Var(site_sym(dep, &derivs));
                let next = Expr::sub(
                    total_t_derivative(&prev, dep),
                    Expr::mul2(u_k.clone(), dxi_dt.clone()),
                );
                terms.push((site_sym(dep, &derivs), next.clone()));
                prev = next;
                let _ = ord;
            }
        }
    }
    Ok(ProlongedField { terms })
}

/// Total derivative along t: d_t f = df/dt + sum u^{(k)}_t df/du^{(k)} over
/// every occurrence of the dependent variable in f.
fn total_t_derivative(f: &Expr, dependent: &str) -> Expr {
    let mut terms = vec![f.differentiate(&Symbol::new("t"))];
    for s in f.symbols() {
        if s.name == dependent {
            let mut up = s.clone();
            up.derivs.push("t".to_string());
            let d = f.differentiate(&s);
            if !d.is_zero() {
                terms.push(Expr::mul2(Expr::Var(up), d));
            }
        }
    }
    Expr::add(terms)
}

/// Apply the prolonged field to Delta and reduce on shell: the designated
/// dependent variable is eliminated with Delta = 0 (Delta must be affine in
/// it) and lattice coordinates are folded with their step rules. The result
/// vanishes identically iff the field is a symmetry.
pub fn invariance_residual(
    field: &LatticeVectorField,
    system: &DifferenceSystem,
) -> Result<Expr, LatError> {
    let pr = prolong(field, system)?;
    let raw = pr.apply(&system.delta);
    on_shell(&raw, system)
}

/// Eliminate the designated variable using Delta = 0 and fold the lattice.
pub fn on_shell(raw: &Expr, system: &DifferenceSystem) -> Result<Expr, LatError> {
    let ctx = system.lattice_ctx()?;
    let folded = ctx.fold(raw);
    let delta_folded = ctx.fold(&system.delta);
    let elim = system.elimination_variable()?;
    // delta = A * elim + B, affine
    let a = delta_folded.differentiate(&elim);
    if a.contains(&elim) {
        return Err(LatError::NotAffineInElimination(elim.to_string()));
    }
    let b = delta_folded.substitute1(&elim, &Expr::zero());
    let value = Expr::div(Expr::neg(b), a);
    Ok(folded.substitute1(&elim, &value))
}

/// Residuals of the prolonged field applied to each lattice equation,
/// reduced on shell.
pub fn lattice_residuals(
    field: &LatticeVectorField,
    system: &DifferenceSystem,
) -> Result<Vec<Expr>, LatError> {
    let pr = prolong(field, system)?;
    system
        .lattice
        .iter()
        .map(|eq| {
            let raw = pr.apply(eq);
            on_shell(&raw, system)
        })
        .collect()
}

/// Symmetry-verification report: per-field invariance plus the structure
/// constants recovered from pairwise brackets.
#[derive(Clone, Debug)]
pub struct SymmetryReport {
    pub field_ok: Vec<bool>,
    pub algebra: Option<LieAlgebra>,
    pub failures: Vec<String>,
}

impl SymmetryReport {
    pub fn all_fields_ok(&self) -> bool {
        self.field_ok.iter().all(|b| *b)
    }
}

/// Lie bracket of two point fields, componentwise.
pub fn bracket(
    x: &LatticeVectorField,
    y: &LatticeVectorField,
    dependent: &str,
) -> LatticeVectorField {
    let mut names: BTreeSet<String> = x.xi.keys().cloned().collect();
    names.extend(y.xi.keys().cloned());
    let mut xi = BTreeMap::new();
    for w in names {
        let c = Expr::sub(
            x.apply(&y.xi_of(&w), dependent),
            y.apply(&x.xi_of(&w), dependent),
        );
        xi.insert(w, c);
    }
    let phi = Expr::sub(x.apply(&y.phi, dependent), y.apply(&x.phi, dependent));
    LatticeVectorField { xi, phi }
}

/// Verify each field is a symmetry (randomized identity testing on the
/// on-shell residuals) and recover the structure constants by exact linear
/// solving of each bracket against the basis.
pub fn verify_symmetry_algebra(
    fields: &[LatticeVectorField],
    system: &DifferenceSystem,
    opts: &IdentityOptions,
) -> Result<SymmetryReport, LatError> {
    let n = fields.len();
    let singular = system.singular_all_sites()?;
    let opts = IdentityOptions {
        singular,
        ..opts.clone()
    };
    let mut field_ok = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, f) in fields.iter().enumerate() {
        let mut ok = match invariance_residual(f, system)?.identically_zero(&opts) {
            Ok(b) => b,
            Err(ExprError::Inconclusive) => false,
            Err(e) => return Err(e.into()),
        };
        if ok {
            for r in lattice_residuals(f, system)? {
                match r.identically_zero(&opts) {
                    Ok(true) => {}
                    Ok(false) | Err(ExprError::Inconclusive) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        if !ok {
            failures.push(format!("field {} is not a symmetry", i + 1));
        }
        field_ok.push(ok);
    }
    // structure constants by exact sampling + symbolic confirmation
    let dep = &system.dependent;
    let mut coords: Vec<String> = system.independent.clone();
    coords.push(dep.clone());
    let mut c_tensor = vec![vec![vec![Expr::zero(); n]; n]; n];
    let mut closure_ok = true;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = bracket(&fields[i], &fields[j], dep);
            match express_in_basis(&z, fields, &coords, dep, &opts) {
                Some(coeffs) => {
                    for (k, c) in coeffs.iter().enumerate() {
                        c_tensor[i][j][k] = Expr::Rat(c.clone());
                        c_tensor[j][i][k] = Expr::Rat(-c.clone());
                    }
                }
                None => {
                    closure_ok = false;
                    failures.push(format!(
                        "bracket [X{}, X{}] is outside the span of the basis",
                        i + 1,
                        j + 1
                    ));
                }
            }
        }
    }
    let algebra = if closure_ok {
        Some(LieAlgebra::new(
            n,
            (1..=n).map(|i| format!("X{i}")).collect(),
            c_tensor,
        ))
    } else {
        None
    };
    Ok(SymmetryReport {
        field_ok,
        algebra,
        failures,
    })
}

/// Solve z = sum_k c_k basis_k exactly: sample enough rational points to pin
/// the coefficients, then confirm the combination symbolically.
fn express_in_basis(
    z: &LatticeVectorField,
    basis: &[LatticeVectorField],
    coords: &[String],
    dependent: &str,
    opts: &IdentityOptions,
) -> Option<Vec<BigRational>> {
    let n = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut rows: Vec<Vec<BigRational>> = Vec::new();
    let mut rhs: Vec<BigRational> = Vec::new();
    // collect all symbols and seq axes used anywhere
    let mut syms: BTreeSet<Symbol> = BTreeSet::new();
    let mut axes: BTreeSet<String> = BTreeSet::new();
    let mut collect = |f: &LatticeVectorField| {
        for e in f.xi.values().chain(std::iter::once(&f.phi)) {
            syms.extend(e.symbols());
            axes.extend(e.seq_axes());
        }
    };
    collect(z);
    for b in basis {
        collect(b);
    }
    let component = |f: &LatticeVectorField, w: &str| -> Expr {
        if w == dependent {
            f.phi.clone()
        } else {
            f.xi_of(w)
        }
    };
    for _ in 0..(2 * n + 4) {
        let mut ctx = QEvalCtx::default();
        for s in &syms {
            let k: i64 = rng.gen_range(2..=40);
            let sign: i64 = if rng.gen_bool(0.5) { 1 } else { -1 };
            ctx.vars
                .insert(s.clone(), BigRational::new((sign * k).into(), 20.into()));
        }
        for a in &axes {
            ctx.sites.insert(a.clone(), rng.gen_range(-6..=6));
        }
        for w in coords {
            let mut row = Vec::with_capacity(n);
            let mut valid = true;
            for b in basis {
                match component(b, w).eval_q(&ctx) {
                    Ok(v) => row.push(v),
                    Err(_) => {
                        valid = false;
                        break;
                    }
                }
            }
            if !valid {
                continue;
            }
            match component(z, w).eval_q(&ctx) {
                Ok(v) => {
                    rows.push(row);
                    rhs.push(v);
                }
                Err(_) => continue,
            }
        }
    }
    let coeffs = qmat_solve_overdetermined(&rows, &rhs)?;
    // symbolic confirmation of every component
    for w in coords {
        let mut terms = vec![component(z, w)];
        for (k, c) in coeffs.iter().enumerate() {
            terms.push(Expr::scale(-c.clone(), component(&basis[k], w)));
        }
        let diff = Expr::add(terms);
        if !matches!(diff.identically_zero(opts), Ok(true)) {
            return None;
        }
    }
    Some(coeffs)
}
