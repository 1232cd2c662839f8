//! Realization of Lie-algebra automorphisms as point transformations of the
//! equation's variables, and the form-invariance check that decides which
//! realized transformations are genuine (discrete) symmetries.
//!
//! The realization equations come from requiring that the transformed basis
//! fields equal the automorphism images of the basis: for every basis index j
//! and coordinate w,
//!
//! ```text
//! sum_v tau_j^v d(w-hat)/dv = sum_i (Phi^-1)[i][j] tau_i^w(hatted)
//! ```
//!
//! under an affine ansatz for the hatted coordinates. Matching coefficients
//! of monomials gives a polynomial system solved by the shared case-split
//! engine; an inconsistent system means the automorphism has no affine
//! realization.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::autosolve::AutFamily;
use crate::expr::{Expr, ExprError, IdentityOptions, MultiPoly, QEvalCtx, RatFunc, Symbol};
use crate::latfield::{DifferenceSystem, LatError, LatticeVectorField};
use crate::liealg::matrix_exp;
use crate::polysolve::{self, Problem, SolveError};

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error("family dimension {0} does not match the number of basis fields {1}")]
    DimensionMismatch(usize, usize),
    #[error("family matrix is not symbolically invertible (no certified pivot in column {0})")]
    NotInvertible(usize),
    #[error("denominator `{0}` cannot be certified nonzero while clearing")]
    UncertifiedDenominator(String),
    #[error("transformation is not supported by the jet chain rule: {0}")]
    UnsupportedMap(String),
    #[error("transformation is singular: Jacobian vanished at every sample point")]
    SingularMap,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Lattice(#[from] LatError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("lie algebra error: {0}")]
    Lie(#[from] crate::liealg::LieError),
}

/// How a realized transformation relates to the continuous symmetry group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Unknown,
    ContinuousConnected,
    Discrete,
    NotASymmetry,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Unknown => "unknown",
            Classification::ContinuousConnected => "continuous",
            Classification::Discrete => "discrete",
            Classification::NotASymmetry => "not-a-symmetry",
        }
    }
}

/// A closed-form point transformation: one map expression per coordinate,
/// possibly carrying free parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTransformation {
    /// coordinate name -> hatted expression in the unhatted coordinates
    pub maps: BTreeMap<String, Expr>,
    /// free parameters appearing in the maps
    pub params: Vec<Symbol>,
    /// parameters certified nonzero (map invertibility)
    pub nonvanishing: Vec<Symbol>,
    pub class: Classification,
}

impl PointTransformation {
    pub fn identity(coords: &[String]) -> Self {
        PointTransformation {
            maps: coords
                .iter()
                .map(|w| (w.clone(), Expr::var(w.clone())))
                .collect(),
            params: Vec::new(),
            nonvanishing: Vec::new(),
            class: Classification::ContinuousConnected,
        }
    }

    pub fn map_of(&self, w: &str) -> Expr {
        self.maps
            .get(w)
            .cloned()
            .unwrap_or_else(|| Expr::var(w.to_string()))
    }

    pub fn is_identity(&self) -> bool {
        self.maps.iter().all(|(w, e)| e == &Expr::var(w.clone()))
    }

    /// T1.compose(T2) = T1 after T2 (apply T2 first).
    pub fn compose(&self, inner: &PointTransformation) -> PointTransformation {
        let bindings: BTreeMap<Symbol, Expr> = inner
            .maps
            .iter()
            .map(|(w, e)| (Symbol::new(w.clone()), e.clone()))
            .collect();
        let maps = self
            .maps
            .iter()
            .map(|(w, e)| (w.clone(), e.substitute(&bindings)))
            .collect();
        let mut params = self.params.clone();
        for p in &inner.params {
            if !params.contains(p) {
                params.push(p.clone());
            }
        }
        PointTransformation {
            maps,
            params,
            nonvanishing: self.nonvanishing.clone(),
            class: Classification::Unknown,
        }
    }

    /// Substitute parameter values, producing a pinned transformation.
    pub fn with_params(&self, values: &BTreeMap<Symbol, Expr>) -> PointTransformation {
        PointTransformation {
            maps: self
                .maps
                .iter()
                .map(|(w, e)| (w.clone(), e.substitute(values)))
                .collect(),
            params: self
                .params
                .iter()
                .filter(|p| !values.contains_key(*p))
                .cloned()
                .collect(),
            nonvanishing: self
                .nonvanishing
                .iter()
                .filter(|p| !values.contains_key(*p))
                .cloned()
                .collect(),
            class: Classification::Unknown,
        }
    }

    /// Induced lattice-spacing map per ruled axis coordinate:
    /// h-hat = w-hat(w + step) - w-hat(w).
    pub fn induced_spacing(
        &self,
        system: &DifferenceSystem,
    ) -> Result<BTreeMap<String, Expr>, RealizeError> {
        let ctx = system.lattice_ctx()?;
        let mut out = BTreeMap::new();
        for rule in &ctx.rules {
            let w = Symbol::new(rule.var.clone());
            let wmap = self.map_of(&rule.var);
            let shifted =
                wmap.substitute1(&w, &Expr::add2(Expr::Var(w.clone()), rule.step.clone()));
            let spacing = Expr::sub(shifted, wmap);
            out.insert(rule.var.clone(), spacing);
        }
        Ok(out)
    }

    /// Sample the Jacobian determinant of the maps at random points; error
    /// when it vanishes everywhere.
    pub fn check_jacobian(&self, coords: &[String], seed: u64) -> Result<(), RealizeError> {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = coords.len();
        let mut syms: BTreeSet<Symbol> = BTreeSet::new();
        for e in self.maps.values() {
            syms.extend(e.symbols());
        }
        for w in coords {
            syms.insert(Symbol::new(w.clone()));
        }
        for _ in 0..20 {
            let mut ctx = QEvalCtx::default();
            for s in &syms {
                let k: i64 = rng.gen_range(2..=40);
                let sign: i64 = if rng.gen_bool(0.5) { 1 } else { -1 };
                ctx.vars
                    .insert(s.clone(), BigRational::new((sign * k).into(), 20.into()));
            }
            let mut jac = vec![vec![BigRational::zero(); n]; n];
            let mut ok = true;
            'outer: for (i, w) in coords.iter().enumerate() {
                let map = self.map_of(w);
                for (j, v) in coords.iter().enumerate() {
                    match map.differentiate(&Symbol::new(v.clone())).eval_q(&ctx) {
                        Ok(val) => jac[i][j] = val,
                        Err(_) => {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
            if ok && !crate::autosolve::det_rational(&jac).is_zero() {
                return Ok(());
            }
        }
        Err(RealizeError::SingularMap)
    }

    pub fn display(&self) -> String {
        self.maps
            .iter()
            .map(|(w, e)| format!("{w} -> {e}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn to_json(&self) -> Value {
        let maps: serde_json::Map<String, Value> = self
            .maps
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        json!({
            "map": maps,
            "display": self.display(),
            "params": self.params.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
            "class": self.class.as_str(),
        })
    }
}

// ---------------------------------------------------------------------------
// realization system
// ---------------------------------------------------------------------------

/// The polynomial system produced by matching realization coefficients under the
/// affine ansatz.
#[derive(Clone, Debug)]
pub struct RealizationSystem {
    pub coords: Vec<String>,
    pub equations: Vec<MultiPoly>,
    /// ansatz unknowns first, then the family's free parameters
    pub unknowns: Vec<Symbol>,
    pub nonvanishing: BTreeSet<Symbol>,
    /// ansatz map: coordinate -> its affine expression in coords and unknowns
    pub ansatz: BTreeMap<String, Expr>,
}

fn ansatz_sym(w: &str, idx: usize) -> Symbol {
    Symbol::new(format!("a_{w}_{idx}"))
}

/// Invert a matrix of expressions by Gauss-Jordan over rational functions,
/// pivoting only on entries certified nonzero by the nonvanishing set.
fn invert_expr_matrix(
    m: &[Vec<Expr>],
    nonvanishing: &BTreeSet<Symbol>,
) -> Result<Vec<Vec<RatFunc>>, RealizeError> {
    let n = m.len();
    let mut a: Vec<Vec<RatFunc>> = Vec::with_capacity(n);
    for (i, row) in m.iter().enumerate() {
        let mut r: Vec<RatFunc> = Vec::with_capacity(2 * n);
        for e in row {
            r.push(RatFunc::from_expr(e)?);
        }
        for j in 0..n {
            r.push(if i == j {
                RatFunc::one()
            } else {
                RatFunc::zero()
            });
        }
        a.push(r);
    }
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| is_certified_ratfunc(&a[r][col], nonvanishing))
            .ok_or(RealizeError::NotInvertible(col + 1))?;
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for x in a[col].iter_mut() {
            *x = x.div(&p).expect("pivot is nonzero");
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for cc in 0..2 * n {
                    let sub = f.mul(&a[col][cc]);
                    a[r][cc] = a[r][cc].sub(&sub);
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// A rational function is certified nonzero when its numerator is a nonzero
/// constant or a monomial in certified symbols.
fn is_certified_ratfunc(f: &RatFunc, nonvanishing: &BTreeSet<Symbol>) -> bool {
    if let Some(c) = f.num.as_constant() {
        return !c.is_zero();
    }
    if f.num.terms.len() == 1 {
        let (m, _) = f.num.terms.iter().next().unwrap();
        return m.0.keys().all(|s| nonvanishing.contains(s));
    }
    false
}

fn is_certified_poly(p: &MultiPoly, nonvanishing: &BTreeSet<Symbol>) -> bool {
    if let Some(c) = p.as_constant() {
        return !c.is_zero();
    }
    if p.terms.len() == 1 {
        let (m, _) = p.terms.iter().next().unwrap();
        return m.0.keys().all(|s| nonvanishing.contains(s));
    }
    false
}

/// Build the realization system for a family and a basis of symmetry fields
/// over the given coordinates (independent variables then the dependent one).
pub fn realization_system(
    family: &AutFamily,
    fields: &[LatticeVectorField],
    coords: &[String],
    dependent: &str,
) -> Result<RealizationSystem, RealizeError> {
    let n = family.dim;
    if fields.len() != n {
        return Err(RealizeError::DimensionMismatch(n, fields.len()));
    }
    let nonvanishing: BTreeSet<Symbol> = family
        .nonvanishing
        .iter()
        .filter_map(|e| match e {
            Expr::Var(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let inv = invert_expr_matrix(&family.matrix, &nonvanishing)?;

    // affine ansatz: w-hat = a_w_0 + sum_k a_w_k * coord_k
    let mut ansatz: BTreeMap<String, Expr> = BTreeMap::new();
    let mut unknowns: Vec<Symbol> = Vec::new();
    for w in coords {
        let mut terms = vec![Expr::Var(ansatz_sym(w, 0))];
        unknowns.push(ansatz_sym(w, 0));
        for (k, v) in coords.iter().enumerate() {
            let s = ansatz_sym(w, k + 1);
            unknowns.push(s.clone());
            terms.push(Expr::mul2(Expr::Var(s), Expr::var(v.clone())));
        }
        ansatz.insert(w.clone(), Expr::add(terms));
    }
    let hat_bindings: BTreeMap<Symbol, Expr> = coords
        .iter()
        .map(|w| (Symbol::new(w.clone()), ansatz[w].clone()))
        .collect();

    let component = |f: &LatticeVectorField, w: &str| -> Expr {
        if w == dependent {
            f.phi.clone()
        } else {
            f.xi_of(w)
        }
    };

    let coord_syms: BTreeSet<Symbol> = coords.iter().map(|w| Symbol::new(w.clone())).collect();
    let mut equations: Vec<MultiPoly> = Vec::new();
    let mut seen: BTreeSet<MultiPoly> = BTreeSet::new();
    for j in 0..n {
        for w in coords {
            // LHS: sum_v tau_j^v d(w-hat)/dv
            let mut lhs_terms = Vec::new();
            for v in coords {
                let tau = component(&fields[j], v);
                if tau.is_zero() {
                    continue;
                }
                let d = ansatz[w].differentiate(&Symbol::new(v.clone()));
                if !d.is_zero() {
                    lhs_terms.push(Expr::mul2(tau, d));
                }
            }
            let lhs = RatFunc::from_expr(&Expr::add(lhs_terms))?;
            // RHS: sum_i inv[i][j] tau_i^w(hatted)
            let mut rhs = RatFunc::zero();
            for i in 0..n {
                if inv[i][j].is_zero() {
                    continue;
                }
                let tau_hat = component(&fields[i], w).substitute(&hat_bindings);
                if tau_hat.is_zero() {
                    continue;
                }
                rhs = rhs.add(&inv[i][j].mul(&RatFunc::from_expr(&tau_hat)?));
            }
            let diff = lhs.sub(&rhs);
            if diff.num.is_zero() {
                continue;
            }
            if !is_certified_poly(&diff.den, &nonvanishing) {
                return Err(RealizeError::UncertifiedDenominator(format!(
                    "{}",
                    diff.den
                )));
            }
            // match coefficients of coordinate monomials
            for eq in group_by_monomials(&diff.num, &coord_syms) {
                let eq = eq.monic();
                if !eq.is_zero() && seen.insert(eq.clone()) {
                    equations.push(eq);
                }
            }
        }
    }
    equations.sort();
    // solve ansatz unknowns first, then family parameters
    let mut all_unknowns = unknowns;
    for p in &family.free {
        all_unknowns.push(p.clone());
    }
    Ok(RealizationSystem {
        coords: coords.to_vec(),
        equations,
        unknowns: all_unknowns,
        nonvanishing,
        ansatz,
    })
}

/// Split a polynomial into the coefficient polynomials of its monomials in
/// the given symbols.
fn group_by_monomials(p: &MultiPoly, group_syms: &BTreeSet<Symbol>) -> Vec<MultiPoly> {
    let mut groups: BTreeMap<crate::expr::Monomial, MultiPoly> = BTreeMap::new();
    for (m, c) in &p.terms {
        let mut key = crate::expr::Monomial::one();
        let mut rest = crate::expr::Monomial::one();
        for (s, e) in &m.0 {
            if group_syms.contains(s) {
                key.0.insert(s.clone(), *e);
            } else {
                rest.0.insert(s.clone(), *e);
            }
        }
        groups
            .entry(key)
            .or_insert_with(MultiPoly::zero)
            .add_term(rest, c.clone());
    }
    groups.into_values().collect()
}

/// Outcome of solving a realization system.
#[derive(Clone, Debug)]
pub struct RealizationOutcome {
    pub transformations: Vec<PointTransformation>,
    /// Diagnostics when no affine realization exists.
    pub diagnostics: Vec<String>,
}

/// Solve the realization system by exact elimination with case splits,
/// quotient out additive directions that match continuous basis flows, and
/// rename surviving parameter monomials c1, c2, ...
pub fn solve_realization(
    system: &RealizationSystem,
    fields: &[LatticeVectorField],
    dependent: &str,
    opts: &IdentityOptions,
) -> Result<RealizationOutcome, RealizeError> {
    let problem = Problem {
        unknowns: system.unknowns.clone(),
        equations: system.equations.clone(),
        nonvanishing: system.nonvanishing.clone(),
        guard: None,
        max_depth: 16,
    };
    let outcome = polysolve::solve(&problem)?;
    if outcome.leaves.is_empty() {
        return Ok(RealizationOutcome {
            transformations: Vec::new(),
            diagnostics: if outcome.contradictions.is_empty() {
                vec!["no affine realization".to_string()]
            } else {
                outcome
                    .contradictions
                    .iter()
                    .map(|c| format!("no affine realization: {c}"))
                    .collect()
            },
        });
    }
    let mut transformations = Vec::new();
    for leaf in &outcome.leaves {
        let bindings: BTreeMap<Symbol, Expr> = leaf
            .assignments
            .iter()
            .map(|(k, v)| (k.clone(), v.to_expr()))
            .collect();
        let mut maps: BTreeMap<String, Expr> = system
            .ansatz
            .iter()
            .map(|(w, e)| (w.clone(), e.substitute(&bindings)))
            .collect();
        // free symbols surviving in the maps (ansatz leftovers + parameters)
        let free_syms = |maps: &BTreeMap<String, Expr>| -> Vec<Symbol> {
            let coord_syms: BTreeSet<String> = system.coords.iter().cloned().collect();
            let mut out: BTreeSet<Symbol> = BTreeSet::new();
            for e in maps.values() {
                for s in e.symbols() {
                    if !coord_syms.contains(&s.name) {
                        out.insert(s);
                    }
                }
            }
            out.into_iter().collect()
        };
        // quotient: additive parameter directions matching a continuous flow
        for s in free_syms(&maps) {
            if system.nonvanishing.contains(&s) {
                continue;
            }
            if let Some(slice) =
                quotient_direction(&maps, &s, fields, &system.coords, dependent, opts)
            {
                maps = slice;
            }
        }
        // rename surviving parameter monomials to c1, c2, ...
        let (maps, params, nonvanishing) = rename_parameters(&maps, &system.coords);
        transformations.push(PointTransformation {
            maps,
            params,
            nonvanishing,
            class: Classification::Unknown,
        });
    }
    // dedupe identical transformations from different branches
    let mut uniq: Vec<PointTransformation> = Vec::new();
    for t in transformations {
        if !uniq.iter().any(|u| u.maps == t.maps) {
            uniq.push(t);
        }
    }
    Ok(RealizationOutcome {
        transformations: uniq,
        diagnostics: Vec::new(),
    })
}

/// If d(maps)/ds is a coordinate-independent multiple of a single basis
/// field evaluated at the hatted point, the parameter moves along a
/// continuous flow: return the maps restricted to the s = 0 slice.
fn quotient_direction(
    maps: &BTreeMap<String, Expr>,
    s: &Symbol,
    fields: &[LatticeVectorField],
    coords: &[String],
    dependent: &str,
    opts: &IdentityOptions,
) -> Option<BTreeMap<String, Expr>> {
    // all maps must be affine in s
    let mut direction: BTreeMap<String, Expr> = BTreeMap::new();
    let mut nonzero = false;
    for (w, e) in maps {
        let d = e.differentiate(s);
        if d.contains(s) {
            return None;
        }
        if !d.is_zero() {
            nonzero = true;
        }
        direction.insert(w.clone(), d);
    }
    if !nonzero {
        return None;
    }
    let hat_bindings: BTreeMap<Symbol, Expr> = maps
        .iter()
        .map(|(w, e)| (Symbol::new(w.clone()), e.clone()))
        .collect();
    let component = |f: &LatticeVectorField, w: &str| -> Expr {
        if w == dependent {
            f.phi.clone()
        } else {
            f.xi_of(w)
        }
    };
    'fields: for f in fields {
        // support must match
        let mut ratio: Option<Expr> = None;
        for w in coords {
            let tw = component(f, w).substitute(&hat_bindings);
            let dw = direction.get(w).cloned().unwrap_or_else(Expr::zero);
            match (tw.is_zero(), dw.is_zero()) {
                (true, true) => continue,
                (true, false) | (false, true) => continue 'fields,
                (false, false) => {
                    let r = Expr::div(dw, tw);
                    match &ratio {
                        None => {
                            // the multiplier must not involve the coordinates
                            if r.symbols().iter().any(|sym| coords.contains(&sym.name)) {
                                // allow it if the cross-difference still
                                // cancels; checked below
                            }
                            ratio = Some(r);
                        }
                        Some(r0) => {
                            let diff = Expr::sub(r.clone(), r0.clone());
                            if !matches!(diff.identically_zero(opts), Ok(true)) {
                                continue 'fields;
                            }
                        }
                    }
                }
            }
        }
        let Some(r0) = ratio else { continue };
        // multiplier must be coordinate-free (flows are composed with a
        // constant parameter)
        if r0.symbols().iter().any(|sym| coords.contains(&sym.name)) {
            continue;
        }
        let zero = Expr::zero();
        return Some(
            maps.iter()
                .map(|(w, e)| (w.clone(), e.substitute1(s, &zero)))
                .collect(),
        );
    }
    None
}

/// Rename the non-rational coefficients of the maps to fresh parameters
/// c1, c2, ... when they form a unimodular set of Laurent monomials in the
/// old parameters (so the renaming is an exact reparameterization).
fn rename_parameters(
    maps: &BTreeMap<String, Expr>,
    coords: &[String],
) -> (BTreeMap<String, Expr>, Vec<Symbol>, Vec<Symbol>) {
    let coord_syms: BTreeSet<Symbol> = coords.iter().map(|w| Symbol::new(w.clone())).collect();
    // decompose each map into coordinate monomials with coefficient exprs
    let mut coeffs: Vec<MultiPoly> = Vec::new();
    let mut layout: Vec<(String, Vec<(crate::expr::Monomial, usize)>)> = Vec::new();
    let mut ok = true;
    for (w, e) in maps {
        let rf = match RatFunc::from_expr(e) {
            Ok(r) => r,
            Err(_) => {
                ok = false;
                break;
            }
        };
        // denominators must be parameter monomials; fold them into coeffs
        if rf.den.terms.len() != 1 {
            ok = false;
            break;
        }
        let (dm, dc) = rf.den.terms.iter().next().unwrap();
        if dm.0.keys().any(|s| coord_syms.contains(s)) {
            ok = false;
            break;
        }
        let num = rf.num.div_monomial(dm, dc);
        let mut entries = Vec::new();
        for grp in group_by_monomials_pairs(&num, &coord_syms) {
            let (key, coeff) = grp;
            if coeff.as_constant().is_some() {
                continue; // rational coefficients stay as they are
            }
            // identical coefficients share a parameter
            let idx = match coeffs.iter().position(|c| c == &coeff) {
                Some(i) => i,
                None => {
                    coeffs.push(coeff.clone());
                    coeffs.len() - 1
                }
            };
            entries.push((key, idx));
        }
        layout.push((w.clone(), entries));
    }
    let fallback = || {
        let mut params: BTreeSet<Symbol> = BTreeSet::new();
        for e in maps.values() {
            for s in e.symbols() {
                if !coord_syms.contains(&s) {
                    params.insert(s);
                }
            }
        }
        let params: Vec<Symbol> = params.into_iter().collect();
        (maps.clone(), params.clone(), params)
    };
    if !ok || coeffs.is_empty() {
        return fallback();
    }
    // every coefficient must be a single Laurent monomial in the parameters
    let mut param_set: BTreeSet<Symbol> = BTreeSet::new();
    for c in &coeffs {
        if c.terms.len() != 1 {
            return fallback();
        }
        let (m, _) = c.terms.iter().next().unwrap();
        for s in m.0.keys() {
            param_set.insert(s.clone());
        }
    }
    let old_params: Vec<Symbol> = param_set.into_iter().collect();
    // exponent matrix: one row per distinct coefficient
    let rows = coeffs.len();
    let cols = old_params.len();
    if rows != cols {
        return fallback();
    }
    let mut emat = vec![vec![BigRational::zero(); cols]; rows];
    let mut scale = Vec::with_capacity(rows);
    for (i, c) in coeffs.iter().enumerate() {
        let (m, cv) = c.terms.iter().next().unwrap();
        scale.push(cv.clone());
        for (j, p) in old_params.iter().enumerate() {
            emat[i][j] = BigRational::from_integer((m.degree_of(p) as i64).into());
        }
    }
    let det = crate::autosolve::det_rational(&emat);
    if det.abs() != BigRational::one() {
        return fallback();
    }
    // unimodular: the map (old params) -> (coefficients) is a bijection of
    // the nonzero tori, so fresh names are an exact reparameterization
    let fresh: Vec<Symbol> = (1..=rows).map(|k| Symbol::new(format!("c{k}"))).collect();
    let mut new_maps: BTreeMap<String, Expr> = BTreeMap::new();
    for (w, entries) in &layout {
        // rebuild: rational part of the original map plus renamed terms
        let rf = RatFunc::from_expr(&maps[w]).expect("checked above");
        let (dm, dc) = rf.den.terms.iter().next().unwrap();
        let num = rf.num.div_monomial(dm, dc);
        let mut terms: Vec<Expr> = Vec::new();
        for grp in group_by_monomials_pairs(&num, &coord_syms) {
            let (key, coeff) = grp;
            if let Some(c) = coeff.as_constant() {
                terms.push(Expr::mul2(Expr::Rat(c), key.to_expr()));
                continue;
            }
            let idx = entries
                .iter()
                .find(|(k, _)| k == &key)
                .map(|(_, i)| *i)
                .expect("layout covers all non-constant coefficients");
            terms.push(Expr::mul(vec![
                Expr::Rat(scale[idx].clone()),
                Expr::Var(fresh[idx].clone()),
                key.to_expr(),
            ]));
        }
        new_maps.insert(w.clone(), Expr::add(terms));
    }
    (new_maps, fresh.clone(), fresh)
}

fn group_by_monomials_pairs(
    p: &MultiPoly,
    group_syms: &BTreeSet<Symbol>,
) -> Vec<(crate::expr::Monomial, MultiPoly)> {
    let mut groups: BTreeMap<crate::expr::Monomial, MultiPoly> = BTreeMap::new();
    for (m, c) in &p.terms {
        let mut key = crate::expr::Monomial::one();
        let mut rest = crate::expr::Monomial::one();
        for (s, e) in &m.0 {
            if group_syms.contains(s) {
                key.0.insert(s.clone(), *e);
            } else {
                rest.0.insert(s.clone(), *e);
            }
        }
        groups
            .entry(key)
            .or_insert_with(MultiPoly::zero)
            .add_term(rest, c.clone());
    }
    groups.into_iter().collect()
}

// ---------------------------------------------------------------------------
// form invariance
// ---------------------------------------------------------------------------

/// One admissible parameter choice with its classification.
#[derive(Clone, Debug)]
pub struct AdmissibleInstance {
    pub transformation: PointTransformation,
    /// parameter values pinned by the invariance conditions
    pub values: BTreeMap<Symbol, Expr>,
    /// parameters left free (an admissible continuous family)
    pub free: Vec<Symbol>,
    /// the transformed residual equals k_factor times the original
    pub k_factor: Expr,
    pub class: Classification,
}

#[derive(Clone, Debug, Default)]
pub struct FormInvarianceReport {
    pub instances: Vec<AdmissibleInstance>,
}

impl FormInvarianceReport {
    pub fn to_json(&self) -> Value {
        json!({
            "admissible": self.instances.iter().map(|inst| {
                let params: serde_json::Map<String, Value> = inst
                    .values
                    .iter()
                    .map(|(k, v)| (k.name.clone(), v.to_json()))
                    .collect();
                json!({
                    "params": params,
                    "free": inst.free.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
                    "class": inst.class.as_str(),
                    "map": inst.transformation.maps.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<String, Value>>(),
                })
            }).collect::<Vec<_>>(),
        })
    }
}

/// Check whether a (possibly parametrized) transformation leaves the system
/// form-invariant, returning the admissible parameter set with each instance
/// classified as continuous-connected or discrete.
///
/// The transformed residual is computed by the site-map substitution: lattice
/// orientation may reverse (hatted spacing negative), in which case the site
/// labels are mirrored. Candidates come from exact matching of exponential
/// arguments and polynomial coefficients; every candidate is confirmed by
/// randomized identity testing.
pub fn check_form_invariance(
    transformation: &PointTransformation,
    system: &DifferenceSystem,
    fields: &[LatticeVectorField],
    opts: &IdentityOptions,
) -> Result<FormInvarianceReport, RealizeError> {
    let coords: Vec<String> = {
        let mut c = system.independent.clone();
        c.push(system.dependent.clone());
        c
    };
    transformation.check_jacobian(&coords, opts.seed)?;
    let ctx = system.lattice_ctx()?;
    let axes: Vec<String> = system.stencil.keys().cloned().collect();
    let has_axis_map = !ctx.rules.is_empty();
    let sigmas: Vec<i64> = if has_axis_map { vec![1, -1] } else { vec![1] };

    let nonvanishing: BTreeSet<Symbol> = transformation.nonvanishing.iter().cloned().collect();
    let delta_folded = ctx.fold(&system.delta);
    let k_sym = Symbol::new("_K");
    let mut report = FormInvarianceReport::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();

    for &sigma in &sigmas {
        let delta_hat = transformed_residual(transformation, system, sigma)?;
        // candidate parameter values from exponential-argument matching
        let hat_exp_args = collect_exp_args(&delta_hat);
        let orig_exp_args = collect_exp_args(&delta_folded);
        let pairings: Vec<Vec<(Expr, Expr)>> = if hat_exp_args.is_empty() {
            vec![Vec::new()]
        } else {
            all_pairings(&hat_exp_args, &orig_exp_args)
        };
        for pairing in pairings {
            // equations forcing the exponential arguments to coincide
            let mut pre_eqs: Vec<MultiPoly> = Vec::new();
            let mut ok = true;
            for (a_hat, a_orig) in &pairing {
                let diff = Expr::sub(a_hat.clone(), a_orig.clone());
                match RatFunc::from_expr(&diff) {
                    Ok(rf) => {
                        if !is_certified_poly(&rf.den, &nonvanishing) {
                            ok = false;
                            break;
                        }
                        let jet: BTreeSet<Symbol> = diff
                            .symbols()
                            .into_iter()
                            .filter(|s| !transformation.params.contains(s) && s.name != k_sym.name)
                            .collect();
                        for eq in group_by_monomials(&rf.num, &jet) {
                            pre_eqs.push(eq);
                        }
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut unknowns: Vec<Symbol> = transformation.params.clone();
            unknowns.push(k_sym.clone());
            let pre_problem = Problem {
                unknowns: unknowns.clone(),
                equations: pre_eqs,
                nonvanishing: {
                    let mut nv = nonvanishing.clone();
                    nv.insert(k_sym.clone());
                    nv
                },
                guard: None,
                max_depth: 16,
            };
            let pre = match polysolve::solve(&pre_problem) {
                Ok(o) => o,
                Err(_) => continue,
            };
            for pre_leaf in &pre.leaves {
                let pre_bindings: BTreeMap<Symbol, Expr> = pre_leaf
                    .assignments
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_expr()))
                    .collect();
                let dh = delta_hat.substitute(&pre_bindings);
                // residual difference with concrete exponentials atomized
                let atoms = atomize_exps(&Expr::sub(
                    dh.clone(),
                    Expr::mul2(Expr::Var(k_sym.clone()), delta_folded.clone()),
                ));
                let Some((atomized, _atom_map)) = atoms else {
                    continue;
                };
                let Ok(rf) = RatFunc::from_expr(&atomized) else {
                    continue;
                };
                // denominators: jet variables guarded by singular loci or
                // certified parameters
                let jet: BTreeSet<Symbol> = atomized
                    .symbols()
                    .into_iter()
                    .filter(|s| !transformation.params.contains(s) && s.name != k_sym.name)
                    .collect();
                let eqs = group_by_monomials(&rf.num, &jet);
                let problem = Problem {
                    unknowns: unknowns.clone(),
                    equations: eqs,
                    nonvanishing: {
                        let mut nv = nonvanishing.clone();
                        nv.insert(k_sym.clone());
                        nv
                    },
                    guard: None,
                    max_depth: 16,
                };
                let outcome = match polysolve::solve(&problem) {
                    Ok(o) => o,
                    Err(e) => {
                        if std::env::var("LATSYM_DEBUG").is_ok() {
                            eprintln!("form-invariance solve failed: {e}");
                        }
                        continue;
                    }
                };
                for leaf in &outcome.leaves {
                    let mut values: BTreeMap<Symbol, Expr> = pre_bindings
                        .iter()
                        .filter(|(k, _)| *k != &k_sym)
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    let mut k_factor = pre_bindings
                        .get(&k_sym)
                        .cloned()
                        .unwrap_or_else(|| Expr::Var(k_sym.clone()));
                    for (k, v) in &leaf.assignments {
                        let ve = v.to_expr().substitute(&pre_bindings);
                        if k == &k_sym {
                            k_factor = ve;
                        } else {
                            values.insert(k.clone(), ve);
                            k_factor = k_factor.substitute1(k, &v.to_expr());
                        }
                    }
                    // reduce k_factor by the leaf assignments as well
                    let leaf_bindings: BTreeMap<Symbol, Expr> = leaf
                        .assignments
                        .iter()
                        .filter(|(k, _)| *k != &k_sym)
                        .map(|(k, v)| (k.clone(), v.to_expr()))
                        .collect();
                    k_factor = k_factor.substitute(&leaf_bindings);
                    let free: Vec<Symbol> = transformation
                        .params
                        .iter()
                        .filter(|p| !values.contains_key(*p))
                        .cloned()
                        .collect();
                    // final verification by randomized identity testing
                    let pinned = transformation.with_params(&values);
                    let dh_final = delta_hat
                        .substitute(&pre_bindings)
                        .substitute(&leaf_bindings)
                        .substitute(&values);
                    let residual =
                        Expr::sub(dh_final, Expr::mul2(k_factor.clone(), delta_folded.clone()));
                    let test_opts = IdentityOptions {
                        singular: {
                            let mut s = system.singular_all_sites()?;
                            s.push(k_factor.clone());
                            s
                        },
                        ..opts.clone()
                    };
                    if !matches!(residual.identically_zero(&test_opts), Ok(true)) {
                        continue;
                    }
                    // orientation consistency: the spacing ratio sign must
                    // match sigma
                    if has_axis_map
                        && !spacing_sign_consistent(&pinned, system, &axes, sigma, opts)?
                    {
                        continue;
                    }
                    let key = format!("{:?}|{:?}", pinned.maps, free);
                    if !seen.insert(key) {
                        continue;
                    }
                    let class = classify(&pinned, &free, system, fields, &coords, opts)?;
                    report.instances.push(AdmissibleInstance {
                        transformation: PointTransformation { class, ..pinned },
                        values: values.clone(),
                        free,
                        k_factor,
                        class,
                    });
                }
            }
        }
    }
    // deterministic order: fewest sign flips first, then display order
    report.instances.sort_by_key(|inst| {
        let flips = inst
            .transformation
            .maps
            .iter()
            .filter(|(w, e)| **e != Expr::var((*w).clone()))
            .count();
        (
            inst.free.len(),
            flips,
            format!("{:?}", inst.transformation.maps),
        )
    });
    Ok(report)
}

/// The residual of the transformed configuration expressed in the original
/// jet variables. Site labels are mirrored when sigma = -1.
fn transformed_residual(
    t: &PointTransformation,
    system: &DifferenceSystem,
    sigma: i64,
) -> Result<Expr, RealizeError> {
    let ctx = system.lattice_ctx()?;
    let dep = &system.dependent;
    let u_map = t.map_of(dep);
    // u-hat = cu * u + g(other coords), cu constant
    let cu = u_map.differentiate(&Symbol::new(dep.clone()));
    if cu.contains(&Symbol::new(dep.clone()))
        || cu
            .symbols()
            .iter()
            .any(|s| system.independent.contains(&s.name))
    {
        return Err(RealizeError::UnsupportedMap(format!(
            "dependent map must be affine in {dep} with constant coefficient: {u_map}"
        )));
    }
    let g = u_map.substitute1(&Symbol::new(dep.clone()), &Expr::zero());
    // t-hat = ct * t + const when t-derivatives appear
    let has_t = system.has_time_derivatives();
    let ct = if has_t {
        let t_map = t.map_of("t");
        let c = t_map.differentiate(&Symbol::new("t"));
        if t_map
            .symbols()
            .iter()
            .any(|s| s.name != "t" && coordsym_of(system).contains(&s.name))
            || c.symbols()
                .iter()
                .any(|s| coordsym_of(system).contains(&s.name))
        {
            return Err(RealizeError::UnsupportedMap(format!(
                "time map must be affine in t alone: {t_map}"
            )));
        }
        c
    } else {
        Expr::one()
    };

    let mut bindings: BTreeMap<Symbol, Expr> = BTreeMap::new();
    for s in system.delta.symbols() {
        if s.name == *dep {
            let korder = s.derivs.len() as i64;
            // mirrored site
            let mut site = s.clone();
            for (axis, k) in s.offsets.clone() {
                site.set_offset(&axis, sigma * k);
            }
            let mut value = Expr::mul2(cu.clone(), Expr::Var(site.clone()));
            if korder == 0 {
                // additive part evaluated at the mirrored site
                let mut g_site = g.clone();
                for (axis, k) in s.offsets.clone() {
                    g_site = g_site.shift(&axis, sigma * k, &ctx);
                }
                value = Expr::add2(value, g_site);
            } else {
                // d^k g / dt^k at the mirrored site
                let mut g_site = g.clone();
                for (axis, k) in s.offsets.clone() {
                    g_site = g_site.shift(&axis, sigma * k, &ctx);
                }
                let mut gk = g_site;
                for _ in 0..korder {
                    gk = gk.differentiate(&Symbol::new("t"));
                }
                value = Expr::add2(value, gk);
                value = Expr::div(value, Expr::pow(ct.clone(), korder));
            }
            bindings.insert(s.clone(), value);
        } else if system.independent.contains(&s.name) {
            // independent coordinate: the whole map evaluated at the
            // (possibly mirrored) site; shifting moves every site variable
            // in the map and folds ruled coordinates
            let mut value = t.map_of(&s.name);
            for (axis, k) in s.offsets.clone() {
                value = value.shift(&axis, sigma * k, &ctx);
            }
            bindings.insert(s.clone(), value);
        }
    }
    Ok(ctx.fold(&system.delta.substitute(&bindings)))
}

fn coordsym_of(system: &DifferenceSystem) -> Vec<String> {
    let mut c = system.independent.clone();
    c.push(system.dependent.clone());
    c.retain(|w| w != "t");
    c
}

fn collect_exp_args(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    fn walk(e: &Expr, out: &mut Vec<Expr>) {
        match e {
            Expr::Exp(a) => {
                if !out.contains(a) {
                    out.push((**a).clone());
                }
                walk(a, out);
            }
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| walk(t, out)),
            Expr::Pow(b, _) => walk(b, out),
            Expr::Div(n, d) => {
                walk(n, out);
                walk(d, out);
            }
            _ => {}
        }
    }
    walk(e, &mut out);
    out
}

/// Every way of assigning each hat argument to some original argument.
fn all_pairings(hat: &[Expr], orig: &[Expr]) -> Vec<Vec<(Expr, Expr)>> {
    let mut out: Vec<Vec<(Expr, Expr)>> = vec![Vec::new()];
    for a in hat {
        let mut next = Vec::new();
        for partial in &out {
            for b in orig {
                let mut p = partial.clone();
                p.push((a.clone(), b.clone()));
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Replace each distinct exponential subterm by a fresh symbol so the result
/// is rational in an extended variable set. Fails when exponential arguments
/// still contain parameters (they must be pinned first).
fn atomize_exps(e: &Expr) -> Option<(Expr, BTreeMap<Expr, Symbol>)> {
    let mut map: BTreeMap<Expr, Symbol> = BTreeMap::new();
    fn walk(e: &Expr, map: &mut BTreeMap<Expr, Symbol>) -> Expr {
        match e {
            Expr::Exp(a) => {
                let n = map.len();
                let s = map
                    .entry((**a).clone())
                    .or_insert_with(|| Symbol::new(format!("_exp{n}")));
                Expr::Var(s.clone())
            }
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| walk(t, map)).collect()),
            Expr::Mul(ts) => Expr::mul(ts.iter().map(|t| walk(t, map)).collect()),
            Expr::Pow(b, k) => Expr::pow(walk(b, map), *k),
            Expr::Div(n, d) => Expr::div(walk(n, map), walk(d, map)),
            other => other.clone(),
        }
    }
    let out = walk(e, &mut map);
    Some((out, map))
}

/// Spacing-ratio sign must match the site mirroring: positive for sigma = 1,
/// negative for sigma = -1. Checked numerically at a positive spacing sample.
fn spacing_sign_consistent(
    t: &PointTransformation,
    system: &DifferenceSystem,
    _axes: &[String],
    sigma: i64,
    opts: &IdentityOptions,
) -> Result<bool, RealizeError> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let spacings = t.induced_spacing(system)?;
    let ctx = system.lattice_ctx()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed ^ 0xacce);
    for rule in &ctx.rules {
        let Some(sp) = spacings.get(&rule.var) else {
            continue;
        };
        let ratio = Expr::div(sp.clone(), rule.step.clone());
        // evaluate at random positive parameter values; the sign must be
        // constant on the family's connected parameter domain
        let syms = ratio.symbols();
        let mut decided = None;
        for _ in 0..20 {
            let mut ctxq = QEvalCtx::default();
            for s in &syms {
                let k: i64 = rng.gen_range(1..=40);
                ctxq.vars
                    .insert(s.clone(), BigRational::new(k.into(), 20.into()));
            }
            match ratio.eval_q(&ctxq) {
                Ok(v) => {
                    decided = Some(v.is_positive());
                    break;
                }
                Err(_) => continue,
            }
        }
        match decided {
            Some(positive) => {
                if positive != (sigma == 1) {
                    return Ok(false);
                }
            }
            None => return Ok(false),
        }
    }
    Ok(true)
}

/// Classify an admissible instance: identity and positive-scaling maps that
/// match basis flows are continuous-connected; any required logarithm of a
/// negative factor makes the instance discrete.
fn classify(
    t: &PointTransformation,
    free: &[Symbol],
    system: &DifferenceSystem,
    fields: &[LatticeVectorField],
    coords: &[String],
    opts: &IdentityOptions,
) -> Result<Classification, RealizeError> {
    if t.is_identity() {
        return Ok(Classification::ContinuousConnected);
    }
    if !free.is_empty() {
        // a family: classified per representative by the caller
        return Ok(Classification::Unknown);
    }
    // diagonal scale factors per coordinate
    let mut scales: BTreeMap<String, f64> = BTreeMap::new();
    for w in coords {
        let map = t.map_of(w);
        let c = map.differentiate(&Symbol::new(w.clone()));
        let Some(r) = c.as_rat() else {
            return Ok(Classification::Discrete);
        };
        let v = r.to_f64().unwrap_or(f64::NAN);
        if v <= 0.0 {
            // a negative factor needs the log of a negative number
            return Ok(Classification::Discrete);
        }
        scales.insert(w.clone(), v);
    }
    // spacing ratio must be positive as well
    for sp in t.induced_spacing(system)?.values() {
        let ctx = system.lattice_ctx()?;
        for rule in &ctx.rules {
            let ratio = Expr::div(sp.clone(), rule.step.clone());
            if let Some(r) = ratio.normalize().as_rat() {
                if !r.is_positive() {
                    return Ok(Classification::Discrete);
                }
            }
        }
    }
    // try to reach the map by composing basis flows at solved parameters
    match flows_reach(t, fields, coords, system, opts) {
        Ok(true) => Ok(Classification::ContinuousConnected),
        Ok(false) => Ok(Classification::Discrete),
        Err(_) => Ok(Classification::Discrete),
    }
}

/// Solve for flow parameters by logarithms of the diagonal factors and test
/// numerically whether the composition reproduces the map.
fn flows_reach(
    t: &PointTransformation,
    fields: &[LatticeVectorField],
    coords: &[String],
    system: &DifferenceSystem,
    opts: &IdentityOptions,
) -> Result<bool, RealizeError> {
    let dep = &system.dependent;
    // affine representation of each field: z -> A z + b over the coords
    let n = coords.len();
    let mut lambdas: Vec<f64> = vec![0.0; fields.len()];
    let mut matched: BTreeSet<String> = BTreeSet::new();
    for (k, f) in fields.iter().enumerate() {
        for (i, w) in coords.iter().enumerate() {
            let comp = if w == dep { f.phi.clone() } else { f.xi_of(w) };
            // pure scaling direction: comp = a * w
            let a = comp.differentiate(&Symbol::new(w.clone()));
            if a.as_rat().is_none() || a.is_zero() {
                continue;
            }
            if !Expr::sub(comp.clone(), Expr::mul2(a.clone(), Expr::var(w.clone()))).is_zero() {
                continue;
            }
            let scale = t.map_of(w).differentiate(&Symbol::new(w.clone()));
            let Some(sr) = scale.as_rat() else { continue };
            let sv = sr.to_f64().unwrap_or(f64::NAN);
            if sv <= 0.0 || matched.contains(w) {
                continue;
            }
            if (sv - 1.0).abs() < 1e-15 {
                continue;
            }
            let av = a.as_rat().unwrap().to_f64().unwrap();
            lambdas[k] = sv.ln() / av;
            matched.insert(w.clone());
            let _ = i;
        }
    }
    // compose the flows numerically and compare on sample points
    use num_complex::Complex64;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed ^ 0xf10);
    let lam = Symbol::new("_lambda");
    let mut flow_maps: Vec<Option<Vec<Vec<Expr>>>> = Vec::new();
    for f in fields {
        flow_maps.push(affine_flow(f, coords, dep, &lam).ok());
    }
    let apply_flow = |fm: &Vec<Vec<Expr>>, lv: f64, z: &[f64]| -> Result<Vec<f64>, RealizeError> {
        let mut ctx = crate::expr::EvalCtx::new().bind(lam.clone(), Complex64::new(lv, 0.0));
        for (i, w) in coords.iter().enumerate() {
            ctx = ctx.bind(Symbol::new(w.clone()), Complex64::new(z[i], 0.0));
        }
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, cell) in fm[i].iter().enumerate() {
                let basis = if j < n {
                    Complex64::new(z[j], 0.0)
                } else {
                    Complex64::new(1.0, 0.0)
                };
                acc += cell.eval_c(&ctx).map_err(RealizeError::Expr)? * basis;
            }
            next[i] = acc.re;
        }
        Ok(next)
    };
    for _ in 0..10 {
        let start: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.2..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut composed = start.clone();
        for (k, fm) in flow_maps.iter().enumerate() {
            if lambdas[k] == 0.0 {
                continue;
            }
            let Some(fm) = fm else { return Ok(false) };
            composed = apply_flow(fm, lambdas[k], &composed)?;
        }
        let mut start_ctx = crate::expr::EvalCtx::new();
        for (i, w) in coords.iter().enumerate() {
            start_ctx = start_ctx.bind(Symbol::new(w.clone()), Complex64::new(start[i], 0.0));
        }
        for (i, w) in coords.iter().enumerate() {
            let target = t.map_of(w).eval_c(&start_ctx).map_err(RealizeError::Expr)?;
            if (composed[i] - target.re).abs() > 1e-9 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Exact flow of an affine vector field as an (n+1)-column matrix of
/// expressions in the flow parameter: row i gives the image of coordinate i
/// as sum_j M[i][j] z_j + M[i][n].
fn affine_flow(
    field: &LatticeVectorField,
    coords: &[String],
    dependent: &str,
    lambda: &Symbol,
) -> Result<Vec<Vec<Expr>>, RealizeError> {
    let n = coords.len();
    // homogeneous matrix [[A, b], [0, 0]] with z' = A z + b
    let mut m = vec![vec![BigRational::zero(); n + 1]; n + 1];
    for (i, w) in coords.iter().enumerate() {
        let comp = if w == dependent {
            field.phi.clone()
        } else {
            field.xi_of(w)
        };
        let mut rest = comp.clone();
        for (j, v) in coords.iter().enumerate() {
            let c = comp.differentiate(&Symbol::new(v.clone()));
            let Some(r) = c.as_rat() else {
                return Err(RealizeError::UnsupportedMap(format!(
                    "field component {comp} is not affine"
                )));
            };
            m[i][j] = r.clone();
            rest = Expr::sub(rest, Expr::mul2(c.clone(), Expr::var(v.clone())));
        }
        let Some(b) = rest.as_rat() else {
            return Err(RealizeError::UnsupportedMap(format!(
                "field component {comp} is not affine"
            )));
        };
        m[i][n] = b.clone();
    }
    let exp = matrix_exp(&m, lambda)?;
    Ok(exp.into_iter().take(n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autosolve::automorphism_families;
    use crate::expr::rat;
    use crate::liealg::toda_algebra;

    fn h_expr() -> Expr {
        Expr::rational(7, 3)
    }

    fn toda_setup() -> (DifferenceSystem, Vec<LatticeVectorField>) {
        let hsym = Symbol::new("h");
        let u = |k: i64| Expr::sym(Symbol::new("u").at("n", k));
        let utt = Expr::sym(Symbol::new("u").d("t").d("t"));
        let delta = Expr::add(vec![
            utt,
            Expr::neg(Expr::exp(Expr::sub(u(1), u(0)))),
            Expr::exp(Expr::sub(u(0), u(-1))),
        ]);
        let lattice = vec![Expr::add(vec![
            Expr::sym(Symbol::new("x").at("n", 1)),
            Expr::neg(Expr::var("x")),
            Expr::neg(Expr::var("h")),
        ])];
        let sys = DifferenceSystem {
            delta,
            lattice,
            stencil: [("n".to_string(), (-1, 1))].into_iter().collect(),
            dependent: "u".into(),
            independent: vec!["t".into(), "x".into()],
            singular: vec![],
            eliminate: None,
        }
        .substituted(&hsym, &h_expr());
        let f = |xi_t: Expr, xi_x: Expr, phi: Expr| {
            LatticeVectorField::new(
                [("t".to_string(), xi_t), ("x".to_string(), xi_x)]
                    .into_iter()
                    .collect(),
                phi,
            )
        };
        let fields = vec![
            f(Expr::zero(), Expr::zero(), Expr::one()),
            f(Expr::zero(), Expr::one(), Expr::zero()),
            f(Expr::one(), Expr::zero(), Expr::zero()),
            f(Expr::zero(), Expr::zero(), Expr::var("t")),
            f(
                Expr::var("t"),
                Expr::zero(),
                Expr::neg(Expr::div(
                    Expr::mul2(Expr::int(2), Expr::var("x")),
                    h_expr(),
                )),
            ),
        ];
        (sys, fields)
    }

    fn coords() -> Vec<String> {
        vec!["t".into(), "x".into(), "u".into()]
    }

    #[test]
    fn toda_case_a_realization_matches_the_worked_solution() {
        let (sys, fields) = toda_setup();
        let fams = automorphism_families(&toda_algebra(), &rat(7, 3), 42).unwrap();
        let case_a = fams
            .iter()
            .find(|f| f.matrix[4][4].is_one())
            .expect("b55 = 1 family");
        let rsys = realization_system(case_a, &fields, &coords(), "u").unwrap();
        let out = solve_realization(&rsys, &fields, "u", &IdentityOptions::default()).unwrap();
        assert_eq!(out.transformations.len(), 1, "{:?}", out.diagnostics);
        let t = &out.transformations[0];
        // t-hat = c1 t, x-hat = c2 x, u-hat = c2 u
        let c1 = Expr::var("c1");
        let c2 = Expr::var("c2");
        assert_eq!(t.map_of("t"), Expr::mul2(c1.clone(), Expr::var("t")));
        assert_eq!(t.map_of("x"), Expr::mul2(c2.clone(), Expr::var("x")));
        assert_eq!(t.map_of("u"), Expr::mul2(c2.clone(), Expr::var("u")));
    }

    #[test]
    fn toda_case_b_has_no_affine_realization() {
        let (_, fields) = toda_setup();
        let fams = automorphism_families(&toda_algebra(), &rat(7, 3), 42).unwrap();
        let case_b = fams
            .iter()
            .find(|f| f.matrix[4][4] == Expr::int(-1))
            .expect("b55 = -1 family");
        let rsys = realization_system(case_b, &fields, &coords(), "u").unwrap();
        let out = solve_realization(&rsys, &fields, "u", &IdentityOptions::default()).unwrap();
        assert!(out.transformations.is_empty());
        assert!(!out.diagnostics.is_empty());
    }

    #[test]
    fn identity_family_realizes_the_identity() {
        // Phi = I on the Toda algebra: the realization system is solved by
        // the identity map (among scalings)
        let (_, fields) = toda_setup();
        let fams = automorphism_families(&toda_algebra(), &rat(7, 3), 42).unwrap();
        let case_a = fams.iter().find(|f| f.matrix[4][4].is_one()).unwrap();
        let rsys = realization_system(case_a, &fields, &coords(), "u").unwrap();
        let out = solve_realization(&rsys, &fields, "u", &IdentityOptions::default()).unwrap();
        let t = &out.transformations[0];
        // set c1 = c2 = 1: the identity is an instance
        let values: BTreeMap<Symbol, Expr> = [
            (Symbol::new("c1"), Expr::one()),
            (Symbol::new("c2"), Expr::one()),
        ]
        .into_iter()
        .collect();
        assert!(t.with_params(&values).is_identity());
    }

    #[test]
    fn toda_form_invariance_admits_the_four_sign_choices() {
        let (sys, fields) = toda_setup();
        let t = PointTransformation {
            maps: [
                ("t".to_string(), Expr::mul2(Expr::var("c1"), Expr::var("t"))),
                ("x".to_string(), Expr::mul2(Expr::var("c2"), Expr::var("x"))),
                ("u".to_string(), Expr::mul2(Expr::var("c2"), Expr::var("u"))),
            ]
            .into_iter()
            .collect(),
            params: vec![Symbol::new("c1"), Symbol::new("c2")],
            nonvanishing: vec![Symbol::new("c1"), Symbol::new("c2")],
            class: Classification::Unknown,
        };
        let report = check_form_invariance(&t, &sys, &fields, &IdentityOptions::default()).unwrap();
        let mut tuples: Vec<(String, String)> = report
            .instances
            .iter()
            .map(|i| {
                (
                    i.values[&Symbol::new("c1")].to_string(),
                    i.values[&Symbol::new("c2")].to_string(),
                )
            })
            .collect();
        tuples.sort();
        assert_eq!(
            tuples,
            vec![
                ("-1".to_string(), "-1".to_string()),
                ("-1".to_string(), "1".to_string()),
                ("1".to_string(), "-1".to_string()),
                ("1".to_string(), "1".to_string()),
            ]
        );
        for inst in &report.instances {
            let expected = if inst.transformation.is_identity() {
                Classification::ContinuousConnected
            } else {
                Classification::Discrete
            };
            assert_eq!(inst.class, expected, "at {:?}", inst.values);
        }
    }

    #[test]
    fn dp1_sign_flip_is_form_invariant_only_for_gamma_zero() {
        use crate::latfield::DifferenceSystem;
        let dp1 = |gamma: (i64, i64)| -> DifferenceSystem {
            let u = |k: i64| Expr::sym(Symbol::new("u").at("n", k));
            let delta = Expr::add(vec![
                u(1),
                u(0),
                u(-1),
                Expr::neg(Expr::div(
                    Expr::add2(Expr::mul2(Expr::one(), Expr::var("x")), Expr::int(3)),
                    u(0),
                )),
                Expr::neg(Expr::rational(gamma.0, gamma.1)),
            ]);
            let lattice = vec![Expr::add(vec![
                Expr::sym(Symbol::new("x").at("n", 1)),
                Expr::neg(Expr::var("x")),
                Expr::neg(Expr::var("h")),
            ])];
            DifferenceSystem {
                delta,
                lattice,
                stencil: [("n".to_string(), (-1, 1))].into_iter().collect(),
                dependent: "u".into(),
                independent: vec!["x".into()],
                singular: vec![Expr::var("u")],
                eliminate: None,
            }
        };
        let flip = PointTransformation {
            maps: [
                ("x".to_string(), Expr::var("x")),
                ("u".to_string(), Expr::neg(Expr::var("u"))),
            ]
            .into_iter()
            .collect(),
            params: vec![],
            nonvanishing: vec![],
            class: Classification::Unknown,
        };
        let report =
            check_form_invariance(&flip, &dp1((0, 1)), &[], &IdentityOptions::default()).unwrap();
        assert_eq!(report.instances.len(), 1);
        assert_eq!(report.instances[0].class, Classification::Discrete);
        assert_eq!(report.instances[0].k_factor, Expr::int(-1));
        // gamma != 0 blocks it
        let report6 =
            check_form_invariance(&flip, &dp1((6, 1)), &[], &IdentityOptions::default()).unwrap();
        assert!(report6.instances.is_empty());
    }

    #[test]
    fn singular_map_is_rejected() {
        let (sys, fields) = toda_setup();
        let squash = PointTransformation {
            maps: [
                ("t".to_string(), Expr::var("t")),
                ("x".to_string(), Expr::var("x")),
                ("u".to_string(), Expr::zero()),
            ]
            .into_iter()
            .collect(),
            params: vec![],
            nonvanishing: vec![],
            class: Classification::Unknown,
        };
        match check_form_invariance(&squash, &sys, &fields, &IdentityOptions::default()) {
            Err(RealizeError::SingularMap) => {}
            other => panic!("expected SingularMap, got {other:?}"),
        }
    }

    #[test]
    fn klein_four_composition_table() {
        let cs = coords();
        let id = PointTransformation::identity(&cs);
        let mk = |c1: i64, c2: i64| PointTransformation {
            maps: [
                ("t".to_string(), Expr::mul2(Expr::int(c1), Expr::var("t"))),
                ("x".to_string(), Expr::mul2(Expr::int(c2), Expr::var("x"))),
                ("u".to_string(), Expr::mul2(Expr::int(c2), Expr::var("u"))),
            ]
            .into_iter()
            .collect(),
            params: vec![],
            nonvanishing: vec![],
            class: Classification::Discrete,
        };
        let t_rev = mk(-1, 1);
        let xu_rev = mk(1, -1);
        let both = mk(-1, -1);
        // each squares to the identity
        for g in [&t_rev, &xu_rev, &both] {
            assert!(g.compose(g).is_identity());
        }
        // closure
        assert_eq!(t_rev.compose(&xu_rev).maps, both.maps);
        assert_eq!(xu_rev.compose(&both).maps, t_rev.maps);
        assert_eq!(id.compose(&t_rev).maps, t_rev.maps);
    }
}
