//! Polynomial constraint solving by propagation and case splitting.
//!
//! The solver handles the systems that arise from automorphism equations and
//! from realization matching: polynomial equations of low degree in a
//! declared set of unknowns, with some symbols certified nonzero as side
//! conditions. Moves, in order:
//!
//! 1. equations that are a single monomial assign their one uncertified
//!    variable to zero (several uncertified variables: case split);
//! 2. equations affine in an unknown whose coefficient is certified
//!    invertible solve for that unknown (substitution clears the
//!    denominator, so everything stays polynomial);
//! 3. equations that factor into affine pieces (content monomial, affine
//!    remainder, univariate quadratic with rational roots) split the branch.
//!
//! Branches forcing the guard polynomial (typically det Phi) to vanish
//! identically are pruned. Leaves are deduplicated by their reduced
//! assignment map, and every leaf is re-verified against the input system.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{Expr, Monomial, MultiPoly, Symbol};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("branch depth exceeded the cap of {0}")]
    BranchDepthExceeded(usize),
    #[error("equation not reducible by propagation or affine factoring: {0}")]
    Irreducible(String),
    #[error("leaf verification failed for `{0}` (solver bug)")]
    LeafVerification(String),
}

/// Value assigned to an unknown: num/den with den certified nonzero.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Assigned {
    pub num: MultiPoly,
    pub den: MultiPoly,
}

impl Assigned {
    #[cfg(test)]
    pub fn zero() -> Self {
        Assigned {
            num: MultiPoly::zero(),
            den: MultiPoly::one(),
        }
    }

    pub fn to_expr(&self) -> Expr {
        Expr::div(self.num.to_expr(), self.den.to_expr())
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    /// Unknowns in solving order (earlier = preferred for elimination).
    pub unknowns: Vec<Symbol>,
    pub equations: Vec<MultiPoly>,
    /// Symbols that never vanish (free parameters under nonvanishing side
    /// conditions); monomials in them are invertible.
    pub nonvanishing: BTreeSet<Symbol>,
    /// Branches where this polynomial reduces to identically zero are pruned.
    pub guard: Option<MultiPoly>,
    pub max_depth: usize,
}

impl Problem {
    #[cfg(test)]
    pub fn new(unknowns: Vec<Symbol>, equations: Vec<MultiPoly>) -> Self {
        Problem {
            unknowns,
            equations,
            nonvanishing: BTreeSet::new(),
            guard: None,
            max_depth: 16,
        }
    }
}

/// A solved branch: assignments for some unknowns; the rest are free.
#[derive(Clone, Debug)]
pub struct Leaf {
    pub assignments: BTreeMap<Symbol, Assigned>,
    pub label: String,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub leaves: Vec<Leaf>,
    /// For each dead branch, what contradicted it (used as a diagnostic when
    /// no branch survives).
    pub contradictions: Vec<String>,
}

pub fn solve(problem: &Problem) -> Result<Outcome, SolveError> {
    let mut out = Outcome::default();
    let state = State {
        assignments: BTreeMap::new(),
        equations: problem.equations.iter().map(|p| p.monic()).collect(),
        label: Vec::new(),
    };
    explore(problem, state, 0, &mut out)?;
    // dedupe leaves reached along different split paths
    let mut seen: BTreeSet<Vec<(Symbol, Assigned)>> = BTreeSet::new();
    let mut deduped: Vec<Leaf> = Vec::new();
    for leaf in out.leaves {
        let key: Vec<(Symbol, Assigned)> = leaf
            .assignments
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if seen.insert(key) {
            deduped.push(leaf);
        }
    }
    // absorb leaves that are specializations of another leaf
    deduped.sort_by_key(|l| (l.assignments.len(), l.label.clone()));
    let mut kept: Vec<Leaf> = Vec::new();
    for leaf in deduped {
        if !kept.iter().any(|k| covers(k, &leaf)) {
            kept.push(leaf);
        }
    }
    kept.sort_by(|a, b| a.label.cmp(&b.label));
    out.leaves = kept;
    out.contradictions.sort();
    out.contradictions.dedup();
    Ok(out)
}

/// `general` covers `special` when every constraint of `general` holds inside
/// `special`: for each assignment v := g of `general`, `special` also assigns
/// v and its value equals g reduced by `special`'s assignments.
fn covers(general: &Leaf, special: &Leaf) -> bool {
    for (v, g) in &general.assignments {
        let Some(s) = special.assignments.get(v) else {
            return false;
        };
        let mut reduced = g.clone();
        for (y, w) in &special.assignments {
            reduced = substitute_assigned(&reduced, y, w);
        }
        // g/gd == sn/sd as rational functions
        if reduced.num.mul(&s.den) != s.num.mul(&reduced.den) {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug)]
struct State {
    assignments: BTreeMap<Symbol, Assigned>,
    equations: Vec<MultiPoly>,
    label: Vec<String>,
}

impl State {
    /// Install `x := num/den`, keeping every stored assignment fully reduced
    /// (no assigned symbol ever appears in another assignment's value).
    fn assign(&mut self, x: &Symbol, num: MultiPoly, den: MultiPoly) {
        let mut value = Assigned { num, den };
        // reduce the new value by existing assignments
        for (y, w) in self.assignments.clone() {
            value = substitute_assigned(&value, &y, &w);
        }
        // reduce existing assignments by the new one
        for v in self.assignments.values_mut() {
            *v = substitute_assigned(v, x, &value);
        }
        self.assignments.insert(x.clone(), value);
    }

    fn reduce(&self, p: &MultiPoly) -> MultiPoly {
        let mut q = p.clone();
        for (x, v) in &self.assignments {
            if q.degree_in(x) != 0 {
                q = q.substitute_cleared(x, &v.num, &v.den);
            }
        }
        q
    }
}

fn substitute_assigned(v: &Assigned, y: &Symbol, w: &Assigned) -> Assigned {
    let mut out = v.clone();
    if out.num.degree_in(y) != 0 {
        let dy = out.num.degree_in(y) as u32;
        out.num = out.num.substitute_cleared(y, &w.num, &w.den);
        out.den = out.den.mul(&w.den.pow(dy));
    }
    if out.den.degree_in(y) != 0 {
        let dy = out.den.degree_in(y) as u32;
        out.den = out.den.substitute_cleared(y, &w.num, &w.den);
        out.num = out.num.mul(&w.den.pow(dy));
    }
    out
}

/// A monomial is invertible when all its symbols are certified nonzero.
fn invertible_monomial(m: &Monomial, nonvanishing: &BTreeSet<Symbol>) -> bool {
    m.0.keys().all(|s| nonvanishing.contains(s))
}

/// A polynomial is certified invertible when it is a nonzero constant or a
/// single monomial in certified-nonzero symbols.
fn certified_invertible(p: &MultiPoly, nonvanishing: &BTreeSet<Symbol>) -> bool {
    if let Some(c) = p.as_constant() {
        return !c.is_zero();
    }
    if p.terms.len() == 1 {
        let (m, _) = p.terms.iter().next().unwrap();
        return invertible_monomial(m, nonvanishing);
    }
    false
}

fn explore(
    problem: &Problem,
    mut state: State,
    depth: usize,
    out: &mut Outcome,
) -> Result<(), SolveError> {
    if depth > problem.max_depth {
        return Err(SolveError::BranchDepthExceeded(problem.max_depth));
    }
    // ---- propagation to fixpoint ----
    loop {
        // reduce by current assignments, strip certified content monomials,
        // and canonicalize
        let mut eqs: Vec<MultiPoly> = Vec::new();
        for eq in &state.equations {
            let mut m = state.reduce(eq);
            let content = m.content_monomial();
            let certified: Monomial = Monomial(
                content
                    .0
                    .iter()
                    .filter(|(s, _)| problem.nonvanishing.contains(*s))
                    .map(|(s, e)| (s.clone(), *e))
                    .collect(),
            );
            if !certified.is_one() {
                m = m.div_monomial(&certified, &BigRational::one());
            }
            let m = m.monic();
            if m.is_zero() {
                continue;
            }
            if !eqs.contains(&m) {
                eqs.push(m);
            }
        }
        eqs.sort();
        state.equations = eqs;

        // one action per pass; the reduce above keeps everything consistent
        let mut action: Option<(Symbol, MultiPoly, MultiPoly)> = None;
        for eq in &state.equations {
            if let Some(c) = eq.as_constant() {
                if !c.is_zero() {
                    out.contradictions.push(format!("{} = 0 is impossible", eq));
                    return Ok(());
                }
                continue;
            }
            // single monomial: strip certified symbols
            if eq.terms.len() == 1 {
                let (m, _) = eq.terms.iter().next().unwrap();
                let free: Vec<&Symbol> =
                    m.0.keys()
                        .filter(|s| !problem.nonvanishing.contains(*s))
                        .collect();
                match free.len() {
                    0 => {
                        out.contradictions.push(format!(
                            "monomial {} in nonvanishing symbols must vanish",
                            eq
                        ));
                        return Ok(());
                    }
                    1 => {
                        action = Some((free[0].clone(), MultiPoly::zero(), MultiPoly::one()));
                        break;
                    }
                    _ => continue,
                }
            }
            // affine in some unknown with certified-invertible coefficient
            for x in &problem.unknowns {
                if state.assignments.contains_key(x) || eq.degree_in(x) == 0 {
                    continue;
                }
                if let Some((a, b)) = eq.affine_in(x) {
                    if certified_invertible(&a, &problem.nonvanishing) {
                        action = Some((x.clone(), b.neg(), a));
                        break;
                    }
                }
            }
            if action.is_some() {
                break;
            }
        }
        match action {
            Some((x, num, den)) => state.assign(&x, num, den),
            None => break,
        }
    }
    // ---- guard pruning ----
    if let Some(guard) = &problem.guard {
        if state.reduce(guard).is_zero() {
            out.contradictions
                .push("guard polynomial vanishes identically".to_string());
            return Ok(());
        }
    }
    // ---- leaf or split ----
    if state.equations.is_empty() {
        verify_leaf(problem, &state)?;
        out.leaves.push(Leaf {
            assignments: state.assignments,
            label: state.label.join(","),
        });
        return Ok(());
    }
    for eq in state.equations.clone() {
        if let Some(factors) = affine_factors(&eq, &problem.nonvanishing) {
            for f in factors {
                let mut branch = state.clone();
                branch.label.push(format!("{}=0", f));
                branch.equations.push(f);
                explore(problem, branch, depth + 1, out)?;
            }
            return Ok(());
        }
    }
    Err(SolveError::Irreducible(format!("{}", state.equations[0])))
}

/// Substituting the leaf assignments into the original system must yield
/// exact zeros; anything else is a bug in the moves above.
fn verify_leaf(problem: &Problem, state: &State) -> Result<(), SolveError> {
    for eq in &problem.equations {
        if !state.reduce(eq).is_zero() {
            return Err(SolveError::LeafVerification(format!("{}", eq)));
        }
    }
    Ok(())
}

/// Factor an equation into affine pieces suitable for case splitting:
/// the content monomial contributes its uncertified variables, and the
/// remainder must be affine or a univariate quadratic with rational roots.
pub fn affine_factors(p: &MultiPoly, nonvanishing: &BTreeSet<Symbol>) -> Option<Vec<MultiPoly>> {
    let content = p.content_monomial();
    let mut factors: Vec<MultiPoly> = Vec::new();
    for s in content.0.keys() {
        if !nonvanishing.contains(s) {
            factors.push(MultiPoly::var(s.clone()));
        }
    }
    let rest = p.div_monomial(&content, &BigRational::one());
    if let Some(c) = rest.as_constant() {
        if c.is_zero() || factors.is_empty() {
            return None;
        }
        return Some(factors);
    }
    let total_deg = rest
        .terms
        .keys()
        .map(|m| m.total_degree())
        .max()
        .unwrap_or(0);
    if total_deg == 1 {
        factors.push(rest);
        return Some(factors);
    }
    // univariate quadratic with rational roots
    let vars = rest.vars();
    if vars.len() == 1 && total_deg == 2 {
        let x = vars.into_iter().next().unwrap();
        let mut a = BigRational::zero();
        let mut b = BigRational::zero();
        let mut c = BigRational::zero();
        for (m, coeff) in &rest.terms {
            match m.degree_of(&x) {
                2 => a = coeff.clone(),
                1 => b = coeff.clone(),
                0 => c = coeff.clone(),
                _ => return None,
            }
        }
        let disc = &b * &b - BigRational::from_integer(4.into()) * &a * &c;
        let sq = rational_sqrt(&disc)?;
        let two_a = BigRational::from_integer(2.into()) * &a;
        for root in [(-&b + &sq) / &two_a, (-&b - &sq) / &two_a] {
            let mut f = MultiPoly::var(x.clone());
            f.add_term(Monomial::one(), -root);
            if !factors.contains(&f) {
                factors.push(f);
            }
        }
        return Some(factors);
    }
    None
}

/// Exact square root of a nonnegative rational, if it is a perfect square.
fn rational_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let n = int_sqrt(r.numer())?;
    let d = int_sqrt(r.denom())?;
    Some(BigRational::new(n, d))
}

fn int_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let s = n.sqrt();
    if &(&s * &s) == n {
        Some(s)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::MultiPoly;

    fn p(e: &Expr) -> MultiPoly {
        MultiPoly::from_expr(e).unwrap()
    }

    fn sym(name: &str) -> Symbol {
        Symbol::new(name)
    }

    #[test]
    fn linear_propagation_assigns_zero() {
        // 3x = 0, y - 2 = 0
        let x = Expr::var("x");
        let y = Expr::var("y");
        let prob = Problem::new(
            vec![sym("x"), sym("y")],
            vec![
                p(&Expr::mul2(Expr::int(3), x)),
                p(&Expr::add2(y, Expr::int(-2))),
            ],
        );
        let out = solve(&prob).unwrap();
        assert_eq!(out.leaves.len(), 1);
        let leaf = &out.leaves[0];
        assert_eq!(leaf.assignments[&sym("x")], Assigned::zero());
        assert_eq!(
            leaf.assignments[&sym("y")].num.as_constant().unwrap(),
            BigRational::from_integer(2.into())
        );
    }

    #[test]
    fn product_split_with_dedup() {
        // x*(y+1) = 0 and x*(y-1) = 0: branches {x=0} and {y=1,y=-1 impossible}
        let x = Expr::var("x");
        let y = Expr::var("y");
        let e1 = p(&Expr::mul2(x.clone(), Expr::add2(y.clone(), Expr::one())));
        let e2 = p(&Expr::mul2(x.clone(), Expr::add2(y.clone(), Expr::int(-1))));
        let prob = Problem::new(vec![sym("x"), sym("y")], vec![e1, e2]);
        let out = solve(&prob).unwrap();
        assert_eq!(out.leaves.len(), 1);
        assert_eq!(out.leaves[0].assignments[&sym("x")], Assigned::zero());
        assert!(!out.leaves[0].assignments.contains_key(&sym("y")));
    }

    #[test]
    fn quadratic_rational_roots_split() {
        // y^2 - 1 = 0 splits into y=1, y=-1
        let y = Expr::var("y");
        let e = p(&Expr::add2(Expr::pow(y, 2), Expr::int(-1)));
        let prob = Problem::new(vec![sym("y")], vec![e]);
        let out = solve(&prob).unwrap();
        assert_eq!(out.leaves.len(), 2);
    }

    #[test]
    fn inconsistency_reported() {
        // x = 0 and x - 1 = 0
        let x = Expr::var("x");
        let prob = Problem::new(
            vec![sym("x")],
            vec![p(&x), p(&Expr::add2(x.clone(), Expr::int(-1)))],
        );
        let out = solve(&prob).unwrap();
        assert!(out.leaves.is_empty());
        assert!(!out.contradictions.is_empty());
    }

    #[test]
    fn nonvanishing_coefficient_solves_affine() {
        // q*x - 1 = 0 with q certified nonzero: x = 1/q
        let e = p(&Expr::add2(
            Expr::mul2(Expr::var("q"), Expr::var("x")),
            Expr::int(-1),
        ));
        let mut prob = Problem::new(vec![sym("x")], vec![e]);
        prob.nonvanishing.insert(sym("q"));
        let out = solve(&prob).unwrap();
        assert_eq!(out.leaves.len(), 1);
        let a = &out.leaves[0].assignments[&sym("x")];
        assert_eq!(a.num.as_constant().unwrap(), BigRational::one());
        assert_eq!(a.den, MultiPoly::var(sym("q")));
    }

    #[test]
    fn monomial_with_nonvanishing_factor_contradicts() {
        // q = 0 with q nonvanishing: dead branch
        let mut prob = Problem::new(vec![], vec![p(&Expr::var("q"))]);
        prob.nonvanishing.insert(sym("q"));
        let out = solve(&prob).unwrap();
        assert!(out.leaves.is_empty());
        assert!(!out.contradictions.is_empty());
    }

    #[test]
    fn guard_prunes_branches() {
        // x*(x-1) = 0 with guard x: branch x=0 dies
        let x = Expr::var("x");
        let e = p(&Expr::mul2(x.clone(), Expr::add2(x.clone(), Expr::int(-1))));
        let mut prob = Problem::new(vec![sym("x")], vec![e]);
        prob.guard = Some(p(&x));
        let out = solve(&prob).unwrap();
        assert_eq!(out.leaves.len(), 1);
        let a = &out.leaves[0].assignments[&sym("x")];
        assert_eq!(a.num.as_constant().unwrap(), BigRational::one());
    }

    #[test]
    fn irreducible_equation_is_reported() {
        // x^2 + y^2 - 1 = 0 has no affine factorization over the rationals
        let e = p(&Expr::add(vec![
            Expr::pow(Expr::var("x"), 2),
            Expr::pow(Expr::var("y"), 2),
            Expr::int(-1),
        ]));
        let prob = Problem::new(vec![sym("x"), sym("y")], vec![e]);
        match solve(&prob) {
            Err(SolveError::Irreducible(msg)) => assert!(msg.contains("x^2")),
            other => panic!("expected Irreducible, got {other:?}"),
        }
    }

    #[test]
    fn chained_substitution_is_fully_reduced() {
        // z - x*y = 0, then y - 2 = 0, then x = 0 => z must reduce to 0
        let e1 = p(&Expr::sub(
            Expr::var("z"),
            Expr::mul2(Expr::var("x"), Expr::var("y")),
        ));
        let e2 = p(&Expr::add2(Expr::var("y"), Expr::int(-2)));
        let e3 = p(&Expr::var("x"));
        let prob = Problem::new(vec![sym("x"), sym("y"), sym("z")], vec![e1, e2, e3]);
        let out = solve(&prob).unwrap();
        assert_eq!(out.leaves.len(), 1);
        let leaf = &out.leaves[0];
        assert!(leaf.assignments[&sym("z")].num.is_zero());
    }
}
