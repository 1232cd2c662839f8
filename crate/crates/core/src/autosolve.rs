//! Automorphisms of a Lie algebra as solutions of the matrix equations
//! `Phi C(i) = sum_l Phi[l][i] C(l) Phi`, solved by constraint propagation and
//! case splitting, then simplified by inner automorphisms
//! `Phi -> e^{l C(i)} Phi`.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{Expr, MultiPoly, QEvalCtx, Symbol};
use crate::liealg::{matrix_exp, LieAlgebra, LieError, QMatrix};
use crate::polysolve::{self, affine_factors, Problem, SolveError};

#[derive(Debug, Error)]
pub enum AutError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("family failed the determinant spot check (branch {0})")]
    DegenerateFamily(String),
    #[error("expression error: {0}")]
    Expr(#[from] crate::expr::ExprError),
}

/// One branch of automorphism solutions: a matrix over free parameters,
/// the side conditions that keep it invertible, and how it was reached.
#[derive(Clone, Debug)]
pub struct AutFamily {
    pub dim: usize,
    /// Entries are expressions in the free parameters only.
    pub matrix: Vec<Vec<Expr>>,
    /// Free parameters p1, p2, ... in row-major order of first appearance.
    pub free: Vec<Symbol>,
    /// Which matrix position each free parameter came from.
    pub positions: Vec<(usize, usize)>,
    /// Expressions that must not vanish (always includes the det factors).
    pub nonvanishing: Vec<Expr>,
    /// Residual equations (empty when the solver closed the branch).
    pub equations: Vec<Expr>,
    pub branch: String,
    /// Parameters eliminated by inner normalization, with the generator used.
    pub eliminated: Vec<(String, usize)>,
    /// Set when normalize_inner could not exponentiate some generator.
    pub normalization_warning: Option<String>,
}

impl AutFamily {
    /// Instantiate the free parameters and return the rational matrix.
    pub fn instantiate(&self, values: &BTreeMap<Symbol, BigRational>) -> Result<QMatrix, AutError> {
        let ctx = QEvalCtx {
            vars: values.clone(),
            sites: BTreeMap::new(),
        };
        let mut out = vec![vec![BigRational::zero(); self.dim]; self.dim];
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[i][j] = e.eval_q(&ctx)?;
            }
        }
        Ok(out)
    }

    /// Does a concrete rational matrix belong to this family? Free
    /// parameters are read off their defining positions and the rest of the
    /// matrix must match exactly.
    pub fn matches(&self, m: &QMatrix) -> bool {
        let mut values = BTreeMap::new();
        for (p, (i, j)) in self.free.iter().zip(&self.positions) {
            values.insert(p.clone(), m[*i][*j].clone());
        }
        let inst = match self.instantiate(&values) {
            Ok(x) => x,
            Err(_) => return false,
        };
        if &inst != m {
            return false;
        }
        // respect the nonvanishing side conditions
        let ctx = QEvalCtx {
            vars: values,
            sites: BTreeMap::new(),
        };
        self.nonvanishing
            .iter()
            .all(|g| matches!(g.eval_q(&ctx), Ok(v) if !v.is_zero()))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "branch": self.branch,
            "matrix": self.matrix.iter().map(|row| row.iter().map(|e| e.to_json()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "free": self.free.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
            "nonvanishing": self.nonvanishing.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
            "equations": self.equations.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
            "eliminated": self.eliminated.iter().map(|(p, i)| json!({"param": p, "generator": i})).collect::<Vec<_>>(),
        })
    }
}

/// Unknown b_ij (1-indexed display, row i column j).
pub fn b_sym(i: usize, j: usize) -> Symbol {
    Symbol::new(format!("b{}{}", i + 1, j + 1))
}

fn unknowns_row_major(n: usize) -> Vec<Symbol> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(b_sym(i, j));
        }
    }
    out
}

/// All scalar equations of `Phi C(i) = sum_l Phi[l][i] C(l) Phi` for
/// i = 1..n, deduplicated and scaled to a canonical leading coefficient.
/// Each equation has degree at most 2 in the b_ij.
pub fn generate_automorphism_system(
    algebra: &LieAlgebra,
    h: &BigRational,
) -> Result<Vec<MultiPoly>, AutError> {
    let n = algebra.dim;
    algebra.constants_at(h)?; // fail early on a symbolic h
                              // phi as a matrix of unknown symbols
    let phi: Vec<Vec<MultiPoly>> = (0..n)
        .map(|i| (0..n).map(|j| MultiPoly::var(b_sym(i, j))).collect())
        .collect();
    let adj: Vec<Vec<Vec<BigRational>>> = (1..=n)
        .map(|i| algebra.adjoint_at(i, h))
        .collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for i in 0..n {
        // lhs = Phi * C(i)
        let mut lhs = vec![vec![MultiPoly::zero(); n]; n];
        for r in 0..n {
            for cc in 0..n {
                let mut acc = MultiPoly::zero();
                for k in 0..n {
                    if !adj[i][k][cc].is_zero() {
                        acc = acc.add(&phi[r][k].scale(&adj[i][k][cc]));
                    }
                }
                lhs[r][cc] = acc;
            }
        }
        // rhs = sum_l b_{l i} C(l) * Phi
        let mut rhs = vec![vec![MultiPoly::zero(); n]; n];
        for l in 0..n {
            // C(l) * Phi
            for r in 0..n {
                for cc in 0..n {
                    let mut acc = MultiPoly::zero();
                    for k in 0..n {
                        if !adj[l][r][k].is_zero() {
                            acc = acc.add(&phi[k][cc].scale(&adj[l][r][k]));
                        }
                    }
                    if !acc.is_zero() {
                        let scaled = acc.mul(&MultiPoly::var(b_sym(l, i)));
                        rhs[r][cc] = rhs[r][cc].add(&scaled);
                    }
                }
            }
        }
        for r in 0..n {
            for cc in 0..n {
                let eq = lhs[r][cc].sub(&rhs[r][cc]).monic();
                if eq.is_zero() {
                    continue;
                }
                if seen.insert(eq.clone()) {
                    out.push(eq);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Result of propagating the purely linear consequences: zero assignments
/// plus the surviving equation set (reduced, canonical, sorted).
#[derive(Clone, Debug)]
pub struct LinearPropagation {
    pub zeros: Vec<Symbol>,
    pub values: BTreeMap<Symbol, BigRational>,
    pub remaining: Vec<MultiPoly>,
}

/// Repeatedly apply only the linear moves (single-monomial single-unknown
/// equations and equations linear in exactly one unknown with rational
/// coefficients), substituting as it goes.
pub fn propagate_linear(equations: &[MultiPoly]) -> LinearPropagation {
    let mut values: BTreeMap<Symbol, BigRational> = BTreeMap::new();
    let mut eqs: Vec<MultiPoly> = equations.to_vec();
    loop {
        // reduce by known values and canonicalize
        let mut next: Vec<MultiPoly> = Vec::new();
        for eq in &eqs {
            let mut q = eq.clone();
            for (x, v) in &values {
                if q.degree_in(x) != 0 {
                    q = q.substitute_cleared(x, &MultiPoly::constant(v.clone()), &MultiPoly::one());
                }
            }
            let q = q.monic();
            if q.is_zero() || next.contains(&q) {
                continue;
            }
            next.push(q);
        }
        next.sort();
        eqs = next;

        let mut action: Option<(Symbol, BigRational)> = None;
        for eq in &eqs {
            // single monomial in one unknown: that unknown is zero
            if eq.terms.len() == 1 {
                let (m, _) = eq.terms.iter().next().unwrap();
                let vars: Vec<&Symbol> = m.0.keys().collect();
                if vars.len() == 1 {
                    action = Some((vars[0].clone(), BigRational::zero()));
                    break;
                }
                continue;
            }
            // linear in exactly one unknown overall: a x + b = 0, a,b rational
            let vars = eq.vars();
            if vars.len() == 1 {
                let x = vars.into_iter().next().unwrap();
                if let Some((a, b)) = eq.affine_in(&x) {
                    if let (Some(av), Some(bv)) = (a.as_constant(), b.as_constant()) {
                        action = Some((x, -bv / av));
                        break;
                    }
                }
            }
        }
        match action {
            Some((x, v)) => {
                values.insert(x, v);
            }
            None => break,
        }
    }
    let zeros = values
        .iter()
        .filter(|(_, v)| v.is_zero())
        .map(|(k, _)| k.clone())
        .collect();
    LinearPropagation {
        zeros,
        values,
        remaining: eqs,
    }
}

/// Symbolic determinant of the unknown matrix, by cofactor expansion.
fn symbolic_det(n: usize) -> MultiPoly {
    fn det_rec(rows: &[usize], cols: &[usize]) -> MultiPoly {
        if rows.len() == 1 {
            return MultiPoly::var(b_sym(rows[0], cols[0]));
        }
        let mut acc = MultiPoly::zero();
        let r = rows[0];
        let rest_rows = &rows[1..];
        for (k, &c) in cols.iter().enumerate() {
            let rest_cols: Vec<usize> = cols
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, &x)| x)
                .collect();
            let minor = det_rec(rest_rows, &rest_cols);
            let term = minor.mul(&MultiPoly::var(b_sym(r, c)));
            if k % 2 == 0 {
                acc = acc.add(&term);
            } else {
                acc = acc.sub(&term);
            }
        }
        acc
    }
    let all: Vec<usize> = (0..n).collect();
    det_rec(&all, &all)
}

/// Solve the automorphism system into finitely many families with
/// nonvanishing determinant. See the module docs for the move set.
pub fn solve_automorphism_system(
    equations: &[MultiPoly],
    n: usize,
    seed: u64,
) -> Result<Vec<AutFamily>, AutError> {
    let det = symbolic_det(n);
    let problem = Problem {
        unknowns: unknowns_row_major(n),
        equations: equations.to_vec(),
        nonvanishing: BTreeSet::new(),
        guard: Some(det.clone()),
        max_depth: 16,
    };
    let outcome = polysolve::solve(&problem)?;
    let mut families = Vec::new();
    for leaf in &outcome.leaves {
        families.push(leaf_to_family(
            n,
            &leaf.assignments,
            &leaf.label,
            &det,
            seed,
        )?);
    }
    Ok(families)
}

fn leaf_to_family(
    n: usize,
    assignments: &BTreeMap<Symbol, polysolve::Assigned>,
    label: &str,
    det: &MultiPoly,
    seed: u64,
) -> Result<AutFamily, AutError> {
    // free parameters: unassigned unknowns in row-major order
    let mut free_positions: Vec<(Symbol, (usize, usize))> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let s = b_sym(i, j);
            if !assignments.contains_key(&s) {
                free_positions.push((s, (i, j)));
            }
        }
    }
    // rename p1, p2, ... in order of first appearance
    let rename: BTreeMap<Symbol, Expr> = free_positions
        .iter()
        .enumerate()
        .map(|(k, (s, _))| (s.clone(), Expr::var(format!("p{}", k + 1))))
        .collect();
    let mut matrix = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let s = b_sym(i, j);
            let raw = match assignments.get(&s) {
                Some(a) => a.to_expr(),
                None => Expr::Var(s),
            };
            matrix[i][j] = raw.substitute(&rename);
        }
    }
    let free: Vec<Symbol> = (1..=free_positions.len())
        .map(|k| Symbol::new(format!("p{k}")))
        .collect();
    let positions: Vec<(usize, usize)> = free_positions.iter().map(|(_, p)| *p).collect();

    // det on the family, then factor into nonvanishing conditions
    let mut det_fam = det.clone();
    for (x, v) in assignments {
        if det_fam.degree_in(x) != 0 {
            det_fam = det_fam.substitute_cleared(x, &v.num, &v.den);
        }
    }
    let det_fam_renamed = MultiPoly::from_expr(&det_fam.to_expr().substitute(&rename))?;
    let mut nonvanishing: Vec<Expr> = Vec::new();
    match affine_factors(&det_fam_renamed, &BTreeSet::new()) {
        Some(factors) => {
            for f in factors {
                let e = f.monic().to_expr();
                if !nonvanishing.contains(&e) {
                    nonvanishing.push(e);
                }
            }
        }
        None => nonvanishing.push(det_fam_renamed.monic().to_expr()),
    }

    let family = AutFamily {
        dim: n,
        matrix,
        free,
        positions,
        nonvanishing,
        equations: Vec::new(),
        branch: if label.is_empty() {
            "root".into()
        } else {
            label.to_string()
        },
        eliminated: Vec::new(),
        normalization_warning: None,
    };
    // determinant spot check: 5 random instantiations respecting the side
    // conditions must have det != 0
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 5 && attempts < 100 {
        attempts += 1;
        let values: BTreeMap<Symbol, BigRational> = family
            .free
            .iter()
            .map(|s| {
                use rand::Rng;
                let k: i64 = rng.gen_range(2..=40);
                let sign: i64 = if rng.gen_bool(0.5) { 1 } else { -1 };
                (s.clone(), BigRational::new((sign * k).into(), 20.into()))
            })
            .collect();
        let ctx = QEvalCtx {
            vars: values.clone(),
            sites: BTreeMap::new(),
        };
        if !family
            .nonvanishing
            .iter()
            .all(|g| matches!(g.eval_q(&ctx), Ok(v) if !v.is_zero()))
        {
            continue;
        }
        let m = family.instantiate(&values)?;
        if det_rational(&m).is_zero() {
            return Err(AutError::DegenerateFamily(family.branch.clone()));
        }
        checked += 1;
    }
    Ok(family)
}

pub fn det_rational(m: &QMatrix) -> BigRational {
    let n = m.len();
    let mut a = m.clone();
    let mut det = BigRational::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if p != col {
            a.swap(col, p);
            det = -det;
        }
        det *= a[col][col].clone();
        let pivot = a[col][col].clone();
        for r in (col + 1)..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = &a[r][col] / &pivot;
            for cc in col..n {
                let sub = &f * &a[col][cc];
                a[r][cc] -= sub;
            }
        }
    }
    det
}

/// Check the defining automorphism equation exactly for a concrete rational
/// matrix, including det != 0.
pub fn check_automorphism(
    algebra: &LieAlgebra,
    phi: &QMatrix,
    h: &BigRational,
) -> Result<bool, AutError> {
    let n = algebra.dim;
    if det_rational(phi).is_zero() {
        return Ok(false);
    }
    let c = algebra.constants_at(h)?;
    // c_{ij}^k phi[l][k] == phi[m][i] phi[r][j] c_{mr}^l for all i, j, l
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let mut lhs = BigRational::zero();
                for k in 0..n {
                    if !c[i][j][k].is_zero() {
                        lhs += &c[i][j][k] * &phi[l][k];
                    }
                }
                let mut rhs = BigRational::zero();
                for m in 0..n {
                    if phi[m][i].is_zero() {
                        continue;
                    }
                    for r in 0..n {
                        if !c[m][r][l].is_zero() && !phi[r][j].is_zero() {
                            rhs += &phi[m][i] * &phi[r][j] * &c[m][r][l];
                        }
                    }
                }
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Simplify a family by inner automorphisms Phi -> e^{lambda C(i)} Phi,
/// zeroing free-parameter entries that are affine in lambda with invertible
/// coefficient. The generator order follows the worked Toda example
/// (3, 4, 5, 2, then 1), extended with any remaining generators.
pub fn normalize_inner(
    family: &AutFamily,
    algebra: &LieAlgebra,
    h: &BigRational,
) -> Result<AutFamily, AutError> {
    let n = algebra.dim;
    let mut order: Vec<usize> = [3usize, 4, 5, 2, 1]
        .into_iter()
        .filter(|&i| i <= n)
        .collect();
    for i in 1..=n {
        if !order.contains(&i) {
            order.push(i);
        }
    }
    let lambda = Symbol::new("_lambda");
    let certified: BTreeSet<Symbol> = family
        .nonvanishing
        .iter()
        .filter_map(|e| match e {
            Expr::Var(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let mut current = family.clone();
    for &gen in &order {
        let cmat = match algebra.adjoint_at(gen, h) {
            Ok(m) => m,
            Err(e) => {
                current.normalization_warning = Some(e.to_string());
                return Ok(current);
            }
        };
        if cmat.iter().flatten().all(|x| x.is_zero()) {
            continue;
        }
        let emat = match matrix_exp(&cmat, &lambda) {
            Ok(m) => m,
            Err(e) => {
                current.normalization_warning = Some(e.to_string());
                return Ok(current);
            }
        };
        loop {
            // E = e^{lambda C(gen)} * Phi
            let prod = expr_mat_mul(&emat, &current.matrix);
            let mut eliminated: Option<Symbol> = None;
            'scan: for row in &prod {
                for entry in row {
                    // affine in lambda: entry = A*lambda + B with A invertible
                    let d1 = entry.differentiate(&lambda);
                    if d1.is_zero() || d1.contains(&lambda) {
                        continue;
                    }
                    let b = entry.substitute1(&lambda, &Expr::zero());
                    if b.is_zero() {
                        continue;
                    }
                    let Ok(a_poly) = MultiPoly::from_expr(&d1) else {
                        continue;
                    };
                    if !poly_invertible(&a_poly, &certified) {
                        continue;
                    }
                    // B must be a single eliminable parameter (times
                    // invertible factors)
                    let Ok(b_poly) = MultiPoly::from_expr(&b) else {
                        continue;
                    };
                    if b_poly.terms.len() != 1 {
                        continue;
                    }
                    let (mono, _) = b_poly.terms.iter().next().unwrap();
                    let eliminable: Vec<&Symbol> =
                        mono.0.keys().filter(|s| !certified.contains(*s)).collect();
                    if eliminable.len() == 1 && mono.degree_of(eliminable[0]) == 1 {
                        eliminated = Some(eliminable[0].clone());
                        break 'scan;
                    }
                }
            }
            match eliminated {
                Some(p) => {
                    // the inner flow reaches the slice where this parameter
                    // vanishes; take the slice
                    for row in current.matrix.iter_mut() {
                        for e in row.iter_mut() {
                            *e = e.substitute1(&p, &Expr::zero());
                        }
                    }
                    let idx = current.free.iter().position(|s| s == &p);
                    if let Some(idx) = idx {
                        current.free.remove(idx);
                        current.positions.remove(idx);
                    }
                    current.eliminated.push((p.name.clone(), gen));
                }
                None => break,
            }
        }
    }
    // re-rename surviving parameters p1, p2, ... in row-major order
    let mut renumber: BTreeMap<Symbol, Expr> = BTreeMap::new();
    let mut new_free = Vec::new();
    let mut new_positions = Vec::new();
    for (k, (old, pos)) in current
        .free
        .iter()
        .zip(&current.positions)
        .enumerate()
        .map(|(k, (s, p))| (k, (s.clone(), *p)))
        .collect::<Vec<_>>()
        .into_iter()
    {
        let fresh = Symbol::new(format!("p{}", k + 1));
        renumber.insert(old, Expr::Var(fresh.clone()));
        new_free.push(fresh);
        new_positions.push(pos);
    }
    for row in current.matrix.iter_mut() {
        for e in row.iter_mut() {
            *e = e.substitute(&renumber);
        }
    }
    current.nonvanishing = current
        .nonvanishing
        .iter()
        .map(|e| e.substitute(&renumber))
        .filter(|e| !matches!(e.as_rat(), Some(r) if !r.is_zero()))
        .collect();
    current.free = new_free;
    current.positions = new_positions;
    Ok(current)
}

fn poly_invertible(p: &MultiPoly, certified: &BTreeSet<Symbol>) -> bool {
    if let Some(c) = p.as_constant() {
        return !c.is_zero();
    }
    if p.terms.len() == 1 {
        let (m, _) = p.terms.iter().next().unwrap();
        return m.0.keys().all(|s| certified.contains(s));
    }
    false
}

pub fn expr_mat_mul(a: &[Vec<Expr>], b: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut out = vec![vec![Expr::zero(); m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut terms = Vec::new();
            for l in 0..k {
                if !a[i][l].is_zero() && !b[l][j].is_zero() {
                    terms.push(Expr::mul2(a[i][l].clone(), b[l][j].clone()));
                }
            }
            out[i][j] = Expr::add(terms);
        }
    }
    out
}

/// Convenience driver: generate, solve, and normalize in one call.
pub fn automorphism_families(
    algebra: &LieAlgebra,
    h: &BigRational,
    seed: u64,
) -> Result<Vec<AutFamily>, AutError> {
    let eqs = generate_automorphism_system(algebra, h)?;
    let raw = solve_automorphism_system(&eqs, algebra.dim, seed)?;
    raw.iter().map(|f| normalize_inner(f, algebra, h)).collect()
}
