//! Lie algebras by structure constants, adjoint matrices, and exact matrix
//! exponentials of adjoint matrices for inner automorphisms.
//!
//! Structure constants are stored as expressions so a symbolic lattice
//! parameter `h` can ride along (the Toda algebra has brackets with 2/h);
//! exactness checks instantiate `h` to a rational first.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Map, Value};

use std::fmt;

use thiserror::Error;

use crate::expr::{self, Expr, ExprError, Symbol};

#[derive(Debug, Error)]
pub enum LieError {
    #[error("generator index {0} out of range 1..={1}")]
    IndexOutOfRange(usize, usize),
    #[error("structure constant c[{i}][{j}][{k}] does not reduce to a rational: {value}")]
    NonRationalConstant {
        i: usize,
        j: usize,
        k: usize,
        value: String,
    },
    #[error(
        "matrix exponential unsupported: minimal polynomial {0} has no full rational factorization"
    )]
    UnsupportedExp(String),
    #[error("invalid Lie algebra JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Finite-dimensional Lie algebra given by its structure constants
/// `c[i][j][k]`, meaning `[X_i, X_j] = sum_k c[i][j][k] X_k` (0-indexed).
#[derive(Clone, Debug)]
pub struct LieAlgebra {
    pub dim: usize,
    pub basis: Vec<String>,
    c: Vec<Vec<Vec<Expr>>>,
}

/// Adjoint matrix of one generator: `C(i)[k][j] = c[i][j][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointMatrix {
    pub generator: usize,
    pub entries: Vec<Vec<Expr>>,
}

/// Outcome of the antisymmetry / Jacobi validation.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub antisymmetry_violations: Vec<(usize, usize, usize)>,
    pub jacobi_violations: Vec<(usize, usize, usize, usize)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.antisymmetry_violations.is_empty() && self.jacobi_violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid Lie algebra");
        }
        for (i, j, k) in &self.antisymmetry_violations {
            writeln!(
                f,
                "antisymmetry violated at c[{}][{}][{}]",
                i + 1,
                j + 1,
                k + 1
            )?;
        }
        for (i, j, k, l) in &self.jacobi_violations {
            writeln!(
                f,
                "Jacobi identity violated at (i,j,k,l)=({},{},{},{})",
                i + 1,
                j + 1,
                k + 1,
                l + 1
            )?;
        }
        Ok(())
    }
}

impl LieAlgebra {
    pub fn new(dim: usize, basis: Vec<String>, c: Vec<Vec<Vec<Expr>>>) -> Self {
        assert_eq!(basis.len(), dim);
        assert_eq!(c.len(), dim);
        LieAlgebra { dim, basis, c }
    }

    /// Build from a bracket list: entries (i, j, k, coeff) meaning
    /// `[X_i, X_j]` has coefficient coeff on `X_k` (1-indexed); the
    /// antisymmetric completion is automatic.
    pub fn from_brackets(
        dim: usize,
        basis: Vec<String>,
        brackets: &[(usize, usize, usize, Expr)],
    ) -> Self {
        let mut c = vec![vec![vec![Expr::zero(); dim]; dim]; dim];
        for (i, j, k, coeff) in brackets {
            let (i, j, k) = (i - 1, j - 1, k - 1);
            c[i][j][k] = Expr::add2(c[i][j][k].clone(), coeff.clone());
            c[j][i][k] = Expr::add2(c[j][i][k].clone(), Expr::neg(coeff.clone()));
        }
        LieAlgebra { dim, basis, c }
    }

    pub fn constant(&self, i: usize, j: usize, k: usize) -> &Expr {
        &self.c[i][j][k]
    }

    /// Structure constants with the lattice parameter instantiated; errors
    /// when an entry does not reduce to a rational.
    pub fn constants_at(&self, h: &BigRational) -> Result<Vec<Vec<Vec<BigRational>>>, LieError> {
        let hsym = Symbol::new("h");
        let hval = Expr::Rat(h.clone());
        let mut out = vec![vec![vec![BigRational::zero(); self.dim]; self.dim]; self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    let e = self.c[i][j][k].substitute1(&hsym, &hval);
                    match e.as_rat() {
                        Some(r) => out[i][j][k] = r.clone(),
                        None => {
                            return Err(LieError::NonRationalConstant {
                                i: i + 1,
                                j: j + 1,
                                k: k + 1,
                                value: e.to_string(),
                            })
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Antisymmetry exactly on the symbolic level; Jacobi exactly after
    /// instantiating h (the conclusions are h-independent, so any nonzero
    /// rational works).
    pub fn check(&self, h: &BigRational) -> Result<ValidationReport, LieError> {
        let mut report = ValidationReport::default();
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    let s = Expr::add2(self.c[i][j][k].clone(), self.c[j][i][k].clone());
                    if !s.is_zero() {
                        report.antisymmetry_violations.push((i, j, k));
                    }
                }
            }
        }
        let c = self.constants_at(h)?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    for l in 0..self.dim {
                        let mut sum = BigRational::zero();
                        for m in 0..self.dim {
                            sum += &c[i][j][m] * &c[m][k][l]
                                + &c[j][k][m] * &c[m][i][l]
                                + &c[k][i][m] * &c[m][j][l];
                        }
                        if !sum.is_zero() {
                            report.jacobi_violations.push((i, j, k, l));
                        }
                    }
                }
            }
        }
        Ok(report)
    }

    /// Adjoint matrix `C(i)[k][j] = c[i][j][k]` of the 1-indexed generator.
    pub fn adjoint(&self, i: usize) -> Result<AdjointMatrix, LieError> {
        if i == 0 || i > self.dim {
            return Err(LieError::IndexOutOfRange(i, self.dim));
        }
        let gi = i - 1;
        let entries = (0..self.dim)
            .map(|k| (0..self.dim).map(|j| self.c[gi][j][k].clone()).collect())
            .collect();
        Ok(AdjointMatrix {
            generator: i,
            entries,
        })
    }

    pub fn adjoint_at(&self, i: usize, h: &BigRational) -> Result<Vec<Vec<BigRational>>, LieError> {
        let adj = self.adjoint(i)?;
        let hsym = Symbol::new("h");
        let hval = Expr::Rat(h.clone());
        adj.entries
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, e)| {
                        let r = e.substitute1(&hsym, &hval);
                        r.as_rat()
                            .cloned()
                            .ok_or_else(|| LieError::NonRationalConstant {
                                i,
                                j: j + 1,
                                k: k + 1,
                                value: r.to_string(),
                            })
                    })
                    .collect()
            })
            .collect()
    }

    /// Change of basis `X'_j = sum_i S[i][j] X_i` (S rational, invertible);
    /// produces an isomorphic algebra, helpful for generating valid test
    /// algebras.
    pub fn transform_basis(
        &self,
        s: &[Vec<BigRational>],
        h: &BigRational,
    ) -> Result<LieAlgebra, LieError> {
        let c = self.constants_at(h)?;
        let n = self.dim;
        let sinv = invert_rational(&s.to_vec()).expect("basis transform must be invertible");
        let mut c2 = vec![vec![vec![BigRational::zero(); n]; n]; n];
        // [X'_a, X'_b] = S[i][a] S[j][b] c[i][j][k] X_k = ... (Sinv[l][k]) X'_l
        for a in 0..n {
            for b in 0..n {
                for k in 0..n {
                    let mut acc = BigRational::zero();
                    for i in 0..n {
                        for j in 0..n {
                            if !c[i][j][k].is_zero() {
                                acc += &s[i][a] * &s[j][b] * &c[i][j][k];
                            }
                        }
                    }
                    if !acc.is_zero() {
                        for l in 0..n {
                            let v = &sinv[l][k] * &acc;
                            c2[a][b][l] += v;
                        }
                    }
                }
            }
        }
        let cexpr = c2
            .into_iter()
            .map(|p| {
                p.into_iter()
                    .map(|q| q.into_iter().map(Expr::Rat).collect())
                    .collect()
            })
            .collect();
        Ok(LieAlgebra::new(n, self.basis.clone(), cexpr))
    }

    // ---- JSON ----

    /// File format:
    ///
    /// ```text
    /// {"dim": n, "basis": [names], "brackets":
    ///   [{"i": 2, "j": 5, "coeffs": {"1": "-2/h"}}, ...]}
    /// ```
    ///
    /// Omitted brackets are zero; only i < j entries are expected and the
    /// antisymmetric completion is automatic.
    pub fn from_json(v: &Value) -> Result<LieAlgebra, LieError> {
        let obj = v
            .as_object()
            .ok_or_else(|| LieError::Json("expected an object".into()))?;
        let dim = obj
            .get("dim")
            .and_then(|d| d.as_u64())
            .ok_or_else(|| LieError::Json("missing dim".into()))? as usize;
        let basis: Vec<String> = match obj.get("basis") {
            Some(b) => b
                .as_array()
                .ok_or_else(|| LieError::Json("basis must be an array".into()))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .map(|s| s.to_string())
                        .ok_or_else(|| LieError::Json("basis names must be strings".into()))
                })
                .collect::<Result<_, _>>()?,
            None => (1..=dim).map(|i| format!("X{i}")).collect(),
        };
        if basis.len() != dim {
            return Err(LieError::Json(format!(
                "basis has {} names for dim {}",
                basis.len(),
                dim
            )));
        }
        let mut brackets = Vec::new();
        if let Some(brs) = obj.get("brackets") {
            let brs = brs
                .as_array()
                .ok_or_else(|| LieError::Json("brackets must be an array".into()))?;
            for br in brs {
                let br = br
                    .as_object()
                    .ok_or_else(|| LieError::Json("bracket entries must be objects".into()))?;
                let i = br
                    .get("i")
                    .and_then(|x| x.as_u64())
                    .ok_or_else(|| LieError::Json("bracket missing i".into()))?
                    as usize;
                let j = br
                    .get("j")
                    .and_then(|x| x.as_u64())
                    .ok_or_else(|| LieError::Json("bracket missing j".into()))?
                    as usize;
                if i == 0 || i > dim || j == 0 || j > dim {
                    return Err(LieError::Json(format!(
                        "bracket index ({i},{j}) out of range"
                    )));
                }
                let coeffs = br
                    .get("coeffs")
                    .and_then(|x| x.as_object())
                    .ok_or_else(|| LieError::Json("bracket missing coeffs".into()))?;
                for (k, cv) in coeffs {
                    let k: usize = k
                        .parse()
                        .map_err(|_| LieError::Json(format!("bad coefficient index {k}")))?;
                    if k == 0 || k > dim {
                        return Err(LieError::Json(format!(
                            "coefficient index {k} out of range"
                        )));
                    }
                    let e = parse_coeff(cv)?;
                    brackets.push((i, j, k, e));
                }
            }
        }
        Ok(LieAlgebra::from_brackets(dim, basis, &brackets))
    }

    pub fn to_json(&self) -> Value {
        let mut brackets = Vec::new();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let mut coeffs = Map::new();
                for k in 0..self.dim {
                    if !self.c[i][j][k].is_zero() {
                        coeffs.insert((k + 1).to_string(), coeff_to_json(&self.c[i][j][k]));
                    }
                }
                if !coeffs.is_empty() {
                    brackets.push(json!({"i": i + 1, "j": j + 1, "coeffs": coeffs}));
                }
            }
        }
        json!({"dim": self.dim, "basis": self.basis, "brackets": brackets})
    }
}

/// Coefficients in algebra files are rational strings, possibly divided by h:
/// "-2/h" parses as (-2)/h, "3/4" as the rational, "2/3h" is not supported.
fn parse_coeff(v: &Value) -> Result<Expr, LieError> {
    if let Some(s) = v.as_str() {
        if let Some((num, den)) = s.split_once('/') {
            if den.trim() == "h" {
                let n = expr::json::rat_from_string(num.trim())
                    .map_err(|e| LieError::Json(e.to_string()))?;
                return Ok(Expr::div(Expr::Rat(n), Expr::var("h")));
            }
        }
        return Ok(Expr::Rat(
            expr::json::rat_from_string(s).map_err(|e| LieError::Json(e.to_string()))?,
        ));
    }
    if let Some(i) = v.as_i64() {
        return Ok(Expr::int(i));
    }
    // fall back to the full expression AST
    Expr::from_json(v).map_err(|e| LieError::Json(e.to_string()))
}

fn coeff_to_json(e: &Expr) -> Value {
    if let Expr::Rat(r) = e {
        return Value::String(expr::json::rat_to_string(r));
    }
    if let Expr::Div(n, d) = e {
        if let (Expr::Rat(r), Expr::Var(s)) = (&**n, &**d) {
            if s.name == "h" {
                return Value::String(format!("{}/h", expr::json::rat_to_string(r)));
            }
        }
    }
    // 2/h normalizes to Mul(2, Div(1,h)) in some build paths; cover it
    e.to_json()
}

// ---------------------------------------------------------------------------
// exact rational linear algebra
// ---------------------------------------------------------------------------

pub type QMatrix = Vec<Vec<BigRational>>;

pub fn qmat_zero(n: usize) -> QMatrix {
    vec![vec![BigRational::zero(); n]; n]
}

pub fn qmat_identity(n: usize) -> QMatrix {
    let mut m = qmat_zero(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = BigRational::one();
    }
    m
}

pub fn qmat_mul(a: &QMatrix, b: &QMatrix) -> QMatrix {
    let n = a.len();
    let mut out = qmat_zero(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if !b[k][j].is_zero() {
                    let add = &a[i][k] * &b[k][j];
                    out[i][j] += add;
                }
            }
        }
    }
    out
}

pub fn qmat_add(a: &QMatrix, b: &QMatrix) -> QMatrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn qmat_scale(a: &QMatrix, c: &BigRational) -> QMatrix {
    a.iter()
        .map(|r| r.iter().map(|x| x * c).collect())
        .collect()
}

/// Solve the square system A x = b by Gaussian elimination; None when A is
/// singular.
pub fn qmat_solve(a: &QMatrix, b: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x /= p.clone();
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for cc in col..=n {
                    let sub = &f * &m[col][cc];
                    m[r][cc] -= sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

pub fn invert_rational(a: &QMatrix) -> Option<QMatrix> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![BigRational::zero(); n];
        e[j] = BigRational::one();
        cols.push(qmat_solve(a, &e)?);
    }
    let mut out = qmat_zero(n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            out[i][j] = col[i].clone();
        }
    }
    Some(out)
}

/// Least-squares-free exact solve of a possibly overdetermined system
/// (rows x cols); returns None when inconsistent or underdetermined columns
/// remain unresolved (the caller treats both as failure).
pub fn qmat_solve_overdetermined(
    rows: &[Vec<BigRational>],
    rhs: &[BigRational],
) -> Option<Vec<BigRational>> {
    let nrows = rows.len();
    if nrows == 0 {
        return None;
    }
    let ncols = rows[0].len();
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();
    let mut pivot_rows: Vec<usize> = Vec::new();
    let mut lead = 0usize;
    for col in 0..ncols {
        let Some(pr) = (lead..nrows).find(|&r| !m[r][col].is_zero()) else {
            return None; // column has no pivot: underdetermined
        };
        m.swap(lead, pr);
        let p = m[lead][col].clone();
        for x in m[lead].iter_mut() {
            *x /= p.clone();
        }
        for r in 0..nrows {
            if r != lead && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for cc in 0..=ncols {
                    let sub = &f * &m[lead][cc];
                    m[r][cc] -= sub;
                }
            }
        }
        pivot_rows.push(lead);
        lead += 1;
    }
    // consistency: all remaining rows must be zero
    for r in lead..nrows {
        if m[r].iter().any(|x| !x.is_zero()) {
            return None;
        }
    }
    let mut out = vec![BigRational::zero(); ncols];
    for (col, &pr) in pivot_rows.iter().enumerate() {
        out[col] = m[pr][ncols].clone();
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// exact matrix exponential
// ---------------------------------------------------------------------------

/// Exact e^{lambda M} for a rational square matrix whose minimal polynomial
/// factors completely over the rationals. Covers nilpotent matrices (root 0
/// with multiplicity) and semisimple rational spectra, and mixtures of both:
/// entries come out as polynomials in lambda times exp(r*lambda).
pub fn matrix_exp(m: &QMatrix, lambda: &Symbol) -> Result<Vec<Vec<Expr>>, LieError> {
    let n = m.len();
    let minpoly = minimal_polynomial(m);
    let roots =
        rational_roots(&minpoly).ok_or_else(|| LieError::UnsupportedExp(poly_display(&minpoly)))?;
    // spectral projectors onto generalized eigenspaces by partial fractions:
    // 1/p(x) = sum_i sum_k c_ik / (x - r_i)^k, so
    // P_i = A_i(M) * prod_{j != i} (M - r_j)^{m_j},
    // A_i(x) = sum_k c_ik (x - r_i)^{m_i - k}.
    let lam = Expr::Var(lambda.clone());
    let mut total: Vec<Vec<Expr>> = vec![vec![Expr::zero(); n]; n];
    for (idx, (root, mult)) in roots.iter().enumerate() {
        // q_i(x) = p(x) / (x - r_i)^{m_i}; series of 1/q_i at r_i
        let mut q = minpoly.clone();
        for _ in 0..*mult {
            q = deflate(&q, root);
        }
        let series = inverse_series_at(&q, root, *mult);
        // A_i(M) * q_i(M)
        let shifted = qmat_sub_scalar(m, root);
        let mut ai_qi = qmat_zero(n);
        for (k, c) in series.iter().enumerate() {
            // term c * (M - r_i)^k * q_i(M)
            if c.is_zero() {
                continue;
            }
            let mut term = eval_poly_matrix(&q, m);
            for _ in 0..k {
                term = qmat_mul(&term, &shifted);
            }
            ai_qi = qmat_add(&ai_qi, &qmat_scale(&term, c));
        }
        let projector = ai_qi;
        // e^{lambda M} P_i = e^{r_i lambda} sum_{s<m_i} lambda^s/s! (M-r_i)^s P_i
        let mut nil_power = projector.clone();
        let mut factorial = BigRational::one();
        let mut block: Vec<Vec<Expr>> = vec![vec![Expr::zero(); n]; n];
        for s in 0..*mult {
            if s > 0 {
                nil_power = qmat_mul(&shifted, &nil_power);
                factorial *= BigRational::from_integer((s as i64).into());
            }
            let lam_pow = Expr::pow(lam.clone(), s as i64);
            for i in 0..n {
                for j in 0..n {
                    if nil_power[i][j].is_zero() {
                        continue;
                    }
                    let coeff = &nil_power[i][j] / &factorial;
                    block[i][j] = Expr::add2(
                        block[i][j].clone(),
                        Expr::mul2(Expr::Rat(coeff), lam_pow.clone()),
                    );
                }
            }
        }
        let phase = if root.is_zero() {
            Expr::one()
        } else {
            Expr::exp(Expr::mul2(Expr::Rat(root.clone()), lam.clone()))
        };
        for i in 0..n {
            for j in 0..n {
                if !block[i][j].is_zero() {
                    total[i][j] = Expr::add2(
                        total[i][j].clone(),
                        Expr::mul2(phase.clone(), block[i][j].clone()),
                    );
                }
            }
        }
        let _ = idx;
    }
    Ok(total)
}

/// Monic minimal polynomial coefficients, low degree first.
fn minimal_polynomial(m: &QMatrix) -> Vec<BigRational> {
    let n = m.len();
    // stack powers of M as vectors until linearly dependent
    let mut powers: Vec<QMatrix> = vec![qmat_identity(n)];
    loop {
        let next = qmat_mul(powers.last().unwrap(), m);
        // solve sum_k a_k M^k = next for the a_k by flattening
        let k = powers.len();
        let rows: Vec<Vec<BigRational>> = (0..n * n)
            .map(|idx| {
                (0..k)
                    .map(|p| powers[p][idx / n][idx % n].clone())
                    .collect()
            })
            .collect();
        let rhs: Vec<BigRational> = (0..n * n)
            .map(|idx| next[idx / n][idx % n].clone())
            .collect();
        if let Some(sol) = qmat_solve_overdetermined(&rows, &rhs) {
            // minimal polynomial: x^k - sum a_p x^p
            let mut coeffs: Vec<BigRational> = sol.into_iter().map(|a| -a).collect();
            coeffs.push(BigRational::one());
            return coeffs;
        }
        powers.push(next);
        assert!(powers.len() <= n + 1, "minimal polynomial search overran");
    }
}

/// All roots with multiplicity when the polynomial factors completely over
/// the rationals; None otherwise.
fn rational_roots(poly: &[BigRational]) -> Option<Vec<(BigRational, usize)>> {
    let mut p: Vec<BigRational> = poly.to_vec();
    let mut roots: Vec<(BigRational, usize)> = Vec::new();
    while p.len() > 1 {
        let root = find_rational_root(&p)?;
        p = deflate(&p, &root);
        match roots.iter_mut().find(|(r, _)| r == &root) {
            Some((_, m)) => *m += 1,
            None => roots.push((root, 1)),
        }
    }
    Some(roots)
}

fn find_rational_root(p: &[BigRational]) -> Option<BigRational> {
    // clear denominators to an integer polynomial
    use num_bigint::BigInt;
    let mut lcm = BigInt::from(1);
    for c in p {
        let d = c.denom();
        let g = num_integer::gcd(lcm.clone(), d.clone());
        lcm = lcm / g * d;
    }
    let ints: Vec<BigInt> = p
        .iter()
        .map(|c| (c * BigRational::from_integer(lcm.clone())).to_integer())
        .collect();
    // trailing zero coefficients mean root 0
    if ints[0].is_zero() {
        return Some(BigRational::zero());
    }
    let lead = ints.last().unwrap().clone();
    let tail = ints[0].clone();
    let pd = divisors(&tail);
    let qd = divisors(&lead);
    for pp in &pd {
        for qq in &qd {
            for sign in [1i64, -1] {
                let cand = BigRational::new(pp * BigInt::from(sign), qq.clone());
                if eval_poly(p, &cand).is_zero() {
                    return Some(cand);
                }
            }
        }
    }
    None
}

fn divisors(n: &num_bigint::BigInt) -> Vec<num_bigint::BigInt> {
    use num_bigint::BigInt;
    use num_traits::ToPrimitive;
    let n = n.abs();
    // minimal polynomial constants stay tiny in this domain; fall back to 1
    // and |n| when they do not fit in i64
    match n.to_i64() {
        Some(v) => {
            let mut out = Vec::new();
            let mut d = 1i64;
            while d * d <= v {
                if v % d == 0 {
                    out.push(BigInt::from(d));
                    if d != v / d {
                        out.push(BigInt::from(v / d));
                    }
                }
                d += 1;
            }
            out.sort();
            out
        }
        None => vec![BigInt::from(1), n],
    }
}

fn eval_poly(p: &[BigRational], x: &BigRational) -> BigRational {
    let mut acc = BigRational::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Divide p(x) by (x - root) exactly (root must be a root).
fn deflate(p: &[BigRational], root: &BigRational) -> Vec<BigRational> {
    let n = p.len();
    let mut out = vec![BigRational::zero(); n - 1];
    let mut carry = BigRational::zero();
    for k in (0..n - 1).rev() {
        carry = &p[k + 1] + &carry * root;
        out[k] = carry.clone();
    }
    out
}

/// Taylor coefficients of 1/q(x) at x = root, up to order `terms - 1`.
fn inverse_series_at(q: &[BigRational], root: &BigRational, terms: usize) -> Vec<BigRational> {
    // shift: s(y) = q(root + y), then invert the power series
    let deg = q.len() - 1;
    let mut shifted = vec![BigRational::zero(); deg + 1];
    // binomial expansion of q(root + y)
    for (k, c) in q.iter().enumerate() {
        // c * (root + y)^k
        let mut binom = BigRational::one();
        let mut root_pow = vec![BigRational::one()];
        for _ in 0..k {
            root_pow.push(root_pow.last().unwrap() * root);
        }
        for j in 0..=k {
            // C(k, j) root^{k-j} y^j
            if j > 0 {
                binom = binom * BigRational::from_integer(((k - j + 1) as i64).into())
                    / BigRational::from_integer((j as i64).into());
            } else {
                binom = BigRational::one();
            }
            if j <= deg {
                let add = c * &binom * &root_pow[k - j];
                shifted[j] += add;
            }
        }
    }
    // series inversion: b_0 = 1/s_0; b_m = -(sum_{k=1..m} s_k b_{m-k}) / s_0
    let s0 = shifted[0].clone();
    assert!(!s0.is_zero(), "q(root) must be nonzero");
    let mut b = vec![BigRational::zero(); terms];
    b[0] = s0.recip();
    for m in 1..terms {
        let mut acc = BigRational::zero();
        for k in 1..=m {
            if k < shifted.len() {
                acc += &shifted[k] * &b[m - k];
            }
        }
        b[m] = -acc / &s0;
    }
    // partial-fraction layout: A_i(x) = sum_k c_ik (x-r)^{m-k} with
    // c_ik = b_{m-k}; returning b as-is gives A_i(M) = sum_s b_s (M-r)^s
    b
}

fn qmat_sub_scalar(m: &QMatrix, r: &BigRational) -> QMatrix {
    let mut out = m.clone();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] -= r;
    }
    out
}

fn eval_poly_matrix(p: &[BigRational], m: &QMatrix) -> QMatrix {
    let n = m.len();
    let mut acc = qmat_zero(n);
    for c in p.iter().rev() {
        acc = qmat_mul(&acc, m);
        for (i, row) in acc.iter_mut().enumerate() {
            row[i] += c;
        }
    }
    acc
}

fn poly_display(p: &[BigRational]) -> String {
    let mut parts = Vec::new();
    for (k, c) in p.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        parts.push(match k {
            0 => format!("{c}"),
            1 => format!("{c}*x"),
            _ => format!("{c}*x^{k}"),
        });
    }
    parts.join(" + ")
}

/// The point-symmetry algebra of the Toda lattice, with the lattice step
/// kept symbolic: `[X2,X5] = -(2/h) X1`, `[X3,X4] = X1`, `[X3,X5] = X3`,
/// `[X4,X5] = -X4`.
pub fn toda_algebra() -> LieAlgebra {
    let two_over_h = Expr::div(Expr::int(2), Expr::var("h"));
    LieAlgebra::from_brackets(
        5,
        (1..=5).map(|i| format!("X{i}")).collect(),
        &[
            (2, 5, 1, Expr::neg(two_over_h)),
            (3, 4, 1, Expr::one()),
            (3, 5, 3, Expr::one()),
            (4, 5, 4, Expr::int(-1)),
        ],
    )
}
