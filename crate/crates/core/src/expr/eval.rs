//! Numeric (complex) and exact (rational) evaluation, plus randomized
//! identity testing backed by exact arithmetic on the rational fragment.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Expr, ExprError, Symbol};

/// Complex-valued evaluation context: values for symbols plus integer site
/// indices per lattice axis (consumed by `Seq` nodes).
#[derive(Clone, Debug, Default)]
pub struct EvalCtx {
    pub vars: BTreeMap<Symbol, Complex64>,
    pub sites: BTreeMap<String, i64>,
}

impl EvalCtx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, s: Symbol, v: impl Into<Complex64>) -> Self {
        self.vars.insert(s, v.into());
        self
    }

    pub fn site(mut self, axis: impl Into<String>, n: i64) -> Self {
        self.sites.insert(axis.into(), n);
        self
    }
}

/// Exact rational evaluation context.
#[derive(Clone, Debug, Default)]
pub struct QEvalCtx {
    pub vars: BTreeMap<Symbol, BigRational>,
    pub sites: BTreeMap<String, i64>,
}

const POLE_EPS: f64 = 1e-8;

impl Expr {
    /// Evaluate numerically in complex arithmetic. Denominators within
    /// `POLE_EPS` of zero report a pole.
    pub fn eval_c(&self, ctx: &EvalCtx) -> Result<Complex64, ExprError> {
        match self {
            Expr::Rat(r) => Ok(Complex64::new(rat_to_f64(r), 0.0)),
            Expr::Var(s) => ctx
                .vars
                .get(s)
                .copied()
                .ok_or_else(|| ExprError::UnboundVariable(s.to_string())),
            Expr::Seq(s) => {
                let site = ctx
                    .sites
                    .get(&s.axis)
                    .copied()
                    .ok_or_else(|| ExprError::UnboundSite(s.axis.clone()))?;
                Ok(Complex64::new(rat_to_f64(s.value_at(site)), 0.0))
            }
            Expr::Add(ts) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in ts {
                    acc += t.eval_c(ctx)?;
                }
                Ok(acc)
            }
            Expr::Mul(fs) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for f in fs {
                    acc *= f.eval_c(ctx)?;
                }
                Ok(acc)
            }
            Expr::Pow(b, k) => Ok(b.eval_c(ctx)?.powi(*k as i32)),
            Expr::Exp(a) => Ok(a.eval_c(ctx)?.exp()),
            Expr::Div(n, d) => {
                let dv = d.eval_c(ctx)?;
                if dv.norm() < POLE_EPS {
                    return Err(ExprError::Pole);
                }
                Ok(n.eval_c(ctx)? / dv)
            }
        }
    }

    /// Evaluate exactly in rational arithmetic; errors on `exp` nodes and on
    /// exact division by zero.
    pub fn eval_q(&self, ctx: &QEvalCtx) -> Result<BigRational, ExprError> {
        match self {
            Expr::Rat(r) => Ok(r.clone()),
            Expr::Var(s) => ctx
                .vars
                .get(s)
                .cloned()
                .ok_or_else(|| ExprError::UnboundVariable(s.to_string())),
            Expr::Seq(s) => {
                let site = ctx
                    .sites
                    .get(&s.axis)
                    .copied()
                    .ok_or_else(|| ExprError::UnboundSite(s.axis.clone()))?;
                Ok(s.value_at(site).clone())
            }
            Expr::Add(ts) => {
                let mut acc = BigRational::zero();
                for t in ts {
                    acc += t.eval_q(ctx)?;
                }
                Ok(acc)
            }
            Expr::Mul(fs) => {
                let mut acc = BigRational::from_integer(1.into());
                for f in fs {
                    acc *= f.eval_q(ctx)?;
                }
                Ok(acc)
            }
            Expr::Pow(b, k) => {
                let bv = b.eval_q(ctx)?;
                if *k < 0 && bv.is_zero() {
                    return Err(ExprError::Pole);
                }
                let mut acc = BigRational::from_integer(1.into());
                let base = if *k < 0 { bv.recip() } else { bv };
                for _ in 0..k.unsigned_abs() {
                    acc *= base.clone();
                }
                Ok(acc)
            }
            Expr::Exp(a) => {
                if a.is_zero() {
                    Ok(BigRational::from_integer(1.into()))
                } else {
                    Err(ExprError::NotRational)
                }
            }
            Expr::Div(n, d) => {
                let dv = d.eval_q(ctx)?;
                if dv.is_zero() {
                    return Err(ExprError::Pole);
                }
                Ok(n.eval_q(ctx)? / dv)
            }
        }
    }
}

fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
    })
}

/// Options for [`Expr::identically_zero`].
#[derive(Clone, Debug)]
pub struct IdentityOptions {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    /// Expressions that must not vanish at a sample point (singular loci of
    /// the equation under test); points hitting them are redrawn.
    pub singular: Vec<Expr>,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions {
            trials: 20,
            tol: 1e-9,
            seed: 42,
            singular: Vec::new(),
        }
    }
}

impl IdentityOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_singular(mut self, singular: Vec<Expr>) -> Self {
        self.singular = singular;
        self
    }
}

/// Draw a random rational from [-2, -0.1] U [0.1, 2]: k/20 with |k| in 2..=40.
fn sample_rational(rng: &mut ChaCha8Rng) -> BigRational {
    let k: i64 = rng.gen_range(2..=40);
    let sign: i64 = if rng.gen_bool(0.5) { 1 } else { -1 };
    BigRational::new((sign * k).into(), 20.into())
}

impl Expr {
    /// Randomized identity test: evaluate at `trials` random points, one draw
    /// per free symbol (and one integer site per `Seq` axis), avoiding the
    /// declared singular loci. For expressions in the rational fragment
    /// (no `exp`) the evaluation is exact and the value must be exactly zero;
    /// otherwise the maximum |value| must stay below `tol`.
    ///
    /// Errors with [`ExprError::Inconclusive`] when every redraw (10x
    /// oversampling) lands on a pole or singular locus.
    pub fn identically_zero(&self, opts: &IdentityOptions) -> Result<bool, ExprError> {
        let syms = self.symbols();
        let axes = self.seq_axes();
        let exact = !self.contains_exp();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut done = 0usize;
        let mut attempts = 0usize;
        let max_attempts = opts.trials * 10;
        while done < opts.trials {
            if attempts >= max_attempts {
                return Err(ExprError::Inconclusive);
            }
            attempts += 1;
            let mut qctx = QEvalCtx::default();
            for s in &syms {
                qctx.vars.insert(s.clone(), sample_rational(&mut rng));
            }
            for a in &axes {
                qctx.sites.insert(a.clone(), rng.gen_range(-6..=6));
            }
            // singular loci are checked exactly where possible
            let mut hit_singular = false;
            for g in &opts.singular {
                if let Ok(v) = g.eval_q(&qctx) {
                    if v.is_zero() {
                        hit_singular = true;
                        break;
                    }
                }
            }
            if hit_singular {
                continue;
            }
            if exact {
                match self.eval_q(&qctx) {
                    Ok(v) => {
                        if !v.is_zero() {
                            return Ok(false);
                        }
                        done += 1;
                    }
                    Err(ExprError::Pole) => continue,
                    Err(e) => return Err(e),
                }
            } else {
                let ctx = EvalCtx {
                    vars: qctx
                        .vars
                        .iter()
                        .map(|(k, v)| (k.clone(), Complex64::new(rat_to_f64(v), 0.0)))
                        .collect(),
                    sites: qctx.sites.clone(),
                };
                match self.eval_c(&ctx) {
                    Ok(v) => {
                        if v.norm() >= opts.tol {
                            return Ok(false);
                        }
                        done += 1;
                    }
                    Err(ExprError::Pole) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }
}
