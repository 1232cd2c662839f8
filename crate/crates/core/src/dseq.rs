//! The determining-equation route to discrete symmetries, specialized to the
//! discrete Painlevé I equation
//!
//! ```text
//! u[n+1] + u[n] + u[n-1] = (alpha x[n] + beta)/u[n] + gamma,
//! x[n+1] - x[n] = h,
//! ```
//!
//! plus the continuous classification of its point symmetries by parameter
//! regime. The flow of a generic generator phi = phi0(x) + u phi1(x) is
//! integrated in closed form on characteristics; discrete symmetries appear
//! as parameter values where the flow returns the original equation.

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{rat, Expr, ExprError, IdentityOptions, MultiPoly, SeqTerm, Symbol};
use crate::latfield::{invariance_residual, DifferenceSystem, LatError, LatticeVectorField};
use crate::realize::{check_form_invariance, Classification, PointTransformation, RealizeError};

#[derive(Debug, Error)]
pub enum DseqError {
    #[error("lattice spacing must be positive")]
    NonPositiveSpacing,
    #[error("generator failed its invariance check: {0}")]
    GeneratorNotSymmetry(String),
    #[error(transparent)]
    Lattice(#[from] LatError),
    #[error(transparent)]
    Realize(#[from] RealizeError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Parameters of the discrete Painlevé I equation.
#[derive(Clone, Debug)]
pub struct DP1Params {
    pub alpha: BigRational,
    pub beta: BigRational,
    pub gamma: BigRational,
    pub h: BigRational,
    pub x0: BigRational,
}

impl DP1Params {
    pub fn new(
        alpha: BigRational,
        beta: BigRational,
        gamma: BigRational,
    ) -> Result<Self, DseqError> {
        Self::with_lattice(alpha, beta, gamma, rat(7, 3), BigRational::zero())
    }

    pub fn with_lattice(
        alpha: BigRational,
        beta: BigRational,
        gamma: BigRational,
        h: BigRational,
        x0: BigRational,
    ) -> Result<Self, DseqError> {
        if !h.is_positive() {
            return Err(DseqError::NonPositiveSpacing);
        }
        Ok(DP1Params {
            alpha,
            beta,
            gamma,
            h,
            x0,
        })
    }

    /// The equation as a difference system (h instantiated).
    pub fn system(&self) -> DifferenceSystem {
        let u = |k: i64| Expr::sym(Symbol::new("u").at("n", k));
        let delta = Expr::add(vec![
            u(1),
            u(0),
            u(-1),
            Expr::neg(Expr::div(
                Expr::add2(
                    Expr::mul2(Expr::Rat(self.alpha.clone()), Expr::var("x")),
                    Expr::Rat(self.beta.clone()),
                ),
                u(0),
            )),
            Expr::neg(Expr::Rat(self.gamma.clone())),
        ]);
        let lattice = vec![Expr::add(vec![
            Expr::sym(Symbol::new("x").at("n", 1)),
            Expr::neg(Expr::var("x")),
            Expr::neg(Expr::Rat(self.h.clone())),
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
    }
}

/// Continuous symmetry regimes of dPI.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Regime {
    /// alpha != 0: no continuous symmetry.
    NoSymmetry,
    /// alpha = 0, beta != 0: space translations only.
    TranslationsOnly,
    /// alpha = beta = 0: four-dimensional symmetry algebra.
    FourDimensional,
}

#[derive(Clone, Debug)]
pub struct ContinuousClassification {
    pub regime: Regime,
    pub dimension: usize,
    pub generators: Vec<LatticeVectorField>,
    pub notes: Vec<String>,
}

impl ContinuousClassification {
    pub fn to_json(&self) -> Value {
        json!({
            "dimension": self.dimension,
            "regime": match self.regime {
                Regime::NoSymmetry => "none",
                Regime::TranslationsOnly => "translations",
                Regime::FourDimensional => "four-dimensional",
            },
            "generators": self.generators.iter().map(|g| g.to_json()).collect::<Vec<_>>(),
            "notes": self.notes,
        })
    }
}

fn d_x() -> LatticeVectorField {
    LatticeVectorField::new(
        [("x".to_string(), Expr::one())].into_iter().collect(),
        Expr::zero(),
    )
}

/// Classify the continuous point symmetries by parameter regime; every
/// returned generator is re-verified against the equation.
pub fn classify_continuous(p: &DP1Params) -> Result<ContinuousClassification, DseqError> {
    let system = p.system();
    let (regime, generators, notes) = if !p.alpha.is_zero() {
        (
            Regime::NoSymmetry,
            Vec::new(),
            vec!["alpha != 0 forces K0 = 0 and phi = 0: no symmetry is present".to_string()],
        )
    } else if !p.beta.is_zero() {
        (
            Regime::TranslationsOnly,
            vec![d_x()],
            vec!["alpha = 0, beta != 0: only space translations survive".to_string()],
        )
    } else {
        // alpha = beta = 0: phi1 = K1 and phi0 solves the period-3 window
        // recursion phi0(n+1) + phi0(n) + phi0(n-1) = -gamma K1; the complex
        // closed form uses the primitive cube roots (i sqrt3 -+ 1)/2, spanned
        // over the rationals by two period-3 sequences.
        let du_seq = |values: [i64; 3]| {
            LatticeVectorField::new(
                BTreeMap::new(),
                Expr::Seq(SeqTerm::new(
                    "n",
                    values.iter().map(|&v| rat(v, 1)).collect(),
                )),
            )
        };
        let affine = LatticeVectorField::new(
            BTreeMap::new(),
            Expr::add2(
                Expr::var("u"),
                Expr::Rat(-&p.gamma / BigRational::from_integer(3.into())),
            ),
        );
        (
            Regime::FourDimensional,
            vec![d_x(), affine, du_seq([1, 0, -1]), du_seq([0, 1, -1])],
            vec![
                "alpha = beta = 0: the linear equation has a four-dimensional symmetry group"
                    .to_string(),
                "phi0 closed form: -gamma K1/3 + K2 [(i sqrt3 - 1)/2]^n + K3 [-(i sqrt3 + 1)/2]^n"
                    .to_string(),
            ],
        )
    };
    let opts = IdentityOptions::default().with_singular(system.singular_all_sites()?);
    for (i, g) in generators.iter().enumerate() {
        let r = invariance_residual(g, &system)?;
        if !matches!(r.identically_zero(&opts), Ok(true)) {
            return Err(DseqError::GeneratorNotSymmetry(format!(
                "generator {} of regime {:?}",
                i + 1,
                regime
            )));
        }
    }
    Ok(ContinuousClassification {
        dimension: generators.len(),
        regime,
        generators,
        notes,
    })
}

/// Sweep the affine field ansatz `xi = K0`,
/// `phi = (a0 + a1 x + a2 x^2) + u (b0 + b1 x + b2 x^2)` and return a basis
/// of the solution space of the determining equations (exact null space).
/// A completeness oracle for the regime classification at polynomial
/// coefficient degree <= 2.
pub fn affine_symmetry_sweep(
    p: &DP1Params,
) -> Result<Vec<BTreeMap<String, BigRational>>, DseqError> {
    let system = p.system();
    let names = ["K0", "a0", "a1", "a2", "b0", "b1", "b2"];
    let phi = Expr::add2(
        Expr::add(vec![
            Expr::var("a0"),
            Expr::mul2(Expr::var("a1"), Expr::var("x")),
            Expr::mul2(Expr::var("a2"), Expr::pow(Expr::var("x"), 2)),
        ]),
        Expr::mul2(
            Expr::var("u"),
            Expr::add(vec![
                Expr::var("b0"),
                Expr::mul2(Expr::var("b1"), Expr::var("x")),
                Expr::mul2(Expr::var("b2"), Expr::pow(Expr::var("x"), 2)),
            ]),
        ),
    );
    let field = LatticeVectorField::new(
        [("x".to_string(), Expr::var("K0"))].into_iter().collect(),
        phi,
    );
    let residual = invariance_residual(&field, &system)?;
    let rf = crate::expr::RatFunc::from_expr(&residual)?;
    // group by monomials in the site variables; coefficients are linear in
    // the ansatz unknowns
    let unknown_syms: Vec<Symbol> = names.iter().map(|n| Symbol::new(*n)).collect();
    let mut rows: Vec<Vec<BigRational>> = Vec::new();
    let mut groups: BTreeMap<crate::expr::Monomial, MultiPoly> = BTreeMap::new();
    for (m, c) in &rf.num.terms {
        let mut key = crate::expr::Monomial::one();
        let mut rest = crate::expr::Monomial::one();
        for (s, e) in &m.0 {
            if unknown_syms.contains(s) {
                rest.0.insert(s.clone(), *e);
            } else {
                key.0.insert(s.clone(), *e);
            }
        }
        groups
            .entry(key)
            .or_insert_with(MultiPoly::zero)
            .add_term(rest, c.clone());
    }
    for coeff in groups.values() {
        let mut row = vec![BigRational::zero(); unknown_syms.len()];
        for (m, c) in &coeff.terms {
            let vars: Vec<&Symbol> = m.0.keys().collect();
            assert!(
                vars.len() == 1 && m.total_degree() == 1,
                "sweep residual must be linear in the ansatz"
            );
            let idx = unknown_syms.iter().position(|s| s == vars[0]).unwrap();
            row[idx] = c.clone();
        }
        rows.push(row);
    }
    let basis = nullspace(&rows, unknown_syms.len());
    Ok(basis
        .into_iter()
        .map(|vec| {
            names
                .iter()
                .zip(vec)
                .filter(|(_, v)| !v.is_zero())
                .map(|(n, v)| (n.to_string(), v))
                .collect()
        })
        .collect())
}

/// Exact null space basis of a rational matrix given by rows.
fn nullspace(rows: &[Vec<BigRational>], ncols: usize) -> Vec<Vec<BigRational>> {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let nrows = m.len();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut lead = 0usize;
    for col in 0..ncols {
        let Some(pr) = (lead..nrows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(lead, pr);
        let p = m[lead][col].clone();
        for x in m[lead].iter_mut() {
            *x /= p.clone();
        }
        for r in 0..nrows {
            if r != lead && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for cc in 0..ncols {
                    let sub = &f * &m[lead][cc];
                    m[r][cc] -= sub;
                }
            }
        }
        pivots.push((lead, col));
        lead += 1;
        if lead == nrows {
            break;
        }
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|(_, c)| *c).collect();
    let mut basis = Vec::new();
    for free in 0..ncols {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![BigRational::zero(); ncols];
        v[free] = BigRational::one();
        for (pr, pc) in &pivots {
            v[*pc] = -m[*pr][free].clone();
        }
        basis.push(v);
    }
    basis
}

/// Numerically verify the closed-form solution of the window recursion:
/// phi0(n) = -gamma K1/3 + K2 r+^n + K3 r-^n with r± the primitive cube
/// roots of unity satisfies phi0(n+1) + phi0(n) + phi0(n-1) + gamma K1 = 0.
/// Returns the maximum |residual| over n = 1..n_max at random complex
/// constants.
pub fn verify_phi0_closed_form(gamma: f64, n_max: usize, seed: u64) -> f64 {
    assert!(n_max >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand_c =
        |rng: &mut ChaCha8Rng| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let k1 = rand_c(&mut rng);
    let k2 = rand_c(&mut rng);
    let k3 = rand_c(&mut rng);
    let rp = Complex64::new(-0.5, 0.5 * 3f64.sqrt()); // (i sqrt3 - 1)/2
    let rm = Complex64::new(-0.5, -0.5 * 3f64.sqrt()); // -(i sqrt3 + 1)/2
    let phi0 = |n: i32| -> Complex64 {
        Complex64::new(-gamma / 3.0, 0.0) * k1 + k2 * rp.powi(n) + k3 * rm.powi(n)
    };
    let mut max_resid: f64 = 0.0;
    for n in 1..=n_max as i32 {
        let r = phi0(n + 1) + phi0(n) + phi0(n - 1) + Complex64::new(gamma, 0.0) * k1;
        max_resid = max_resid.max(r.norm());
    }
    max_resid
}

/// The primitive cube root (i sqrt3 - 1)/2 cubes to one; used as a sanity
/// anchor for the basis of the period-3 solution space.
pub fn cube_root_check() -> f64 {
    let rp = Complex64::new(-0.5, 0.5 * 3f64.sqrt());
    (rp.powi(3) - Complex64::new(1.0, 0.0)).norm()
}

// ---------------------------------------------------------------------------
// closed-form flow
// ---------------------------------------------------------------------------

/// Closed forms of the one-parameter flow with phi = phi0(x) + u phi1(x) and
/// K0 = 0: the transformed dependent variable u-hat(lambda) and the extended
/// equation right-hand side F(x-hat, u-hat; lambda).
///
/// The site values of the coefficient functions enter as opaque symbols:
/// `phi0`, `phi1` at x-hat, `phi0p`/`phi0m` at the neighbors, and `phi1m`,
/// which also stands for phi1 at the upper neighbor (the determining
/// equation forces phi1(x+) = phi1(x-)).
#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub phi0: Expr,
    pub phi1: Expr,
    pub u_hat: Expr,
    pub f_hat: Expr,
    pub params: DP1Params,
}

pub fn flow_sym(name: &str) -> Symbol {
    Symbol::new(name)
}

/// Build the closed-form flow for the given equation parameters (K0 = 0; the
/// K0 flow is a shift of beta and cannot produce a discrete transformation).
pub fn flow_solution(p: &DP1Params) -> FlowSolution {
    let lam = Expr::var("lambda");
    let u = Expr::var("u");
    let phi0 = Expr::var("phi0");
    let phi1 = Expr::var("phi1");
    let phi0p = Expr::var("phi0p");
    let phi0m = Expr::var("phi0m");
    let phi1m = Expr::var("phi1m");
    let xhat = Expr::var("x");
    let ratio = Expr::div(phi0.clone(), phi1.clone());
    let e_neg = Expr::exp(Expr::neg(Expr::mul2(lam.clone(), phi1.clone())));
    let one_minus = Expr::sub(Expr::one(), e_neg.clone());
    // u-hat = e^{lambda phi1} [u + (phi0/phi1)(1 - e^{-lambda phi1})]
    let u_hat = Expr::mul2(
        Expr::exp(Expr::mul2(lam.clone(), phi1.clone())),
        Expr::add2(u.clone(), Expr::mul2(ratio.clone(), one_minus.clone())),
    );
    // F per the closed-form integration of the determining equation
    let alpha_x_beta = Expr::add2(
        Expr::mul2(Expr::Rat(p.alpha.clone()), xhat),
        Expr::Rat(p.beta.clone()),
    );
    let u_sym = Expr::var("u"); // stands for u-hat in the F coordinates
    let denom = Expr::sub(
        Expr::mul2(u_sym.clone(), e_neg.clone()),
        Expr::mul2(ratio.clone(), one_minus.clone()),
    );
    let bracket = Expr::add(vec![
        Expr::mul2(ratio.clone(), one_minus.clone()),
        Expr::div(alpha_x_beta, denom),
        Expr::Rat(p.gamma.clone()),
    ]);
    let f_hat = Expr::add(vec![
        Expr::mul2(Expr::exp(Expr::mul2(lam.clone(), phi1m.clone())), bracket),
        Expr::neg(Expr::mul2(
            u_sym,
            Expr::exp(Expr::mul2(
                lam.clone(),
                Expr::sub(phi1m.clone(), phi1.clone()),
            )),
        )),
        Expr::neg(Expr::mul2(
            Expr::div(Expr::add2(phi0p, phi0m), phi1m.clone()),
            Expr::sub(Expr::one(), Expr::exp(Expr::mul2(lam, phi1m))),
        )),
    ]);
    // the full phi1 with its alternating part (killed later by the
    // periodicity condition)
    let phi1_full = Expr::add2(
        Expr::var("K1"),
        Expr::mul2(
            Expr::var("K2"),
            Expr::Seq(SeqTerm::new("n", vec![rat(1, 1), rat(-1, 1)])),
        ),
    );
    FlowSolution {
        phi0: Expr::var("phi0"),
        phi1: phi1_full,
        u_hat,
        f_hat,
        params: p.clone(),
    }
}

impl FlowSolution {
    /// F at lambda = 0 minus the original right-hand side
    /// (-u + (alpha x + beta)/u + gamma); identically zero by construction.
    pub fn boundary_residual(&self) -> Expr {
        let f0 = self.f_hat.substitute1(&flow_sym("lambda"), &Expr::zero());
        let rhs = Expr::add(vec![
            Expr::neg(Expr::var("u")),
            Expr::div(
                Expr::add2(
                    Expr::mul2(Expr::Rat(self.params.alpha.clone()), Expr::var("x")),
                    Expr::Rat(self.params.beta.clone()),
                ),
                Expr::var("u"),
            ),
            Expr::Rat(self.params.gamma.clone()),
        ]);
        Expr::sub(f0, rhs)
    }

    /// Residual of the flow PDE
    /// dF/dlambda + (phi0 + u phi1) dF/du = phi0p + phi0m + phi1m F
    /// with phi1(x+) = phi1(x-) imposed; identically zero when the closed
    /// form is correct.
    pub fn flow_pde_residual(&self) -> Expr {
        let lam = flow_sym("lambda");
        let u = flow_sym("u");
        let df_dlam = self.f_hat.differentiate(&lam);
        let df_du = self.f_hat.differentiate(&u);
        let phi_u = Expr::add2(
            Expr::var("phi0"),
            Expr::mul2(Expr::var("u"), Expr::var("phi1")),
        );
        let lhs = Expr::add2(df_dlam, Expr::mul2(phi_u, df_du));
        let rhs = Expr::add(vec![
            Expr::var("phi0p"),
            Expr::var("phi0m"),
            Expr::mul2(Expr::var("phi1m"), self.f_hat.clone()),
        ]);
        Expr::sub(lhs, rhs)
    }

    /// |u-hat(l1 + l2) - u-hat(l2) o u-hat(l1)| at random numeric points:
    /// the one-parameter group law of the flow.
    pub fn group_law_defect(&self, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_defect: f64 = 0.0;
        for _ in 0..trials {
            let uv = rng.gen_range(0.2..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let p0 = rng.gen_range(-1.0..1.0);
            let p1 = rng.gen_range(0.2..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let l1 = rng.gen_range(-0.8..0.8);
            let l2 = rng.gen_range(-0.8..0.8);
            let eval = |uval: f64, lval: f64| -> f64 {
                let ctx = crate::expr::EvalCtx::new()
                    .bind(flow_sym("u"), Complex64::new(uval, 0.0))
                    .bind(flow_sym("phi0"), Complex64::new(p0, 0.0))
                    .bind(flow_sym("phi1"), Complex64::new(p1, 0.0))
                    .bind(flow_sym("lambda"), Complex64::new(lval, 0.0));
                self.u_hat.eval_c(&ctx).unwrap().re
            };
            let direct = eval(uv, l1 + l2);
            let composed = eval(eval(uv, l1), l2);
            max_defect = max_defect.max((direct - composed).abs());
        }
        max_defect
    }
}

// ---------------------------------------------------------------------------
// discrete symmetries of dPI
// ---------------------------------------------------------------------------

/// The condition chain of the periodicity analysis, reported step by step.
#[derive(Clone, Debug, Default)]
pub struct ConditionChain {
    pub steps: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Dp1DiscreteReport {
    pub transformations: Vec<PointTransformation>,
    pub chain: ConditionChain,
}

impl Dp1DiscreteReport {
    pub fn to_json(&self) -> Value {
        json!({
            "discrete": self.transformations.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            "conditions": self.chain.steps,
        })
    }
}

/// Apply the periodicity condition chain to the closed-form flow and return
/// the discrete symmetries of dPI. Every returned map is confirmed by the
/// form-invariance check.
pub fn discrete_symmetries_dp1(p: &DP1Params) -> Result<Dp1DiscreteReport, DseqError> {
    let mut chain = ConditionChain::default();
    chain.steps.push(
        "periodicity of the alternating part: (phi1(x-) - phi1(x)) lambda0 = 2 pi i N \
         forces K2 = 0, so phi1 = K1"
            .to_string(),
    );
    chain.steps.push(
        "phi0 (1 - e^{-lambda0 K1}) = 0 splits: either lambda0 K1 = 2 pi i N \
         (the flow returns to the identity: no discrete symmetry) or phi0 = 0"
            .to_string(),
    );
    let mut transformations = Vec::new();
    if p.gamma.is_zero() {
        chain.steps.push(
            "gamma = 0 with phi0 = 0 admits K1 lambda0 = i pi N with N odd: \
             e^{lambda0 K1} = -1, the sign flip u-hat = -u"
                .to_string(),
        );
        let flip = PointTransformation {
            maps: [
                ("x".to_string(), Expr::var("x")),
                ("u".to_string(), Expr::neg(Expr::var("u"))),
            ]
            .into_iter()
            .collect(),
            params: vec![],
            nonvanishing: vec![],
            class: Classification::Discrete,
        };
        // confirm against the equation itself
        let system = p.system();
        let report = check_form_invariance(&flip, &system, &[], &IdentityOptions::default())?;
        let confirmed = report
            .instances
            .iter()
            .any(|inst| inst.class == Classification::Discrete);
        if confirmed {
            chain
                .steps
                .push("form invariance confirmed: transformed residual = -residual".to_string());
            transformations.push(flip);
        } else {
            chain
                .steps
                .push("form-invariance check failed; no discrete symmetry reported".to_string());
        }
    } else {
        chain.steps.push(format!(
            "gamma = {} != 0: phi0 = 0 forces the trivial branch; no discrete symmetry",
            self_display(&p.gamma)
        ));
    }
    Ok(Dp1DiscreteReport {
        transformations,
        chain,
    })
}

fn self_display(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Three-term recursion solver for dPI: given u0, u1, produce the trajectory
/// u[0..len] with x_n = x0 + n h, skipping would-be divisions by zero.
pub fn dp1_recursion(p: &DP1Params, u0: f64, u1: f64, len: usize) -> Option<Vec<f64>> {
    let alpha = p.alpha.to_f64()?;
    let beta = p.beta.to_f64()?;
    let gamma = p.gamma.to_f64()?;
    let h = p.h.to_f64()?;
    let x0 = p.x0.to_f64()?;
    let mut u = vec![0.0; len];
    if len < 3 {
        return None;
    }
    u[0] = u0;
    u[1] = u1;
    for n in 1..len - 1 {
        let x = x0 + n as f64 * h;
        if u[n].abs() < 1e-9 {
            return None;
        }
        u[n + 1] = (alpha * x + beta) / u[n] + gamma - u[n] - u[n - 1];
    }
    Some(u)
}

/// Residual norm of a trajectory under the dPI equation (for the
/// solution-mapping sanity checks).
pub fn dp1_residual_norm(p: &DP1Params, u: &[f64]) -> f64 {
    let alpha = p.alpha.to_f64().unwrap();
    let beta = p.beta.to_f64().unwrap();
    let gamma = p.gamma.to_f64().unwrap();
    let h = p.h.to_f64().unwrap();
    let x0 = p.x0.to_f64().unwrap();
    let mut acc = 0.0;
    for n in 1..u.len() - 1 {
        let x = x0 + n as f64 * h;
        let r = u[n + 1] + u[n] + u[n - 1] - (alpha * x + beta) / u[n] - gamma;
        acc += r * r;
    }
    acc.sqrt()
}

/// The Volterra equation u_t = u (u[n+1] - u[n-1]) as a difference system.
pub fn volterra_system() -> DifferenceSystem {
    let u = |k: i64| Expr::sym(Symbol::new("u").at("n", k));
    let ut = Expr::sym(Symbol::new("u").d("t"));
    let delta = Expr::sub(ut, Expr::mul2(u(0), Expr::sub(u(1), u(-1))));
    DifferenceSystem {
        delta,
        lattice: vec![],
        stencil: [("n".to_string(), (-1, 1))].into_iter().collect(),
        dependent: "u".into(),
        independent: vec!["t".into()],
        singular: vec![],
        eliminate: None,
    }
}

/// The determining equation for Volterra discrete symmetries is
/// underdetermined: the coefficient function phi(t, u) is unconstrained by
/// the equation alone, so no ansatz-free conclusion follows.
pub fn volterra_determining_note() -> Value {
    json!({
        "equation": "u_t = u (u[n+1] - u[n-1])",
        "determining_equation": "dF/dlambda + tau(t) dF/dt + phi(t,u) dF/du \
            + phi(t,u+) dF/du+ + phi(t,u-) dF/du- = phi_t + (phi_u - tau') F",
        "status": "underdetermined",
        "unconstrained": "phi(t, u)",
        "note": "no hint of the form of phi(t,u): the equation is not solvable without an ansatz",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: i64, b: i64, g: i64) -> DP1Params {
        DP1Params::new(rat(a, 1), rat(b, 1), rat(g, 1)).unwrap()
    }

    #[test]
    fn classification_matches_the_three_regimes() {
        let c = classify_continuous(&params(1, 0, 0)).unwrap();
        assert_eq!(c.regime, Regime::NoSymmetry);
        assert_eq!(c.dimension, 0);

        let c = classify_continuous(&params(0, 3, 6)).unwrap();
        assert_eq!(c.regime, Regime::TranslationsOnly);
        assert_eq!(c.dimension, 1);

        let c = classify_continuous(&params(0, 0, 6)).unwrap();
        assert_eq!(c.regime, Regime::FourDimensional);
        assert_eq!(c.dimension, 4);
    }

    #[test]
    fn four_dimensional_algebra_closes() {
        use crate::latfield::verify_symmetry_algebra;
        let p = params(0, 0, 6);
        let c = classify_continuous(&p).unwrap();
        let report =
            verify_symmetry_algebra(&c.generators, &p.system(), &IdentityOptions::default())
                .unwrap();
        assert!(report.all_fields_ok());
        let algebra = report.algebra.expect("closes");
        assert!(algebra.check(&rat(7, 3)).unwrap().is_valid());
        // [X2, X3] = -X3 and [X2, X4] = -X4 (X2 = (u - gamma/3) d_u)
        assert_eq!(algebra.constant(1, 2, 2), &Expr::int(-1));
        assert_eq!(algebra.constant(1, 3, 3), &Expr::int(-1));
    }

    #[test]
    fn sweep_dimensions_match_the_regimes() {
        assert_eq!(affine_symmetry_sweep(&params(1, 3, 6)).unwrap().len(), 0);
        let basis = affine_symmetry_sweep(&params(0, 3, 6)).unwrap();
        assert_eq!(basis.len(), 1);
        assert!(basis[0].contains_key("K0"));
        // alpha = beta = 0: K0 and the affine u-direction (the periodic
        // sequence directions are not polynomial in x)
        let basis = affine_symmetry_sweep(&params(0, 0, 6)).unwrap();
        assert_eq!(basis.len(), 2);
    }

    #[test]
    fn phi0_closed_form_residual_is_tiny_and_cube_root_checks() {
        assert!(verify_phi0_closed_form(6.0, 20, 42) < 1e-10);
        assert!(verify_phi0_closed_form(0.0, 20, 7) < 1e-10);
        assert!(cube_root_check() < 1e-12);
        // all-zero constants: residual exactly zero
        let rp = Complex64::new(-0.5, 0.5 * 3f64.sqrt());
        assert!((rp * rp + rp + Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn flow_boundary_condition_holds_exactly() {
        let p = params(1, 3, 6);
        let flow = flow_solution(&p);
        let r = flow.boundary_residual();
        let opts = IdentityOptions::default().with_singular(vec![Expr::var("u")]);
        assert!(r.identically_zero(&opts).unwrap());
    }

    #[test]
    fn flow_pde_is_satisfied() {
        let p = params(1, 3, 6);
        let flow = flow_solution(&p);
        let r = flow.flow_pde_residual();
        let opts = IdentityOptions::default()
            .with_trials(30)
            .with_tol(1e-8)
            .with_singular(vec![Expr::var("u"), Expr::var("phi1"), Expr::var("phi1m")]);
        assert!(r.identically_zero(&opts).unwrap());
    }

    #[test]
    fn flow_limits() {
        let p = params(1, 3, 6);
        let flow = flow_solution(&p);
        // phi0 = 0, phi1 = K1: u-hat = e^{lambda K1} u
        let bind: BTreeMap<Symbol, Expr> = [
            (flow_sym("phi0"), Expr::zero()),
            (flow_sym("phi1"), Expr::var("K1")),
        ]
        .into_iter()
        .collect();
        let special = flow.u_hat.substitute(&bind);
        let expect = Expr::mul2(
            Expr::exp(Expr::mul2(Expr::var("lambda"), Expr::var("K1"))),
            Expr::var("u"),
        );
        assert_eq!(special, expect);
        // phi1 -> 0 limit: u-hat -> u + lambda phi0, checked numerically
        // against an RK4 integration of du/dlambda = phi0 + u phi1
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let u0 = rng.gen_range(0.3..1.2);
            let p0 = rng.gen_range(-1.0..1.0);
            let lam = rng.gen_range(-0.7..0.7);
            let eps = 1e-7;
            let ctx = crate::expr::EvalCtx::new()
                .bind(flow_sym("u"), Complex64::new(u0, 0.0))
                .bind(flow_sym("phi0"), Complex64::new(p0, 0.0))
                .bind(flow_sym("phi1"), Complex64::new(eps, 0.0))
                .bind(flow_sym("lambda"), Complex64::new(lam, 0.0));
            let closed = flow.u_hat.eval_c(&ctx).unwrap().re;
            let linear = u0 + lam * p0;
            assert!((closed - linear).abs() < 1e-5, "{closed} vs {linear}");
            // RK4 oracle for the full flow ODE
            let steps = 200;
            let dt = lam / steps as f64;
            let mut u = u0;
            let fdot = |u: f64| p0 + u * eps;
            for _ in 0..steps {
                let k1 = fdot(u);
                let k2 = fdot(u + 0.5 * dt * k1);
                let k3 = fdot(u + 0.5 * dt * k2);
                let k4 = fdot(u + dt * k3);
                u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            assert!((closed - u).abs() < 1e-6, "{closed} vs rk4 {u}");
        }
    }

    #[test]
    fn group_law_numeric() {
        let flow = flow_solution(&params(1, 3, 6));
        assert!(flow.group_law_defect(25, 42) < 1e-10);
    }

    #[test]
    fn discrete_symmetries_by_gamma() {
        // gamma != 0: empty
        let r = discrete_symmetries_dp1(&params(1, 3, 6)).unwrap();
        assert!(r.transformations.is_empty());
        // gamma = 0: the sign flip, even with alpha, beta != 0
        let r = discrete_symmetries_dp1(&params(1, 3, 0)).unwrap();
        assert_eq!(r.transformations.len(), 1);
        let t = &r.transformations[0];
        assert_eq!(t.map_of("u"), Expr::neg(Expr::var("u")));
        assert_eq!(t.map_of("x"), Expr::var("x"));
        // the flip applied twice is the identity
        assert!(t.compose(t).is_identity());
        // alpha = beta = 0 keeps it too
        let r = discrete_symmetries_dp1(&params(0, 0, 0)).unwrap();
        assert_eq!(r.transformations.len(), 1);
        let c = classify_continuous(&params(0, 0, 0)).unwrap();
        assert_eq!(c.dimension, 4);
    }

    #[test]
    fn recursion_and_residual_norm() {
        let p = params(1, 3, 0);
        let u = dp1_recursion(&p, 1.0, 1.2, 40).unwrap();
        assert!(dp1_residual_norm(&p, &u) < 1e-9);
        // mapped by u -> -u stays a solution when gamma = 0
        let flipped: Vec<f64> = u.iter().map(|v| -v).collect();
        assert!(dp1_residual_norm(&p, &flipped) < 1e-9);
    }
}
