//! Command-line front end: validate symmetry algebras, compute automorphism
//! families, realize them as point transformations, and run the worked
//! examples (Toda lattice, discrete Painlevé I, Volterra) end to end.
//!
//! Exit codes: 0 success, 1 check failed (invalid algebra / claim false),
//! 2 parse or I/O error, 3 symmetry verification stage, 4 automorphism
//! system stage, 5 automorphism solving stage, 6 realization stage,
//! 7 form-invariance stage.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Value};

use latsym_core::autosolve::{
    automorphism_families, generate_automorphism_system, normalize_inner, propagate_linear,
    solve_automorphism_system, AutFamily,
};
use latsym_core::dseq::{
    classify_continuous, discrete_symmetries_dp1, verify_phi0_closed_form,
    volterra_determining_note, DP1Params,
};
use latsym_core::expr::{rat, Expr, IdentityOptions, Symbol};
use latsym_core::latfield::{DifferenceSystem, LatticeVectorField};
use latsym_core::liealg::LieAlgebra;
use latsym_core::realize::{realization_system, solve_realization};

use latsym_core::pipeline::{self, discrete_pipeline, PipelineOptions};

const TODA_ALGEBRA: &str = include_str!("../../../inputs/toda_algebra.json");
const TODA_FIELDS: &str = include_str!("../../../inputs/toda_fields.json");
const TODA_EQUATION: &str = include_str!("../../../inputs/toda_equation.json");
const VOLTERRA_EQUATION: &str = include_str!("../../../inputs/volterra_equation.json");
const VOLTERRA_FIELDS: &str = include_str!("../../../inputs/volterra_fields.json");

#[derive(Parser)]
#[command(
    name = "latsym",
    version,
    about = "Discrete point symmetries of lattice equations"
)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// RNG seed for randomized identity testing (env LATTICE_LIE_SEED wins)
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Trials per randomized identity test
    #[arg(long, global = true, default_value_t = 20)]
    trials: usize,
    /// Tolerance for numeric identity tests
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Lattice spacing as an exact rational, e.g. 7/3
    #[arg(long, global = true, default_value = "7/3")]
    h: String,
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report to a file instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Lie-algebra utilities
    Algebra {
        #[command(subcommand)]
        sub: AlgebraCmd,
    },
    /// Automorphism machinery
    Aut {
        #[command(subcommand)]
        sub: AutCmd,
    },
    /// Verify that fields form a symmetry algebra of an equation
    Verify {
        algebra: PathBuf,
        fields: PathBuf,
        equation: PathBuf,
    },
    /// Realize automorphism families as point transformations
    Realize {
        algebra: PathBuf,
        fields: PathBuf,
        equation: PathBuf,
    },
    /// Full pipeline: verify, automorphisms, realization, form invariance
    Discrete {
        algebra: PathBuf,
        fields: PathBuf,
        equation: PathBuf,
    },
    /// Discrete Painlevé I: continuous classification + discrete symmetries
    Dp1 {
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long, allow_hyphen_values = true)]
        beta: String,
        #[arg(long, allow_hyphen_values = true)]
        gamma: String,
        /// Lattice origin x0
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        x0: String,
    },
    /// Canned demonstrations of the worked examples
    Demo {
        #[arg(value_enum)]
        which: DemoKind,
    },
}

#[derive(Subcommand)]
enum AlgebraCmd {
    /// Validate antisymmetry and the Jacobi identity
    Check { path: PathBuf },
    /// Print the adjoint matrix C(i) of one generator
    Adjoint {
        path: PathBuf,
        #[arg(short = 'i', long)]
        generator: usize,
    },
}

#[derive(Subcommand)]
enum AutCmd {
    /// Emit the automorphism equations (with their linear consequences)
    System { algebra: PathBuf },
    /// Solve into families
    Solve { algebra: PathBuf },
    /// Solve and simplify by inner automorphisms
    Normalize { algebra: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoKind {
    Toda,
    Dp1,
    Volterra,
}

pub(crate) struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub tol: f64,
    pub h: BigRational,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    fn from_args(a: &RunArgs) -> Result<Self, String> {
        if a.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if a.tol <= 0.0 || a.tol.is_nan() {
            return Err("tol must be positive".into());
        }
        let seed = match std::env::var("LATTICE_LIE_SEED") {
            Ok(s) => s
                .parse::<u64>()
                .map_err(|_| format!("bad LATTICE_LIE_SEED `{s}`"))?,
            Err(_) => a.seed,
        };
        let h = parse_rational(&a.h)?;
        Ok(RunConfig {
            seed,
            trials: a.trials,
            tol: a.tol,
            h,
            format: a.format,
            out: a.out.clone(),
        })
    }

    pub fn identity_opts(&self) -> IdentityOptions {
        IdentityOptions::default()
            .with_seed(self.seed)
            .with_trials(self.trials)
            .with_tol(self.tol)
    }

    fn pipeline_opts(&self) -> PipelineOptions {
        PipelineOptions {
            h: self.h.clone(),
            identity: self.identity_opts(),
        }
    }
}

fn parse_rational(s: &str) -> Result<BigRational, String> {
    latsym_core::expr::json::rat_from_string(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::from_args(&cli.run) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let (code, report) = dispatch(&cli.command, &cfg);
    let rendered = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&report).expect("serializable"),
        Format::Text => render_text(&report),
    };
    match &cfg.out {
        Some(path) => {
            if fs::write(path, rendered + "\n").is_err() {
                eprintln!("error: cannot write {}", path.display());
                return ExitCode::from(2);
            }
        }
        None => println!("{rendered}"),
    }
    ExitCode::from(code)
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> (u8, Value) {
    match cmd {
        Command::Algebra { sub } => match sub {
            AlgebraCmd::Check { path } => cmd_algebra_check(path, cfg),
            AlgebraCmd::Adjoint { path, generator } => cmd_algebra_adjoint(path, *generator, cfg),
        },
        Command::Aut { sub } => match sub {
            AutCmd::System { algebra } => cmd_aut_system(algebra, cfg),
            AutCmd::Solve { algebra } => cmd_aut_solve(algebra, cfg, false),
            AutCmd::Normalize { algebra } => cmd_aut_solve(algebra, cfg, true),
        },
        Command::Verify {
            algebra,
            fields,
            equation,
        } => cmd_verify(algebra, fields, equation, cfg),
        Command::Realize {
            algebra,
            fields,
            equation,
        } => cmd_realize(algebra, fields, equation, cfg),
        Command::Discrete {
            algebra,
            fields,
            equation,
        } => cmd_discrete(algebra, fields, equation, cfg),
        Command::Dp1 {
            alpha,
            beta,
            gamma,
            x0,
        } => cmd_dp1(alpha, beta, gamma, x0, cfg),
        Command::Demo { which } => cmd_demo(*which, cfg),
    }
}

// ---------------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------------

fn load_json(path: &PathBuf) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_algebra(path: &PathBuf) -> Result<LieAlgebra, String> {
    LieAlgebra::from_json(&load_json(path)?).map_err(|e| e.to_string())
}

fn parse_fields(v: &Value, h: &BigRational) -> Result<Vec<LatticeVectorField>, String> {
    let arr = v
        .as_array()
        .ok_or_else(|| "fields file must be a JSON array".to_string())?;
    let hsym = Symbol::new("h");
    let hval = Expr::Rat(h.clone());
    arr.iter()
        .map(|f| {
            LatticeVectorField::from_json(f)
                .map(|f| f.substituted(&hsym, &hval))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn parse_system(v: &Value, h: &BigRational) -> Result<DifferenceSystem, String> {
    let sys = DifferenceSystem::from_json(v).map_err(|e| e.to_string())?;
    Ok(sys.substituted(&Symbol::new("h"), &Expr::Rat(h.clone())))
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

fn cmd_algebra_check(path: &PathBuf, cfg: &RunConfig) -> (u8, Value) {
    let algebra = match load_algebra(path) {
        Ok(a) => a,
        Err(e) => return (2, json!({"error": e})),
    };
    match algebra.check(&cfg.h) {
        Ok(report) => {
            let valid = report.is_valid();
            let out = json!({
                "valid": valid,
                "dim": algebra.dim,
                "report": report.to_string(),
            });
            (if valid { 0 } else { 1 }, out)
        }
        Err(e) => (2, json!({"error": e.to_string()})),
    }
}

fn cmd_algebra_adjoint(path: &PathBuf, generator: usize, cfg: &RunConfig) -> (u8, Value) {
    let algebra = match load_algebra(path) {
        Ok(a) => a,
        Err(e) => return (2, json!({"error": e})),
    };
    match algebra.adjoint(generator) {
        Ok(adj) => {
            let matrix: Vec<Vec<Value>> = adj
                .entries
                .iter()
                .map(|row| row.iter().map(|e| e.to_json()).collect())
                .collect();
            let at_h = algebra.adjoint_at(generator, &cfg.h).ok().map(|m| {
                m.iter()
                    .map(|row| {
                        row.iter()
                            .map(latsym_core::expr::json::rat_to_string)
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            });
            (
                0,
                json!({"generator": generator, "matrix": matrix, "matrix_at_h": at_h}),
            )
        }
        Err(e) => (2, json!({"error": e.to_string()})),
    }
}

fn cmd_aut_system(path: &PathBuf, cfg: &RunConfig) -> (u8, Value) {
    let algebra = match load_algebra(path) {
        Ok(a) => a,
        Err(e) => return (2, json!({"error": e})),
    };
    match generate_automorphism_system(&algebra, &cfg.h) {
        Ok(eqs) => {
            let prop = propagate_linear(&eqs);
            (
                0,
                json!({
                    "equations": eqs.iter().map(|p| p.to_expr().to_json()).collect::<Vec<_>>(),
                    "linear_zeros": prop.zeros.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
                    "remaining": prop.remaining.iter().map(|p| p.to_expr().to_json()).collect::<Vec<_>>(),
                }),
            )
        }
        Err(e) => (4, json!({"error": e.to_string(), "stage": "aut-system"})),
    }
}

fn cmd_aut_solve(path: &PathBuf, cfg: &RunConfig, normalize: bool) -> (u8, Value) {
    let algebra = match load_algebra(path) {
        Ok(a) => a,
        Err(e) => return (2, json!({"error": e})),
    };
    let eqs = match generate_automorphism_system(&algebra, &cfg.h) {
        Ok(e) => e,
        Err(e) => return (4, json!({"error": e.to_string(), "stage": "aut-system"})),
    };
    let families = match solve_automorphism_system(&eqs, algebra.dim, cfg.seed) {
        Ok(f) => f,
        Err(e) => return (5, json!({"error": e.to_string(), "stage": "aut-solve"})),
    };
    let families: Result<Vec<AutFamily>, _> = if normalize {
        families
            .iter()
            .map(|f| normalize_inner(f, &algebra, &cfg.h))
            .collect()
    } else {
        Ok(families)
    };
    match families {
        Ok(fams) => (
            0,
            json!({"families": fams.iter().map(|f| f.to_json()).collect::<Vec<_>>()}),
        ),
        Err(e) => (5, json!({"error": e.to_string(), "stage": "aut-normalize"})),
    }
}

fn cmd_verify(
    algebra: &PathBuf,
    fields: &PathBuf,
    equation: &PathBuf,
    cfg: &RunConfig,
) -> (u8, Value) {
    let (alg, flds, sys) = match (|| -> Result<_, String> {
        Ok((
            load_algebra(algebra)?,
            parse_fields(&load_json(fields)?, &cfg.h)?,
            parse_system(&load_json(equation)?, &cfg.h)?,
        ))
    })() {
        Ok(x) => x,
        Err(e) => return (2, json!({"error": e})),
    };
    match pipeline::verify_stage(&alg, &flds, &sys, &cfg.pipeline_opts()) {
        Ok(v) => (0, v),
        Err(e) => (3, json!({"error": e, "stage": "verify"})),
    }
}

fn cmd_realize(
    algebra: &PathBuf,
    fields: &PathBuf,
    equation: &PathBuf,
    cfg: &RunConfig,
) -> (u8, Value) {
    let (alg, flds, sys) = match (|| -> Result<_, String> {
        Ok((
            load_algebra(algebra)?,
            parse_fields(&load_json(fields)?, &cfg.h)?,
            parse_system(&load_json(equation)?, &cfg.h)?,
        ))
    })() {
        Ok(x) => x,
        Err(e) => return (2, json!({"error": e})),
    };
    let fams = match automorphism_families(&alg, &cfg.h, cfg.seed) {
        Ok(f) => f,
        Err(e) => return (5, json!({"error": e.to_string(), "stage": "aut-solve"})),
    };
    let mut coords = sys.independent.clone();
    coords.push(sys.dependent.clone());
    let mut out = Vec::new();
    for fam in &fams {
        let entry = match realization_system(fam, &flds, &coords, &sys.dependent)
            .and_then(|rs| solve_realization(&rs, &flds, &sys.dependent, &cfg.identity_opts()))
        {
            Ok(r) => json!({
                "family": fam.branch,
                "transformations": r.transformations.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
                "diagnostics": r.diagnostics,
            }),
            Err(e) => return (6, json!({"error": e.to_string(), "stage": "realize"})),
        };
        out.push(entry);
    }
    (0, json!({"realizations": out}))
}

fn cmd_discrete(
    algebra: &PathBuf,
    fields: &PathBuf,
    equation: &PathBuf,
    cfg: &RunConfig,
) -> (u8, Value) {
    let (alg, flds, sys) = match (|| -> Result<_, String> {
        Ok((
            load_algebra(algebra)?,
            parse_fields(&load_json(fields)?, &cfg.h)?,
            parse_system(&load_json(equation)?, &cfg.h)?,
        ))
    })() {
        Ok(x) => x,
        Err(e) => return (2, json!({"error": e})),
    };
    match discrete_pipeline(Some(&alg), &flds, &sys, &cfg.pipeline_opts()) {
        Ok(report) => (0, report.to_json()),
        Err((stage, e)) => (stage, json!({"error": e, "stage": stage_name(stage)})),
    }
}

fn stage_name(code: u8) -> &'static str {
    match code {
        3 => "verify",
        4 => "aut-system",
        5 => "aut-solve",
        6 => "realize",
        7 => "form-invariance",
        _ => "other",
    }
}

fn cmd_dp1(alpha: &str, beta: &str, gamma: &str, x0: &str, cfg: &RunConfig) -> (u8, Value) {
    let parse = |s: &str| parse_rational(s);
    let (a, b, g, x0) = match (parse(alpha), parse(beta), parse(gamma), parse(x0)) {
        (Ok(a), Ok(b), Ok(g), Ok(x)) => (a, b, g, x),
        _ => {
            return (
                2,
                json!({"error": "alpha, beta, gamma, x0 must be rationals"}),
            )
        }
    };
    let p = match DP1Params::with_lattice(a, b, g, cfg.h.clone(), x0) {
        Ok(p) => p,
        Err(e) => return (2, json!({"error": e.to_string()})),
    };
    let cont = match classify_continuous(&p) {
        Ok(c) => c,
        Err(e) => return (3, json!({"error": e.to_string(), "stage": "verify"})),
    };
    let disc = match discrete_symmetries_dp1(&p) {
        Ok(d) => d,
        Err(e) => {
            return (
                7,
                json!({"error": e.to_string(), "stage": "form-invariance"}),
            )
        }
    };
    let phi0_resid = verify_phi0_closed_form(g_to_f64(&p.gamma), 20, cfg.seed);
    (
        0,
        json!({
            "continuous": cont.to_json(),
            "discrete": disc.transformations.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            "conditions": disc.chain.steps,
            "phi0_closed_form_max_residual": phi0_resid,
            "k0_note": "the K0 flow shifts x and only changes the parameter beta; it cannot produce a discrete transformation",
        }),
    )
}

fn g_to_f64(r: &BigRational) -> f64 {
    let n: f64 = r.numer().to_string().parse().unwrap_or(f64::NAN);
    let d: f64 = r.denom().to_string().parse().unwrap_or(f64::NAN);
    n / d
}

fn cmd_demo(which: DemoKind, cfg: &RunConfig) -> (u8, Value) {
    match which {
        DemoKind::Toda => {
            let alg = LieAlgebra::from_json(&serde_json::from_str(TODA_ALGEBRA).unwrap())
                .expect("embedded algebra");
            let flds =
                parse_fields(&serde_json::from_str(TODA_FIELDS).unwrap(), &cfg.h).expect("fields");
            let sys = parse_system(&serde_json::from_str(TODA_EQUATION).unwrap(), &cfg.h)
                .expect("equation");
            match discrete_pipeline(Some(&alg), &flds, &sys, &cfg.pipeline_opts()) {
                Ok(report) => (0, report.to_json()),
                Err((stage, e)) => (stage, json!({"error": e, "stage": stage_name(stage)})),
            }
        }
        DemoKind::Dp1 => {
            let run = |a: i64, b: i64, g: i64| {
                let p = DP1Params::with_lattice(
                    rat(a, 1),
                    rat(b, 1),
                    rat(g, 1),
                    cfg.h.clone(),
                    rat(0, 1),
                )
                .unwrap();
                let cont = classify_continuous(&p).unwrap();
                let disc = discrete_symmetries_dp1(&p).unwrap();
                json!({
                    "alpha": a, "beta": b, "gamma": g,
                    "continuous": cont.to_json(),
                    "discrete": disc.transformations.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
                })
            };
            (
                0,
                json!({
                    "cases": [run(1, 3, 6), run(0, 3, 6), run(0, 0, 6), run(1, 3, 0)],
                    "phi0_closed_form_max_residual": verify_phi0_closed_form(6.0, 20, cfg.seed),
                }),
            )
        }
        DemoKind::Volterra => {
            let flds = parse_fields(&serde_json::from_str(VOLTERRA_FIELDS).unwrap(), &cfg.h)
                .expect("fields");
            let sys = parse_system(&serde_json::from_str(VOLTERRA_EQUATION).unwrap(), &cfg.h)
                .expect("equation");
            let pipeline_out = match discrete_pipeline(None, &flds, &sys, &cfg.pipeline_opts()) {
                Ok(report) => report.to_json(),
                Err((stage, e)) => return (stage, json!({"error": e, "stage": stage_name(stage)})),
            };
            (
                0,
                json!({
                    "determining_equation": volterra_determining_note(),
                    "automorphism_route": pipeline_out,
                    "caveat": "the symmetry algebra here is the two-dimensional one derived from the shipped fields; conclusions are modulo that algebra",
                }),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// text rendering
// ---------------------------------------------------------------------------

fn render_text(v: &Value) -> String {
    let mut out = String::new();
    render_value(v, 0, &mut out);
    out
}

fn render_value(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(m) => {
            for (k, val) in m {
                match val {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render_value(val, indent + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", render_scalar(val))),
                }
            }
        }
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str(&format!("{pad}(none)\n"));
            }
            for (i, val) in a.iter().enumerate() {
                match val {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}- [{i}]\n"));
                        render_value(val, indent + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}- {}\n", render_scalar(val))),
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", render_scalar(other))),
    }
}

fn render_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
