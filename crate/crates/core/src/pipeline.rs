//! The end-to-end discrete-symmetry pipeline: verify the symmetry algebra,
//! compute and normalize automorphism families, realize each family as a
//! point transformation, determine the admissible parameter values by form
//! invariance, and reduce the discrete instances to a generating set modulo
//! the continuous group.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use num_rational::BigRational;

use crate::autosolve::{generate_automorphism_system, normalize_inner, solve_automorphism_system};
use crate::expr::{Expr, IdentityOptions, Symbol};
use crate::latfield::{verify_symmetry_algebra, DifferenceSystem, LatticeVectorField};
use crate::liealg::LieAlgebra;
use crate::realize::{
    check_form_invariance, realization_system, solve_realization, AdmissibleInstance,
    Classification, PointTransformation,
};

/// Knobs shared by every pipeline stage.
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    /// Lattice spacing instantiated throughout.
    pub h: BigRational,
    pub identity: IdentityOptions,
}

impl PipelineOptions {
    pub fn new(h: BigRational) -> Self {
        PipelineOptions {
            h,
            identity: IdentityOptions::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.identity.seed
    }

    pub fn identity_opts(&self) -> IdentityOptions {
        self.identity.clone()
    }
}

pub fn verify_stage(
    declared: &LieAlgebra,
    fields: &[LatticeVectorField],
    system: &DifferenceSystem,
    cfg: &PipelineOptions,
) -> Result<Value, String> {
    let (value, _algebra) = verify_inner(Some(declared), fields, system, cfg)?;
    Ok(value)
}

fn verify_inner(
    declared: Option<&LieAlgebra>,
    fields: &[LatticeVectorField],
    system: &DifferenceSystem,
    cfg: &PipelineOptions,
) -> Result<(Value, LieAlgebra), String> {
    let report =
        verify_symmetry_algebra(fields, system, &cfg.identity_opts()).map_err(|e| e.to_string())?;
    if !report.all_fields_ok() {
        return Err(format!(
            "fields failed invariance: {}",
            report.failures.join("; ")
        ));
    }
    let recovered = report
        .algebra
        .ok_or_else(|| format!("brackets do not close: {}", report.failures.join("; ")))?;
    let validation = recovered.check(&cfg.h).map_err(|e| e.to_string())?;
    if !validation.is_valid() {
        return Err(format!("recovered constants invalid: {validation}"));
    }
    let mut matches_declared = None;
    if let Some(declared) = declared {
        if declared.dim != recovered.dim {
            return Err(format!(
                "declared algebra has dim {}, fields give {}",
                declared.dim, recovered.dim
            ));
        }
        let dc = declared.constants_at(&cfg.h).map_err(|e| e.to_string())?;
        let rc = recovered.constants_at(&cfg.h).map_err(|e| e.to_string())?;
        if dc != rc {
            return Err("declared structure constants differ from the recovered ones".into());
        }
        matches_declared = Some(true);
    }
    let value = json!({
        "fields_ok": report.field_ok,
        "algebra": recovered.to_json(),
        "matches_declared": matches_declared,
    });
    Ok((value, recovered))
}

/// One realized family with its form-invariance outcome.
pub struct FamilyOutcome {
    pub family_json: Value,
    pub realization_diagnostics: Vec<String>,
    pub instances: Vec<AdmissibleInstance>,
    pub transformations: Vec<PointTransformation>,
}

pub struct PipelineReport {
    pub verify: Value,
    pub families: Vec<FamilyOutcome>,
    /// minimal generating set of the pinned discrete instances, modulo the
    /// continuous group and products of earlier generators
    pub discrete_generators: Vec<PointTransformation>,
    pub continuous_instances: Vec<PointTransformation>,
    /// admissible families with free parameters: (maps, representatives)
    pub admissible_families: Vec<Value>,
}

impl PipelineReport {
    pub fn to_json(&self) -> Value {
        json!({
            "verify": self.verify,
            "families": self.families.iter().map(|f| json!({
                "family": f.family_json,
                "transformations": f.transformations.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
                "diagnostics": f.realization_diagnostics,
                "admissible": f.instances.iter().map(|inst| json!({
                    "params": inst.values.iter().map(|(k, v)| (k.name.clone(), v.to_json())).collect::<serde_json::Map<String, Value>>(),
                    "free": inst.free.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
                    "class": inst.class.as_str(),
                    "map": inst.transformation.maps.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<String, Value>>(),
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "discrete": self.discrete_generators.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            "continuous_connected": self.continuous_instances.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            "admissible_families": self.admissible_families,
        })
    }
}

/// Run the full pipeline. When `declared` is None the algebra recovered from
/// the fields is used (Volterra-style usage where only the fields ship).
pub fn discrete_pipeline(
    declared: Option<&LieAlgebra>,
    fields: &[LatticeVectorField],
    system: &DifferenceSystem,
    cfg: &PipelineOptions,
) -> Result<PipelineReport, (u8, String)> {
    let (verify_json, recovered) =
        verify_inner(declared, fields, system, cfg).map_err(|e| (3u8, e))?;
    let algebra = declared.cloned().unwrap_or(recovered);

    let eqs = generate_automorphism_system(&algebra, &cfg.h).map_err(|e| (4u8, e.to_string()))?;
    let raw_families = solve_automorphism_system(&eqs, algebra.dim, cfg.seed())
        .map_err(|e| (5u8, e.to_string()))?;
    let families: Vec<_> = raw_families
        .iter()
        .map(|f| normalize_inner(f, &algebra, &cfg.h))
        .collect::<Result<_, _>>()
        .map_err(|e| (5u8, e.to_string()))?;

    let mut coords = system.independent.clone();
    coords.push(system.dependent.clone());

    let mut outcomes = Vec::new();
    for fam in &families {
        let rsys = realization_system(fam, fields, &coords, &system.dependent)
            .map_err(|e| (6u8, e.to_string()))?;
        let solved = solve_realization(&rsys, fields, &system.dependent, &cfg.identity_opts())
            .map_err(|e| (6u8, e.to_string()))?;
        let mut instances = Vec::new();
        for t in &solved.transformations {
            let report = check_form_invariance(t, system, fields, &cfg.identity_opts())
                .map_err(|e| (7u8, e.to_string()))?;
            instances.extend(report.instances);
        }
        outcomes.push(FamilyOutcome {
            family_json: fam.to_json(),
            realization_diagnostics: solved.diagnostics,
            transformations: solved.transformations,
            instances,
        });
    }

    // split pinned instances by classification; families with free
    // parameters are reported with classified representatives
    let mut discrete_pinned: Vec<PointTransformation> = Vec::new();
    let mut continuous_instances: Vec<PointTransformation> = Vec::new();
    let mut admissible_families: Vec<Value> = Vec::new();
    for fo in &outcomes {
        for inst in &fo.instances {
            if inst.free.is_empty() {
                match inst.class {
                    Classification::Discrete => {
                        if !discrete_pinned
                            .iter()
                            .any(|t| t.maps == inst.transformation.maps)
                        {
                            discrete_pinned.push(inst.transformation.clone());
                        }
                    }
                    Classification::ContinuousConnected => {
                        continuous_instances.push(inst.transformation.clone());
                    }
                    _ => {}
                }
            } else {
                admissible_families.push(classify_family(inst, system, fields, cfg));
            }
        }
    }
    let discrete_generators = reduce_to_generators(&discrete_pinned, &coords);

    Ok(PipelineReport {
        verify: verify_json,
        families: outcomes,
        discrete_generators,
        continuous_instances,
        admissible_families,
    })
}

/// Classify representatives of an admissible family: one generic positive
/// parameter value and the sign-flipped involution candidate.
fn classify_family(
    inst: &AdmissibleInstance,
    system: &DifferenceSystem,
    fields: &[LatticeVectorField],
    cfg: &PipelineOptions,
) -> Value {
    let mut reps = Vec::new();
    for val in [Expr::int(2), Expr::int(-1)] {
        let values: BTreeMap<Symbol, Expr> =
            inst.free.iter().map(|s| (s.clone(), val.clone())).collect();
        let pinned = inst.transformation.with_params(&values);
        let class = match check_form_invariance(&pinned, system, fields, &cfg.identity_opts()) {
            Ok(report) => report
                .instances
                .first()
                .map(|i| i.class)
                .unwrap_or(Classification::NotASymmetry),
            Err(_) => Classification::NotASymmetry,
        };
        reps.push(json!({
            "value": val.to_json(),
            "map": pinned.maps.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<String, Value>>(),
            "class": class.as_str(),
        }));
    }
    json!({
        "map": inst.transformation.maps.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<String, Value>>(),
        "free": inst.free.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
        "representatives": reps,
    })
}

/// Greedy minimal generating set: instances closest to the identity first;
/// an instance already generated by the chosen ones is dropped.
fn reduce_to_generators(
    instances: &[PointTransformation],
    coords: &[String],
) -> Vec<PointTransformation> {
    let mut sorted: Vec<&PointTransformation> = instances.iter().collect();
    sorted.sort_by_key(|t| {
        let flips = t
            .maps
            .iter()
            .filter(|(w, e)| **e != Expr::var((*w).clone()))
            .count();
        (flips, format!("{:?}", t.maps))
    });
    let identity = PointTransformation::identity(coords);
    let mut generators: Vec<PointTransformation> = Vec::new();
    let mut closure: Vec<BTreeMap<String, Expr>> = vec![identity.maps.clone()];
    for cand in sorted {
        if closure.contains(&cand.maps) {
            continue;
        }
        generators.push(cand.clone());
        // recompute the closure of the chosen generators (tiny groups; cap
        // guards against runaway input)
        closure = vec![identity.maps.clone()];
        let mut frontier = vec![identity.clone()];
        while let Some(g) = frontier.pop() {
            for gen in &generators {
                let next = gen.compose(&g);
                if !closure.contains(&next.maps) {
                    closure.push(next.maps.clone());
                    frontier.push(next);
                }
            }
            if closure.len() > 128 {
                break;
            }
        }
    }
    generators
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::rat;

    /// An equation whose symmetry algebra is one-dimensional abelian has no
    /// pinned discrete symmetry: the only automorphisms are scalings, whose
    /// realizations stay in a continuous admissible family.
    #[test]
    fn abelian_toy_equation_yields_no_discrete_generators() {
        let u = |k: i64| Expr::sym(crate::expr::Symbol::new("u").at("n", k));
        let system = DifferenceSystem {
            delta: Expr::add(vec![
                u(1),
                u(0),
                u(-1),
                Expr::neg(Expr::div(Expr::int(3), u(0))),
                Expr::int(-6),
            ]),
            lattice: vec![Expr::add(vec![
                Expr::sym(crate::expr::Symbol::new("x").at("n", 1)),
                Expr::neg(Expr::var("x")),
                Expr::neg(Expr::Rat(rat(7, 3))),
            ])],
            stencil: [("n".to_string(), (-1, 1))].into_iter().collect(),
            dependent: "u".into(),
            independent: vec!["x".into()],
            singular: vec![Expr::var("u")],
            eliminate: None,
        };
        let d_x = LatticeVectorField::new(
            [("x".to_string(), Expr::one())].into_iter().collect(),
            Expr::zero(),
        );
        let opts = PipelineOptions::new(rat(7, 3));
        let report = discrete_pipeline(None, &[d_x], &system, &opts).unwrap();
        assert!(report.discrete_generators.is_empty());
    }
}
