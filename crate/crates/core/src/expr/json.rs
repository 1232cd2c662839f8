//! JSON AST for expressions, the wire format of the CLI:
//!
//! ```text
//! {"rat": "p/q"}
//! {"var": "u", "offset": {"n": 1}, "deriv": ["t", "t"]}
//! {"op": "add"|"mul"|"pow"|"exp"|"div"|"neg", "args": [...]}
//! {"seq": {"axis": "n", "values": ["1", "0", "-1"], "phase": 0}}
//! ```
//!
//! `pow` takes `[base, {"rat": "k"}]` with an integer exponent. `neg` is
//! accepted on input; output is always in normalized form.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde_json::{json, Map, Value};
use std::str::FromStr;

use super::{Expr, ExprError, SeqTerm, Symbol};

pub fn rat_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat_from_string(s: &str) -> Result<BigRational, ExprError> {
    let bad = || ExprError::Json(format!("invalid rational `{s}`"));
    match s.split_once('/') {
        Some((num, den)) => {
            let n = BigInt::from_str(num.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(den.trim()).map_err(|_| bad())?;
            if d == BigInt::from(0) {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => {
            let n = BigInt::from_str(s.trim()).map_err(|_| bad())?;
            Ok(BigRational::from_integer(n))
        }
    }
}

impl Expr {
    pub fn to_json(&self) -> Value {
        match self {
            Expr::Rat(r) => json!({ "rat": rat_to_string(r) }),
            Expr::Var(s) => {
                let mut m = Map::new();
                m.insert("var".into(), Value::String(s.name.clone()));
                if !s.offsets.is_empty() {
                    let mut off = Map::new();
                    for (axis, k) in &s.offsets {
                        off.insert(axis.clone(), json!(k));
                    }
                    m.insert("offset".into(), Value::Object(off));
                }
                if !s.derivs.is_empty() {
                    m.insert(
                        "deriv".into(),
                        Value::Array(s.derivs.iter().map(|d| json!(d)).collect()),
                    );
                }
                Value::Object(m)
            }
            Expr::Add(ts) => {
                json!({ "op": "add", "args": ts.iter().map(|t| t.to_json()).collect::<Vec<_>>() })
            }
            Expr::Mul(fs) => {
                json!({ "op": "mul", "args": fs.iter().map(|f| f.to_json()).collect::<Vec<_>>() })
            }
            Expr::Pow(b, k) => {
                json!({ "op": "pow", "args": [b.to_json(), { "rat": k.to_string() }] })
            }
            Expr::Exp(a) => json!({ "op": "exp", "args": [a.to_json()] }),
            Expr::Div(n, d) => json!({ "op": "div", "args": [n.to_json(), d.to_json()] }),
            Expr::Seq(s) => json!({ "seq": {
                "axis": s.axis,
                "values": s.values.iter().map(rat_to_string).collect::<Vec<_>>(),
                "phase": s.phase,
            }}),
        }
    }

    /// Parse an expression from its JSON AST and normalize it.
    pub fn from_json(v: &Value) -> Result<Expr, ExprError> {
        Ok(parse(v)?.normalize())
    }
}

fn parse(v: &Value) -> Result<Expr, ExprError> {
    let obj = match v {
        Value::Object(m) => m,
        Value::Number(n) => {
            // bare integers are accepted as rationals
            let i = n
                .as_i64()
                .ok_or_else(|| ExprError::Json(format!("non-integer number {n}")))?;
            return Ok(Expr::int(i));
        }
        other => return Err(ExprError::Json(format!("expected object, got {other}"))),
    };
    if let Some(r) = obj.get("rat") {
        let s = r
            .as_str()
            .map(|s| s.to_string())
            .or_else(|| r.as_i64().map(|i| i.to_string()))
            .ok_or_else(|| ExprError::Json(format!("bad rat value {r}")))?;
        return Ok(Expr::Rat(rat_from_string(&s)?));
    }
    if let Some(name) = obj.get("var") {
        let name = name
            .as_str()
            .ok_or_else(|| ExprError::Json("var name must be a string".into()))?;
        let mut sym = Symbol::new(name);
        if let Some(off) = obj.get("offset") {
            let off = off
                .as_object()
                .ok_or_else(|| ExprError::Json("offset must be an object".into()))?;
            for (axis, k) in off {
                let k = k.as_i64().ok_or_else(|| {
                    ExprError::Json(format!("offset for {axis} must be an integer"))
                })?;
                sym.set_offset(axis, k);
            }
        }
        if let Some(der) = obj.get("deriv") {
            let der = der
                .as_array()
                .ok_or_else(|| ExprError::Json("deriv must be an array".into()))?;
            for d in der {
                sym.derivs.push(
                    d.as_str()
                        .ok_or_else(|| ExprError::Json("deriv entries must be strings".into()))?
                        .to_string(),
                );
            }
        }
        return Ok(Expr::Var(sym));
    }
    if let Some(seq) = obj.get("seq") {
        let seq = seq
            .as_object()
            .ok_or_else(|| ExprError::Json("seq must be an object".into()))?;
        let axis = seq
            .get("axis")
            .and_then(|a| a.as_str())
            .ok_or_else(|| ExprError::Json("seq.axis must be a string".into()))?;
        let values = seq
            .get("values")
            .and_then(|a| a.as_array())
            .ok_or_else(|| ExprError::Json("seq.values must be an array".into()))?;
        let mut vals = Vec::with_capacity(values.len());
        for v in values {
            let s = v
                .as_str()
                .map(|s| s.to_string())
                .or_else(|| v.as_i64().map(|i| i.to_string()))
                .ok_or_else(|| ExprError::Json("seq values must be rationals".into()))?;
            vals.push(rat_from_string(&s)?);
        }
        if vals.is_empty() {
            return Err(ExprError::Json("seq.values must be nonempty".into()));
        }
        let phase = seq.get("phase").and_then(|p| p.as_i64()).unwrap_or(0);
        return Ok(Expr::Seq(SeqTerm {
            axis: axis.to_string(),
            values: vals,
            phase,
        }));
    }
    let op = obj
        .get("op")
        .and_then(|o| o.as_str())
        .ok_or_else(|| ExprError::Json(format!("missing op in {v}")))?;
    let args = obj
        .get("args")
        .and_then(|a| a.as_array())
        .ok_or_else(|| ExprError::Json(format!("missing args for op {op}")))?;
    let parsed: Result<Vec<Expr>, ExprError> = args.iter().map(parse).collect();
    let mut parsed = parsed?;
    match op {
        "add" => Ok(Expr::Add(parsed)),
        "mul" => Ok(Expr::Mul(parsed)),
        "neg" => {
            if parsed.len() != 1 {
                return Err(ExprError::Json("neg takes one argument".into()));
            }
            Ok(Expr::Mul(vec![Expr::int(-1), parsed.pop().unwrap()]))
        }
        "exp" => {
            if parsed.len() != 1 {
                return Err(ExprError::Json("exp takes one argument".into()));
            }
            Ok(Expr::Exp(Box::new(parsed.pop().unwrap())))
        }
        "div" => {
            if parsed.len() != 2 {
                return Err(ExprError::Json("div takes two arguments".into()));
            }
            let d = parsed.pop().unwrap();
            let n = parsed.pop().unwrap();
            Ok(Expr::Div(Box::new(n), Box::new(d)))
        }
        "pow" => {
            if parsed.len() != 2 {
                return Err(ExprError::Json("pow takes two arguments".into()));
            }
            let e = parsed.pop().unwrap();
            let b = parsed.pop().unwrap();
            let k = match e {
                Expr::Rat(r) if r.is_integer() => {
                    use num_traits::ToPrimitive;
                    r.numer()
                        .to_i64()
                        .ok_or_else(|| ExprError::Json("pow exponent out of range".into()))?
                }
                other => {
                    return Err(ExprError::Json(format!(
                        "pow exponent must be an integer rational, got {other:?}"
                    )))
                }
            };
            Ok(Expr::Pow(Box::new(b), k))
        }
        other => Err(ExprError::Json(format!("unknown op `{other}`"))),
    }
}
