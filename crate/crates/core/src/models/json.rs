//! JSON model format.
//!
//! ```text
//! {
//!   "format": "prmc-sense-v1",
//!   "parameters": ["v1", ...],          optional; otherwise collected in order of use
//!   "states": n,
//!   "initial": [p_0, ..., p_{n-1}],
//!   "rewards": [r_0, ..., r_{n-1}],
//!   "terminal": [s, ...],
//!   "adversary": "min",                 optional, prMC only
//!   "pmc_rows": [[[succ, expr], ...], ...]                      one row per state
//!   "prmc_rows": [{"support": [...], "A": [[expr, ...], ...], "b": [expr, ...]} | null, ...]
//! }
//! ```
//!
//! A prMC row may instead be written `{"intervals": [[succ, lower, upper], ...]}`.
//! Expressions use the prefix grammar of [`crate::expr::expr_from_json`].

use serde_json::{json, Map, Value};

use super::{ParametricPolytope, Pmc, Prmc};
use crate::error::{Error, Result};
use crate::expr::{expr_from_json, expr_to_json, Expr, Instantiation, ParamSet};

pub const FORMAT_TAG: &str = "prmc-sense-v1";

#[derive(Clone, Debug)]
pub enum Model {
    Pmc(Pmc),
    Prmc(Prmc),
}

impl Model {
    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Pmc(m) => m.params(),
            Model::Prmc(m) => m.params(),
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            Model::Pmc(m) => m.num_states(),
            Model::Prmc(m) => m.num_states(),
        }
    }

    pub fn num_transitions(&self) -> usize {
        match self {
            Model::Pmc(m) => m.num_transitions(),
            Model::Prmc(m) => m.num_transitions(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| bad(format!("missing field `{key}`")))
}

fn f64_array(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| bad(format!("`{what}` must be an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| bad(format!("`{what}` entries must be numbers")))
        })
        .collect()
}

fn index_array(v: &Value, what: &str) -> Result<Vec<usize>> {
    v.as_array()
        .ok_or_else(|| bad(format!("`{what}` must be an array")))?
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|i| i as usize)
                .ok_or_else(|| bad(format!("`{what}` entries must be state indices")))
        })
        .collect()
}

pub fn model_from_json(v: &Value) -> Result<Model> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad("model must be a JSON object"))?;
    match obj.get("format").and_then(Value::as_str) {
        Some(FORMAT_TAG) => {}
        Some(other) => return Err(bad(format!("unsupported format tag `{other}`"))),
        None => return Err(bad(format!("missing format tag, expected `{FORMAT_TAG}`"))),
    }
    let (mut params, open) = match obj.get("parameters") {
        Some(p) => {
            let names = p
                .as_array()
                .ok_or_else(|| bad("`parameters` must be an array"))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .ok_or_else(|| bad("parameter names must be strings"))
                })
                .collect::<Result<Vec<_>>>()?;
            (ParamSet::from_names(names)?, false)
        }
        None => (ParamSet::new(), true),
    };
    let n = field(obj, "states")?
        .as_u64()
        .ok_or_else(|| bad("`states` must be a count"))? as usize;
    let initial = f64_array(field(obj, "initial")?, "initial")?;
    let rewards = f64_array(field(obj, "rewards")?, "rewards")?;
    let terminal = index_array(field(obj, "terminal")?, "terminal")?;
    if let Some(a) = obj.get("adversary") {
        if a.as_str() != Some("min") {
            return Err(bad("only minimizing adversaries are supported"));
        }
    }
    let check_len = |rows: &Vec<Value>| -> Result<()> {
        if rows.len() != n {
            return Err(bad(format!("{} rows given for {n} states", rows.len())));
        }
        Ok(())
    };
    match (obj.get("pmc_rows"), obj.get("prmc_rows")) {
        (Some(rows), None) => {
            let rows = rows
                .as_array()
                .ok_or_else(|| bad("`pmc_rows` must be an array"))?;
            check_len(rows)?;
            let mut out = Vec::with_capacity(n);
            for row in rows {
                let row = row
                    .as_array()
                    .ok_or_else(|| bad("each pMC row must be an array"))?;
                let mut entries = Vec::with_capacity(row.len());
                for e in row {
                    let pair = e
                        .as_array()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| bad("transitions are [successor, expr]"))?;
                    let t = pair[0]
                        .as_u64()
                        .ok_or_else(|| bad("successor must be a state index"))?
                        as usize;
                    entries.push((t, expr_from_json(&pair[1], &mut params, open)?));
                }
                out.push(entries);
            }
            Ok(Model::Pmc(Pmc::new(
                params, initial, rewards, &terminal, out,
            )?))
        }
        (None, Some(rows)) => {
            let rows = rows
                .as_array()
                .ok_or_else(|| bad("`prmc_rows` must be an array"))?;
            check_len(rows)?;
            let mut polys = Vec::with_capacity(n);
            for row in rows {
                if row.is_null() {
                    polys.push(None);
                    continue;
                }
                let o = row
                    .as_object()
                    .ok_or_else(|| bad("each prMC row must be an object or null"))?;
                if let Some(iv) = o.get("intervals") {
                    let iv = iv
                        .as_array()
                        .ok_or_else(|| bad("`intervals` must be an array"))?;
                    let mut entries = Vec::with_capacity(iv.len());
                    for e in iv {
                        let t = e
                            .as_array()
                            .filter(|t| t.len() == 3)
                            .ok_or_else(|| bad("intervals are [successor, lower, upper]"))?;
                        let s = t[0]
                            .as_u64()
                            .ok_or_else(|| bad("successor must be a state index"))?
                            as usize;
                        let lo = expr_from_json(&t[1], &mut params, open)?;
                        let hi = expr_from_json(&t[2], &mut params, open)?;
                        entries.push((s, lo, hi));
                    }
                    polys.push(Some(ParametricPolytope::from_intervals(entries)?));
                    continue;
                }
                let support = index_array(field(o, "support")?, "support")?;
                let a = field(o, "A")?
                    .as_array()
                    .ok_or_else(|| bad("`A` must be an array of rows"))?
                    .iter()
                    .map(|r| {
                        r.as_array()
                            .ok_or_else(|| bad("`A` rows must be arrays"))?
                            .iter()
                            .map(|e| expr_from_json(e, &mut params, open))
                            .collect::<Result<Vec<Expr>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let b = field(o, "b")?
                    .as_array()
                    .ok_or_else(|| bad("`b` must be an array"))?
                    .iter()
                    .map(|e| expr_from_json(e, &mut params, open))
                    .collect::<Result<Vec<_>>>()?;
                polys.push(Some(ParametricPolytope::new(support, a, b)?));
            }
            Ok(Model::Prmc(Prmc::new(
                params, initial, rewards, &terminal, polys,
            )?))
        }
        (Some(_), Some(_)) => Err(bad("give either `pmc_rows` or `prmc_rows`, not both")),
        (None, None) => Err(bad("missing `pmc_rows` or `prmc_rows`")),
    }
}

pub fn model_to_json(m: &Model) -> Value {
    let params = m.params();
    let (initial, rewards, terminal) = match m {
        Model::Pmc(p) => (p.initial(), p.rewards(), p.terminal_states()),
        Model::Prmc(p) => (p.initial(), p.rewards(), p.terminal_states()),
    };
    let mut out = json!({
        "format": FORMAT_TAG,
        "parameters": params.names(),
        "states": m.num_states(),
        "initial": initial,
        "rewards": rewards,
        "terminal": terminal,
    });
    let obj = out.as_object_mut().expect("object literal");
    match m {
        Model::Pmc(p) => {
            let rows: Vec<Value> = (0..p.num_states())
                .map(|s| {
                    Value::Array(
                        p.row(s)
                            .iter()
                            .map(|(t, e)| json!([t, expr_to_json(e, params)]))
                            .collect(),
                    )
                })
                .collect();
            obj.insert("pmc_rows".into(), Value::Array(rows));
        }
        Model::Prmc(p) => {
            obj.insert("adversary".into(), "min".into());
            let rows: Vec<Value> = (0..p.num_states())
                .map(|s| match p.polytope(s) {
                    None => Value::Null,
                    Some(poly) => json!({
                        "support": poly.support(),
                        "A": poly.a().iter().map(|r| r.iter().map(|e| expr_to_json(e, params)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                        "b": poly.b().iter().map(|e| expr_to_json(e, params)).collect::<Vec<_>>(),
                    }),
                })
                .collect();
            obj.insert("prmc_rows".into(), Value::Array(rows));
        }
    }
    out
}

/// Reads `{"name": value, ...}`; every parameter must be assigned.
pub fn instantiation_from_json(v: &Value, params: &ParamSet) -> Result<Instantiation> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad("instantiation must be a JSON object"))?;
    let mut pairs = Vec::with_capacity(obj.len());
    for (k, x) in obj {
        let val = x
            .as_f64()
            .ok_or_else(|| bad(format!("value of `{k}` must be a number")))?;
        pairs.push((k.as_str(), val));
    }
    Instantiation::from_named(params, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmc_round_trip() {
        let src = json!({
            "format": FORMAT_TAG,
            "states": 2,
            "initial": [1.0, 0.0],
            "rewards": [1.0, 0.0],
            "terminal": [1],
            "pmc_rows": [[[0, ["sub", 1, ["par", "v1"]]], [1, ["par", "v1"]]], []]
        });
        let m = model_from_json(&src).unwrap();
        assert_eq!(m.params().names(), &["v1".to_string()]);
        let out = model_to_json(&m);
        let back = model_from_json(&out).unwrap();
        assert_eq!(model_to_json(&back), out);
        let u = instantiation_from_json(&json!({"v1": 0.25}), back.params()).unwrap();
        match back {
            Model::Pmc(p) => assert_eq!(p.instantiate(&u).unwrap().row(0), &[(0, 0.75), (1, 0.25)]),
            Model::Prmc(_) => panic!("expected a pMC"),
        }
    }

    #[test]
    fn prmc_intervals_sugar_and_round_trip() {
        let src = json!({
            "format": FORMAT_TAG,
            "parameters": ["N"],
            "states": 3,
            "initial": [1, 0, 0],
            "rewards": [1, 0, 0],
            "terminal": [1, 2],
            "prmc_rows": [{"intervals": [[1, "3/10", "3/5"], [2, 0.4, ["div", 70, ["par", "N"]]]]}, null, null]
        });
        let m = model_from_json(&src).unwrap();
        let out = model_to_json(&m);
        assert_eq!(out["prmc_rows"][0]["b"][1], json!("-3/10"));
        let back = model_from_json(&out).unwrap();
        assert_eq!(model_to_json(&back), out);
    }

    #[test]
    fn rejects_bad_inputs() {
        let base = json!({
            "format": FORMAT_TAG, "states": 1, "initial": [1.0], "rewards": [0.0], "terminal": [0], "pmc_rows": [[]]
        });
        assert!(model_from_json(&base).is_ok());
        let mut v = base.clone();
        v["format"] = json!("other");
        assert!(model_from_json(&v).is_err());
        let mut v = base.clone();
        v["adversary"] = json!("max");
        assert!(model_from_json(&v).is_err());
        let mut v = base.clone();
        v["initial"] = json!([0.5]);
        assert!(model_from_json(&v).is_err());
        let mut v = base;
        v["parameters"] = json!([]);
        v["pmc_rows"] = json!([[[0, ["par", "x"]]]]);
        v["terminal"] = json!([]);
        assert!(matches!(
            model_from_json(&v),
            Err(Error::UnknownParameter(_))
        ));
    }
}
