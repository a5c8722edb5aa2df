//! Prefix-notation JSON encoding of expressions.
//!
//! ```text
//! expr     := number | "p/q" | "decimal"
//!           | ["const", number | string]
//!           | ["par", name]
//!           | ["add", expr, ...] | ["mul", expr, ...]
//!           | ["pow", expr, rational] | ["ln", expr]
//!           | ["sub", expr, expr] | ["neg", expr] | ["div", expr, expr] | ["sqrt", expr]
//! ```
//!
//! The last row is input sugar; the writer only emits the core forms.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde_json::Value;

use super::{Expr, Node, ParamSet, Rational};
use crate::error::{Error, Result};

/// Parses `"p/q"`, an integer, or a decimal literal (optionally with an
/// exponent) into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::InvalidExpr(format!("bad rational literal `{s}`"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(BigRational::new(n, d)));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let all: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(all);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    if neg {
        r = -r;
    }
    Ok(Rational::new(r))
}

fn rational_from_value(v: &Value) -> Result<Rational> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Rational::integer(i))
            } else {
                parse_rational(&n.to_string())
            }
        }
        Value::String(s) => parse_rational(s),
        other => Err(Error::InvalidExpr(format!(
            "expected a number, got {other}"
        ))),
    }
}

fn rational_to_value(r: &Rational) -> Value {
    if r.is_integer() {
        if let Some(i) = r.exact().to_integer().to_i64() {
            return Value::from(i);
        }
    }
    Value::String(r.to_string())
}

/// Decodes an expression. Unknown parameter names are registered in
/// `params` when `allow_new` is set and rejected otherwise.
pub fn expr_from_json(v: &Value, params: &mut ParamSet, allow_new: bool) -> Result<Expr> {
    match v {
        Value::Number(_) | Value::String(_) => Ok(Expr::constant(rational_from_value(v)?)),
        Value::Array(items) => {
            let (head, args) = items
                .split_first()
                .ok_or_else(|| Error::InvalidExpr("empty expression array".into()))?;
            let op = head
                .as_str()
                .ok_or_else(|| Error::InvalidExpr(format!("operator must be a string: {head}")))?;
            let arity = |n: usize| -> Result<()> {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(Error::InvalidExpr(format!(
                        "`{op}` takes {n} argument(s), got {}",
                        args.len()
                    )))
                }
            };
            let mut sub = |x: &Value| expr_from_json(x, params, allow_new);
            match op {
                "const" => {
                    arity(1)?;
                    Ok(Expr::constant(rational_from_value(&args[0])?))
                }
                "par" => {
                    arity(1)?;
                    let name = args[0].as_str().ok_or_else(|| {
                        Error::InvalidExpr("parameter name must be a string".into())
                    })?;
                    let id = match params.id(name) {
                        Some(id) => id,
                        None if allow_new => params.insert(name),
                        None => return Err(Error::UnknownParameter(name.to_string())),
                    };
                    Ok(Expr::param(id))
                }
                "add" | "mul" => {
                    if args.is_empty() {
                        return Err(Error::InvalidExpr(format!("`{op}` needs arguments")));
                    }
                    let xs = args.iter().map(&mut sub).collect::<Result<Vec<_>>>()?;
                    Ok(if op == "add" {
                        Expr::sum(xs)
                    } else {
                        Expr::product(xs)
                    })
                }
                "pow" => {
                    arity(2)?;
                    let b = sub(&args[0])?;
                    Ok(b.powr(rational_from_value(&args[1])?))
                }
                "ln" => {
                    arity(1)?;
                    Ok(sub(&args[0])?.ln())
                }
                "sqrt" => {
                    arity(1)?;
                    Ok(sub(&args[0])?.sqrt())
                }
                "neg" => {
                    arity(1)?;
                    Ok(sub(&args[0])?.neg())
                }
                "sub" | "div" => {
                    arity(2)?;
                    let a = sub(&args[0])?;
                    let b = sub(&args[1])?;
                    Ok(if op == "sub" { a.sub(&b) } else { a.div(&b) })
                }
                other => Err(Error::InvalidExpr(format!("unknown operator `{other}`"))),
            }
        }
        other => Err(Error::InvalidExpr(format!(
            "cannot decode expression from {other}"
        ))),
    }
}

/// Encodes an expression using only the core operators.
pub fn expr_to_json(e: &Expr, params: &ParamSet) -> Value {
    match e.node() {
        Node::Const(c) => rational_to_value(c),
        Node::Param(p) => {
            let name = params
                .name(*p)
                .map(str::to_string)
                .unwrap_or_else(|| format!("v{}", p.0));
            Value::Array(vec!["par".into(), name.into()])
        }
        Node::Add(xs) | Node::Mul(xs) => {
            let op = if matches!(e.node(), Node::Add(_)) {
                "add"
            } else {
                "mul"
            };
            let mut out = vec![Value::from(op)];
            out.extend(xs.iter().map(|x| expr_to_json(x, params)));
            Value::Array(out)
        }
        Node::Pow(b, q) => Value::Array(vec![
            "pow".into(),
            expr_to_json(b, params),
            rational_to_value(q),
        ]),
        Node::Ln(a) => Value::Array(vec!["ln".into(), expr_to_json(a, params)]),
    }
}
