//! Symbolic expressions over an ordered parameter set.
//!
//! An [`Expr`] is an immutable, reference-counted tree over rational
//! constants, parameter references, n-ary sums and products, rational powers
//! and natural logarithms. Constants are kept exact; evaluation happens in
//! `f64`. Construction performs constant folding and zero/one elimination and
//! nothing else.

mod json;

pub use json::{expr_from_json, expr_to_json, parse_rational};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational constant together with its `f64` image.
#[derive(Clone, Debug)]
pub struct Rational {
    exact: BigRational,
    value: f64,
}

impl Rational {
    pub fn new(exact: BigRational) -> Self {
        let value = ratio_to_f64(&exact);
        Rational { exact, value }
    }

    pub fn integer(n: i64) -> Self {
        Rational::new(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn fraction(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rational::new(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Exact rational equal to the shortest decimal representation of `x`.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidExpr(format!("non-finite constant {x}")));
        }
        parse_rational(&format!("{x}"))
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_zero(&self) -> bool {
        self.exact.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.exact.is_one()
    }

    pub fn is_integer(&self) -> bool {
        self.exact.is_integer()
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        self.exact == other.exact
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    r.to_f64().unwrap_or(f64::NAN)
}

/// Dense parameter index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// A named parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parameter {
    pub id: ParamId,
    pub name: String,
}

/// Finite ordered parameter set with unique names and ids `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamSet {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = ParamSet::new();
        for n in names {
            let n = n.into();
            if set.index.contains_key(&n) {
                return Err(Error::InvalidModel(format!("duplicate parameter `{n}`")));
            }
            set.insert(n);
        }
        Ok(set)
    }

    /// Returns the id of `name`, registering it if new.
    pub fn insert(&mut self, name: impl Into<String>) -> ParamId {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            return ParamId(i);
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> Option<&str> {
        self.names.get(id.0).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = Parameter> + '_ {
        self.names.iter().enumerate().map(|(i, n)| Parameter {
            id: ParamId(i),
            name: n.clone(),
        })
    }
}

/// Real valuation of every parameter, indexed by [`ParamId`].
#[derive(Clone, Debug, PartialEq)]
pub struct Instantiation {
    values: Vec<f64>,
}

impl Instantiation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("parameter {i} has non-finite value")));
        }
        Ok(Instantiation { values })
    }

    pub fn empty() -> Self {
        Instantiation { values: Vec::new() }
    }

    /// Builds an instantiation from `(name, value)` pairs; every parameter of
    /// `params` must be assigned.
    pub fn from_named<'a, I>(params: &ParamSet, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut values = vec![f64::NAN; params.len()];
        for (name, v) in pairs {
            let id = params
                .id(name)
                .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
            values[id.0] = v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidModel(format!(
                "no value given for parameter `{}`",
                params.names[i]
            )));
        }
        Instantiation::new(values)
    }

    pub fn get(&self, id: ParamId) -> Result<f64> {
        self.values
            .get(id.0)
            .copied()
            .ok_or(Error::MissingParameter(id.0))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with parameter `id` shifted by `delta`.
    pub fn perturbed(&self, id: ParamId, delta: f64) -> Self {
        let mut values = self.values.clone();
        values[id.0] += delta;
        Instantiation { values }
    }

    pub fn with_value(&self, id: ParamId, value: f64) -> Self {
        let mut values = self.values.clone();
        values[id.0] = value;
        Instantiation { values }
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(Rational),
    Param(ParamId),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, Rational),
    Ln(Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    /// Sorted, deduplicated parameters occurring in the subtree.
    deps: Vec<ParamId>,
}

/// Immutable symbolic expression. Cloning is cheap.
#[derive(Clone, Debug)]
pub struct Expr(Arc<Inner>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.node == other.0.node
    }
}

fn merge_deps<'a>(children: impl IntoIterator<Item = &'a Expr>) -> Vec<ParamId> {
    let mut deps: Vec<ParamId> = children
        .into_iter()
        .flat_map(|c| c.0.deps.iter().copied())
        .collect();
    deps.sort_unstable();
    deps.dedup();
    deps
}

impl Expr {
    fn from_node(node: Node) -> Expr {
        let deps = match &node {
            Node::Const(_) => Vec::new(),
            Node::Param(p) => vec![*p],
            Node::Add(xs) | Node::Mul(xs) => merge_deps(xs),
            Node::Pow(b, _) | Node::Ln(b) => b.0.deps.clone(),
        };
        Expr(Arc::new(Inner { node, deps }))
    }

    pub fn constant(r: Rational) -> Expr {
        Expr::from_node(Node::Const(r))
    }

    pub fn integer(n: i64) -> Expr {
        Expr::constant(Rational::integer(n))
    }

    pub fn fraction(num: i64, den: i64) -> Expr {
        Expr::constant(Rational::fraction(num, den))
    }

    pub fn zero() -> Expr {
        Expr::integer(0)
    }

    pub fn one() -> Expr {
        Expr::integer(1)
    }

    /// Constant equal to the shortest decimal representation of `x`.
    pub fn from_f64(x: f64) -> Result<Expr> {
        Ok(Expr::constant(Rational::from_f64(x)?))
    }

    pub fn param(id: ParamId) -> Expr {
        Expr::from_node(Node::Param(id))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    /// Parameters occurring in the expression, sorted by id.
    pub fn params(&self) -> &[ParamId] {
        &self.0.deps
    }

    pub fn depends_on(&self, id: ParamId) -> bool {
        self.0.deps.binary_search(&id).is_ok()
    }

    pub fn is_constant(&self) -> bool {
        self.0.deps.is_empty()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match &self.0.node {
            Node::Const(r) => Some(r),
            _ => None,
        }
    }

    fn is_zero_const(&self) -> bool {
        self.as_rational().is_some_and(Rational::is_zero)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut acc = BigRational::zero();
        let mut rest = Vec::new();
        for t in terms {
            match &t.0.node {
                Node::Const(c) => acc += c.exact(),
                Node::Add(inner) => {
                    for u in inner {
                        match &u.0.node {
                            Node::Const(c) => acc += c.exact(),
                            _ => rest.push(u.clone()),
                        }
                    }
                }
                _ => rest.push(t),
            }
        }
        if !acc.is_zero() {
            rest.push(Expr::constant(Rational::new(acc)));
        }
        match rest.len() {
            0 => Expr::zero(),
            1 => rest.pop().unwrap(),
            _ => Expr::from_node(Node::Add(rest)),
        }
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut acc = BigRational::one();
        let mut rest = Vec::new();
        for f in factors {
            match &f.0.node {
                Node::Const(c) => acc *= c.exact(),
                Node::Mul(inner) => {
                    for g in inner {
                        match &g.0.node {
                            Node::Const(c) => acc *= c.exact(),
                            _ => rest.push(g.clone()),
                        }
                    }
                }
                _ => rest.push(f),
            }
        }
        if acc.is_zero() {
            return Expr::zero();
        }
        if !acc.is_one() {
            rest.insert(0, Expr::constant(Rational::new(acc)));
        }
        match rest.len() {
            0 => Expr::one(),
            1 => rest.pop().unwrap(),
            _ => Expr::from_node(Node::Mul(rest)),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        Expr::sum([self.clone(), other.clone()])
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        Expr::product([self.clone(), other.clone()])
    }

    pub fn neg(&self) -> Expr {
        Expr::product([Expr::integer(-1), self.clone()])
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: Rational) -> Expr {
        Expr::product([Expr::constant(c), self.clone()])
    }

    pub fn div(&self, other: &Expr) -> Expr {
        self.mul(&other.powr(Rational::integer(-1)))
    }

    pub fn sqrt(&self) -> Expr {
        self.powr(Rational::fraction(1, 2))
    }

    /// `self ^ exponent`. Integer powers of constants fold exactly.
    pub fn powr(&self, exponent: Rational) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return self.clone();
        }
        if let Node::Const(c) = &self.0.node {
            if exponent.is_integer() {
                if let Some(e) = exponent.exact().to_integer().to_i32() {
                    if !(c.is_zero() && e < 0) {
                        return Expr::constant(Rational::new(num_traits::pow::Pow::pow(
                            c.exact().clone(),
                            e,
                        )));
                    }
                }
            }
            if c.is_one() {
                return Expr::one();
            }
        }
        Expr::from_node(Node::Pow(self.clone(), exponent))
    }

    pub fn ln(&self) -> Expr {
        if self.as_rational().is_some_and(Rational::is_one) {
            return Expr::zero();
        }
        Expr::from_node(Node::Ln(self.clone()))
    }

    /// Evaluates the expression at `u`.
    pub fn eval(&self, u: &Instantiation) -> Result<f64> {
        match &self.0.node {
            Node::Const(c) => Ok(c.value()),
            Node::Param(p) => u.get(*p),
            Node::Add(xs) => xs.iter().try_fold(0.0, |acc, x| Ok(acc + x.eval(u)?)),
            Node::Mul(xs) => xs.iter().try_fold(1.0, |acc, x| Ok(acc * x.eval(u)?)),
            Node::Pow(b, e) => {
                let base = b.eval(u)?;
                if e.is_integer() {
                    if base == 0.0 && e.value() < 0.0 {
                        return Err(Error::Domain(format!(
                            "zero raised to negative power in `{self}`"
                        )));
                    }
                    Ok(base.powi(e.value() as i32))
                } else {
                    if base < 0.0 || (base == 0.0 && e.value() < 0.0) {
                        return Err(Error::Domain(format!(
                            "fractional power of {base} in `{self}`"
                        )));
                    }
                    Ok(base.powf(e.value()))
                }
            }
            Node::Ln(a) => {
                let x = a.eval(u)?;
                if x <= 0.0 {
                    return Err(Error::Domain(format!("logarithm of {x} in `{self}`")));
                }
                Ok(x.ln())
            }
        }
    }

    /// Symbolic partial derivative with respect to `v`.
    pub fn diff(&self, v: ParamId) -> Expr {
        if !self.depends_on(v) {
            return Expr::zero();
        }
        match &self.0.node {
            Node::Const(_) => Expr::zero(),
            Node::Param(p) => {
                if *p == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(xs) => Expr::sum(xs.iter().map(|x| x.diff(v))),
            Node::Mul(xs) => {
                let mut terms = Vec::new();
                for (i, x) in xs.iter().enumerate() {
                    let dx = x.diff(v);
                    if dx.is_zero_const() {
                        continue;
                    }
                    let others = xs
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, y)| y.clone());
                    terms.push(Expr::product(std::iter::once(dx).chain(others)));
                }
                Expr::sum(terms)
            }
            Node::Pow(b, e) => {
                let e_minus_one = Rational::new(e.exact().clone() - BigRational::one());
                Expr::product([Expr::constant(e.clone()), b.powr(e_minus_one), b.diff(v)])
            }
            Node::Ln(a) => a.diff(v).div(a),
        }
    }

    /// Replaces every occurrence of the parameters in `map` by the given
    /// expressions.
    pub fn substitute(&self, map: &BTreeMap<ParamId, Expr>) -> Expr {
        if !self.0.deps.iter().any(|p| map.contains_key(p)) {
            return self.clone();
        }
        match &self.0.node {
            Node::Const(_) => self.clone(),
            Node::Param(p) => map.get(p).cloned().unwrap_or_else(|| self.clone()),
            Node::Add(xs) => Expr::sum(xs.iter().map(|x| x.substitute(map))),
            Node::Mul(xs) => Expr::product(xs.iter().map(|x| x.substitute(map))),
            Node::Pow(b, e) => b.substitute(map).powr(e.clone()),
            Node::Ln(a) => a.substitute(map).ln(),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match &self.0.node {
            Node::Const(_) | Node::Param(_) => 1,
            Node::Add(xs) | Node::Mul(xs) => 1 + xs.iter().map(Expr::size).sum::<usize>(),
            Node::Pow(b, _) | Node::Ln(b) => 1 + b.size(),
        }
    }
}

impl From<ParamId> for Expr {
    fn from(p: ParamId) -> Self {
        Expr::param(p)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exact.is_integer() {
            write!(f, "{}", self.exact.numer())
        } else {
            write!(f, "{}/{}", self.exact.numer(), self.exact.denom())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.node {
            Node::Const(c) if c.exact.is_negative() || !c.is_integer() => write!(f, "({c})"),
            Node::Const(c) => write!(f, "{c}"),
            Node::Param(p) => write!(f, "v{}", p.0),
            Node::Add(xs) | Node::Mul(xs) => {
                let op = if matches!(self.0.node, Node::Add(_)) {
                    " + "
                } else {
                    "*"
                };
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            Node::Pow(b, e) => write!(f, "{b}^({e})"),
            Node::Ln(a) => write!(f, "ln{a}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: usize) -> Expr {
        Expr::param(ParamId(i))
    }

    fn at(values: &[f64]) -> Instantiation {
        Instantiation::new(values.to_vec()).unwrap()
    }

    #[test]
    fn affine_evaluation() {
        let e = Expr::integer(2).mul(&v(0)).add(&Expr::integer(3));
        assert_eq!(e.eval(&at(&[0.5])).unwrap(), 4.0);
    }

    #[test]
    fn zero_annihilates_product() {
        let e = v(0).mul(&v(1));
        assert_eq!(e.eval(&at(&[0.0, 7.0])).unwrap(), 0.0);
    }

    #[test]
    fn hoeffding_radius_plugin() {
        // ((ln 2 - ln 0.1) / (2 N))^(1/2) at N = 100; reference from mpmath at 40 digits.
        let num = Expr::integer(2).ln().sub(&Expr::fraction(1, 10).ln());
        let e = num.div(&Expr::integer(2).mul(&v(0))).sqrt();
        let got = e.eval(&at(&[100.0])).unwrap();
        assert!((got - 0.122_387_341_534_040_83).abs() < 1e-15, "{got}");
    }

    #[test]
    fn product_rule() {
        let e = v(0).mul(&v(1));
        assert_eq!(e.diff(ParamId(0)), v(1));
        assert!(Expr::fraction(3, 7).diff(ParamId(0)).is_zero_const());
    }

    #[test]
    fn hoeffding_radius_derivative() {
        let num = Expr::integer(2).ln().sub(&Expr::fraction(1, 10).ln());
        let e = num.div(&Expr::integer(2).mul(&v(0))).sqrt();
        let u = at(&[100.0]);
        let eps = e.eval(&u).unwrap();
        let d = e.diff(ParamId(0)).eval(&u).unwrap();
        assert!((d - (-eps / 200.0)).abs() <= 1e-12 * eps);
        let h = 1e-3;
        let fd =
            (e.eval(&at(&[100.0 + h])).unwrap() - e.eval(&at(&[100.0 - h])).unwrap()) / (2.0 * h);
        assert!((d - fd).abs() <= 1e-9 * d.abs().max(1e-300), "{d} vs {fd}");
    }

    #[test]
    fn domain_errors() {
        let e = v(0).ln();
        assert!(matches!(e.eval(&at(&[-1.0])), Err(Error::Domain(_))));
        let s = v(0).sqrt();
        assert!(matches!(s.eval(&at(&[-4.0])), Err(Error::Domain(_))));
        assert!(matches!(
            v(3).eval(&at(&[1.0])),
            Err(Error::MissingParameter(3))
        ));
        let inv = v(0).powr(Rational::integer(-1));
        assert!(inv.eval(&at(&[0.0])).is_err());
    }

    #[test]
    fn folding_and_elimination() {
        let e = Expr::sum([Expr::integer(1), Expr::fraction(1, 2), Expr::fraction(1, 2)]);
        assert_eq!(e.as_rational().unwrap(), &Rational::integer(2));
        assert_eq!(Expr::product([Expr::one(), v(2)]), v(2));
        assert!(Expr::product([Expr::zero(), v(2)]).is_zero_const());
        assert_eq!(Expr::sum([Expr::zero(), v(1)]), v(1));
        let c = Expr::fraction(2, 3).powr(Rational::integer(2));
        assert_eq!(c.as_rational().unwrap(), &Rational::fraction(4, 9));
        assert!(Expr::one().ln().is_zero_const());
    }

    #[test]
    fn substitution() {
        let e = Expr::one().sub(&v(0));
        let mut map = BTreeMap::new();
        map.insert(ParamId(0), Expr::fraction(1, 4));
        let s = e.substitute(&map);
        assert_eq!(s.as_rational().unwrap(), &Rational::fraction(3, 4));
    }

    #[test]
    fn param_set_is_dense() {
        let mut ps = ParamSet::new();
        assert_eq!(ps.insert("a"), ParamId(0));
        assert_eq!(ps.insert("b"), ParamId(1));
        assert_eq!(ps.insert("a"), ParamId(0));
        assert!(ParamSet::from_names(["x", "x"]).is_err());
        let u = Instantiation::from_named(&ps, [("b", 2.0), ("a", 1.0)]).unwrap();
        assert_eq!(u.values(), &[1.0, 2.0]);
        assert!(Instantiation::from_named(&ps, [("a", 1.0)]).is_err());
        assert!(Instantiation::new(vec![f64::INFINITY]).is_err());
    }
}
