//! Symbolic expression engine.
//!
//! Expressions are immutable trees over named real variables. They are used
//! for Lagrangians, vector-field components and every derived equation in the
//! crate. The engine supports parsing, evaluation, partial differentiation,
//! simultaneous substitution and a best-effort simplifier.
//!
//! ```
//! use routh_core::expr::{Binding, Expr};
//!
//! let l = Expr::parse("dx*dy - y^2").unwrap();
//! let p = l.diff("dy");
//! let b = Binding::from_pairs([("dx", 1.0), ("dy", 2.0), ("y", 3.0)]);
//! assert_eq!(l.eval(&b).unwrap(), -7.0);
//! assert_eq!(p.eval(&b).unwrap(), 1.0);
//! ```

mod compile;
mod diff;
mod parse;
mod render;
mod simplify;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops;

use thiserror::Error;

pub use compile::CompiledExpr;
pub use parse::ParseError;

/// Unary operators and elementary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Log => Some("log"),
            UnaryOp::Sqrt => Some("sqrt"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// A symbolic expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Values for named variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Binding(BTreeMap<String, f64>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Binding(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Option<f64> {
        self.0.insert(name.into(), value)
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    /// Adds every entry of `other`, overwriting existing names.
    pub fn extend(&mut self, other: &Binding) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), *v);
        }
    }

    pub fn merged(&self, other: &Binding) -> Binding {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Binding {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Binding::from_pairs(iter)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: &'static str },
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parse::parse(text)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn num(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::binary(BinaryOp::Pow, self, exponent)
    }

    pub fn powf(self, exponent: f64) -> Expr {
        self.pow(Expr::Const(exponent))
    }

    pub fn sin(self) -> Expr {
        Expr::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Expr {
        Expr::unary(UnaryOp::Cos, self)
    }

    pub fn exp(self) -> Expr {
        Expr::unary(UnaryOp::Exp, self)
    }

    pub fn ln(self) -> Expr {
        Expr::unary(UnaryOp::Log, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::unary(UnaryOp::Sqrt, self)
    }

    /// Sum of `terms`, or zero for an empty iterator.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().reduce(|acc, t| acc + t).unwrap_or_else(Expr::zero)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// True for the literal constant zero (no simplification is attempted).
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Unary(_, a) => a.contains_var(name),
            Expr::Binary(_, a, b) => a.contains_var(name) || b.contains_var(name),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Simultaneous substitution: every variable named in `map` is replaced by
    /// its image. Replacements are not themselves rewritten.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(map)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(map), b.substitute(map)),
        }
    }

    /// Substitutes a single variable.
    pub fn subs(&self, name: &str, value: &Expr) -> Expr {
        let mut map = HashMap::new();
        map.insert(name.to_string(), value.clone());
        self.substitute(&map)
    }

    /// Replaces bound variables by constants.
    pub fn bind(&self, binding: &Binding) -> Expr {
        let map: HashMap<String, Expr> = binding.iter().map(|(k, v)| (k.to_string(), Expr::Const(v))).collect();
        self.substitute(&map)
    }

    pub fn eval(&self, binding: &Binding) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => binding.get(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Unary(op, a) => {
                let x = a.eval(binding)?;
                apply_unary(*op, x).map_err(|reason| self.domain(reason))?
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(binding)?;
                let y = b.eval(binding)?;
                apply_binary(*op, x, y).map_err(|reason| self.domain(reason))?
            }
        };
        Ok(value)
    }

    fn domain(&self, reason: &'static str) -> EvalError {
        EvalError::Domain {
            node: self.to_string(),
            reason,
        }
    }

    pub fn diff(&self, var: &str) -> Expr {
        diff::diff(self, var).simplify()
    }

    /// Raw derivative without the final simplification pass.
    pub fn diff_raw(&self, var: &str) -> Expr {
        diff::diff(self, var)
    }

    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    pub fn compile(&self, vars: &[&str]) -> Result<CompiledExpr, EvalError> {
        CompiledExpr::new(self, vars)
    }
}

pub(crate) fn apply_unary(op: UnaryOp, x: f64) -> Result<f64, &'static str> {
    let value = match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => {
            if x <= 0.0 {
                return Err("logarithm of a non-positive number");
            }
            x.ln()
        }
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err("square root of a negative number");
            }
            x.sqrt()
        }
    };
    finite(value)
}

pub(crate) fn apply_binary(op: BinaryOp, x: f64, y: f64) -> Result<f64, &'static str> {
    let value = match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return Err("division by zero");
            }
            x / y
        }
        BinaryOp::Pow => {
            let v = real_pow(x, y);
            if v.is_nan() {
                return Err("power of a negative base with non-integer exponent");
            }
            v
        }
    };
    finite(value)
}

pub(crate) fn real_pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

fn finite(value: f64) -> Result<f64, &'static str> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err("non-finite result")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render::write_expr(self, f)
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Self {
        Expr::Const(value)
    }
}

impl From<&str> for Expr {
    fn from(name: &str) -> Self {
        Expr::Var(name.to_string())
    }
}

macro_rules! binary_operator {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

binary_operator!(Add, add, BinaryOp::Add);
binary_operator!(Sub, sub, BinaryOp::Sub);
binary_operator!(Mul, mul, BinaryOp::Mul);
binary_operator!(Div, div, BinaryOp::Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Expr {
        Expr::parse(text).unwrap()
    }

    #[test]
    fn eval_examples() {
        let b = Binding::new().with("x", 2.0);
        assert_eq!(p("x^2+1").eval(&b).unwrap(), 5.0);
        let b = Binding::from_pairs([("dx", 1.0), ("dy", 2.0), ("y", 3.0)]);
        assert_eq!(p("dx*dy - y^2").eval(&b).unwrap(), -7.0);
    }

    #[test]
    fn eval_domain_errors_name_the_node() {
        let b = Binding::new().with("x", -1.0);
        match p("1 + sqrt(x)").eval(&b) {
            Err(EvalError::Domain { node, .. }) => assert_eq!(node, "sqrt(x)"),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(matches!(p("log(x)").eval(&b), Err(EvalError::Domain { .. })));
        let z = Binding::new().with("x", 0.0);
        assert!(matches!(p("1/x").eval(&z), Err(EvalError::Domain { .. })));
        assert!(matches!(p("x^-1").eval(&z), Err(EvalError::Domain { .. })));
        assert!(matches!(p("x^0.5").eval(&b), Err(EvalError::Domain { .. })));
    }

    #[test]
    fn eval_reports_unbound() {
        assert_eq!(
            p("x + y").eval(&Binding::new().with("x", 1.0)),
            Err(EvalError::Unbound("y".into()))
        );
    }

    #[test]
    fn free_vars_of_central_force() {
        let e = p("0.5*(dr^2 + r^2*dtheta^2) - k/r");
        let vars: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(vars, vec!["dr", "dtheta", "k", "r"]);
    }

    #[test]
    fn substitute_examples() {
        let e = p("dy^2").subs("dy", &p("a"));
        assert_eq!(e, p("a^2"));

        let mut map = HashMap::new();
        map.insert("dth".to_string(), p("a/r^2"));
        let e = p("0.5*(dr^2+r^2*dth^2)-V").substitute(&map);
        let target = p("0.5*(dr^2+a^2/r^2)-V");
        for &(dr, r, a, v) in &[(0.3, 1.2, 0.7, -0.4), (1.5, 0.4, -2.0, 3.0)] {
            let b = Binding::from_pairs([("dr", dr), ("r", r), ("a", a), ("V", v)]);
            let lhs = e.eval(&b).unwrap();
            let rhs = target.eval(&b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        assert_eq!(p("x").substitute(&HashMap::new()), p("x"));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let mut map = HashMap::new();
        map.insert("x".to_string(), p("y"));
        map.insert("y".to_string(), p("x"));
        assert_eq!(p("x - y").substitute(&map), p("y - x"));
    }

    #[test]
    fn operator_builders() {
        let e = Expr::var("x") * 2.0 + 1.0;
        assert_eq!(e.eval(&Binding::new().with("x", 3.0)).unwrap(), 7.0);
        assert_eq!(Expr::sum(Vec::new()), Expr::zero());
    }
}
