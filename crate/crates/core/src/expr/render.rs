//! Rendering that re-parses to a structurally equal tree.

use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const NEGATION: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => NEGATION,
        Expr::Const(_) | Expr::Var(_) => ATOM,
        Expr::Unary(UnaryOp::Neg, _) => NEGATION,
        Expr::Unary(..) => ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => SUM,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PRODUCT,
        Expr::Binary(BinaryOp::Pow, ..) => POWER,
    }
}

fn child(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if level(e) < min {
        f.write_str("(")?;
        write_expr(e, f)?;
        f.write_str(")")
    } else {
        write_expr(e, f)
    }
}

pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(name) => f.write_str(name),
        Expr::Unary(UnaryOp::Neg, a) => {
            f.write_str("-")?;
            // A bare literal after `-` would fold into a negative constant.
            if matches!(**a, Expr::Const(_)) {
                write!(f, "({a})")
            } else {
                child(a, NEGATION, f)
            }
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.function_name().unwrap_or("?"))?;
            write_expr(a, f)?;
            f.write_str(")")
        }
        Expr::Binary(op, a, b) => {
            let (symbol, left, right) = match op {
                BinaryOp::Add => (" + ", SUM, PRODUCT),
                BinaryOp::Sub => (" - ", SUM, PRODUCT),
                BinaryOp::Mul => ("*", PRODUCT, NEGATION),
                BinaryOp::Div => ("/", PRODUCT, NEGATION),
                BinaryOp::Pow => ("^", ATOM, NEGATION),
            };
            child(a, left, f)?;
            f.write_str(symbol)?;
            child(b, right, f)
        }
    }
}
