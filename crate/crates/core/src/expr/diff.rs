use super::{BinaryOp, Expr, UnaryOp};

/// Symbolic partial derivative. The result is unsimplified.
pub(super) fn diff(e: &Expr, v: &str) -> Expr {
    if !e.contains_var(v) {
        return Expr::zero();
    }
    match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(name) => {
            if name == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Unary(op, a) => {
            let da = diff(a, v);
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => -da,
                UnaryOp::Sin => a.cos() * da,
                UnaryOp::Cos => -(a.sin()) * da,
                UnaryOp::Exp => a.exp() * da,
                UnaryOp::Log => da / a,
                UnaryOp::Sqrt => da / (2.0 * a.sqrt()),
            }
        }
        Expr::Binary(op, a, b) => {
            let (a, b) = (&**a, &**b);
            match op {
                BinaryOp::Add => diff(a, v) + diff(b, v),
                BinaryOp::Sub => diff(a, v) - diff(b, v),
                BinaryOp::Mul => diff(a, v) * b.clone() + a.clone() * diff(b, v),
                BinaryOp::Div => (diff(a, v) * b.clone() - a.clone() * diff(b, v)) / b.clone().powf(2.0),
                BinaryOp::Pow => {
                    let da = diff(a, v);
                    if !b.contains_var(v) {
                        // d(u^w) = w*u^(w-1)*du when w is free of v: the exp/log
                        // rule with its vanishing log-term dropped.
                        b.clone() * a.clone().pow(b.clone() - 1.0) * da
                    } else {
                        // u^w = exp(w*log(u))
                        let db = diff(b, v);
                        e.clone() * (db * a.clone().ln() + b.clone() * da / a.clone())
                    }
                }
            }
        }
    }
}
