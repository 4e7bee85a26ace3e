//! Best-effort simplification.
//!
//! Each pass rewrites the tree into a sum of monomials (coefficient times a
//! product of opaque bases raised to numeric powers), collects like terms and
//! renders the sum back. Passes repeat until the tree stops changing, which
//! makes `simplify` idempotent whenever the fixpoint is reached within
//! `MAX_ROUNDS`.

use std::cmp::Ordering;
use std::rc::Rc;

use super::{apply_unary, real_pow, BinaryOp, Expr, UnaryOp};

const MAX_ROUNDS: usize = 32;
/// Products whose expansion would exceed this many terms stay factored.
const DISTRIBUTE_LIMIT: usize = 64;

#[derive(Clone, Debug)]
struct Factor {
    key: Rc<str>,
    base: Rc<Expr>,
    exp: f64,
}

#[derive(Clone, Debug)]
struct Term {
    coef: f64,
    factors: Vec<Factor>,
}

type Poly = Vec<Term>;

pub(super) fn simplify(e: &Expr) -> Expr {
    let mut current = e.clone();
    for _ in 0..MAX_ROUNDS {
        let next = pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn pass(e: &Expr) -> Expr {
    from_poly(to_poly(e))
}

// Sums are kept uncollected while they are built and collected wherever the
// number of terms matters, which keeps long sums linear.

fn to_poly(e: &Expr) -> Poly {
    match e {
        Expr::Const(c) => constant(*c),
        Expr::Var(_) => atom(e.clone()),
        Expr::Unary(UnaryOp::Neg, a) => neg(to_poly(a)),
        Expr::Unary(op, a) => {
            let arg = pass(a);
            if let Expr::Const(c) = arg {
                if let Ok(v) = apply_unary(*op, c) {
                    return constant(v);
                }
            }
            atom(Expr::unary(*op, arg))
        }
        Expr::Binary(op, a, b) => match op {
            BinaryOp::Add => add(to_poly(a), to_poly(b)),
            BinaryOp::Sub => add(to_poly(a), neg(to_poly(b))),
            BinaryOp::Mul => mul(to_poly(a), to_poly(b)),
            BinaryOp::Div => mul(to_poly(a), pow_num(to_poly(b), -1.0)),
            BinaryOp::Pow => {
                let exponent = pass(b);
                match exponent {
                    Expr::Const(n) => pow_num(to_poly(a), n),
                    exponent => {
                        let base = pass(a);
                        if base == Expr::one() {
                            return constant(1.0);
                        }
                        atom(base.pow(exponent))
                    }
                }
            }
        },
    }
}

fn constant(c: f64) -> Poly {
    if c == 0.0 {
        Vec::new()
    } else {
        vec![Term {
            coef: c,
            factors: Vec::new(),
        }]
    }
}

fn atom(e: Expr) -> Poly {
    vec![Term {
        coef: 1.0,
        factors: vec![factor(e, 1.0)],
    }]
}

fn factor(base: Expr, exp: f64) -> Factor {
    Factor {
        key: base.to_string().into(),
        base: Rc::new(base),
        exp,
    }
}

fn signature(t: &Term) -> String {
    let mut s = String::new();
    for f in &t.factors {
        s.push_str(&f.key);
        s.push('^');
        s.push_str(&format!("{:?}", f.exp));
        s.push(';');
    }
    s
}

fn collect(mut p: Poly) -> Poly {
    let mut keyed: Vec<(String, Term)> = p.drain(..).map(|t| (signature(&t), t)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(String, Term)> = Vec::with_capacity(keyed.len());
    for (sig, term) in keyed {
        match out.last_mut() {
            Some((last, acc)) if *last == sig => acc.coef += term.coef,
            _ => out.push((sig, term)),
        }
    }
    out.into_iter().map(|(_, t)| t).filter(|t| t.coef != 0.0).collect()
}

fn add(mut p: Poly, q: Poly) -> Poly {
    p.extend(q);
    p
}

fn neg(mut p: Poly) -> Poly {
    for t in &mut p {
        t.coef = -t.coef;
    }
    p
}

fn opaque(p: Poly) -> Poly {
    let p = collect(p);
    if p.len() > 1 {
        atom(from_poly(p))
    } else {
        p
    }
}

fn mul(p: Poly, q: Poly) -> Poly {
    let (p, q) = (collect(p), collect(q));
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let (p, q) = if p.len() * q.len() > DISTRIBUTE_LIMIT {
        (opaque(p), opaque(q))
    } else {
        (p, q)
    };
    let mut out = Vec::with_capacity(p.len() * q.len());
    for a in &p {
        for b in &q {
            out.push(term_mul(a, b));
        }
    }
    collect(out)
}

fn term_mul(a: &Term, b: &Term) -> Term {
    let mut factors = Vec::with_capacity(a.factors.len() + b.factors.len());
    let (mut i, mut j) = (0, 0);
    while i < a.factors.len() && j < b.factors.len() {
        let (fa, fb) = (&a.factors[i], &b.factors[j]);
        match fa.key.cmp(&fb.key) {
            Ordering::Less => {
                factors.push(fa.clone());
                i += 1;
            }
            Ordering::Greater => {
                factors.push(fb.clone());
                j += 1;
            }
            Ordering::Equal => {
                let exp = fa.exp + fb.exp;
                if exp != 0.0 {
                    factors.push(Factor { exp, ..fa.clone() });
                }
                i += 1;
                j += 1;
            }
        }
    }
    factors.extend_from_slice(&a.factors[i..]);
    factors.extend_from_slice(&b.factors[j..]);
    Term {
        coef: a.coef * b.coef,
        factors,
    }
}

fn pow_num(p: Poly, n: f64) -> Poly {
    let p = collect(p);
    if n == 1.0 {
        return p;
    }
    if n == 0.0 {
        return constant(1.0);
    }
    if p.is_empty() {
        if n > 0.0 {
            return Vec::new();
        }
        return atom(Expr::zero().powf(n));
    }
    if p.len() == 1 {
        let t = &p[0];
        if n.fract() == 0.0 {
            let coef = real_pow(t.coef, n);
            if coef.is_finite() && coef != 0.0 {
                return vec![Term {
                    coef,
                    factors: t
                        .factors
                        .iter()
                        .map(|f| Factor {
                            exp: f.exp * n,
                            ..f.clone()
                        })
                        .collect(),
                }];
            }
        } else if t.factors.is_empty() && t.coef > 0.0 {
            let v = t.coef.powf(n);
            if v.is_finite() && v != 0.0 {
                return constant(v);
            }
        } else if t.coef == 1.0 && t.factors.len() == 1 && t.factors[0].exp == 1.0 {
            return vec![Term {
                coef: 1.0,
                factors: vec![Factor {
                    exp: n,
                    ..t.factors[0].clone()
                }],
            }];
        }
    }
    vec![Term {
        coef: 1.0,
        factors: vec![factor(from_poly(p), n)],
    }]
}

fn factor_expr(f: &Factor, exp: f64) -> Expr {
    if exp == 1.0 {
        (*f.base).clone()
    } else {
        (*f.base).clone().powf(exp)
    }
}

fn product(items: Vec<Expr>) -> Option<Expr> {
    items.into_iter().reduce(|acc, e| acc * e)
}

fn term_expr(coef: f64, factors: &[Factor]) -> Expr {
    let num = product(
        factors
            .iter()
            .filter(|f| f.exp > 0.0)
            .map(|f| factor_expr(f, f.exp))
            .collect(),
    );
    let den = product(
        factors
            .iter()
            .filter(|f| f.exp < 0.0)
            .map(|f| factor_expr(f, -f.exp))
            .collect(),
    );
    let scaled = match (coef, num) {
        (1.0, Some(n)) => n,
        (-1.0, Some(n)) => -n,
        (c, Some(n)) => Expr::Const(c) * n,
        (c, None) => Expr::Const(c),
    };
    match den {
        Some(d) => scaled / d,
        None => scaled,
    }
}

fn from_poly(p: Poly) -> Expr {
    let mut p = collect(p);
    if p.is_empty() {
        return Expr::zero();
    }
    // Constant term last.
    p.sort_by_key(|t| t.factors.is_empty());
    let mut iter = p.into_iter();
    let first = iter.next().expect("non-empty");
    let mut acc = term_expr(first.coef, &first.factors);
    for t in iter {
        if t.coef < 0.0 {
            acc = acc - term_expr(-t.coef, &t.factors);
        } else {
            acc = acc + term_expr(t.coef, &t.factors);
        }
    }
    acc
}
