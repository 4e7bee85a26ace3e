//! Random generators shared by the property and acceptance suites.
#![allow(dead_code)]

use rand::Rng;
use routh_core::expr::{Binding, Expr};

/// Random expression over `vars` that stays smooth and finite for variable
/// values in `[-1.5, 1.5]`: logarithms, roots, quotients and variable powers
/// are applied to strictly positive arguments. Constants lie in `[-1, 1]`,
/// cubes appear only on shallow subtrees and variable powers are
/// `(1 + a²)^sin(b)` with leaves `a`, `b`, which keeps higher
/// derivatives moderate enough for a step-1e-5 central difference.
pub fn smooth_expr<R: Rng>(rng: &mut R, vars: &[&str], depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.75) {
            Expr::var(vars[rng.gen_range(0..vars.len())])
        } else {
            Expr::num((rng.gen_range(-1.0..1.0_f64) * 4.0).round() / 4.0)
        };
    }
    let sub = |rng: &mut R| smooth_expr(rng, vars, depth - 1);
    let positive = |e: Expr| 1.0 + e.powf(2.0);
    match rng.gen_range(0..12) {
        0 => sub(rng) + sub(rng),
        1 => sub(rng) - sub(rng),
        2 => sub(rng) * sub(rng),
        3 => sub(rng) / positive(sub(rng)),
        4 => sub(rng).sin(),
        5 => sub(rng).cos(),
        6 => {
            let a = sub(rng);
            (a.clone() / positive(a)).exp()
        }
        7 => positive(sub(rng)).ln(),
        8 => positive(sub(rng)).sqrt(),
        9 => {
            let n = if depth <= 2 { rng.gen_range(2..4) } else { 2 };
            sub(rng).powf(n as f64)
        }
        10 => positive(smooth_expr(rng, vars, 0)).pow(smooth_expr(rng, vars, 0).sin()),
        _ => -sub(rng),
    }
}

/// Value with magnitude in `[lo, hi]` and random sign.
pub fn signed<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let m = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

pub fn binding<R: Rng>(rng: &mut R, vars: &[&str], range: f64) -> Binding {
    vars.iter().map(|v| (*v, rng.gen_range(-range..range))).collect()
}

/// Random polynomial of total degree at most `degree` in `vars`, with
/// coefficients in `[-1, 1]`.
pub fn polynomial<R: Rng>(rng: &mut R, vars: &[&str], degree: u32) -> Expr {
    let mut terms = vec![Expr::num(rng.gen_range(-1.0..1.0))];
    for _ in 0..rng.gen_range(1..5) {
        let mut term = Expr::num(rng.gen_range(-1.0..1.0));
        let d = rng.gen_range(1..=degree);
        for _ in 0..d {
            term = term * Expr::var(vars[rng.gen_range(0..vars.len())]);
        }
        terms.push(term);
    }
    Expr::sum(terms)
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Central difference of `e` in `v` at `b` with step `h`.
pub fn central_difference(e: &Expr, v: &str, b: &Binding, h: f64) -> f64 {
    let x = b.get(v).expect("bound");
    let plus = e.eval(&b.clone().with(v, x + h)).unwrap();
    let minus = e.eval(&b.clone().with(v, x - h)).unwrap();
    (plus - minus) / (2.0 * h)
}

/// Random regular Lagrangian on `(x1, x2, y)` with `y` cyclic:
/// `½ g₁ ẋ1² + ½ g₂ ẋ2² + ½ m (ẏ + A·ẋ)² - V` where `g₁, g₂, m` are
/// `1 + p²` for random quadratics `p` in `x1, x2`.
pub fn symmetric_lagrangian<R: Rng>(rng: &mut R) -> Expr {
    let xs = ["x1", "x2"];
    let pos = |rng: &mut R| 1.0 + polynomial(rng, &xs, 2).powf(2.0);
    let (g1, g2, m) = (pos(rng), pos(rng), pos(rng));
    let twist =
        Expr::var("dy") + polynomial(rng, &xs, 2) * Expr::var("dx1") + polynomial(rng, &xs, 2) * Expr::var("dx2");
    let kinetic = g1 * Expr::var("dx1").powf(2.0) + g2 * Expr::var("dx2").powf(2.0) + m * twist.powf(2.0);
    kinetic * 0.5 - polynomial(rng, &xs, 3)
}
