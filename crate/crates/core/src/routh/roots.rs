//! Bracketed scalar root finding (Brent's secant/inverse-quadratic/bisection
//! hybrid).

use thiserror::Error;

use crate::expr::EvalError;

pub const RESIDUAL_TOLERANCE: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}] (residuals {f_lo:e}, {f_hi:e})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Root of `f` in `[lo, hi]`. Stops once `|f| <= RESIDUAL_TOLERANCE`, the
/// bracket collapses to machine precision, or after `MAX_ITERATIONS` steps
/// (returning the best iterate).
pub fn brent<F>(mut f: F, lo: f64, hi: f64) -> Result<f64, RootError>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(RootError::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITERATIONS {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + f64::MIN_POSITIVE;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol || fb.abs() <= RESIDUAL_TOLERANCE {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_roots() {
        let r = brent(|x| Ok(x * x - 2.0), 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0).unwrap();
        assert!((r.cos() - r).abs() <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn wide_bracket_with_steep_residual() {
        // -1/(2 s²) + 0.5 has its positive root at s = 1.
        let r = brent(|s| Ok(-0.5 / (s * s) + 0.5), 1e-6, 1e6).unwrap();
        assert!((r - 1.0).abs() < 1e-11, "{r}");
    }

    #[test]
    fn reports_missing_sign_change() {
        assert!(matches!(
            brent(|x| Ok(x * x + 1.0), -1.0, 1.0),
            Err(RootError::NoSignChange { .. })
        ));
    }
}
