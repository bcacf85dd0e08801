//! Bracketed scalar root finding.

/// Bisection for a root of `f` on `[lo, hi]`, where `f(lo)` and `f(hi)` have
/// opposite signs (or one is zero). Runs until the bracket is no wider than
/// `tol` or cannot be split further in floating point.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Outcome of [`safeguarded_newton`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonRoot {
    pub root: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton's method kept inside a sign-changing bracket; any step that leaves
/// the bracket (or a flat derivative) is replaced by a bisection step.
///
/// `fdf` returns `(f(x), f'(x))`. Requires `f(lo)` and `f(hi)` of opposite sign.
pub fn safeguarded_newton<F>(fdf: F, x0: f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> NewtonRoot
where
    F: Fn(f64) -> (f64, f64),
{
    let (flo, _) = fdf(lo);
    let increasing = flo < 0.0;
    let mut x = x0.clamp(lo, hi);
    for it in 1..=max_iter {
        let (fx, dfx) = fdf(x);
        if fx == 0.0 {
            return NewtonRoot { root: x, iterations: it, converged: true };
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx.is_finite() && dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= tol || hi - lo <= tol {
            return NewtonRoot { root: x, iterations: it, converged: true };
        }
    }
    NewtonRoot { root: x, iterations: max_iter, converged: false }
}
