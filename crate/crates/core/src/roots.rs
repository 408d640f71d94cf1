//! Bracketed scalar root finding (Brent's method).

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrentOptions {
    /// Absolute tolerance on the bracket half-width.
    pub xtol: f64,
    /// Early exit when `|f(x)|` falls below this.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for BrentOptions {
    fn default() -> Self {
        Self { xtol: 1e-10, ftol: 0.0, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub f: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError<E> {
    /// `f(a)` and `f(b)` share a sign. `best` is the endpoint with the smaller `|f|`.
    #[error("no sign change on [{a}, {b}]")]
    NoBracket { a: f64, b: f64, best: Root },
    #[error("no convergence after {} iterations", best.iterations)]
    MaxIterations { best: Root },
    #[error("function is not finite at x = {0}")]
    NonFinite(f64),
    #[error("function evaluation failed at x = {x}")]
    Eval { x: f64, source: E },
}

impl<E> RootError<E> {
    /// The best available estimate, when one exists.
    pub fn fallback(&self) -> Option<Root> {
        match self {
            RootError::NoBracket { best, .. } | RootError::MaxIterations { best } => Some(*best),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("infallible")]
pub enum Never {}

/// Brent's method on an infallible function.
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &BrentOptions,
) -> Result<Root, RootError<Never>> {
    try_brent_root(|x| Ok::<f64, Never>(f(x)), a, b, opts)
}

/// Brent's method where each evaluation may fail.
///
/// Evaluates `f` only inside `[a, b]`. The endpoints are evaluated first and an
/// exact zero at either is returned immediately.
pub fn try_brent_root<E, F: FnMut(f64) -> Result<f64, E>>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &BrentOptions,
) -> Result<Root, RootError<E>> {
    let mut eval = |x: f64| -> Result<f64, RootError<E>> {
        let y = f(x).map_err(|source| RootError::Eval { x, source })?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(RootError::NonFinite(x))
        }
    };
    let (mut a, mut b) = (a, b);
    let mut fa = eval(a)?;
    if fa == 0.0 {
        return Ok(Root { x: a, f: fa, iterations: 0 });
    }
    let mut fb = eval(b)?;
    if fb == 0.0 {
        return Ok(Root { x: b, f: fb, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        let best = if fa.abs() <= fb.abs() {
            Root { x: a, f: fa, iterations: 0 }
        } else {
            Root { x: b, f: fb, iterations: 0 }
        };
        return Err(RootError::NoBracket { a, b, best });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=opts.max_iter {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= opts.ftol {
            return Ok(Root { x: b, f: fb, iterations: iter });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, or secant when only two points exist.
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
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
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
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = eval(b)?;
    }
    Err(RootError::MaxIterations { best: Root { x: b, f: fb, iterations: opts.max_iter } })
}
