//! Scalar root finding and one-dimensional maximisation.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Brent's method for a sign-changing bracket `[a, b]`.
pub fn brent_root<T: Real>(
    mut f: impl FnMut(T) -> T,
    mut a: T,
    mut b: T,
    xtol: T,
    max_iter: usize,
) -> Result<T> {
    let two = T::c(2.0);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Domain("root is not bracketed".into()));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
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
        let tol = two * T::epsilon() * b.abs() + xtol / two;
        let m = (c - b) / two;
        if m.abs() <= tol || fb == T::zero() {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (two * m * s, T::one() - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (two * m * q * (q - r) - (b - a) * (r - T::one())),
                    (q - T::one()) * (r - T::one()) * (s - T::one()),
                )
            };
            if p > T::zero() {
                q = -q;
            } else {
                p = -p;
            }
            if two * p < (T::c(3.0) * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol { b + d } else { b + tol * m.signum() };
        fb = f(b);
    }
    Err(Error::NoConvergence {
        what: "brent root",
        iterations: max_iter,
    })
}

/// Brent's parabolic/golden-section maximiser on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn brent_max<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, xtol: T) -> (T, T) {
    let golden = T::c(0.381_966_011_250_105_1);
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x = lo + golden * (hi - lo);
    let mut w = x;
    let mut v = x;
    // minimise the negation
    let mut fx = -f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d = T::zero();
    let mut e = T::zero();
    let two = T::c(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        let tol1 = T::epsilon().sqrt() * x.abs() + xtol;
        let tol2 = two * tol1;
        if (x - mid).abs() <= tol2 - (hi - lo) / two {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (q * etemp / two).abs() || p <= q * (lo - x) || p >= q * (hi - x)) {
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = tol1 * (mid - x).signum();
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= mid { lo - x } else { hi - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1 * d.signum()
        };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_of_cubic() {
        let r = brent_root(|x: f64| x * x * x - 2.0, 0.0, 2.0, 1e-15, 100).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn unbracketed_root_is_an_error() {
        assert!(brent_root(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12, 50).is_err());
    }

    #[test]
    fn max_of_parabola() {
        let (x, v) = brent_max(|x: f64| 3.0 - (x - 0.7).powi(2), 0.0, 2.0, 1e-12);
        assert!((x - 0.7).abs() < 1e-7);
        assert!((v - 3.0).abs() < 1e-13);
    }
}
