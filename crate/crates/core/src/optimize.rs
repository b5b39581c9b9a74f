//! Small one-dimensional search routines used by the allocation solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
}

/// Golden-section search for a minimum of `f` on `[a, b]`, stopping once the
/// bracket is narrower than `tol`. Assumes `f` is unimodal on the interval;
/// otherwise it still returns the best point it evaluated.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Minimum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc <= fd { Minimum { x: c, fx: fc } } else { Minimum { x: d, fx: fd } };
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc < best.fx {
                best = Minimum { x: c, fx: fc };
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd < best.fx {
                best = Minimum { x: d, fx: fd };
            }
        }
        // the bracket can no longer shrink in floating point
        if c >= d {
            break;
        }
    }
    best
}

/// Bisection for a sign change of `g` on `[a, b]`. Requires
/// `g(a) * g(b) <= 0`; runs until the bracket is at most `tol` wide or stops
/// shrinking.
pub fn bisect_root<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    if g(b) == 0.0 {
        return b;
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
