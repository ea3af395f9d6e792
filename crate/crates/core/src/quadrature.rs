//! Adaptive Simpson quadrature.

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// The absolute target is `rel_tol * |coarse estimate|`, floored at
/// `rel_tol * 1e-12` so integrals that vanish do not recurse forever.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    // a coarse 4-panel estimate sets the absolute scale
    let scale = {
        let l = simpson(a, m, fa, f(0.5 * (a + m)), fm);
        let r = simpson(m, b, fm, f(0.5 * (m + b)), fb);
        (l + r).abs().max(whole.abs())
    };
    let eps = (rel_tol * scale).max(rel_tol * 1e-12);
    recurse(f, a, b, fa, fm, fb, whole, eps, MAX_DEPTH)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = adaptive_simpson(&|x: f64| 3.0 * x * x + 1.0, 0.0, 2.0, 1e-10);
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_to_tolerance() {
        let v = adaptive_simpson(&|x: f64| (-4.0 * x).exp(), 0.0, 3.0, 1e-10);
        let exact = (1.0 - (-12.0f64).exp()) / 4.0;
        assert!(((v - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(adaptive_simpson(&|x: f64| x, 1.0, 1.0, 1e-8), 0.0);
    }
}
