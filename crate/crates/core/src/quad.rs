//! Adaptive Simpson quadrature.

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let whole = (b - a) * (fa + 4.0 * fc + fb) / 6.0;
    recurse(f, a, b, fa, fb, fc, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) * (fa + 4.0 * fd + fc) / 6.0;
    let right = (b - c) * (fc + 4.0 * fe + fb) / 6.0;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + recurse(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_rational_function() {
        // ∫_0^1 1/(1+x)^2 dx = 1/2
        let v = adaptive_simpson(&|x: f64| 1.0 / (1.0 + x).powi(2), 0.0, 1.0, 1e-12);
        assert!((v - 0.5).abs() < 1e-11);
    }

    #[test]
    fn exact_for_cubics() {
        let v = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-13);
    }
}
