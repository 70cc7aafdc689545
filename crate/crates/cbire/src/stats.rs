//! Shared statistics and quadrature helpers.

use crate::scalar::Real;

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate<F> {
    pub mean: F,
    pub std_error: F,
    pub n: usize,
}

impl<F: Real> McEstimate<F> {
    /// Welford accumulation in slice order, so the result is reproducible
    /// for a fixed ordering of path outputs.
    pub fn from_values(values: &[F]) -> Self {
        let mut mean = F::zero();
        let mut m2 = F::zero();
        let mut n = 0usize;
        for &v in values {
            n += 1;
            let nf = F::of(n as f64);
            let delta = v - mean;
            mean += delta / nf;
            m2 += delta * (v - mean);
        }
        let std_error = if n > 1 {
            let nf = F::of(n as f64);
            (m2 / (nf - F::one()) / nf).sqrt()
        } else {
            F::zero()
        };
        Self { mean, std_error, n }
    }
}

/// Least-squares slope of `y` against `x`; at least two points required.
pub fn least_squares_slope<F: Real>(x: &[F], y: &[F]) -> F {
    assert_eq!(x.len(), y.len(), "slope fit needs paired samples");
    assert!(x.len() >= 2, "slope fit needs at least two points");
    let n = F::of(x.len() as f64);
    let mx = x.iter().copied().sum::<F>() / n;
    let my = y.iter().copied().sum::<F>() / n;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`. Recursion is capped at depth 40, deep enough for every smooth
/// integrand in this crate.
pub fn adaptive_simpson<F: Real>(f: &dyn Fn(F) -> F, a: F, b: F, tol: F) -> F {
    fn simpson<F: Real>(a: F, b: F, fa: F, fm: F, fb: F) -> F {
        (b - a) / F::of(6.0) * (fa + F::of(4.0) * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Real>(
        f: &dyn Fn(F) -> F,
        a: F,
        b: F,
        fa: F,
        fm: F,
        fb: F,
        whole: F,
        tol: F,
        depth: u32,
    ) -> F {
        let half = F::of(0.5);
        let m = (a + b) * half;
        let lm = (a + m) * half;
        let rm = (m + b) * half;
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= F::of(15.0) * tol {
            left + right + err / F::of(15.0)
        } else {
            let half_tol = tol * half;
            recurse(f, a, m, fa, flm, fm, left, half_tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, half_tol, depth - 1)
        }
    }

    if a == b {
        return F::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f((a + b) * F::of(0.5));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}
