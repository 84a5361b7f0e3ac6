//! Melnikov analysis along the saddle connection: the closed-form distance
//! function between the perturbed stable and unstable manifolds, its root
//! structure, the critical forcing amplitude, and an independent quadrature
//! route used to cross-check the closed form.
//!
//! Along the upper connection the distance function reduces to
//!
//! ```text
//! M(t0) = -4 delta A^2 Omega / (3 alpha) - 2 a A sin(omega1 t0 / Omega) * I(omega1 / Omega)
//! I(b)  = integral_0^inf sech^2(tau) cos(b tau) dtau = (pi b / 2) / sinh(pi b / 2)
//! ```
//!
//! Simple zeros exist exactly when `|a|` exceeds the critical amplitude
//! `a_c = 2 delta A Omega / (3 alpha) / I`.

use crate::error::{Error, Result};
use crate::model::{Branch, HeteroclinicSpec, ModelParams};

/// Closed-form Melnikov data for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelnikovReport {
    /// `I(omega1 / Omega)`, the sech^2-cosine integral.
    pub integral_i: f64,
    /// Damping offset `-4 delta A^2 Omega / (3 alpha)`.
    pub offset_term: f64,
    /// Forcing amplitude factor `2 a A * I`.
    pub amplitude_term: f64,
    /// Critical amplitude `a_c`; zero for undamped systems.
    pub threshold_a: f64,
    /// Strictly `|a| > a_c`.
    pub has_simple_roots: bool,
    /// `r = -2 delta A Omega / (3 alpha a) / I`, defined for `a != 0`.
    pub root_ratio: Option<f64>,
    /// The two roots in one period of `sin(omega1 t0 / Omega)`, ascending.
    pub principal_roots: Option<[f64; 2]>,
}

/// `I(b) = integral_0^inf sech^2(tau) cos(b tau) dtau`, extended by
/// continuity to `I(0) = 1`.
pub fn sech2_cos_integral(b: f64) -> Result<f64> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter {
            name: "b",
            requirement: "non-negative and finite",
            value: b,
        });
    }
    if b == 0.0 {
        return Ok(1.0);
    }
    let half = std::f64::consts::FRAC_PI_2 * b;
    Ok(half / half.sinh())
}

fn geometry(params: &ModelParams) -> (f64, f64, f64) {
    let spec = HeteroclinicSpec::for_params(params, 0.0, Branch::Upper);
    let integral = sech2_cos_integral(params.omega1 / spec.rate)
        .expect("frequency ratio is positive for valid params");
    (spec.half_width, spec.rate, integral)
}

/// Closed-form `M(t0)`.
pub fn melnikov_value(params: &ModelParams, t0: f64) -> f64 {
    let (a_w, omega, integral) = geometry(params);
    let offset = -4.0 * params.delta * a_w * a_w * omega / (3.0 * params.alpha);
    offset - 2.0 * params.a * a_w * (params.omega1 * t0 / omega).sin() * integral
}

/// Critical forcing amplitude `a_c`; chaos is predicted for `|a| > a_c`.
pub fn critical_amplitude(params: &ModelParams) -> f64 {
    let (a_w, omega, integral) = geometry(params);
    2.0 * params.delta * a_w * omega / (3.0 * params.alpha) / integral
}

/// All roots of `M` covering `n_periods` periods of the phase, sorted
/// ascending and starting at the smallest non-negative root. Errors when
/// `|a| <= a_c`: at equality the root is degenerate, not simple.
pub fn melnikov_roots(params: &ModelParams, n_periods: usize) -> Result<Vec<f64>> {
    let threshold = critical_amplitude(params);
    if !(params.a.abs() > threshold) {
        return Err(Error::NoSimpleRoots {
            a_abs: params.a.abs(),
            threshold,
        });
    }
    let (_, omega, _) = geometry(params);
    let ratio = -threshold / params.a;
    let scale = omega / params.omega1;
    let period = 2.0 * std::f64::consts::PI * scale;
    let asin = ratio.asin();
    let anchors = [
        (scale * asin).rem_euclid(period),
        (scale * (std::f64::consts::PI - asin)).rem_euclid(period),
    ];
    let mut roots = Vec::with_capacity(2 * n_periods);
    for k in 0..n_periods {
        for anchor in anchors {
            roots.push(anchor + k as f64 * period);
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(roots)
}

/// `M(t0)` by adaptive quadrature of the perturbation integrand along the
/// closed-form connection, truncated where `sech^2` is negligible. The
/// independent check on [`melnikov_value`].
pub fn quadrature_oracle(params: &ModelParams, t0: f64) -> f64 {
    let spec = HeteroclinicSpec::for_params(params, t0, Branch::Upper);
    let integrand = |t: f64| {
        let q = spec.at(t).q;
        params.alpha * (-params.delta * q * q + params.a * q * (params.omega1 * t).sin())
    };
    let lo = (-40.0 - t0) / spec.rate;
    let hi = (40.0 - t0) / spec.rate;
    adaptive_simpson(&integrand, lo, hi, 1e-12)
}

/// Full closed-form report for one parameter set.
pub fn melnikov_report(params: &ModelParams) -> MelnikovReport {
    let (a_w, omega, integral) = geometry(params);
    let threshold = critical_amplitude(params);
    let has_simple_roots = params.a.abs() > threshold;
    let root_ratio = (params.a != 0.0).then(|| -threshold / params.a);
    let principal_roots = has_simple_roots.then(|| {
        let roots = melnikov_roots(params, 1).expect("checked above threshold");
        [roots[0], roots[1]]
    });
    MelnikovReport {
        integral_i: integral,
        offset_term: -4.0 * params.delta * a_w * a_w * omega / (3.0 * params.alpha),
        amplitude_term: 2.0 * params.a * a_w * integral,
        threshold_a: threshold,
        has_simple_roots,
        root_ratio,
        principal_roots,
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`. The domain is
/// pre-split into unit panels so oscillatory integrands start resolved.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let panels = ((b - a).abs().ceil() as usize).max(1);
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == panels { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = simpson(lo, hi, flo, fmid, fhi);
        total += simpson_refine(f, lo, flo, mid, fmid, hi, fhi, whole, panel_tol, 48);
    }
    total
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_refine(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)
        + simpson_refine(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)
}
