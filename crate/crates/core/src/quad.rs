//! Quadrature primitives.
//!
//! Three families cover every integral in the crate:
//!
//! * composite Simpson / trapezoid rules for smooth tabulated or closure-valued
//!   integrands,
//! * a tanh-sinh (double-exponential) rule for integrands with endpoint
//!   singularities (log or algebraic), used by the Coulomb normalization and the
//!   mollified-kernel convolutions,
//! * Filon rules for oscillatory radial integrals `∫ g(r)·sin(ωr) dr` and
//!   `∫ g(r)·cos(ωr) dr`. The sine/cosine factor is integrated exactly against
//!   a piecewise-quadratic interpolant of `g` (classic Filon–Simpson), so the
//!   error is O(h⁴·g⁗) *uniformly in ω* — the workhorse for memory-kernel
//!   evaluation at large times.

/// Composite Simpson rule with `n` subintervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = if n % 2 == 0 { n.max(2) } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let fx = f(a + i as f64 * h);
        if i % 2 == 1 {
            odd += fx;
        } else {
            even += fx;
        }
    }
    (f(a) + f(b) + 4.0 * odd + 2.0 * even) * h / 3.0
}

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid_uniform(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            h * (0.5 * (values[0] + values[n - 1]) + interior)
        }
    }
}

/// Composite Simpson over uniformly spaced samples; the final panel falls back
/// to a trapezoid when the sample count is even.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * h * (values[0] + values[1]);
    }
    // largest odd prefix length gives an integer number of Simpson panels
    let m = if n % 2 == 1 { n } else { n - 1 };
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, &v) in values[1..m - 1].iter().enumerate() {
        if i % 2 == 0 {
            odd += v;
        } else {
            even += v;
        }
    }
    let mut acc = (values[0] + values[m - 1] + 4.0 * odd + 2.0 * even) * h / 3.0;
    if m < n {
        acc += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    acc
}

/// Cumulative trapezoid integral of uniformly spaced samples; output[i] is the
/// integral from sample 0 to sample i.
pub fn cumtrapz(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Tanh-sinh rule on (a, b). Converges at double-exponential rate even when the
/// integrand has integrable endpoint singularities; `f` is never evaluated at
/// the endpoints themselves.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let t_max = 4.0;
    let eval_level = |h: f64| -> f64 {
        let kmax = (t_max / h).ceil() as i64;
        let mut acc = 0.0;
        for k in -kmax..=kmax {
            let t = k as f64 * h;
            let u = std::f64::consts::FRAC_PI_2 * t.sinh();
            let w = std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
            // Place the node by its distance from the nearer endpoint:
            // 1 - tanh|u| = 2e^{-2|u|}/(1 + e^{-2|u|}) computed without the
            // cancellation of mid + half·tanh(u), so nodes crowding an
            // integrable singularity keep full precision instead of rounding
            // onto the endpoint and being dropped.
            let e2 = (-2.0 * u.abs()).exp();
            let delta = half * 2.0 * e2 / (1.0 + e2);
            let x = if u >= 0.0 { b - delta } else { a + delta };
            if x > a && x < b {
                let v = f(x);
                if v.is_finite() {
                    acc += w * v;
                }
            }
        }
        acc * h * half
    };
    let mut h = 0.25;
    let mut prev = eval_level(h);
    for _ in 0..5 {
        h *= 0.5;
        let cur = eval_level(h);
        if (cur - prev).abs() <= tol * (1.0 + cur.abs()) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// sin(x)/x with a series branch near zero.
#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// (sin x − x·cos x), stable for small x where the direct difference cancels.
#[inline]
fn sin_minus_xcos(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        // x³/3 − x⁵/30 + x⁷/840 − x⁹/45360 + x¹¹/3991680
        x * x2
            * (1.0 / 3.0
                - x2 / 30.0
                + x2 * x2 / 840.0
                - x2 * x2 * x2 / 45360.0
                + x2 * x2 * x2 * x2 / 3_991_680.0)
    } else {
        x.sin() - x * x.cos()
    }
}

/// φ(x) = (sin x − x cos x)/x²: odd-moment factor `∫₋ₕʰ u sin(ωu) du = 2h²·φ(ωh)`.
#[inline]
fn filon_phi(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        sin_minus_xcos(x) / (x * x)
    }
}

/// ψ(x) = ((x²−2)sin x + 2x cos x)/x³ = sinc(x) − 2(sin x − x cos x)/x³:
/// even-moment factor `∫₋ₕʰ u² cos(ωu) du = 2h³·ψ(ωh)`; ψ(0) = 1/3.
#[inline]
fn filon_psi(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 / 3.0 - x * x / 10.0
    } else {
        sinc(x) - 2.0 * sin_minus_xcos(x) / (x * x * x)
    }
}

/// ∫ g(r)·sin(ωr) dr over `[a, a + (g.len()-1)·h]`, with `g` piecewise
/// quadratic through sample triplets (Filon–Simpson). Per two-panel segment
/// centered at `m` with `g ≈ g_m + b·u + a₂·u²`, the oscillatory factor is
/// integrated exactly:
/// `sin(ωm)·[2h·g_m·sinc(ωh) + 2h³·a₂·ψ(ωh)] + cos(ωm)·2h²·b·φ(ωh)`.
/// A trailing odd panel (even sample count) falls back to the linear rule.
pub fn filon_sin(g: &[f64], a: f64, h: f64, omega: f64) -> f64 {
    filon(g, a, h, omega, true)
}

/// Cosine-weighted counterpart of [`filon_sin`].
pub fn filon_cos(g: &[f64], a: f64, h: f64, omega: f64) -> f64 {
    filon(g, a, h, omega, false)
}

fn filon(g: &[f64], a: f64, h: f64, omega: f64, sine: bool) -> f64 {
    let len = g.len();
    if len < 2 {
        return 0.0;
    }
    let x = omega * h;
    let sc = sinc(x);
    let phi = filon_phi(x);
    let psi = filon_psi(x);
    let segments = (len - 1) / 2;
    let mut acc = 0.0;
    for j in 0..segments {
        let i = 2 * j;
        let (g0, g1, g2) = (g[i], g[i + 1], g[i + 2]);
        let m = a + (i + 1) as f64 * h;
        let b = (g2 - g0) / (2.0 * h);
        let a2 = (g2 - 2.0 * g1 + g0) / (2.0 * h * h);
        let even = 2.0 * h * (g1 * sc + a2 * h * h * psi);
        let odd = 2.0 * h * h * b * phi;
        let (s_m, c_m) = (omega * m).sin_cos();
        if sine {
            acc += s_m * even + c_m * odd;
        } else {
            acc += c_m * even - s_m * odd;
        }
    }
    if (len - 1) % 2 == 1 {
        // linear rule on the final panel
        let xh = 0.5 * omega * h;
        let sch = sinc(xh);
        let curv = if omega == 0.0 {
            0.0
        } else {
            sin_minus_xcos(xh) / (omega * omega)
        };
        let (g0, g1) = (g[len - 2], g[len - 1]);
        let mid = a + (len as f64 - 1.5) * h;
        let gbar = 0.5 * (g0 + g1);
        let slope = (g1 - g0) / h;
        let (s_m, c_m) = (omega * mid).sin_cos();
        if sine {
            acc += gbar * h * sch * s_m + 2.0 * slope * curv * c_m;
        } else {
            acc += gbar * h * sch * c_m - 2.0 * slope * curv * s_m;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 8);
        let exact = |x: f64| x.powi(4) / 4.0 - x * x + x;
        assert!((v - (exact(3.0) - exact(-1.0))).abs() < 1e-12);
    }

    #[test]
    fn tanh_sinh_log_singularity() {
        // ∫₀¹ ln(1/x) dx = 1
        let v = tanh_sinh(|x| -(x.ln()), 0.0, 1.0, 1e-13);
        assert!((v - 1.0).abs() < 1e-10, "got {v}");
        // ∫₀¹ x^(-1/2) dx = 2
        let v = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-13);
        assert!((v - 2.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn filon_matches_closed_form_all_frequencies() {
        // ∫₀¹ r² sin(ωr) dr has a closed form; check ω spanning 12 decades.
        let n = 4097;
        let h = 1.0 / (n - 1) as f64;
        let g: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(2)).collect();
        for &omega in &[1e-6f64, 0.1, 1.0, 10.0, 1000.0, 250_000.0] {
            let exact = if omega < 1e-4 {
                // leading series: ω∫r³ − ω³/6 ∫ r⁵
                omega / 4.0 - omega.powi(3) / 36.0
            } else {
                let (s, c) = (omega.sin(), omega.cos());
                (2.0 * omega * s + (2.0 - omega * omega) * c - 2.0) / omega.powi(3)
            };
            let v = filon_sin(&g, 0.0, h, omega);
            assert!(
                (v - exact).abs() < 2e-8 * (1.0 + exact.abs()),
                "omega={omega}: {v} vs {exact}"
            );
        }
    }

    #[test]
    fn filon_cos_zero_frequency_is_simpson() {
        let g: Vec<f64> = (0..101).map(|i| (i as f64 * 0.01).exp()).collect();
        let v = filon_cos(&g, 0.0, 0.01, 0.0);
        let s = simpson_uniform(&g, 0.01);
        assert!((v - s).abs() < 1e-14, "{v} vs {s}");
    }

    #[test]
    fn filon_fourth_order_on_smooth_envelope() {
        // ∫₀^π e^{−r} sin(10r) dr = [closed form]; halving h must shrink the
        // error by ≈ 16
        let omega = 10.0;
        let closed = {
            // ∫ e^{−r} sin(ωr) dr = [e^{−r}(−sin ωr − ω cos ωr)]/(1+ω²)
            let f = |r: f64| (-r).exp() * (-(omega * r).sin() - omega * (omega * r).cos())
                / (1.0 + omega * omega);
            f(PI) - f(0.0)
        };
        let run = |n: usize| {
            let h = PI / (n - 1) as f64;
            let g: Vec<f64> = (0..n).map(|i| (-(i as f64 * h)).exp()).collect();
            (filon_sin(&g, 0.0, h, omega) - closed).abs()
        };
        let e1 = run(257);
        let e2 = run(513);
        assert!(e1 / e2 > 8.0, "convergence order too low: {e1} vs {e2}");
        assert!(e2 < 1e-9, "absolute error too large: {e2}");
    }

    #[test]
    fn filon_high_frequency_error_stays_bounded() {
        // Against a slowly refined trapezoid with many nodes per period.
        let n = 8193;
        let h = PI / (n - 1) as f64;
        let g: Vec<f64> = (0..n).map(|i| (-(i as f64 * h)).exp()).collect();
        let omega = 40.0;
        let fine: Vec<f64> = (0..20 * (n - 1) + 1)
            .map(|i| {
                let r = i as f64 * h / 20.0;
                (-r).exp() * (omega * r).sin()
            })
            .collect();
        let reference = trapezoid_uniform(&fine, h / 20.0);
        let v = filon_sin(&g, 0.0, h, omega);
        assert!((v - reference).abs() < 1e-6, "{v} vs {reference}");
    }

    #[test]
    fn cumtrapz_endpoint_matches_total() {
        let g: Vec<f64> = (0..513).map(|i| ((i as f64) * 0.01).sin()).collect();
        let c = cumtrapz(&g, 0.01);
        assert!((c[512] - trapezoid_uniform(&g, 0.01)).abs() < 1e-14);
    }
}
