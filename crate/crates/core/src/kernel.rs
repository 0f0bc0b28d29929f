//! Memory kernels of the wave bath.
//!
//! Integrating the wave equation per Fourier mode and substituting back into
//! the force on the kinetic equation leaves a scalar memory kernel
//!
//! `p(t) = (2π)^{−n} |S^{n−1}| ∫₀^∞ sin(crt)/(cr) · r^{n−1} |σ̂₂(r)|² dr`,
//!
//! together with its normalized form `q(t) = p(t; c = 1)`, related by the
//! speed-scaling identity `p(t; c) = q(ct)/c`. For transverse dimension n ≥ 3
//! the kernel is integrable with limit constant
//! `κ = (2π)^{−n} ∫ |σ̂₂(ξ)|²/|ξ|² dξ` and quadratic tail `|q(t)| ≤ K/t²`,
//! where `K = (|S^{n−1}|/(2π)^n) ∫ |d²/dr² [r^{n−2}|σ̂₂(r)|²]| dr`; for n = 2
//! the limit constant diverges and partial integrals grow logarithmically.

use crate::formfactor::FormFactor;
use crate::quad::{cumtrapz, filon_cos, filon_sin, simpson_uniform, trapezoid_uniform};
use crate::special::sphere_area;
use crate::{Error, Result};
use rayon::prelude::*;

/// Wavenumber cutoff and node count actually used by the radial quadrature.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureMeta {
    pub wavenumber_cutoff: f64,
    pub node_count: usize,
}

/// Precomputed radial-quadrature state for one σ₂ and one transverse dimension.
///
/// Holds the weighted Fourier profile `g(r) = r^{n−2} |σ̂₂(r)|²` on a dense
/// uniform grid up to the cutoff where `r^{n−1}|σ̂₂|²` has decayed below
/// 1e−14 of its maximum; every kernel quantity is an integral against `g`.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    n: u32,
    weight: f64,
    step: f64,
    g: Vec<f64>,
    fourier_sq: Vec<f64>,
    meta: QuadratureMeta,
    sigma_l2_sq: f64,
}

/// Node count of the radial quadrature grid (power of two + 1, capped so long
/// n = 2 tables stay affordable; the Filon rule keeps accuracy uniform in t).
fn radial_nodes(n: u32) -> usize {
    match n {
        2 => 32769,
        _ => 16385,
    }
}

impl KernelEvaluator {
    pub fn new(sigma2: &FormFactor, n: u32) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(format!(
                "memory kernel transverse dimension n = {n} (supported: 2, 3)"
            )));
        }
        if sigma2.dim() != n {
            return Err(Error::InvalidParameter(format!(
                "σ₂ has dim {} but kernel dimension is {n}",
                sigma2.dim()
            )));
        }
        let weight = sphere_area(n)? / (2.0 * std::f64::consts::PI).powi(n as i32);

        // scan for the wavenumber cutoff: last r with r^{n−1}|σ̂₂|² above
        // 1e−14 of the running maximum, plus margin. The n = 3 transform is
        // Filon-integrated (exact in the oscillation), so a decimated profile
        // locates the crossing; the n = 2 Bessel transform is Simpson-based
        // and needs the full table to keep its noise floor below the
        // threshold. Either way the scan stops once the envelope has stayed
        // dead for a long stretch.
        let mut cutoff = 1.0f64;
        if !sigma2.is_zero() {
            let probe = if n == 2 {
                sigma2.clone()
            } else {
                sigma2.decimate(8)
            };
            let scan_step = 0.25;
            let mut peak = 0.0f64;
            let mut last_alive = 0.0f64;
            let mut r = 0.0;
            while r <= 400.0 {
                let v = probe.radial_fourier(r);
                let w = r.powi(n as i32 - 1) * v * v;
                peak = peak.max(w);
                if w > 1e-14 * peak {
                    last_alive = r;
                }
                if r - last_alive > 25.0 {
                    break;
                }
                r += scan_step;
            }
            cutoff = (last_alive * 1.2).max(2.0);
        }

        let node_count = radial_nodes(n);
        let step = cutoff / (node_count - 1) as f64;
        let ks: Vec<f64> = (0..node_count).map(|i| i as f64 * step).collect();
        let hat = sigma2.fourier_table(&ks);
        let fourier_sq: Vec<f64> = hat.iter().map(|&v| v * v).collect();
        let g: Vec<f64> = fourier_sq
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 * step).powi(n as i32 - 2) * v)
            .collect();
        Ok(KernelEvaluator {
            n,
            weight,
            step,
            g,
            fourier_sq,
            meta: QuadratureMeta {
                wavenumber_cutoff: cutoff,
                node_count,
            },
            sigma_l2_sq: sigma2.l2_norm_sq(),
        })
    }

    pub fn dim(&self) -> u32 {
        self.n
    }

    pub fn meta(&self) -> QuadratureMeta {
        self.meta
    }

    pub fn sigma_l2_sq(&self) -> f64 {
        self.sigma_l2_sq
    }

    /// Normalized kernel `q(t) = weight · ∫₀^∞ sin(tr) g(r) dr`.
    pub fn q(&self, t: f64) -> f64 {
        self.weight * filon_sin(&self.g, 0.0, self.step, t)
    }

    /// Speed-c kernel `p(t; c) = q(ct)/c`.
    pub fn p(&self, t: f64, c: f64) -> Result<f64> {
        if t < 0.0 || !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eval_kernel: need t ≥ 0 and c > 0, got t = {t}, c = {c}"
            )));
        }
        Ok(self.q(c * t) / c)
    }

    /// Limit constant `κ = weight · ∫₀^∞ r^{n−3} |σ̂₂(r)|² dr` (n ≥ 3).
    pub fn kappa(&self) -> Result<f64> {
        if self.n < 3 {
            return Err(Error::DivergentConstant(format!(
                "limit constant diverges for transverse dimension n = {}",
                self.n
            )));
        }
        let vals: Vec<f64> = self
            .fourier_sq
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 * self.step).powi(self.n as i32 - 3) * v)
            .collect();
        Ok(self.weight * simpson_uniform(&vals, self.step))
    }

    /// Tail constant `K = weight · ∫₀^∞ |g''(r)| dr` from second differences
    /// of the tabulated profile (n ≥ 3).
    pub fn tail_constant(&self) -> Result<f64> {
        if self.n < 3 {
            return Err(Error::UnsupportedDimension(format!(
                "tail constant needs n ≥ 3, got n = {}",
                self.n
            )));
        }
        let m = self.g.len();
        let mut acc = vec![0.0; m];
        for i in 1..m - 1 {
            acc[i] = ((self.g[i + 1] - 2.0 * self.g[i] + self.g[i - 1])
                / (self.step * self.step))
                .abs();
        }
        // even extension of |σ̂₂|² makes g = r^{n−2}|σ̂₂|² odd-dominant at 0 for
        // n = 3; the one-sided panels contribute O(step)·|g''| which the
        // trapezoid absorbs
        acc[0] = acc[1];
        acc[m - 1] = acc[m - 2];
        Ok(self.weight * trapezoid_uniform(&acc, self.step))
    }

    /// Plancherel cross-check value: `weight · ∫ r^{n−1}|σ̂₂|² dr`, which must
    /// reproduce `∫ σ₂²` independently of the spatial quadrature.
    pub fn plancherel_l2_sq(&self) -> f64 {
        let vals: Vec<f64> = self
            .fourier_sq
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 * self.step).powi(self.n as i32 - 1) * v)
            .collect();
        self.weight * simpson_uniform(&vals, self.step)
    }
}

/// One-shot kernel evaluation `p(t; c)`; builds the quadrature state for a
/// single query. Prefer [`KernelEvaluator`] or [`KernelTable`] in loops.
pub fn eval_kernel(t: f64, c: f64, sigma2: &FormFactor) -> Result<f64> {
    KernelEvaluator::new(sigma2, sigma2.dim())?.p(t, c)
}

/// Limit constant κ (n ≥ 3; diverges for n = 2).
pub fn kappa(sigma2: &FormFactor, n: u32) -> Result<f64> {
    KernelEvaluator::new(sigma2, n)?.kappa()
}

/// Tail constant K with `|q(t)| ≤ K/t²` (n ≥ 3).
pub fn tail_constant(sigma2: &FormFactor, n: u32) -> Result<f64> {
    KernelEvaluator::new(sigma2, n)?.tail_constant()
}

/// `∫₀^T q(t) dt` with the time variable integrated in closed form.
pub fn partial_integral(t_end: f64, sigma2: &FormFactor, n: u32) -> Result<f64> {
    if t_end < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "partial_integral: T must be ≥ 0, got {t_end}"
        )));
    }
    if t_end == 0.0 {
        return Ok(0.0);
    }
    let ev = KernelEvaluator::new(sigma2, n)?;
    partial_integral_with(&ev, t_end)
}

/// Partial integral reusing an existing evaluator (cheap for T-sweeps).
///
/// Exchanging the time and wavenumber integrals gives
///
/// ```text
/// ∫₀^T q dt = weight · ∫₀^∞ g(r) (1 − cos(Tr))/r dr,
/// ```
///
/// so every horizon costs one pass over the radial table instead of ~T/Δt
/// oscillatory kernel evaluations. On an inner zone — covering Tr ≲ 12 and a
/// fixed number of table steps where the curvature of 1/r defeats panel
/// fits — the factor (1 − cos(Tr))/r is kept intact and evaluated as
/// 2·sin²(Tr/2)/r on a fine subgrid (no cancellation, vanishing limit at
/// r = 0). Outside, the integrand splits into a plain and a Filon cosine
/// integral of G = g/r, both second-order-accurate in the table step with
/// the oscillation integrated exactly.
pub fn partial_integral_with(ev: &KernelEvaluator, t_end: f64) -> Result<f64> {
    if t_end < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "partial_integral: T must be ≥ 0, got {t_end}"
        )));
    }
    if t_end == 0.0 {
        return Ok(0.0);
    }
    let g = &ev.g;
    let h = ev.step;
    let len = g.len();

    let mut ia = ((12.0 / (t_end * h)).ceil() as usize).max(32);
    ia += ia % 2;
    let ia = ia.min(len - 1);
    let r_a = ia as f64 * h;

    // inner zone [0, r_a]: fine Simpson on cubically interpolated g
    let m = 8193usize;
    let sub = r_a / (m - 1) as f64;
    let vals: Vec<f64> = (0..m)
        .map(|i| {
            let r = i as f64 * sub;
            if r == 0.0 {
                return 0.0;
            }
            let s_half = (0.5 * t_end * r).sin();
            cubic_table(g, h, r) * 2.0 * s_half * s_half / r
        })
        .collect();
    let inner = simpson_uniform(&vals, sub);

    // outer zone [r_a, cutoff]: ∫ G dr − ∫ G cos(Tr) dr on the table nodes
    let outer = if ia < len - 1 {
        let gg: Vec<f64> = (ia..len).map(|j| g[j] / (j as f64 * h)).collect();
        simpson_uniform(&gg, h) - filon_cos(&gg, r_a, h, t_end)
    } else {
        0.0
    };

    Ok(ev.weight * (inner + outer))
}

/// 4-point Lagrange interpolation on a uniform table starting at 0 (window
/// clamped at the ends).
fn cubic_table(samples: &[f64], h: f64, r: f64) -> f64 {
    let u = r / h;
    let j = (u.floor() as i64 - 1).clamp(0, samples.len() as i64 - 4) as usize;
    let s = u - j as f64;
    let w0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    let w1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    let w2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    let w3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    w0 * samples[j] + w1 * samples[j + 1] + w2 * samples[j + 2] + w3 * samples[j + 3]
}

/// Tabulated kernel: `q` sampled on `[0, c·horizon]` with step `c·dt` so that
/// `p(j·dt; c) = q_values[j]/c` lands on exact nodes during memory
/// convolutions; carries κ and K (n ≥ 3) plus the cumulative integral.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub n: u32,
    pub wave_speed: f64,
    /// step of the q-time grid (= wave_speed · solver dt)
    pub dt: f64,
    pub q_values: Vec<f64>,
    /// cumulative ∫₀^{i·dt} q
    pub cumulative: Vec<f64>,
    pub kappa: Option<f64>,
    pub tail_k: Option<f64>,
    pub quadrature_meta: QuadratureMeta,
}

impl KernelTable {
    /// Builds the table for solver step `dt` and horizon `horizon` (both in
    /// p-time); q is tabulated out to `wave_speed · horizon`.
    pub fn build(
        sigma2: &FormFactor,
        n: u32,
        wave_speed: f64,
        horizon: f64,
        dt: f64,
    ) -> Result<Self> {
        let ev = KernelEvaluator::new(sigma2, n)?;
        Self::build_with(&ev, wave_speed, horizon, dt)
    }

    /// Same as [`KernelTable::build`] but reusing a prepared evaluator, so a
    /// batch of tables at different speeds pays for the radial quadrature
    /// setup once.
    pub fn build_with(
        ev: &KernelEvaluator,
        wave_speed: f64,
        horizon: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(wave_speed > 0.0) || !(horizon > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel table: need c > 0, horizon > 0, dt > 0 (got c = {wave_speed}, horizon = {horizon}, dt = {dt})"
            )));
        }
        let n = ev.dim();
        let dq = wave_speed * dt;
        let len = (horizon / dt).ceil() as usize + 1;
        let q_values: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|i| ev.q(i as f64 * dq))
            .collect();
        let cumulative = cumtrapz(&q_values, dq);
        let (kappa, tail_k) = if n >= 3 {
            (Some(ev.kappa()?), Some(ev.tail_constant()?))
        } else {
            (None, None)
        };
        Ok(KernelTable {
            n,
            wave_speed,
            dt: dq,
            q_values,
            cumulative,
            kappa,
            tail_k,
            quadrature_meta: ev.meta(),
        })
    }

    pub fn len(&self) -> usize {
        self.q_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_values.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        (self.q_values.len() - 1) as f64 * self.dt
    }

    /// q at arbitrary q-time by cubic interpolation (odd extension at 0).
    pub fn q(&self, t: f64) -> Result<f64> {
        if t.abs() > self.t_max() {
            return Err(Error::TableTooShort(format!(
                "q requested at |t| = {} but tabulated to {}",
                t.abs(),
                self.t_max()
            )));
        }
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        Ok(sign * crate::formfactor::cubic_radial(&self.q_values, self.dt, t.abs(), false))
    }

    /// p(t) = q(c·t)/c in p-time.
    pub fn p(&self, t: f64) -> Result<f64> {
        Ok(self.q(self.wave_speed * t)? / self.wave_speed)
    }

    /// p at the j-th solver node — exact table lookup, no interpolation.
    pub fn p_node(&self, j: usize) -> Result<f64> {
        if j >= self.q_values.len() {
            return Err(Error::TableTooShort(format!(
                "node {} requested but table holds {}",
                j,
                self.q_values.len()
            )));
        }
        Ok(self.q_values[j] / self.wave_speed)
    }

    /// ∫₀^t q in q-time (cumulative table, cubic interpolation, even extension).
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.t_max() {
            return Err(Error::TableTooShort(format!(
                "integral requested to t = {t} but tabulated to {}",
                self.t_max()
            )));
        }
        Ok(crate::formfactor::cubic_radial(&self.cumulative, self.dt, t, true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump3() -> FormFactor {
        FormFactor::bump(3, 1.0, 1.0).unwrap()
    }

    #[test]
    fn kernel_vanishes_at_time_zero_exactly() {
        let ev = KernelEvaluator::new(&bump3(), 3).unwrap();
        assert_eq!(ev.q(0.0), 0.0);
        assert_eq!(ev.p(0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_profile_gives_zero_kernel_and_constants() {
        let zero = FormFactor::bump(3, 1.0, 0.0).unwrap();
        let ev = KernelEvaluator::new(&zero, 3).unwrap();
        for &t in &[0.0, 0.5, 3.0, 40.0] {
            assert_eq!(ev.q(t), 0.0);
        }
        assert_eq!(ev.kappa().unwrap(), 0.0);
        assert_eq!(ev.tail_constant().unwrap(), 0.0);
    }

    #[test]
    fn speed_scaling_identity_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let ev = KernelEvaluator::new(&bump3(), 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let t: f64 = rng.gen_range(0.0..20.0);
            let c: f64 = rng.gen_range(0.1..10.0);
            let p = ev.p(t, c).unwrap();
            let q_scaled = ev.q(c * t) / c;
            assert!(
                (p - q_scaled).abs() <= 1e-10 * (1.0 + q_scaled.abs()),
                "t={t} c={c}: {p} vs {q_scaled}"
            );
        }
    }

    #[test]
    fn eval_kernel_rejects_bad_inputs() {
        let ff = bump3();
        assert!(eval_kernel(-1.0, 1.0, &ff).is_err());
        assert!(eval_kernel(1.0, 0.0, &ff).is_err());
        assert!(eval_kernel(1.0, -2.0, &ff).is_err());
    }

    #[test]
    fn linear_bound_holds_on_table() {
        let ff = bump3();
        let l2 = ff.l2_norm_sq();
        let tab = KernelTable::build(&ff, 3, 1.0, 10.0, 0.01).unwrap();
        for (i, &qv) in tab.q_values.iter().enumerate() {
            let t = i as f64 * tab.dt;
            assert!(
                qv.abs() <= l2 * t * (1.0 + 1e-9) + 1e-14,
                "t={t}: |q|={} > ‖σ₂‖²t={}",
                qv.abs(),
                l2 * t
            );
        }
    }

    #[test]
    fn plancherel_cross_check() {
        let ff = bump3();
        let ev = KernelEvaluator::new(&ff, 3).unwrap();
        let direct = ff.l2_norm_sq();
        let via_fourier = ev.plancherel_l2_sq();
        assert!(
            (direct - via_fourier).abs() < 1e-6 * direct,
            "{direct} vs {via_fourier}"
        );
    }

    #[test]
    fn kappa_positive_and_matches_time_domain_oracle() {
        let ev = KernelEvaluator::new(&bump3(), 3).unwrap();
        let kappa = ev.kappa().unwrap();
        assert!(kappa > 0.0);
        // independent oracle: I(T) = κ − A/T + O(1/T³) for the smooth bump,
        // so the Richardson combination 2·I(2T) − I(T) converges fast
        let i1 = partial_integral_with(&ev, 100.0).unwrap();
        let i2 = partial_integral_with(&ev, 200.0).unwrap();
        let oracle = 2.0 * i2 - i1;
        assert!(
            (kappa - oracle).abs() < 1e-4 * kappa,
            "kappa {kappa} vs oracle {oracle}"
        );
    }

    #[test]
    fn kappa_diverges_in_dimension_two() {
        let ff2 = FormFactor::bump(2, 1.0, 1.0).unwrap();
        match kappa(&ff2, 2) {
            Err(Error::DivergentConstant(_)) => {}
            other => panic!("expected divergent-constant error, got {other:?}"),
        }
    }

    #[test]
    fn tail_bound_quadratic_decay() {
        let ev = KernelEvaluator::new(&bump3(), 3).unwrap();
        let k = ev.tail_constant().unwrap();
        assert!(k.is_finite() && k > 0.0);
        let mut t = 5.0;
        while t <= 500.0 {
            let q = ev.q(t);
            assert!(
                q.abs() * t * t <= k * (1.0 + 1e-6),
                "t={t}: |q|t² = {} > K = {k}",
                q.abs() * t * t
            );
            t *= 1.37;
        }
    }

    #[test]
    fn amplitude_scaling_is_quadratic() {
        let ff = bump3();
        let scaled = ff.scaled(3.0);
        let ev1 = KernelEvaluator::new(&ff, 3).unwrap();
        let ev2 = KernelEvaluator::new(&scaled, 3).unwrap();
        for &t in &[0.7, 4.0, 31.0] {
            let a = ev2.q(t);
            let b = 9.0 * ev1.q(t);
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "t={t}: {a} vs {b}");
        }
        let k1 = ev1.tail_constant().unwrap();
        let k2 = ev2.tail_constant().unwrap();
        assert!((k2 - 9.0 * k1).abs() < 1e-9 * k1.max(1.0));
    }

    #[test]
    fn partial_integral_converges_for_n3() {
        let ev = KernelEvaluator::new(&bump3(), 3).unwrap();
        let kappa = ev.kappa().unwrap();
        let tail_k = ev.tail_constant().unwrap();
        assert_eq!(partial_integral_with(&ev, 0.0).unwrap(), 0.0);
        // q oscillates, so the sampled gaps need not shrink monotonically;
        // the guarantee is the 1/T envelope.
        for &t_end in &[25.0, 50.0, 100.0] {
            let gap = (partial_integral_with(&ev, t_end).unwrap() - kappa).abs();
            assert!(
                gap <= tail_k / t_end + 1e-4 * kappa,
                "T={t_end}: gap {gap} vs envelope {}",
                tail_k / t_end
            );
        }
    }

    #[test]
    fn partial_integral_grows_logarithmically_for_n2() {
        let ff2 = FormFactor::bump(2, 1.0, 1.0).unwrap();
        let ev = KernelEvaluator::new(&ff2, 2).unwrap();
        // q₂(t) ~ (|σ̂₂(0)|²/(2π)) / t, so I(eT) − I(T) → |σ̂₂(0)|²/(2π)
        let hat0 = ff2.radial_fourier(0.0);
        let slope = hat0 * hat0 / (2.0 * std::f64::consts::PI);
        let i10 = partial_integral_with(&ev, 10.0).unwrap();
        let i100 = partial_integral_with(&ev, 100.0).unwrap();
        let fitted = (i100 - i10) / 10f64.ln();
        assert!(
            (fitted - slope).abs() < 0.1 * slope,
            "fitted {fitted} vs predicted {slope}"
        );
    }

    #[test]
    fn table_nodes_and_interpolation_agree() {
        let ff = bump3();
        let c = 2.0;
        let tab = KernelTable::build(&ff, 3, c, 5.0, 0.01).unwrap();
        assert_eq!(tab.q_values[0], 0.0);
        let ev = KernelEvaluator::new(&ff, 3).unwrap();
        // node lookups are exact table reads
        for j in [1usize, 7, 100, 499] {
            let p_direct = ev.p(j as f64 * 0.01, c).unwrap();
            let p_tab = tab.p_node(j).unwrap();
            assert!((p_direct - p_tab).abs() < 1e-14 * (1.0 + p_direct.abs()));
        }
        // off-node interpolation: cubic reads from a table at spacing c·dt,
        // so the error is O((c·dt)³) and contracts under table refinement
        let probes = [0.5371, 1.7013, 2.9402, 4.3331];
        let coarse_err = probes
            .iter()
            .map(|&t| (tab.p(t).unwrap() - ev.p(t, c).unwrap()).abs())
            .fold(0.0f64, f64::max);
        assert!(coarse_err < 1e-5, "coarse interpolation error {coarse_err:.3e}");
        let fine = KernelTable::build(&ff, 3, c, 5.0, 0.0025).unwrap();
        let fine_err = probes
            .iter()
            .map(|&t| (fine.p(t).unwrap() - ev.p(t, c).unwrap()).abs())
            .fold(0.0f64, f64::max);
        assert!(
            fine_err < coarse_err / 30.0 + 1e-14,
            "interpolation error did not contract: {coarse_err:.3e} -> {fine_err:.3e}"
        );
        // beyond the horizon → table-too-short
        assert!(matches!(
            tab.q(tab.t_max() + 1.0),
            Err(Error::TableTooShort(_))
        ));
        assert!(tab.p_node(tab.len()).is_err());
        // cumulative endpoint matches the direct partial integral to the
        // trapezoid rule's second-order budget, and contracts with the step
        let direct = partial_integral_with(&ev, tab.t_max()).unwrap();
        let coarse_gap = (direct - tab.integral_to(tab.t_max()).unwrap()).abs();
        assert!(
            coarse_gap < 5e-5 * (1.0 + direct.abs()),
            "cumulative gap {coarse_gap:.3e}"
        );
        let fine_gap = (direct - fine.integral_to(fine.t_max()).unwrap()).abs();
        assert!(
            fine_gap < coarse_gap / 10.0 + 1e-12,
            "cumulative gap did not contract: {coarse_gap:.3e} -> {fine_gap:.3e}"
        );
    }
}
