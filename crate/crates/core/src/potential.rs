//! Assembly of the self-consistent potential Φ = Φ₀ − L(f).
//!
//! The wave field is eliminated analytically: its homogeneous part contributes
//! `Φ₀(t,x)` (a σ₁-convolution of the transverse contraction of the free wave
//! propagator against the initial data), and its driven part contributes the
//! Volterra memory term `L(f)(t,x) = ∫₀^t p(t−s) (Σ∗ρ)(s,x) ds` with
//! `Σ = σ₁∗σ₁`. This module also provides the ε-rescaled memory term, the
//! limit potential `Φ̄ = −κ Σ∗ρ`, and a direct per-mode spectral integration
//! of the wave equation used as an independent oracle for the reduction.

use crate::formfactor::{ConvolvedProfile, FormFactor};
use crate::grid::{linear_interp_zero, Grid1, MacroDensity};
use crate::kernel::KernelTable;
use crate::quad::{filon_cos, filon_sin, simpson_uniform, trapezoid_uniform};
use crate::special::sphere_area;
use crate::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;

/// Which assembly produced a potential field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceTag {
    Phi0,
    Memory,
    Rescaled,
    Limit,
    DirectWave,
    Combined,
    External,
}

/// A potential (or potential contribution) on the spatial grid, with its
/// gradient maintained by centered differences.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub grid: Grid1,
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
    pub source_tag: SourceTag,
}

impl PotentialField {
    pub fn new(grid: Grid1, values: Vec<f64>, source_tag: SourceTag) -> Self {
        debug_assert_eq!(values.len(), grid.len);
        let gradient = centered_gradient(&values, grid.step);
        PotentialField {
            grid,
            values,
            gradient,
            source_tag,
        }
    }

    pub fn zero(grid: Grid1, source_tag: SourceTag) -> Self {
        PotentialField {
            grid,
            values: vec![0.0; grid.len],
            gradient: vec![0.0; grid.len],
            source_tag,
        }
    }

    /// Φ = Φ₀ − L: fixed sign convention for the memory contribution.
    pub fn combined(phi0: &PotentialField, memory: &PotentialField) -> Result<PotentialField> {
        if !phi0.grid.approx_eq(&memory.grid) {
            return Err(Error::GridMismatch(
                "potential combination needs matching x-grids".into(),
            ));
        }
        let values = phi0
            .values
            .iter()
            .zip(&memory.values)
            .map(|(a, b)| a - b)
            .collect();
        let gradient = phi0
            .gradient
            .iter()
            .zip(&memory.gradient)
            .map(|(a, b)| a - b)
            .collect();
        Ok(PotentialField {
            grid: phi0.grid,
            values,
            gradient,
            source_tag: SourceTag::Combined,
        })
    }

    /// Linear interpolation of Φ (zero extension).
    pub fn value_at(&self, x: f64) -> f64 {
        linear_interp_zero(&self.values, &self.grid, x)
    }

    /// Linear interpolation of ∇Φ (zero extension).
    pub fn grad_at(&self, x: f64) -> f64 {
        linear_interp_zero(&self.gradient, &self.grid, x)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn grad_linf(&self) -> f64 {
        self.gradient.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

fn centered_gradient(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let mut g = vec![0.0; n];
    if n < 2 {
        return g;
    }
    for i in 1..n - 1 {
        g[i] = (values[i + 1] - values[i - 1]) / (2.0 * step);
    }
    g[0] = (values[1] - values[0]) / step;
    g[n - 1] = (values[n - 1] - values[n - 2]) / step;
    g
}

/// Uniformly spaced sequence of potential fields with clamped linear
/// interpolation in time — the force interface consumed by the characteristic
/// integrator (bilinear in (t, x) overall).
#[derive(Clone, Debug)]
pub struct PotentialTimeline {
    pub t0: f64,
    pub dt: f64,
    pub fields: Vec<PotentialField>,
}

impl PotentialTimeline {
    pub fn constant(field: PotentialField) -> Self {
        PotentialTimeline {
            t0: 0.0,
            dt: 1.0,
            fields: vec![field],
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t0 + self.dt * (self.fields.len().saturating_sub(1)) as f64
    }

    /// ∇Φ(t, x), linear and clamped in t.
    pub fn grad_at(&self, t: f64, x: f64) -> f64 {
        match self.fields.len() {
            0 => 0.0,
            1 => self.fields[0].grad_at(x),
            len => {
                let u = ((t - self.t0) / self.dt).clamp(0.0, (len - 1) as f64);
                let i = (u.floor() as usize).min(len - 2);
                let w = u - i as f64;
                (1.0 - w) * self.fields[i].grad_at(x) + w * self.fields[i + 1].grad_at(x)
            }
        }
    }

    pub fn value_at(&self, t: f64, x: f64) -> f64 {
        match self.fields.len() {
            0 => 0.0,
            1 => self.fields[0].value_at(x),
            len => {
                let u = ((t - self.t0) / self.dt).clamp(0.0, (len - 1) as f64);
                let i = (u.floor() as usize).min(len - 2);
                let w = u - i as f64;
                (1.0 - w) * self.fields[i].value_at(x) + w * self.fields[i + 1].value_at(x)
            }
        }
    }
}

/// Convolution of a compactly supported radial profile with a gridded density:
/// `(σ ∗ ρ)(x_i) = Σ_j σ(x_i − x_j) ρ_j Δx` (zero padding outside the box).
pub fn convolve_on_grid<F: Fn(f64) -> f64 + Sync>(
    eval: F,
    support: f64,
    rho: &MacroDensity,
) -> Vec<f64> {
    let n = rho.grid.len;
    let h = rho.grid.step;
    let reach = (support / h).ceil() as i64 + 1;
    (0..n as i64)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let lo = (i - reach).max(0);
            let hi = (i + reach).min(n as i64 - 1);
            for j in lo..=hi {
                let d = (i - j) as f64 * h;
                acc += eval(d) * rho.values[j as usize];
            }
            acc * h
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Wave initial data
// ---------------------------------------------------------------------------

/// One separable term `a(x)·b(|y|)` of the wave initial data.
#[derive(Clone, Debug)]
pub struct WaveTerm {
    /// spatial profile a on the x-grid
    pub spatial: Vec<f64>,
    /// transverse radial profile b (dimension n)
    pub transverse: FormFactor,
}

/// Initial wave data `Ψ₀ = Σ_k a_k(x) b_k(|y|)`, `Ψ₁ = Σ_k ã_k(x) b̃_k(|y|)`,
/// held in the radial-Fourier representation required by the propagator.
#[derive(Clone, Debug)]
pub struct WaveInitialData {
    pub grid: Grid1,
    pub n: u32,
    pub psi0_terms: Vec<WaveTerm>,
    pub psi1_terms: Vec<WaveTerm>,
}

/// `∫ b_j b_k dy = |S^{n−1}| ∫₀^∞ b_j(ρ) b_k(ρ) ρ^{n−1} dρ`.
fn transverse_dot(a: &FormFactor, b: &FormFactor) -> f64 {
    let n = a.dim();
    let radius = a.support_radius().min(b.support_radius());
    let m = 4097usize;
    let h = radius / (m - 1) as f64;
    let vals: Vec<f64> = (0..m)
        .map(|i| {
            let r = i as f64 * h;
            r.powi(n as i32 - 1) * a.eval(r) * b.eval(r)
        })
        .collect();
    sphere_area(n).expect("dims validated") * simpson_uniform(&vals, h)
}

impl WaveInitialData {
    pub fn zero(grid: Grid1, n: u32) -> Self {
        WaveInitialData {
            grid,
            n,
            psi0_terms: Vec::new(),
            psi1_terms: Vec::new(),
        }
    }

    pub fn new(
        grid: Grid1,
        n: u32,
        psi0_terms: Vec<WaveTerm>,
        psi1_terms: Vec<WaveTerm>,
    ) -> Result<Self> {
        for term in psi0_terms.iter().chain(&psi1_terms) {
            if term.transverse.dim() != n {
                return Err(Error::InvalidParameter(format!(
                    "wave term transverse dim {} ≠ n = {n}",
                    term.transverse.dim()
                )));
            }
            if term.spatial.len() != grid.len {
                return Err(Error::GridMismatch(
                    "wave term spatial profile length ≠ x-grid length".into(),
                ));
            }
            if !term.spatial.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "wave term spatial profile has non-finite entries".into(),
                ));
            }
        }
        Ok(WaveInitialData {
            grid,
            n,
            psi0_terms,
            psi1_terms,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.psi0_terms.is_empty() && self.psi1_terms.is_empty()
    }

    fn term_list_l2_sq(&self, terms: &[WaveTerm]) -> f64 {
        let h = self.grid.step;
        let mut total = 0.0;
        for (j, tj) in terms.iter().enumerate() {
            for (k, tk) in terms.iter().enumerate() {
                if k < j {
                    continue;
                }
                let spatial: Vec<f64> = tj
                    .spatial
                    .iter()
                    .zip(&tk.spatial)
                    .map(|(a, b)| a * b)
                    .collect();
                let sdot = trapezoid_uniform(&spatial, h);
                let tdot = transverse_dot(&tj.transverse, &tk.transverse);
                let term = sdot * tdot;
                total += if k == j { term } else { 2.0 * term };
            }
        }
        total.max(0.0)
    }

    /// ‖Ψ₀‖²_{L²(dx dy)}.
    pub fn psi0_l2_sq(&self) -> f64 {
        self.term_list_l2_sq(&self.psi0_terms)
    }

    /// ‖Ψ₁‖²_{L²(dx dy)}.
    pub fn psi1_l2_sq(&self) -> f64 {
        self.term_list_l2_sq(&self.psi1_terms)
    }

    /// ‖∇_y Ψ₀‖²_{L²(dx dy)} (elastic part of the vibrational energy).
    pub fn psi0_grad_l2_sq(&self) -> f64 {
        let h = self.grid.step;
        let mut total = 0.0;
        for (j, tj) in self.psi0_terms.iter().enumerate() {
            for (k, tk) in self.psi0_terms.iter().enumerate() {
                if k < j {
                    continue;
                }
                let spatial: Vec<f64> = tj
                    .spatial
                    .iter()
                    .zip(&tk.spatial)
                    .map(|(a, b)| a * b)
                    .collect();
                let sdot = trapezoid_uniform(&spatial, h);
                // ∫ ∇b_j·∇b_k dy for radial profiles
                let n = self.n;
                let radius = tj
                    .transverse
                    .support_radius()
                    .min(tk.transverse.support_radius());
                let m = 4097usize;
                let hr = radius / (m - 1) as f64;
                let vals: Vec<f64> = (0..m)
                    .map(|i| {
                        let r = i as f64 * hr;
                        r.powi(n as i32 - 1)
                            * tj.transverse.eval_deriv(r)
                            * tk.transverse.eval_deriv(r)
                    })
                    .collect();
                let tdot = sphere_area(n).expect("validated") * simpson_uniform(&vals, hr);
                let term = sdot * tdot;
                total += if k == j { term } else { 2.0 * term };
            }
        }
        total.max(0.0)
    }

    /// ε-weighted vibrational energy `(ε/2)‖Ψ₁‖² + (1/2)‖∇_yΨ₀‖²`.
    pub fn energy_vib(&self, eps: f64) -> f64 {
        0.5 * eps * self.psi1_l2_sq() + 0.5 * self.psi0_grad_l2_sq()
    }
}

// ---------------------------------------------------------------------------
// Φ₀: homogeneous wave contribution
// ---------------------------------------------------------------------------

/// Scans for the radius beyond which `f` stays below 1e−14 of its running max.
fn decay_cutoff<F: Fn(f64) -> f64>(f: F) -> f64 {
    let scan_step = 0.25;
    let mut peak = 0.0f64;
    let mut last_alive = 0.0f64;
    let mut r = 0.0;
    while r <= 400.0 {
        let w = f(r).abs();
        peak = peak.max(w);
        if w > 1e-14 * peak && peak > 0.0 {
            last_alive = r;
        }
        r += scan_step;
    }
    (last_alive * 1.2).max(2.0)
}

/// Precomputed evaluator for
/// `Φ₀(t,x) = Σ_k (σ₁∗a_k)(x)·C⁰_k(t) + Σ_k (σ₁∗ã_k)(x)·C¹_k(t)` with
/// `C⁰_k(t) = w_n ∫₀^∞ r^{n−1} b̂_k(r) σ̂₂(r) cos(crt) dr` and
/// `C¹_k(t) = (w_n/c) ∫₀^∞ r^{n−2} b̂_k(r) σ̂₂(r) sin(crt) dr`,
/// `w_n = |S^{n−1}|/(2π)^n` — the transverse contraction of the free
/// propagator against separable initial data.
#[derive(Clone, Debug)]
pub struct Phi0Evaluator {
    grid: Grid1,
    c: f64,
    /// per ψ₀-term: (σ₁∗a_k on grid, cos-profile table)
    cos_terms: Vec<(Vec<f64>, Vec<f64>)>,
    /// per ψ₁-term: (σ₁∗ã_k on grid, sin-profile table)
    sin_terms: Vec<(Vec<f64>, Vec<f64>)>,
    r_step: f64,
}

impl Phi0Evaluator {
    pub fn new(
        wave: &WaveInitialData,
        sigma1: &FormFactor,
        sigma2: &FormFactor,
        c: f64,
    ) -> Result<Self> {
        if sigma2.dim() != wave.n {
            return Err(Error::InvalidParameter(format!(
                "σ₂ dim {} ≠ wave transverse dimension {}",
                sigma2.dim(),
                wave.n
            )));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "wave speed must be positive, got {c}"
            )));
        }
        let n = wave.n;
        let weight = sphere_area(n)? / (2.0 * std::f64::consts::PI).powi(n as i32);
        // shared radial grid covering every b̂_k σ̂₂ product
        let mut cutoff: f64 = 2.0;
        for term in wave.psi0_terms.iter().chain(&wave.psi1_terms) {
            let t = &term.transverse;
            cutoff = cutoff.max(decay_cutoff(|r| {
                r.powi(n as i32 - 1) * t.radial_fourier(r) * sigma2.radial_fourier(r)
            }));
        }
        let nodes = 16385usize;
        let r_step = cutoff / (nodes - 1) as f64;
        let ks: Vec<f64> = (0..nodes).map(|i| i as f64 * r_step).collect();
        let sigma2_hat = sigma2.fourier_table(&ks);

        let conv = |spatial: &[f64]| -> Vec<f64> {
            let rho = MacroDensity {
                grid: wave.grid,
                values: spatial.to_vec(),
            };
            convolve_on_grid(|d| sigma1.eval(d.abs()), sigma1.support_radius(), &rho)
        };

        let cos_terms = wave
            .psi0_terms
            .iter()
            .map(|term| {
                let hat = term.transverse.fourier_table(&ks);
                let profile: Vec<f64> = hat
                    .iter()
                    .zip(&sigma2_hat)
                    .enumerate()
                    .map(|(i, (&b, &s))| weight * (i as f64 * r_step).powi(n as i32 - 1) * b * s)
                    .collect();
                (conv(&term.spatial), profile)
            })
            .collect();
        let sin_terms = wave
            .psi1_terms
            .iter()
            .map(|term| {
                let hat = term.transverse.fourier_table(&ks);
                let profile: Vec<f64> = hat
                    .iter()
                    .zip(&sigma2_hat)
                    .enumerate()
                    .map(|(i, (&b, &s))| {
                        weight / c * (i as f64 * r_step).powi(n as i32 - 2) * b * s
                    })
                    .collect();
                (conv(&term.spatial), profile)
            })
            .collect();
        Ok(Phi0Evaluator {
            grid: wave.grid,
            c,
            cos_terms,
            sin_terms,
            r_step,
        })
    }

    /// Φ₀(t, ·) on the grid.
    pub fn eval(&self, t: f64) -> PotentialField {
        let mut values = vec![0.0; self.grid.len];
        let omega = self.c * t;
        for (spatial, profile) in &self.cos_terms {
            let coeff = filon_cos(profile, 0.0, self.r_step, omega);
            for (v, s) in values.iter_mut().zip(spatial) {
                *v += coeff * s;
            }
        }
        for (spatial, profile) in &self.sin_terms {
            let coeff = filon_sin(profile, 0.0, self.r_step, omega);
            for (v, s) in values.iter_mut().zip(spatial) {
                *v += coeff * s;
            }
        }
        PotentialField::new(self.grid, values, SourceTag::Phi0)
    }
}

/// One-shot Φ₀(t,·); builds the evaluator per call.
pub fn initial_potential(
    t: f64,
    wave: &WaveInitialData,
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    c: f64,
) -> Result<PotentialField> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("time must be ≥ 0, got {t}")));
    }
    Ok(Phi0Evaluator::new(wave, sigma1, sigma2, c)?.eval(t))
}

// ---------------------------------------------------------------------------
// Memory term
// ---------------------------------------------------------------------------

/// Append-only history of the convolved source `(Σ∗ρ)(s_k, ·)` at uniform
/// steps; snapshot k corresponds to time `k·dt`.
#[derive(Clone, Debug)]
pub struct MemoryHistory {
    pub dt: f64,
    pub grid: Grid1,
    pub snapshots: Vec<Vec<f64>>,
}

impl MemoryHistory {
    pub fn new(dt: f64, grid: Grid1) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "history step must be positive, got {dt}"
            )));
        }
        Ok(MemoryHistory {
            dt,
            grid,
            snapshots: Vec::new(),
        })
    }

    pub fn push(&mut self, sigma_rho: Vec<f64>) -> Result<()> {
        if sigma_rho.len() != self.grid.len {
            return Err(Error::GridMismatch(
                "history snapshot length ≠ x-grid length".into(),
            ));
        }
        self.snapshots.push(sigma_rho);
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.snapshots.len()
    }

    pub fn t_last(&self) -> f64 {
        (self.snapshots.len().saturating_sub(1)) as f64 * self.dt
    }
}

fn history_index(history: &MemoryHistory, t: f64) -> Result<usize> {
    let j = (t / history.dt).round() as i64;
    if j < 0
        || (t - j as f64 * history.dt).abs() > 1e-9 * history.dt.max(1.0)
        || j as usize >= history.snapshots.len()
    {
        return Err(Error::MissingHistory(format!(
            "density history requested at t = {t} but recorded to {}",
            history.t_last()
        )));
    }
    Ok(j as usize)
}

/// `L(f)(t,·) = ∫₀^t p(t−s)(Σ∗ρ)(s,·) ds` by composite trapezoid over the
/// stored history; the kernel values land on exact table nodes.
///
/// Sign convention: this returns `L(f)` itself; its contribution to the
/// potential is `Φ = Φ₀ − L(f)`.
pub fn memory_potential(
    history: &MemoryHistory,
    kernel: &KernelTable,
    t: f64,
) -> Result<PotentialField> {
    let j = history_index(history, t)?;
    if (kernel.dt - kernel.wave_speed * history.dt).abs() > 1e-12 * kernel.dt {
        return Err(Error::GridMismatch(
            "kernel table step does not match history step".into(),
        ));
    }
    let n = history.grid.len;
    let mut values = vec![0.0; n];
    if j > 0 {
        for m in 0..=j {
            let p = kernel.p_node(j - m)?;
            // trapezoid endpoints: m = 0 carries ½ weight; m = j also does,
            // but p(0) = 0 makes it vanish anyway
            let w = if m == 0 || m == j { 0.5 } else { 1.0 };
            let coeff = w * p * history.dt;
            if coeff != 0.0 {
                for (v, s) in values.iter_mut().zip(&history.snapshots[m]) {
                    *v += coeff * s;
                }
            }
        }
    }
    Ok(PotentialField::new(history.grid, values, SourceTag::Memory))
}

/// Rescaled memory term
/// `(1/ε)L_ε(f)(t,·) = ∫₀^{t/√ε} q(s)(Σ∗ρ)(t−s√ε,·) ds`, evaluated through
/// the speed-`1/√ε` kernel table (the two formulations coincide exactly on
/// the shared s-grid).
pub fn rescaled_memory_potential(
    history: &MemoryHistory,
    kernel: &KernelTable,
    t: f64,
    eps: f64,
) -> Result<PotentialField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rescaling parameter must be positive, got {eps}"
        )));
    }
    let expected_speed = 1.0 / eps.sqrt();
    if (kernel.wave_speed - expected_speed).abs() > 1e-9 * expected_speed {
        return Err(Error::InvalidParameter(format!(
            "kernel table speed {} does not match 1/√ε = {expected_speed}",
            kernel.wave_speed
        )));
    }
    // memory_potential through the speed-1/√ε table returns
    // ∫₀^t p_ε(t−s)(Σ∗ρ)(s) ds = ε·∫₀^{t/√ε} q(u)(Σ∗ρ)(t−u√ε) du,
    // so the rescaled operator is that integral divided by ε.
    let base = memory_potential(history, kernel, t)?;
    let values: Vec<f64> = base.values.iter().map(|v| v / eps).collect();
    Ok(PotentialField::new(base.grid, values, SourceTag::Rescaled))
}

/// Limit potential `Φ̄ = −κ·(Σ∗ρ)`: the attractive effective interaction.
pub fn limit_potential(
    rho: &MacroDensity,
    sigma: &ConvolvedProfile,
    kappa: f64,
) -> Result<PotentialField> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "limit constant must be positive, got {kappa}"
        )));
    }
    let conv = convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), rho);
    let values = conv.iter().map(|v| -kappa * v).collect();
    Ok(PotentialField::new(rho.grid, values, SourceTag::Limit))
}

// ---------------------------------------------------------------------------
// Direct wave solver (independent oracle)
// ---------------------------------------------------------------------------

/// Stable oscillator-step helpers: value/velocity response of
/// `u'' + ω²u = S₀ + m·s` over a step `h` (exact for piecewise-linear source).
fn oscillator_step(
    psi: f64,
    pi: f64,
    omega: f64,
    s0: f64,
    slope: f64,
    h: f64,
) -> (f64, f64) {
    let x = omega * h;
    if x < 1e-4 {
        // series in ωh, exact limit at ω = 0
        let x2 = x * x;
        let cos_f = 1.0 - x2 / 2.0 * (1.0 - x2 / 12.0);
        let sinc = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0); // sin(x)/x
        let one_m_cos = h * h / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0)); // (1−cos)/ω²
        let x_m_sin = h * h * h / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0)); // (x−sin)/ω³·h³/x³→ (ωh−sin ωh)/ω³
        let psi_new = psi * cos_f + pi * h * sinc + s0 * one_m_cos + slope * x_m_sin;
        let pi_new = -psi * omega * omega * h * sinc + pi * cos_f
            + s0 * h * sinc
            + slope * one_m_cos;
        (psi_new, pi_new)
    } else {
        let (sin_x, cos_x) = x.sin_cos();
        let psi_new = psi * cos_x
            + pi * sin_x / omega
            + s0 * (1.0 - cos_x) / (omega * omega)
            + slope * (x - sin_x) / (omega * omega * omega);
        let pi_new = -psi * omega * sin_x
            + pi * cos_x
            + s0 * sin_x / omega
            + slope * (1.0 - cos_x) / (omega * omega);
        (psi_new, pi_new)
    }
}

/// Per-mode spectral wave field `Ψ̂(t, x_i, r_k)` with exact homogeneous
/// rotation and exact Duhamel response to a source held piecewise-linear in
/// time: `(∂²_t + c²r²) Ψ̂ = −source_scale · σ̂₂(r) · (σ₁∗ρ)(t, x)`.
#[derive(Clone, Debug)]
pub struct WaveField {
    pub grid: Grid1,
    pub n: u32,
    pub c: f64,
    pub source_scale: f64,
    pub time: f64,
    r_step: f64,
    /// σ̂₂ on the radial grid
    sigma2_hat: Vec<f64>,
    /// Ψ̂ and ∂_tΨ̂, shape [nx, nr]
    psi: Array2<f64>,
    pi: Array2<f64>,
}

impl WaveField {
    /// `resolution` multiplies the default per-period node budget (≥ 20 nodes
    /// per period of cos(c r t_final) at the cutoff).
    pub fn new(
        wave: &WaveInitialData,
        sigma2: &FormFactor,
        c: f64,
        source_scale: f64,
        t_final: f64,
        resolution: f64,
    ) -> Result<Self> {
        if sigma2.dim() != wave.n {
            return Err(Error::InvalidParameter(format!(
                "σ₂ dim {} ≠ wave transverse dimension {}",
                sigma2.dim(),
                wave.n
            )));
        }
        if !(c > 0.0) || !(t_final > 0.0) || !(resolution > 0.0) {
            return Err(Error::InvalidParameter(
                "wave field needs c > 0, t_final > 0, resolution > 0".into(),
            ));
        }
        let n = wave.n;
        let mut cutoff = decay_cutoff(|r| {
            let s = sigma2.radial_fourier(r);
            r.powi(n as i32 - 1) * s * s
        });
        for term in wave.psi0_terms.iter().chain(&wave.psi1_terms) {
            let t = &term.transverse;
            cutoff = cutoff.max(decay_cutoff(|r| {
                r.powi(n as i32 - 1) * t.radial_fourier(r) * sigma2.radial_fourier(r)
            }));
        }
        let per_period = 20.0 * cutoff * c * t_final / (2.0 * std::f64::consts::PI);
        let nr = ((per_period * resolution).ceil() as usize)
            .max(257)
            .min(32769);
        let r_step = cutoff / (nr - 1) as f64;
        let ks: Vec<f64> = (0..nr).map(|i| i as f64 * r_step).collect();
        let sigma2_hat = sigma2.fourier_table(&ks);

        let nx = wave.grid.len;
        let mut psi = Array2::zeros((nx, nr));
        let mut pi = Array2::zeros((nx, nr));
        for term in &wave.psi0_terms {
            let hat = term.transverse.fourier_table(&ks);
            for i in 0..nx {
                let a = term.spatial[i];
                for k in 0..nr {
                    psi[[i, k]] += a * hat[k];
                }
            }
        }
        for term in &wave.psi1_terms {
            let hat = term.transverse.fourier_table(&ks);
            for i in 0..nx {
                let a = term.spatial[i];
                for k in 0..nr {
                    pi[[i, k]] += a * hat[k];
                }
            }
        }
        Ok(WaveField {
            grid: wave.grid,
            n,
            c,
            source_scale,
            time: 0.0,
            r_step,
            sigma2_hat,
            psi,
            pi,
        })
    }

    pub fn radial_nodes(&self) -> usize {
        self.sigma2_hat.len()
    }

    /// Advances all modes by `dt` with the source `σ₁∗ρ` linear between its
    /// values at the current time (`conv_rho_0`) and at `t + dt`
    /// (`conv_rho_1`).
    pub fn advance(&mut self, conv_rho_0: &[f64], conv_rho_1: &[f64], dt: f64) -> Result<()> {
        if conv_rho_0.len() != self.grid.len || conv_rho_1.len() != self.grid.len {
            return Err(Error::GridMismatch(
                "wave source length ≠ x-grid length".into(),
            ));
        }
        let nr = self.sigma2_hat.len();
        let c = self.c;
        let scale = self.source_scale;
        let r_step = self.r_step;
        let sigma2_hat = &self.sigma2_hat;
        self.psi
            .rows_mut()
            .into_iter()
            .zip(self.pi.rows_mut())
            .enumerate()
            .par_bridge()
            .for_each(|(i, (mut psi_row, mut pi_row))| {
                let g0 = conv_rho_0[i];
                let g1 = conv_rho_1[i];
                for k in 0..nr {
                    let omega = c * (k as f64) * r_step;
                    let s0 = -scale * sigma2_hat[k] * g0;
                    let s1 = -scale * sigma2_hat[k] * g1;
                    let slope = (s1 - s0) / dt;
                    let (p, q) =
                        oscillator_step(psi_row[k], pi_row[k], omega, s0, slope, dt);
                    psi_row[k] = p;
                    pi_row[k] = q;
                }
            });
        self.time += dt;
        Ok(())
    }

    /// Reconstructs `Φ(t,x) = (σ₁ ∗ ⟨Ψ̂, σ̂₂⟩)(x)` via the transverse
    /// Plancherel contraction `⟨Ψ̂,σ̂₂⟩(z) = w_n ∫ Ψ̂(z,r) σ̂₂(r) r^{n−1} dr`.
    pub fn contract(&self, sigma1: &FormFactor) -> Result<PotentialField> {
        let weight =
            sphere_area(self.n)? / (2.0 * std::f64::consts::PI).powi(self.n as i32);
        let nr = self.sigma2_hat.len();
        let contracted: Vec<f64> = self
            .psi
            .rows()
            .into_iter()
            .map(|row| {
                let vals: Vec<f64> = (0..nr)
                    .map(|k| {
                        let r = k as f64 * self.r_step;
                        row[k] * self.sigma2_hat[k] * r.powi(self.n as i32 - 1)
                    })
                    .collect();
                weight * simpson_uniform(&vals, self.r_step)
            })
            .collect();
        let rho = MacroDensity {
            grid: self.grid,
            values: contracted,
        };
        let values = convolve_on_grid(|d| sigma1.eval(d.abs()), sigma1.support_radius(), &rho);
        Ok(PotentialField::new(self.grid, values, SourceTag::DirectWave))
    }

    /// Raw transverse energies `(∫∫|∂_tΨ|², ∫∫|∇_yΨ|²)` by Plancherel;
    /// callers weight them by ε or c² as the scaling demands.
    pub fn energy_parts(&self) -> Result<(f64, f64)> {
        let weight =
            sphere_area(self.n)? / (2.0 * std::f64::consts::PI).powi(self.n as i32);
        let nr = self.sigma2_hat.len();
        let h = self.grid.step;
        let mut kinetic = 0.0;
        let mut elastic = 0.0;
        for i in 0..self.grid.len {
            let kin_vals: Vec<f64> = (0..nr)
                .map(|k| {
                    let r = k as f64 * self.r_step;
                    self.pi[[i, k]].powi(2) * r.powi(self.n as i32 - 1)
                })
                .collect();
            let ela_vals: Vec<f64> = (0..nr)
                .map(|k| {
                    let r = k as f64 * self.r_step;
                    (r * self.psi[[i, k]]).powi(2) * r.powi(self.n as i32 - 1)
                })
                .collect();
            let edge = if i == 0 || i == self.grid.len - 1 {
                0.5
            } else {
                1.0
            };
            kinetic += edge * weight * simpson_uniform(&kin_vals, self.r_step) * h;
            elastic += edge * weight * simpson_uniform(&ela_vals, self.r_step) * h;
        }
        Ok((kinetic, elastic))
    }
}

/// Independent oracle: integrates the wave equation through the whole ρ
/// history (piecewise linear in time) and reconstructs Φ at `t`. Must agree
/// with `initial_potential − memory_potential` up to discretization.
pub fn direct_wave_potential(
    rho_history: &[MacroDensity],
    wave: &WaveInitialData,
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    c: f64,
    t: f64,
    resolution: f64,
) -> Result<PotentialField> {
    if rho_history.is_empty() {
        return Err(Error::MissingHistory(format!(
            "direct-wave comparison at t = {t} needs a nonempty density history"
        )));
    }
    let steps = rho_history.len() - 1;
    let mut field = WaveField::new(wave, sigma2, c, 1.0, t.max(1e-9), resolution)?;
    if steps == 0 {
        return field.contract(sigma1);
    }
    let dt = t / steps as f64;
    let sources: Vec<Vec<f64>> = rho_history
        .iter()
        .map(|rho| convolve_on_grid(|d| sigma1.eval(d.abs()), sigma1.support_radius(), rho))
        .collect();
    for m in 0..steps {
        field.advance(&sources[m], &sources[m + 1], dt)?;
    }
    field.contract(sigma1)
}

// ---------------------------------------------------------------------------
// Analytic bounds used for grid sizing and the fixed-point radius
// ---------------------------------------------------------------------------

/// `‖L(f)(t)‖_{W^{1,∞}}-type bound: mass·‖σ₁‖²_{W^{1,2}}·‖σ₂‖²_{L²}·t²/2.
pub fn memory_sup_bound(sigma1: &FormFactor, sigma2: &FormFactor, mass: f64, t: f64) -> f64 {
    let s1 = sigma1.sobolev_norm_sq(1).unwrap_or_else(|_| sigma1.l2_norm_sq());
    mass * s1 * sigma2.l2_norm_sq() * t * t / 2.0
}

/// Bound on `|∂_t L(f)(t)|`: mass·‖σ₁‖²_{W^{1,2}}·‖σ₂‖²_{L²}·t.
pub fn memory_dt_bound(sigma1: &FormFactor, sigma2: &FormFactor, mass: f64, t: f64) -> f64 {
    let s1 = sigma1.sobolev_norm_sq(1).unwrap_or_else(|_| sigma1.l2_norm_sq());
    mass * s1 * sigma2.l2_norm_sq() * t
}

/// c-uniform bound `‖Φ₀(t)‖_{W^{2,∞}} ≤ ‖σ₁‖_{W^{2,2}}‖σ₂‖_{L²}(‖Ψ₀‖+t‖Ψ₁‖)`.
pub fn phi0_sup_bound(
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    wave: &WaveInitialData,
    t: f64,
) -> f64 {
    let s1 = sigma1
        .sobolev_norm_sq(2)
        .unwrap_or_else(|_| sigma1.l2_norm_sq())
        .sqrt();
    s1 * sigma2.l2_norm_sq().sqrt() * (wave.psi0_l2_sq().sqrt() + t * wave.psi1_l2_sq().sqrt())
}

/// Operator norm of L on the C⁰-in-time ball: `‖σ₁‖²_{W^{3,2}}‖σ₂‖²·T²/2`.
pub fn operator_norm_a(sigma1: &FormFactor, sigma2: &FormFactor, t_horizon: f64) -> f64 {
    let s1 = sigma1.sobolev_norm_sq(3).unwrap_or_else(|_| sigma1.l2_norm_sq());
    s1 * sigma2.l2_norm_sq() * t_horizon * t_horizon / 2.0
}

/// Operator norm on the C¹-in-time ball: `‖σ₁‖²_{W^{1,2}}‖σ₂‖²(T + T²/2)`.
pub fn operator_norm_b(sigma1: &FormFactor, sigma2: &FormFactor, t_horizon: f64) -> f64 {
    let s1 = sigma1.sobolev_norm_sq(1).unwrap_or_else(|_| sigma1.l2_norm_sq());
    s1 * sigma2.l2_norm_sq() * (t_horizon + t_horizon * t_horizon / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formfactor::self_convolve;
    use rand::{Rng, SeedableRng};

    fn x_grid() -> Grid1 {
        Grid1::symmetric(4.0, 129).unwrap()
    }

    fn bump_term(grid: &Grid1, center: f64, width: f64, amp: f64, n: u32) -> WaveTerm {
        let spatial = grid
            .points()
            .iter()
            .map(|&x| {
                let u = (x - center) / width;
                if u.abs() < 1.0 {
                    amp * (-1.0 / (1.0 - u * u)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        WaveTerm {
            spatial,
            transverse: FormFactor::bump(n, 1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn phi0_zero_data_is_zero() {
        let grid = x_grid();
        let wave = WaveInitialData::zero(grid, 3);
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        for &t in &[0.0, 0.7, 2.0] {
            let phi = initial_potential(t, &wave, &s1, &s2, 1.0).unwrap();
            assert_eq!(phi.linf(), 0.0);
        }
    }

    #[test]
    fn phi0_at_time_zero_matches_physical_space_oracle() {
        // Ψ₁ = 0, t = 0: Φ₀(0,x) = σ₁ ∗ (a·∫ b σ₂ dy) — check the transverse
        // contraction against direct physical-space quadrature
        let grid = x_grid();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.2, 1.5).unwrap();
        let term = bump_term(&grid, 0.3, 1.0, 2.0, 3);
        let b = term.transverse.clone();
        let spatial = term.spatial.clone();
        let wave = WaveInitialData::new(grid, 3, vec![term], vec![]).unwrap();
        let phi = initial_potential(0.0, &wave, &s1, &s2, 1.0).unwrap();
        // physical-space transverse factor ∫ b σ₂ dy
        let coeff = {
            let m = 8193;
            let radius: f64 = 1.0; // min support
            let h = radius / (m - 1) as f64;
            let vals: Vec<f64> = (0..m)
                .map(|i| {
                    let r = i as f64 * h;
                    r * r * b.eval(r) * s2.eval(r)
                })
                .collect();
            4.0 * std::f64::consts::PI * simpson_uniform(&vals, h)
        };
        let rho = MacroDensity {
            grid,
            values: spatial,
        };
        let conv = convolve_on_grid(|d| s1.eval(d.abs()), s1.support_radius(), &rho);
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..grid.len {
            err = err.max((phi.values[i] - coeff * conv[i]).abs());
            scale = scale.max(phi.values[i].abs());
        }
        assert!(err < 1e-6 * scale.max(1e-12), "err {err} scale {scale}");
    }

    #[test]
    fn phi0_sup_norm_bound_random_datasets() {
        let grid = x_grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let s1 = FormFactor::bump(1, rng.gen_range(0.5..1.5), rng.gen_range(0.5..2.0)).unwrap();
            let s2 = FormFactor::bump(3, rng.gen_range(0.5..1.5), rng.gen_range(0.5..2.0)).unwrap();
            let term0 = bump_term(
                &grid,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.2..2.0),
                3,
            );
            let term1 = bump_term(
                &grid,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.2..2.0),
                3,
            );
            let wave = WaveInitialData::new(grid, 3, vec![term0], vec![term1]).unwrap();
            let t = rng.gen_range(0.0..3.0);
            let c = rng.gen_range(0.5..4.0);
            let phi = initial_potential(t, &wave, &s1, &s2, c).unwrap();
            let bound = s1.l2_norm_sq().sqrt()
                * s2.l2_norm_sq().sqrt()
                * (wave.psi0_l2_sq().sqrt() + t * wave.psi1_l2_sq().sqrt());
            assert!(
                phi.linf() <= bound * 1.0001,
                "trial {trial}: ‖Φ₀‖={} > bound={bound}",
                phi.linf()
            );
        }
    }

    fn random_history(
        grid: Grid1,
        steps: usize,
        dt: f64,
        sigma: &ConvolvedProfile,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> (MemoryHistory, f64) {
        // random nonnegative densities with fixed mass
        let mut hist = MemoryHistory::new(dt, grid).unwrap();
        let mut max_mass = 0.0f64;
        for _ in 0..=steps {
            let c1: f64 = rng.gen_range(-1.5..1.5);
            let w: f64 = rng.gen_range(0.4..1.2);
            let amp: f64 = rng.gen_range(0.1..1.0);
            let rho = MacroDensity {
                grid,
                values: grid
                    .points()
                    .iter()
                    .map(|&x| amp * (-((x - c1) / w).powi(2)).exp())
                    .collect(),
            };
            max_mass = max_mass.max(rho.mass());
            hist.push(convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), &rho))
                .unwrap();
        }
        (hist, max_mass)
    }

    #[test]
    fn memory_zero_density_gives_zero() {
        let grid = x_grid();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let tab = KernelTable::build(&s2, 3, 1.0, 1.0, 0.01).unwrap();
        let mut hist = MemoryHistory::new(0.01, grid).unwrap();
        for _ in 0..=50 {
            hist.push(vec![0.0; grid.len]).unwrap();
        }
        let l = memory_potential(&hist, &tab, 0.5).unwrap();
        assert_eq!(l.linf(), 0.0);
    }

    #[test]
    fn memory_constant_density_matches_partial_integral() {
        let grid = x_grid();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let sigma = self_convolve(&s1).unwrap();
        let c = 2.0;
        let dt = 0.01;
        let tab = KernelTable::build(&s2, 3, c, 1.0, dt).unwrap();
        let rho = MacroDensity {
            grid,
            values: grid
                .points()
                .iter()
                .map(|&x| (-(x * x)).exp())
                .collect(),
        };
        let conv = convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), &rho);
        let mut hist = MemoryHistory::new(dt, grid).unwrap();
        let steps = 80;
        for _ in 0..=steps {
            hist.push(conv.clone()).unwrap();
        }
        let t = steps as f64 * dt;
        let l = memory_potential(&hist, &tab, t).unwrap();
        // separable oracle: L = (∫₀^t p) · (Σ∗ρ); the discrete trapezoid sum
        // equals cumulative[j]/c² exactly
        let integral_p = tab.integral_to(c * t).unwrap() / (c * c);
        let mut err = 0.0f64;
        for i in 0..grid.len {
            err = err.max((l.values[i] - integral_p * conv[i]).abs());
        }
        assert!(err < 1e-8 * l.linf().max(1e-12), "err {err}");
    }

    #[test]
    fn memory_sup_bound_on_random_histories() {
        let grid = x_grid();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let sigma = self_convolve(&s1).unwrap();
        let dt = 0.01;
        let tab = KernelTable::build(&s2, 3, 1.0, 1.5, dt).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let steps = rng.gen_range(20..120usize);
            let (hist, max_mass) = random_history(grid, steps, dt, &sigma, &mut rng);
            let t = steps as f64 * dt;
            let l = memory_potential(&hist, &tab, t).unwrap();
            let bound = memory_sup_bound(&s1, &s2, max_mass, t);
            assert!(
                l.linf() <= bound * 1.001,
                "‖L‖ = {} exceeds bound {bound} at t = {t}",
                l.linf()
            );
        }
    }

    #[test]
    fn memory_missing_history_is_reported() {
        let grid = x_grid();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let tab = KernelTable::build(&s2, 3, 1.0, 1.0, 0.01).unwrap();
        let mut hist = MemoryHistory::new(0.01, grid).unwrap();
        hist.push(vec![0.0; grid.len]).unwrap();
        assert!(matches!(
            memory_potential(&hist, &tab, 0.5),
            Err(Error::MissingHistory(_))
        ));
    }

    #[test]
    fn rescaled_at_eps_one_equals_memory() {
        let grid = x_grid();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let sigma = self_convolve(&s1).unwrap();
        let dt = 0.01;
        let tab = KernelTable::build(&s2, 3, 1.0, 1.0, dt).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (hist, _) = random_history(grid, 60, dt, &sigma, &mut rng);
        let t = 0.6;
        let a = memory_potential(&hist, &tab, t).unwrap();
        let b = rescaled_memory_potential(&hist, &tab, t, 1.0).unwrap();
        for i in 0..grid.len {
            assert!((a.values[i] - b.values[i]).abs() <= 1e-10 * (1.0 + a.values[i].abs()));
        }
        assert_eq!(b.source_tag, SourceTag::Rescaled);
    }

    #[test]
    fn rescaled_constant_density_converges_to_limit() {
        // frozen ρ: (1/ε)L_ε(t) = (∫₀^{t/√ε} q)·Σ∗ρ → κ·Σ∗ρ
        let grid = x_grid();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let sigma = self_convolve(&s1).unwrap();
        let rho = MacroDensity {
            grid,
            values: grid
                .points()
                .iter()
                .map(|&x| (-(x * x) * 2.0).exp())
                .collect(),
        };
        let conv = convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), &rho);
        let dt = 0.01;
        let t = 1.0;
        let kappa = crate::kernel::kappa(&s2, 3).unwrap();
        let tail_k = crate::kernel::tail_constant(&s2, 3).unwrap();
        let conv_peak = conv.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for &eps in &[1.0, 0.25, 0.0625] {
            let speed = 1.0 / (eps as f64).sqrt();
            let tab = KernelTable::build(&s2, 3, speed, t, dt).unwrap();
            let mut hist = MemoryHistory::new(dt, grid).unwrap();
            for _ in 0..=((t / dt).round() as usize) {
                hist.push(conv.clone()).unwrap();
            }
            let field = rescaled_memory_potential(&hist, &tab, t, eps).unwrap();
            let mut gap = 0.0f64;
            for i in 0..grid.len {
                gap = gap.max((field.values[i] - kappa * conv[i]).abs());
            }
            // analytic tail bound |∫_{t/√ε}^∞ q| ≤ K√ε/t plus quadrature slack
            let bound = tail_k * eps.sqrt() / t * conv_peak;
            // q's tail oscillates, so the sampled gaps need not shrink
            // monotonically in ε; the guarantee is the K√ε/t envelope.
            assert!(
                gap <= bound + 1e-6 * conv_peak,
                "eps={eps}: gap {gap} bound {bound}"
            );
        }
    }

    #[test]
    fn limit_potential_sign_and_linearity() {
        let grid = x_grid();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let sigma = self_convolve(&s1).unwrap();
        let zero = MacroDensity::zero(grid);
        let phi_zero = limit_potential(&zero, &sigma, 0.7).unwrap();
        assert_eq!(phi_zero.linf(), 0.0);

        // narrow bump at x = 0.5: strict minimum of Φ̄ at the bump center
        let rho = MacroDensity {
            grid,
            values: grid
                .points()
                .iter()
                .map(|&x| (-(x - 0.5) * (x - 0.5) * 60.0).exp())
                .collect(),
        };
        let phi = limit_potential(&rho, &sigma, 0.7).unwrap();
        let imin = (0..grid.len)
            .min_by(|&a, &b| phi.values[a].partial_cmp(&phi.values[b]).unwrap())
            .unwrap();
        assert!(
            (grid.point(imin) - 0.5).abs() < 2.0 * grid.step,
            "minimum at {} not at bump center",
            grid.point(imin)
        );
        assert!(phi.values[imin] < 0.0, "attractive well must be negative");

        // linearity
        let rho2 = MacroDensity {
            grid,
            values: grid.points().iter().map(|&x| (-(x * x)).exp()).collect(),
        };
        let sum = MacroDensity {
            grid,
            values: rho
                .values
                .iter()
                .zip(&rho2.values)
                .map(|(a, b)| a + b)
                .collect(),
        };
        let pa = limit_potential(&rho, &sigma, 0.7).unwrap();
        let pb = limit_potential(&rho2, &sigma, 0.7).unwrap();
        let pc = limit_potential(&sum, &sigma, 0.7).unwrap();
        for i in 0..grid.len {
            assert!(
                (pc.values[i] - pa.values[i] - pb.values[i]).abs()
                    <= 1e-12 * (1.0 + pc.values[i].abs())
            );
        }
        assert!(limit_potential(&rho, &sigma, 0.0).is_err());
    }

    #[test]
    fn direct_wave_homogeneous_matches_phi0() {
        // no source: the spectral march performs exact per-mode rotations, so
        // the only gap to the closed-form Φ₀ is radial-quadrature error
        let grid = Grid1::symmetric(4.0, 65).unwrap();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let term0 = bump_term(&grid, 0.2, 1.0, 1.0, 3);
        let term1 = bump_term(&grid, -0.4, 0.8, 0.7, 3);
        let wave = WaveInitialData::new(grid, 3, vec![term0], vec![term1]).unwrap();
        let c = 1.5;
        let t = 1.0;
        let zero_hist: Vec<MacroDensity> = (0..=40).map(|_| MacroDensity::zero(grid)).collect();
        let direct = direct_wave_potential(&zero_hist, &wave, &s1, &s2, c, t, 24.0).unwrap();
        let phi0 = initial_potential(t, &wave, &s1, &s2, c).unwrap();
        let scale = phi0.linf().max(1e-12);
        for i in 0..grid.len {
            assert!(
                (direct.values[i] - phi0.values[i]).abs() <= 1e-8 * scale.max(1.0),
                "node {i}: {} vs {}",
                direct.values[i],
                phi0.values[i]
            );
        }
    }

    #[test]
    fn direct_wave_all_zero_is_zero() {
        let grid = Grid1::symmetric(2.0, 33).unwrap();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let wave = WaveInitialData::zero(grid, 3);
        let hist: Vec<MacroDensity> = (0..=10).map(|_| MacroDensity::zero(grid)).collect();
        let phi = direct_wave_potential(&hist, &wave, &s1, &s2, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(phi.linf(), 0.0);
    }

    #[test]
    fn direct_wave_forced_matches_memory_term() {
        // Ψ₀ = Ψ₁ = 0 with a time-varying ρ: the spectral solve must equal −L(f)
        let grid = Grid1::symmetric(4.0, 65).unwrap();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let sigma = self_convolve(&s1).unwrap();
        let wave = WaveInitialData::zero(grid, 3);
        let c = 1.0;
        let t = 1.0;
        let steps = 200usize;
        let dt = t / steps as f64;
        let rho_at = |s: f64| -> MacroDensity {
            MacroDensity {
                grid,
                values: grid
                    .points()
                    .iter()
                    .map(|&x| (1.0 + 0.5 * (3.0 * s).sin()) * (-(x * x) * 2.0).exp())
                    .collect(),
            }
        };
        let history: Vec<MacroDensity> = (0..=steps).map(|m| rho_at(m as f64 * dt)).collect();
        let direct = direct_wave_potential(&history, &wave, &s1, &s2, c, t, 8.0).unwrap();
        let tab = KernelTable::build(&s2, 3, c, t, dt).unwrap();
        let mut hist = MemoryHistory::new(dt, grid).unwrap();
        for rho in &history {
            hist.push(convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), rho))
                .unwrap();
        }
        let ell = memory_potential(&hist, &tab, t).unwrap();
        let scale = ell.linf().max(1e-12);
        let mut worst = 0.0f64;
        for i in 0..grid.len {
            worst = worst.max((direct.values[i] + ell.values[i]).abs());
        }
        assert!(worst <= 2e-3 * scale, "gap {worst} vs scale {scale}");
    }

    #[test]
    fn timeline_interpolates_linearly_and_clamps() {
        let grid = Grid1::new(0.0, 1.0, 3).unwrap();
        let f0 = PotentialField::new(grid, vec![0.0, 0.0, 0.0], SourceTag::External);
        let f1 = PotentialField::new(grid, vec![1.0, 1.0, 1.0], SourceTag::External);
        let tl = PotentialTimeline {
            t0: 0.0,
            dt: 1.0,
            fields: vec![f0, f1],
        };
        assert!((tl.value_at(0.5, 0.5) - 0.5).abs() < 1e-15);
        assert!((tl.value_at(-3.0, 0.5) - 0.0).abs() < 1e-15);
        assert!((tl.value_at(9.0, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wave_energy_conserved_without_source() {
        let grid = Grid1::symmetric(2.0, 17).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let term0 = bump_term(&grid, 0.0, 1.0, 1.0, 3);
        let wave = WaveInitialData::new(grid, 3, vec![term0], vec![]).unwrap();
        let c = 2.0;
        let mut field = WaveField::new(&wave, &s2, c, 1.0, 1.0, 8.0).unwrap();
        let zeros = vec![0.0; grid.len];
        let (k0, e0) = field.energy_parts().unwrap();
        let total0 = 0.5 * k0 + 0.5 * c * c * e0;
        for _ in 0..50 {
            field.advance(&zeros, &zeros, 0.02).unwrap();
        }
        let (k1, e1) = field.energy_parts().unwrap();
        let total1 = 0.5 * k1 + 0.5 * c * c * e1;
        assert!(
            (total1 - total0).abs() < 1e-10 * total0,
            "wave energy drift: {total0} → {total1}"
        );
    }
}
