//! Characteristic transport and the self-consistent solver.
//!
//! The kinetic equation is solved along characteristics:
//! `ẋ = v`, `v̇ = −∂_x(V + Φ)(t, x)`, with `f(t) = f₀ ∘ φ_{t→0}`. The
//! marching solver advances one step at a time with the coupling potential
//! frozen at the step's left endpoint (explicit lag), recomputing Φ from the
//! accumulated source history; the Picard solver instead iterates the map
//! `Φ ↦ potential induced by the transport under Φ` to expose the
//! fixed-point structure directly. A weighted N-particle system provides the
//! mean-field approximation of the same dynamics.

use crate::diagnostics::{DiagnosticsRow, SlicedW1Plan};
use crate::formfactor::{self_convolve, FormFactor};
use crate::grid::{MacroDensity, PhaseSpaceState};
use crate::kernel::KernelTable;
use crate::potential::{
    convolve_on_grid, limit_potential, memory_potential, operator_norm_b,
    rescaled_memory_potential, MemoryHistory, Phi0Evaluator, PotentialField, PotentialTimeline,
    SourceTag, WaveField, WaveInitialData,
};
use crate::{Error, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

/// Confining/background potential V(x).
#[derive(Clone, Debug)]
pub enum ExternalPotential {
    Zero,
    /// V = ω²x²/2
    Harmonic { omega: f64 },
    /// V = −F·x (constant force F)
    LinearDrift { force: f64 },
    /// tabulated V with interpolated gradient
    Table { field: PotentialField },
}

impl ExternalPotential {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            ExternalPotential::Zero => 0.0,
            ExternalPotential::Harmonic { omega } => 0.5 * omega * omega * x * x,
            ExternalPotential::LinearDrift { force } => -force * x,
            ExternalPotential::Table { field } => field.value_at(x),
        }
    }

    pub fn grad(&self, x: f64) -> f64 {
        match self {
            ExternalPotential::Zero => 0.0,
            ExternalPotential::Harmonic { omega } => omega * omega * x,
            ExternalPotential::LinearDrift { force } => -force,
            ExternalPotential::Table { field } => field.grad_at(x),
        }
    }

    /// Upper bound on |V″| over the ball of the given radius.
    pub fn hessian_bound(&self, radius: f64) -> f64 {
        match self {
            ExternalPotential::Zero | ExternalPotential::LinearDrift { .. } => 0.0,
            ExternalPotential::Harmonic { omega } => omega * omega,
            ExternalPotential::Table { field } => {
                let h = field.grid.step;
                let mut bound = 0.0f64;
                for i in 1..field.grid.len - 1 {
                    if field.grid.point(i).abs() <= radius {
                        let second =
                            (field.values[i + 1] - 2.0 * field.values[i] + field.values[i - 1])
                                / (h * h);
                        bound = bound.max(second.abs());
                    }
                }
                bound
            }
        }
    }

    /// Smallest C ≥ 0 with `V(x) ≥ −C(1+x²)` (semi-boundedness coefficient);
    /// `None` when no finite C works on the sampled range.
    pub fn quadratic_lower_coeff(&self) -> Option<f64> {
        match self {
            ExternalPotential::Zero | ExternalPotential::Harmonic { .. } => Some(0.0),
            ExternalPotential::LinearDrift { force } => Some(force.abs()),
            ExternalPotential::Table { field } => {
                let mut c = 0.0f64;
                for i in 0..field.grid.len {
                    let x = field.grid.point(i);
                    let v = field.values[i];
                    if !v.is_finite() {
                        return None;
                    }
                    if v < 0.0 {
                        c = c.max(-v / (1.0 + x * x));
                    }
                }
                Some(c)
            }
        }
    }

    /// Whether V ≥ 0 on the ball of the given radius.
    pub fn nonnegative_on(&self, radius: f64) -> bool {
        match self {
            ExternalPotential::Zero | ExternalPotential::Harmonic { .. } => true,
            ExternalPotential::LinearDrift { force } => *force == 0.0,
            ExternalPotential::Table { field } => (0..field.grid.len).all(|i| {
                field.grid.point(i).abs() > radius || field.values[i] >= -1e-14
            }),
        }
    }
}

/// A point of the characteristic flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPoint {
    pub x: f64,
    pub v: f64,
}

#[inline]
fn rk4_step<F: Fn(f64, f64) -> f64>(x: f64, v: f64, t: f64, h: f64, force: &F) -> (f64, f64) {
    let k1x = v;
    let k1v = force(t, x);
    let k2x = v + 0.5 * h * k1v;
    let k2v = force(t + 0.5 * h, x + 0.5 * h * k1x);
    let k3x = v + 0.5 * h * k2v;
    let k3v = force(t + 0.5 * h, x + 0.5 * h * k2x);
    let k4x = v + h * k3v;
    let k4v = force(t + h, x + h * k3x);
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Integrates one characteristic from `t0` to `t1` (either direction) under
/// the external force plus the time-interpolated potential gradient. With
/// `bound` set, exceeding `|x| ∨ |v| > bound` aborts with the offending
/// radius in the error.
pub fn trace_flow(
    start: FlowPoint,
    t0: f64,
    t1: f64,
    timeline: Option<&PotentialTimeline>,
    external: &ExternalPotential,
    dt: f64,
    bound: Option<f64>,
) -> Result<FlowPoint> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "characteristic step must be positive, got {dt}"
        )));
    }
    let force = |t: f64, x: f64| -> f64 {
        let mut f = -external.grad(x);
        if let Some(tl) = timeline {
            f -= tl.grad_at(t, x);
        }
        f
    };
    let span = t1 - t0;
    let steps = ((span.abs() / dt).ceil() as usize).max(1);
    let h = span / steps as f64;
    let (mut x, mut v) = (start.x, start.v);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let (nx, nv) = rk4_step(x, v, t, h, &force);
        x = nx;
        v = nv;
        if let Some(b) = bound {
            if x.abs() > b || v.abs() > b {
                return Err(Error::OutOfDomain(format!(
                    "characteristic left the a-priori ball of radius {b} at t = {:.6} (|x|={:.3}, |v|={:.3})",
                    t + h,
                    x.abs(),
                    v.abs()
                )));
            }
        }
    }
    Ok(FlowPoint { x, v })
}

/// Grönwall envelope for the phase-space radius: with `|z|' ≤ λ|z| + g`,
/// `λ = 1 + hessian_bound + coupling_grad_bound`,
/// `R(t) = (R₀ + g/λ)e^{λt} − g/λ`. Monotone in every argument.
pub fn apriori_radius(r0: f64, force_bound: f64, hessian_bound: f64, t: f64) -> f64 {
    let lam = 1.0 + hessian_bound.max(0.0);
    let g = force_bound.max(0.0);
    (r0 + g / lam) * (lam * t).exp() - g / lam
}

/// Support radius of a state: largest |x| ∨ |v| over cells holding more than
/// `threshold`·‖f‖_∞.
pub fn support_radius(f: &PhaseSpaceState, threshold: f64) -> f64 {
    let cut = threshold * f.linf();
    let mut r = 0.0f64;
    for i in 0..f.grid.x.len {
        for j in 0..f.grid.v.len {
            if f.values[[i, j]].abs() > cut {
                r = r.max(f.grid.x.point(i).abs().max(f.grid.v.point(j).abs()));
            }
        }
    }
    r
}

/// Pushes `f₀` forward to time `t` through the backward flow:
/// `f(t, z) = f₀(φ_{t→0}(z))` with bicubic interpolation at the feet.
/// Returns the state and the fraction of grid nodes whose feet left the box
/// (their value is the zero extension).
pub fn liouville_pushforward(
    f0: &PhaseSpaceState,
    timeline: &PotentialTimeline,
    external: &ExternalPotential,
    t: f64,
    dt: f64,
) -> Result<(PhaseSpaceState, f64)> {
    if t == 0.0 {
        return Ok((f0.clone(), 0.0));
    }
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "pushforward time must be ≥ 0, got {t}"
        )));
    }
    let grid = f0.grid;
    let nx = grid.x.len;
    let nv = grid.v.len;
    let xmax = grid.x.max();
    let vmax = grid.v.max();
    let rows: Vec<(Vec<f64>, usize)> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let x = grid.x.point(i);
            let mut row = vec![0.0; nv];
            let mut outside = 0usize;
            for (j, slot) in row.iter_mut().enumerate() {
                let v = grid.v.point(j);
                let foot = trace_flow(
                    FlowPoint { x, v },
                    t,
                    0.0,
                    Some(timeline),
                    external,
                    dt,
                    None,
                )
                .expect("unbounded trace cannot fail");
                if foot.x.abs() > xmax || foot.v.abs() > vmax {
                    outside += 1;
                } else {
                    *slot = f0.interp(foot.x, foot.v);
                }
            }
            (row, outside)
        })
        .collect();
    let mut values = Array2::zeros((nx, nv));
    let mut outside_total = 0usize;
    for (i, (row, outside)) in rows.into_iter().enumerate() {
        outside_total += outside;
        for (j, &val) in row.iter().enumerate() {
            values[[i, j]] = val;
        }
    }
    Ok((
        PhaseSpaceState {
            grid,
            values,
            time: f0.time + t,
        },
        outside_total as f64 / (nx * nv) as f64,
    ))
}

/// One semi-Lagrangian step with the coupling field frozen in time.
fn semi_lagrangian_step(
    f: &PhaseSpaceState,
    phi: &PotentialField,
    external: &ExternalPotential,
    dt: f64,
) -> PhaseSpaceState {
    let grid = f.grid;
    let nv = grid.v.len;
    let force = |_t: f64, x: f64| -external.grad(x) - phi.grad_at(x);
    let rows: Vec<Vec<f64>> = (0..grid.x.len)
        .into_par_iter()
        .map(|i| {
            let x = grid.x.point(i);
            let mut row = vec![0.0; nv];
            for (j, slot) in row.iter_mut().enumerate() {
                let v = grid.v.point(j);
                let (fx, fv) = rk4_step(x, v, 0.0, -dt, &force);
                *slot = f.interp(fx, fv);
            }
            row
        })
        .collect();
    let mut values = Array2::zeros((grid.x.len, nv));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, &val) in row.iter().enumerate() {
            values[[i, j]] = val;
        }
    }
    PhaseSpaceState {
        grid,
        values,
        time: f.time + dt,
    }
}

/// How the transport couples back to the wave bath.
#[derive(Clone, Debug)]
pub enum CouplingMode {
    /// no self-coupling: pure external transport
    None,
    /// memory reformulation Φ = Φ₀ − L(f) at wave speed c
    Memory,
    /// rescaled memory form at speed 1/√ε with the 1/ε source weight
    Rescaled { eps: f64 },
    /// attractive limit Φ = −κ Σ∗ρ
    Limit { kappa: f64 },
    /// co-integrated spectral wave field (independent of the memory form);
    /// `resolution` multiplies the default radial node budget
    DirectWave { resolution: f64 },
}

/// Inputs of the marching solver.
pub struct SimulationSetup<'a> {
    pub f0: &'a PhaseSpaceState,
    pub sigma1: &'a FormFactor,
    pub sigma2: &'a FormFactor,
    pub wave: &'a WaveInitialData,
    pub external: &'a ExternalPotential,
    pub coupling: CouplingMode,
    /// wave speed c (Memory and DirectWave modes)
    pub wave_speed: f64,
    pub dt: f64,
    pub t_final: f64,
    /// keep every k-th state (0 = endpoints only); the final state is always kept
    pub snapshot_stride: usize,
    /// relative mass drift per unit time that aborts the run
    pub mass_drift_abort: f64,
}

pub struct SimulationOutput {
    pub times: Vec<f64>,
    pub rows: Vec<DiagnosticsRow>,
    pub snapshots: Vec<PhaseSpaceState>,
    pub snapshot_times: Vec<f64>,
    /// coupling potential at every step (source-tagged by mode)
    pub timeline: PotentialTimeline,
    /// Σ∗ρ at every step
    pub history: MemoryHistory,
    pub warnings: Vec<String>,
    pub wave_energy_available: bool,
    /// largest magnitude of undershoot mass `∫ f⁻` seen at any step
    pub negative_mass_peak: f64,
    pub final_state: PhaseSpaceState,
}

fn check_setup(setup: &SimulationSetup) -> Result<usize> {
    if !(setup.dt > 0.0) || !(setup.t_final > 0.0) {
        return Err(Error::InvalidParameter(
            "simulation needs dt > 0 and t_final > 0".into(),
        ));
    }
    if !(setup.wave_speed > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wave speed must be positive, got {}",
            setup.wave_speed
        )));
    }
    if setup.sigma1.dim() != 1 {
        return Err(Error::UnsupportedDimension(
            "the transport solver is one-dimensional in x".into(),
        ));
    }
    let steps = (setup.t_final / setup.dt).round() as usize;
    if steps == 0 || (setup.t_final - steps as f64 * setup.dt).abs() > 1e-9 * setup.t_final {
        return Err(Error::InvalidParameter(format!(
            "t_final = {} must be an integer number of steps dt = {}",
            setup.t_final, setup.dt
        )));
    }
    Ok(steps)
}

/// Marching solver with explicit coupling lag: the potential used over
/// `[t_k, t_{k+1}]` is assembled from the history up to `t_k`.
pub fn self_consistent_simulate(setup: &SimulationSetup) -> Result<SimulationOutput> {
    let steps = check_setup(setup)?;
    let grid = setup.f0.grid;
    let x_grid = grid.x;
    let sigma = self_convolve(setup.sigma1)?;
    let mut history = MemoryHistory::new(setup.dt, x_grid)?;
    let mut timeline = PotentialTimeline {
        t0: 0.0,
        dt: setup.dt,
        fields: Vec::with_capacity(steps + 1),
    };

    // mode-specific machinery
    let mut phi0_eval: Option<Phi0Evaluator> = None;
    let mut kernel: Option<KernelTable> = None;
    let mut wave_field: Option<WaveField> = None;
    let mut prev_conv1: Vec<f64> = Vec::new();
    match &setup.coupling {
        CouplingMode::None | CouplingMode::Limit { .. } => {}
        CouplingMode::Memory => {
            phi0_eval = Some(Phi0Evaluator::new(
                setup.wave,
                setup.sigma1,
                setup.sigma2,
                setup.wave_speed,
            )?);
            kernel = Some(KernelTable::build(
                setup.sigma2,
                setup.sigma2.dim(),
                setup.wave_speed,
                setup.t_final,
                setup.dt,
            )?);
        }
        CouplingMode::Rescaled { eps } => {
            if !(*eps > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "rescaling parameter must be positive, got {eps}"
                )));
            }
            let speed = 1.0 / eps.sqrt();
            phi0_eval = Some(Phi0Evaluator::new(
                setup.wave,
                setup.sigma1,
                setup.sigma2,
                speed,
            )?);
            kernel = Some(KernelTable::build(
                setup.sigma2,
                setup.sigma2.dim(),
                speed,
                setup.t_final,
                setup.dt,
            )?);
        }
        CouplingMode::DirectWave { resolution } => {
            wave_field = Some(WaveField::new(
                setup.wave,
                setup.sigma2,
                setup.wave_speed,
                1.0,
                setup.t_final,
                *resolution,
            )?);
        }
    }

    let mut f = setup.f0.clone();
    f.time = 0.0;
    let mass0 = f.mass();
    if !(mass0 > 0.0) {
        return Err(Error::InvalidParameter(
            "initial state must carry positive mass".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut cfl_worst = 0.0f64;
    let mut negative_mass_peak = 0.0f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut rows = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let mut snapshot_times = Vec::new();
    let area = grid.cell_area();

    for k in 0..=steps {
        let t_k = k as f64 * setup.dt;
        let rho = f.rho();
        let conv = convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), &rho);
        history.push(conv)?;

        let phi_k = match &setup.coupling {
            CouplingMode::None => PotentialField::zero(x_grid, SourceTag::External),
            CouplingMode::Memory => {
                let phi0 = phi0_eval.as_ref().unwrap().eval(t_k);
                let ell = memory_potential(&history, kernel.as_ref().unwrap(), t_k)?;
                PotentialField::combined(&phi0, &ell)?
            }
            CouplingMode::Rescaled { eps } => {
                let phi0 = phi0_eval.as_ref().unwrap().eval(t_k);
                let ell =
                    rescaled_memory_potential(&history, kernel.as_ref().unwrap(), t_k, *eps)?;
                PotentialField::combined(&phi0, &ell)?
            }
            CouplingMode::Limit { kappa } => limit_potential(&rho, &sigma, *kappa)?,
            CouplingMode::DirectWave { .. } => {
                wave_field.as_ref().unwrap().contract(setup.sigma1)?
            }
        };

        // diagnostics at t_k
        let wave_parts = match &wave_field {
            Some(w) => Some(w.energy_parts()?),
            None => None,
        };
        let c = setup.wave_speed;
        let (interaction_weight, wave_weights) = match &setup.coupling {
            CouplingMode::Limit { .. } => (0.5, (0.0, 0.0)),
            _ => (1.0, (0.5, 0.5 * c * c)),
        };
        let row = DiagnosticsRow::new(
            t_k,
            &f,
            |x| setup.external.value(x),
            &phi_k,
            interaction_weight,
            wave_parts,
            wave_weights,
        );
        if !row.mass.is_finite() || !row.linf.is_finite() {
            return Err(Error::SolverAbort(format!(
                "state became non-finite at t = {t_k}"
            )));
        }
        let drift = (row.mass - mass0).abs() / mass0;
        if drift > setup.mass_drift_abort * t_k.max(setup.dt) {
            return Err(Error::SolverAbort(format!(
                "mass drift {drift:.3e} at t = {t_k} exceeds the abort threshold"
            )));
        }
        let mut negative = 0.0;
        for &v in f.values.iter() {
            if v < 0.0 {
                negative -= v;
            }
        }
        negative_mass_peak = negative_mass_peak.max(negative * area);
        times.push(t_k);
        rows.push(row);
        let keep = k == 0
            || k == steps
            || (setup.snapshot_stride > 0 && k % setup.snapshot_stride == 0);
        if keep {
            snapshots.push(f.clone());
            snapshot_times.push(t_k);
        }

        if k == steps {
            timeline.fields.push(phi_k);
            break;
        }

        // CFL bookkeeping on the cell-crossing counts
        let vmax = grid.v.max();
        let fmax = (0..x_grid.len)
            .map(|i| {
                let x = x_grid.point(i);
                (setup.external.grad(x) + phi_k.grad_at(x)).abs()
            })
            .fold(0.0f64, f64::max);
        cfl_worst = cfl_worst
            .max(vmax * setup.dt / grid.x.step)
            .max(fmax * setup.dt / grid.v.step);

        let next = semi_lagrangian_step(&f, &phi_k, setup.external, setup.dt);
        // wave co-integration consumes σ₁∗ρ at both step endpoints
        if let Some(w) = wave_field.as_mut() {
            let conv1_k = if prev_conv1.is_empty() {
                convolve_on_grid(
                    |d| setup.sigma1.eval(d.abs()),
                    setup.sigma1.support_radius(),
                    &rho,
                )
            } else {
                std::mem::take(&mut prev_conv1)
            };
            let rho_next = next.rho();
            let conv1_next = convolve_on_grid(
                |d| setup.sigma1.eval(d.abs()),
                setup.sigma1.support_radius(),
                &rho_next,
            );
            w.advance(&conv1_k, &conv1_next, setup.dt)?;
            prev_conv1 = conv1_next;
        }
        timeline.fields.push(phi_k);
        f = next;
    }

    if cfl_worst > 2.0 {
        warnings.push(format!(
            "characteristics cross up to {cfl_worst:.2} cells per step; interpolation accuracy degrades beyond 2"
        ));
    }
    Ok(SimulationOutput {
        times,
        rows,
        snapshots,
        snapshot_times,
        timeline,
        history,
        warnings,
        wave_energy_available: wave_field.is_some(),
        negative_mass_peak,
        final_state: f,
    })
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

pub struct PicardReport {
    /// sup-over-time sliced-W₁ gaps between consecutive iterates (from ℓ = 1)
    pub gaps: Vec<f64>,
    /// consecutive gap ratios
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    /// conservative contraction-constant estimate; None when it overflows
    pub contraction_estimate: Option<f64>,
    /// set when no finite contraction certificate exists — the iteration is
    /// still run, but only existence (not uniqueness speed) is suggested
    pub existence_only: bool,
    pub final_timeline: PotentialTimeline,
    pub final_state: PhaseSpaceState,
}

/// Conservative contraction-constant estimate for the potential→potential
/// Picard map on `[0, T]`: operator norm of the memory term times Lipschitz
/// constants of the transport stage (Grönwall-amplified). Overflow → `None`.
pub fn contraction_estimate(
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    f0: &PhaseSpaceState,
    external: &ExternalPotential,
    t: f64,
) -> Option<f64> {
    let b = operator_norm_b(sigma1, sigma2, t);
    let radius = f0.grid.x.max().max(f0.grid.v.max());
    let lam = 1.0 + external.hessian_bound(radius) + b;
    let amplification = ((1.0 + lam) * t).exp();
    let k = b * f0.mass() * (1.0 + t) * (1.0 + f0.linf() * radius * radius) * amplification;
    k.is_finite().then_some(k)
}

/// Transports `f₀` through the whole horizon under a FIXED timeline, using
/// the same per-step frozen-field discretization as the marching solver.
/// Returns the per-step densities and the states at the probe indices.
fn transport_under_timeline(
    f0: &PhaseSpaceState,
    timeline: &PotentialTimeline,
    external: &ExternalPotential,
    steps: usize,
    dt: f64,
    probes: &[usize],
) -> (Vec<MacroDensity>, Vec<PhaseSpaceState>, PhaseSpaceState) {
    let mut f = f0.clone();
    f.time = 0.0;
    let mut densities = Vec::with_capacity(steps + 1);
    let mut probed = Vec::with_capacity(probes.len());
    for k in 0..=steps {
        densities.push(f.rho());
        if probes.contains(&k) {
            probed.push(f.clone());
        }
        if k < steps {
            let phi_k = &timeline.fields[k];
            let next = semi_lagrangian_step(&f, phi_k, external, dt);
            f = next;
        }
    }
    (densities, probed, f)
}

/// Iterates `Φ^{(ℓ+1)} = Φ₀ − L(f^{(ℓ)})` with `f^{(ℓ)} = transport(Φ^{(ℓ)})`,
/// starting from `Φ^{(0)} = Φ₀`. Gaps are sup-over-probe-times sliced-W₁
/// distances between consecutive iterates.
pub fn picard_solve(
    setup: &SimulationSetup,
    tol: f64,
    max_iter: usize,
    probe_count: usize,
) -> Result<PicardReport> {
    let steps = check_setup(setup)?;
    if !matches!(setup.coupling, CouplingMode::Memory) {
        return Err(Error::InvalidParameter(
            "the fixed-point solver iterates the memory formulation".into(),
        ));
    }
    if !(tol > 0.0) || max_iter < 2 {
        return Err(Error::InvalidParameter(
            "fixed-point solve needs tol > 0 and at least two iterations".into(),
        ));
    }
    let grid = setup.f0.grid;
    let x_grid = grid.x;
    let sigma = self_convolve(setup.sigma1)?;
    let phi0_eval = Phi0Evaluator::new(
        setup.wave,
        setup.sigma1,
        setup.sigma2,
        setup.wave_speed,
    )?;
    let kernel = KernelTable::build(
        setup.sigma2,
        setup.sigma2.dim(),
        setup.wave_speed,
        setup.t_final,
        setup.dt,
    )?;
    let plan = SlicedW1Plan::new(&grid);
    let probe_count = probe_count.clamp(2, steps + 1);
    let probes: Vec<usize> = (0..probe_count)
        .map(|i| (i * steps) / (probe_count - 1))
        .collect();

    // Φ⁰ = Φ₀ at every node
    let phi0_fields: Vec<PotentialField> = (0..=steps)
        .map(|k| phi0_eval.eval(k as f64 * setup.dt))
        .collect();
    let mut timeline = PotentialTimeline {
        t0: 0.0,
        dt: setup.dt,
        fields: phi0_fields.clone(),
    };

    let mut gaps: Vec<f64> = Vec::new();
    let mut prev_probed: Option<Vec<PhaseSpaceState>> = None;
    let mut converged = false;
    let mut diverged = false;
    let mut final_state = setup.f0.clone();
    let mut iterations = 0usize;

    for _ell in 0..max_iter {
        iterations += 1;
        let (densities, probed, last) = transport_under_timeline(
            setup.f0,
            &timeline,
            setup.external,
            steps,
            setup.dt,
            &probes,
        );
        final_state = last;

        if let Some(prev) = &prev_probed {
            let mut gap = 0.0f64;
            for (a, b) in probed.iter().zip(prev) {
                gap = gap.max(plan.distance(a, b)?);
            }
            gaps.push(gap);
            if gap <= tol {
                converged = true;
            }
            let n = gaps.len();
            if !converged && n >= 3 && gaps[n - 1] >= gaps[n - 2] && gaps[n - 2] >= gaps[n - 3]
            {
                diverged = true;
            }
        }
        prev_probed = Some(probed);
        if converged || diverged {
            break;
        }

        // next timeline from this iterate's densities
        let mut hist = MemoryHistory::new(setup.dt, x_grid)?;
        let mut fields = Vec::with_capacity(steps + 1);
        for (k, rho) in densities.iter().enumerate() {
            hist.push(convolve_on_grid(
                |d| sigma.eval(d),
                sigma.support_radius(),
                rho,
            ))?;
            let ell_field = memory_potential(&hist, &kernel, k as f64 * setup.dt)?;
            fields.push(PotentialField::combined(&phi0_fields[k], &ell_field)?);
        }
        timeline = PotentialTimeline {
            t0: 0.0,
            dt: setup.dt,
            fields,
        };
    }

    let ratios = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let estimate = contraction_estimate(
        setup.sigma1,
        setup.sigma2,
        setup.f0,
        setup.external,
        setup.t_final,
    );
    Ok(PicardReport {
        gaps,
        ratios,
        converged,
        diverged,
        iterations,
        existence_only: estimate.is_none(),
        contraction_estimate: estimate,
        final_timeline: timeline,
        final_state,
    })
}

// ---------------------------------------------------------------------------
// N-particle mean-field system
// ---------------------------------------------------------------------------

pub struct NParticleOutput {
    pub xs: Vec<f64>,
    pub vs: Vec<f64>,
    /// mass carried by each particle (total matches the kinetic state)
    pub weight: f64,
    pub times: Vec<f64>,
    pub history: MemoryHistory,
}

/// Samples `n` particles from `f₀` by rejection and advances them under the
/// mean-field force of the selected coupling (memory, limit, or none), with
/// the same explicit lag as the grid solver.
pub fn nparticle_simulate(
    setup: &SimulationSetup,
    n: usize,
    seed: u64,
) -> Result<NParticleOutput> {
    let steps = check_setup(setup)?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "particle count must be positive".into(),
        ));
    }
    let grid = setup.f0.grid;
    let x_grid = grid.x;
    let sigma = self_convolve(setup.sigma1)?;
    let (phi0_eval, kernel) = match &setup.coupling {
        CouplingMode::Memory => (
            Some(Phi0Evaluator::new(
                setup.wave,
                setup.sigma1,
                setup.sigma2,
                setup.wave_speed,
            )?),
            Some(KernelTable::build(
                setup.sigma2,
                setup.sigma2.dim(),
                setup.wave_speed,
                setup.t_final,
                setup.dt,
            )?),
        ),
        CouplingMode::Limit { .. } | CouplingMode::None => (None, None),
        _ => {
            return Err(Error::InvalidParameter(
                "the particle system supports memory, limit, or uncoupled modes".into(),
            ))
        }
    };

    // rejection sampling against the bicubic interpolant
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let fmax = setup.f0.linf() * 1.0001;
    if !(fmax > 0.0) {
        return Err(Error::InvalidParameter(
            "cannot sample from an identically zero state".into(),
        ));
    }
    let (xmax, vmax) = (grid.x.max(), grid.v.max());
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while xs.len() < n {
        attempts += 1;
        if attempts > 10_000 * n {
            return Err(Error::SolverAbort(
                "rejection sampling failed to reach the requested particle count".into(),
            ));
        }
        let x = rng.gen_range(-xmax..xmax);
        let v = rng.gen_range(-vmax..vmax);
        let u: f64 = rng.gen_range(0.0..fmax);
        if u < setup.f0.interp(x, v) {
            xs.push(x);
            vs.push(v);
        }
    }
    let weight = setup.f0.mass() / n as f64;

    let mut history = MemoryHistory::new(setup.dt, x_grid)?;
    let mut times = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t_k = k as f64 * setup.dt;
        times.push(t_k);
        // empirical Σ∗ρ_N on the x-grid
        let conv: Vec<f64> = (0..x_grid.len)
            .into_par_iter()
            .map(|i| {
                let xi = x_grid.point(i);
                let mut acc = 0.0;
                for &xj in &xs {
                    acc += sigma.eval(xi - xj);
                }
                acc * weight
            })
            .collect();
        history.push(conv.clone())?;
        if k == steps {
            break;
        }
        let phi_k = match &setup.coupling {
            CouplingMode::None => PotentialField::zero(x_grid, SourceTag::External),
            CouplingMode::Memory => {
                let phi0 = phi0_eval.as_ref().unwrap().eval(t_k);
                let ell = memory_potential(&history, kernel.as_ref().unwrap(), t_k)?;
                PotentialField::combined(&phi0, &ell)?
            }
            CouplingMode::Limit { kappa } => {
                let values = conv.iter().map(|v| -kappa * v).collect();
                PotentialField::new(x_grid, values, SourceTag::Limit)
            }
            _ => unreachable!(),
        };
        let external = setup.external;
        let force = |_t: f64, x: f64| -external.grad(x) - phi_k.grad_at(x);
        let moved: Vec<(f64, f64)> = xs
            .par_iter()
            .zip(vs.par_iter())
            .map(|(&x, &v)| rk4_step(x, v, 0.0, setup.dt, &force))
            .collect();
        for (i, (x, v)) in moved.into_iter().enumerate() {
            xs[i] = x;
            vs[i] = v;
        }
    }
    Ok(NParticleOutput {
        xs,
        vs,
        weight,
        times,
        history,
    })
}
