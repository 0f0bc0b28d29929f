//! Large-wave-speed asymptotics.
//!
//! At scale `ε` the wave bath runs at speed `1/√ε` and couples with weight
//! `1/ε`; as `ε → 0` the memory term collapses onto the instantaneous
//! attractive potential `−κ Σ∗ρ` and the transport converges to the limit
//! Vlasov dynamics. This module runs that comparison as an ε-sweep, checks
//! the frozen-density tail bound `|(1/ε)L_ε − κΣ∗ρ| ≤ K√ε/t · |Σ∗ρ|`
//! pointwise, verifies the velocity-marginal interpolation inequality
//! `‖ρ‖_{L^{(d+m)/d}} ≤ C(m,d) ‖f‖_∞^{m/(d+m)} (∫|v|^m f)^{d/(d+m)}`, and
//! quantifies the mollified-Coulomb kernel convergence rates.

use crate::diagnostics::{
    external_energy, interaction_energy, kinetic_energy, DiagnosticsRow, SlicedW1Plan,
};
use crate::formfactor::{
    coulomb_normalization, cutoff_inner_factor_norm, kernel_gap_norm, newtonian_control_gap,
    self_convolve, FormFactor,
};
use crate::grid::{MacroDensity, PhaseSpaceState};
use crate::kernel::{kappa, tail_constant, KernelTable};
use crate::potential::{
    convolve_on_grid, rescaled_memory_potential, MemoryHistory, Phi0Evaluator,
    PotentialField, WaveInitialData,
};
use crate::special::sphere_area;
use crate::transport::{
    self_consistent_simulate, CouplingMode, ExternalPotential, SimulationSetup,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

/// Linear least-squares fit `y ≈ intercept + slope·x` with its RMS residual.
#[derive(Clone, Debug)]
pub struct RateFit {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// root-mean-square of the fit residuals (same units as the ordinates)
    pub residual: f64,
}

impl RateFit {
    pub fn fit(abscissae: &[f64], ordinates: &[f64]) -> Result<RateFit> {
        if abscissae.len() != ordinates.len() || abscissae.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "rate fit needs two matched samples at least, got {} / {}",
                abscissae.len(),
                ordinates.len()
            )));
        }
        if abscissae.iter().chain(ordinates).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "rate fit samples must be finite".into(),
            ));
        }
        let n = abscissae.len() as f64;
        let mx = abscissae.iter().sum::<f64>() / n;
        let my = ordinates.iter().sum::<f64>() / n;
        let sxx: f64 = abscissae.iter().map(|&x| (x - mx) * (x - mx)).sum();
        if sxx <= 0.0 {
            return Err(Error::InvalidParameter(
                "rate fit abscissae are all equal".into(),
            ));
        }
        let sxy: f64 = abscissae
            .iter()
            .zip(ordinates)
            .map(|(&x, &y)| (x - mx) * (y - my))
            .sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residual = (abscissae
            .iter()
            .zip(ordinates)
            .map(|(&x, &y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum::<f64>()
            / n)
            .sqrt();
        Ok(RateFit {
            abscissae: abscissae.to_vec(),
            ordinates: ordinates.to_vec(),
            slope,
            intercept,
            residual,
        })
    }

    /// Structured one-line text form: `{"slope": …, "intercept": …, "residual": …}`.
    pub fn to_text(&self) -> String {
        format!(
            "{{\"slope\": {:.16e}, \"intercept\": {:.16e}, \"residual\": {:.16e}}}",
            self.slope, self.intercept, self.residual
        )
    }
}

// ---------------------------------------------------------------------------
// ε-sweep against the limit dynamics
// ---------------------------------------------------------------------------

/// Distance used to compare sweep members with the limit run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMetric {
    /// sliced W₁ between the phase-space states at the comparison time
    SlicedW1,
    /// L¹ distance of the velocity marginals at the comparison time
    DensityL1,
}

/// Protocol of an ε-sweep: which scales to run, for how long, and on what
/// shared data. Initial data are ε-independent across the sweep, so a single
/// limit run serves as the common comparison target.
pub struct EpsilonSweepPlan<'a> {
    /// strictly decreasing scales in (0, 1]
    pub eps_list: Vec<f64>,
    /// comparison time T*
    pub t_star: f64,
    pub dt: f64,
    pub f0: &'a PhaseSpaceState,
    pub sigma1: &'a FormFactor,
    pub sigma2: &'a FormFactor,
    pub wave: &'a WaveInitialData,
    pub external: &'a ExternalPotential,
    pub metric: SweepMetric,
}

impl EpsilonSweepPlan<'_> {
    /// Default scale ladder {1, 1/4, 1/16, 1/64}.
    pub fn default_eps_list() -> Vec<f64> {
        vec![1.0, 0.25, 0.0625, 0.015625]
    }

    /// Checks the sweep hypotheses: scales strictly decreasing in (0, 1],
    /// the external potential nonnegative on the computational box, the
    /// initial state bounded, and the rescaled vibrational energy finite at
    /// every scale.
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::InvalidParameter("empty eps list".into()));
        }
        for (i, &e) in self.eps_list.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "sweep scale must lie in (0, 1], got {e}"
                )));
            }
            if i > 0 && e >= self.eps_list[i - 1] {
                return Err(Error::InvalidParameter(
                    "sweep scales must be strictly decreasing".into(),
                ));
            }
        }
        let radius = self.f0.grid.x.max();
        if !self.external.nonnegative_on(radius) {
            return Err(Error::Hypothesis {
                tag: "H7",
                msg: format!(
                    "sweep runs require a nonnegative external potential on |x| ≤ {radius}"
                ),
            });
        }
        if !self.f0.linf().is_finite() {
            return Err(Error::Hypothesis {
                tag: "H9",
                msg: "initial state is unbounded".into(),
            });
        }
        for &e in &self.eps_list {
            if !self.wave.energy_vib(e).is_finite() {
                return Err(Error::Hypothesis {
                    tag: "H8",
                    msg: format!("rescaled vibrational energy is not finite at scale {e}"),
                });
            }
        }
        Ok(())
    }
}

/// One sweep member: the rescaled run at a given ε compared to the limit run.
#[derive(Clone, Debug)]
pub struct SweepMember {
    pub eps: f64,
    /// distance in the plan's chosen metric at T*
    pub distance: f64,
    pub sliced_w1: f64,
    pub rho_l1: f64,
    /// sup over the run's time nodes of ‖∇Φ₀,ε‖_∞ (free-field probe)
    pub phi0_grad_probe: f64,
    /// wall-clock seconds (reporting only; excluded from deterministic output)
    pub runtime_seconds: f64,
    pub rows: Vec<DiagnosticsRow>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub kappa: f64,
    pub members: Vec<SweepMember>,
    pub limit_rows: Vec<DiagnosticsRow>,
    pub limit_runtime_seconds: f64,
    /// log-log fit of distance against ε (None when a distance is zero)
    pub rate: Option<RateFit>,
}

impl SweepReport {
    /// Deterministic CSV (runtimes intentionally excluded — they go to the
    /// timings side channel).
    pub fn csv(&self) -> String {
        let mut out = String::from("eps,distance,sliced_w1,rho_l1,phi0_grad_probe\n");
        for m in &self.members {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                m.eps, m.distance, m.sliced_w1, m.rho_l1, m.phi0_grad_probe
            ));
        }
        out
    }
}

/// Runs the rescaled dynamics at every scale in the plan and the limit
/// dynamics once, and reports the distance of each member to the limit at
/// T*. Members execute in plan order (each internally parallel).
///
/// Requires a transverse dimension n ≥ 3: for n ≤ 2 the coupling constant
/// κ = ∫₀^∞ q diverges and no limit dynamics exists.
pub fn run_epsilon_sweep(plan: &EpsilonSweepPlan) -> Result<SweepReport> {
    plan.validate()?;
    let n = plan.sigma2.dim();
    if n < 3 {
        return Err(Error::DivergentConstant(format!(
            "the limit coupling constant diverges for transverse dimension {n}; the sweep needs n ≥ 3"
        )));
    }
    let kap = kappa(plan.sigma2, n)?;

    let limit_clock = std::time::Instant::now();
    let limit_setup = SimulationSetup {
        f0: plan.f0,
        sigma1: plan.sigma1,
        sigma2: plan.sigma2,
        wave: plan.wave,
        external: plan.external,
        coupling: CouplingMode::Limit { kappa: kap },
        wave_speed: 1.0,
        dt: plan.dt,
        t_final: plan.t_star,
        snapshot_stride: 0,
        mass_drift_abort: 1e-3,
    };
    let limit_out = self_consistent_simulate(&limit_setup)?;
    let limit_runtime_seconds = limit_clock.elapsed().as_secs_f64();

    let w1_plan = SlicedW1Plan::new(&plan.f0.grid);
    let mut members = Vec::with_capacity(plan.eps_list.len());
    for &eps in &plan.eps_list {
        let clock = std::time::Instant::now();
        let speed = 1.0 / eps.sqrt();
        let setup = SimulationSetup {
            f0: plan.f0,
            sigma1: plan.sigma1,
            sigma2: plan.sigma2,
            wave: plan.wave,
            external: plan.external,
            coupling: CouplingMode::Rescaled { eps },
            wave_speed: speed,
            dt: plan.dt,
            t_final: plan.t_star,
            snapshot_stride: 0,
            mass_drift_abort: 1e-3,
        };
        let out = self_consistent_simulate(&setup)?;
        let sliced_w1 = w1_plan.distance(&out.final_state, &limit_out.final_state)?;
        let rho_l1 = out
            .final_state
            .rho()
            .l1_distance(&limit_out.final_state.rho())?;
        // free-field gradient probe over the run's time nodes
        let phi0_grad_probe = if plan.wave.is_zero() {
            0.0
        } else {
            let eval = Phi0Evaluator::new(plan.wave, plan.sigma1, plan.sigma2, speed)?;
            out.times
                .iter()
                .map(|&t| eval.eval(t).grad_linf())
                .fold(0.0f64, f64::max)
        };
        let distance = match plan.metric {
            SweepMetric::SlicedW1 => sliced_w1,
            SweepMetric::DensityL1 => rho_l1,
        };
        members.push(SweepMember {
            eps,
            distance,
            sliced_w1,
            rho_l1,
            phi0_grad_probe,
            runtime_seconds: clock.elapsed().as_secs_f64(),
            rows: out.rows,
        });
    }

    let rate = if members.len() >= 2 && members.iter().all(|m| m.distance > 0.0) {
        RateFit::fit(
            &members.iter().map(|m| m.eps.ln()).collect::<Vec<_>>(),
            &members.iter().map(|m| m.distance.ln()).collect::<Vec<_>>(),
        )
        .ok()
    } else {
        None
    };
    Ok(SweepReport {
        kappa: kap,
        members,
        limit_rows: limit_out.rows,
        limit_runtime_seconds,
        rate,
    })
}

// ---------------------------------------------------------------------------
// Frozen-density tail bound
// ---------------------------------------------------------------------------

/// Result of one frozen-density comparison: with the density held constant in
/// time, `(1/ε)L_ε(t) = [∫₀^{t/√ε} q] · Σ∗ρ`, so the gap to `κ Σ∗ρ` obeys the
/// analytic tail bound `K√ε/t · |Σ∗ρ|` pointwise, up to the stated trapezoid
/// quadrature allowance.
#[derive(Clone, Debug)]
pub struct FrozenGapCheck {
    pub eps: f64,
    pub gap_linf: f64,
    pub bound_linf: f64,
    /// composite-trapezoid error allowance `(T h²/12)·max|q″|·‖Σ∗ρ‖_∞` with
    /// `T = t/√ε`, `h = dt/√ε`
    pub quadrature_allowance: f64,
    /// gap ≤ bound + allowance at every grid node
    pub pointwise_ok: bool,
}

/// Evaluates the rescaled memory term of a time-constant density through the
/// lab's actual discrete operator at every scale and checks the analytic
/// tail bound node by node.
pub fn frozen_density_sweep(
    rho: &MacroDensity,
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    eps_list: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<FrozenGapCheck>> {
    if !(t > 0.0 && dt > 0.0 && dt <= t) {
        return Err(Error::InvalidParameter(format!(
            "frozen-density check needs 0 < dt ≤ t, got dt = {dt}, t = {t}"
        )));
    }
    let n = sigma2.dim();
    let kap = kappa(sigma2, n)?;
    let tail_k = tail_constant(sigma2, n)?;
    let sigma = self_convolve(sigma1)?;
    let conv = convolve_on_grid(|d| sigma.eval(d), sigma.support_radius(), rho);
    let steps = (t / dt).round() as usize;

    let mut checks = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "frozen-density scale must lie in (0, 1], got {eps}"
            )));
        }
        let speed = 1.0 / eps.sqrt();
        let kernel = KernelTable::build(sigma2, n, speed, t, dt)?;
        let mut history = MemoryHistory::new(dt, rho.grid)?;
        for _ in 0..=steps {
            history.push(conv.clone())?;
        }
        let mem = rescaled_memory_potential(&history, &kernel, t, eps)?;
        // max |q″| from second differences of the stored kernel samples
        let h_s = dt * speed;
        let mut qpp = 0.0f64;
        for w in kernel.q_values.windows(3) {
            qpp = qpp.max((w[2] - 2.0 * w[1] + w[0]).abs() / (h_s * h_s));
        }
        let t_scaled = t * speed;
        let allowance_factor = t_scaled * h_s * h_s / 12.0 * qpp;
        let bound_factor = tail_k * eps.sqrt() / t;

        let mut gap_linf = 0.0f64;
        let mut bound_linf = 0.0f64;
        let mut allowance_linf = 0.0f64;
        let mut pointwise_ok = true;
        for (i, &c) in conv.iter().enumerate() {
            let gap = (mem.values[i] - kap * c).abs();
            let bound = bound_factor * c.abs();
            let allowance = allowance_factor * c.abs();
            gap_linf = gap_linf.max(gap);
            bound_linf = bound_linf.max(bound);
            allowance_linf = allowance_linf.max(allowance);
            if gap > (bound + allowance) * (1.0 + 1e-9) + 1e-300 {
                pointwise_ok = false;
            }
        }
        checks.push(FrozenGapCheck {
            eps,
            gap_linf,
            bound_linf,
            quadrature_allowance: allowance_linf,
            pointwise_ok,
        });
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Interpolation inequality for velocity marginals
// ---------------------------------------------------------------------------

/// Volume of the unit ball in dimension d.
pub fn unit_ball_volume(d: u32) -> Result<f64> {
    Ok(sphere_area(d)? / d as f64)
}

#[derive(Clone, Copy, Debug)]
pub struct InterpolationCheck {
    /// ‖ρ‖_{L^{(d+m)/d}} by grid quadrature
    pub lhs: f64,
    /// C(m,d) ‖f‖_∞^{m/(d+m)} (∫|v|^m f)^{d/(d+m)}
    pub rhs: f64,
    /// the Lebesgue exponent (d+m)/d
    pub exponent: f64,
    /// C(m,d) = 2 |B(0,1)|^{m/(m+d)}
    pub constant: f64,
    pub satisfied: bool,
}

/// Checks `‖ρ‖_{L^{(d+m)/d}} ≤ C(m,d) ‖f‖_∞^{m/(d+m)} (∫|v|^m f)^{d/(d+m)}`
/// on the grid (d = 1 for this lab's phase space). The bound comes from the
/// velocity-ball split `ρ(x) ≤ ‖f‖_∞ |B(0,R)| + R^{−m} ∫|v|^m f(x,v) dv`
/// with the balancing radius R; both sides are evaluated by the same cell
/// quadrature.
pub fn interpolation_check(f: &PhaseSpaceState, m: u32) -> Result<InterpolationCheck> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "interpolation check needs a moment order m ≥ 1".into(),
        ));
    }
    let d = 1u32;
    let md = (m + d) as f64;
    let exponent = md / d as f64;
    let constant = 2.0 * unit_ball_volume(d)?.powf(m as f64 / md);
    let amp = f.linf();
    let (_, moment_v) = f.moment(m);
    if !moment_v.is_finite() || !amp.is_finite() {
        return Err(Error::InvalidParameter(
            "interpolation check needs finite sup norm and moment".into(),
        ));
    }
    let rho = f.rho();
    let h = rho.grid.step;
    let lhs = (rho
        .values
        .iter()
        .map(|&v| v.abs().powf(exponent))
        .sum::<f64>()
        * h)
        .powf(1.0 / exponent);
    let rhs = constant * amp.powf(m as f64 / md) * moment_v.powf(d as f64 / md);
    Ok(InterpolationCheck {
        lhs,
        rhs,
        exponent,
        constant,
        satisfied: lhs <= rhs * (1.0 + 1e-12),
    })
}

// ---------------------------------------------------------------------------
// Mollified-Coulomb kernel convergence
// ---------------------------------------------------------------------------

/// Exact scaling exponent of the full kernel-gap norm: substituting
/// `x → x/√ε` shows `‖O_ε‖_{L^q} = ε^{1−3/(2q)} ‖O₁‖_{L^q}` (d = 3).
pub fn gap_rate_exponent(q_exp: f64) -> f64 {
    1.0 - 1.5 / q_exp
}

/// Exact scaling exponent of the cutoff inner factor:
/// `‖∇θ_ε/|·|² − 2(θ_ε−1)(·)/|·|⁴‖_{L^p} = ε^{3(p−1)/(2p)} · const` (d = 3).
pub fn inner_rate_exponent(p: f64) -> f64 {
    3.0 * (p - 1.0) / (2.0 * p)
}

pub struct KernelRateStudy {
    pub eps_list: Vec<f64>,
    pub q_exp: f64,
    /// L^q norms of the force gap per ε
    pub gap_norms: Vec<f64>,
    pub gap_fit: RateFit,
    /// L² norms of the cutoff inner factor per ε
    pub inner_norms: Vec<f64>,
    pub inner_fit: RateFit,
    /// gap of the no-cutoff control case (pure quadrature error)
    pub control_gap: f64,
    /// the Coulomb normalization constant C₃ (closed form 1/(2π²))
    pub normalization: f64,
}

/// Sweeps the mollified-Coulomb force gap over the given scales at exponent
/// `q_exp`, fits its log-log rate, and alongside fits the p = 2 rate of the
/// cutoff inner factor (exact exponent 3/4).
pub fn vp_kernel_rate_study(eps_list: &[f64], q_exp: f64) -> Result<KernelRateStudy> {
    if eps_list.len() < 2 {
        return Err(Error::InvalidParameter(
            "kernel rate study needs at least two scales".into(),
        ));
    }
    for (i, &e) in eps_list.iter().enumerate() {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel rate scale must lie in (0, 1], got {e}"
            )));
        }
        if i > 0 && e >= eps_list[i - 1] {
            return Err(Error::InvalidParameter(
                "kernel rate scales must be strictly decreasing".into(),
            ));
        }
    }
    let mut gap_norms = Vec::with_capacity(eps_list.len());
    let mut inner_norms = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        gap_norms.push(kernel_gap_norm(eps, q_exp)?);
        inner_norms.push(cutoff_inner_factor_norm(eps, 2.0)?);
    }
    let log_eps: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let gap_fit = RateFit::fit(
        &log_eps,
        &gap_norms.iter().map(|v| v.ln()).collect::<Vec<_>>(),
    )?;
    let inner_fit = RateFit::fit(
        &log_eps,
        &inner_norms.iter().map(|v| v.ln()).collect::<Vec<_>>(),
    )?;
    Ok(KernelRateStudy {
        eps_list: eps_list.to_vec(),
        q_exp,
        gap_norms,
        gap_fit,
        inner_norms,
        inner_fit,
        control_gap: newtonian_control_gap(q_exp)?,
        normalization: coulomb_normalization(3)?,
    })
}

// ---------------------------------------------------------------------------
// Rescaled energy decomposition
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct RescaledEnergy {
    pub kinetic: f64,
    pub external: f64,
    pub interaction: f64,
    /// (ε/2) ∫|∂_tΨ|²
    pub wave_kinetic: f64,
    /// (1/2) ∫|∇_yΨ|² (the ε-weights cancel the speed 1/√ε exactly)
    pub wave_elastic: f64,
    pub total: f64,
    /// false when no wave state was available — the decomposition is then
    /// partial (transport terms only)
    pub wave_included: bool,
}

/// Energy decomposition of the rescaled system at scale ε:
/// `∫f(v²/2 + V) + ∫fΦ + (ε/2)∫|∂_tΨ|² + (1/2)∫|∇_yΨ|²`.
///
/// `wave_parts` are the raw integrals `(∫|∂_tΨ|², ∫|∇_yΨ|²)`; pass `None`
/// for memory-only runs, which flags the decomposition as partial.
pub fn rescaled_energy(
    f: &PhaseSpaceState,
    external: &ExternalPotential,
    phi: &PotentialField,
    wave_parts: Option<(f64, f64)>,
    eps: f64,
) -> Result<RescaledEnergy> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rescaled energy needs a positive scale, got {eps}"
        )));
    }
    let kinetic = kinetic_energy(f);
    let ext = external_energy(f, |x| external.value(x));
    let interaction = interaction_energy(f, phi);
    let (wk, we, included) = match wave_parts {
        Some((dt_sq, grad_sq)) => (0.5 * eps * dt_sq, 0.5 * grad_sq, true),
        None => (0.0, 0.0, false),
    };
    Ok(RescaledEnergy {
        kinetic,
        external: ext,
        interaction,
        wave_kinetic: wk,
        wave_elastic: we,
        total: kinetic + ext + interaction + wk + we,
        wave_included: included,
    })
}

/// Speed-uniform sup bound on the free-field force:
/// `‖∇Φ₀‖_∞ ≤ ‖∇σ₁‖_{L²} ‖σ₂‖_{L²} (‖Ψ₀‖_{L²} + t‖Ψ₁‖_{L²})`, valid for
/// every wave speed (the propagator is an L² contraction and the
/// velocity-potential factor obeys `|sin(crt)/(cr)| ≤ t`).
pub fn phi0_gradient_bound(
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    wave: &WaveInitialData,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bound time must be ≥ 0, got {t}"
        )));
    }
    let grad_sq = sigma1.sobolev_norm_sq(1)? - sigma1.l2_norm_sq();
    let grad_norm = grad_sq.max(0.0).sqrt();
    Ok(grad_norm
        * sigma2.l2_norm_sq().sqrt()
        * (wave.psi0_l2_sq().sqrt() + t * wave.psi1_l2_sq().sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid1, PhaseGrid};
    use crate::potential::{SourceTag, WaveTerm};
    use crate::transport::FlowPoint;
    use rand::{Rng, SeedableRng};

    fn phase_grid(r: f64, n: usize) -> PhaseGrid {
        PhaseGrid {
            x: Grid1::symmetric(r, n).unwrap(),
            v: Grid1::symmetric(r, n).unwrap(),
        }
    }

    fn smooth_state(grid: &PhaseGrid) -> PhaseSpaceState {
        PhaseSpaceState::from_fn(*grid, |x, v| {
            let r2 = (x * x + v * v) / 2.25;
            if r2 < 1.0 {
                (1.0 - r2).powi(3)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn rate_fit_recovers_exact_line() {
        let xs = [0.0, -1.0, -2.5, -4.0];
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 - 0.75 * x).collect();
        let fit = RateFit::fit(&xs, &ys).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-13);
        assert!((fit.intercept - 3.0).abs() < 1e-13);
        assert!(fit.residual < 1e-13);
        assert!(fit.to_text().contains("slope"));
    }

    #[test]
    fn interpolation_zero_state_is_trivially_satisfied() {
        let grid = phase_grid(2.0, 33);
        let f = PhaseSpaceState::zero(grid);
        let chk = interpolation_check(&f, 2).unwrap();
        assert_eq!(chk.lhs, 0.0);
        assert_eq!(chk.rhs, 0.0);
        assert!(chk.satisfied);
    }

    #[test]
    fn interpolation_plateau_matches_closed_form_ratio() {
        // f = 1 on |x| ≤ 1, |v| ≤ 1: the lhs/rhs ratio is (m+1)^{1/(m+1)}/2
        // independent of the box, up to O(h) cell-quadrature corrections.
        let grid = phase_grid(2.0, 129);
        let f = PhaseSpaceState::from_fn(grid, |x, v| {
            if x.abs() <= 1.0 && v.abs() <= 1.0 {
                1.0
            } else {
                0.0
            }
        });
        for m in [1u32, 2, 3] {
            let chk = interpolation_check(&f, m).unwrap();
            assert!(chk.satisfied);
            let expect = ((m + 1) as f64).powf(1.0 / (m + 1) as f64) / 2.0;
            let ratio = chk.lhs / chk.rhs;
            assert!(
                (ratio - expect).abs() < 2e-2 * expect,
                "m = {m}: ratio {ratio} vs {expect}"
            );
        }
        // exponent and constant as stated
        let chk = interpolation_check(&f, 2).unwrap();
        assert!((chk.exponent - 3.0).abs() < 1e-15);
        assert!((chk.constant - 2.0 * 2.0f64.powf(2.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn interpolation_holds_on_random_bump_mixtures() {
        let grid = phase_grid(3.0, 65);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for trial in 0..100 {
            let k = rng.gen_range(1..=3);
            let bumps: Vec<(f64, f64, f64, f64)> = (0..k)
                .map(|_| {
                    (
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(0.3..1.2),
                        rng.gen_range(0.1..2.0),
                    )
                })
                .collect();
            let f = PhaseSpaceState::from_fn(grid, |x, v| {
                bumps
                    .iter()
                    .map(|&(cx, cv, rad, amp)| {
                        let r2 = ((x - cx).powi(2) + (v - cv).powi(2)) / (rad * rad);
                        if r2 < 1.0 {
                            amp * (1.0 - r2).powi(3)
                        } else {
                            0.0
                        }
                    })
                    .sum()
            });
            let m = 1 + (trial % 3) as u32;
            let chk = interpolation_check(&f, m).unwrap();
            assert!(
                chk.satisfied,
                "violation at trial {trial}, m = {m}: lhs {} rhs {}",
                chk.lhs, chk.rhs
            );
        }
    }

    #[test]
    fn rescaled_energy_zero_state_and_partial_flag() {
        let grid = phase_grid(2.0, 33);
        let f = PhaseSpaceState::zero(grid);
        let phi = PotentialField::zero(grid.x, SourceTag::External);
        let e = rescaled_energy(&f, &ExternalPotential::Zero, &phi, None, 0.25).unwrap();
        assert_eq!(e.total, 0.0);
        assert!(!e.wave_included);
        let e2 = rescaled_energy(
            &f,
            &ExternalPotential::Zero,
            &phi,
            Some((2.0, 4.0)),
            0.25,
        )
        .unwrap();
        assert!(e2.wave_included);
        assert!((e2.wave_kinetic - 0.25).abs() < 1e-15); // (ε/2)·2
        assert!((e2.wave_elastic - 2.0).abs() < 1e-15); // (1/2)·4
    }

    #[test]
    fn decoupled_particle_energy_is_conserved() {
        // σ₂ = 0 decouples the bath: along exactly traced characteristics the
        // quadrature energy Σ w (v²/2 + V) is a Hamiltonian invariant.
        let grid = phase_grid(3.0, 33);
        let f0 = smooth_state(&grid);
        let ext = ExternalPotential::Harmonic { omega: 1.3 };
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        let area = grid.cell_area();
        for i in 0..grid.x.len {
            for j in 0..grid.v.len {
                let w = f0.values[[i, j]] * area;
                if w == 0.0 {
                    continue;
                }
                let (x, v) = (grid.x.point(i), grid.v.point(j));
                e0 += w * (0.5 * v * v + ext.value(x));
                let end = crate::transport::trace_flow(
                    FlowPoint { x, v },
                    0.0,
                    1.0,
                    None,
                    &ext,
                    1e-3,
                    None,
                )
                .unwrap();
                e1 += w * (0.5 * end.v * end.v + ext.value(end.x));
            }
        }
        assert!(
            (e1 - e0).abs() < 1e-10 * e0.abs(),
            "energy drifted {e0} → {e1}"
        );
    }

    #[test]
    fn sweep_with_zero_coupling_has_vanishing_distances() {
        let grid = phase_grid(3.0, 65);
        let f0 = smooth_state(&grid);
        let s1 = FormFactor::from_radial_table(1, 1.0, vec![0.0; 8]).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let wave = WaveInitialData::zero(grid.x, 3);
        let ext = ExternalPotential::Harmonic { omega: 1.0 };
        let plan = EpsilonSweepPlan {
            eps_list: vec![1.0, 0.25],
            t_star: 0.2,
            dt: 0.02,
            f0: &f0,
            sigma1: &s1,
            sigma2: &s2,
            wave: &wave,
            external: &ext,
            metric: SweepMetric::SlicedW1,
        };
        let report = run_epsilon_sweep(&plan).unwrap();
        for m in &report.members {
            assert!(m.distance < 1e-14, "distance {} at eps {}", m.distance, m.eps);
            assert_eq!(m.phi0_grad_probe, 0.0);
        }
        assert!(report.rate.is_none());
        assert!(report.csv().lines().count() == 3);
    }

    #[test]
    fn sweep_distances_decrease_toward_the_limit() {
        let grid = phase_grid(4.0, 97);
        let f0 = smooth_state(&grid);
        let s1 = FormFactor::bump(1, 1.0, 1.5).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.5).unwrap();
        let wave = WaveInitialData::zero(grid.x, 3);
        let ext = ExternalPotential::Zero;
        let plan = EpsilonSweepPlan {
            eps_list: vec![1.0, 0.25, 0.0625],
            t_star: 0.5,
            dt: 0.0125,
            f0: &f0,
            sigma1: &s1,
            sigma2: &s2,
            wave: &wave,
            external: &ext,
            metric: SweepMetric::SlicedW1,
        };
        let report = run_epsilon_sweep(&plan).unwrap();
        let d: Vec<f64> = report.members.iter().map(|m| m.distance).collect();
        assert!(
            d[0] > d[1] && d[1] > d[2],
            "distances not decreasing: {d:?}"
        );
        assert!(d[2] <= 0.75 * d[0], "weak convergence trend: {d:?}");
        // L¹ marginal distances follow the same trend
        let l: Vec<f64> = report.members.iter().map(|m| m.rho_l1).collect();
        assert!(l[0] > l[2], "rho distances not improving: {l:?}");
        if let Some(rate) = &report.rate {
            assert!(rate.slope > 0.0, "rate slope {}", rate.slope);
        }
    }

    #[test]
    fn frozen_density_gap_obeys_the_tail_bound() {
        let x_grid = Grid1::symmetric(4.0, 129).unwrap();
        let rho = MacroDensity {
            grid: x_grid,
            values: x_grid
                .points()
                .iter()
                .map(|&x| (-2.0 * x * x).exp())
                .collect(),
        };
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let checks =
            frozen_density_sweep(&rho, &s1, &s2, &[1.0, 0.25, 0.0625], 1.0, 0.005).unwrap();
        for c in &checks {
            assert!(
                c.pointwise_ok,
                "tail bound violated at eps {}: gap {} bound {} allowance {}",
                c.eps, c.gap_linf, c.bound_linf, c.quadrature_allowance
            );
            assert!(c.gap_linf.is_finite() && c.bound_linf > 0.0);
        }
    }

    #[test]
    fn kernel_rate_study_matches_exact_scaling() {
        // inner factor at p = 2 scales exactly like ε^{3/4}; the gap norm at
        // q = 6 shares the 3/4 exponent (1 − 3/(2q))
        let study = vp_kernel_rate_study(&[1.0, 0.25], 6.0).unwrap();
        assert!(
            study.gap_norms[1] < study.gap_norms[0],
            "gap norms not decreasing: {:?}",
            study.gap_norms
        );
        assert!((study.inner_fit.slope - 0.75).abs() < 0.02, "inner slope {}", study.inner_fit.slope);
        assert!((gap_rate_exponent(6.0) - 0.75).abs() < 1e-15);
        assert!((inner_rate_exponent(2.0) - 0.75).abs() < 1e-15);
        assert!(study.control_gap < 1e-6, "control gap {}", study.control_gap);
        let c3 = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::PI);
        assert!((study.normalization - c3).abs() < 1e-6);
    }

    #[test]
    fn phi0_gradient_probe_respects_speed_uniform_bound() {
        let grid = Grid1::symmetric(4.0, 129).unwrap();
        let term = WaveTerm {
            spatial: grid
                .points()
                .iter()
                .map(|&x| if x.abs() < 1.5 { (1.0 - x * x / 2.25).powi(2) } else { 0.0 })
                .collect(),
            transverse: FormFactor::bump(3, 1.2, 0.8).unwrap(),
        };
        let term1 = WaveTerm {
            spatial: grid
                .points()
                .iter()
                .map(|&x| if x.abs() < 1.0 { 0.4 * (1.0 - x * x) } else { 0.0 })
                .collect(),
            transverse: FormFactor::bump(3, 0.8, 1.1).unwrap(),
        };
        let wave = WaveInitialData::new(grid, 3, vec![term], vec![term1]).unwrap();
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let t_max = 1.0;
        let bound = phi0_gradient_bound(&s1, &s2, &wave, t_max).unwrap();
        assert!(bound > 0.0);
        for &c in &[1.0, 2.0, 8.0] {
            let eval = Phi0Evaluator::new(&wave, &s1, &s2, c).unwrap();
            for k in 0..=10 {
                let t = t_max * k as f64 / 10.0;
                let probe = eval.eval(t).grad_linf();
                assert!(
                    probe <= bound * 1.0001 + 1e-12,
                    "probe {probe} exceeds bound {bound} at c = {c}, t = {t}"
                );
            }
        }
    }

    #[test]
    fn sweep_hypothesis_violations_are_reported() {
        let grid = phase_grid(2.0, 33);
        let f0 = smooth_state(&grid);
        let s1 = FormFactor::bump(1, 1.0, 1.0).unwrap();
        let s2 = FormFactor::bump(3, 1.0, 1.0).unwrap();
        let s2_flat = FormFactor::bump(2, 1.0, 1.0).unwrap();
        let wave = WaveInitialData::zero(grid.x, 3);
        let drift = ExternalPotential::LinearDrift { force: 1.0 };
        let plan = EpsilonSweepPlan {
            eps_list: vec![1.0, 0.25],
            t_star: 0.1,
            dt: 0.01,
            f0: &f0,
            sigma1: &s1,
            sigma2: &s2,
            wave: &wave,
            external: &drift,
            metric: SweepMetric::SlicedW1,
        };
        match plan.validate().unwrap_err() {
            Error::Hypothesis { tag, .. } => assert_eq!(tag, "H7"),
            other => panic!("wrong error: {other:?}"),
        }
        let zero_ext = ExternalPotential::Zero;
        let bad_order = EpsilonSweepPlan {
            eps_list: vec![0.25, 1.0],
            t_star: 0.1,
            dt: 0.01,
            f0: &f0,
            sigma1: &s1,
            sigma2: &s2,
            wave: &wave,
            external: &zero_ext,
            metric: SweepMetric::SlicedW1,
        };
        assert!(bad_order.validate().is_err());
        let low_dim = EpsilonSweepPlan {
            eps_list: vec![1.0, 0.25],
            t_star: 0.1,
            dt: 0.01,
            f0: &f0,
            sigma1: &s1,
            sigma2: &s2_flat,
            wave: &wave,
            external: &zero_ext,
            metric: SweepMetric::SlicedW1,
        };
        match run_epsilon_sweep(&low_dim).unwrap_err() {
            Error::DivergentConstant(msg) => assert!(msg.contains("n ≥ 3")),
            other => panic!("wrong error: {other:?}"),
        }
    }
}
