//! Model-hypothesis checks.
//!
//! The well-posedness and asymptotic statements rest on a small set of
//! standing assumptions: nonnegative smooth compactly supported coupling
//! profiles (H1), an external potential that is at worst quadratically
//! unbounded below with a recorded coefficient C (H2), square-integrable wave
//! data (H3), a nonnegative integrable initial state (H4), finite initial
//! energy (H5), and — for the large-wave-speed study — a nonnegative external
//! potential (H7), uniformly bounded rescaled initial energy (H8), and a
//! uniform L^∞ bound on the initial state (H9). Each check here measures the
//! relevant quantity and records it, so a violated assumption is reported by
//! its tag with the offending number attached.

use crate::config::{Mode, RunConfig};
use crate::formfactor::FormFactor;
use crate::grid::PhaseSpaceState;
use crate::kernel::KernelEvaluator;
use crate::potential::{phi0_sup_bound, WaveInitialData};
use crate::transport::ExternalPotential;
use crate::{Error, Result};

/// One executed hypothesis check.
#[derive(Clone, Debug)]
pub struct HypothesisCheck {
    /// assumption tag (H1, H2, H3, H4, H5, H7, H8, H9)
    pub tag: &'static str,
    /// what the assumption demands
    pub statement: &'static str,
    /// what was measured, with numbers
    pub detail: String,
    /// recorded constant where the assumption names one (C for H2, the
    /// energy for H5/H8, the sup-norm for H9)
    pub recorded: Option<f64>,
    pub passed: bool,
    /// whether a failure is fatal for the requested mode (H7 binds only the
    /// ε-limit modes; everywhere else it is reported but advisory)
    pub required: bool,
}

#[derive(Clone, Debug, Default)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_required_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn first_violation(&self) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.required && !c.passed)
    }

    /// One line per check: `H2  pass  C = 1.0e0  <statement>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed {
                "pass"
            } else if c.required {
                "FAIL"
            } else {
                "fail (advisory)"
            };
            let rec = match c.recorded {
                Some(v) => format!("  recorded = {v:.6e}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{:<3} {:<16} {}{}  [{}]\n",
                c.tag, status, c.statement, rec, c.detail
            ));
        }
        out
    }

    /// Converts the first required violation into a tagged error.
    pub fn into_result(self) -> Result<HypothesisReport> {
        if let Some(bad) = self.first_violation() {
            return Err(Error::Hypothesis {
                tag: bad.tag,
                msg: format!("{} — {}", bad.statement, bad.detail),
            });
        }
        Ok(self)
    }
}

/// Minimum of a radial profile over its support (sampled).
fn radial_min(ff: &FormFactor) -> f64 {
    if ff.is_zero() {
        return 0.0;
    }
    let r_max = ff.support_radius();
    (0..=400)
        .map(|i| ff.eval(r_max * i as f64 / 400.0))
        .fold(f64::INFINITY, f64::min)
}

/// Runs every hypothesis check against materialized objects.
///
/// `eps_list` supplies the scales the rescaled-energy bound must hold on
/// (pass `&[1.0]` for an unscaled run); `limit_mode` marks the checks that
/// the large-wave-speed study additionally requires (H7–H9 enforcement).
#[allow(clippy::too_many_arguments)]
pub fn hypothesis_report(
    f0: &PhaseSpaceState,
    external: &ExternalPotential,
    sigma1: &FormFactor,
    sigma2: &FormFactor,
    wave: &WaveInitialData,
    eps_list: &[f64],
    domain_radius: f64,
    limit_mode: bool,
) -> HypothesisReport {
    let mut checks = Vec::new();

    // H1: coupling profiles nonnegative (smoothness and compact support are
    // structural: every constructor builds C_c bump-class profiles)
    let min1 = radial_min(sigma1);
    let min2 = radial_min(sigma2);
    let h1_pass = min1 >= -1e-12 && min2 >= -1e-12;
    checks.push(HypothesisCheck {
        tag: "H1",
        statement: "coupling profiles are nonnegative, radial, compactly supported",
        detail: format!("min σ₁ = {min1:.3e}, min σ₂ = {min2:.3e}"),
        recorded: None,
        passed: h1_pass,
        required: true,
    });

    // H2: V ≥ −C(1+|x|²) with a recorded constant C
    let coeff = external.quadratic_lower_coeff();
    checks.push(HypothesisCheck {
        tag: "H2",
        statement: "external potential bounded below by −C(1+|x|²)",
        detail: match coeff {
            Some(c) => format!("C = {c:.6e}"),
            None => "no finite C exists on the sampled range".into(),
        },
        recorded: coeff,
        passed: coeff.is_some(),
        required: true,
    });

    // H3: Ψ₀, Ψ₁ square integrable
    let l2_0 = wave.psi0_l2_sq();
    let l2_1 = wave.psi1_l2_sq();
    checks.push(HypothesisCheck {
        tag: "H3",
        statement: "wave data square integrable",
        detail: format!("‖Ψ₀‖² = {l2_0:.6e}, ‖Ψ₁‖² = {l2_1:.6e}"),
        recorded: None,
        passed: l2_0.is_finite() && l2_1.is_finite(),
        required: true,
    });

    // H4: f₀ ≥ 0 with finite mass
    let f_min = f0.values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let mass = f0.mass();
    checks.push(HypothesisCheck {
        tag: "H4",
        statement: "initial state nonnegative and integrable",
        detail: format!("min f₀ = {f_min:.3e}, mass = {mass:.6e}"),
        recorded: Some(mass),
        passed: f_min >= -1e-14 && mass.is_finite() && mass >= 0.0,
        required: true,
    });

    // H5: ∇_yΨ₀ ∈ L² and (V + |v|²) f₀ ∈ L¹ — finite initial energy
    let grad_sq = wave.psi0_grad_l2_sq();
    let cell = f0.grid.cell_area();
    let mut weighted = 0.0;
    for i in 0..f0.grid.x.len {
        let vx = external.value(f0.grid.x.point(i));
        for j in 0..f0.grid.v.len {
            let v = f0.grid.v.point(j);
            weighted += (vx.abs() + v * v) * f0.values[[i, j]] * cell;
        }
    }
    checks.push(HypothesisCheck {
        tag: "H5",
        statement: "initial kinetic and potential energy finite",
        detail: format!("‖∇_yΨ₀‖² = {grad_sq:.6e}, ∫(|V|+v²)f₀ = {weighted:.6e}"),
        recorded: Some(weighted),
        passed: grad_sq.is_finite() && weighted.is_finite(),
        required: true,
    });

    // H7: V ≥ 0 (needed by the ε → 0 study, advisory otherwise)
    let nonneg = external.nonnegative_on(domain_radius);
    checks.push(HypothesisCheck {
        tag: "H7",
        statement: "external potential is non negative",
        detail: format!("checked on |x| ≤ {domain_radius:.3}"),
        recorded: None,
        passed: nonneg,
        required: limit_mode,
    });

    // H8: rescaled initial energy uniformly bounded on the scale list
    let mut worst = 0.0f64;
    let mut h8_ok = true;
    for &eps in eps_list {
        let vib = wave.energy_vib(eps);
        // |Φ_ε| ≤ sup|Φ₀| + memory bound ≤ this static bound at t = 0
        let phi_bound = phi0_sup_bound(sigma1, sigma2, wave, 0.0);
        let total = weighted / 2.0 + phi_bound * mass + vib;
        if !total.is_finite() {
            h8_ok = false;
        }
        worst = worst.max(total);
    }
    checks.push(HypothesisCheck {
        tag: "H8",
        statement: "rescaled initial energy uniformly bounded over the scales",
        detail: format!("sup over {} scales = {worst:.6e}", eps_list.len()),
        recorded: Some(worst),
        passed: h8_ok && worst.is_finite(),
        required: limit_mode,
    });

    // H9: ‖f₀‖_∞ finite (ε-uniform: the sweep reuses the same state)
    let linf = f0.linf();
    checks.push(HypothesisCheck {
        tag: "H9",
        statement: "initial state uniformly bounded",
        detail: format!("‖f₀‖_∞ = {linf:.6e}"),
        recorded: Some(linf),
        passed: linf.is_finite(),
        required: limit_mode,
    });

    HypothesisReport { checks }
}

/// Materializes a config and runs the hypothesis suite; required violations
/// become tagged errors (exit code 3 at the command line).
pub fn check_config(cfg: &RunConfig) -> Result<HypothesisReport> {
    let sigma1 = cfg.build_sigma1()?;
    let sigma2 = cfg.build_sigma2()?;
    let grid = cfg.build_phase_grid()?;
    let f0 = cfg.build_f0(&grid);
    let wave = cfg.build_wave_data(grid.x)?;
    let external = cfg.build_external();
    let eps_list: Vec<f64> = match cfg.mode {
        Mode::Sweep => cfg.sweep_eps.clone(),
        _ => vec![cfg.eps.unwrap_or(1.0)],
    };
    let limit_mode = cfg.mode == Mode::Sweep;
    hypothesis_report(
        &f0,
        &external,
        &sigma1,
        &sigma2,
        &wave,
        &eps_list,
        grid.x.max(),
        limit_mode,
    )
    .into_result()
}

/// Structural invariants beyond the model hypotheses, reported the same way.
/// Used by the validate mode to exercise the full suite.
pub fn structural_report(cfg: &RunConfig) -> Result<HypothesisReport> {
    let mut checks = Vec::new();

    let envelope = cfg.apriori_box_radius()?;
    checks.push(HypothesisCheck {
        tag: "S1",
        statement: "a-priori characteristic envelope is finite",
        detail: format!("radius = {envelope:.6e} over horizon {}", cfg.t_final),
        recorded: Some(envelope),
        passed: envelope.is_finite(),
        required: true,
    });

    let grid = cfg.build_phase_grid()?;
    let f0 = cfg.build_f0(&grid);
    let mass = f0.mass();
    checks.push(HypothesisCheck {
        tag: "S2",
        statement: "discrete initial state carries positive mass",
        detail: format!("grid mass = {mass:.6e} (closed form {:.6e})", cfg.f0_mass()),
        recorded: Some(mass),
        passed: mass > 0.0,
        required: true,
    });

    if cfg.dim_n >= 3 {
        let sigma2 = cfg.build_sigma2()?;
        let eval = KernelEvaluator::new(&sigma2, cfg.dim_n)?;
        let kappa = eval.kappa()?;
        let tail = eval.tail_constant()?;
        checks.push(HypothesisCheck {
            tag: "S3",
            statement: "memory-kernel constants are finite and positive",
            detail: format!("κ = {kappa:.6e}, tail K = {tail:.6e}"),
            recorded: Some(kappa),
            passed: kappa.is_finite() && kappa > 0.0 && tail.is_finite() && tail > 0.0,
            required: true,
        });
    } else {
        checks.push(HypothesisCheck {
            tag: "S3",
            statement: "memory-kernel limit constant diverges for n = 2 (expected)",
            detail: "κ is only finite for n ≥ 3; limit modes are rejected".into(),
            recorded: None,
            passed: true,
            required: true,
        });
    }

    Ok(HypothesisReport { checks })
}

/// The full validate-mode suite: hypotheses plus structural invariants.
pub fn full_report(cfg: &RunConfig) -> Result<HypothesisReport> {
    let sigma1 = cfg.build_sigma1()?;
    let sigma2 = cfg.build_sigma2()?;
    let grid = cfg.build_phase_grid()?;
    let f0 = cfg.build_f0(&grid);
    let wave = cfg.build_wave_data(grid.x)?;
    let external = cfg.build_external();
    let eps_list: Vec<f64> = match cfg.mode {
        Mode::Sweep => cfg.sweep_eps.clone(),
        _ => vec![cfg.eps.unwrap_or(1.0)],
    };
    let mut report = hypothesis_report(
        &f0,
        &external,
        &sigma1,
        &sigma2,
        &wave,
        &eps_list,
        grid.x.max(),
        cfg.mode == Mode::Sweep,
    );
    report.checks.extend(structural_report(cfg)?.checks);
    Ok(report)
}
