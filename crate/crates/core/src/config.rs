//! Run configuration: flat `section.key = value` text files.
//!
//! The format is deliberately minimal so configs diff and hash trivially:
//! one assignment per line, `#` comments, no nesting. Every key the parser
//! does not recognize is an error (listing all offenders), so typos cannot
//! silently fall back to defaults. Defaults are resolved at parse time; grid
//! bounds default to the a-priori characteristic envelope so the box provably
//! contains the support over the run horizon.

use crate::formfactor::FormFactor;
use crate::grid::{Grid1, PhaseGrid, PhaseSpaceState};
use crate::kernel::kappa;
use crate::potential::{phi0_sup_bound, WaveInitialData, WaveTerm};
use crate::transport::{apriori_radius, CouplingMode, ExternalPotential};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// FNV-1a 64-bit hash (stable across platforms; used to stamp output files).
pub fn fnv1a_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Memory,
    DirectWave,
    NParticle,
    Picard,
    Sweep,
    Kernels,
    VpKernel,
    Validate,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Memory => "memory",
            Mode::DirectWave => "direct-wave",
            Mode::NParticle => "nparticle",
            Mode::Picard => "picard",
            Mode::Sweep => "sweep",
            Mode::Kernels => "kernels",
            Mode::VpKernel => "vpkernel",
            Mode::Validate => "validate",
        }
    }
}

/// External potential descriptor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExternalSpec {
    Zero,
    Harmonic { omega: f64 },
    Drift { force: f64 },
}

/// One phase-space bump of the initial state:
/// `amplitude · (1 − ((x−x0)² + (v−v0)²)/radius²)³₊`.
#[derive(Clone, Copy, Debug)]
pub struct BumpSpec {
    pub x0: f64,
    pub v0: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl BumpSpec {
    /// Exact mass `∫ amp (1−r²/R²)³ = amp·πR²/4`.
    pub fn mass(&self) -> f64 {
        self.amplitude * std::f64::consts::PI * self.radius * self.radius / 4.0
    }
}

/// One separable wave-data term: a spatial bump
/// `x_amplitude·(1−((x−x_center)/x_radius)²)²₊` times a transverse bump
/// profile of the given radius and mass.
#[derive(Clone, Copy, Debug)]
pub struct WaveTermSpec {
    pub x_center: f64,
    pub x_radius: f64,
    pub x_amplitude: f64,
    pub y_radius: f64,
    pub y_mass: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// spatial dimension of the transport (1 supported)
    pub dim_x: u32,
    /// transverse dimension n
    pub dim_n: u32,
    /// wave speed c (used when `eps` is absent)
    pub wave_speed: f64,
    /// rescaling parameter; when set, coupled runs use the rescaled memory
    /// form at speed 1/√ε
    pub eps: Option<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub snapshot_stride: usize,
    pub x_radius: Option<f64>,
    pub x_points: usize,
    pub v_radius: Option<f64>,
    pub v_points: usize,
    /// accept grids smaller than the a-priori envelope
    pub allow_small_grid: bool,
    pub external: ExternalSpec,
    pub sigma1_radius: f64,
    pub sigma1_mass: f64,
    pub sigma2_radius: f64,
    pub sigma2_mass: f64,
    pub f0_bumps: Vec<BumpSpec>,
    pub psi0_terms: Vec<WaveTermSpec>,
    pub psi1_terms: Vec<WaveTermSpec>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub picard_probes: usize,
    pub sweep_eps: Vec<f64>,
    /// "w1" or "l1"
    pub sweep_metric: String,
    pub nparticle_count: usize,
    pub vpkernel_q: f64,
    pub vpkernel_eps: Vec<f64>,
    /// horizon of the kernel-table CSV in kernels mode
    pub kernels_t_max: f64,
    pub mass_drift_abort: f64,
    pub directwave_resolution: f64,
    /// raw config text (hashed into every output header)
    pub raw_text: String,
}

struct Parser {
    map: BTreeMap<String, String>,
}

impl Parser {
    fn from_text(text: &str) -> Result<Parser> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "duplicate configuration key `{key}`"
                )));
            }
        }
        Ok(Parser { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: not a number: `{s}`"))),
        }
    }

    fn take_opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(s) if s == "auto" => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: not a number: `{s}`"))),
        }
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: not a count: `{s}`"))),
        }
    }

    fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: not an integer: `{s}`"))),
        }
    }

    fn take_u32(&mut self, key: &str, default: u32) -> Result<u32> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: not an integer: `{s}`"))),
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => match s.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(Error::Config(format!("`{key}`: not a boolean: `{other}`"))),
            },
        }
    }

    fn take_floats(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split_whitespace()
                .map(|tok| {
                    tok.parse()
                        .map_err(|_| Error::Config(format!("`{key}`: not a number: `{tok}`")))
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        if self.map.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.map.keys().map(|k| k.as_str()).collect();
            Err(Error::Config(format!(
                "unknown configuration keys: {}",
                keys.join(", ")
            )))
        }
    }
}

fn parse_floats_tuple(key: &str, value: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = value
        .split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| Error::Config(format!("`{key}`: not a number: `{tok}`")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != n {
        return Err(Error::Config(format!(
            "`{key}`: expected {n} numbers, got {}",
            parts.len()
        )));
    }
    Ok(parts)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut p = Parser::from_text(text)?;

    let mode = match p.take("run.mode").as_deref() {
        None => Mode::Memory,
        Some("memory") => Mode::Memory,
        Some("direct-wave") => Mode::DirectWave,
        Some("nparticle") => Mode::NParticle,
        Some("picard") => Mode::Picard,
        Some("sweep") => Mode::Sweep,
        Some("kernels") => Mode::Kernels,
        Some("vpkernel") => Mode::VpKernel,
        Some("validate") => Mode::Validate,
        Some(other) => {
            return Err(Error::Config(format!(
                "`run.mode`: unknown mode `{other}` (memory, direct-wave, nparticle, picard, sweep, kernels, vpkernel, validate)"
            )))
        }
    };
    let seed = p.take_u64("run.seed", 0)?;
    let dim_x = p.take_u32("system.d", 1)?;
    let dim_n = p.take_u32("system.n", 3)?;
    let c_given = p.map.contains_key("system.c");
    let wave_speed = p.take_f64("system.c", 1.0)?;
    let eps = p.take_opt_f64("system.eps")?;
    if eps.is_some() && c_given {
        return Err(Error::Config(
            "`system.c` and `system.eps` are mutually exclusive".into(),
        ));
    }
    let t_final = p.take_f64("transport.t_final", 1.0)?;
    let dt = p.take_f64("transport.dt", 0.01)?;
    let snapshot_stride = p.take_usize("transport.snapshot_stride", 10)?;
    let x_radius = p.take_opt_f64("grid.x_radius")?;
    let x_points = p.take_usize("grid.x_points", 129)?;
    let v_radius = p.take_opt_f64("grid.v_radius")?;
    let v_points = p.take_usize("grid.v_points", 129)?;
    let allow_small_grid = p.take_bool("grid.allow_small", false)?;

    let external = match p.take("external.kind").as_deref() {
        None | Some("zero") => ExternalSpec::Zero,
        Some("harmonic") => ExternalSpec::Harmonic {
            omega: p.take_f64("external.omega", 1.0)?,
        },
        Some("drift") => ExternalSpec::Drift {
            force: p.take_f64("external.force", 0.0)?,
        },
        Some(other) => {
            return Err(Error::Config(format!(
                "`external.kind`: unknown kind `{other}` (zero, harmonic, drift)"
            )))
        }
    };

    let sigma1_radius = p.take_f64("sigma1.radius", 1.0)?;
    let sigma1_mass = p.take_f64("sigma1.mass", 1.0)?;
    let sigma2_radius = p.take_f64("sigma2.radius", 1.0)?;
    let sigma2_mass = p.take_f64("sigma2.mass", 1.0)?;

    let mut f0_bumps = Vec::new();
    for i in 1..=8 {
        if let Some(v) = p.take(&format!("f0.bump{i}")) {
            let t = parse_floats_tuple(&format!("f0.bump{i}"), &v, 4)?;
            f0_bumps.push(BumpSpec {
                x0: t[0],
                v0: t[1],
                radius: t[2],
                amplitude: t[3],
            });
        }
    }
    if f0_bumps.is_empty() {
        f0_bumps.push(BumpSpec {
            x0: 0.0,
            v0: 0.0,
            radius: 1.5,
            amplitude: 1.0,
        });
    }

    let mut psi0_terms = Vec::new();
    let mut psi1_terms = Vec::new();
    for (prefix, out) in [("wave.psi0_term", &mut psi0_terms), ("wave.psi1_term", &mut psi1_terms)]
    {
        for i in 1..=4 {
            let key = format!("{prefix}{i}");
            if let Some(v) = p.take(&key) {
                let t = parse_floats_tuple(&key, &v, 5)?;
                out.push(WaveTermSpec {
                    x_center: t[0],
                    x_radius: t[1],
                    x_amplitude: t[2],
                    y_radius: t[3],
                    y_mass: t[4],
                });
            }
        }
    }

    let picard_tol = p.take_f64("picard.tol", 1e-7)?;
    let picard_max_iter = p.take_usize("picard.max_iter", 12)?;
    let picard_probes = p.take_usize("picard.probes", 5)?;
    let sweep_eps = p.take_floats("sweep.eps_list", &[1.0, 0.25, 0.0625, 0.015625])?;
    let sweep_metric = p.take("sweep.metric").unwrap_or_else(|| "w1".into());
    if sweep_metric != "w1" && sweep_metric != "l1" {
        return Err(Error::Config(format!(
            "`sweep.metric`: expected w1 or l1, got `{sweep_metric}`"
        )));
    }
    let nparticle_count = p.take_usize("nparticle.count", 4096)?;
    let vpkernel_q = p.take_f64("vpkernel.q_exp", 6.0)?;
    let vpkernel_eps = p.take_floats("vpkernel.eps_list", &[1.0, 0.25, 0.0625, 0.015625])?;
    let kernels_t_max = p.take_f64("kernels.t_max", 200.0)?;
    let mass_drift_abort = p.take_f64("solver.mass_drift_abort", 1e-3)?;
    let directwave_resolution = p.take_f64("directwave.resolution", 1.0)?;

    p.finish()?;

    let cfg = RunConfig {
        mode,
        seed,
        dim_x,
        dim_n,
        wave_speed,
        eps,
        t_final,
        dt,
        snapshot_stride,
        x_radius,
        x_points,
        v_radius,
        v_points,
        allow_small_grid,
        external,
        sigma1_radius,
        sigma1_mass,
        sigma2_radius,
        sigma2_mass,
        f0_bumps,
        psi0_terms,
        psi1_terms,
        picard_tol,
        picard_max_iter,
        picard_probes,
        sweep_eps,
        sweep_metric,
        nparticle_count,
        vpkernel_q,
        vpkernel_eps,
        kernels_t_max,
        mass_drift_abort,
        directwave_resolution,
        raw_text: text.to_string(),
    };
    cfg.check_structure()?;
    Ok(cfg)
}

impl RunConfig {
    fn check_structure(&self) -> Result<()> {
        if self.dim_x != 1 {
            return Err(Error::Config(format!(
                "`system.d`: the transport solver is one-dimensional (got {})",
                self.dim_x
            )));
        }
        if !(2..=3).contains(&self.dim_n) {
            return Err(Error::Config(format!(
                "`system.n`: transverse dimension must be 2 or 3 (got {})",
                self.dim_n
            )));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config(
                "`transport.dt` and `transport.t_final` must be positive".into(),
            ));
        }
        let steps = (self.t_final / self.dt).round();
        if steps < 1.0 || (self.t_final - steps * self.dt).abs() > 1e-9 * self.t_final {
            return Err(Error::Config(format!(
                "`transport.t_final` = {} is not an integer multiple of `transport.dt` = {}",
                self.t_final, self.dt
            )));
        }
        if !(self.wave_speed > 0.0) {
            return Err(Error::Config("`system.c` must be positive".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config(
                "`transport.snapshot_stride` must be at least 1".into(),
            ));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!(
                    "`system.eps` must lie in (0, 1], got {e}"
                )));
            }
        }
        if self.x_points < 9 || self.v_points < 9 {
            return Err(Error::Config(
                "`grid.x_points` / `grid.v_points` must be at least 9".into(),
            ));
        }
        for (name, radius, mass) in [
            ("sigma1", self.sigma1_radius, self.sigma1_mass),
            ("sigma2", self.sigma2_radius, self.sigma2_mass),
        ] {
            if !(radius > 0.0) || !(mass >= 0.0) || !radius.is_finite() || !mass.is_finite() {
                return Err(Error::Config(format!(
                    "`{name}`: radius must be positive and mass nonnegative"
                )));
            }
        }
        for b in &self.f0_bumps {
            if !(b.radius > 0.0) || !b.amplitude.is_finite() || b.amplitude < 0.0 {
                return Err(Error::Config(
                    "`f0.bump*`: radius must be positive and amplitude nonnegative".into(),
                ));
            }
        }
        for t in self.psi0_terms.iter().chain(&self.psi1_terms) {
            if !(t.x_radius > 0.0) || !(t.y_radius > 0.0) || !(t.y_mass >= 0.0) {
                return Err(Error::Config(
                    "`wave.psi*_term*`: radii must be positive and transverse mass nonnegative"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", fnv1a_hash(&self.raw_text))
    }

    pub fn build_sigma1(&self) -> Result<FormFactor> {
        if self.sigma1_mass == 0.0 {
            return FormFactor::from_radial_table(self.dim_x, self.sigma1_radius, vec![0.0; 8]);
        }
        FormFactor::bump(self.dim_x, self.sigma1_radius, self.sigma1_mass)
    }

    pub fn build_sigma2(&self) -> Result<FormFactor> {
        if self.sigma2_mass == 0.0 {
            return FormFactor::from_radial_table(
                self.dim_n,
                self.sigma2_radius,
                vec![0.0; 8],
            );
        }
        FormFactor::bump(self.dim_n, self.sigma2_radius, self.sigma2_mass)
    }

    pub fn build_external(&self) -> ExternalPotential {
        match self.external {
            ExternalSpec::Zero => ExternalPotential::Zero,
            ExternalSpec::Harmonic { omega } => ExternalPotential::Harmonic { omega },
            ExternalSpec::Drift { force } => ExternalPotential::LinearDrift { force },
        }
    }

    /// The coupling mode the dynamics modes run under.
    pub fn coupling(&self) -> Result<CouplingMode> {
        Ok(match self.mode {
            Mode::DirectWave => CouplingMode::DirectWave {
                resolution: self.directwave_resolution,
            },
            _ => match self.eps {
                Some(e) => CouplingMode::Rescaled { eps: e },
                None => CouplingMode::Memory,
            },
        })
    }

    /// Effective wave speed: `1/√ε` when rescaled, `system.c` otherwise.
    pub fn effective_speed(&self) -> f64 {
        match self.eps {
            Some(e) => 1.0 / e.sqrt(),
            None => self.wave_speed,
        }
    }

    /// Initial support radius of the configured state (both coordinates).
    pub fn support_radius(&self) -> f64 {
        self.f0_bumps
            .iter()
            .map(|b| (b.x0.abs() + b.radius).max(b.v0.abs() + b.radius))
            .fold(0.0f64, f64::max)
    }

    /// Total mass of the configured state (closed form per bump).
    pub fn f0_mass(&self) -> f64 {
        self.f0_bumps.iter().map(|b| b.mass()).sum()
    }

    /// Characteristic confinement envelope for the run: Grönwall radius from
    /// the initial support under a force bound that covers the coupling
    /// (memory/limit/rescaled) plus the free field and any constant drift.
    pub fn apriori_box_radius(&self) -> Result<f64> {
        let sigma1 = self.build_sigma1()?;
        let sigma2 = self.build_sigma2()?;
        let mass = self.f0_mass();
        let t = self.t_final;
        let sob1 = sigma1.sobolev_norm_sq(1)?;
        let kappa_term = if self.dim_n >= 3 {
            kappa(&sigma2, self.dim_n).unwrap_or(0.0)
        } else {
            0.0
        };
        let coupling_force = mass
            * sob1
            * (sigma2.l2_norm_sq() * t * t / 2.0).max(kappa_term);
        let wave = self.build_wave_data(Grid1::symmetric(self.support_radius().max(1.0), 9)?)?;
        let phi0_force = if wave.is_zero() {
            0.0
        } else {
            // W^{2,2} covers one gradient on the convolution factor
            phi0_sup_bound(&sigma1, &sigma2, &wave, t)
        };
        let drift = match self.external {
            ExternalSpec::Drift { force } => force.abs(),
            _ => 0.0,
        };
        let hessian = match self.external {
            ExternalSpec::Harmonic { omega } => omega * omega,
            _ => 0.0,
        };
        Ok(apriori_radius(
            self.support_radius(),
            coupling_force + phi0_force + drift,
            hessian,
            t,
        ))
    }

    /// Builds the phase grid, auto-sizing absent bounds from the a-priori
    /// envelope; explicit bounds below the envelope are rejected unless
    /// `grid.allow_small = true`.
    pub fn build_phase_grid(&self) -> Result<PhaseGrid> {
        let envelope = self.apriori_box_radius()?;
        let auto = (envelope * 1.05).max(self.support_radius() + 1.0);
        let xr = self.x_radius.unwrap_or(auto);
        let vr = self.v_radius.unwrap_or(auto);
        if !self.allow_small_grid {
            for (name, r) in [("grid.x_radius", xr), ("grid.v_radius", vr)] {
                if r < envelope {
                    return Err(Error::Config(format!(
                        "`{name}` = {r} is below the a-priori characteristic envelope {envelope:.3}; enlarge it or set grid.allow_small = true"
                    )));
                }
            }
        }
        Ok(PhaseGrid {
            x: Grid1::symmetric(xr, self.x_points)?,
            v: Grid1::symmetric(vr, self.v_points)?,
        })
    }

    pub fn build_f0(&self, grid: &PhaseGrid) -> PhaseSpaceState {
        let bumps = self.f0_bumps.clone();
        PhaseSpaceState::from_fn(*grid, move |x, v| {
            bumps
                .iter()
                .map(|b| {
                    let q = ((x - b.x0).powi(2) + (v - b.v0).powi(2)) / (b.radius * b.radius);
                    if q < 1.0 {
                        b.amplitude * (1.0 - q).powi(3)
                    } else {
                        0.0
                    }
                })
                .sum()
        })
    }

    pub fn build_wave_data(&self, x_grid: Grid1) -> Result<WaveInitialData> {
        if self.psi0_terms.is_empty() && self.psi1_terms.is_empty() {
            return Ok(WaveInitialData::zero(x_grid, self.dim_n));
        }
        let build = |specs: &[WaveTermSpec]| -> Result<Vec<WaveTerm>> {
            specs
                .iter()
                .map(|s| {
                    Ok(WaveTerm {
                        spatial: x_grid
                            .points()
                            .iter()
                            .map(|&x| {
                                let u = (x - s.x_center) / s.x_radius;
                                if u.abs() < 1.0 {
                                    s.x_amplitude * (1.0 - u * u).powi(2)
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                        transverse: FormFactor::bump(self.dim_n, s.y_radius, s.y_mass)?,
                    })
                })
                .collect()
        };
        WaveInitialData::new(x_grid, self.dim_n, build(&self.psi0_terms)?, build(&self.psi1_terms)?)
    }
}
