//! Run orchestration: materialize a config, dispatch the selected mode, and
//! persist a reproducible run directory.
//!
//! Every run writes the same deterministic artifact set for its mode — config
//! echo, CSV data, binary snapshots, a summary — plus `timings.txt`, the one
//! deliberately non-deterministic file (wall-clock measurements). Every
//! deterministic file starts with a `# config <hash>` line (or carries the
//! hash in its binary header) so artifacts can always be traced back to the
//! exact configuration text that produced them. Reruns with identical config
//! and seed produce byte-identical deterministic files.

use crate::asymptotics::{
    run_epsilon_sweep, vp_kernel_rate_study, EpsilonSweepPlan, SweepMetric,
};
use crate::config::{Mode, RunConfig};
use crate::diagnostics::DiagnosticsRow;
use crate::kernel::KernelTable;
use crate::snapshot::{write_snapshot, SnapshotHeader};
use crate::transport::{
    nparticle_simulate, picard_solve, self_consistent_simulate, SimulationOutput,
    SimulationSetup,
};
use crate::validate::{check_config, full_report};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// What a completed run left on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    /// relative paths of the deterministic files written
    pub files: Vec<String>,
    /// the summary text (also persisted as summary.txt)
    pub summary: String,
}

fn hash_line(cfg: &RunConfig) -> String {
    format!("# config {}\n", cfg.hash_hex())
}

fn write_text(
    dir: &Path,
    name: &str,
    cfg: &RunConfig,
    body: &str,
    files: &mut Vec<String>,
) -> Result<()> {
    let mut content = hash_line(cfg);
    content.push_str(body);
    std::fs::write(dir.join(name), content)?;
    files.push(name.to_string());
    Ok(())
}

/// Runs the configured experiment, writing artifacts under `out_dir`
/// (created if absent). Returns the artifact listing; errors carry their
/// command-line exit code and leave a machine-readable failure record.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let clock = Instant::now();
    let mut files = Vec::new();
    write_text(out_dir, "config.echo.txt", cfg, &cfg.raw_text, &mut files)?;

    let result = dispatch(cfg, out_dir, &mut files);
    match result {
        Ok(summary) => {
            write_text(out_dir, "summary.txt", cfg, &summary, &mut files)?;
            // wall-clock side channel: excluded from the determinism guarantee
            let timing = format!(
                "{}mode = {}\nwall_seconds = {:.3}\n",
                hash_line(cfg),
                cfg.mode.name(),
                clock.elapsed().as_secs_f64()
            );
            std::fs::write(out_dir.join("timings.txt"), timing)?;
            Ok(RunArtifacts {
                out_dir: out_dir.to_path_buf(),
                files,
                summary,
            })
        }
        Err(err) => {
            let record = format!(
                "{}status = failed\nexit_code = {}\nerror = {}\n",
                hash_line(cfg),
                err.exit_code(),
                err
            );
            std::fs::write(out_dir.join("failure.txt"), record)?;
            Err(err)
        }
    }
}

fn dispatch(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    match cfg.mode {
        Mode::Kernels => run_kernels(cfg, out_dir, files),
        Mode::Memory | Mode::DirectWave => run_simulate(cfg, out_dir, files),
        Mode::Picard => run_picard(cfg, out_dir, files),
        Mode::Sweep => run_sweep(cfg, out_dir, files),
        Mode::VpKernel => run_vpkernel(cfg, out_dir, files),
        Mode::NParticle => run_nparticle(cfg, out_dir, files),
        Mode::Validate => run_validate(cfg, out_dir, files),
    }
}

/// Tabulates the memory kernel: per-row `t, p(t), q(ct), ∫₀^{ct} q`.
fn run_kernels(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    check_config(cfg)?;
    let sigma2 = cfg.build_sigma2()?;
    let c = cfg.effective_speed();
    let table = KernelTable::build(&sigma2, cfg.dim_n, c, cfg.kernels_t_max, cfg.dt)?;

    let mut csv = String::from("t,p,q_at_ct,partial_integral\n");
    for (j, &q) in table.q_values.iter().enumerate() {
        let t = j as f64 * cfg.dt;
        writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            q / c,
            q,
            table.cumulative[j]
        )
        .unwrap();
    }
    write_text(out_dir, "kernel.csv", cfg, &csv, files)?;

    let mut summary = format!(
        "mode = kernels\nn = {}\nwave_speed = {:.6e}\nrows = {}\n",
        table.n,
        c,
        table.q_values.len()
    );
    match (table.kappa, table.tail_k) {
        (Some(k), Some(tail)) => {
            let _ = writeln!(summary, "kappa = {k:.16e}");
            let _ = writeln!(summary, "tail_K = {tail:.16e}");
        }
        _ => {
            let _ = writeln!(
                summary,
                "kappa = divergent (n = {} < 3; partial integrals grow logarithmically)",
                table.n
            );
        }
    }
    let _ = writeln!(
        summary,
        "partial_integral_at_t_max = {:.16e}",
        table.cumulative.last().copied().unwrap_or(0.0)
    );
    Ok(summary)
}

struct Materialized {
    setup_f0: crate::grid::PhaseSpaceState,
    sigma1: crate::formfactor::FormFactor,
    sigma2: crate::formfactor::FormFactor,
    wave: crate::potential::WaveInitialData,
    external: crate::transport::ExternalPotential,
}

fn materialize(cfg: &RunConfig) -> Result<Materialized> {
    let grid = cfg.build_phase_grid()?;
    Ok(Materialized {
        setup_f0: cfg.build_f0(&grid),
        sigma1: cfg.build_sigma1()?,
        sigma2: cfg.build_sigma2()?,
        wave: cfg.build_wave_data(grid.x)?,
        external: cfg.build_external(),
    })
}

fn write_diagnostics(
    out_dir: &Path,
    cfg: &RunConfig,
    rows: &[DiagnosticsRow],
    files: &mut Vec<String>,
) -> Result<()> {
    let mut csv = String::from(DiagnosticsRow::csv_header());
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    write_text(out_dir, "diagnostics.csv", cfg, &csv, files)
}

/// Writes the snapshot series: every stride-th step, `⌊T/(stride·dt)⌋ + 1`
/// files in total, plus the final state at the directory root.
fn write_snapshots(
    out_dir: &Path,
    cfg: &RunConfig,
    out: &SimulationOutput,
    files: &mut Vec<String>,
) -> Result<usize> {
    let snap_dir = out_dir.join("snapshots");
    if snap_dir.exists() {
        std::fs::remove_dir_all(&snap_dir)?;
    }
    std::fs::create_dir_all(&snap_dir)?;
    let header = SnapshotHeader {
        config_hash: crate::config::fnv1a_hash(&cfg.raw_text),
        dim_x: cfg.dim_x,
        dim_n: cfg.dim_n,
    };
    let mut count = 0;
    for (state, &t) in out.snapshots.iter().zip(&out.snapshot_times) {
        let k = (t / cfg.dt).round() as usize;
        if k % cfg.snapshot_stride != 0 {
            continue;
        }
        let name = format!("snapshots/snap_{:05}.bin", k / cfg.snapshot_stride);
        write_snapshot(&out_dir.join(&name), state, header)?;
        files.push(name);
        count += 1;
    }
    write_snapshot(&out_dir.join("final_state.bin"), &out.final_state, header)?;
    files.push("final_state.bin".into());
    Ok(count)
}

fn run_simulate(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    check_config(cfg)?;
    let m = materialize(cfg)?;
    let setup = SimulationSetup {
        f0: &m.setup_f0,
        sigma1: &m.sigma1,
        sigma2: &m.sigma2,
        wave: &m.wave,
        external: &m.external,
        coupling: cfg.coupling()?,
        wave_speed: cfg.effective_speed(),
        dt: cfg.dt,
        t_final: cfg.t_final,
        snapshot_stride: cfg.snapshot_stride,
        mass_drift_abort: cfg.mass_drift_abort,
    };
    let out = self_consistent_simulate(&setup)?;
    write_diagnostics(out_dir, cfg, &out.rows, files)?;
    let snapshot_count = write_snapshots(out_dir, cfg, &out, files)?;

    let first = out.rows.first().expect("at least the initial row");
    let last = out.rows.last().expect("at least the initial row");
    let mass_drift = (last.mass - first.mass).abs() / first.mass.max(f64::MIN_POSITIVE);
    let mut summary = format!(
        "mode = {}\nsteps = {}\nmass_initial = {:.16e}\nmass_final = {:.16e}\nmass_rel_drift = {:.6e}\n",
        cfg.mode.name(),
        out.times.len() - 1,
        first.mass,
        last.mass,
        mass_drift
    );
    if out.wave_energy_available || first.total.is_finite() {
        let denom = first.total.abs().max(1.0);
        let _ = writeln!(
            summary,
            "total_energy_initial = {:.16e}\ntotal_energy_final = {:.16e}\nenergy_rel_drift = {:.6e}",
            first.total,
            last.total,
            (last.total - first.total).abs() / denom
        );
    }
    let _ = writeln!(summary, "negative_mass_peak = {:.6e}", out.negative_mass_peak);
    let _ = writeln!(summary, "snapshots = {snapshot_count}");
    for w in &out.warnings {
        let _ = writeln!(summary, "warning = {w}");
    }
    Ok(summary)
}

fn run_picard(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    check_config(cfg)?;
    if cfg.eps.is_some() {
        return Err(Error::InvalidParameter(
            "the fixed-point solver iterates the unscaled memory formulation; drop `system.eps`"
                .into(),
        ));
    }
    let m = materialize(cfg)?;
    let setup = SimulationSetup {
        f0: &m.setup_f0,
        sigma1: &m.sigma1,
        sigma2: &m.sigma2,
        wave: &m.wave,
        external: &m.external,
        coupling: crate::transport::CouplingMode::Memory,
        wave_speed: cfg.effective_speed(),
        dt: cfg.dt,
        t_final: cfg.t_final,
        snapshot_stride: cfg.snapshot_stride,
        mass_drift_abort: cfg.mass_drift_abort,
    };
    let report = picard_solve(&setup, cfg.picard_tol, cfg.picard_max_iter, cfg.picard_probes)?;

    let mut csv = String::from("iteration,gap,ratio\n");
    for (i, &g) in report.gaps.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            format!("{:.16e}", report.ratios[i - 1])
        };
        let _ = writeln!(csv, "{},{:.16e},{}", i + 1, g, ratio);
    }
    write_text(out_dir, "picard.csv", cfg, &csv, files)?;

    let header = SnapshotHeader {
        config_hash: crate::config::fnv1a_hash(&cfg.raw_text),
        dim_x: cfg.dim_x,
        dim_n: cfg.dim_n,
    };
    write_snapshot(&out_dir.join("final_state.bin"), &report.final_state, header)?;
    files.push("final_state.bin".into());

    let mut summary = format!(
        "mode = picard\nconverged = {}\ndiverged = {}\niterations = {}\nexistence_only = {}\n",
        report.converged, report.diverged, report.iterations, report.existence_only
    );
    match report.contraction_estimate {
        Some(c) => {
            let _ = writeln!(summary, "contraction_estimate = {c:.6e}");
        }
        None => {
            let _ = writeln!(summary, "contraction_estimate = overflow");
        }
    }
    if let Some(g) = report.gaps.last() {
        let _ = writeln!(summary, "final_gap = {g:.16e}");
    }
    Ok(summary)
}

fn run_sweep(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    check_config(cfg)?;
    let m = materialize(cfg)?;
    let metric = match cfg.sweep_metric.as_str() {
        "l1" => SweepMetric::DensityL1,
        _ => SweepMetric::SlicedW1,
    };
    let plan = EpsilonSweepPlan {
        eps_list: cfg.sweep_eps.clone(),
        t_star: cfg.t_final,
        dt: cfg.dt,
        f0: &m.setup_f0,
        sigma1: &m.sigma1,
        sigma2: &m.sigma2,
        wave: &m.wave,
        external: &m.external,
        metric,
    };
    let report = run_epsilon_sweep(&plan)?;
    write_text(out_dir, "sweep.csv", cfg, &report.csv(), files)?;

    let mut summary = format!(
        "mode = sweep\nkappa = {:.16e}\nmembers = {}\n",
        report.kappa,
        report.members.len()
    );
    for mem in &report.members {
        let _ = writeln!(
            summary,
            "distance[eps = {:.6e}] = {:.16e}",
            mem.eps, mem.distance
        );
    }
    match &report.rate {
        Some(fit) => {
            let _ = writeln!(summary, "rate_fit = {}", fit.to_text());
        }
        None => {
            let _ = writeln!(summary, "rate_fit = unavailable (zero distance)");
        }
    }

    // per-member wall clocks go to the non-deterministic side channel
    let mut timing = String::new();
    for mem in &report.members {
        let _ = writeln!(
            timing,
            "member_eps_{:e}_seconds = {:.3}",
            mem.eps, mem.runtime_seconds
        );
    }
    let _ = writeln!(
        timing,
        "limit_seconds = {:.3}",
        report.limit_runtime_seconds
    );
    std::fs::write(out_dir.join("sweep_timings.txt"), timing)?;
    Ok(summary)
}

fn run_vpkernel(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    let study = vp_kernel_rate_study(&cfg.vpkernel_eps, cfg.vpkernel_q)?;

    let mut csv = String::from("eps,gap_norm,inner_norm\n");
    for (i, &eps) in study.eps_list.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e}",
            eps, study.gap_norms[i], study.inner_norms[i]
        );
    }
    write_text(out_dir, "vpkernel.csv", cfg, &csv, files)?;

    Ok(format!(
        "mode = vpkernel\nq_exp = {}\ngap_fit = {}\ninner_fit = {}\ncontrol_gap = {:.16e}\nnormalization = {:.16e}\n",
        study.q_exp,
        study.gap_fit.to_text(),
        study.inner_fit.to_text(),
        study.control_gap,
        study.normalization
    ))
}

fn run_nparticle(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    check_config(cfg)?;
    let m = materialize(cfg)?;
    let setup = SimulationSetup {
        f0: &m.setup_f0,
        sigma1: &m.sigma1,
        sigma2: &m.sigma2,
        wave: &m.wave,
        external: &m.external,
        coupling: cfg.coupling()?,
        wave_speed: cfg.effective_speed(),
        dt: cfg.dt,
        t_final: cfg.t_final,
        snapshot_stride: cfg.snapshot_stride,
        mass_drift_abort: cfg.mass_drift_abort,
    };
    let out = nparticle_simulate(&setup, cfg.nparticle_count, cfg.seed)?;

    let mut csv = String::from("x,v\n");
    for (x, v) in out.xs.iter().zip(&out.vs) {
        let _ = writeln!(csv, "{x:.16e},{v:.16e}");
    }
    write_text(out_dir, "particles.csv", cfg, &csv, files)?;

    Ok(format!(
        "mode = nparticle\ncount = {}\nweight = {:.16e}\nseed = {}\nsteps = {}\n",
        out.xs.len(),
        out.weight,
        cfg.seed,
        out.times.len() - 1
    ))
}

fn run_validate(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<String> {
    let report = full_report(cfg)?;
    write_text(out_dir, "validation.txt", cfg, &report.to_text(), files)?;
    if let Some(bad) = report.first_violation() {
        return Err(Error::Hypothesis {
            tag: bad.tag,
            msg: format!("{} — {}", bad.statement, bad.detail),
        });
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    Ok(format!(
        "mode = validate\nchecks = {}\npassed = {}\nadvisory_failures = {}\n",
        report.checks.len(),
        passed,
        report.checks.len() - passed
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;
    use crate::snapshot::read_snapshot;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("vwlab_runner_{name}"));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn tiny_memory_config() -> &'static str {
        "run.mode = memory\n\
         transport.t_final = 0.1\n\
         transport.dt = 0.01\n\
         transport.snapshot_stride = 4\n\
         grid.x_points = 33\n\
         grid.v_points = 33\n\
         f0.bump1 = 0 0 1.0 1.0\n"
    }

    #[test]
    fn memory_run_writes_the_artifact_set_and_snapshot_count() {
        let cfg = parse_config_str(tiny_memory_config()).unwrap();
        let dir = tmp("memory");
        let artifacts = run(&cfg, &dir).unwrap();
        // ⌊T/(stride·dt)⌋ + 1 = ⌊0.1/0.04⌋ + 1 = 3
        let snaps: Vec<_> = artifacts
            .files
            .iter()
            .filter(|f| f.starts_with("snapshots/"))
            .collect();
        assert_eq!(snaps.len(), 3);
        for name in ["config.echo.txt", "diagnostics.csv", "summary.txt"] {
            assert!(artifacts.files.iter().any(|f| f == name), "missing {name}");
            let text = std::fs::read_to_string(dir.join(name)).unwrap();
            assert!(
                text.starts_with(&format!("# config {}", cfg.hash_hex())),
                "{name} lacks the config hash header"
            );
        }
        let (state, header) = read_snapshot(&dir.join("final_state.bin")).unwrap();
        assert_eq!(header.config_hash, crate::config::fnv1a_hash(&cfg.raw_text));
        assert!(state.mass() > 0.0);
        assert!(dir.join("timings.txt").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reruns_are_byte_identical_on_deterministic_files() {
        let cfg = parse_config_str(tiny_memory_config()).unwrap();
        let (d1, d2) = (tmp("det_a"), tmp("det_b"));
        let a1 = run(&cfg, &d1).unwrap();
        let a2 = run(&cfg, &d2).unwrap();
        assert_eq!(a1.files, a2.files);
        for f in &a1.files {
            let b1 = std::fs::read(d1.join(f)).unwrap();
            let b2 = std::fs::read(d2.join(f)).unwrap();
            assert_eq!(b1, b2, "file {f} differs between identical reruns");
        }
        std::fs::remove_dir_all(&d1).ok();
        std::fs::remove_dir_all(&d2).ok();
    }

    #[test]
    fn kernels_mode_reports_kappa_and_tail() {
        let cfg = parse_config_str(
            "run.mode = kernels\nkernels.t_max = 30.0\ntransport.dt = 0.05\n",
        )
        .unwrap();
        let dir = tmp("kernels");
        let artifacts = run(&cfg, &dir).unwrap();
        assert!(artifacts.summary.contains("kappa = "));
        assert!(artifacts.summary.contains("tail_K = "));
        let csv = std::fs::read_to_string(dir.join("kernel.csv")).unwrap();
        assert!(csv.lines().count() > 100);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn n2_kernels_mode_notes_the_divergence() {
        let cfg = parse_config_str(
            "run.mode = kernels\nsystem.n = 2\nkernels.t_max = 20.0\ntransport.dt = 0.05\n",
        )
        .unwrap();
        let dir = tmp("kernels_n2");
        let artifacts = run(&cfg, &dir).unwrap();
        assert!(artifacts.summary.contains("divergent"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn validate_mode_writes_the_report() {
        let cfg = parse_config_str("run.mode = validate\n").unwrap();
        let dir = tmp("validate");
        let artifacts = run(&cfg, &dir).unwrap();
        assert!(artifacts.summary.contains("passed"));
        let report = std::fs::read_to_string(dir.join("validation.txt")).unwrap();
        assert!(report.contains("H1"));
        assert!(report.contains("S3"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn hypothesis_violation_leaves_a_failure_record() {
        let cfg = parse_config_str(
            "run.mode = sweep\nexternal.kind = drift\nexternal.force = 1.0\n",
        )
        .unwrap();
        let dir = tmp("violation");
        let err = run(&cfg, &dir).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let record = std::fs::read_to_string(dir.join("failure.txt")).unwrap();
        assert!(record.contains("exit_code = 3"));
        assert!(record.contains("H7"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vpkernel_mode_reports_the_normalization() {
        let cfg = parse_config_str(
            "run.mode = vpkernel\nvpkernel.eps_list = 1.0 0.25\n",
        )
        .unwrap();
        let dir = tmp("vpkernel");
        let artifacts = run(&cfg, &dir).unwrap();
        assert!(artifacts.summary.contains("normalization"));
        let csv = std::fs::read_to_string(dir.join("vpkernel.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4); // hash + header + 2 scales
        std::fs::remove_dir_all(&dir).ok();
    }
}
