//! Scratch profiler for kernel construction and conservation scans.

use std::time::Instant;
use vwlab::config::parse_config_str;
use vwlab::transport::{self_consistent_simulate, SimulationSetup};

fn main() {
    let run = |lines: &str| {
        let cfg = parse_config_str(lines).unwrap();
        let grid = cfg.build_phase_grid().unwrap();
        let f0 = cfg.build_f0(&grid);
        let sigma1 = cfg.build_sigma1().unwrap();
        let sigma2 = cfg.build_sigma2().unwrap();
        let wave = cfg.build_wave_data(grid.x).unwrap();
        let external = cfg.build_external();
        let setup = SimulationSetup {
            f0: &f0,
            sigma1: &sigma1,
            sigma2: &sigma2,
            wave: &wave,
            external: &external,
            coupling: cfg.coupling().unwrap(),
            wave_speed: cfg.effective_speed(),
            dt: cfg.dt,
            t_final: cfg.t_final,
            snapshot_stride: 0,
            mass_drift_abort: cfg.mass_drift_abort,
        };
        let clock = Instant::now();
        let out = self_consistent_simulate(&setup).unwrap();
        println!(
            "run [{}] grid {}x{} dt {} T {}: {:.1}s",
            lines.replace('\n', "; "),
            grid.x.len,
            grid.v.len,
            cfg.dt,
            cfg.t_final,
            clock.elapsed().as_secs_f64()
        );
        out
    };

    let out = run("run.mode = memory\ntransport.t_final = 2\n");
    let m0 = out.rows[0].mass;
    println!("mass profile (t, |m-m0|/m0, rate per unit t):");
    for row in &out.rows {
        let k = (row.t / 0.01).round() as usize;
        if [1, 2, 5, 10, 20, 50, 100, 150, 200].contains(&k) {
            let rel = (row.mass - m0).abs() / m0;
            println!("  t={:6.2}  rel={:9.3e}  rate={:9.3e}", row.t, rel, rel / row.t);
        }
    }

    for dt in ["0.01", "0.005"] {
        let out = run(&format!(
            "run.mode = direct-wave\ntransport.t_final = 2\ntransport.dt = {dt}\n"
        ));
        let e0 = out.rows[0].total;
        let e1 = out.rows.last().unwrap().total;
        println!(
            "direct-wave dt={dt}: E0={e0:.8}, E1={e1:.8}, rel drift={:.3e}",
            (e1 - e0).abs() / e0.abs()
        );
    }
}
