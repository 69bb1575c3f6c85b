//! Temporary bring-up probes. Run with:
//!   cargo test -p braggsqueeze-core --test probe -- --ignored --nocapture

use braggsqueeze_core::classify::{classify_peak_trace, ClassifierParams};
use braggsqueeze_core::experiments::*;
use braggsqueeze_core::field::sech_pulse;
use braggsqueeze_core::grid::{build_grid, RegionSel};
use braggsqueeze_core::measurement::measure_squeezing;
use braggsqueeze_core::trajectory::{evolve, EvolveOptions, StopRule};
use std::time::Instant;

#[test]
#[ignore = "bring-up probe"]
fn probe_classical_traces() {
    // Look at raw traces at a guess gamma over a few intensities.
    let gamma = 0.026;
    for intensity in [1.0, 3.0, 4.5, 6.0, 9.0] {
        let mut s = SetupParams::paper(50.0, gamma, intensity);
        s.sizing_slowdown = 2.2;
        let (g, p) = s.geometry(false);
        let grid = build_grid(&g, &p, 1.0).unwrap();
        let init = sech_pulse(&p, &g, &grid);
        let t0 = Instant::now();
        let opts = EvolveOptions {
            stop: StopRule::Classification,
            ..Default::default()
        };
        let traj = evolve(&init, &g, &grid, &opts).unwrap();
        let dt_run = t0.elapsed().as_secs_f64();
        let c = classify_peak_trace(&traj, &ClassifierParams::default());
        // effective slowdown: steps taken * dz / distance traveled estimate
        println!(
            "I={intensity:5.2} steps={} n_z={} {:.1}s class={:?} band={:.4} trend={:+.4} nmax={} window=({},{}) exit={:?}",
            traj.n_steps,
            grid.n_z,
            dt_run,
            c.class,
            c.band,
            c.trend,
            c.n_maxima,
            c.window.0,
            c.window.1,
            traj.exit_step,
        );
        // print a downsampled peak trace
        let n = traj.peak_trace.len();
        let mut line = String::new();
        for i in 0..40 {
            let k = i * n / 40;
            line.push_str(&format!("{:.2} ", traj.peak_trace[k]));
        }
        println!("  peak: {line}");
        let mut eline = String::new();
        for i in 0..40 {
            let k = i * n / 40;
            eline.push_str(&format!("{:.2} ", traj.grating_trace[k] / traj.input_content));
        }
        println!("  egr : {eline}");
    }
}

#[test]
#[ignore = "bring-up probe"]
fn probe_full_run_and_squeezing() {
    let gamma = 0.026;
    for intensity in [2.0, 4.5, 7.0] {
        let s = SetupParams::paper(50.0, gamma, intensity);
        let t0 = Instant::now();
        match run_trajectory(&s) {
            Ok(traj) => {
                let t_cl = t0.elapsed().as_secs_f64();
                let trans = traj.transmission().unwrap();
                let t1 = Instant::now();
                let m = measure_squeezing(&traj, RegionSel::LeadOut).unwrap();
                let t_q = t1.elapsed().as_secs_f64();
                let slowdown = traj.n_steps as f64 * traj.grid.dz
                    / (traj.grid.total_length() - 20.0);
                println!(
                    "I={intensity:4.1} T={:.4} R={:.4} refl={:.4} steps={} meas_times={} cl={:.1}s q={:.1}s slow~{:.2}",
                    trans.transmission,
                    m.final_result().ratio,
                    trans.reflection,
                    traj.n_steps,
                    m.at.len(),
                    t_cl,
                    t_q,
                    slowdown,
                );
                for r in &m.at {
                    println!("   t={:8.1} ps R={:.6}", r.measure_time, r.ratio);
                }
            }
            Err(e) => println!("I={intensity:4.1} FAILED: {e}"),
        }
    }
}

#[test]
#[ignore = "bring-up probe"]
fn probe_residual_decay() {
    let gamma = 0.026;
    for intensity in [2.0, 4.5] {
        let mut s = SetupParams::paper(50.0, gamma, intensity);
        s.sizing_slowdown = 3.4; // extra room to watch the residual decay
        let (g, p) = s.geometry(true);
        let grid = build_grid(&g, &p, 1.0).unwrap();
        let init = sech_pulse(&p, &g, &grid);
        let opts = EvolveOptions {
            stop: StopRule::FixedSteps(40_000),
            ..Default::default()
        };
        match evolve(&init, &g, &grid, &opts) {
            Ok(traj) => {
                println!("I={intensity} n_z={} steps={}", grid.n_z, traj.n_steps);
                let n = traj.grating_trace.len();
                for i in (0..n).step_by(n / 30) {
                    println!(
                        "  step {:6} egr={:.3e} peak={:.3e}",
                        i,
                        traj.grating_trace[i] / traj.input_content,
                        traj.peak_trace[i]
                    );
                }
            }
            Err(e) => println!("I={intensity} err {e}"),
        }
    }
}
