//! Sweep drivers and calibration routines.
//!
//! Geometry sizing: the lead-in only has to hold the input pulse when the
//! reflection collector is active (default), while the lead-out must hold
//! the transmitted pulse for the whole run, including the slowdown of the
//! in-grating transit relative to the leading radiation. Rows of a sweep
//! are fully independent simulations executed in a parallel map and
//! assembled by row index, so results are identical for any worker count.

use crate::classify::{classify_peak_trace, Classification, ClassifierParams, PulseClass};
use crate::config::{GratingConfig, PulseConfig, DEFAULT_GROUP_VELOCITY};
use crate::error::{Result, SimError};
use crate::field::sech_pulse;
use crate::grid::{build_grid, Grid, RegionSel};
use crate::measurement::{measure_squeezing, SqueezingMeasurement};
use crate::trajectory::{evolve, EvolveOptions, StopRule, Transmission, TrajectoryStore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One full simulation setup; geometry buffers are derived, not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupParams {
    pub kappa: f64,
    pub delta: f64,
    pub gamma: f64,
    pub gamma_outside: f64,
    pub grating_length: f64,
    pub fwhm: f64,
    pub peak_intensity: f64,
    pub v_g: f64,
    pub dz_safety: f64,
    /// Assumed worst-case in-grating slowdown used only to size the
    /// lead-out (and the lead-in when the collector is off).
    pub sizing_slowdown: f64,
    pub region: RegionSel,
    pub mem_budget_mb: usize,
}

impl SetupParams {
    /// Paper-style setup: kappa 10, delta 15, 60 ps sech pulse.
    pub fn paper(grating_length: f64, gamma: f64, peak_intensity: f64) -> Self {
        Self {
            kappa: 10.0,
            delta: 15.0,
            gamma,
            gamma_outside: 0.0,
            grating_length,
            fwhm: 60.0,
            peak_intensity,
            v_g: DEFAULT_GROUP_VELOCITY,
            dz_safety: 1.0,
            sizing_slowdown: 2.2,
            region: RegionSel::LeadOut,
            mem_budget_mb: crate::trajectory::default_mem_budget_mb(),
        }
    }

    /// Grating/pulse pair with derived buffer lengths.
    ///
    /// `full_exit` selects transmission-grade sizing; classification runs
    /// stop before the pulse leaves and get a minimal lead-out.
    pub fn geometry(&self, full_exit: bool) -> (GratingConfig, PulseConfig) {
        let pulse_probe = PulseConfig {
            fwhm: self.fwhm,
            peak_intensity: self.peak_intensity,
            center: 0.0,
        };
        let extent = pulse_probe.spatial_extent(self.v_g);
        let entry_margin = 3.0_f64.min(extent).max(0.5);
        let collector = self.gamma_outside == 0.0;
        let slow_len = (self.sizing_slowdown - 1.0).max(0.0) * self.grating_length;

        let lead_in = if collector {
            2.0 * extent + entry_margin + 0.5
        } else {
            // Reflected light travels back ~ (2 extent + slowdown * L) while
            // the slow transit completes; without the collector it must all
            // fit in the lead-in.
            2.0 * extent + self.sizing_slowdown * self.grating_length + entry_margin + 0.5
        };
        let center = lead_in - extent - entry_margin;
        let lead_out = if full_exit {
            2.0 * extent + slow_len + 2.0
        } else {
            2.0 * extent + 1.0
        };

        (
            GratingConfig {
                grating_length: self.grating_length,
                kappa: self.kappa,
                delta: self.delta,
                gamma: self.gamma,
                v_g: self.v_g,
                lead_in,
                lead_out,
                gamma_outside: self.gamma_outside,
                bragg_wavelength: None,
            },
            PulseConfig {
                fwhm: self.fwhm,
                peak_intensity: self.peak_intensity,
                center,
            },
        )
    }

    pub fn build(&self, full_exit: bool) -> Result<(GratingConfig, PulseConfig, Grid)> {
        let (g, p) = self.geometry(full_exit);
        let grid = build_grid(&g, &p, self.dz_safety)?;
        Ok((g, p, grid))
    }

    fn evolve_options(&self, stop: StopRule) -> EvolveOptions {
        EvolveOptions {
            stop,
            mem_budget_mb: self.mem_budget_mb,
            ..Default::default()
        }
    }
}

/// Classical + quantum result of one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub transmission: Transmission,
    pub squeezing: SqueezingMeasurement,
    pub grid: Grid,
}

/// Full transmission + squeezing run.
pub fn run_full(setup: &SetupParams) -> Result<RunRecord> {
    let traj = run_trajectory(setup)?;
    finish_run(setup, &traj)
}

/// Forward classical run with transmission-grade sizing.
pub fn run_trajectory(setup: &SetupParams) -> Result<TrajectoryStore> {
    let (g, p, grid) = setup.build(true)?;
    let init = sech_pulse(&p, &g, &grid);
    let opts = setup.evolve_options(StopRule::default());
    let mut traj = evolve(&init, &g, &grid, &opts)?;
    traj.pulse = Some(p);
    Ok(traj)
}

pub fn finish_run(setup: &SetupParams, traj: &TrajectoryStore) -> Result<RunRecord> {
    let transmission = traj.transmission()?;
    let squeezing = measure_squeezing(traj, setup.region)?;
    Ok(RunRecord {
        transmission,
        squeezing,
        grid: traj.grid.clone(),
    })
}

/// Classification run: no full exit, minimal lead-out.
pub fn classify_setup(setup: &SetupParams) -> Result<Classification> {
    let (g, p) = setup.geometry(false);
    let grid = build_grid(&g, &p, setup.dz_safety)?;
    let init = sech_pulse(&p, &g, &grid);
    let opts = setup.evolve_options(StopRule::Classification);
    let traj = evolve(&init, &g, &grid, &opts)?;
    Ok(classify_peak_trace(&traj, &ClassifierParams::default()))
}

#[derive(Debug, Clone)]
pub struct ThresholdSearch {
    pub intensity: f64,
    /// (intensity, class) pairs in evaluation order.
    pub evaluations: Vec<(f64, PulseClass)>,
}

/// Bisect the input intensity between the decay and oscillation regimes.
pub fn find_threshold_intensity(gamma: f64, base: &SetupParams) -> Result<ThresholdSearch> {
    let mut setup = base.clone();
    setup.gamma = gamma;
    let mut evals = Vec::new();
    let classify = |intensity: f64, evals: &mut Vec<(f64, PulseClass)>| -> Result<PulseClass> {
        let mut s = setup.clone();
        s.peak_intensity = intensity;
        let c = classify_setup(&s)?;
        evals.push((intensity, c.class));
        Ok(c.class)
    };

    let mut lo = 0.5;
    let mut hi = 16.0;
    let lo_class = classify(lo, &mut evals)?;
    if lo_class != PulseClass::Decay {
        return Err(SimError::BracketFailure(format!(
            "intensity {lo} already classifies as {lo_class}; scanned {evals:?}"
        )));
    }
    let hi_class = classify(hi, &mut evals)?;
    if hi_class != PulseClass::Oscillate {
        return Err(SimError::BracketFailure(format!(
            "intensity {hi} classifies as {hi_class}, not oscillate; scanned {evals:?}"
        )));
    }

    let mut flat_hit: Option<f64> = None;
    while (hi - lo) / (0.5 * (hi + lo)) > 0.01 {
        let mid = 0.5 * (lo + hi);
        match classify(mid, &mut evals)? {
            PulseClass::Decay => lo = mid,
            PulseClass::Flat => {
                flat_hit = Some(mid);
                break;
            }
            PulseClass::Oscillate => hi = mid,
        }
    }
    Ok(ThresholdSearch {
        intensity: flat_hit.unwrap_or(0.5 * (lo + hi)),
        evaluations: evals,
    })
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub gamma: f64,
    pub threshold: f64,
    /// (gamma, measured threshold) pairs in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Bisect gamma so the soliton threshold lands on `target` (within 2%).
///
/// The equations are invariant under I -> s I, gamma -> gamma / s, so the
/// threshold scales as 1/gamma; the first probe gives a near-exact estimate
/// and the bracket around it verifies monotonicity before the bisection.
pub fn calibrate_gamma(target: f64, base: &SetupParams) -> Result<Calibration> {
    let tol = 0.02 * target;
    let gamma0 = if base.gamma > 0.0 { base.gamma } else { 0.03 };
    let mut evals = Vec::new();

    let threshold_of = |gamma: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        let thr = find_threshold_intensity(gamma, base)?.intensity;
        evals.push((gamma, thr));
        Ok(thr)
    };

    let thr0 = threshold_of(gamma0, &mut evals)?;
    let estimate = gamma0 * thr0 / target;

    let mut lo = 0.8 * estimate;
    let mut hi = 1.25 * estimate;
    let thr_lo = threshold_of(lo, &mut evals)?;
    let thr_hi = threshold_of(hi, &mut evals)?;
    if !(thr_lo > thr_hi && thr_lo > target - tol && thr_hi < target + tol) {
        return Err(SimError::BracketFailure(format!(
            "threshold not monotone across gamma bracket [{lo}, {hi}]: \
             thr({lo}) = {thr_lo}, thr({hi}) = {thr_hi}, target {target}; scanned {evals:?}"
        )));
    }

    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        let thr = threshold_of(mid, &mut evals)?;
        if (thr - target).abs() <= tol {
            return Ok(Calibration {
                gamma: mid,
                threshold: thr,
                evaluations: evals,
            });
        }
        if thr > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SimError::BracketFailure(format!(
        "gamma bisection did not converge; scanned {evals:?}"
    )))
}

/// One row of a sweep table. The swept variable is repeated in `key`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: f64,
    pub kappa: f64,
    pub delta: f64,
    pub gamma: f64,
    pub length_cm: f64,
    pub fwhm_ps: f64,
    pub peak_gw_cm2: f64,
    pub dz_cm: f64,
    pub transmission: f64,
    pub reflection: f64,
    pub r_final: f64,
    pub r_min: f64,
    pub r_db_final: f64,
    pub r_db_min: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    /// Name of the swept variable (first CSV column).
    pub swept: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.status != "ok")
    }

    /// Flat CSV with 9 significant digits, bitwise reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{},kappa,delta,gamma,length_cm,fwhm_ps,peak_GW_cm2,dz_cm,transmission,reflection,R_final,R_min,R_db_final,R_db_min,status\n",
            self.swept
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                sig9(r.key),
                sig9(r.kappa),
                sig9(r.delta),
                sig9(r.gamma),
                sig9(r.length_cm),
                sig9(r.fwhm_ps),
                sig9(r.peak_gw_cm2),
                sig9(r.dz_cm),
                sig9(r.transmission),
                sig9(r.reflection),
                sig9(r.r_final),
                sig9(r.r_min),
                sig9(r.r_db_final),
                sig9(r.r_db_min),
                r.status
            ));
        }
        out
    }
}

/// 9 significant digits.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.8e}")
    }
}

fn sweep_row(setup: &SetupParams, key: f64) -> SweepRow {
    let (transmission, reflection, r_final, r_min, status) = match run_full(setup) {
        Ok(rec) => {
            let rf = rec.squeezing.final_result().ratio;
            let rm = rec.squeezing.optimal().ratio;
            (
                rec.transmission.transmission,
                rec.transmission.reflection,
                rf,
                rm,
                "ok".to_string(),
            )
        }
        Err(e) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, error_tag(&e)),
    };
    let dz = crate::grid::dz_bound(
        &setup.geometry(true).0,
        &setup.geometry(true).1,
    ) / setup.dz_safety;
    SweepRow {
        key,
        kappa: setup.kappa,
        delta: setup.delta,
        gamma: setup.gamma,
        length_cm: setup.grating_length,
        fwhm_ps: setup.fwhm,
        peak_gw_cm2: setup.peak_intensity,
        dz_cm: dz,
        transmission,
        reflection,
        r_final,
        r_min,
        r_db_final: 10.0 * r_final.log10(),
        r_db_min: 10.0 * r_min.log10(),
        status,
    }
}

fn error_tag(e: &SimError) -> String {
    match e {
        SimError::ContainmentViolation { .. } => "containment_violation".into(),
        SimError::NumericalFailure { step, .. } => format!("numerical_failure_step_{step}"),
        other => format!("error: {other}"),
    }
}

/// Default intensity grid, GW/cm^2.
pub fn default_intensity_grid() -> Vec<f64> {
    (1..=27).map(|i| i as f64 * 0.5).collect()
}

/// Default grating length grid, cm.
pub fn default_length_grid() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0]
}

/// One full run per input intensity at fixed grating length.
pub fn sweep_intensity(base: &SetupParams, intensities: &[f64]) -> SweepTable {
    let rows: Vec<SweepRow> = intensities
        .par_iter()
        .map(|&intensity| {
            let mut s = base.clone();
            s.peak_intensity = intensity;
            sweep_row(&s, intensity)
        })
        .collect();
    SweepTable {
        swept: "intensity_GW_cm2".into(),
        rows,
    }
}

/// One full run per grating length at fixed input intensity.
pub fn sweep_length(base: &SetupParams, lengths: &[f64]) -> SweepTable {
    let rows: Vec<SweepRow> = lengths
        .par_iter()
        .map(|&length| {
            let mut s = base.clone();
            s.grating_length = length;
            sweep_row(&s, length)
        })
        .collect();
    SweepTable {
        swept: "length_cm".into(),
        rows,
    }
}

/// Run a closure inside a dedicated rayon pool of `workers` threads.
pub fn run_with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dz: f64,
    pub transmission: f64,
    pub ratio: f64,
    /// Same setup with gamma = 0; pinned at 1 by unitarity.
    pub ratio_linear: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub order_transmission: f64,
    pub order_ratio: f64,
    /// Set when an observed order falls below 1.5.
    pub flagged: bool,
}

/// Halve dz `levels` times and report the observed convergence order of the
/// transmission and the squeezing ratio.
pub fn convergence_study(base: &SetupParams, levels: usize) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(SimError::InvalidConfig(
            "convergence study needs at least 3 refinement levels".into(),
        ));
    }
    let rows: Vec<ConvergenceRow> = (0..levels)
        .into_par_iter()
        .map(|lvl| -> Result<ConvergenceRow> {
            let mut s = base.clone();
            s.dz_safety = base.dz_safety * (1 << lvl) as f64;
            let rec = run_full(&s)?;
            let mut lin = s.clone();
            lin.gamma = 0.0;
            lin.gamma_outside = 0.0;
            let lin_rec = run_full(&lin)?;
            Ok(ConvergenceRow {
                dz: rec.grid.dz,
                transmission: rec.transmission.transmission,
                ratio: rec.squeezing.final_result().ratio,
                ratio_linear: lin_rec.squeezing.final_result().ratio,
            })
        })
        .collect::<Result<_>>()?;

    let order = |vals: &dyn Fn(&ConvergenceRow) -> f64| -> f64 {
        let d1 = (vals(&rows[levels - 3]) - vals(&rows[levels - 2])).abs();
        let d2 = (vals(&rows[levels - 2]) - vals(&rows[levels - 1])).abs();
        if d2 == 0.0 {
            f64::INFINITY
        } else {
            (d1 / d2).log2()
        }
    };
    let order_transmission = order(&|r| r.transmission);
    let order_ratio = order(&|r| r.ratio);
    Ok(ConvergenceReport {
        rows,
        flagged: order_transmission < 1.5 || order_ratio < 1.5,
        order_transmission,
        order_ratio,
    })
}
