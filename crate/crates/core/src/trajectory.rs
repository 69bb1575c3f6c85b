//! Forward classical evolution with uniform-stride checkpointing.
//!
//! The backward adjoint solve needs the classical background at every step,
//! which would not fit in memory for a full run. Instead the forward pass
//! stores snapshots every K steps and the backward pass replays one K-step
//! window at a time, so dense storage is bounded by one window.

use crate::config::{GratingConfig, PulseConfig};
use crate::error::{Result, SimError};
use crate::field::{photon_content, FieldPair};
use crate::grid::{Grid, RegionSel};
use crate::stepper::{ClassicalStepper, RegionCoeffs, StepMonitor};
use num_complex::Complex64;

/// Relative in-grating energy below which the transmitted pulse counts as
/// fully exited.
pub const EXIT_RESIDUAL_FRAC: f64 = 1e-4;

/// Relative energy in a boundary guard band that trips the containment
/// check. The truncated sech tail alone sits near 1e-9, and the guard band
/// is read a safe distance before the boundary cells, so tripping at 1e-7
/// still happens before any energy is lost.
pub const GUARD_TOLERANCE: f64 = 1e-7;

/// In-grating energy fraction that marks the pulse as having entered.
const ENTRY_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run until the pulse has entered the grating and the in-grating
    /// residual has dropped below the fraction, then a short post-exit
    /// buffer for late measurement times.
    FullExit { residual_frac: f64 },
    /// Stop once the in-grating energy has peaked and clearly started to
    /// leave; enough history for the peak-trace classifier and much cheaper
    /// than waiting for full exit.
    Classification,
    /// Exactly this many steps (capped by the grid's step budget).
    FixedSteps(usize),
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::FullExit {
            residual_frac: EXIT_RESIDUAL_FRAC,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollectorMode {
    /// Drain the reflected field behind a plane in the lead-in whenever that
    /// is exact (no lead-in nonlinearity). Keeps the lead-in short.
    Auto,
    Off,
    /// Explicit plane sample index.
    At(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutflowMode {
    /// Record the forward field leaving the right edge whenever the lead-out
    /// is linear, turning the boundary into an exact semi-infinite lead-out.
    Auto,
    Off,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub stop: StopRule,
    pub collector: CollectorMode,
    pub outflow: OutflowMode,
    /// Checkpoint stride; `None` picks one from the memory budget.
    pub stride: Option<usize>,
    /// Budget for checkpoint + replay-window storage, MiB.
    pub mem_budget_mb: usize,
    /// Extra steps after exit detection; `None` uses one checkpoint stride.
    pub post_exit_steps: Option<usize>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            stop: StopRule::default(),
            collector: CollectorMode::Auto,
            outflow: OutflowMode::Auto,
            stride: None,
            mem_budget_mb: default_mem_budget_mb(),
            post_exit_steps: None,
        }
    }
}

/// Memory budget from `BRAGGSQUEEZE_MEM_BUDGET_MB`, default 1024.
pub fn default_mem_budget_mb() -> usize {
    std::env::var("BRAGGSQUEEZE_MEM_BUDGET_MB")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 64)
        .unwrap_or(1024)
}

/// Classical observables derived from a completed run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transmission {
    pub transmission: f64,
    pub reflection: f64,
    pub residual: f64,
}

/// Checkpointed record of one classical run.
#[derive(Debug, Clone)]
pub struct TrajectoryStore {
    pub grid: Grid,
    pub coeffs: RegionCoeffs,
    pub collector_plane: Option<usize>,
    pub grating: Option<GratingConfig>,
    pub pulse: Option<PulseConfig>,
    pub initial: FieldPair,
    pub final_state: FieldPair,
    /// (step, state at that step), ascending, starting with step 0.
    pub checkpoints: Vec<(usize, FieldPair)>,
    pub stride: usize,
    /// Steps actually taken; the final state lives at this step index.
    pub n_steps: usize,
    /// First step at which the exit criterion held, if it ever did.
    pub exit_step: Option<usize>,
    /// Per-step max of |u_a|^2 + |u_b|^2 over the grating.
    pub peak_trace: Vec<f64>,
    /// Per-step in-grating photon content.
    pub grating_trace: Vec<f64>,
    /// Per-step whole-domain photon content plus collected and outflow
    /// tallies.
    pub total_trace: Vec<f64>,
    /// Photon content drained by the reflection collector.
    pub collected_reflection: f64,
    /// Forward-field values recorded leaving the right edge, one per step.
    /// Entry n is the raw value displaced during step n; materializing the
    /// virtual lead-out applies the accumulated free-phase factors.
    pub outflow: Option<Vec<Complex64>>,
    pub input_content: f64,
}

impl TrajectoryStore {
    pub fn stepper(&self) -> ClassicalStepper {
        ClassicalStepper::new(self.coeffs, &self.grid, self.collector_plane)
    }

    /// Time in ps for a step index.
    pub fn time_of(&self, step: usize) -> f64 {
        step as f64 * self.grid.dt
    }

    pub fn has_outflow(&self) -> bool {
        self.outflow.is_some()
    }

    /// Grid extended by the virtual lead-out cells recorded up to `step`.
    pub fn extended_grid(&self, step: usize) -> Grid {
        let extra = if self.has_outflow() { step } else { 0 };
        Grid {
            n_z: self.grid.n_z + extra,
            ..self.grid.clone()
        }
    }

    /// Classical state at a recorded step (a checkpoint or the final step),
    /// materialized over the extended grid. In the linear lead-out a value
    /// recorded at the edge during step n has, by step `step`, advected
    /// m = step-1-n cells further and accumulated the free detuning phase
    /// of 2m+1 half-steps.
    pub fn extended_state_at(&self, step: usize) -> Result<(FieldPair, Grid)> {
        let physical = if step == self.n_steps {
            &self.final_state
        } else {
            let (s, f) = self.checkpoint_at_or_below(step);
            if *s != step {
                return Err(SimError::WindowExceeded {
                    requested: step,
                    available: self.n_steps,
                });
            }
            f
        };
        let grid = self.extended_grid(step);
        let mut ext = FieldPair::zeros(grid.n_z);
        ext.a[..self.grid.n_z].copy_from_slice(&physical.a);
        ext.b[..self.grid.n_z].copy_from_slice(&physical.b);
        if let Some(rail) = &self.outflow {
            let cd = self.stepper().delta_half_factor();
            let cd2 = cd * cd;
            let mut phase = cd;
            for m in 0..step {
                ext.a[self.grid.n_z + m] = rail[step - 1 - m] * phase;
                phase *= cd2;
            }
        }
        Ok((ext, grid))
    }

    /// Measurement times: every checkpoint taken after the transmitted pulse
    /// fully exited, plus the final step.
    pub fn measurement_steps(&self) -> Vec<usize> {
        let Some(exit) = self.exit_step else {
            return vec![self.n_steps];
        };
        let mut steps: Vec<usize> = self
            .checkpoints
            .iter()
            .map(|(s, _)| *s)
            .filter(|s| *s >= exit && *s < self.n_steps)
            .collect();
        steps.push(self.n_steps);
        steps
    }

    /// Classical transmission/reflection split of a contained run.
    pub fn transmission(&self) -> Result<Transmission> {
        let residual_content = photon_content(&self.final_state, RegionSel::Grating, &self.grid);
        let residual = residual_content / self.input_content;
        if self.exit_step.is_none() || residual >= EXIT_RESIDUAL_FRAC {
            return Err(SimError::ContainmentViolation {
                step: self.n_steps,
                detail: format!(
                    "in-grating residual is {residual:.3e} of the input (limit {EXIT_RESIDUAL_FRAC:.0e})"
                ),
            });
        }
        let (ext, grid) = self.extended_state_at(self.n_steps)?;
        let transmitted = photon_content(&ext, RegionSel::LeadOut, &grid);
        let reflected =
            photon_content(&ext, RegionSel::LeadIn, &grid) + self.collected_reflection;
        Ok(Transmission {
            transmission: transmitted / self.input_content,
            reflection: reflected / self.input_content,
            residual,
        })
    }

    /// Nearest checkpoint at or below `step`.
    pub(crate) fn checkpoint_at_or_below(&self, step: usize) -> &(usize, FieldPair) {
        let idx = match self.checkpoints.binary_search_by_key(&step, |(s, _)| *s) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        &self.checkpoints[idx]
    }
}

fn resolve_stride(grid: &Grid, opts: &EvolveOptions) -> usize {
    if let Some(k) = opts.stride {
        return k.max(1);
    }
    let state_bytes = 32 * grid.n_z;
    let balanced = ((grid.n_t as f64 / 2.0).sqrt().ceil() as usize).max(16);
    // The replay window holds two backgrounds per step.
    let window_budget = opts.mem_budget_mb.saturating_mul(1 << 20) * 2 / 5;
    let window_max = (window_budget / (2 * state_bytes)).max(16);
    balanced.min(window_max)
}

fn resolve_collector(coeffs: &RegionCoeffs, grid: &Grid, mode: CollectorMode) -> Option<usize> {
    match mode {
        CollectorMode::Off => None,
        CollectorMode::At(plane) => Some(plane.min(grid.grating_start())),
        CollectorMode::Auto => {
            // Dropping the outbound reflected field is exact only while the
            // lead-in is linear and decoupled.
            if coeffs.gamma_lead_in == 0.0 && grid.lead_cells > 32 {
                let plane = (grid.lead_cells / 8).max(16);
                Some(plane)
            } else {
                None
            }
        }
    }
}

/// Integrate the coupled-mode equations forward, recording checkpoints and
/// per-step traces.
pub fn evolve(
    init: &FieldPair,
    g: &GratingConfig,
    grid: &Grid,
    opts: &EvolveOptions,
) -> Result<TrajectoryStore> {
    let mut traj = evolve_with_coeffs(init, RegionCoeffs::from_config(g), grid, opts)?;
    traj.grating = Some(g.clone());
    Ok(traj)
}

/// Same as [`evolve`] but with explicit per-region coefficients.
pub fn evolve_with_coeffs(
    init: &FieldPair,
    coeffs: RegionCoeffs,
    grid: &Grid,
    opts: &EvolveOptions,
) -> Result<TrajectoryStore> {
    init.check_len(grid)?;
    if !init.is_finite() {
        return Err(SimError::NumericalFailure {
            step: 0,
            detail: "initial state contains non-finite values".into(),
        });
    }
    let input_content = photon_content(init, RegionSel::Whole, grid);
    if input_content <= 0.0 {
        return Err(SimError::InvalidConfig(
            "cannot evolve a zero input field".into(),
        ));
    }

    let stride = resolve_stride(grid, opts);
    let collector_plane = resolve_collector(&coeffs, grid, opts.collector);
    // The virtual lead-out extension is exact only while the field past the
    // right edge evolves by free transport and the global detuning phase.
    let outflow_on = opts.outflow == OutflowMode::Auto && coeffs.gamma_lead_out == 0.0;
    let stepper = ClassicalStepper::new(coeffs, grid, collector_plane);

    let mut state = init.clone();
    let mut checkpoints = vec![(0usize, init.clone())];
    let mut peak_trace = Vec::new();
    let mut grating_trace = Vec::new();
    let mut total_trace = Vec::new();
    let mut collected = 0.0;
    let mut rail: Vec<Complex64> = Vec::new();
    let mut rail_content = 0.0;

    let mut entered = false;
    let mut max_grating = 0.0f64;
    let mut exit_step: Option<usize> = None;
    let mut stop_after: Option<usize> = None;
    let post_exit = opts.post_exit_steps.unwrap_or(stride);

    let mut n_steps = 0usize;
    let mut mon = StepMonitor::default();
    for k in 0..grid.n_t {
        let out = stepper.step(&mut state, Some(&mut mon));
        collected += out.collected;
        if outflow_on {
            rail_content += out.dropped.norm_sqr() * grid.dz;
            rail.push(out.dropped);
        }
        stepper.check_finite(&mon, k)?;

        peak_trace.push(mon.peak_grating);
        grating_trace.push(mon.content_grating);
        total_trace.push(mon.total() + collected + rail_content);

        let done = k + 1;
        if done % stride == 0 {
            checkpoints.push((done, state.clone()));
        }
        n_steps = done;

        let guard_hit = mon.guard_lo > GUARD_TOLERANCE * input_content
            || (!outflow_on && mon.guard_hi > GUARD_TOLERANCE * input_content);
        let g_frac = mon.content_grating / input_content;
        if !entered && g_frac > ENTRY_THRESHOLD {
            entered = true;
        }
        max_grating = max_grating.max(mon.content_grating);

        match opts.stop {
            StopRule::FullExit { residual_frac } => {
                if guard_hit {
                    return Err(SimError::ContainmentViolation {
                        step: k,
                        detail: format!(
                            "boundary guard energy reached {:.3e} (lead) / {:.3e} (tail) of the input",
                            mon.guard_lo / input_content,
                            mon.guard_hi / input_content
                        ),
                    });
                }
                if entered && exit_step.is_none() && g_frac < residual_frac {
                    exit_step = Some(done);
                    stop_after = Some(done + post_exit);
                }
                if let Some(stop) = stop_after {
                    if done >= stop {
                        break;
                    }
                }
            }
            StopRule::Classification => {
                let leaving = entered && mon.content_grating < 0.6 * max_grating;
                let exiting = mon.content_lead_out > 0.25 * input_content;
                if leaving || exiting || guard_hit {
                    break;
                }
            }
            StopRule::FixedSteps(n) => {
                if guard_hit {
                    return Err(SimError::ContainmentViolation {
                        step: k,
                        detail: "boundary guard tripped during fixed-step run".into(),
                    });
                }
                if done >= n {
                    break;
                }
            }
        }
    }

    if checkpoints.last().map(|(s, _)| *s) != Some(n_steps) {
        checkpoints.push((n_steps, state.clone()));
    }

    Ok(TrajectoryStore {
        grid: grid.clone(),
        coeffs,
        collector_plane,
        grating: None,
        pulse: None,
        initial: init.clone(),
        final_state: state,
        checkpoints,
        stride,
        n_steps,
        exit_step,
        peak_trace,
        grating_trace,
        total_trace,
        collected_reflection: collected,
        outflow: outflow_on.then_some(rail),
        input_content,
    })
}

/// Replayed classical backgrounds for one checkpoint window.
///
/// For each step the tangent and adjoint maps need the background at the two
/// phase sub-points; both are captured while replaying the window forward
/// with the exact forward stepper, so the replay is bit-identical to the
/// original run.
pub struct BackgroundCursor<'t> {
    traj: &'t TrajectoryStore,
    stepper: ClassicalStepper,
    window_start: usize,
    phase1: Vec<FieldPair>,
    phase2: Vec<FieldPair>,
}

impl<'t> BackgroundCursor<'t> {
    pub fn new(traj: &'t TrajectoryStore) -> Self {
        Self {
            traj,
            stepper: traj.stepper(),
            window_start: usize::MAX,
            phase1: Vec::new(),
            phase2: Vec::new(),
        }
    }

    /// Backgrounds at the two phase points of `step`.
    pub fn backgrounds(&mut self, step: usize) -> Result<(&FieldPair, &FieldPair)> {
        if step >= self.traj.n_steps {
            return Err(SimError::WindowExceeded {
                requested: step,
                available: self.traj.n_steps.saturating_sub(1),
            });
        }
        let stride = self.traj.stride;
        let start = (step / stride) * stride;
        if self.window_start != start {
            self.load_window(start)?;
        }
        let off = step - self.window_start;
        Ok((&self.phase1[off], &self.phase2[off]))
    }

    fn load_window(&mut self, start: usize) -> Result<()> {
        let end = (start + self.traj.stride).min(self.traj.n_steps);
        let (ck_step, ck_state) = self.traj.checkpoint_at_or_below(start);
        let mut state = ck_state.clone();
        // Roll forward to the window start (only happens when a checkpoint
        // is missing, e.g. right after loading a persisted trajectory).
        for _ in *ck_step..start {
            self.stepper.step(&mut state, None);
        }
        self.phase1.clear();
        self.phase2.clear();
        for _ in start..end {
            // Mirror of ClassicalStepper::step with the two phase-point
            // states captured. Order of operations is identical.
            self.stepper.couple_quarter(&mut state, false);
            self.phase1.push(state.clone());
            self.stepper.phase_half(&mut state, false, None);
            self.stepper.couple_quarter(&mut state, false);
            self.stepper.shift(&mut state, false);
            self.stepper.couple_quarter(&mut state, false);
            self.phase2.push(state.clone());
            self.stepper.phase_half(&mut state, false, None);
            self.stepper.couple_quarter(&mut state, false);
            self.stepper.collect(&mut state);
        }
        self.window_start = start;
        Ok(())
    }
}
