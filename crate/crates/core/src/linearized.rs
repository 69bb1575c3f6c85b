//! Linearized fluctuation and adjoint evolution around a stored classical
//! background.
//!
//! The fluctuation equations are integrated with the same split as the
//! classical stepper. At each phase sub-map the update is the exact tangent
//! of the classical per-site map: writing the background as A, B and the
//! perturbation as p, q, the tangent of `u -> exp(i phi(|u|^2)) u` is
//!
//!   p -> exp(i phi_a) (p + i A dphi_a),   dphi_a = g dz (ra + 2 rb)
//!   q -> exp(i phi_b) (q + i B dphi_b),   dphi_b = g dz (rb + 2 ra)
//!
//! with ra = Re(conj(A) p), rb = Re(conj(B) q). Expanding to first order in
//! dz reproduces the fluctuation equations: the diagonal picks up
//! i(delta + 2 g |A|^2 + 2 g |B|^2), the conjugate block i g A^2 and
//! 2 i g A B, and the cross block 2 i g A conj(B), with the kappa coupling
//! handled exactly by the rotation sub-map.
//!
//! The adjoint equations differ only by the sign of the conjugate block,
//! which at the discrete level is precisely the inverse-transpose of the
//! tangent map (the transpose taken in the real inner product below). The
//! pairing `<adjoint | linearized>` is therefore conserved to rounding, and
//! back-propagation is the plain transpose of the forward tangent flow.
//!
//! Because the conjugate couplings are linear over the reals but not
//! complex-analytic, each site is treated as the real 4-vector
//! (Re p, Im p, Re q, Im q); no redundant conjugate field is carried.

use crate::error::{Result, SimError};
use crate::field::FieldPair;
use crate::grid::Grid;
use crate::stepper::{ClassicalStepper, RegionCoeffs};
use crate::trajectory::{BackgroundCursor, TrajectoryStore};
use num_complex::Complex64;

/// c-number mode function or adjoint function on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationField {
    pub pair: FieldPair,
}

impl PerturbationField {
    pub fn zeros(n_z: usize) -> Self {
        Self {
            pair: FieldPair::zeros(n_z),
        }
    }

    pub fn from_pair(pair: FieldPair) -> Self {
        Self { pair }
    }

    pub fn len(&self) -> usize {
        self.pair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Real inner product of two mode functions:
/// integral of Re(conj(f_a) g_a + conj(f_b) g_b) dz by the trapezoid rule.
pub fn inner_product(f: &PerturbationField, g: &PerturbationField, grid: &Grid) -> Result<f64> {
    f.pair.check_len(grid)?;
    g.pair.check_len(grid)?;
    let n = grid.n_z;
    let mut sum = 0.0;
    for j in 0..n {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        let term = f.pair.a[j].conj() * g.pair.a[j] + f.pair.b[j].conj() * g.pair.b[j];
        sum += w * term.re;
    }
    Ok(sum * grid.dz)
}

#[inline(always)]
fn sincos_small(x: f64) -> (f64, f64) {
    if x.abs() < 0.05 {
        let x2 = x * x;
        let c = 1.0 - x2 * (0.5 - x2 * (1.0 / 24.0 - x2 * (1.0 / 720.0)));
        let s = x * (1.0 - x2 * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0))));
        (s, c)
    } else {
        x.sin_cos()
    }
}

#[derive(Debug, Clone, Copy)]
enum PhaseOp {
    /// Tangent of the classical phase map.
    Tangent,
    /// Inverse of the tangent.
    TangentInverse,
    /// Inverse-transpose of the tangent: the adjoint equations.
    Adjoint,
    /// Transpose of the tangent: one backward back-propagation sub-step.
    Transpose,
}

/// Steps perturbation fields around a classical background.
pub struct QuantumStepper {
    coeffs: RegionCoeffs,
    n_z: usize,
    grating_start: usize,
    grating_end: usize,
    dz: f64,
    couple_sin: f64,
    couple_cos: f64,
    delta_half: Complex64,
    collector_plane: Option<usize>,
}

impl QuantumStepper {
    pub fn new(coeffs: RegionCoeffs, grid: &Grid, collector_plane: Option<usize>) -> Self {
        let theta = coeffs.kappa * grid.dz / 4.0;
        let (couple_sin, couple_cos) = theta.sin_cos();
        let half = coeffs.delta * grid.dz / 2.0;
        Self {
            coeffs,
            n_z: grid.n_z,
            grating_start: grid.grating_start(),
            grating_end: grid.grating_end(),
            dz: grid.dz,
            couple_sin,
            couple_cos,
            delta_half: Complex64::new(half.cos(), half.sin()),
            collector_plane,
        }
    }

    pub fn for_trajectory(traj: &TrajectoryStore) -> Self {
        Self::new(traj.coeffs, &traj.grid, traj.collector_plane)
    }

    fn couple_quarter(&self, f: &mut FieldPair, backward: bool) {
        if self.coeffs.kappa == 0.0 {
            return;
        }
        let c = self.couple_cos;
        let s = if backward {
            -self.couple_sin
        } else {
            self.couple_sin
        };
        let range = self.grating_start..self.grating_end;
        for (a, b) in f.a[range.clone()].iter_mut().zip(f.b[range].iter_mut()) {
            let (va, vb) = (*a, *b);
            *a = Complex64::new(c * va.re - s * vb.im, c * va.im + s * vb.re);
            *b = Complex64::new(c * vb.re - s * va.im, c * vb.im + s * va.re);
        }
    }

    /// Forward: shift out and return the right-edge forward value.
    /// Backward: shift in `inject` at the right edge (the transpose of the
    /// outflow extraction).
    fn shift(&self, f: &mut FieldPair, backward: bool, inject: Complex64) -> Complex64 {
        let n = self.n_z;
        if backward {
            f.a.copy_within(1..n, 0);
            f.a[n - 1] = inject;
            f.b.copy_within(0..n - 1, 1);
            f.b[0] = Complex64::ZERO;
            Complex64::ZERO
        } else {
            let dropped = f.a[n - 1];
            f.a.copy_within(0..n - 1, 1);
            f.a[0] = Complex64::ZERO;
            f.b.copy_within(1..n, 0);
            f.b[n - 1] = Complex64::ZERO;
            dropped
        }
    }

    fn drop_collected(&self, f: &mut FieldPair) {
        if let Some(plane) = self.collector_plane {
            for b in &mut f.b[..plane] {
                *b = Complex64::ZERO;
            }
        }
    }

    fn phase_half(&self, p: &mut FieldPair, bg: &FieldPair, op: PhaseOp) {
        let g1 = self.grating_start;
        let g2 = self.grating_end;
        let n = self.n_z;
        let regions = [
            (0, g1, self.coeffs.gamma_lead_in),
            (g1, g2, self.coeffs.gamma_grating),
            (g2, n, self.coeffs.gamma_lead_out),
        ];
        for (lo, hi, gamma) in regions {
            if lo >= hi {
                continue;
            }
            if gamma == 0.0 {
                // Pure rotation; all four variants reduce to the (conjugated)
                // detuning factor.
                let cd = match op {
                    PhaseOp::Tangent | PhaseOp::Adjoint => self.delta_half,
                    PhaseOp::TangentInverse | PhaseOp::Transpose => self.delta_half.conj(),
                };
                for (a, b) in p.a[lo..hi].iter_mut().zip(p.b[lo..hi].iter_mut()) {
                    *a *= cd;
                    *b *= cd;
                }
                continue;
            }
            let c1 = gamma * self.dz / 2.0;
            let gg = gamma * self.dz;
            let cd = self.delta_half;
            let pa = &mut p.a[lo..hi];
            let pb = &mut p.b[lo..hi];
            let ba = &bg.a[lo..hi];
            let bb = &bg.b[lo..hi];
            match op {
                PhaseOp::Tangent => {
                    for i in 0..pa.len() {
                        let (va, vb) = (ba[i], bb[i]);
                        let (fa, fb) = phase_factors(va, vb, c1, cd);
                        let (pp, qq) = (pa[i], pb[i]);
                        let ra = va.re * pp.re + va.im * pp.im;
                        let rb = vb.re * qq.re + vb.im * qq.im;
                        let da = gg * (ra + 2.0 * rb);
                        let db = gg * (rb + 2.0 * ra);
                        pa[i] = fa * Complex64::new(pp.re - va.im * da, pp.im + va.re * da);
                        pb[i] = fb * Complex64::new(qq.re - vb.im * db, qq.im + vb.re * db);
                    }
                }
                PhaseOp::TangentInverse => {
                    for i in 0..pa.len() {
                        let (va, vb) = (ba[i], bb[i]);
                        let (fa, fb) = phase_factors(va, vb, c1, cd);
                        let pp = fa.conj() * pa[i];
                        let qq = fb.conj() * pb[i];
                        let ra = va.re * pp.re + va.im * pp.im;
                        let rb = vb.re * qq.re + vb.im * qq.im;
                        let da = gg * (ra + 2.0 * rb);
                        let db = gg * (rb + 2.0 * ra);
                        pa[i] = Complex64::new(pp.re + va.im * da, pp.im - va.re * da);
                        pb[i] = Complex64::new(qq.re + vb.im * db, qq.im - vb.re * db);
                    }
                }
                PhaseOp::Adjoint => {
                    for i in 0..pa.len() {
                        let (va, vb) = (ba[i], bb[i]);
                        let (fa, fb) = phase_factors(va, vb, c1, cd);
                        let (pp, qq) = (pa[i], pb[i]);
                        let sa = va.re * pp.im - va.im * pp.re;
                        let sb = vb.re * qq.im - vb.im * qq.re;
                        let da = gg * (sa + 2.0 * sb);
                        let db = gg * (2.0 * sa + sb);
                        pa[i] = fa * Complex64::new(pp.re - va.re * da, pp.im - va.im * da);
                        pb[i] = fb * Complex64::new(qq.re - vb.re * db, qq.im - vb.im * db);
                    }
                }
                PhaseOp::Transpose => {
                    for i in 0..pa.len() {
                        let (va, vb) = (ba[i], bb[i]);
                        let (fa, fb) = phase_factors(va, vb, c1, cd);
                        let pp = fa.conj() * pa[i];
                        let qq = fb.conj() * pb[i];
                        let sa = va.re * pp.im - va.im * pp.re;
                        let sb = vb.re * qq.im - vb.im * qq.re;
                        let da = gg * (sa + 2.0 * sb);
                        let db = gg * (2.0 * sa + sb);
                        pa[i] = Complex64::new(pp.re + va.re * da, pp.im + va.im * da);
                        pb[i] = Complex64::new(qq.re + vb.re * db, qq.im + vb.im * db);
                    }
                }
            }
        }
    }

    /// One forward step of the linearized fluctuation equations. Returns
    /// the right-edge outflow value, meaningful for outflow trajectories.
    /// `bg1`/`bg2` are the classical backgrounds at the two phase points.
    pub fn step_forward_linearized(
        &self,
        p: &mut FieldPair,
        bg1: &FieldPair,
        bg2: &FieldPair,
    ) -> Complex64 {
        self.couple_quarter(p, false);
        self.phase_half(p, bg1, PhaseOp::Tangent);
        self.couple_quarter(p, false);
        let dropped = self.shift(p, false, Complex64::ZERO);
        self.couple_quarter(p, false);
        self.phase_half(p, bg2, PhaseOp::Tangent);
        self.couple_quarter(p, false);
        self.drop_collected(p);
        dropped
    }

    /// Exact inverse of [`Self::step_forward_linearized`].
    pub fn step_backward_linearized(
        &self,
        p: &mut FieldPair,
        bg1: &FieldPair,
        bg2: &FieldPair,
    ) -> Result<()> {
        if self.collector_plane.is_some() {
            return Err(SimError::Unsupported(
                "the linearized step is not invertible across the reflection collector".into(),
            ));
        }
        self.couple_quarter(p, true);
        self.phase_half(p, bg2, PhaseOp::TangentInverse);
        self.couple_quarter(p, true);
        self.shift(p, true, Complex64::ZERO);
        self.couple_quarter(p, true);
        self.phase_half(p, bg1, PhaseOp::TangentInverse);
        self.couple_quarter(p, true);
        Ok(())
    }

    /// One forward step of the adjoint equations. Requires a collector-free
    /// trajectory: the collector projection has no forward adjoint.
    pub fn step_forward_adjoint(
        &self,
        p: &mut FieldPair,
        bg1: &FieldPair,
        bg2: &FieldPair,
    ) -> Result<()> {
        if self.collector_plane.is_some() {
            return Err(SimError::Unsupported(
                "forward adjoint evolution requires a collector-free trajectory".into(),
            ));
        }
        self.couple_quarter(p, false);
        self.phase_half(p, bg1, PhaseOp::Adjoint);
        self.couple_quarter(p, false);
        self.shift(p, false, Complex64::ZERO);
        self.couple_quarter(p, false);
        self.phase_half(p, bg2, PhaseOp::Adjoint);
        self.couple_quarter(p, false);
        Ok(())
    }

    /// One backward step of the adjoint solve: the transpose of the forward
    /// linearized step. Safe across the collector, whose dropped components
    /// have no influence on downstream measurements. `inject` carries the
    /// adjoint of an outflow value recorded during this forward step.
    pub fn step_backward_adjoint(
        &self,
        p: &mut FieldPair,
        bg1: &FieldPair,
        bg2: &FieldPair,
        inject: Complex64,
    ) {
        self.drop_collected(p);
        self.couple_quarter(p, true);
        self.phase_half(p, bg2, PhaseOp::Transpose);
        self.couple_quarter(p, true);
        self.shift(p, true, inject);
        self.couple_quarter(p, true);
        self.phase_half(p, bg1, PhaseOp::Transpose);
        self.couple_quarter(p, true);
    }
}

#[inline(always)]
fn phase_factors(va: Complex64, vb: Complex64, c1: f64, cd: Complex64) -> (Complex64, Complex64) {
    let na = va.norm_sqr();
    let nb = vb.norm_sqr();
    let (sa, ca) = sincos_small(c1 * (na + 2.0 * nb));
    let (sb, cb) = sincos_small(c1 * (nb + 2.0 * na));
    (cd * Complex64::new(ca, sa), cd * Complex64::new(cb, sb))
}

/// Advance the classical start-of-step background to the two phase points.
fn phase_point_backgrounds(
    background: &FieldPair,
    stepper: &ClassicalStepper,
) -> (FieldPair, FieldPair) {
    let mut state = background.clone();
    stepper.couple_quarter(&mut state, false);
    let bg1 = state.clone();
    stepper.phase_half(&mut state, false, None);
    stepper.couple_quarter(&mut state, false);
    stepper.shift(&mut state, false);
    stepper.couple_quarter(&mut state, false);
    (bg1, state)
}

/// One step of the linearized fluctuation equations against the classical
/// background sampled at the start of the step.
pub fn linearized_step(
    p: &mut PerturbationField,
    background: &FieldPair,
    coeffs: RegionCoeffs,
    grid: &Grid,
    direction: Direction,
) -> Result<()> {
    p.pair.check_len(grid)?;
    background.check_len(grid)?;
    let classical = ClassicalStepper::new(coeffs, grid, None);
    let qs = QuantumStepper::new(coeffs, grid, None);
    let (bg1, bg2) = phase_point_backgrounds(background, &classical);
    match direction {
        Direction::Forward => {
            qs.step_forward_linearized(&mut p.pair, &bg1, &bg2);
            Ok(())
        }
        Direction::Backward => qs.step_backward_linearized(&mut p.pair, &bg1, &bg2),
    }
}

/// Evolve a perturbation forward over an outflow trajectory, recording its
/// own right-edge outflow, and return it materialized on the extended grid
/// at `to_step`.
pub fn evolve_perturbation_extended(
    p0: &PerturbationField,
    traj: &TrajectoryStore,
    to_step: usize,
) -> Result<PerturbationField> {
    p0.pair.check_len(&traj.grid)?;
    if to_step > traj.n_steps {
        return Err(SimError::WindowExceeded {
            requested: to_step,
            available: traj.n_steps,
        });
    }
    let qs = QuantumStepper::for_trajectory(traj);
    let mut cursor = BackgroundCursor::new(traj);
    let mut p = p0.clone();
    let mut rail = Vec::with_capacity(to_step);
    for k in 0..to_step {
        let (bg1, bg2) = cursor.backgrounds(k)?;
        rail.push(qs.step_forward_linearized(&mut p.pair, bg1, bg2));
    }
    let n_z = traj.grid.n_z;
    let mut ext = PerturbationField::zeros(n_z + to_step);
    ext.pair.a[..n_z].copy_from_slice(&p.pair.a);
    ext.pair.b[..n_z].copy_from_slice(&p.pair.b);
    if traj.has_outflow() {
        let cd = traj.stepper().delta_half_factor();
        let cd2 = cd * cd;
        let mut phase = cd;
        for m in 0..to_step {
            ext.pair.a[n_z + m] = rail[to_step - 1 - m] * phase;
            phase *= cd2;
        }
    }
    Ok(ext)
}

/// One step of the adjoint equations against the classical background
/// sampled at the start of the step.
pub fn adjoint_step(
    p: &mut PerturbationField,
    background: &FieldPair,
    coeffs: RegionCoeffs,
    grid: &Grid,
    direction: Direction,
) -> Result<()> {
    p.pair.check_len(grid)?;
    background.check_len(grid)?;
    let classical = ClassicalStepper::new(coeffs, grid, None);
    let qs = QuantumStepper::new(coeffs, grid, None);
    let (bg1, bg2) = phase_point_backgrounds(background, &classical);
    match direction {
        Direction::Forward => qs.step_forward_adjoint(&mut p.pair, &bg1, &bg2),
        Direction::Backward => {
            qs.step_backward_adjoint(&mut p.pair, &bg1, &bg2, Complex64::ZERO);
            Ok(())
        }
    }
}

/// Solve the adjoint equations from `step` down to 0, replaying the stored
/// classical background window by window. The result is the back-propagated
/// projection function on the physical grid.
///
/// `f` may live on the physical grid or on the extended grid of an outflow
/// trajectory (physical length + `step` virtual lead-out cells). Virtual
/// samples re-enter the domain as right-edge injections at the step where
/// their forward counterpart was recorded, with the free-transport phases
/// transposed.
pub fn back_propagate_from(
    f: &PerturbationField,
    traj: &TrajectoryStore,
    step: usize,
) -> Result<PerturbationField> {
    if step > traj.n_steps {
        return Err(SimError::WindowExceeded {
            requested: step,
            available: traj.n_steps,
        });
    }
    let n_z = traj.grid.n_z;
    let extended = f.len() == n_z + step && traj.has_outflow() && step > 0;
    if !extended && f.len() != n_z {
        return Err(SimError::GridMismatch {
            expected: n_z,
            got: f.len(),
        });
    }

    let mut p = PerturbationField::zeros(n_z);
    p.pair.a.copy_from_slice(&f.pair.a[..n_z]);
    p.pair.b.copy_from_slice(&f.pair.b[..n_z]);

    // Injection schedule: the virtual sample at cell n_z + m was recorded at
    // forward step (step-1-m) with 2m+1 accumulated detuning half-phases.
    let mut inject = vec![Complex64::ZERO; step];
    if extended {
        let cd = traj.stepper().delta_half_factor();
        let cd2c = (cd * cd).conj();
        let mut phase = cd.conj();
        for m in 0..step {
            inject[step - 1 - m] = f.pair.a[n_z + m] * phase;
            phase *= cd2c;
        }
    }

    let qs = QuantumStepper::for_trajectory(traj);
    let mut cursor = BackgroundCursor::new(traj);
    for k in (0..step).rev() {
        let (bg1, bg2) = cursor.backgrounds(k)?;
        qs.step_backward_adjoint(&mut p.pair, bg1, bg2, inject[k]);
    }
    Ok(p)
}

/// Back-propagate from the final recorded time.
pub fn back_propagate(f: &PerturbationField, traj: &TrajectoryStore) -> Result<PerturbationField> {
    back_propagate_from(f, traj, traj.n_steps)
}

/// Which set of equations to evolve forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    Linearized,
    Adjoint,
}

/// Evolve a perturbation forward from step 0 to `to_step` over the stored
/// trajectory.
pub fn evolve_perturbation(
    p0: &PerturbationField,
    traj: &TrajectoryStore,
    kind: PerturbationKind,
    to_step: usize,
) -> Result<PerturbationField> {
    p0.pair.check_len(&traj.grid)?;
    if to_step > traj.n_steps {
        return Err(SimError::WindowExceeded {
            requested: to_step,
            available: traj.n_steps,
        });
    }
    let qs = QuantumStepper::for_trajectory(traj);
    let mut cursor = BackgroundCursor::new(traj);
    let mut p = p0.clone();
    for k in 0..to_step {
        let (bg1, bg2) = cursor.backgrounds(k)?;
        match kind {
            PerturbationKind::Linearized => qs.step_forward_linearized(&mut p.pair, bg1, bg2),
            PerturbationKind::Adjoint => qs.step_forward_adjoint(&mut p.pair, bg1, bg2)?,
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GratingConfig, PulseConfig, DEFAULT_GROUP_VELOCITY};
    use crate::field::{photon_content, sech_pulse};
    use crate::grid::{build_grid, RegionSel};
    use crate::trajectory::{evolve, EvolveOptions, StopRule};

    fn setup(kappa: f64, gamma: f64) -> (GratingConfig, PulseConfig, Grid) {
        let g = GratingConfig {
            grating_length: 2.0,
            kappa,
            delta: 15.0,
            gamma,
            v_g: DEFAULT_GROUP_VELOCITY,
            lead_in: 15.0,
            lead_out: 15.0,
            gamma_outside: 0.0,
            bragg_wavelength: None,
        };
        let p = PulseConfig {
            fwhm: 60.0,
            peak_intensity: 4.0,
            center: 7.5,
        };
        let grid = build_grid(&g, &p, 1.0).unwrap();
        (g, p, grid)
    }

    fn wave_pert(grid: &Grid, seed: u64) -> PerturbationField {
        // Smooth deterministic bumps; localized away from boundaries.
        let mut p = PerturbationField::zeros(grid.n_z);
        let total = grid.total_length();
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s as f64 / u64::MAX as f64) - 0.5
        };
        for _ in 0..6 {
            let zc = total * (0.3 + 0.4 * (next() + 0.5));
            let width = 0.4 + 0.5 * (next() + 0.5);
            let amp_a = Complex64::new(next(), next());
            let amp_b = Complex64::new(next(), next());
            let osc = 4.0 * next();
            for j in 0..grid.n_z {
                let x = (grid.z(j) - zc) / width;
                if x.abs() < 12.0 {
                    let env = (-x * x).exp();
                    let ph = Complex64::from_polar(1.0, osc * x);
                    p.pair.a[j] += amp_a * env * ph;
                    p.pair.b[j] += amp_b * env * ph;
                }
            }
        }
        p
    }

    fn background_traj(kappa: f64, gamma: f64, steps: usize) -> (Grid, crate::trajectory::TrajectoryStore) {
        let (g, p, grid) = setup(kappa, gamma);
        let init = sech_pulse(&p, &g, &grid);
        let opts = EvolveOptions {
            stop: StopRule::FixedSteps(steps),
            collector: crate::trajectory::CollectorMode::Off,
            ..Default::default()
        };
        let traj = evolve(&init, &g, &grid, &opts).unwrap();
        (grid, traj)
    }

    #[test]
    fn zero_perturbation_stays_zero() {
        let (grid, traj) = background_traj(10.0, 0.03, 40);
        let z = PerturbationField::zeros(grid.n_z);
        let out = evolve_perturbation(&z, &traj, PerturbationKind::Linearized, 40).unwrap();
        assert!(out.pair.a.iter().all(|c| c.norm_sqr() == 0.0));
        let out = evolve_perturbation(&z, &traj, PerturbationKind::Adjoint, 40).unwrap();
        assert!(out.pair.b.iter().all(|c| c.norm_sqr() == 0.0));
    }

    #[test]
    fn gamma_zero_linearized_matches_classical_step() {
        let (grid, traj) = background_traj(10.0, 0.0, 10);
        let p0 = wave_pert(&grid, 7);
        let evolved = evolve_perturbation(&p0, &traj, PerturbationKind::Linearized, 10).unwrap();

        // With gamma = 0 the perturbation obeys the classical equations.
        let stepper = traj.stepper();
        let mut direct = p0.pair.clone();
        for _ in 0..10 {
            stepper.step(&mut direct, None);
        }
        for j in 0..grid.n_z {
            assert!((evolved.pair.a[j] - direct.a[j]).norm() < 1e-13);
            assert!((evolved.pair.b[j] - direct.b[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn gamma_zero_adjoint_equals_linearized() {
        let (grid, traj) = background_traj(10.0, 0.0, 25);
        let p0 = wave_pert(&grid, 3);
        let a = evolve_perturbation(&p0, &traj, PerturbationKind::Linearized, 25).unwrap();
        let b = evolve_perturbation(&p0, &traj, PerturbationKind::Adjoint, 25).unwrap();
        assert_eq!(a.pair.a, b.pair.a);
        assert_eq!(a.pair.b, b.pair.b);
    }

    #[test]
    fn linearized_step_is_additive() {
        let (grid, traj) = background_traj(10.0, 0.05, 30);
        let p = wave_pert(&grid, 11);
        let q = wave_pert(&grid, 23);
        let mut sum = PerturbationField::zeros(grid.n_z);
        for j in 0..grid.n_z {
            sum.pair.a[j] = p.pair.a[j] + q.pair.a[j];
            sum.pair.b[j] = p.pair.b[j] + q.pair.b[j];
        }
        let ep = evolve_perturbation(&p, &traj, PerturbationKind::Linearized, 30).unwrap();
        let eq = evolve_perturbation(&q, &traj, PerturbationKind::Linearized, 30).unwrap();
        let esum = evolve_perturbation(&sum, &traj, PerturbationKind::Linearized, 30).unwrap();
        let scale = photon_content(&esum.pair, RegionSel::Whole, &grid).sqrt();
        for j in 0..grid.n_z {
            let da = esum.pair.a[j] - ep.pair.a[j] - eq.pair.a[j];
            let db = esum.pair.b[j] - ep.pair.b[j] - eq.pair.b[j];
            assert!(da.norm() < 1e-12 * scale.max(1.0));
            assert!(db.norm() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn backward_then_forward_is_identity() {
        let (grid, traj) = background_traj(10.0, 0.05, 5);
        let qs = QuantumStepper::for_trajectory(&traj);
        let mut cursor = BackgroundCursor::new(&traj);
        let p0 = wave_pert(&grid, 5);

        // Adjoint: forward after backward restores the input.
        let (bg1, bg2) = {
            let (b1, b2) = cursor.backgrounds(2).unwrap();
            (b1.clone(), b2.clone())
        };
        let mut p = p0.clone();
        qs.step_backward_adjoint(&mut p.pair, &bg1, &bg2, Complex64::ZERO);
        qs.step_forward_adjoint(&mut p.pair, &bg1, &bg2).unwrap();
        let norm = photon_content(&p0.pair, RegionSel::Whole, &grid).sqrt();
        for j in 0..grid.n_z {
            assert!((p.pair.a[j] - p0.pair.a[j]).norm() < 1e-12 * norm);
            assert!((p.pair.b[j] - p0.pair.b[j]).norm() < 1e-12 * norm);
        }

        // Linearized: backward after forward restores the input.
        let mut p = p0.clone();
        qs.step_forward_linearized(&mut p.pair, &bg1, &bg2);
        qs.step_backward_linearized(&mut p.pair, &bg1, &bg2).unwrap();
        for j in 0..grid.n_z {
            assert!((p.pair.a[j] - p0.pair.a[j]).norm() < 1e-12 * norm);
            assert!((p.pair.b[j] - p0.pair.b[j]).norm() < 1e-12 * norm);
        }
    }

    #[test]
    fn pairing_is_conserved_along_forward_evolution() {
        let steps = 400;
        let (grid, traj) = background_traj(10.0, 0.05, steps);
        let f0 = wave_pert(&grid, 31);
        let g0 = wave_pert(&grid, 57);
        let ip0 = inner_product(&f0, &g0, &grid).unwrap();
        let scale = (photon_content(&f0.pair, RegionSel::Whole, &grid)
            * photon_content(&g0.pair, RegionSel::Whole, &grid))
        .sqrt();

        let f = evolve_perturbation(&f0, &traj, PerturbationKind::Adjoint, steps).unwrap();
        let g = evolve_perturbation(&g0, &traj, PerturbationKind::Linearized, steps).unwrap();
        let ip1 = inner_product(&f, &g, &grid).unwrap();
        assert!(
            (ip1 - ip0).abs() < 1e-10 * scale,
            "pairing drifted: {ip0} -> {ip1}"
        );
    }

    #[test]
    fn back_propagation_matches_forward_pairing() {
        let steps = 300;
        let (grid, traj) = background_traj(10.0, 0.05, steps);
        let f_t = wave_pert(&grid, 41);
        let g0 = wave_pert(&grid, 43);

        let g_t = evolve_perturbation(&g0, &traj, PerturbationKind::Linearized, steps).unwrap();
        let f_0 = back_propagate_from(&f_t, &traj, steps).unwrap();

        let lhs = inner_product(&f_t, &g_t, &grid).unwrap();
        let rhs = inner_product(&f_0, &g0, &grid).unwrap();
        let scale = (photon_content(&f_t.pair, RegionSel::Whole, &grid)
            * photon_content(&g0.pair, RegionSel::Whole, &grid))
        .sqrt();
        assert!(
            (lhs - rhs).abs() < 1e-10 * scale,
            "pairing mismatch: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn free_transport_back_propagates_to_shifted_modulus() {
        // kappa = 0, gamma = 0, delta != 0: the backward solve is transport
        // plus phase unrotation, so moduli come back shifted exactly.
        let (mut g, p, _) = setup(0.0, 0.0);
        g.kappa = 0.0;
        g.gamma = 0.0;
        let grid = build_grid(&g, &p, 1.0).unwrap();
        let init = sech_pulse(&p, &g, &grid);
        let steps = 200;
        let opts = EvolveOptions {
            stop: StopRule::FixedSteps(steps),
            collector: crate::trajectory::CollectorMode::Off,
            ..Default::default()
        };
        let traj = evolve(&init, &g, &grid, &opts).unwrap();
        let f = wave_pert(&grid, 13);
        let back = back_propagate_from(&f, &traj, steps).unwrap();
        for j in 0..grid.n_z - steps {
            // Forward field at j propagated from j - steps; adjoint transpose
            // carries it back.
            let expect = f.pair.a[j + steps].norm();
            assert!((back.pair.a[j].norm() - expect).abs() < 1e-12);
        }
        for j in steps..grid.n_z {
            let expect = f.pair.b[j - steps].norm();
            assert!((back.pair.b[j].norm() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_zero_back_propagation_preserves_norm() {
        let steps = 350;
        let (grid, traj) = background_traj(10.0, 0.0, steps);
        let f = wave_pert(&grid, 19);
        let back = back_propagate_from(&f, &traj, steps).unwrap();
        let n0 = photon_content(&f.pair, RegionSel::Whole, &grid);
        let n1 = photon_content(&back.pair, RegionSel::Whole, &grid);
        assert!(((n1 - n0) / n0).abs() < 1e-10, "{n0} vs {n1}");
    }

    #[test]
    fn inner_product_basics() {
        let (g, p, grid) = setup(10.0, 0.0);
        let _ = (g, p);
        // Constant segment of 1 cm on the forward component.
        let mut f = PerturbationField::zeros(grid.n_z);
        let cells = (1.0 / grid.dz).round() as usize;
        let c = Complex64::new(0.7, -0.4);
        for j in 1000..1000 + cells {
            f.pair.a[j] = c;
        }
        let ip = inner_product(&f, &f, &grid).unwrap();
        let expect = c.norm_sqr() * 1.0;
        assert!((ip - expect).abs() < 1e-10);

        // <f | i f> = 0 for any f.
        let mut g_ = f.clone();
        for v in g_.pair.a.iter_mut().chain(g_.pair.b.iter_mut()) {
            *v *= Complex64::new(0.0, 1.0);
        }
        let ortho = inner_product(&f, &g_, &grid).unwrap();
        assert!(ortho.abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (_, _, grid) = setup(10.0, 0.0);
        let f = PerturbationField::zeros(grid.n_z);
        let g = PerturbationField::zeros(grid.n_z - 5);
        assert!(inner_product(&f, &g, &grid).is_err());
    }
}
