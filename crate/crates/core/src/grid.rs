//! Characteristics-aligned space/time grid.
//!
//! The time step is locked to dz / v_g so that advection is an exact
//! one-cell shift per step. All solver phases are therefore expressed
//! through dz alone, which also makes results independent of v_g for a
//! spatially fixed pulse.

use crate::config::{GratingConfig, PulseConfig, FWHM_RESOLUTION_SAMPLES, KAPPA_RESOLUTION};
use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Worst-case in-grating group velocity reduction used to cap the run length.
pub const WORST_CASE_SLOWDOWN: f64 = 5.0;

/// Safety margin on the worst-case transit time.
pub const TRANSIT_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    LeadIn,
    Grating,
    LeadOut,
}

/// Region selector for integrals and projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionSel {
    LeadIn,
    Grating,
    LeadOut,
    Whole,
}

impl std::fmt::Display for RegionSel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegionSel::LeadIn => "lead-in",
            RegionSel::Grating => "grating",
            RegionSel::LeadOut => "lead-out",
            RegionSel::Whole => "whole",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Spatial step, cm.
    pub dz: f64,
    /// Number of spatial samples over lead-in + grating + lead-out.
    pub n_z: usize,
    /// Time step, ps; dt * v_g = dz by construction.
    pub dt: f64,
    /// Maximum number of time steps in the simulation window.
    pub n_t: usize,
    /// Group velocity the grid was built for, cm/ps.
    pub v_g: f64,
    /// Samples in the lead-in; the grating starts at index `lead_cells`.
    pub lead_cells: usize,
    /// Samples spanned by the grating.
    pub grating_cells: usize,
}

impl Grid {
    /// First grating sample.
    #[inline]
    pub fn grating_start(&self) -> usize {
        self.lead_cells
    }

    /// One past the last grating sample.
    #[inline]
    pub fn grating_end(&self) -> usize {
        self.lead_cells + self.grating_cells
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        j as f64 * self.dz
    }

    pub fn total_length(&self) -> f64 {
        (self.n_z - 1) as f64 * self.dz
    }

    /// Region label for one sample. Interfaces belong to the right region,
    /// so every sample has exactly one label.
    pub fn region_of(&self, j: usize) -> Region {
        if j < self.grating_start() {
            Region::LeadIn
        } else if j < self.grating_end() {
            Region::Grating
        } else {
            Region::LeadOut
        }
    }

    /// Sample range of a region selector, inclusive of the shared interface
    /// samples so that trapezoid integrals over the three regions add up to
    /// the whole-domain integral exactly.
    pub fn integration_range(&self, sel: RegionSel) -> (usize, usize) {
        match sel {
            RegionSel::LeadIn => (0, self.grating_start()),
            RegionSel::Grating => (self.grating_start(), self.grating_end()),
            RegionSel::LeadOut => (self.grating_end(), self.n_z - 1),
            RegionSel::Whole => (0, self.n_z - 1),
        }
    }
}

/// Largest dz allowed for the given configuration.
pub fn dz_bound(g: &GratingConfig, p: &PulseConfig) -> f64 {
    let fwhm_bound = p.spatial_fwhm(g.v_g) / FWHM_RESOLUTION_SAMPLES;
    if g.kappa > 0.0 {
        (KAPPA_RESOLUTION / g.kappa).min(fwhm_bound)
    } else {
        fwhm_bound
    }
}

/// Build the grid, snapping region lengths to whole cells and sizing the
/// step cap from the worst-case transit estimate.
pub fn build_grid(g: &GratingConfig, p: &PulseConfig, safety: f64) -> Result<Grid> {
    g.validate()?;
    p.validate()?;
    if !(safety >= 1.0) {
        return Err(SimError::InvalidConfig(format!(
            "resolution safety factor must be >= 1, got {safety}"
        )));
    }

    let extent = p.spatial_extent(g.v_g);
    if g.lead_in < 2.0 * extent - 1e-12 {
        return Err(SimError::InvalidConfig(format!(
            "lead_in = {} cm cannot contain the pulse: need >= 2 x spatial extent = {} cm",
            g.lead_in,
            2.0 * extent
        )));
    }
    if g.lead_out < 2.0 * extent - 1e-12 {
        return Err(SimError::InvalidConfig(format!(
            "lead_out = {} cm is below 2 x pulse spatial extent = {} cm",
            g.lead_out,
            2.0 * extent
        )));
    }
    if p.center - extent < -1e-12 || p.center + extent > g.lead_in + 1e-12 {
        return Err(SimError::InvalidConfig(format!(
            "pulse support [{}, {}] falls outside the lead-in [0, {}]",
            p.center - extent,
            p.center + extent,
            g.lead_in
        )));
    }

    let dz = dz_bound(g, p) / safety;
    finish_grid(g, dz)
}

/// Build a grid with an explicit dz. Rejects dz above the resolution bound.
pub fn build_grid_with_dz(g: &GratingConfig, p: &PulseConfig, dz: f64) -> Result<Grid> {
    let bound = dz_bound(g, p);
    if !(dz > 0.0) || dz > bound * (1.0 + 1e-12) {
        return Err(SimError::InvalidConfig(format!(
            "dz = {dz} violates the resolution bound {bound}"
        )));
    }
    let extent = p.spatial_extent(g.v_g);
    if g.lead_in < 2.0 * extent - 1e-12 || g.lead_out < 2.0 * extent - 1e-12 {
        return Err(SimError::InvalidConfig(
            "lead buffers below 2 x pulse spatial extent".into(),
        ));
    }
    finish_grid(g, dz)
}

fn finish_grid(g: &GratingConfig, dz: f64) -> Result<Grid> {
    let lead_cells = (g.lead_in / dz).round() as usize;
    let grating_cells = (g.grating_length / dz).round().max(1.0) as usize;
    let out_cells = (g.lead_out / dz).round() as usize;
    let n_z = lead_cells + grating_cells + out_cells + 1;
    if n_z < 8 {
        return Err(SimError::InvalidConfig(format!(
            "grid of {n_z} samples is too small"
        )));
    }

    // Worst-case transit time: buffers at v_g, grating slowed by
    // WORST_CASE_SLOWDOWN, everything doubled by the margin.
    let transit_cm =
        g.lead_in + g.lead_out + WORST_CASE_SLOWDOWN * g.grating_length;
    let n_t = (TRANSIT_MARGIN * transit_cm / dz).ceil() as usize;

    Ok(Grid {
        dz,
        n_z,
        dt: dz / g.v_g,
        n_t,
        v_g: g.v_g,
        lead_cells,
        grating_cells,
    })
}
