//! Physical configuration of the grating, the surrounding fiber, and the
//! input pulse.
//!
//! Units are fixed to {cm, ps, GW/cm^2}. The nonlinear coefficient then
//! carries cm^-1 per (GW/cm^2) so that `gamma * |U|^2` is a wavenumber,
//! matching the coupled-mode equations without any conversion factors.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Group velocity in silica fiber, cm/ps (c / 1.45).
pub const DEFAULT_GROUP_VELOCITY: f64 = 0.0207;

/// Half-width multiple of z0 beyond which the sech tail is treated as zero.
/// sech^2(10) ~ 8e-9, so the truncated tail carries ~2e-9 of the energy,
/// far below the 1e-6 conservation budget.
pub const PULSE_SUPPORT_FACTOR: f64 = 10.0;

/// Coupling phase per spatial step allowed by the resolution rule.
pub const KAPPA_RESOLUTION: f64 = 0.05;

/// Number of samples per intensity FWHM required by the resolution rule.
pub const FWHM_RESOLUTION_SAMPLES: f64 = 100.0;

/// Physical parameters of a uniform fiber Bragg grating with kappa = 0
/// buffers on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GratingConfig {
    /// Grating length, cm.
    pub grating_length: f64,
    /// Coupling coefficient, cm^-1.
    pub kappa: f64,
    /// Carrier detuning from the bandgap center, cm^-1.
    pub delta: f64,
    /// Self-phase-modulation coefficient inside the grating, cm^-1/(GW/cm^2).
    pub gamma: f64,
    /// Group velocity, cm/ps.
    pub v_g: f64,
    /// kappa = 0 buffer before the grating, cm.
    pub lead_in: f64,
    /// kappa = 0 buffer after the grating, cm.
    pub lead_out: f64,
    /// Nonlinear coefficient in the lead-in/lead-out buffers.
    pub gamma_outside: f64,
    /// Bragg wavelength, nm. Inert metadata: it never enters the dynamics.
    pub bragg_wavelength: Option<f64>,
}

impl GratingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grating_length > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "grating_length must be > 0, got {}",
                self.grating_length
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if !(self.v_g > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "v_g must be > 0, got {}",
                self.v_g
            )));
        }
        if !(self.lead_in >= 0.0) || !(self.lead_out >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "lead_in and lead_out must be >= 0, got {} and {}",
                self.lead_in, self.lead_out
            )));
        }
        for (name, v) in [
            ("grating_length", self.grating_length),
            ("kappa", self.kappa),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("v_g", self.v_g),
            ("lead_in", self.lead_in),
            ("lead_out", self.lead_out),
            ("gamma_outside", self.gamma_outside),
        ] {
            if !v.is_finite() {
                return Err(SimError::InvalidConfig(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Input sech pulse launched as an initial condition inside the lead-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    /// Intensity full-width-half-maximum, ps.
    pub fwhm: f64,
    /// Peak intensity, GW/cm^2.
    pub peak_intensity: f64,
    /// Initial pulse center, cm from the left domain edge.
    pub center: f64,
}

impl PulseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "fwhm must be > 0, got {}",
                self.fwhm
            )));
        }
        if !(self.peak_intensity >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "peak_intensity must be >= 0, got {}",
                self.peak_intensity
            )));
        }
        if !self.center.is_finite() {
            return Err(SimError::InvalidConfig("center is not finite".into()));
        }
        Ok(())
    }

    /// Sech width parameter z0 so the intensity FWHM in time is `fwhm`
    /// for a pulse traversing a fixed point at speed v_g.
    pub fn z0(&self, v_g: f64) -> f64 {
        let acosh_sqrt2 = (1.0 + 2.0_f64.sqrt()).ln();
        v_g * self.fwhm / (2.0 * acosh_sqrt2)
    }

    /// Intensity FWHM expressed as a length, cm.
    pub fn spatial_fwhm(&self, v_g: f64) -> f64 {
        v_g * self.fwhm
    }

    /// One-sided practical support half-width used for containment sizing.
    pub fn spatial_extent(&self, v_g: f64) -> f64 {
        PULSE_SUPPORT_FACTOR * self.z0(v_g)
    }
}
