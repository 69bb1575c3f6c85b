//! Peak-intensity trace classification.
//!
//! Below the soliton threshold the in-grating peak intensity decays along
//! the propagation; above it the peak oscillates; at the threshold it stays
//! flat within a tolerance band once the entry transient is trimmed.

use crate::trajectory::TrajectoryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseClass {
    Decay,
    Flat,
    Oscillate,
}

impl std::fmt::Display for PulseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PulseClass::Decay => "decay",
            PulseClass::Flat => "flat",
            PulseClass::Oscillate => "oscillate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierParams {
    /// Relative band around the mean that counts as flat.
    pub flat_band: f64,
    /// Relative swing that counts as one oscillation reversal.
    pub reversal_amplitude: f64,
    /// Relative trend (last quarter vs first quarter) that counts as decay.
    pub decay_trend: f64,
    /// Fraction of the analysis window trimmed at the head (entry transient).
    pub trim_head: f64,
    /// Fraction trimmed at the tail (exit transient).
    pub trim_tail: f64,
    /// In-grating energy level (relative to its max) defining the window.
    pub window_level: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            flat_band: 0.02,
            reversal_amplitude: 0.02,
            decay_trend: 0.02,
            trim_head: 0.2,
            trim_tail: 0.1,
            window_level: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub class: PulseClass,
    /// max |P - mean| / mean over the analysis window.
    pub band: f64,
    /// (last-quarter mean - first-quarter mean) / window mean.
    pub trend: f64,
    /// Oscillation maxima counted by amplitude-filtered reversals.
    pub n_maxima: usize,
    /// Analysis window in step indices.
    pub window: (usize, usize),
}

/// Classify the in-grating peak-intensity trace of a completed run.
pub fn classify_peak_trace(traj: &TrajectoryStore, params: &ClassifierParams) -> Classification {
    classify_traces(&traj.peak_trace, &traj.grating_trace, params)
}

pub fn classify_traces(
    peak: &[f64],
    grating_energy: &[f64],
    params: &ClassifierParams,
) -> Classification {
    assert_eq!(peak.len(), grating_energy.len());
    let n = peak.len();

    // Analysis window: contiguous interval around the in-grating energy
    // maximum where the energy stays above window_level * max.
    let (kmax, &emax) = grating_energy
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &0.0));
    let level = params.window_level * emax;
    let mut lo = kmax;
    while lo > 0 && grating_energy[lo - 1] >= level {
        lo -= 1;
    }
    let mut hi = kmax;
    while hi + 1 < n && grating_energy[hi + 1] >= level {
        hi += 1;
    }
    let span = hi - lo + 1;
    let lo_t = lo + (span as f64 * params.trim_head) as usize;
    let hi_t = hi.saturating_sub((span as f64 * params.trim_tail) as usize);
    let (lo, hi) = if lo_t < hi_t { (lo_t, hi_t) } else { (lo, hi) };
    let window = &peak[lo..=hi];

    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let band = window
        .iter()
        .map(|p| (p - mean).abs())
        .fold(0.0f64, f64::max)
        / mean.max(f64::MIN_POSITIVE);

    let quarter = (window.len() / 4).max(1);
    let head_mean = window[..quarter].iter().sum::<f64>() / quarter as f64;
    let tail_mean = window[window.len() - quarter..].iter().sum::<f64>() / quarter as f64;
    let trend = (tail_mean - head_mean) / mean.max(f64::MIN_POSITIVE);

    let n_maxima = count_maxima(window, params.reversal_amplitude * mean);

    let class = if band <= params.flat_band {
        PulseClass::Flat
    } else if n_maxima >= 2 {
        PulseClass::Oscillate
    } else if trend <= -params.decay_trend && n_maxima == 0 {
        PulseClass::Decay
    } else if n_maxima >= 1 || trend >= params.decay_trend {
        // A single breath inside the window, or a rise toward the first one.
        PulseClass::Oscillate
    } else if trend < 0.0 {
        PulseClass::Decay
    } else {
        PulseClass::Flat
    };

    Classification {
        class,
        band,
        trend,
        n_maxima,
        window: (lo, hi),
    }
}

/// Count local maxima by direction reversals with a minimum amplitude.
fn count_maxima(p: &[f64], amplitude: f64) -> usize {
    let mut n_max = 0usize;
    let mut going_up: Option<bool> = None;
    let mut run_max = p[0];
    let mut run_min = p[0];
    let mut ext = p[0];
    for &v in &p[1..] {
        match going_up {
            None => {
                run_max = run_max.max(v);
                run_min = run_min.min(v);
                if run_max - v >= amplitude {
                    // Rose and already fell: the opening slope hid a maximum.
                    if run_max - run_min >= 2.0 * amplitude {
                        n_max += 1;
                    }
                    going_up = Some(false);
                    ext = v;
                } else if v - run_min >= amplitude {
                    going_up = Some(true);
                    ext = v;
                }
            }
            Some(true) => {
                if v > ext {
                    ext = v;
                } else if ext - v >= amplitude {
                    n_max += 1;
                    going_up = Some(false);
                    ext = v;
                }
            }
            Some(false) => {
                if v < ext {
                    ext = v;
                } else if v - ext >= amplitude {
                    going_up = Some(true);
                    ext = v;
                }
            }
        }
    }
    n_max
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(f: impl Fn(f64) -> f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let peak: Vec<f64> = (0..n).map(|k| f(k as f64 / n as f64)).collect();
        // Window covers the full trace.
        let energy = vec![1.0; n];
        (peak, energy)
    }

    #[test]
    fn flat_trace_is_flat() {
        let (p, e) = synth(|_| 5.0, 1000);
        let c = classify_traces(&p, &e, &ClassifierParams::default());
        assert_eq!(c.class, PulseClass::Flat);
        assert!(c.band < 1e-12);
    }

    #[test]
    fn small_ripple_is_still_flat() {
        let (p, e) = synth(|x| 5.0 * (1.0 + 0.01 * (40.0 * x).sin()), 2000);
        let c = classify_traces(&p, &e, &ClassifierParams::default());
        assert_eq!(c.class, PulseClass::Flat);
    }

    #[test]
    fn decaying_trace_is_decay() {
        let (p, e) = synth(|x| 5.0 * (-0.5 * x).exp(), 2000);
        let c = classify_traces(&p, &e, &ClassifierParams::default());
        assert_eq!(c.class, PulseClass::Decay);
        assert!(c.trend < 0.0);
    }

    #[test]
    fn oscillating_trace_is_oscillate() {
        let (p, e) = synth(|x| 5.0 * (1.0 + 0.2 * (25.0 * x).sin()), 2000);
        let c = classify_traces(&p, &e, &ClassifierParams::default());
        assert_eq!(c.class, PulseClass::Oscillate);
        assert!(c.n_maxima >= 2);
    }

    #[test]
    fn decay_with_tiny_ripple_is_decay() {
        let (p, e) = synth(|x| 5.0 * (-0.4 * x).exp() * (1.0 + 0.005 * (60.0 * x).sin()), 3000);
        let c = classify_traces(&p, &e, &ClassifierParams::default());
        assert_eq!(c.class, PulseClass::Decay);
    }
}
