//! Binary field container.
//!
//! Layout: a magic line, a structured-text header of `key = value` lines
//! terminated by `end_header`, then little-endian f64 payload with re/im
//! interleaved per sample, u_a array first, u_b second, one block per
//! stored field pair.

use crate::error::{Result, SimError};
use crate::field::FieldPair;
use crate::grid::Grid;
use crate::stepper::RegionCoeffs;
use crate::trajectory::TrajectoryStore;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "BSQZ-FIELDS v1";

struct Header {
    map: BTreeMap<String, String>,
}

impl Header {
    fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        for (k, v) in &self.map {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "end_header")?;
        Ok(())
    }

    fn read_from(r: &mut impl std::io::BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(SimError::Format(format!(
                "bad magic line {:?}",
                line.trim_end()
            )));
        }
        let mut map = BTreeMap::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(SimError::Format("header not terminated".into()));
            }
            let t = line.trim_end();
            if t == "end_header" {
                break;
            }
            let (k, v) = t
                .split_once(" = ")
                .ok_or_else(|| SimError::Format(format!("bad header line {t:?}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Self { map })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| SimError::Format(format!("missing header key {key}")))
    }

    fn get_f64(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| SimError::Format(format!("bad f64 for {key}")))
    }

    fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| SimError::Format(format!("bad integer for {key}")))
    }
}

fn write_pair(w: &mut impl Write, f: &FieldPair) -> Result<()> {
    let mut buf = Vec::with_capacity(f.len() * 16);
    for arr in [&f.a, &f.b] {
        buf.clear();
        for c in arr {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_pair(r: &mut impl Read, n_z: usize) -> Result<FieldPair> {
    let mut f = FieldPair::zeros(n_z);
    let mut buf = vec![0u8; n_z * 16];
    for arr in [&mut f.a, &mut f.b] {
        r.read_exact(&mut buf)?;
        for (j, c) in arr.iter_mut().enumerate() {
            let re = f64::from_le_bytes(buf[16 * j..16 * j + 8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[16 * j + 8..16 * j + 16].try_into().unwrap());
            *c = Complex64::new(re, im);
        }
    }
    Ok(f)
}

fn grid_header(h: &mut Header, grid: &Grid, coeffs: &RegionCoeffs) {
    h.set("n_z", grid.n_z);
    h.set("dz", format!("{:.17e}", grid.dz));
    h.set("v_g", format!("{:.17e}", grid.v_g));
    h.set("n_t", grid.n_t);
    h.set("lead_cells", grid.lead_cells);
    h.set("grating_cells", grid.grating_cells);
    h.set("kappa", format!("{:.17e}", coeffs.kappa));
    h.set("delta", format!("{:.17e}", coeffs.delta));
    h.set("gamma", format!("{:.17e}", coeffs.gamma_grating));
    h.set("gamma_lead_in", format!("{:.17e}", coeffs.gamma_lead_in));
    h.set("gamma_lead_out", format!("{:.17e}", coeffs.gamma_lead_out));
}

fn grid_from_header(h: &Header) -> Result<(Grid, RegionCoeffs)> {
    let n_z = h.get_usize("n_z")?;
    let dz = h.get_f64("dz")?;
    let v_g = h.get_f64("v_g")?;
    let grid = Grid {
        dz,
        n_z,
        dt: dz / v_g,
        n_t: h.get_usize("n_t")?,
        v_g,
        lead_cells: h.get_usize("lead_cells")?,
        grating_cells: h.get_usize("grating_cells")?,
    };
    let coeffs = RegionCoeffs {
        kappa: h.get_f64("kappa")?,
        delta: h.get_f64("delta")?,
        gamma_grating: h.get_f64("gamma")?,
        gamma_lead_in: h.get_f64("gamma_lead_in")?,
        gamma_lead_out: h.get_f64("gamma_lead_out")?,
    };
    Ok((grid, coeffs))
}

/// Persist a single field pair.
pub fn save_field(path: &Path, f: &FieldPair, grid: &Grid, coeffs: &RegionCoeffs) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut h = Header::new();
    h.set("kind", "field");
    grid_header(&mut h, grid, coeffs);
    h.write_to(&mut w)?;
    write_pair(&mut w, f)?;
    w.flush()?;
    Ok(())
}

/// Load a single field pair with its grid and coefficients.
pub fn load_field(path: &Path) -> Result<(FieldPair, Grid, RegionCoeffs)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let h = Header::read_from(&mut r)?;
    if h.get("kind")? != "field" {
        return Err(SimError::Format("not a field container".into()));
    }
    let (grid, coeffs) = grid_from_header(&h)?;
    let f = read_pair(&mut r, grid.n_z)?;
    Ok((f, grid, coeffs))
}

/// Persist a trajectory: initial and final states plus all checkpoints.
/// Per-step traces are not stored; a loaded trajectory supports replay,
/// transmission, and back-propagation, but not trace classification.
pub fn save_trajectory(path: &Path, traj: &TrajectoryStore) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut h = Header::new();
    h.set("kind", "trajectory");
    grid_header(&mut h, &traj.grid, &traj.coeffs);
    h.set("stride", traj.stride);
    h.set("n_steps", traj.n_steps);
    h.set(
        "exit_step",
        traj.exit_step.map_or(-1i64, |s| s as i64),
    );
    h.set(
        "collector_plane",
        traj.collector_plane.map_or(-1i64, |s| s as i64),
    );
    h.set(
        "collected_reflection",
        format!("{:.17e}", traj.collected_reflection),
    );
    h.set("input_content", format!("{:.17e}", traj.input_content));
    let steps: Vec<String> = traj
        .checkpoints
        .iter()
        .map(|(s, _)| s.to_string())
        .collect();
    h.set("checkpoint_steps", steps.join(","));
    h.set(
        "outflow_len",
        traj.outflow.as_ref().map_or(-1i64, |r| r.len() as i64),
    );
    h.write_to(&mut w)?;

    write_pair(&mut w, &traj.initial)?;
    write_pair(&mut w, &traj.final_state)?;
    for (_, f) in &traj.checkpoints {
        write_pair(&mut w, f)?;
    }
    if let Some(rail) = &traj.outflow {
        let mut buf = Vec::with_capacity(rail.len() * 16);
        for c in rail {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a trajectory saved by [`save_trajectory`].
pub fn load_trajectory(path: &Path) -> Result<TrajectoryStore> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let h = Header::read_from(&mut r)?;
    if h.get("kind")? != "trajectory" {
        return Err(SimError::Format("not a trajectory container".into()));
    }
    let (grid, coeffs) = grid_from_header(&h)?;
    let stride = h.get_usize("stride")?;
    let n_steps = h.get_usize("n_steps")?;
    let exit_step = match h.get("exit_step")?.parse::<i64>() {
        Ok(v) if v >= 0 => Some(v as usize),
        Ok(_) => None,
        Err(_) => return Err(SimError::Format("bad exit_step".into())),
    };
    let collector_plane = match h.get("collector_plane")?.parse::<i64>() {
        Ok(v) if v >= 0 => Some(v as usize),
        Ok(_) => None,
        Err(_) => return Err(SimError::Format("bad collector_plane".into())),
    };
    let collected_reflection = h.get_f64("collected_reflection")?;
    let input_content = h.get_f64("input_content")?;
    let steps: Vec<usize> = {
        let raw = h.get("checkpoint_steps")?;
        if raw.is_empty() {
            Vec::new()
        } else {
            raw.split(',')
                .map(|s| {
                    s.parse()
                        .map_err(|_| SimError::Format("bad checkpoint step".into()))
                })
                .collect::<Result<_>>()?
        }
    };

    let outflow_len = h.get("outflow_len")?.parse::<i64>().unwrap_or(-1);

    let initial = read_pair(&mut r, grid.n_z)?;
    let final_state = read_pair(&mut r, grid.n_z)?;
    let mut checkpoints = Vec::with_capacity(steps.len());
    for s in steps {
        checkpoints.push((s, read_pair(&mut r, grid.n_z)?));
    }
    let outflow = if outflow_len >= 0 {
        let n = outflow_len as usize;
        let mut buf = vec![0u8; n * 16];
        r.read_exact(&mut buf)?;
        let mut rail = Vec::with_capacity(n);
        for j in 0..n {
            let re = f64::from_le_bytes(buf[16 * j..16 * j + 8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[16 * j + 8..16 * j + 16].try_into().unwrap());
            rail.push(num_complex::Complex64::new(re, im));
        }
        Some(rail)
    } else {
        None
    };

    Ok(TrajectoryStore {
        grid,
        coeffs,
        collector_plane,
        grating: None,
        pulse: None,
        initial,
        final_state,
        checkpoints,
        stride,
        n_steps,
        exit_step,
        peak_trace: Vec::new(),
        grating_trace: Vec::new(),
        total_trace: Vec::new(),
        collected_reflection,
        outflow,
        input_content,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GratingConfig, PulseConfig, DEFAULT_GROUP_VELOCITY};
    use crate::field::sech_pulse;
    use crate::grid::build_grid;
    use crate::linearized::{back_propagate, PerturbationField};
    use crate::measurement::photon_number_projection;
    use crate::trajectory::{evolve, EvolveOptions};

    #[test]
    fn field_round_trip_is_bit_exact() {
        let g = GratingConfig {
            grating_length: 2.0,
            kappa: 10.0,
            delta: 15.0,
            gamma: 0.03,
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
        let f = sech_pulse(&p, &g, &grid);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bsqz");
        save_field(&path, &f, &grid, &RegionCoeffs::from_config(&g)).unwrap();
        let (loaded, lgrid, _) = load_field(&path).unwrap();
        assert_eq!(lgrid.n_z, grid.n_z);
        assert_eq!(loaded.a, f.a);
        assert_eq!(loaded.b, f.b);
    }

    #[test]
    fn trajectory_round_trip_supports_back_propagation() {
        let g = GratingConfig {
            grating_length: 2.0,
            kappa: 10.0,
            delta: 15.0,
            gamma: 0.03,
            v_g: DEFAULT_GROUP_VELOCITY,
            lead_in: 15.0,
            lead_out: 18.0,
            gamma_outside: 0.0,
            bragg_wavelength: None,
        };
        let p = PulseConfig {
            fwhm: 60.0,
            peak_intensity: 4.0,
            center: 7.5,
        };
        let grid = build_grid(&g, &p, 1.0).unwrap();
        let init = sech_pulse(&p, &g, &grid);
        let traj = evolve(&init, &g, &grid, &EvolveOptions::default()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.bsqz");
        save_trajectory(&path, &traj).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        assert_eq!(loaded.n_steps, traj.n_steps);
        assert_eq!(loaded.final_state.a, traj.final_state.a);
        assert_eq!(loaded.checkpoints.len(), traj.checkpoints.len());

        let f = photon_number_projection(&traj, crate::grid::RegionSel::LeadOut).unwrap();
        let b1 = back_propagate(&f, &traj).unwrap();
        let b2 = back_propagate(&PerturbationField::from_pair(f.pair.clone()), &loaded).unwrap();
        assert_eq!(b1.pair.a, b2.pair.a);
        assert_eq!(b1.pair.b, b2.pair.b);
    }
}
