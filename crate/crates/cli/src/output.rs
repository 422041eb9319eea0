//! CSV and JSON outputs. Every file is written to a temporary sibling and
//! renamed into place, so readers never see partial files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mpslam::engine::Estimate;
use mpslam::{AgentState, Measurement};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub run: usize,
    pub est_x: f64,
    pub est_y: f64,
    pub est_vx: f64,
    pub est_vy: f64,
    pub est_orient_rad: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_orient_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub step: usize,
    pub run: usize,
    pub feat_id: u64,
    pub x: f64,
    pub y: f64,
    pub p_exist: f64,
    pub p_va: f64,
    pub p_ps: f64,
}

/// Feature position under each type hypothesis; empty where a hypothesis
/// has no particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapModeRow {
    pub step: usize,
    pub run: usize,
    pub feat_id: u64,
    pub va_x: Option<f64>,
    pub va_y: Option<f64>,
    pub ps_x: Option<f64>,
    pub ps_y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub step: usize,
    pub dist_m: f64,
    pub aod_rad: f64,
    pub aoa_rad: f64,
    pub amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub step: usize,
    pub pos_rmse_m: f64,
    pub orient_rmse_deg: f64,
}

/// Type belief of a true feature averaged over the runs in which it was
/// matched at that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTraceRow {
    pub step: usize,
    pub true_feature: usize,
    pub true_type: String,
    pub true_x: f64,
    pub true_y: f64,
    pub p_va: Option<f64>,
    pub p_ps: Option<f64>,
}

impl TraceRow {
    pub fn new(step: usize, run: usize, est: &Estimate, truth: &AgentState) -> Self {
        Self {
            step,
            run,
            est_x: est.agent.pos.x,
            est_y: est.agent.pos.y,
            est_vx: est.agent.vel.x,
            est_vy: est.agent.vel.y,
            est_orient_rad: est.orientation,
            true_x: truth.pos.x,
            true_y: truth.pos.y,
            true_orient_rad: truth.orientation().unwrap_or(f64::NAN),
        }
    }
}

pub fn map_rows(step: usize, run: usize, est: &Estimate) -> impl Iterator<Item = MapRow> + '_ {
    est.map.iter().map(move |f| MapRow {
        step,
        run,
        feat_id: f.id,
        x: f.pos.x,
        y: f.pos.y,
        p_exist: f.p_exist,
        p_va: f.type_pmf[0],
        p_ps: f.type_pmf[1],
    })
}

pub fn mode_rows(step: usize, run: usize, est: &Estimate) -> impl Iterator<Item = MapModeRow> + '_ {
    est.map.iter().map(move |f| MapModeRow {
        step,
        run,
        feat_id: f.id,
        va_x: f.mode_pos[0].map(|p| p.x),
        va_y: f.mode_pos[0].map(|p| p.y),
        ps_x: f.mode_pos[1].map(|p| p.x),
        ps_y: f.mode_pos[1].map(|p| p.y),
    })
}

pub fn measurement_rows(
    step: usize,
    z: &[Measurement],
) -> impl Iterator<Item = MeasurementRow> + '_ {
    z.iter().map(move |m| MeasurementRow {
        step,
        dist_m: m.dist,
        aod_rad: m.aod,
        aoa_rad: m.aoa,
        amp: m.amp,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_csv<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::MissingInput(path.to_path_buf())
        }
        _ => csv_err(path)(e),
    })?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

/// Groups measurement rows by step; steps without rows get empty scans.
pub fn group_measurements(
    rows: &[MeasurementRow],
    steps: usize,
    path: &Path,
) -> Result<Vec<Vec<Measurement>>, CliError> {
    let mut out = vec![Vec::new(); steps];
    for r in rows {
        let scan = out.get_mut(r.step).ok_or_else(|| CliError::Malformed {
            path: path.to_path_buf(),
            detail: format!(
                "step {} is past the trajectory end ({} steps)",
                r.step, steps
            ),
        })?;
        scan.push(Measurement {
            dist: r.dist_m,
            aod: r.aod_rad,
            aoa: r.aoa_rad,
            amp: r.amp,
        });
    }
    Ok(out)
}
