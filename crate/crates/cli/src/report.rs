//! `report`: error statistics recomputed from the per-run traces.

use std::path::Path;

use mpslam::geometry::wrap_angle;
use mpslam::metrics::mean_over;

use crate::output::{read_csv, ModeTraceRow, TraceRow};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: usize,
    pub steps: usize,
    pub pos_rmse: Vec<f64>,
    pub orient_rmse_deg: Vec<f64>,
    /// Last step's averaged type belief per true feature.
    pub final_beliefs: Vec<ModeTraceRow>,
}

pub fn summarize(dir: &Path) -> Result<Summary, CliError> {
    let mut traces = Vec::new();
    loop {
        let path = dir.join(format!("trace_run{}.csv", traces.len()));
        if !path.exists() {
            break;
        }
        traces.push(read_csv::<TraceRow>(&path)?);
    }
    if traces.is_empty() {
        return Err(CliError::MissingInput(dir.join("trace_run0.csv")));
    }
    // Runs that stopped early only contribute to the steps they reached.
    let steps = traces.iter().map(Vec::len).max().unwrap_or(0);
    let mut pos_rmse = Vec::with_capacity(steps);
    let mut orient_rmse_deg = Vec::with_capacity(steps);
    for i in 0..steps {
        let rows: Vec<&TraceRow> = traces.iter().filter_map(|t| t.get(i)).collect();
        let k = rows.len() as f64;
        let p = rows
            .iter()
            .map(|r| (r.est_x - r.true_x).powi(2) + (r.est_y - r.true_y).powi(2))
            .sum::<f64>();
        let o = rows
            .iter()
            .map(|r| wrap_angle(r.est_orient_rad - r.true_orient_rad).powi(2))
            .sum::<f64>();
        pos_rmse.push((p / k).sqrt());
        orient_rmse_deg.push((o / k).sqrt().to_degrees());
    }
    let modes_path = dir.join("mode_trace.csv");
    let final_beliefs = if modes_path.exists() {
        let rows = read_csv::<ModeTraceRow>(&modes_path)?;
        let last = rows.iter().map(|r| r.step).max().unwrap_or(0);
        rows.into_iter().filter(|r| r.step == last).collect()
    } else {
        Vec::new()
    };
    Ok(Summary {
        runs: traces.len(),
        steps,
        pos_rmse,
        orient_rmse_deg,
        final_beliefs,
    })
}

pub fn report(dir: &Path) -> Result<(), CliError> {
    let s = summarize(dir)?;
    println!("runs {}  steps {}", s.runs, s.steps);
    let last = s.steps.saturating_sub(1);
    println!(
        "position RMSE: mean {:.4} m, second half {:.4} m, final {:.4} m",
        mean_over(&s.pos_rmse, 0, last),
        mean_over(&s.pos_rmse, s.steps / 2, last),
        s.pos_rmse.last().copied().unwrap_or(f64::NAN),
    );
    println!(
        "orientation RMSE: mean {:.3} deg, second half {:.3} deg, final {:.3} deg",
        mean_over(&s.orient_rmse_deg, 0, last),
        mean_over(&s.orient_rmse_deg, s.steps / 2, last),
        s.orient_rmse_deg.last().copied().unwrap_or(f64::NAN),
    );
    for b in &s.final_beliefs {
        let fmt = |p: Option<f64>| p.map_or("-".to_string(), |p| format!("{p:.3}"));
        println!(
            "feature {} ({} at {:.2}, {:.2}): p_va {} p_ps {}",
            b.true_feature,
            b.true_type,
            b.true_x,
            b.true_y,
            fmt(b.p_va),
            fmt(b.p_ps)
        );
    }
    Ok(())
}
