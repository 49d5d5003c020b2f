use super::{HarnessError, MonteCarloReport, RunReport};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs::File;
use std::io::Write;
use std::path::Path;

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsRow {
    pub run: usize,
    pub seed: u64,
    pub metric: String,
    pub unit: String,
    pub value: f64,
}

fn ok_runs(mc: &MonteCarloReport) -> impl Iterator<Item = &RunReport> {
    mc.runs.iter().filter_map(|r| r.as_ref().ok())
}

/// `run,seed,metric,unit,value`, one row per run and metric. Failed runs get a
/// single `error` row with a `NaN` value.
pub fn write_runs_csv(path: &Path, mc: &MonteCarloReport) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, run) in mc.runs.iter().enumerate() {
        match run {
            Ok(r) => {
                for (metric, unit, value) in r.metrics() {
                    w.serialize(RunsRow {
                        run: r.run,
                        seed: r.seed,
                        metric: metric.to_string(),
                        unit: unit.to_string(),
                        value,
                    })?;
                }
            }
            Err(_) => w.serialize(RunsRow {
                run: i,
                seed: 0,
                metric: "error".into(),
                unit: "-".into(),
                value: f64::NAN,
            })?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunsRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_merged_map(path: &Path, mc: &MonteCarloReport) -> Result<(), HarnessError> {
    let runs: Vec<_> = ok_runs(mc)
        .map(|r| {
            let landmarks: Vec<_> = r
                .merged
                .map
                .components
                .iter()
                .map(|c| {
                    let cov: Vec<Vec<f64>> = c
                        .density
                        .cov
                        .row_iter()
                        .map(|row| row.iter().copied().collect())
                        .collect();
                    json!({ "r": c.r, "u": c.density.mean.as_slice(), "C": cov })
                })
                .collect();
            json!({
                "run": r.run,
                "landmarks": landmarks,
                "undetected_expected_count": r.merged.undetected.expected_count(40),
            })
        })
        .collect();
    let doc = json!({
        "units": {
            "r": "probability",
            "u": "m",
            "C": "m^2",
            "undetected_expected_count": "landmarks",
        },
        "runs": runs,
    });
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f)?;
    Ok(())
}

/// Merged trajectory mean and marginal standard deviation per step.
pub fn write_trajectory_csv(path: &Path, mc: &MonteCarloReport) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run", "step", "x_m", "x_std_m", "y_m", "y_std_m", "z_m", "z_std_m", "heading_rad",
        "heading_std_rad", "bias_m", "bias_std_m",
    ])?;
    for r in ok_runs(mc) {
        let mean = r.merged.trajectory();
        let std = r.merged.trajectory_std();
        for (k, (s, sd)) in mean.iter().zip(&std).enumerate() {
            let vals = [
                s.position.x,
                sd[0],
                s.position.y,
                sd[1],
                s.position.z,
                sd[2],
                s.heading,
                sd[3],
                s.clock_bias,
                sd[4],
            ];
            let mut rec = vec![r.run.to_string(), k.to_string()];
            rec.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-step RMSE over runs, and per-iteration mean GOSPA.
pub fn write_steps_csv(dir: &Path, mc: &MonteCarloReport) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(dir.join("steps.csv"))?;
    w.write_record(["step", "rmse_position_m", "rmse_heading_rad", "rmse_bias_m"])?;
    for (k, e) in mc.aggregate.rmse_per_step.iter().enumerate() {
        w.write_record([k.to_string(), e[0].to_string(), e[1].to_string(), e[2].to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("iterations.csv"))?;
    w.write_record(["iteration", "mean_gospa_m"])?;
    for (i, g) in mc.aggregate.gospa_per_iteration.iter().enumerate() {
        w.write_record([(i + 1).to_string(), g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every output file into `dir`.
pub fn write_outputs(dir: &Path, mc: &MonteCarloReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_runs_csv(&dir.join("runs.csv"), mc)?;
    write_merged_map(&dir.join("merged_map.json"), mc)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), mc)?;
    write_steps_csv(dir, mc)?;
    let errors: Vec<_> = mc
        .runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| json!({ "run": i, "error": e })))
        .collect();
    let wall: Vec<f64> = ok_runs(mc).map(|r| r.wall_clock_s).collect();
    let config = ok_runs(mc).next().map(|r| serde_json::to_value(&r.config)).transpose()?;
    let summary = json!({
        "aggregate": mc.aggregate,
        "errors": errors,
        "wall_clock_s": wall,
        "config": config,
    });
    let mut f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    Ok(())
}
