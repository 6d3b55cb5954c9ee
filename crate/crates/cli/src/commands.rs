//! The four commands. Every command computes all of its outputs before
//! writing any of them, and each file is written atomically.
//!
//! Output files, all inside the output directory:
//!
//! | command  | file                         | columns |
//! |----------|------------------------------|---------|
//! | tune     | `optimum_<variant>.cfg`      | TOML: `[controller]` plus `[audit]` |
//! | tune     | `trace_<variant>.csv`        | `iteration,best_fitness` |
//! | evaluate | `traj_<variant>_p<id>.csv`   | `t_min,bis,u_mg_per_min,ce_mg_per_l` |
//! | evaluate | `summary_<variant>.csv`      | `patient_id,settling_time_min,sse,iae,itae,cost` |
//! | compare  | `compare_summary.csv`        | `patient_id` then `<m>_a,<m>_b,<m>_delta` per metric |
//! | compare  | `compare_patient_<id>.csv`   | `series,variant,t_min,bis,u_mg_per_min,ce_mg_per_l` |
//!
//! Summaries end with a `mean` row. Deltas are `b - a`. An unsettled
//! response has settling time `NaN`, as does the mean if any patient is
//! unsettled. Metrics are computed from the series exactly as written, so
//! `replay` can regenerate them from the trajectory files alone.

use std::path::{Path, PathBuf};

use doa_core::control::{ControllerConfig, Variant};
use doa_core::pkpd::PatientProfile;
use doa_core::simloop::{compute_metrics, run_cohort, Metrics, Sample, SimConfig};
use doa_core::tune::{tune_controller, TuneRequest};
use doa_core::Error;

use crate::config::{ControllerFile, ExperimentConfig};
use crate::csv::{cost_triplet, decimal_add, fmt_sig, parse_number, quantize, write_atomic, Table};
use crate::error::{CliError, CliResult};
use crate::manifest::{Command, RunManifest};

pub const TRACE_HEADER: [&str; 2] = ["iteration", "best_fitness"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["t_min", "bis", "u_mg_per_min", "ce_mg_per_l"];
pub const SUMMARY_HEADER: [&str; 6] = ["patient_id", "settling_time_min", "sse", "iae", "itae", "cost"];
pub const COMPARE_PATIENT_HEADER: [&str; 6] = ["series", "variant", "t_min", "bis", "u_mg_per_min", "ce_mg_per_l"];
const METRIC_COLUMNS: [&str; 5] = ["settling_time_min", "sse", "iae", "itae", "cost"];

/// Relative tolerance used by `replay`.
pub const REPLAY_TOL: f64 = 1e-9;

pub fn compare_summary_header() -> Vec<String> {
    let mut h = vec!["patient_id".to_string()];
    for m in METRIC_COLUMNS {
        for suffix in ["a", "b", "delta"] {
            h.push(format!("{m}_{suffix}"));
        }
    }
    h
}

pub fn optimum_file(variant: Variant) -> String {
    format!("optimum_{variant}.cfg")
}

pub fn trace_file(variant: Variant) -> String {
    format!("trace_{variant}.csv")
}

pub fn trajectory_file(variant: Variant, patient: u32) -> String {
    format!("traj_{variant}_p{patient}.csv")
}

pub fn summary_file(variant: Variant) -> String {
    format!("summary_{variant}.csv")
}

pub fn compare_patient_file(patient: u32) -> String {
    format!("compare_patient_{patient}.csv")
}

pub const COMPARE_SUMMARY_FILE: &str = "compare_summary.csv";

/// Runs one manifest and returns the paths written (or verified, for replay).
pub fn run(manifest: &RunManifest) -> CliResult<Vec<PathBuf>> {
    manifest.validate()?;
    let exp = manifest.experiment()?;
    let outputs = match manifest.command {
        Command::Tune => cmd_tune(manifest, &exp)?,
        Command::Evaluate => cmd_evaluate(manifest, &exp)?,
        Command::Compare => cmd_compare(manifest, &exp)?,
        Command::Replay => return cmd_replay(manifest, &exp),
    };
    write_outputs(&manifest.output_dir, outputs)
}

type Outputs = Vec<(String, String)>;

fn write_outputs(dir: &Path, outputs: Outputs) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(outputs.len());
    for (name, contents) in outputs {
        let path = dir.join(name);
        write_atomic(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

fn core_error(context: &str, e: Error) -> CliError {
    match e {
        Error::NumericBlowup { .. } => CliError::Numeric(format!("{context}: {e}")),
        _ => CliError::Usage(format!("{context}: {e}")),
    }
}

fn cmd_tune(manifest: &RunManifest, exp: &ExperimentConfig) -> CliResult<Outputs> {
    let variant = manifest.variant.expect("validated");
    let patients = exp.patient_profiles();
    let outcome = tune_controller(&TuneRequest {
        variant,
        patients: &patients,
        sim: &exp.sim,
        woa: &exp.woa,
        bounds: &exp.bounds,
        rules: &exp.rules,
        settings: exp.loop_settings(),
    })
    .map_err(|e| core_error("tuning", e))?;

    // Surface a blow-up of the chosen controller with its patient and step.
    simulate_cohort(&outcome.config, &patients, &exp.sim)?;

    let mut trace = Table::new(&TRACE_HEADER);
    for (i, f) in outcome.audit.trace.iter().enumerate() {
        trace.push(vec![i.to_string(), fmt_sig(*f)]);
    }
    let file = ControllerFile {
        controller: outcome.config,
        audit: Some(outcome.audit),
    };
    Ok(vec![
        (optimum_file(variant), file.to_toml()?),
        (trace_file(variant), trace.render()),
    ])
}

/// One patient's run as it appears on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRun {
    pub patient_id: u32,
    pub series: Vec<Sample>,
    pub metrics: Metrics,
}

/// Simulates every patient, rounds each series to its CSV precision and
/// computes metrics from the rounded series.
pub fn simulate_cohort(cfg: &ControllerConfig, patients: &[PatientProfile], sim: &SimConfig) -> CliResult<Vec<PatientRun>> {
    let report = run_cohort(patients, cfg, sim).map_err(|e| core_error("simulation", e))?;
    let mut runs = Vec::with_capacity(patients.len());
    for outcome in report.outcomes {
        let context = format!("patient {}", outcome.patient_id);
        let r = outcome.result.map_err(|e| core_error(&context, e))?;
        let series: Vec<Sample> = r
            .series
            .iter()
            .map(|s| Sample {
                t: quantize(s.t),
                bis: quantize(s.bis),
                u: quantize(s.u),
                ce: quantize(s.ce),
            })
            .collect();
        let metrics = compute_metrics(&series, sim).map_err(|e| core_error(&context, e))?;
        runs.push(PatientRun {
            patient_id: outcome.patient_id,
            series,
            metrics,
        });
    }
    Ok(runs)
}

fn load_controller(path: &Path, exp: &ExperimentConfig, variant: Option<Variant>) -> CliResult<ControllerConfig> {
    let cfg = ControllerFile::load(path)?.controller;
    if let Some(v) = variant {
        if v != cfg.variant() {
            return Err(CliError::Usage(format!(
                "{} holds a {} controller, not {v}",
                path.display(),
                cfg.variant()
            )));
        }
    }
    if (cfg.settings.dt - exp.sim.dt).abs() > 1e-12 * exp.sim.dt {
        return Err(CliError::config(
            path,
            format!("controller dt {} differs from [sim] dt {}", cfg.settings.dt, exp.sim.dt),
        ));
    }
    Ok(cfg)
}

fn sample_cells(s: &Sample) -> [String; 4] {
    [fmt_sig(s.t), fmt_sig(s.bis), fmt_sig(s.u), fmt_sig(s.ce)]
}

fn settling_cell(ts: Option<f64>) -> String {
    ts.map(fmt_sig).unwrap_or_else(|| "NaN".into())
}

/// Metric cells in `METRIC_COLUMNS` order.
fn metric_cells(settling: Option<f64>, sse: f64, iae: f64, itae: f64) -> Vec<String> {
    let mut cells = vec![settling_cell(settling), fmt_sig(sse)];
    cells.extend(cost_triplet(iae, itae));
    cells
}

fn patient_cells(m: &Metrics) -> Vec<String> {
    metric_cells(m.settling_time, m.steady_state_error, m.iae, m.itae)
}

fn mean_cells(metrics: &[Metrics]) -> Vec<String> {
    let n = metrics.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    let settling = metrics
        .iter()
        .map(|m| m.settling_time)
        .sum::<Option<f64>>()
        .map(|s| s / n);
    metric_cells(settling, mean(|m| m.steady_state_error), mean(|m| m.iae), mean(|m| m.itae))
}

fn summary_table(runs: &[PatientRun]) -> Table {
    let mut t = Table::new(&SUMMARY_HEADER);
    for r in runs {
        let mut row = vec![r.patient_id.to_string()];
        row.extend(patient_cells(&r.metrics));
        t.push(row);
    }
    let mut row = vec!["mean".to_string()];
    row.extend(mean_cells(&runs.iter().map(|r| r.metrics).collect::<Vec<_>>()));
    t.push(row);
    t
}

fn cmd_evaluate(manifest: &RunManifest, exp: &ExperimentConfig) -> CliResult<Outputs> {
    let cfg = load_controller(&manifest.controllers[0], exp, manifest.variant)?;
    let variant = cfg.variant();
    let runs = simulate_cohort(&cfg, &exp.patient_profiles(), &exp.sim)?;

    let mut outputs = Vec::with_capacity(runs.len() + 1);
    for r in &runs {
        let mut t = Table::new(&TRAJECTORY_HEADER);
        for s in &r.series {
            t.push(sample_cells(s).to_vec());
        }
        outputs.push((trajectory_file(variant, r.patient_id), t.render()));
    }
    outputs.push((summary_file(variant), summary_table(&runs).render()));
    Ok(outputs)
}

/// Exact decimal `b - a`, or `NaN` if either side is missing.
fn decimal_delta(a: &str, b: &str) -> String {
    let neg_a = match a.strip_prefix('-') {
        Some(rest) => rest.to_string(),
        None if a == "0" => a.to_string(),
        None => format!("-{a}"),
    };
    decimal_add(b, &neg_a).unwrap_or_else(|| "NaN".into())
}

fn compare_row(id: String, a: &[String], b: &[String]) -> Vec<String> {
    let mut row = vec![id];
    for (x, y) in a.iter().zip(b) {
        row.push(x.clone());
        row.push(y.clone());
        row.push(decimal_delta(x, y));
    }
    row
}

fn cmd_compare(manifest: &RunManifest, exp: &ExperimentConfig) -> CliResult<Outputs> {
    let cfg_a = load_controller(&manifest.controllers[0], exp, None)?;
    let cfg_b = load_controller(&manifest.controllers[1], exp, None)?;
    let patients = exp.patient_profiles();
    let runs_a = simulate_cohort(&cfg_a, &patients, &exp.sim)?;
    let runs_b = simulate_cohort(&cfg_b, &patients, &exp.sim)?;

    let header = compare_summary_header();
    let mut summary = Table {
        header,
        rows: Vec::new(),
    };
    let mut outputs = Vec::with_capacity(patients.len() + 1);
    for (ra, rb) in runs_a.iter().zip(&runs_b) {
        summary.push(compare_row(
            ra.patient_id.to_string(),
            &patient_cells(&ra.metrics),
            &patient_cells(&rb.metrics),
        ));
        let mut t = Table::new(&COMPARE_PATIENT_HEADER);
        for (label, cfg, run) in [("a", &cfg_a, ra), ("b", &cfg_b, rb)] {
            for s in &run.series {
                let mut row = vec![label.to_string(), cfg.variant().to_string()];
                row.extend(sample_cells(s));
                t.push(row);
            }
        }
        outputs.push((compare_patient_file(ra.patient_id), t.render()));
    }
    let metrics = |runs: &[PatientRun]| runs.iter().map(|r| r.metrics).collect::<Vec<_>>();
    summary.push(compare_row(
        "mean".into(),
        &mean_cells(&metrics(&runs_a)),
        &mean_cells(&metrics(&runs_b)),
    ));
    outputs.push((COMPARE_SUMMARY_FILE.to_string(), summary.render()));
    Ok(outputs)
}

fn parse_series(table: &Table, rows: &[&Vec<String>], origin: &Path) -> CliResult<Vec<Sample>> {
    let cols = [
        table.column("t_min", origin)?,
        table.column("bis", origin)?,
        table.column("u_mg_per_min", origin)?,
        table.column("ce_mg_per_l", origin)?,
    ];
    rows.iter()
        .map(|row| {
            Ok(Sample {
                t: parse_number(&row[cols[0]], origin)?,
                bis: parse_number(&row[cols[1]], origin)?,
                u: parse_number(&row[cols[2]], origin)?,
                ce: parse_number(&row[cols[3]], origin)?,
            })
        })
        .collect()
}

fn series_metrics(series: &[Sample], sim: &SimConfig, origin: &Path) -> CliResult<Metrics> {
    compute_metrics(series, sim).map_err(|e| CliError::config(origin, e))
}

fn cells_agree(found: &str, expected: &str) -> bool {
    if found == expected {
        return true;
    }
    match (found.parse::<f64>(), expected.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_nan() && y.is_nan() => true,
        (Ok(x), Ok(y)) => (x - y).abs() <= REPLAY_TOL * x.abs().max(y.abs()).max(1.0),
        _ => false,
    }
}

fn check_row(origin: &Path, row_id: &str, columns: &[String], found: &[String], expected: &[String]) -> CliResult<()> {
    for ((name, f), e) in columns.iter().zip(found).zip(expected) {
        if !cells_agree(f, e) {
            return Err(CliError::Numeric(format!(
                "{}: row {row_id} column {name}: file has {f}, trajectories give {e}",
                origin.display()
            )));
        }
    }
    Ok(())
}

fn check_triplet(origin: &Path, row_id: &str, iae: &str, itae: &str, cost: &str) -> CliResult<()> {
    if decimal_add(iae, itae).as_deref() == Some(cost) {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "{}: row {row_id}: cost {cost} is not iae {iae} + itae {itae}",
            origin.display()
        )))
    }
}

fn replay_summary(dir: &Path, path: &Path, variant: Variant, sim: &SimConfig) -> CliResult<()> {
    let table = Table::load(path)?;
    table.expect_header(&SUMMARY_HEADER, path)?;
    let mut all = Vec::new();
    for row in &table.rows {
        check_triplet(path, &row[0], &row[3], &row[4], &row[5])?;
        if row[0] == "mean" {
            continue;
        }
        let id: u32 = row[0]
            .parse()
            .map_err(|_| CliError::config(path, format!("bad patient id '{}'", row[0])))?;
        let traj_path = dir.join(trajectory_file(variant, id));
        let traj = Table::load(&traj_path)?;
        traj.expect_header(&TRAJECTORY_HEADER, &traj_path)?;
        let series = parse_series(&traj, &traj.rows.iter().collect::<Vec<_>>(), &traj_path)?;
        let m = series_metrics(&series, sim, &traj_path)?;
        check_row(path, &row[0], &table.header[1..], &row[1..], &patient_cells(&m))?;
        all.push(m);
    }
    match table.rows.last() {
        Some(row) if row[0] == "mean" && !all.is_empty() => {
            check_row(path, "mean", &table.header[1..], &row[1..], &mean_cells(&all))
        }
        _ => Err(CliError::config(path, "summary must end with a mean row")),
    }
}

fn replay_compare(dir: &Path, path: &Path, sim: &SimConfig) -> CliResult<()> {
    let table = Table::load(path)?;
    let header = compare_summary_header();
    table.expect_header(&header.iter().map(String::as_str).collect::<Vec<_>>(), path)?;
    let (mut all_a, mut all_b) = (Vec::new(), Vec::new());
    for row in &table.rows {
        for k in 0..3 {
            let col = |m: usize| &row[1 + 3 * m + k];
            check_triplet(path, &row[0], col(2), col(3), col(4))?;
        }
        if row[0] == "mean" {
            continue;
        }
        let id: u32 = row[0]
            .parse()
            .map_err(|_| CliError::config(path, format!("bad patient id '{}'", row[0])))?;
        let traj_path = dir.join(compare_patient_file(id));
        let traj = Table::load(&traj_path)?;
        traj.expect_header(&COMPARE_PATIENT_HEADER, &traj_path)?;
        let pick = |label: &str| traj.rows.iter().filter(|r| r[0] == label).collect::<Vec<_>>();
        let ma = series_metrics(&parse_series(&traj, &pick("a"), &traj_path)?, sim, &traj_path)?;
        let mb = series_metrics(&parse_series(&traj, &pick("b"), &traj_path)?, sim, &traj_path)?;
        let expected = compare_row(row[0].clone(), &patient_cells(&ma), &patient_cells(&mb));
        check_row(path, &row[0], &table.header, row, &expected)?;
        all_a.push(ma);
        all_b.push(mb);
    }
    match table.rows.last() {
        Some(row) if row[0] == "mean" && !all_a.is_empty() => {
            let expected = compare_row("mean".into(), &mean_cells(&all_a), &mean_cells(&all_b));
            check_row(path, "mean", &table.header, row, &expected)
        }
        _ => Err(CliError::config(path, "summary must end with a mean row")),
    }
}

/// Regenerates every summary in the output directory from its trajectory
/// files and checks it cell by cell.
fn cmd_replay(manifest: &RunManifest, exp: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let dir = &manifest.output_dir;
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();

    let mut verified = Vec::new();
    for name in names {
        let path = dir.join(&name);
        if name == COMPARE_SUMMARY_FILE {
            replay_compare(dir, &path, &exp.sim)?;
        } else if let Some(v) = name.strip_prefix("summary_").and_then(|s| s.strip_suffix(".csv")) {
            let variant: Variant = v
                .parse()
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if manifest.variant.is_some_and(|want| want != variant) {
                continue;
            }
            replay_summary(dir, &path, variant, &exp.sim)?;
        } else {
            continue;
        }
        verified.push(path);
    }
    if verified.is_empty() {
        return Err(CliError::Usage(format!("no summaries to replay in {}", dir.display())));
    }
    Ok(verified)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deltas_are_exact() {
        assert_eq!(decimal_delta("1.5", "1.5"), "0");
        assert_eq!(decimal_delta("0", "2"), "2");
        assert_eq!(decimal_delta("2.25", "1"), "-1.25");
        assert_eq!(decimal_delta("-1", "1"), "2");
        assert_eq!(decimal_delta("NaN", "1"), "NaN");
    }

    #[test]
    fn compare_header_is_fixed() {
        assert_eq!(
            compare_summary_header().join(","),
            "patient_id,settling_time_min_a,settling_time_min_b,settling_time_min_delta,\
             sse_a,sse_b,sse_delta,iae_a,iae_b,iae_delta,itae_a,itae_b,itae_delta,\
             cost_a,cost_b,cost_delta"
        );
    }

    #[test]
    fn mean_settling_is_nan_if_any_unsettled() {
        let m = Metrics {
            settling_time: Some(1.0),
            steady_state_error: 0.0,
            iae: 1.0,
            itae: 2.0,
            cost: 3.0,
            bis_min: 50.0,
            bis_max: 50.0,
            in_band_after_settling: true,
        };
        let unsettled = Metrics {
            settling_time: None,
            ..m
        };
        assert_eq!(mean_cells(&[m, m])[0], "1");
        assert_eq!(mean_cells(&[m, unsettled])[0], "NaN");
        assert_eq!(mean_cells(&[m])[2..], ["1", "2", "3"]);
    }
}
