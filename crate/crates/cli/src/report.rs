//! CSV and chart emission.
//!
//! CSV files hold only quantities derived from the configuration and seed,
//! so reruns produce identical bytes. Timings go to `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use sdl_core::diffusion_lab::DistanceSeries;
use sdl_core::training::EpochRecord;

use crate::ablation::{mean_errors, RunReport, Rung};
use crate::config::RunConfig;
use crate::svg::{line_chart, Series};

/// Shortest round-trip decimal; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes a header and rows with LF line endings.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Writes the chart unless it would be empty.
pub fn write_chart(path: &Path, title: &str, x: &str, y: &str, series: &[Series]) -> Result<Option<PathBuf>> {
    match line_chart(title, x, y, series) {
        Some(svg) => write_text(path, &svg).map(Some),
        None => Ok(None),
    }
}

pub const EPOCH_HEADER: [&str; 7] = ["epoch", "iteration", "lr", "train_loss", "val_loss", "val_error", "distance"];
pub const DISTANCE_HEADER: [&str; 3] = ["t", "distance", "train_loss"];

pub fn epoch_rows(log: &[EpochRecord]) -> Vec<Vec<String>> {
    log.iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.iteration.to_string(),
                num(e.lr),
                num(e.train_loss),
                opt(e.val_loss),
                opt(e.val_error),
                num(e.distance),
            ]
        })
        .collect()
}

pub fn distance_rows(series: &DistanceSeries) -> Vec<Vec<String>> {
    series
        .entries()
        .iter()
        .map(|e| vec![e.t.to_string(), num(e.distance), num(e.train_loss)])
        .collect()
}

pub fn error_series(name: &str, log: &[EpochRecord]) -> Series {
    Series::new(
        name,
        log.iter().filter_map(|e| e.val_error.map(|v| (e.epoch as f64, v))).collect(),
    )
}

pub fn distance_series(name: &str, series: &DistanceSeries) -> Series {
    Series::new(
        name,
        series
            .entries()
            .iter()
            .filter(|e| e.t >= 1)
            .map(|e| ((e.t as f64).ln(), e.distance))
            .collect(),
    )
}

/// Per-epoch CSV, distance CSV and their charts in `dir`.
pub fn write_run(dir: &Path, name: &str, log: &[EpochRecord], distance: &DistanceSeries) -> Result<Vec<PathBuf>> {
    let mut files = vec![
        write_table(&dir.join("epochs.csv"), &EPOCH_HEADER, &epoch_rows(log))?,
        write_table(&dir.join("distance.csv"), &DISTANCE_HEADER, &distance_rows(distance))?,
    ];
    files.extend(write_chart(
        &dir.join("error.svg"),
        &format!("{name}: validation error"),
        "epoch",
        "validation error",
        &[error_series(name, log)],
    )?);
    files.extend(write_chart(
        &dir.join("distance.svg"),
        &format!("{name}: weight distance"),
        "ln t",
        "||w_t - w_0||",
        &[distance_series(name, distance)],
    )?);
    Ok(files)
}

pub const SUMMARY_HEADER: [&str; 7] = ["network", "dataset", "SB", "LB", "+LR", "+GBN", "+RA"];
pub const RUNGS_HEADER: [&str; 12] = [
    "seed",
    "rung",
    "batch_size",
    "lr",
    "norm",
    "noise_sigma_sq",
    "epochs",
    "iterations",
    "final_train_loss",
    "final_train_error",
    "final_val_error",
    "dir",
];

pub fn run_dir(report: &RunReport) -> PathBuf {
    PathBuf::from(format!("seed-{}", report.seed)).join(report.rung.slug())
}

#[derive(Serialize)]
struct ManifestRun {
    seed: u64,
    rung: &'static str,
    wall_clock_secs: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    input_hash: &'a str,
    runs: Vec<ManifestRun>,
}

/// Ladder report: `summary.csv` (mean final validation error per rung),
/// `rungs.csv`, per-run files, comparison charts, the effective config and
/// a manifest with timings.
pub fn emit_report(
    reports: &[RunReport],
    cfg: &RunConfig,
    network: &str,
    dataset: &str,
    input_hash: &str,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = write_ladder(reports, network, dataset, dir)?;
    files.push(write_text(&dir.join("effective_config.toml"), &cfg.to_toml())?);
    files.push(write_manifest(
        dir,
        cfg,
        input_hash,
        reports
            .iter()
            .map(|r| ManifestRun {
                seed: r.seed,
                rung: r.rung.label(),
                wall_clock_secs: r.wall_clock_secs,
            })
            .collect(),
    )?);
    Ok(files)
}

/// Tables and charts of a ladder, without the config snapshot.
pub fn write_ladder(reports: &[RunReport], network: &str, dataset: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        bail!("no runs to report");
    }
    ensure_dir(dir)?;
    let mut files = Vec::new();
    let mut summary = vec![network.to_string(), dataset.to_string()];
    summary.extend(mean_errors(reports).into_iter().map(|(_, e)| opt(e)));
    files.push(write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &[summary])?);

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.rung.label().to_string(),
                r.batch_size.to_string(),
                num(r.lr),
                r.norm.clone(),
                num(r.noise_sigma_sq),
                r.epochs.to_string(),
                r.iterations.to_string(),
                num(r.final_train_loss),
                num(r.final_train_error),
                num(r.final_val_error),
                run_dir(r).to_string_lossy().replace('\\', "/"),
            ]
        })
        .collect();
    files.push(write_table(&dir.join("rungs.csv"), &RUNGS_HEADER, &rows)?);

    for r in reports {
        files.extend(write_run(&dir.join(run_dir(r)), r.rung.label(), &r.epoch_log, &r.distance)?);
    }
    let mut seeds: Vec<u64> = reports.iter().map(|r| r.seed).collect();
    seeds.dedup();
    for seed in seeds {
        let of_seed: Vec<&RunReport> = reports.iter().filter(|r| r.seed == seed).collect();
        let series: Vec<Series> = of_seed.iter().map(|r| error_series(r.rung.label(), &r.epoch_log)).collect();
        files.extend(write_chart(
            &dir.join(format!("seed-{seed}")).join("error.svg"),
            &format!("validation error, seed {seed}"),
            "epoch",
            "validation error",
            &series,
        )?);
        let series: Vec<Series> = of_seed
            .iter()
            .filter(|r| r.rung != Rung::Ra)
            .map(|r| distance_series(r.rung.label(), &r.distance))
            .collect();
        files.extend(write_chart(
            &dir.join(format!("seed-{seed}")).join("distance.svg"),
            &format!("weight distance, seed {seed}"),
            "ln t",
            "||w_t - w_0||",
            &series,
        )?);
    }
    Ok(files)
}

fn write_manifest(dir: &Path, cfg: &RunConfig, input_hash: &str, runs: Vec<ManifestRun>) -> Result<PathBuf> {
    let manifest = Manifest {
        experiment: cfg.experiment.name(),
        input_hash,
        runs,
    };
    write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)
}

/// Config snapshot and manifest for single-run experiments.
pub fn write_snapshot(dir: &Path, cfg: &RunConfig, input_hash: &str, wall_clock_secs: f64) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_text(&dir.join("effective_config.toml"), &cfg.to_toml())?,
        write_manifest(
            dir,
            cfg,
            input_hash,
            vec![ManifestRun {
                seed: cfg.seed,
                rung: cfg.experiment.name(),
                wall_clock_secs,
            }],
        )?,
    ])
}
