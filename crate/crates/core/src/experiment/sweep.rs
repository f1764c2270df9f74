use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{run_resolved, write_json, write_text, RunOptions, RunRecord, Stage};
use crate::error::{Error, Result};
use crate::metrics::{csv_table, markdown_table, percent};
use crate::rng::derive_indexed;

pub const PATCH_SWEEP_STEM: &str = "sweep_patch";
pub const ROBUST_STEM: &str = "robust_kappa";
pub const ROBUST_CLEAN_STEM: &str = "robust_clean_kappa";
pub const ROBUST_FILE: &str = "robust.json";

fn column_header(first: &str, sizes: &[usize]) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain(sizes.iter().map(|p| format!("P{p}")))
        .collect()
}

fn write_table(dir: &Path, stem: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    write_text(&dir.join(format!("{stem}.csv")), &csv_table(header, rows))?;
    write_text(
        &dir.join(format!("{stem}.md")),
        &markdown_table(header, rows),
    )
}

fn patch_dir(dir: &Path, p: usize) -> PathBuf {
    dir.join(format!("P{p}"))
}

/// Per-patch-size evaluation of the selected-channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSweep {
    pub patch_sizes: Vec<usize>,
    pub class_names: Vec<String>,
    pub records: Vec<RunRecord>,
}

impl PatchSweep {
    pub fn header(&self) -> Vec<String> {
        column_header("Class", &self.patch_sizes)
    }

    /// One row per class, then `OA` and `Kappa`, all in percent.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let reports: Vec<_> = self
            .records
            .iter()
            .map(|r| &r.selected.as_ref().expect("sweep runs evaluate").report)
            .collect();
        let mut rows: Vec<Vec<String>> = self
            .class_names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                std::iter::once(name.clone())
                    .chain(reports.iter().map(|rep| {
                        rep.rows[c]
                            .accuracy
                            .map(percent)
                            .unwrap_or_else(|| "n/a".into())
                    }))
                    .collect()
            })
            .collect();
        rows.push(
            std::iter::once("OA".to_string())
                .chain(reports.iter().map(|r| percent(r.overall_accuracy)))
                .collect(),
        );
        rows.push(
            std::iter::once("Kappa".to_string())
                .chain(reports.iter().map(|r| percent(r.kappa)))
                .collect(),
        );
        rows
    }

    pub fn to_csv(&self) -> String {
        csv_table(&self.header(), &self.rows())
    }

    pub fn to_markdown(&self) -> String {
        markdown_table(&self.header(), &self.rows())
    }
}

/// Runs the pipeline through clean evaluation once per patch size under
/// `<output_dir>/P<p>/` and writes the combined table.
pub fn patch_sweep(
    config: &ExperimentConfig,
    output_dir: &Path,
    fresh: bool,
) -> Result<PatchSweep> {
    config.validate()?;
    let resolved = config.resolved();
    let records = resolved
        .patch_sizes
        .par_iter()
        .map(|&p| {
            let mut column = resolved.clone();
            column.patch_size = Some(p);
            let options = RunOptions {
                output_dir: patch_dir(output_dir, p),
                until: Stage::Eval,
                fresh,
            };
            run_resolved(&column, &options)
        })
        .collect::<Result<Vec<_>>>()?;
    let class_names = records[0]
        .selected
        .as_ref()
        .expect("evaluated")
        .report
        .rows
        .iter()
        .map(|r| r.name.clone())
        .collect();
    let sweep = PatchSweep {
        patch_sizes: resolved.patch_sizes.clone(),
        class_names,
        records,
    };
    write_table(output_dir, PATCH_SWEEP_STEM, &sweep.header(), &sweep.rows())
        .map_err(|e| e.in_stage("report"))?;
    Ok(sweep)
}

/// κ per patch size under compound perturbation, averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSweep {
    pub patch_sizes: Vec<usize>,
    pub repeats: usize,
    pub quota: usize,
    /// Mean attacked κ per patch size.
    pub attacked_kappa: Vec<f64>,
    /// Mean clean κ of the same models.
    pub clean_kappa: Vec<f64>,
    /// `[patch][repeat]` attacked κ.
    pub per_repeat_attacked: Vec<Vec<f64>>,
    /// `[patch][repeat]` clean κ.
    pub per_repeat_clean: Vec<Vec<f64>>,
}

impl RobustnessSweep {
    pub fn header(&self) -> Vec<String> {
        column_header("Metric", &self.patch_sizes)
    }

    fn row(label: &str, values: &[f64]) -> Vec<String> {
        std::iter::once(label.to_string())
            .chain(values.iter().map(|&k| percent(k)))
            .collect()
    }

    /// The single attacked-κ row.
    pub fn attacked_row(&self) -> Vec<String> {
        Self::row("Kappa (%)", &self.attacked_kappa)
    }

    pub fn clean_row(&self) -> Vec<String> {
        Self::row("Clean Kappa (%)", &self.clean_kappa)
    }
}

/// Repeat directory for patch size `p`.
pub fn repeat_dir(output_dir: &Path, p: usize, repeat: usize) -> PathBuf {
    patch_dir(output_dir, p).join(format!("repeat{repeat}"))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// For every patch size and repeat: undersample the training split to the
/// quota, train, select, retrain, and evaluate attacked test patches.
pub fn robustness_sweep(
    config: &ExperimentConfig,
    output_dir: &Path,
    fresh: bool,
) -> Result<RobustnessSweep> {
    config.validate()?;
    let sizes = config.patch_sizes.clone();
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&p| (0..config.repeats).map(move |r| (p, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(p, r)| {
            let mut run = config.reseeded(derive_indexed(config.seed, r as u64));
            run.undersample = true;
            run.patch_size = Some(p);
            let options = RunOptions {
                output_dir: repeat_dir(output_dir, p, r),
                until: Stage::Attack,
                fresh,
            };
            run_resolved(&run, &options)
        })
        .collect::<Result<Vec<_>>>()?;
    let kappas = |pick: fn(&RunRecord) -> f64| -> Vec<Vec<f64>> {
        records
            .chunks(config.repeats)
            .map(|c| c.iter().map(pick).collect())
            .collect()
    };
    let per_repeat_attacked = kappas(|r| r.attacked.as_ref().expect("attacked").report.kappa);
    let per_repeat_clean = kappas(|r| r.selected.as_ref().expect("evaluated").report.kappa);
    let sweep = RobustnessSweep {
        patch_sizes: sizes,
        repeats: config.repeats,
        quota: config.quota,
        attacked_kappa: per_repeat_attacked.iter().map(|v| mean(v)).collect(),
        clean_kappa: per_repeat_clean.iter().map(|v| mean(v)).collect(),
        per_repeat_attacked,
        per_repeat_clean,
    };
    let report = || -> Result<()> {
        fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
        let header = sweep.header();
        write_table(output_dir, ROBUST_STEM, &header, &[sweep.attacked_row()])?;
        write_table(output_dir, ROBUST_CLEAN_STEM, &header, &[sweep.clean_row()])?;
        write_json(&output_dir.join(ROBUST_FILE), &sweep)
    };
    report().map_err(|e| e.in_stage("report"))?;
    Ok(sweep)
}
