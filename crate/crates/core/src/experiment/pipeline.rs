use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{hash_json, DataSource, ExperimentConfig};
use super::render::render_map;
use crate::adversarial::compound_perturb;
use crate::classifier::{train, ClassifierParams};
use crate::data::{
    generate_synthetic, load_cube, load_labels, patches_at, split, undersample, HyperCube,
    LabelMap, Split,
};
use crate::error::{Error, Result};
use crate::iwgs::{apply_selection, select, MaskDocument, SelectionMask};
use crate::metrics::{
    accumulate, default_class_names, per_class_report, ClassReport, ConfusionMatrix,
};
use crate::rng::{derive_indexed, derive_seed};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Split,
    Train,
    Select,
    Retrain,
    Eval,
    Attack,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Load,
        Stage::Split,
        Stage::Train,
        Stage::Select,
        Stage::Retrain,
        Stage::Eval,
        Stage::Attack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Select => "select",
            Stage::Retrain => "retrain",
            Stage::Eval => "eval",
            Stage::Attack => "attack",
        }
    }
}

pub const SPLIT_FILE: &str = "split.json";
pub const PARAMS_FULL_FILE: &str = "params_full.json";
pub const PARAMS_SELECTED_FILE: &str = "params_selected.json";
pub const MASK_FILE: &str = "mask.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const EVAL_FILE: &str = "evaluation.json";
pub const ATTACK_FILE: &str = "attack.json";
pub const MAP_FILE: &str = "map.png";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.png";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_FILE: &str = "run.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// Last stage to execute.
    pub until: Stage,
    /// Recompute every stage even when cached artifacts match.
    pub fresh: bool,
}

impl RunOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            until: Stage::Attack,
            fresh: false,
        }
    }
}

/// Confusion matrix and its per-class summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: ClassReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvalArtifact {
    full: Evaluation,
    selected: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    pub cached: bool,
}

/// Summary of one pipeline run. Everything but `timings` is a pure
/// function of the resolved config and goes into `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub patch_size: usize,
    pub num_classes: u16,
    pub train_pixels: usize,
    pub test_pixels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_channels: Option<Vec<usize>>,
    /// Artifact name to path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<Evaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Evaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacked: Option<Evaluation>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl RunRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_text(path, &(text + "\n"))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Loads the cube and labels named by a data source.
pub fn load_data(source: &DataSource) -> Result<(HyperCube, LabelMap)> {
    let (cube, labels) = match source {
        DataSource::Synthetic(spec) => generate_synthetic(spec)?,
        DataSource::Files { cube, labels } => (load_cube(cube)?, load_labels(labels)?),
    };
    labels.ensure_matches(&cube)?;
    Ok((cube, labels))
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    dir: &'a Path,
    fresh: bool,
    manifest: BTreeMap<String, String>,
    timings: Vec<StageTiming>,
    artifacts: BTreeMap<String, String>,
}

impl Runner<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn cached(&self, stage: Stage, key: &str, files: &[&str]) -> bool {
        !self.fresh
            && self.manifest.get(stage.name()).is_some_and(|k| k == key)
            && files.iter().all(|f| self.path(f).is_file())
    }

    /// Runs `compute` unless a matching artifact exists, in which case `load` is used.
    fn stage<T>(
        &mut self,
        stage: Stage,
        key: &str,
        files: &[&str],
        load: impl FnOnce(&Self) -> Result<T>,
        compute: impl FnOnce(&Self) -> Result<T>,
    ) -> Result<T> {
        let start = Instant::now();
        let hit = self.cached(stage, key, files);
        let value = if hit {
            log::info!("{}: reusing cached artifacts", stage.name());
            load(self)
        } else {
            log::info!("{}: computing", stage.name());
            compute(self)
        }
        .map_err(|e| e.in_stage(stage.name()))?;
        if !hit {
            self.manifest.insert(stage.name().into(), key.into());
            write_json(&self.path(MANIFEST_FILE), &self.manifest)
                .map_err(|e| e.in_stage(stage.name()))?;
        }
        for f in files {
            self.artifacts.insert(artifact_name(f), (*f).to_string());
        }
        self.timings.push(StageTiming {
            stage,
            seconds: start.elapsed().as_secs_f64(),
            cached: hit,
        });
        Ok(value)
    }
}

fn artifact_name(file: &str) -> String {
    file.replace('.', "_")
}

fn evaluate(truth: &[u16], predicted: &[u16], names: &[String]) -> Result<Evaluation> {
    let confusion = accumulate(truth, predicted, names.len())?;
    let report = per_class_report(&confusion, names)?;
    Ok(Evaluation { confusion, report })
}

fn write_report(dir: &Path, stem: &str, report: &ClassReport) -> Result<()> {
    write_text(&dir.join(format!("{stem}.csv")), &report.to_csv())?;
    write_text(&dir.join(format!("{stem}.md")), &report.to_markdown())
}

/// Runs the pipeline for a config whose seeds are already resolved.
pub(crate) fn run_resolved(config: &ExperimentConfig, options: &RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let dir = options.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = if options.fresh {
        BTreeMap::new()
    } else {
        let path = dir.join(MANIFEST_FILE);
        if path.is_file() {
            read_json(&path)?
        } else {
            BTreeMap::new()
        }
    };
    let mut runner = Runner {
        config,
        dir,
        fresh: options.fresh,
        manifest,
        timings: Vec::new(),
        artifacts: BTreeMap::new(),
    };
    write_json(&dir.join(CONFIG_FILE), &config.relocated())?;
    runner
        .artifacts
        .insert(artifact_name(CONFIG_FILE), CONFIG_FILE.into());

    let patch_size = config.pipeline_patch_size();
    let data_key = hash_json(&config.data);
    let start = Instant::now();
    let (cube, labels) = load_data(&config.data).map_err(|e| e.in_stage(Stage::Load.name()))?;
    runner.timings.push(StageTiming {
        stage: Stage::Load,
        seconds: start.elapsed().as_secs_f64(),
        cached: false,
    });
    let num_classes = labels.num_classes();
    let names = match &config.class_names {
        Some(n) if n.len() != usize::from(num_classes) => {
            return Err(
                Error::Config(format!("{} class names for {num_classes} classes", n.len()))
                    .in_stage("load"),
            )
        }
        Some(n) => n.clone(),
        None => default_class_names(usize::from(num_classes)),
    };

    let mut record = RunRecord {
        config_hash: config.hash(),
        patch_size,
        num_classes,
        train_pixels: 0,
        test_pixels: 0,
        selected_channels: None,
        artifacts: BTreeMap::new(),
        full: None,
        selected: None,
        attacked: None,
        timings: Vec::new(),
    };

    let finish = |runner: Runner<'_>, mut record: RunRecord| -> Result<RunRecord> {
        record.artifacts = runner.artifacts;
        record
            .artifacts
            .insert(artifact_name(RUN_FILE), RUN_FILE.into());
        write_json(&dir.join(RUN_FILE), &record)?;
        write_json(&dir.join(TIMINGS_FILE), &runner.timings)?;
        record.timings = runner.timings;
        Ok(record)
    };

    // split
    let quota = config.undersample.then_some(config.quota);
    let split_key = hash_json(&(&data_key, &config.split, quota));
    let parts: Split = runner.stage(
        Stage::Split,
        &split_key,
        &[SPLIT_FILE],
        |r| read_json(&r.path(SPLIT_FILE)),
        |r| {
            let mut parts = split(&labels, &r.config.split)?;
            if let Some(q) = quota {
                parts.train = undersample(
                    &parts.train,
                    &labels,
                    q,
                    derive_seed(r.config.split.seed, "undersample"),
                )?;
            }
            write_json(&r.path(SPLIT_FILE), &parts)?;
            Ok(parts)
        },
    )?;
    if parts.train.is_empty() || parts.test.is_empty() {
        return Err(Error::Data("split produced an empty partition".into()).in_stage("split"));
    }
    record.train_pixels = parts.train.len();
    record.test_pixels = parts.test.len();
    if options.until == Stage::Split || options.until == Stage::Load {
        return finish(runner, record);
    }

    // train on all bands
    let train_key = hash_json(&(&split_key, &config.train, patch_size));
    let params_full: ClassifierParams = runner.stage(
        Stage::Train,
        &train_key,
        &[PARAMS_FULL_FILE],
        |r| ClassifierParams::load(r.path(PARAMS_FULL_FILE)),
        |r| {
            let patches = patches_at(&cube, &labels, &parts.train, patch_size);
            let params = train(&patches, num_classes, &r.config.train)?;
            params.save(r.path(PARAMS_FULL_FILE))?;
            Ok(params)
        },
    )?;
    if options.until == Stage::Train {
        return finish(runner, record);
    }

    // greedy selection
    let transform = config.iwgs.transform();
    let select_key = hash_json(&(&train_key, &config.iwgs));
    let mask: SelectionMask = runner.stage(
        Stage::Select,
        &select_key,
        &[MASK_FILE, TRACE_FILE],
        |r| MaskDocument::load(r.path(MASK_FILE))?.mask(),
        |r| {
            let train_labels = labels.restricted_to(&parts.train);
            let (mask, trace) = select(&cube, &train_labels, &params_full, &r.config.iwgs)?;
            MaskDocument::new(&mask, &transform).save(r.path(MASK_FILE))?;
            trace.save_jsonl(r.path(TRACE_FILE))?;
            Ok(mask)
        },
    )?;
    record.selected_channels = Some(mask.indices());
    if options.until == Stage::Select {
        return finish(runner, record);
    }

    // retrain on the masked reconstruction
    let masked = apply_selection(&cube, &mask, &transform).map_err(|e| e.in_stage("retrain"))?;
    let retrain_key = hash_json(&(&select_key, "retrain"));
    let params_selected: ClassifierParams = runner.stage(
        Stage::Retrain,
        &retrain_key,
        &[PARAMS_SELECTED_FILE],
        |r| ClassifierParams::load(r.path(PARAMS_SELECTED_FILE)),
        |r| {
            let patches = patches_at(&masked, &labels, &parts.train, patch_size);
            let params = train(&patches, num_classes, &r.config.train)?;
            params.save(r.path(PARAMS_SELECTED_FILE))?;
            Ok(params)
        },
    )?;
    if options.until == Stage::Retrain {
        return finish(runner, record);
    }

    let truth: Vec<u16> = parts.test.iter().map(|&i| labels.labels()[i]).collect();

    // clean evaluation
    let eval_key = hash_json(&(&retrain_key, &names, config.palette_seed()));
    let eval_files = [
        EVAL_FILE,
        "report_full.csv",
        "report_full.md",
        "report_selected.csv",
        "report_selected.md",
        MAP_FILE,
        GROUND_TRUTH_FILE,
    ];
    let evals: EvalArtifact = runner.stage(
        Stage::Eval,
        &eval_key,
        &eval_files,
        |r| read_json(&r.path(EVAL_FILE)),
        |r| {
            let predict = |params: &ClassifierParams, source: &HyperCube| -> Result<Vec<u16>> {
                patches_at(source, &labels, &parts.test, patch_size)
                    .par_iter()
                    .map(|p| params.predict(&p.values))
                    .collect()
            };
            let full = evaluate(&truth, &predict(&params_full, &cube)?, &names)?;
            let selected = evaluate(&truth, &predict(&params_selected, &masked)?, &names)?;
            write_report(r.dir, "report_full", &full.report)?;
            write_report(r.dir, "report_selected", &selected.report)?;
            let map = params_selected.predict_map(&masked, patch_size)?;
            render_map(&map, r.config.palette_seed(), r.path(MAP_FILE))?;
            render_map(&labels, r.config.palette_seed(), r.path(GROUND_TRUTH_FILE))?;
            let artifact = EvalArtifact { full, selected };
            write_json(&r.path(EVAL_FILE), &artifact)?;
            Ok(artifact)
        },
    )?;
    record.full = Some(evals.full);
    record.selected = Some(evals.selected);
    if options.until == Stage::Eval {
        return finish(runner, record);
    }

    // compound attack on the selected model, in its standardized input space
    let attack_key = hash_json(&(&retrain_key, &names, &config.attack));
    let attacked: Evaluation = runner.stage(
        Stage::Attack,
        &attack_key,
        &[ATTACK_FILE, "report_attacked.csv", "report_attacked.md"],
        |r| read_json(&r.path(ATTACK_FILE)),
        |r| {
            let attack = &r.config.attack;
            attack.validate()?;
            let view = params_selected.standardized();
            let predicted: Vec<u16> = patches_at(&masked, &labels, &parts.test, patch_size)
                .par_iter()
                .zip(parts.test.par_iter())
                .map(|(p, &pixel)| {
                    let z = params_selected.standardize(&p.values);
                    let cfg = attack.with_seed(derive_indexed(attack.seed, pixel as u64));
                    let perturbed = compound_perturb(&view, &z, p.label, &cfg)?;
                    view.predict(&perturbed.adversarial)
                })
                .collect::<Result<_>>()?;
            let evaluation = evaluate(&truth, &predicted, &names)?;
            write_report(r.dir, "report_attacked", &evaluation.report)?;
            write_json(&r.path(ATTACK_FILE), &evaluation)?;
            Ok(evaluation)
        },
    )?;
    record.attacked = Some(attacked);
    finish(runner, record)
}

/// Full pipeline: split, train on all bands, select, retrain on the
/// selection, evaluate clean and attacked test sets, write every artifact.
pub fn run_pipeline(config: &ExperimentConfig, options: &RunOptions) -> Result<RunRecord> {
    run_resolved(&config.resolved(), options)
}
