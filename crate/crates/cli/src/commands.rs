use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mdcn::data::{load_image, save_image, DatasetManifest, PairSet, Split, SrPair};
use mdcn::model::{
    load_checkpoint, param_breakdown, param_count, save_checkpoint, super_resolve, super_resolve_fractional, Model,
    ModelConfig,
};
use mdcn::optim::{IterationRecord, TrainLog, Trainer, TRAIN_LOG_HEADER};
use mdcn::{Error, Result};
use mdcn_oracles::{reports_to_tsv, run_oracle_suite, OracleReport, Selection, SuiteOptions};

use crate::eval::{eval_table, evaluate_model};
use crate::{io_error, RunConfig};

/// `<checkpoint>.log.tsv` next to the checkpoint.
pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".log.tsv");
    checkpoint.with_file_name(name)
}

/// Trains from a configuration file and dataset directory, streaming the
/// iteration log to `log_path` and saving the final checkpoint.
pub fn train_command(
    config_path: &Path,
    data_dir: &Path,
    checkpoint: &Path,
    log_path: &Path,
    seed: Option<u64>,
    mut progress: impl FnMut(&IterationRecord),
) -> Result<TrainLog> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    let manifest = DatasetManifest::load(data_dir)?;
    if let Some(f) = cfg.train.factors.iter().find(|f| !manifest.factors.contains(f)) {
        return Err(Error::Data(format!(
            "dataset {} has no x{f} images",
            data_dir.display()
        )));
    }
    let pairs = PairSet::load(data_dir, &manifest, Split::Train, &cfg.train.factors)?;
    let mut model: Model<f32> = Model::new(cfg.model.clone(), cfg.train.seed)?;

    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let file = File::create(log_path).map_err(|e| io_error(log_path, e))?;
    let mut log = BufWriter::new(file);
    writeln!(log, "{TRAIN_LOG_HEADER}").map_err(|e| io_error(log_path, e))?;
    let mut write_error = None;
    let result = Trainer::new(&mut model, cfg.train.clone())?.run(&pairs, |record| {
        if write_error.is_none() {
            write_error = writeln!(log, "{}", record.tsv_row()).and_then(|_| log.flush()).err();
        }
        progress(record);
    });
    if let Some(e) = write_error {
        return Err(io_error(log_path, e));
    }
    let train_log = result?;
    save_checkpoint(&model.params, &model.config, checkpoint)?;
    Ok(train_log)
}

pub fn load_model(checkpoint: &Path) -> Result<Model<f32>> {
    let (params, config) = load_checkpoint(checkpoint)?;
    Ok(Model { config, params })
}

/// How far to upscale in `sr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scale {
    Factor(u32),
    Fractional(f64),
}

pub fn sr_command(checkpoint: &Path, input: &Path, output: &Path, scale: Scale, ensemble: bool) -> Result<()> {
    let model = load_model(checkpoint)?;
    let image = load_image(input)?;
    let out = match scale {
        Scale::Factor(f) => super_resolve(&model, &image, f, ensemble)?,
        Scale::Fractional(s) => {
            if !s.is_finite() || s <= 1.0 {
                return Err(Error::config(
                    "fractional",
                    format!("scale {s} must be a finite number above 1"),
                ));
            }
            super_resolve_fractional(&model, &image, s, ensemble)?
        }
    };
    save_image(&out, output)
}

/// Loads the pairs of a split at `factor`; an empty split is a data error.
pub fn load_split(data_dir: &Path, split: Split, factor: u32) -> Result<Vec<SrPair>> {
    let manifest = DatasetManifest::load(data_dir)?;
    if !manifest.factors.contains(&factor) {
        return Err(Error::Data(format!(
            "dataset {} has no x{factor} images",
            data_dir.display()
        )));
    }
    let pairs = manifest.load_pairs(data_dir, split, factor)?;
    if pairs.is_empty() {
        let name = match split {
            Split::Train => "training",
            Split::Val => "validation",
        };
        return Err(Error::Data(format!(
            "dataset {} has no {name} images",
            data_dir.display()
        )));
    }
    Ok(pairs)
}

pub fn eval_command(checkpoint: &Path, data_dir: &Path, factor: u32, split: Split, ensemble: bool) -> Result<String> {
    let model = load_model(checkpoint)?;
    if !model.config.supports(factor) {
        return Err(Error::UnsupportedFactor {
            factor,
            available: model.config.sorted_factors(),
        });
    }
    let pairs = load_split(data_dir, split, factor)?;
    eval_table(&evaluate_model(&model, &pairs, factor, ensemble)?)
}

/// Reads a model configuration from either a bare `ModelConfig` file or the
/// `model` section of a training configuration.
pub fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(mdcn::model::json_config_error)?;
    if value.get("model").is_some() {
        Ok(RunConfig::from_json(&text)?.model)
    } else {
        ModelConfig::from_json(&text)
    }
}

/// TSV of scalar counts per partition followed by the total.
pub fn param_count_report(config: &ModelConfig) -> Result<String> {
    let mut out = String::from("partition\tparameters\n");
    for (partition, n) in param_breakdown(config)? {
        out.push_str(&format!("{partition}\t{n}\n"));
    }
    out.push_str(&format!("total\t{}\n", param_count(config)?));
    Ok(out)
}

/// Runs every finite-difference case; returns the TSV report and the failures.
pub fn grad_check_report() -> (String, Vec<OracleReport>) {
    let reports = run_oracle_suite(Selection::Gradients, &SuiteOptions::default());
    let failed = reports.iter().filter(|r| !r.passed).cloned().collect();
    (reports_to_tsv(&reports), failed)
}
