use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mdcn::data::{make_dataset, DatasetManifest, PairSet, Split};
use mdcn::model::ModelConfig;
use mdcn::Result;
use mdcn_cli::ablation::{ablation_table, run_case, AblationCase, AblationSettings};
use mdcn_cli::commands::{
    default_log_path, eval_command, grad_check_report, load_model_config, load_split, param_count_report, sr_command,
    train_command, Scale,
};
use mdcn_cli::exit_code;

#[derive(Parser)]
#[command(name = "mdcn", version, about = "Multi-scale dense cross network super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Diagnostic {
    GradCheck,
    ParamCount,
}

#[derive(Subcommand)]
enum Command {
    /// Build HR/LR image trees and a manifest from a folder of HR images.
    MakeDataset {
        #[arg(long)]
        hr_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        factors: Vec<u32>,
        /// Number of images (last by file name) held out for validation.
        #[arg(long, default_value_t = 0)]
        val_count: usize,
    },
    /// Train a model; writes the checkpoint and a TSV iteration log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seeds both initialisation and batch sampling; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<out>.log.tsv`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Print a progress line every this many iterations (0 disables).
        #[arg(long, default_value_t = 100)]
        report_every: usize,
    },
    /// Super-resolve one image.
    Sr {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, required_unless_present = "fractional", conflicts_with = "fractional")]
        factor: Option<u32>,
        /// Non-integer scale: largest integer head below it, then bicubic.
        #[arg(long)]
        fractional: Option<f64>,
        #[arg(long)]
        self_ensemble: bool,
    },
    /// PSNR/SSIM/RMSE of a checkpoint against the bicubic baseline.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        factor: u32,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        #[arg(long)]
        self_ensemble: bool,
        /// Also write the table here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train block-study cases under one budget and compare validation PSNR.
    Ablate {
        #[arg(long, value_delimiter = ',', required = true)]
        case: Vec<usize>,
        #[arg(long)]
        data: PathBuf,
        /// Training iterations per case and seed.
        #[arg(long)]
        budget: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        factor: u32,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 24)]
        hr_patch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Gradient check suite or parameter accounting.
    Diag {
        #[arg(value_enum)]
        what: Diagnostic,
        /// Model or training configuration; the full-size model by default.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn write_output(table: &str, path: Option<&PathBuf>) -> Result<()> {
    print!("{table}");
    if let Some(path) = path {
        fs::write(path, table).map_err(|e| mdcn::Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::MakeDataset {
            hr_dir,
            out_dir,
            factors,
            val_count,
        } => {
            let m = make_dataset(&hr_dir, &out_dir, &factors, val_count)?;
            eprintln!(
                "{} images ({} train, {} val) at {}",
                m.records.len(),
                m.train_len(),
                m.records.len() - m.train_len(),
                m.factors.iter().map(|f| format!("x{f}")).collect::<Vec<_>>().join(", ")
            );
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            log,
            report_every,
        } => {
            let log = log.unwrap_or_else(|| default_log_path(&out));
            let result = train_command(&config, &data, &out, &log, seed, |r| {
                if report_every > 0 && (r.iteration + 1) % report_every == 0 {
                    eprintln!(
                        "iter {} epoch {} x{} loss {:.5} lr {:.2e}",
                        r.iteration + 1,
                        r.epoch,
                        r.factor,
                        r.loss,
                        r.lr
                    );
                }
            })?;
            if let (Some(first), Some(last)) = (result.iterations.first(), result.iterations.last()) {
                eprintln!(
                    "loss {:.5} -> {:.5} over {} iterations",
                    first.loss,
                    last.loss,
                    result.iterations.len()
                );
            }
        }
        Command::Sr {
            ckpt,
            input,
            output,
            factor,
            fractional,
            self_ensemble,
        } => {
            let scale = match (factor, fractional) {
                (Some(f), _) => Scale::Factor(f),
                (None, Some(s)) => Scale::Fractional(s),
                (None, None) => unreachable!("clap requires one of --factor and --fractional"),
            };
            sr_command(&ckpt, &input, &output, scale, self_ensemble)?;
        }
        Command::Eval {
            ckpt,
            data,
            factor,
            split,
            self_ensemble,
            output,
        } => {
            let table = eval_command(&ckpt, &data, factor, split.into(), self_ensemble)?;
            write_output(&table, output.as_ref())?;
        }
        Command::Ablate {
            case,
            data,
            budget,
            seeds,
            factor,
            batch_size,
            hr_patch,
            lr,
            output,
        } => {
            let cases = case.into_iter().map(AblationCase::get).collect::<Result<Vec<_>>>()?;
            let settings = AblationSettings {
                factor,
                iterations: budget,
                seeds,
                batch_size,
                hr_patch,
                base_lr: lr,
            };
            settings.train_config(0).validate()?;
            let manifest = DatasetManifest::load(&data)?;
            let train_pairs = PairSet::load(&data, &manifest, Split::Train, &[factor])?;
            let val = load_split(&data, Split::Val, factor)?;
            let mut runs = Vec::new();
            for c in &cases {
                let case_runs = run_case(c, &settings, &train_pairs, &val)?;
                for r in &case_runs {
                    eprintln!("case {} seed {}: {:.4} dB", r.case, r.seed, r.val_psnr);
                }
                runs.extend(case_runs);
            }
            write_output(&ablation_table(&runs), output.as_ref())?;
        }
        Command::Diag { what, config } => match what {
            Diagnostic::GradCheck => {
                let (table, failed) = grad_check_report();
                print!("{table}");
                if !failed.is_empty() {
                    for f in &failed {
                        eprintln!("gradient check failed: {} (max rel {:.3e})", f.case, f.max_rel);
                    }
                    return Ok(ExitCode::from(4));
                }
            }
            Diagnostic::ParamCount => {
                let config = match config {
                    Some(path) => load_model_config(&path)?,
                    None => ModelConfig::full(),
                };
                print!("{}", param_count_report(&config)?);
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
