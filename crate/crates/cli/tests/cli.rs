use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mdcn::data::{load_image, save_image, synthetic::synthetic_image, Image, Split};
use mdcn::model::{save_checkpoint, Model, ModelConfig};
use mdcn::optim::TrainConfig;
use mdcn::Error;
use mdcn_cli::ablation::{ablation_table, median, AblationCase, AblationRun, CASES};
use mdcn_cli::commands::{load_split, param_count_report};
use mdcn_cli::eval::{eval_table, evaluate, EVAL_HEADER};
use mdcn_cli::{exit_code, RunConfig};
use mdcn_oracles::network::enumerate_param_count;

fn mdcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdcn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_hr(dir: &Path, count: u64, size: usize) {
    for i in 0..count {
        save_image(&synthetic_image(size, size, i), dir.join(format!("im{i}.png"))).unwrap();
    }
}

/// HR folder plus a built dataset with `val` held-out images.
fn dataset(root: &Path, count: u64, size: usize, factors: &str, val: usize) -> PathBuf {
    let hr = root.join("hr");
    write_hr(&hr, count, size);
    let data = root.join("data");
    let o = mdcn(&[
        "make-dataset",
        "--hr-dir",
        p(&hr),
        "--out-dir",
        p(&data),
        "--factors",
        factors,
        "--val-count",
        &val.to_string(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    data
}

fn tiny_run_config(factors: &[u32], iterations: usize) -> RunConfig {
    RunConfig {
        model: ModelConfig::tiny(2, 8, factors),
        train: TrainConfig {
            batch_size: 4,
            hr_patch: 12,
            base_lr: 1e-3,
            halving_period: 100,
            iterations_per_epoch: iterations,
            epochs: 1,
            factors: factors.to_vec(),
            seed: 0,
        },
    }
}

fn count_files(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            if e.file_type().unwrap().is_dir() {
                count_files(&e.path())
            } else {
                1
            }
        })
        .sum()
}

#[test]
fn make_dataset_counts_files_and_is_repeatable() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 3, 30, "2,3", 1);
    assert_eq!(count_files(&data), 3 + 3 * 2 + 1);
    let manifest = fs::read(data.join("manifest.json")).unwrap();
    let o = mdcn(&[
        "make-dataset",
        "--hr-dir",
        p(&root.path().join("hr")),
        "--out-dir",
        p(&data),
        "--factors",
        "2,3",
        "--val-count",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(data.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn make_dataset_odd_sizes_follow_divisibility() {
    let root = tempfile::tempdir().unwrap();
    let hr = root.path().join("hr");
    save_image(&synthetic_image(101, 77, 3), hr.join("odd.ppm")).unwrap();
    let data = root.path().join("data");
    assert!(mdcn(&[
        "make-dataset",
        "--hr-dir",
        p(&hr),
        "--out-dir",
        p(&data),
        "--factors",
        "4"
    ])
    .status
    .success());
    let text = fs::read_to_string(data.join("manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    let e = &m["records"][0]["lr"][0];
    assert_eq!((e["hr_width"].as_u64(), e["hr_height"].as_u64()), (Some(100), Some(76)));
    assert_eq!((e["width"].as_u64(), e["height"].as_u64()), (Some(25), Some(19)));
    let lr = load_image(data.join("LR_x4/odd.png")).unwrap();
    assert_eq!((lr.width(), lr.height()), (25, 19));
}

#[test]
fn make_dataset_on_empty_folder_is_a_data_error() {
    let root = tempfile::tempdir().unwrap();
    fs::create_dir_all(root.path().join("hr")).unwrap();
    let o = mdcn(&[
        "make-dataset",
        "--hr-dir",
        p(&root.path().join("hr")),
        "--out-dir",
        p(&root.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn train_reduces_loss_and_is_seed_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 4, 36, "2", 0);
    let config = root.path().join("cfg.json");
    fs::write(&config, tiny_run_config(&[2], 120).to_json()).unwrap();
    let mut checkpoints = Vec::new();
    for run in 0..2 {
        let ckpt = root.path().join(format!("run{run}/model.ckpt"));
        let o = mdcn(&[
            "train",
            "--config",
            p(&config),
            "--data",
            p(&data),
            "--out",
            p(&ckpt),
            "--seed",
            "4",
            "--report-every",
            "0",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        checkpoints.push(fs::read(&ckpt).unwrap());
        let log = fs::read_to_string(root.path().join(format!("run{run}/model.ckpt.log.tsv"))).unwrap();
        let mut lines = log.lines();
        assert_eq!(lines.next(), Some("epoch\titeration\tfactor\tloss\tlr\tseconds"));
        let losses: Vec<f64> = lines.map(|l| l.split('\t').nth(3).unwrap().parse().unwrap()).collect();
        assert_eq!(losses.len(), 120);
        assert!(losses.iter().all(|l| l.is_finite()));
        let head: f64 = losses[..10].iter().sum();
        let tail: f64 = losses[110..].iter().sum();
        assert!(tail < head, "loss did not fall: {head} -> {tail}");
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
    let o = mdcn(&[
        "train",
        "--config",
        p(&config),
        "--data",
        p(&data),
        "--out",
        p(&root.path().join("other.ckpt")),
        "--seed",
        "5",
        "--report-every",
        "0",
    ]);
    assert!(o.status.success());
    assert_ne!(fs::read(root.path().join("other.ckpt")).unwrap(), checkpoints[0]);
}

#[test]
fn train_config_errors_exit_2_naming_the_field() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 1, 24, "2", 0);
    let mut value: serde_json::Value = serde_json::from_str(&tiny_run_config(&[2], 2).to_json()).unwrap();
    value["train"].as_object_mut().unwrap().remove("batch_size");
    let missing = root.path().join("missing.json");
    fs::write(&missing, value.to_string()).unwrap();
    let o = mdcn(&[
        "train",
        "--config",
        p(&missing),
        "--data",
        p(&data),
        "--out",
        p(&root.path().join("m.ckpt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batch_size"), "{}", stderr(&o));

    let mut value: serde_json::Value = serde_json::from_str(&tiny_run_config(&[2], 2).to_json()).unwrap();
    value["model"]["dropout"] = serde_json::json!(0.1);
    let unknown = root.path().join("unknown.json");
    fs::write(&unknown, value.to_string()).unwrap();
    let o = mdcn(&[
        "train",
        "--config",
        p(&unknown),
        "--data",
        p(&data),
        "--out",
        p(&root.path().join("u.ckpt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dropout"), "{}", stderr(&o));

    let o = mdcn(&[
        "train",
        "--config",
        p(&root.path().join("absent.json")),
        "--data",
        p(&data),
        "--out",
        p(&root.path().join("a.ckpt")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_on_missing_factor_is_a_data_error() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 1, 24, "2", 0);
    let config = root.path().join("cfg.json");
    fs::write(&config, tiny_run_config(&[3], 2).to_json()).unwrap();
    let o = mdcn(&[
        "train",
        "--config",
        p(&config),
        "--data",
        p(&data),
        "--out",
        p(&root.path().join("m.ckpt")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_with_numeric_code() {
    // an absurd learning rate blows the weights up after the first step
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 2, 24, "2", 0);
    let mut cfg = tiny_run_config(&[2], 50);
    cfg.train.base_lr = 1e30;
    let config = root.path().join("cfg.json");
    fs::write(&config, cfg.to_json()).unwrap();
    let o = mdcn(&[
        "train",
        "--config",
        p(&config),
        "--data",
        p(&data),
        "--out",
        p(&root.path().join("m.ckpt")),
        "--report-every",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite loss at iteration"), "{}", stderr(&o));
}

fn checkpoint(root: &Path, config: ModelConfig, zero: bool) -> PathBuf {
    let mut model: Model<f32> = Model::new(config, 1).unwrap();
    if zero {
        for (_, param) in model.params.iter_mut() {
            param.value = param.value.map(|_| 0.0);
        }
    }
    let path = root.join(if zero { "zero.ckpt" } else { "model.ckpt" });
    save_checkpoint(&model.params, &model.config, &path).unwrap();
    path
}

#[test]
fn sr_sizes_and_errors() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = checkpoint(root.path(), ModelConfig::tiny(2, 8, &[2, 3]), false);
    let input = root.path().join("in.png");
    save_image(&synthetic_image(24, 24, 1), &input).unwrap();

    let out = root.path().join("x2.png");
    let o = mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--factor",
        "2",
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = load_image(&out).unwrap();
    assert_eq!((img.width(), img.height()), (48, 48));

    let out = root.path().join("x3.2.ppm");
    let o = mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--fractional",
        "3.2",
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = load_image(&out).unwrap();
    assert_eq!((img.width(), img.height()), (77, 77));

    let o = mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--factor",
        "4",
        "--output",
        p(&root.path().join("x4.png")),
    ]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("x2, x3"), "{}", stderr(&o));

    let o = mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--fractional",
        "0.5",
        "--output",
        p(&root.path().join("bad.png")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--output",
        p(&root.path().join("none.png")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let garbage = root.path().join("garbage.ckpt");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    let o = mdcn(&[
        "sr",
        "--ckpt",
        p(&garbage),
        "--input",
        p(&input),
        "--factor",
        "2",
        "--output",
        p(&root.path().join("g.png")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn self_ensemble_of_zero_model_matches_plain_output() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = checkpoint(root.path(), ModelConfig::tiny(2, 8, &[2]), true);
    let input = root.path().join("flat.png");
    save_image(&Image::filled(10, 6, [90, 140, 30]).unwrap(), &input).unwrap();
    let (plain, ens) = (root.path().join("plain.png"), root.path().join("ens.png"));
    assert!(mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--factor",
        "2",
        "--output",
        p(&plain)
    ])
    .status
    .success());
    assert!(mdcn(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--input",
        p(&input),
        "--factor",
        "2",
        "--self-ensemble",
        "--output",
        p(&ens)
    ])
    .status
    .success());
    assert_eq!(load_image(&plain).unwrap(), load_image(&ens).unwrap());
}

fn parse_table(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn eval_table_has_baseline_and_exact_mean() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 4, 30, "2,3", 3);
    let ckpt = checkpoint(root.path(), ModelConfig::tiny(2, 8, &[2, 3]), false);
    let out = root.path().join("eval.tsv");
    let o = mdcn(&[
        "eval",
        "--ckpt",
        p(&ckpt),
        "--data",
        p(&data),
        "--factor",
        "3",
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), stdout(&o));
    let rows = parse_table(&stdout(&o));
    assert_eq!(rows[0].join("\t"), EVAL_HEADER);
    assert_eq!(rows.len(), 1 + 3 + 1);
    let body = &rows[1..4];
    for r in body {
        assert_eq!(r.len(), 8);
        assert_eq!(r[1], "3");
        assert!(r[5].parse::<f64>().unwrap().is_finite(), "bicubic psnr {:?}", r);
    }
    let mean = &rows[4];
    assert_eq!(mean[0], "mean");
    for col in 2..8 {
        let avg = body.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 3.0;
        assert!((mean[col].parse::<f64>().unwrap() - avg).abs() <= 1e-9, "column {col}");
    }

    let o = mdcn(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--factor", "4"]);
    assert_eq!(o.status.code(), Some(5));
    let o = mdcn(&[
        "eval",
        "--ckpt",
        p(&ckpt),
        "--data",
        p(&data),
        "--factor",
        "2",
        "--split",
        "train",
        "--self-ensemble",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(parse_table(&stdout(&o)).len(), 1 + 1 + 1);
}

#[test]
fn evaluating_ground_truth_gives_infinite_psnr() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 2, 30, "2", 2);
    let pairs = load_split(&data, Split::Val, 2).unwrap();
    let rows = evaluate(&pairs, 2, |pair| Ok(pair.hr.clone())).unwrap();
    assert!(rows
        .iter()
        .all(|r| r.model.psnr_db == f64::INFINITY && r.model.rmse == 0.0 && r.model.ssim == 1.0));
    assert!(rows.iter().all(|r| r.bicubic.psnr_db.is_finite()));
    let table = eval_table(&rows).unwrap();
    assert!(table.lines().skip(1).all(|l| l.split('\t').nth(2) == Some("inf")));
}

#[test]
fn ablation_case_switches() {
    let c1 = AblationCase::get(1).unwrap().model_config(3);
    let c3 = AblationCase::get(3).unwrap().model_config(3);
    assert_eq!(
        ModelConfig {
            paths: c3.paths,
            ..c1.clone()
        },
        c3
    );
    assert_ne!(c1.paths, c3.paths);
    let c4 = AblationCase::get(4).unwrap().model_config(3);
    let c5 = AblationCase::get(5).unwrap().model_config(3);
    assert!(!c4.residual && c5.residual);
    assert_eq!(
        ModelConfig {
            residual: true,
            ..c4.clone()
        },
        c5
    );
    assert_eq!(ModelConfig { fefm: false, ..c4 }, c3);
    for c in CASES {
        c.model_config(3).validate().unwrap();
    }
    let sizes: Vec<(usize, usize)> = CASES.iter().map(|c| (c.n_blocks, c.channels)).collect();
    assert_eq!(
        sizes,
        [(2, 16), (2, 16), (2, 16), (2, 16), (2, 16), (2, 16), (4, 16), (4, 32)]
    );
    assert!(matches!(AblationCase::get(9), Err(Error::Config { .. })));
}

#[test]
fn ablation_table_rows_and_median() {
    let runs: Vec<AblationRun> = [
        (1, 0, 30.0),
        (1, 1, 31.0),
        (1, 2, 29.0),
        (4, 0, 32.0),
        (4, 1, 30.5),
        (4, 2, 31.5),
    ]
    .into_iter()
    .map(|(case, seed, val_psnr)| AblationRun { case, seed, val_psnr })
    .collect();
    let table = ablation_table(&runs);
    let rows = parse_table(&table);
    assert_eq!(rows.len(), 1 + 2 * (3 + 1));
    assert_eq!(rows[4], ["1", "median", "30"]);
    assert_eq!(rows[8], ["4", "median", "31.5"]);
    assert_eq!(median(&[1.0, 4.0, 2.0, 3.0]), 2.5);
}

#[test]
fn ablate_command_runs_and_rejects_bad_cases() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path(), 3, 30, "3", 1);
    let o = mdcn(&[
        "ablate",
        "--case",
        "1,2",
        "--data",
        p(&data),
        "--budget",
        "2",
        "--seeds",
        "0,1",
        "--batch-size",
        "2",
        "--hr-patch",
        "12",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_table(&stdout(&o));
    assert_eq!(rows.len(), 1 + 2 * 2 + 2);
    assert_eq!(rows[0], ["case", "seed", "val_psnr"]);
    assert_eq!(rows[3][1], "median");
    let o = mdcn(&["ablate", "--case", "9", "--data", p(&data), "--budget", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diag_param_count_breakdown() {
    let o = mdcn(&["diag", "param-count"]);
    assert!(o.status.success());
    let rows = parse_table(&stdout(&o));
    assert_eq!(rows[0], ["partition", "parameters"]);
    let parts: usize = rows[1..rows.len() - 1]
        .iter()
        .map(|r| r[1].parse::<usize>().unwrap())
        .sum();
    let total = rows.last().unwrap();
    assert_eq!(total[0], "total");
    assert_eq!(total[1].parse::<usize>().unwrap(), parts);
    assert_eq!(parts, enumerate_param_count(&ModelConfig::full()));
    let names: Vec<&str> = rows[1..rows.len() - 1].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["trunk", "head:2", "head:3", "head:4"]);

    let root = tempfile::tempdir().unwrap();
    let tiny = ModelConfig::tiny(3, 8, &[2, 4]);
    let bare = root.path().join("model.json");
    fs::write(&bare, tiny.to_json()).unwrap();
    let run = root.path().join("run.json");
    fs::write(
        &run,
        RunConfig {
            model: tiny.clone(),
            ..tiny_run_config(&[2], 1)
        }
        .to_json(),
    )
    .unwrap();
    for path in [&bare, &run] {
        let o = mdcn(&["diag", "param-count", "--config", p(path)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let rows = parse_table(&stdout(&o));
        assert_eq!(
            rows.last().unwrap()[1].parse::<usize>().unwrap(),
            enumerate_param_count(&tiny)
        );
    }
    assert_eq!(
        param_count_report(&tiny).unwrap(),
        stdout(&mdcn(&["diag", "param-count", "--config", p(&bare)]))
    );
}

#[test]
fn diag_grad_check_passes() {
    let o = mdcn(&["diag", "grad-check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_table(&stdout(&o));
    assert!(rows.len() > 20);
    assert!(rows[1..].iter().all(|r| r[0].starts_with("grad/") && r[8] == "pass"));
}

#[test]
fn exit_codes_are_disjoint_by_class() {
    let codes = [
        exit_code(&Error::config("x", "y")),
        exit_code(&Error::Data("d".into())),
        exit_code(&Error::NonFinite {
            iteration: 0,
            factor: 2,
            lr: 1.0,
        }),
        exit_code(&Error::UnsupportedFactor {
            factor: 3,
            available: vec![2],
        }),
    ];
    assert_eq!(codes, [2, 3, 4, 5]);
    assert_eq!(exit_code(&Error::Truncated { offset: 0, needed: 1 }), 3);
}

#[test]
fn run_config_round_trips_and_checks_heads() {
    let cfg = tiny_run_config(&[2, 3], 10);
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    let mut bad = cfg.clone();
    bad.train.factors = vec![4];
    bad.train.hr_patch = 16;
    assert!(matches!(RunConfig::from_json(&bad.to_json()), Err(Error::Config { field, .. }) if field == "factors"));
}
