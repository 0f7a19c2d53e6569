use mdcn::blocks::{BlockKind, Hierarchy, Paths};
use mdcn::data::{PairSet, SrPair};
use mdcn::model::{default_hfdb_inner, Model, ModelConfig};
use mdcn::optim::{train, TrainConfig};
use mdcn::{Error, Result};

use crate::eval::{evaluate_model, means};

/// One column of the block study: which MDCB mechanisms are on and the
/// network size, already reduced to desk scale (3 → 2 and 6 → 4 blocks,
/// 128 → 16 and 256 → 32 channels).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AblationCase {
    pub index: usize,
    pub residual: bool,
    pub fefm: bool,
    pub paths: Paths,
    pub hfdb: bool,
    pub n_blocks: usize,
    pub channels: usize,
}

const fn case(
    index: usize,
    residual: bool,
    fefm: bool,
    paths: Paths,
    hfdb: bool,
    n_blocks: usize,
    channels: usize,
) -> AblationCase {
    AblationCase {
        index,
        residual,
        fefm,
        paths,
        hfdb,
        n_blocks,
        channels,
    }
}

pub const CASES: [AblationCase; 8] = [
    case(1, false, false, Paths::Top, false, 2, 16),
    case(2, false, false, Paths::Bottom, false, 2, 16),
    case(3, false, false, Paths::Dual, false, 2, 16),
    case(4, false, true, Paths::Dual, false, 2, 16),
    case(5, true, true, Paths::Dual, false, 2, 16),
    case(6, true, true, Paths::Dual, true, 2, 16),
    case(7, true, true, Paths::Dual, true, 4, 16),
    case(8, true, true, Paths::Dual, true, 4, 32),
];

impl AblationCase {
    pub fn get(index: usize) -> Result<Self> {
        CASES
            .iter()
            .find(|c| c.index == index)
            .copied()
            .ok_or_else(|| Error::config("case", format!("{index} is not a case index (1-8)")))
    }

    pub fn model_config(&self, factor: u32) -> ModelConfig {
        ModelConfig {
            n_blocks: self.n_blocks,
            channels: self.channels,
            hfdb_inner: default_hfdb_inner(self.channels),
            factors: vec![factor],
            block_kind: BlockKind::Mdcb,
            hierarchy: if self.hfdb { Hierarchy::Hfdb } else { Hierarchy::A },
            fefm: self.fefm,
            residual: self.residual,
            paths: self.paths,
            ..ModelConfig::full()
        }
    }
}

/// Shared training budget for every case and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSettings {
    pub factor: u32,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub hr_patch: usize,
    pub base_lr: f64,
}

impl AblationSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            hr_patch: self.hr_patch,
            base_lr: self.base_lr,
            iterations_per_epoch: self.iterations,
            epochs: 1,
            factors: vec![self.factor],
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationRun {
    pub case: usize,
    pub seed: u64,
    pub val_psnr: f64,
}

/// Trains the case once per seed and scores it on `val` (mean Y PSNR).
pub fn run_case(
    case: &AblationCase,
    settings: &AblationSettings,
    train_pairs: &PairSet,
    val: &[SrPair],
) -> Result<Vec<AblationRun>> {
    let config = case.model_config(settings.factor);
    settings
        .seeds
        .iter()
        .map(|&seed| {
            let mut model = Model::new(config.clone(), seed)?;
            train(&mut model, train_pairs, &settings.train_config(seed), |_| {})?;
            let rows = evaluate_model(&model, val, settings.factor, false)?;
            Ok(AblationRun {
                case: case.index,
                seed,
                val_psnr: means(&rows)?.psnr,
            })
        })
        .collect()
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub const ABLATION_HEADER: &str = "case\tseed\tval_psnr";

/// Per-seed rows of each case followed by that case's median row.
pub fn ablation_table(runs: &[AblationRun]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    let mut cases: Vec<usize> = runs.iter().map(|r| r.case).collect();
    cases.dedup();
    for c in cases {
        let of_case: Vec<&AblationRun> = runs.iter().filter(|r| r.case == c).collect();
        for r in &of_case {
            out.push_str(&format!("{}\t{}\t{}\n", r.case, r.seed, r.val_psnr));
        }
        let psnrs: Vec<f64> = of_case.iter().map(|r| r.val_psnr).collect();
        out.push_str(&format!("{c}\tmedian\t{}\n", median(&psnrs)));
    }
    out
}
