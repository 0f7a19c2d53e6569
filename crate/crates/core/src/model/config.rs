use serde::{Deserialize, Serialize};

use crate::blocks::{BlockKind, Hierarchy, Paths};
use crate::error::{Error, Result};

pub const SUPPORTED_FACTORS: [u32; 3] = [2, 3, 4];

/// Architecture hyper-parameters. Serialised as JSON with exactly these field names.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub channels: usize,
    pub hfdb_inner: usize,
    pub cam_reduction: usize,
    pub factors: Vec<u32>,
    pub block_kind: BlockKind,
    pub hierarchy: Hierarchy,
    pub fefm: bool,
    pub residual: bool,
    /// Dense paths of each MDCB; only the ablation study uses single paths.
    #[serde(default)]
    pub paths: Paths,
}

/// HFDB bottleneck width: 96 at full width, otherwise `max(⌈C/2⌉, 4)` kept below `C`.
pub fn default_hfdb_inner(channels: usize) -> usize {
    if channels >= 128 {
        96
    } else {
        channels.div_ceil(2).max(4).min(channels.saturating_sub(1)).max(1)
    }
}

impl ModelConfig {
    /// The full-size configuration: 12 MDCBs of width 128, HFDB, factors ×2/×3/×4.
    pub fn full() -> Self {
        ModelConfig {
            n_blocks: 12,
            channels: 128,
            hfdb_inner: 96,
            cam_reduction: 16,
            factors: SUPPORTED_FACTORS.to_vec(),
            block_kind: BlockKind::Mdcb,
            hierarchy: Hierarchy::Hfdb,
            fefm: true,
            residual: true,
            paths: Paths::Dual,
        }
    }

    /// Full-featured MDCN at desk scale.
    pub fn tiny(n_blocks: usize, channels: usize, factors: &[u32]) -> Self {
        ModelConfig {
            n_blocks,
            channels,
            hfdb_inner: default_hfdb_inner(channels),
            factors: factors.to_vec(),
            ..ModelConfig::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 1 {
            return Err(Error::config("n_blocks", "must be at least 1"));
        }
        if self.channels < 4 {
            return Err(Error::config("channels", "must be at least 4"));
        }
        if self.hfdb_inner < 1 {
            return Err(Error::config("hfdb_inner", "must be at least 1"));
        }
        if self.cam_reduction < 1 {
            return Err(Error::config("cam_reduction", "must be at least 1"));
        }
        if self.factors.is_empty() {
            return Err(Error::config("factors", "must not be empty"));
        }
        for (i, f) in self.factors.iter().enumerate() {
            if !SUPPORTED_FACTORS.contains(f) {
                return Err(Error::config("factors", format!("x{f} is not one of x2, x3, x4")));
            }
            if self.factors[..i].contains(f) {
                return Err(Error::config("factors", format!("x{f} is listed twice")));
            }
        }
        if self.hierarchy == Hierarchy::Hfdb && self.hfdb_inner >= self.channels {
            return Err(Error::config(
                "hfdb_inner",
                format!("must be below channels ({}) when hierarchy is HFDB", self.channels),
            ));
        }
        if self.hierarchy != Hierarchy::A && self.n_blocks < 2 {
            return Err(Error::config(
                "hierarchy",
                "aggregating intermediate outputs needs n_blocks >= 2",
            ));
        }
        if self.paths != Paths::Dual && self.block_kind != BlockKind::Mdcb {
            return Err(Error::config(
                "paths",
                "single-path variants exist only for mdcb blocks",
            ));
        }
        if self.fefm && self.block_kind == BlockKind::Mdcb && self.paths != Paths::Dual {
            return Err(Error::config("fefm", "feature exchange needs both dense paths"));
        }
        Ok(())
    }

    pub fn supports(&self, factor: u32) -> bool {
        self.factors.contains(&factor)
    }

    pub fn sorted_factors(&self) -> Vec<u32> {
        let mut f = self.factors.clone();
        f.sort_unstable();
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text).map_err(json_config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Maps a serde error onto a configuration error naming the offending field
/// where serde reports one.
pub fn json_config_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|p| {
            let start = msg.find(p)? + p.len();
            let end = msg[start..].find('`')? + start;
            Some(msg[start..end].to_string())
        })
        .unwrap_or_else(|| "<json>".to_string());
    Error::config(field, msg)
}
