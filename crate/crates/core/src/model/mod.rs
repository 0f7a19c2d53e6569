//! The assembled network: configuration, parameters, forward pass,
//! inference helpers and checkpoints.

mod checkpoint;
mod config;
mod inference;
mod network;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{default_hfdb_inner, json_config_error, ModelConfig, SUPPORTED_FACTORS};
pub use inference::{self_ensemble, super_resolve, super_resolve_fractional};
pub use network::{
    bias_name, bind, build, forward_on_tape, inventory, param_breakdown, param_count, weight_name, HierarchyVars,
    LayerEntry, Model, ModelVars, StoreBinder,
};
pub use params::{Param, ParameterStore, Partition};
