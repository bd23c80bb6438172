//! Adversarial training against cluster pseudo-labels, checkpoints and
//! inference-time translation.

pub mod checkpoint;
pub mod config;
pub mod run;
pub mod state;

pub use checkpoint::{config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{AdamHyper, Preset, TrainConfig};
pub use run::{
    format_metrics_line, parse_metrics, resume, train, train_in_memory, translate, translate_styled, RunOutput,
    TRANSLATE_CHUNK,
};
pub use state::{
    critic_update, generator_update, init_state, sample_batch, step_rng, train_step, Batch, TrainState, RUNNING_DECAY,
};
