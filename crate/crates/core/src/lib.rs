//! Masked discrete diffusion over fragment-structured molecular sequences.

pub mod denoiser;
pub mod diffusion;
pub mod grammar;
pub mod guidance;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod sampler;
pub mod tasks;

pub use denoiser::{
    Checkpoint, Denoiser, DenoiserError, ModelConfig, OracleDenoiser, TinyDenoiser, TrainConfig,
};
pub use diffusion::{DenoiserOutput, NoiseSchedule, SeqState, LOG_ZERO};
pub use grammar::{MolGraph, TokenId, TokenTable, MASK_ID, PAD_ID};
pub use guidance::GuidanceParams;
pub use metrics::{set_metrics, SetMetrics};
pub use optimizer::{optimize, Mode, OptimizerConfig, OptimizerError, RunRecord, RunResult};
pub use sampler::{generate, generate_standard, Generation, LengthModel, SamplerParams, Template};
pub use tasks::{task_template, Task, TaskError};
