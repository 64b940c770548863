//! Spectral purification of cross-attention style embeddings.
//!
//! A style embedding injected as Key/Value into cross-attention is split by
//! SVD into a dominant (main) part and a low-energy (tail) part. The tail is
//! attenuated with a time-dependent exponential rule before the embedding is
//! used as the conditional input, and the isolated tail is reused as the
//! negative input of classifier-free guidance.
//!
//! Module map:
//!
//! - [`tensor`]: dense `f64` matrices and the `.csem` tensor file format
//! - [`manifest`]: per-layer embedding manifests
//! - [`svd`]: one-sided Jacobi thin SVD
//! - [`filter`]: tail suppression and main/tail splits
//! - [`schedule`]: suppression strength over denoising steps
//! - [`guidance`]: guidance combination and branch construction
//! - [`attention`]: cross-attention, joint and adapter injection
//! - [`sandbox`]: a synthetic sampler with planted content directions

pub mod attention;
pub mod error;
pub mod filter;
pub mod guidance;
pub mod manifest;
pub mod sandbox;
pub mod schedule;
pub mod svd;
pub mod tensor;

pub use attention::{adapter_attention, cross_attention, joint_attention, AttentionInputs};
pub use error::{Error, Result};
pub use filter::{split, suppress_sigma, Decomposition, FilterConfig, SpectralSplit};
pub use guidance::{build_branches, cfg_combine, GuidanceBranches, NegativeBranch};
pub use manifest::{EmbeddingManifest, LayerEntry};
pub use sandbox::{
    make_style_embedding, run_sampler, LeakageReport, PlantedEmbedding, SamplerMode,
    SandboxConfig, SyntheticStyleSpec,
};
pub use schedule::{ScheduleConfig, ScheduleVariant};
pub use svd::{reconstruct, svd, SvdFactors};
pub use tensor::{read_tensor, write_tensor, Matrix};
