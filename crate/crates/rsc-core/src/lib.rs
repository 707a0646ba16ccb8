//! Training workbench for representation self-challenging (RSC): a gradient-guided
//! feature-muting heuristic for cross-domain generalization, together with the
//! synthetic benchmarks and diagnostics needed to verify its behaviour.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense f64 tensors and a record/replay reverse-mode engine
//! - [`model`]: a small convolutional network split into a feature extractor
//!   (producing the representation `Z`) and a linear top classifier
//! - [`rsc`]: the self-challenging step — representation gradients, pooled
//!   weights, percentile masks, and the perturbed update
//! - [`data`]: seeded cross-domain generators with annotated core/spurious
//!   structure, plus file dumps
//! - [`train`]: the SGD loop, evaluation, feature-reliance probes, and the
//!   loss-difference recurrence check
//! - [`checks`]: self-contained diagnostic suites (driven by the CLI)
//!
//! Everything is deterministic: identical configs and seeds reproduce results
//! bitwise. Batch-level loops run on rayon when the `parallel` feature (default)
//! is enabled; the sequential fallback produces bitwise-identical output.

pub mod checks;
pub mod data;
pub mod error;
pub mod model;
pub mod rsc;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
