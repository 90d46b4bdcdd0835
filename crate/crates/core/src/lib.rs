//! Latent-space style blending toolkit.
//!
//! - [`blend`]: linear and spherical weighted blending of style vectors
//! - [`adain`]: adaptive instance normalization
//! - [`attention`]: shared attention with reference rescaling
//! - [`metrics`]: cosine-similarity style metrics (MS / WMS)
//! - [`fusion`]: multi-modal prompt fusion with pluggable paraphrasers
//! - [`schedule`] and [`sandbox`]: a seeded toy generation loop
//! - [`io`]: NPY and JSON file formats
//!
//! Heavy loops run on rayon when the `parallel` feature is enabled (default).

pub mod adain;
pub mod attention;
pub mod blend;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod par;
pub mod sandbox;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{channel_stats, softmax_rows, ChannelStats, FeatureMap, LatentVector, Matrix};
