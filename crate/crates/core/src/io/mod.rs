//! On-disk formats: NPY arrays plus the JSON documents that reference them.

pub mod npy;
mod specs;

pub use npy::{read_array, read_feature_map, read_matrix, read_vectors, write_array, NpyArray};
pub use specs::{
    load_embeddings, load_references, read_json, BlendSpec, BlendStyle, PromptCatalog,
    ReferenceEntry,
};
