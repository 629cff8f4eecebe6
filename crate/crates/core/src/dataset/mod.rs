//! Manifests, image I/O, the `PVPR` embedding format and the synthetic
//! dataset generator.

pub mod embeddings;
pub mod imageio;
pub mod manifest;
pub mod synth;

pub use embeddings::{read_embeddings, write_embeddings, EmbeddingFile};
pub use imageio::{load_rgb, resize_to_window, save_png};
pub use manifest::{load_manifest, write_manifest, ImageRecord, Manifest, Role};
pub use synth::{synth_dataset, SynthDataset, SynthPano, SynthParams, SynthQuery};
