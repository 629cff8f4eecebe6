//! Manifest-backed image loading and encoder selection.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use panowindow::dataset::{load_rgb, read_embeddings, Manifest, Role};
use panowindow::encoder::{Encoder, PanoDescriptor};
use panowindow::training::load_checkpoint;
use panowindow::{Descriptor, EncoderSpec, LabeledImage, WindowLayout};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::args::EncoderArgs;
use crate::error::{CliError, CliResult};

pub fn load_images(manifest: &Manifest, role: Role) -> CliResult<Vec<LabeledImage>> {
    let records: Vec<_> = manifest.records.iter().filter(|r| r.role == role).collect();
    records
        .par_iter()
        .map(|r| {
            Ok(LabeledImage {
                id: r.id.clone(),
                image: load_rgb(&manifest.resolve(r))?,
                geo: r.geo,
            })
        })
        .collect()
}

/// Shared `(width, height)` of the database images, read from headers only.
pub fn database_dims(manifest: &Manifest) -> CliResult<(u32, u32)> {
    let mut dims = None;
    for r in manifest.database() {
        let path = manifest.resolve(r);
        let d = image::image_dimensions(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(CliError::Data(format!(
                    "panorama `{}` is {}x{}, expected {}x{}",
                    r.id, d.0, d.1, first.0, first.1
                )))
            }
            _ => {}
        }
    }
    dims.ok_or_else(|| CliError::Data("manifest has no database records".into()))
}

/// SHA-256 over the database records (id, path, coordinates) and the bytes
/// of every database image. Query records do not contribute, so one index
/// serves several query sets.
pub fn database_hash(manifest: &Manifest) -> CliResult<String> {
    let mut h = Sha256::new();
    for r in manifest.database() {
        h.update(format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.id,
            r.path.display(),
            r.geo.easting_m,
            r.geo.northing_m,
            file_sha256(&manifest.resolve(r))?
        ));
    }
    Ok(hex::encode(h.finalize()))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Descriptors supplied from outside, grouped by id in file order.
pub struct ExternalEmbeddings {
    sha256: String,
    groups: HashMap<String, Vec<Descriptor>>,
}

impl ExternalEmbeddings {
    pub fn load(path: &Path) -> CliResult<Self> {
        let sha256 = file_sha256(path)?;
        let file = read_embeddings(path)?;
        let mut groups: HashMap<String, Vec<Descriptor>> = HashMap::new();
        for (id, v) in file.records {
            groups
                .entry(id)
                .or_default()
                .push(Descriptor::from_values(v));
        }
        Ok(Self { sha256, groups })
    }

    pub fn pano(&self, id: &str, layout: &WindowLayout) -> CliResult<PanoDescriptor> {
        let windows = self
            .groups
            .get(id)
            .ok_or_else(|| CliError::Data(format!("no embeddings for database id `{id}`")))?;
        if windows.len() != layout.len() {
            return Err(CliError::Mismatch(format!(
                "`{id}` has {} window embeddings but the layout has {} windows",
                windows.len(),
                layout.len()
            )));
        }
        Ok(PanoDescriptor::new(windows.clone(), layout.clone())?)
    }

    pub fn query(&self, id: &str) -> CliResult<Descriptor> {
        match self.groups.get(id).map(Vec::as_slice) {
            Some([d]) => Ok(d.clone()),
            Some(many) => Err(CliError::Data(format!(
                "query id `{id}` has {} embeddings, expected 1",
                many.len()
            ))),
            None => Err(CliError::Data(format!("no embeddings for query id `{id}`"))),
        }
    }
}

pub enum EncoderChoice {
    Builtin(EncoderSpec),
    External(ExternalEmbeddings),
}

impl EncoderChoice {
    pub fn from_args(args: &EncoderArgs) -> CliResult<Self> {
        if let Some(path) = &args.embeddings {
            return Ok(Self::External(ExternalEmbeddings::load(path)?));
        }
        if !(args.gem_p > 0.0 && args.gem_p.is_finite()) {
            return Err(CliError::Usage(format!(
                "--gem-p must be positive, got {}",
                args.gem_p
            )));
        }
        let mut spec = EncoderSpec {
            gem_p: args.gem_p,
            ..EncoderSpec::default()
        };
        if let Some(path) = &args.checkpoint {
            spec = spec.with_projection(load_checkpoint(path)?);
        }
        Ok(Self::Builtin(spec))
    }

    /// Recorded in the index and compared at query time.
    pub fn fingerprint(&self) -> String {
        match self {
            Self::Builtin(spec) => spec.fingerprint(),
            Self::External(x) => format!("external:{}", x.sha256),
        }
    }
}
