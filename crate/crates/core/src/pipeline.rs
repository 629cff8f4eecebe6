//! Glue shared by evaluation, training and the CLI: labeled images and
//! batch encoding of databases and queries.

use image::RgbImage;
use rayon::prelude::*;

use crate::dataset::{resize_to_window, SynthDataset};
use crate::encoder::{encode_pano, Descriptor, Encoder, PanoDescriptor};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::windowing::WindowConfig;

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub id: String,
    pub image: RgbImage,
    pub geo: GeoPoint,
}

/// Database panoramas plus the queries to evaluate against them.
#[derive(Debug, Clone, Default)]
pub struct EvalSet {
    pub database: Vec<LabeledImage>,
    pub queries: Vec<LabeledImage>,
}

impl EvalSet {
    /// Shared `(width, height)` of the database panoramas.
    pub fn pano_dims(&self) -> Result<(u32, u32)> {
        pano_dims(&self.database)
    }
}

impl From<&SynthDataset> for EvalSet {
    fn from(ds: &SynthDataset) -> Self {
        Self {
            database: ds
                .database
                .iter()
                .map(|p| LabeledImage {
                    id: p.id.clone(),
                    image: p.image.clone(),
                    geo: p.geo,
                })
                .collect(),
            queries: ds
                .queries
                .iter()
                .map(|q| LabeledImage {
                    id: q.id.clone(),
                    image: q.image.clone(),
                    geo: q.geo,
                })
                .collect(),
        }
    }
}

pub(crate) fn pano_dims(database: &[LabeledImage]) -> Result<(u32, u32)> {
    let first = database
        .first()
        .ok_or_else(|| Error::Argument("database is empty".into()))?;
    let dims = first.image.dimensions();
    if let Some(odd) = database.iter().find(|p| p.image.dimensions() != dims) {
        return Err(Error::Argument(format!(
            "panorama `{}` is {:?}, expected {:?} like the rest of the database",
            odd.id,
            odd.image.dimensions(),
            dims
        )));
    }
    Ok(dims)
}

/// Window-encode every panorama, in database order.
pub fn encode_database<E: Encoder + ?Sized>(
    database: &[LabeledImage],
    encoder: &E,
    config: &WindowConfig,
) -> Result<Vec<(String, PanoDescriptor)>> {
    database
        .par_iter()
        .map(|p| Ok((p.id.clone(), encode_pano(&p.image, encoder, config)?)))
        .collect()
}

/// Resize each query to the window shape, then encode.
pub fn encode_queries<E: Encoder + ?Sized>(
    queries: &[LabeledImage],
    encoder: &E,
    window_len_px: u32,
    pano_height_px: u32,
) -> Result<Vec<Descriptor>> {
    queries
        .par_iter()
        .map(|q| encoder.encode(&resize_to_window(&q.image, window_len_px, pano_height_px)?))
        .collect()
}
