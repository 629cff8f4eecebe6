//! Geo-aware hard mining of training triplets.
//!
//! The positive is the geographically close panorama (within
//! `positive_radius_m`) whose best window is nearest to the query in feature
//! space. Negatives are the feature-nearest panoramas among a seeded random
//! pool of geographically far ones (beyond `negative_exclusion_radius_m`).

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{Descriptor, PanoDescriptor};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::retrieval::window_distance;

#[derive(Debug, Clone, PartialEq)]
pub struct MiningConfig {
    pub positive_radius_m: f64,
    pub negative_exclusion_radius_m: f64,
    pub negatives_per_query: usize,
    /// Size of the random far-pool negatives are mined from.
    pub partial_pool_size: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            positive_radius_m: 10.0,
            negative_exclusion_radius_m: 25.0,
            negatives_per_query: 10,
            partial_pool_size: 200,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_radius_m > 0.0) {
            return Err(Error::Config("positive radius must be positive".into()));
        }
        if !(self.negative_exclusion_radius_m >= self.positive_radius_m) {
            return Err(Error::Config(format!(
                "negative exclusion radius {} is below the positive radius {}",
                self.negative_exclusion_radius_m, self.positive_radius_m
            )));
        }
        if self.negatives_per_query == 0 {
            return Err(Error::Config("need at least one negative per query".into()));
        }
        if self.partial_pool_size < self.negatives_per_query {
            return Err(Error::Config(format!(
                "partial pool size {} is smaller than negatives per query {}",
                self.partial_pool_size, self.negatives_per_query
            )));
        }
        Ok(())
    }
}

/// A query with its mined positive and negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet<I> {
    pub query_id: I,
    pub positive_id: I,
    pub negative_ids: Vec<I>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MiningOutcome<I> {
    Triplet(TripletSet<I>),
    /// No database panorama lies within the positive radius.
    NoPositive(I),
}

/// One database panorama as seen by the miner.
#[derive(Debug, Clone)]
pub struct MiningEntry<'a, I> {
    pub id: I,
    pub geo: GeoPoint,
    pub descriptor: &'a PanoDescriptor,
}

/// Ids within `radius_m` of `center`, nearest first. Equal distances keep
/// input order.
pub fn geo_neighbors<I: Clone>(
    center: &GeoPoint,
    database_geos: &[(I, GeoPoint)],
    radius_m: f64,
) -> Vec<I> {
    let mut hits: Vec<(f64, usize)> = database_geos
        .iter()
        .enumerate()
        .filter_map(|(i, (_, g))| {
            let d = center.distance_m(g);
            (d <= radius_m).then_some((d, i))
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.into_iter()
        .map(|(_, i)| database_geos[i].0.clone())
        .collect()
}

/// Mine one triplet. Deterministic for a given `seed`.
pub fn mine_triplet<I: Ord + Clone>(
    query_id: I,
    query: &Descriptor,
    query_geo: &GeoPoint,
    database: &[MiningEntry<'_, I>],
    cfg: &MiningConfig,
    norm_p: f64,
    seed: u64,
) -> Result<MiningOutcome<I>> {
    cfg.validate()?;

    let mut positive: Option<(f64, &I)> = None;
    let mut far = Vec::new();
    for (i, entry) in database.iter().enumerate() {
        let geo_d = query_geo.distance_m(&entry.geo);
        if geo_d <= cfg.positive_radius_m {
            let d = window_distance(query, entry.descriptor, norm_p)?.distance;
            let better = match positive {
                None => true,
                Some((best, best_id)) => d < best || (d == best && entry.id < *best_id),
            };
            if better {
                positive = Some((d, &entry.id));
            }
        } else if geo_d > cfg.negative_exclusion_radius_m {
            far.push(i);
        }
    }

    let Some((_, positive_id)) = positive else {
        debug!(
            "query has no panorama within {} m; skipped",
            cfg.positive_radius_m
        );
        return Ok(MiningOutcome::NoPositive(query_id));
    };
    if far.len() < cfg.negatives_per_query {
        return Err(Error::Config(format!(
            "only {} panoramas lie beyond {} m, need {} negatives",
            far.len(),
            cfg.negative_exclusion_radius_m,
            cfg.negatives_per_query
        )));
    }

    let pool: Vec<usize> = if cfg.partial_pool_size >= far.len() {
        far
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> =
            rand::seq::index::sample(&mut rng, far.len(), cfg.partial_pool_size)
                .into_iter()
                .map(|k| far[k])
                .collect();
        picked.sort_unstable();
        picked
    };

    let mut scored = pool
        .into_iter()
        .map(|i| {
            let d = window_distance(query, database[i].descriptor, norm_p)?.distance;
            Ok((d, i))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| database[a.1].id.cmp(&database[b.1].id))
    });

    Ok(MiningOutcome::Triplet(TripletSet {
        query_id,
        positive_id: positive_id.clone(),
        negative_ids: scored
            .into_iter()
            .take(cfg.negatives_per_query)
            .map(|(_, i)| database[i].id.clone())
            .collect(),
    }))
}
