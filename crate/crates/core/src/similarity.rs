//! Aggregate-reading average and the data-similarity predicate that decides
//! cluster membership.

use thiserror::Error;

use crate::domain::{DataMessage, NeighborRecord};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("similarity threshold must be positive and finite, got {0}")]
pub struct InvalidThreshold(pub f64);

/// `CThresh`: the largest divergence (exclusive) still counted as similar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    cthresh: f64,
}

impl SimilarityParams {
    pub fn new(cthresh: f64) -> Result<Self, InvalidThreshold> {
        if cthresh > 0.0 && cthresh.is_finite() {
            Ok(SimilarityParams { cthresh })
        } else {
            Err(InvalidThreshold(cthresh))
        }
    }

    pub fn cthresh(&self) -> f64 {
        self.cthresh
    }
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams { cthresh: 3.0 }
    }
}

/// Neighbor-count weighted mean of the node's own reading and its cluster
/// members' aggregates: `(X + Σ aR·nR) / (1 + Σ nR)`.
///
/// With no neighbors this is exactly `own`.
pub fn aggregate_reading<'a, I>(own: f64, neighbors: I) -> f64
where
    I: IntoIterator<Item = &'a NeighborRecord>,
{
    let (num, den) = neighbors.into_iter().fold((own, 1u64), |(num, den), r| {
        (
            num + r.aggregate * f64::from(r.neighbor_count),
            den + u64::from(r.neighbor_count),
        )
    });
    num / den as f64
}

#[inline]
pub fn is_similar(candidate: f64, own_aggregate: f64, params: SimilarityParams) -> bool {
    (candidate - own_aggregate).abs() < params.cthresh
}

/// Both directions must hold: the remote reading against our aggregate and our
/// reading against the remote aggregate.
#[inline]
pub fn mutual_similarity(
    remote: &DataMessage,
    local_individual: f64,
    local_aggregate: f64,
    params: SimilarityParams,
) -> bool {
    is_similar(remote.individual().value(), local_aggregate, params)
        && is_similar(local_individual, remote.aggregate(), params)
}
