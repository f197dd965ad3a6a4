//! Labeled signature store and exhaustive K-nearest-neighbour matching.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnnError {
    #[error("vector length {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("k = {k} exceeds gallery size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("k must be 1, 3 or 5, got {0}")]
    InvalidK(usize),
    #[error("gallery labels must be non-empty")]
    EmptyLabel,
    #[error("unknown metric {0:?} (expected manhattan or euclidean)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    Manhattan,
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Manhattan => "manhattan",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = KnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manhattan" => Ok(Metric::Manhattan),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(KnnError::UnknownMetric(other.to_string())),
        }
    }
}

/// Neighbour count; only 1, 3 and 5 are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NeighborCount(usize);

impl NeighborCount {
    pub const ONE: NeighborCount = NeighborCount(1);
    pub const THREE: NeighborCount = NeighborCount(3);
    pub const FIVE: NeighborCount = NeighborCount(5);

    pub fn new(k: usize) -> Result<Self, KnnError> {
        match k {
            1 | 3 | 5 => Ok(Self(k)),
            _ => Err(KnnError::InvalidK(k)),
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for NeighborCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// L1 or L2 distance, accumulated in `f64`.
pub fn distance(a: &[f32], b: &[f32], metric: Metric) -> Result<f64, KnnError> {
    if a.len() != b.len() {
        return Err(KnnError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(distance_unchecked(a, b, metric))
}

#[inline]
fn distance_unchecked(a: &[f32], b: &[f32], metric: Metric) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| f64::from(*x) - f64::from(*y));
    match metric {
        Metric::Manhattan => diffs.map(f64::abs).sum(),
        Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub label: String,
    pub values: Vec<f32>,
}

/// Insertion-ordered entries of one dimensionality. Order matters: distance
/// ties go to the earlier entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gallery {
    entries: Vec<GalleryEntry>,
    dim: Option<usize>,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(entries: impl IntoIterator<Item = GalleryEntry>) -> Result<Self, KnnError> {
        let mut g = Self::new();
        for e in entries {
            g.add(e)?;
        }
        Ok(g)
    }

    pub fn add(&mut self, entry: GalleryEntry) -> Result<(), KnnError> {
        if entry.label.is_empty() {
            return Err(KnnError::EmptyLabel);
        }
        match self.dim {
            Some(d) if d != entry.values.len() => {
                return Err(KnnError::DimensionMismatch {
                    expected: d,
                    got: entry.values.len(),
                })
            }
            None => self.dim = Some(entry.values.len()),
            _ => {}
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dimensionality, once the first entry fixes it.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    /// The `k` closest entries, ordered by distance then entry index.
    pub fn nearest(&self, query: &[f32], k: usize, metric: Metric) -> Result<Vec<Neighbor>, KnnError> {
        let dim = self.dim.ok_or(KnnError::EmptyGallery)?;
        if query.len() != dim {
            return Err(KnnError::DimensionMismatch {
                expected: dim,
                got: query.len(),
            });
        }
        if k > self.len() {
            return Err(KnnError::KTooLarge { k, size: self.len() });
        }
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        for (index, e) in self.entries.iter().enumerate() {
            let d = distance_unchecked(query, &e.values, metric);
            // strict comparison keeps the earlier entry ahead on ties
            if best.len() == k && (d.is_nan() || d >= best[k - 1].distance) {
                continue;
            }
            let pos = best.partition_point(|n| n.distance <= d);
            best.insert(
                pos,
                Neighbor {
                    index,
                    distance: d,
                },
            );
            best.truncate(k);
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: String,
    pub neighbors: Vec<Neighbor>,
}

/// Majority vote among the `k` nearest entries.
///
/// Vote ties go to the label with the smaller summed neighbour distance,
/// then to the label whose nearest member has the lower entry index.
pub fn knn_classify(query: &[f32], gallery: &Gallery, k: NeighborCount, metric: Metric) -> Result<Classification, KnnError> {
    let neighbors = gallery.nearest(query, k.get(), metric)?;
    // (label, votes, summed distance, lowest index), in first-seen order
    let mut tally: Vec<(&str, usize, f64, usize)> = Vec::with_capacity(neighbors.len());
    for n in &neighbors {
        let label = gallery.entries[n.index].label.as_str();
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => {
                t.1 += 1;
                t.2 += n.distance;
                t.3 = t.3.min(n.index);
            }
            None => tally.push((label, 1, n.distance, n.index)),
        }
    }
    let winner = tally
        .iter()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.2.total_cmp(&b.2))
                .then(a.3.cmp(&b.3))
        })
        .expect("k >= 1 neighbours");
    Ok(Classification {
        label: winner.0.to_string(),
        neighbors,
    })
}
