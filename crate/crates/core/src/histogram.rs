//! Fixed-width, unit-mass histograms over a shared bin range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::SimilaritySample;

pub const DEFAULT_NBINS: usize = 50;

/// Support width given to samples whose values are all identical.
pub const DEGENERATE_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistogramError {
    #[error("invalid bin edges: lo {lo}, hi {hi}, nbins {nbins}")]
    InvalidEdges { lo: f64, hi: f64, nbins: usize },
    #[error("no values to bin")]
    EmptySample,
    #[error("value {value} outside bin range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("expected {expected} bin counts, got {found}")]
    CountLength { expected: usize, found: usize },
}

impl HistogramError {
    pub fn code(&self) -> &'static str {
        match self {
            HistogramError::InvalidEdges { .. } => "invalid-edges",
            HistogramError::EmptySample => "empty-sample",
            HistogramError::OutOfRange { .. } => "out-of-range",
            HistogramError::CountLength { .. } => "count-length",
        }
    }
}

/// `nbins` equal-width bins spanning `[lo, hi]`; every bin is left-closed,
/// the last one is also right-closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEdges {
    lo: f64,
    hi: f64,
    nbins: usize,
}

impl BinEdges {
    pub fn new(lo: f64, hi: f64, nbins: usize) -> Result<Self, HistogramError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo && nbins >= 2 && (hi - lo) / (nbins as f64) > 0.0) {
            return Err(HistogramError::InvalidEdges { lo, hi, nbins });
        }
        Ok(BinEdges { lo, hi, nbins })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn nbins(&self) -> usize {
        self.nbins
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.nbins as f64
    }

    /// Left edge of bin `i`; `edge(nbins) == hi` exactly.
    pub fn edge(&self, i: usize) -> f64 {
        if i >= self.nbins {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    /// Bin holding `v`, `None` outside `[lo, hi]`.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if !(self.lo..=self.hi).contains(&v) {
            return None;
        }
        let idx = ((v - self.lo) / self.width()).floor() as usize;
        Some(idx.min(self.nbins - 1))
    }
}

/// How the bin range is chosen for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangePolicy {
    /// min/max over the union of all samples.
    #[default]
    Shared,
    /// The full cosine range [-1, 1].
    Fixed,
}

/// Common edges spanning every value of every sample. A zero-width range is
/// widened to [`DEGENERATE_WIDTH`] around the single value.
pub fn shared_edges(samples: &[&SimilaritySample], nbins: usize) -> Result<BinEdges, HistogramError> {
    let mut values = samples.iter().flat_map(|s| s.values().iter().copied()).peekable();
    if values.peek().is_none() || samples.iter().any(|s| s.count() == 0) {
        return Err(HistogramError::EmptySample);
    }
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == lo {
        BinEdges::new(lo - 0.5 * DEGENERATE_WIDTH, lo + 0.5 * DEGENERATE_WIDTH, nbins)
    } else {
        BinEdges::new(lo, hi, nbins)
    }
}

pub fn edges_for(samples: &[&SimilaritySample], nbins: usize, policy: RangePolicy) -> Result<BinEdges, HistogramError> {
    match policy {
        RangePolicy::Shared => shared_edges(samples, nbins),
        RangePolicy::Fixed => {
            if samples.iter().any(|s| s.count() == 0) || samples.is_empty() {
                return Err(HistogramError::EmptySample);
            }
            BinEdges::new(-1.0, 1.0, nbins)
        }
    }
}

/// Unit-mass histogram: `mass[i] = counts[i] / total_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: BinEdges,
    counts: Vec<u64>,
    mass: Vec<f64>,
    total_count: u64,
}

impl Histogram {
    pub fn from_counts(edges: BinEdges, counts: Vec<u64>) -> Result<Self, HistogramError> {
        if counts.len() != edges.nbins() {
            return Err(HistogramError::CountLength {
                expected: edges.nbins(),
                found: counts.len(),
            });
        }
        let total_count: u64 = counts.iter().sum();
        if total_count == 0 {
            return Err(HistogramError::EmptySample);
        }
        let total = total_count as f64;
        let mass = counts.iter().map(|&c| c as f64 / total).collect();
        Ok(Histogram {
            edges,
            counts,
            mass,
            total_count,
        })
    }

    pub fn edges(&self) -> &BinEdges {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

pub fn build_histogram(sample: &SimilaritySample, edges: &BinEdges) -> Result<Histogram, HistogramError> {
    let mut counts = vec![0u64; edges.nbins()];
    for &v in sample.values() {
        let bin = edges.bin_of(v).ok_or(HistogramError::OutOfRange {
            value: v,
            lo: edges.lo(),
            hi: edges.hi(),
        })?;
        counts[bin] += 1;
    }
    Histogram::from_counts(*edges, counts)
}
