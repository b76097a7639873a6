//! Source-speaker leakage for a (target P, source D, converted P') triple.
//!
//! Three cosine-similarity distributions are compared:
//!
//! * `B` = cos(P, D), the prior belief about how alike target and source are,
//! * `R` = cos(P', D), the evidence left in the converted speech,
//! * `G` = cos(P', P), the ground truth the conversion aims for.
//!
//! `B` and `G` bracket the range over which `R` can move. The leakage ratio
//! `L = EMD(B, G) / EMD(R, G)` grows as `R` approaches `G`, i.e. as the
//! converted speech resembles the source as much as the target.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{filter_speakers, AttributeFilter, Corpus, CorpusError};
use crate::emd::{emd_1d, EmdError};
use crate::histogram::{build_histogram, edges_for, BinEdges, HistogramError, RangePolicy, DEFAULT_NBINS};
use crate::metric::{pair_similarities, select_proximal, MetricError, SampleLabel, SimilaritySample};

pub const DEFAULT_TAU: f64 = 0.33;

/// EMD(R, G) below this makes L infinite.
pub const RATIO_EPS: f64 = 1e-12;

/// EMD(B, G) below this means B and G are indistinguishable.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// Label given to the matched-control row of an experiment.
pub const MATCHED_LABEL: &str = "matched";

#[derive(Debug, Error)]
pub enum LeakageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Emd(#[from] EmdError),
    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),
    #[error("unknown conversion `{0}`")]
    UnknownConversion(String),
    #[error("no conversion set converts source `{source_id}` towards target `{target_id}`")]
    MissingConversion { source_id: String, target_id: String },
    #[error("conversion `{conversion}` maps {actual_source} -> {actual_target}, not {source_id} -> {target_id}")]
    ConversionMismatch {
        conversion: String,
        source_id: String,
        target_id: String,
        actual_source: String,
        actual_target: String,
    },
    #[error("no source candidates remain for `{0}` once the target is excluded")]
    NoSourceCandidates(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl LeakageError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            LeakageError::Corpus(e) => e.code(),
            LeakageError::Metric(e) => e.code(),
            LeakageError::Histogram(e) => e.code(),
            LeakageError::Emd(e) => e.code(),
            LeakageError::UnknownSpeaker(_) => "unknown-speaker",
            LeakageError::UnknownConversion(_) | LeakageError::MissingConversion { .. } => "missing-conversion",
            LeakageError::ConversionMismatch { .. } => "conversion-mismatch",
            LeakageError::NoSourceCandidates(_) => "empty-subset",
            LeakageError::InvalidConfig(_) => "invalid-config",
        }
    }
}

/// The three pairwise EMDs between B, R and G, all on one set of bin edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmdTriple {
    pub emd_br: f64,
    pub emd_rg: f64,
    pub emd_bg: f64,
}

impl EmdTriple {
    pub fn new(emd_br: f64, emd_rg: f64, emd_bg: f64) -> Result<Self, LeakageError> {
        for v in [emd_br, emd_rg, emd_bg] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LeakageError::InvalidConfig(format!(
                    "EMD value {v} is not finite and >= 0"
                )));
            }
        }
        Ok(EmdTriple { emd_br, emd_rg, emd_bg })
    }
}

/// `L`, or the +infinity sentinel when EMD(R, G) vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeakageRatio {
    Finite(f64),
    Infinite,
}

impl LeakageRatio {
    pub fn value(self) -> f64 {
        match self {
            LeakageRatio::Finite(v) => v,
            LeakageRatio::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, LeakageRatio::Infinite)
    }
}

impl fmt::Display for LeakageRatio {
    /// Four decimals, `inf` for the sentinel.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeakageRatio::Finite(v) => write!(f, "{v:.4}"),
            LeakageRatio::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for LeakageRatio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LeakageRatio::Finite(v) => s.serialize_f64(*v),
            LeakageRatio::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LeakageRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(LeakageRatio::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(LeakageRatio::Infinite),
            Raw::Text(t) => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

/// `EMD(B, G) / EMD(R, G)`; infinite when `EMD(R, G) < 1e-12`.
pub fn leakage_ratio(triple: &EmdTriple) -> LeakageRatio {
    if triple.emd_rg < RATIO_EPS {
        LeakageRatio::Infinite
    } else {
        LeakageRatio::Finite(triple.emd_bg / triple.emd_rg)
    }
}

/// Inference outcome for one triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// R sits between B and G; leakage may exist but the evidence is not
    /// conclusive.
    Indeterminate,
    /// R resembles B.
    NoLeakage,
    /// R resembles G.
    Leakage,
    /// B and G are indistinguishable, or R is close to both.
    Degenerate,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Indeterminate => "indeterminate",
            Scenario::NoLeakage => "no-leakage",
            Scenario::Leakage => "leakage",
            Scenario::Degenerate => "degenerate",
        }
    }

    pub fn rationale(self) -> &'static str {
        match self {
            Scenario::Indeterminate => {
                "R lies between B and G: source characteristics cannot be inferred with confidence; more data are needed"
            }
            Scenario::NoLeakage => "R resembles B: no interpretable source-speaker leakage",
            Scenario::Leakage => "R resembles G: source-speaker characteristics can be inferred",
            Scenario::Degenerate => "B and G are not separated (or R matches both); the triple carries no information",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Threshold rule over the B-to-G separation. `tau` is the fraction of
/// EMD(B, G) within which R counts as resembling B (no leakage) or G
/// (leakage).
pub fn classify(triple: &EmdTriple, tau: f64) -> Scenario {
    if triple.emd_bg < DEGENERATE_EPS {
        return Scenario::Degenerate;
    }
    let near_b = triple.emd_br <= tau * triple.emd_bg;
    let near_g = triple.emd_rg <= tau * triple.emd_bg;
    match (near_b, near_g) {
        (true, true) => Scenario::Degenerate,
        (true, false) => Scenario::NoLeakage,
        (false, true) => Scenario::Leakage,
        (false, false) => Scenario::Indeterminate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub nbins: usize,
    pub tau: f64,
    #[serde(default)]
    pub range: RangePolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            nbins: DEFAULT_NBINS,
            tau: DEFAULT_TAU,
            range: RangePolicy::Shared,
        }
    }
}

impl EvalConfig {
    pub fn check(&self) -> Result<(), LeakageError> {
        if self.nbins < 2 {
            return Err(LeakageError::InvalidConfig(format!(
                "nbins must be >= 2, got {}",
                self.nbins
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(LeakageError::InvalidConfig(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// The B, R, G samples for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTriple {
    pub b: SimilaritySample,
    pub r: SimilaritySample,
    pub g: SimilaritySample,
}

impl SampleTriple {
    /// Applies `f` to every value of all three samples.
    pub fn map_values(&self, f: impl Fn(f64) -> f64 + Copy) -> Result<Self, LeakageError> {
        Ok(SampleTriple {
            b: self.b.map_values(f)?,
            r: self.r.map_values(f)?,
            g: self.g.map_values(f)?,
        })
    }
}

/// Builds B = cos(P, D), R = cos(P', D), G = cos(P', P) over full
/// utterance cross products.
pub fn assemble_triple(
    corpus: &Corpus,
    target: &str,
    source: &str,
    conversion: &str,
) -> Result<SampleTriple, LeakageError> {
    let p = corpus
        .speaker(target)
        .ok_or_else(|| LeakageError::UnknownSpeaker(target.to_string()))?;
    let d = corpus
        .speaker(source)
        .ok_or_else(|| LeakageError::UnknownSpeaker(source.to_string()))?;
    let converted = corpus
        .conversion(conversion)
        .ok_or_else(|| LeakageError::UnknownConversion(conversion.to_string()))?;
    if converted.source_id != source || converted.target_id != target {
        return Err(LeakageError::ConversionMismatch {
            conversion: conversion.to_string(),
            source_id: source.to_string(),
            target_id: target.to_string(),
            actual_source: converted.source_id.clone(),
            actual_target: converted.target_id.clone(),
        });
    }
    Ok(SampleTriple {
        b: pair_similarities(p, d, SampleLabel::B)?,
        r: pair_similarities(converted, d, SampleLabel::R)?,
        g: pair_similarities(converted, p, SampleLabel::G)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRange {
    pub lo: f64,
    pub hi: f64,
}

/// Mass vectors of the three histograms, in bin order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMasses {
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<f64>,
}

/// Self-contained result of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub target: String,
    pub source: String,
    pub conversion: String,
    /// Experiment row label; absent for single evaluations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Size of the source subset the proximal source was drawn from.
    pub n: Option<usize>,
    pub emd_br: f64,
    pub emd_rg: f64,
    pub emd_bg: f64,
    #[serde(rename = "L")]
    pub ratio: LeakageRatio,
    pub scenario: Scenario,
    pub tau: f64,
    pub nbins: usize,
    pub edges: EdgeRange,
    #[serde(rename = "hist")]
    pub histograms: HistogramMasses,
}

impl LeakageReport {
    pub fn triple(&self) -> EmdTriple {
        EmdTriple {
            emd_br: self.emd_br,
            emd_rg: self.emd_rg,
            emd_bg: self.emd_bg,
        }
    }

    pub fn bin_edges(&self) -> Result<BinEdges, HistogramError> {
        BinEdges::new(self.edges.lo, self.edges.hi, self.nbins)
    }
}

/// Histograms B, R, G on shared edges and their pairwise EMDs.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleMeasurement {
    pub edges: BinEdges,
    pub masses: HistogramMasses,
    pub triple: EmdTriple,
}

/// Bins the three samples on common edges and measures all pairwise EMDs.
pub fn measure(samples: &SampleTriple, nbins: usize, range: RangePolicy) -> Result<TripleMeasurement, LeakageError> {
    let edges = edges_for(&[&samples.b, &samples.r, &samples.g], nbins, range)?;
    let hb = build_histogram(&samples.b, &edges)?;
    let hr = build_histogram(&samples.r, &edges)?;
    let hg = build_histogram(&samples.g, &edges)?;
    let triple = EmdTriple::new(emd_1d(&hb, &hr)?, emd_1d(&hr, &hg)?, emd_1d(&hb, &hg)?)?;
    Ok(TripleMeasurement {
        edges,
        masses: HistogramMasses {
            b: hb.mass().to_vec(),
            r: hr.mass().to_vec(),
            g: hg.mass().to_vec(),
        },
        triple,
    })
}

/// Evaluates already-assembled samples.
pub fn evaluate_samples(
    ids: (&str, &str, &str),
    samples: &SampleTriple,
    config: &EvalConfig,
) -> Result<LeakageReport, LeakageError> {
    config.check()?;
    let m = measure(samples, config.nbins, config.range)?;
    let (target, source, conversion) = ids;
    Ok(LeakageReport {
        target: target.to_string(),
        source: source.to_string(),
        conversion: conversion.to_string(),
        label: None,
        n: None,
        emd_br: m.triple.emd_br,
        emd_rg: m.triple.emd_rg,
        emd_bg: m.triple.emd_bg,
        ratio: leakage_ratio(&m.triple),
        scenario: classify(&m.triple, config.tau),
        tau: config.tau,
        nbins: config.nbins,
        edges: EdgeRange {
            lo: m.edges.lo(),
            hi: m.edges.hi(),
        },
        histograms: m.masses,
    })
}

/// Full evaluation of one (P, D, P') configuration.
pub fn evaluate(
    corpus: &Corpus,
    target: &str,
    source: &str,
    conversion: &str,
    config: &EvalConfig,
) -> Result<LeakageReport, LeakageError> {
    config.check()?;
    let samples = assemble_triple(corpus, target, source, conversion)?;
    evaluate_samples((target, source, conversion), &samples, config)
}

/// One source-speaker variation: `attribute` takes `value` instead of the
/// target subset's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub attribute: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Mismatch {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Mismatch {
            attribute: attribute.into(),
            value: value.into(),
            label: None,
        }
    }

    pub fn display_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}={}", self.attribute, self.value))
    }
}

#[derive(Debug)]
pub struct ExperimentRow {
    pub label: String,
    pub outcome: Result<LeakageReport, LeakageError>,
}

#[derive(Debug)]
pub struct Experiment {
    pub target: String,
    pub target_subset_n: usize,
    pub rows: Vec<ExperimentRow>,
}

impl Experiment {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

fn evaluate_against(
    corpus: &Corpus,
    target: &str,
    candidates: Option<crate::corpus::SpeakerSubset>,
    label: &str,
    config: &EvalConfig,
) -> Result<LeakageReport, LeakageError> {
    let subset = candidates.ok_or_else(|| LeakageError::NoSourceCandidates(label.to_string()))?;
    let source = select_proximal(&subset, corpus)?;
    let conversion = corpus
        .find_conversion(&source, target)
        .ok_or_else(|| LeakageError::MissingConversion {
            source_id: source.clone(),
            target_id: target.to_string(),
        })?;
    let mut report = evaluate(corpus, target, &source, &conversion.id, config)?;
    report.label = Some(label.to_string());
    report.n = Some(subset.n());
    Ok(report)
}

/// Selects the proximal target of `target_filter`, then for each mismatch
/// the proximal source of the subset that differs in that one attribute,
/// and evaluates the stored conversion between them. A matched-control row
/// (source drawn from the target subset itself, minus the target) is
/// appended last. Rows fail individually; the target subset must exist.
pub fn run_experiment(
    corpus: &Corpus,
    target_filter: &AttributeFilter,
    mismatches: &[Mismatch],
    config: &EvalConfig,
) -> Result<Experiment, LeakageError> {
    config.check()?;
    let target_subset = filter_speakers(corpus, target_filter)?;
    let target = select_proximal(&target_subset, corpus)?;

    let mut rows = Vec::with_capacity(mismatches.len() + 1);
    for mismatch in mismatches {
        let label = mismatch.display_label();
        let filter = target_filter.clone().with(&mismatch.attribute, &mismatch.value);
        let outcome = filter_speakers(corpus, &filter)
            .map_err(LeakageError::from)
            .and_then(|subset| evaluate_against(corpus, &target, subset.without(&target), &label, config));
        rows.push(ExperimentRow { label, outcome });
    }
    let outcome = evaluate_against(corpus, &target, target_subset.without(&target), MATCHED_LABEL, config);
    rows.push(ExperimentRow {
        label: MATCHED_LABEL.to_string(),
        outcome,
    });

    Ok(Experiment {
        target,
        target_subset_n: target_subset.n(),
        rows,
    })
}
