//! Cosine similarity kernels, speaker centroids, proximal-speaker selection
//! and utterance-level similarity samples.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SpeakerSubset, UtteranceSet};

/// Mean norm below which a centroid is considered undefined.
pub const CENTROID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("`{0}` has no utterances")]
    NoUtterances(String),
    #[error("degenerate centroid for `{0}`: mean embedding norm below 1e-9")]
    DegenerateCentroid(String),
    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),
    #[error("`{0}` is not a member of the subset")]
    NotAMember(String),
    #[error("subset is empty")]
    EmptySubset,
    #[error("cannot pair `{0}` with itself")]
    SameEntity(String),
    #[error("similarity value {0} outside [-1, 1]")]
    OutOfRange(f64),
}

impl MetricError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricError::DimensionMismatch { .. } => "dimension-mismatch",
            MetricError::ZeroNorm => "zero-norm",
            MetricError::NoUtterances(_) => "no-utterances",
            MetricError::DegenerateCentroid(_) => "degenerate-centroid",
            MetricError::UnknownSpeaker(_) => "unknown-speaker",
            MetricError::NotAMember(_) => "not-a-member",
            MetricError::EmptySubset => "empty-subset",
            MetricError::SameEntity(_) => "same-entity",
            MetricError::OutOfRange(_) => "out-of-range",
        }
    }
}

/// `<a,b> / (|a| |b|)`, clamped to [-1, 1]. Accumulates in `f64`.
///
/// Exactly symmetric in its arguments, and exactly 1.0 for `cos(v, v)`.
pub fn cosine_similarity<A, B>(a: &[A], b: &[B]) -> Result<f64, MetricError>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    // sqrt(aa*bb) rather than sqrt(aa)*sqrt(bb): sqrt(fl(s*s)) == s, so
    // identical inputs give exactly 1
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine distance, `1 - cosine_similarity`.
pub fn cosine_distance<A, B>(a: &[A], b: &[B]) -> Result<f64, MetricError>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    cosine_similarity(a, b).map(|c| 1.0 - c)
}

fn normalized(v: &[f32]) -> Result<Vec<f64>, MetricError> {
    let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    Ok(v.iter().map(|&x| f64::from(x) / norm).collect())
}

/// Renormalized mean of the L2-normalized utterance embeddings.
pub fn speaker_centroid(set: &dyn UtteranceSet) -> Result<Vec<f64>, MetricError> {
    let utterances = set.utterances();
    let Some(first) = utterances.first() else {
        return Err(MetricError::NoUtterances(set.entity_id().to_string()));
    };
    let dim = first.embedding.len();
    let mut sum = vec![0.0f64; dim];
    for utt in utterances {
        if utt.embedding.len() != dim {
            return Err(MetricError::DimensionMismatch {
                left: dim,
                right: utt.embedding.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(normalized(&utt.embedding)?) {
            *s += x;
        }
    }
    let n = utterances.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < CENTROID_EPS {
        return Err(MetricError::DegenerateCentroid(set.entity_id().to_string()));
    }
    sum.iter_mut().for_each(|s| *s /= norm);
    Ok(sum)
}

fn member_centroids(subset: &SpeakerSubset, corpus: &Corpus) -> Result<Vec<Vec<f64>>, MetricError> {
    subset
        .members
        .iter()
        .map(|id| {
            let speaker = corpus
                .speaker(id)
                .ok_or_else(|| MetricError::UnknownSpeaker(id.clone()))?;
            speaker_centroid(speaker)
        })
        .collect()
}

fn summed_distance_at(index: usize, centroids: &[Vec<f64>]) -> Result<f64, MetricError> {
    let mut total = 0.0;
    for (j, other) in centroids.iter().enumerate() {
        if j != index {
            total += cosine_distance(&centroids[index], other)?;
        }
    }
    Ok(total)
}

/// Sum over every other subset member of the cosine distance between
/// speaker centroids.
pub fn summed_cosine_distance(candidate: &str, subset: &SpeakerSubset, corpus: &Corpus) -> Result<f64, MetricError> {
    let index = subset
        .members
        .iter()
        .position(|m| m == candidate)
        .ok_or_else(|| MetricError::NotAMember(candidate.to_string()))?;
    let centroids = member_centroids(subset, corpus)?;
    summed_distance_at(index, &centroids)
}

/// `(member id, summed cosine distance)` for every member, in subset order.
pub fn proximal_ranking(subset: &SpeakerSubset, corpus: &Corpus) -> Result<Vec<(String, f64)>, MetricError> {
    if subset.members.is_empty() {
        return Err(MetricError::EmptySubset);
    }
    let centroids = member_centroids(subset, corpus)?;
    subset
        .members
        .iter()
        .enumerate()
        .map(|(i, id)| Ok((id.clone(), summed_distance_at(i, &centroids)?)))
        .collect()
}

/// The member with the lowest summed cosine distance to all others; the
/// first in subset order wins ties.
pub fn select_proximal(subset: &SpeakerSubset, corpus: &Corpus) -> Result<String, MetricError> {
    let ranking = proximal_ranking(subset, corpus)?;
    let mut best = &ranking[0];
    for entry in &ranking[1..] {
        if entry.1 < best.1 {
            best = entry;
        }
    }
    Ok(best.0.clone())
}

/// Which of the three distributions a sample feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleLabel {
    /// cos(P, D): target vs source.
    B,
    /// cos(P', D): converted vs source.
    R,
    /// cos(P', P): converted vs target.
    G,
    Other,
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SampleLabel::B => "B",
            SampleLabel::R => "R",
            SampleLabel::G => "G",
            SampleLabel::Other => "other",
        };
        f.write_str(s)
    }
}

/// Labeled collection of utterance-pair cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySample {
    pub label: SampleLabel,
    pub pair: (String, String),
    values: Vec<f64>,
}

impl SimilaritySample {
    /// Rejects non-finite values and values outside [-1, 1].
    pub fn new(label: SampleLabel, pair: (String, String), values: Vec<f64>) -> Result<Self, MetricError> {
        if let Some(&bad) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(MetricError::OutOfRange(bad));
        }
        Ok(SimilaritySample { label, pair, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Applies `f` to every value, keeping label and pair.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, MetricError> {
        SimilaritySample::new(
            self.label,
            self.pair.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Cosine similarity for every (left utterance, right utterance) pair,
/// left-order-major.
pub fn pair_similarities(
    left: &dyn UtteranceSet,
    right: &dyn UtteranceSet,
    label: SampleLabel,
) -> Result<SimilaritySample, MetricError> {
    if left.kind() == right.kind() && left.entity_id() == right.entity_id() {
        return Err(MetricError::SameEntity(left.entity_id().to_string()));
    }
    for set in [left, right] {
        if set.utterances().is_empty() {
            return Err(MetricError::NoUtterances(set.entity_id().to_string()));
        }
    }
    let mut values = Vec::with_capacity(left.utterances().len() * right.utterances().len());
    for l in left.utterances() {
        for r in right.utterances() {
            values.push(cosine_similarity(&l.embedding, &r.embedding)?);
        }
    }
    SimilaritySample::new(
        label,
        (left.entity_id().to_string(), right.entity_id().to_string()),
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AttributeFilter, ConversionSet, Speaker, Utterance};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn speaker(id: &str, rows: &[&[f32]]) -> Speaker {
        Speaker {
            id: id.into(),
            attributes: [("g".to_string(), "x".to_string())].into(),
            utterances: rows
                .iter()
                .enumerate()
                .map(|(i, r)| Utterance::new(format!("u{i}"), r.to_vec()))
                .collect(),
        }
    }

    #[test]
    fn cosine_fixed_points() {
        assert_eq!(
            cosine_similarity(&[0.3f64, -0.7, 2.0], &[0.3f64, -0.7, 2.0]).unwrap(),
            1.0
        );
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0f64, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[-1.0f64, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&[0.0f64, 0.0], &[1.0f64, 0.0]),
            Err(MetricError::ZeroNorm)
        );
        assert_eq!(
            cosine_similarity(&[1.0f64], &[1.0f64, 0.0]),
            Err(MetricError::DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn centroid_examples() {
        let c = speaker_centroid(&speaker("a", &[&[3.0, 4.0]])).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);

        let c = speaker_centroid(&speaker("a", &[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!((c[0] - FRAC_1_SQRT_2).abs() < 1e-15 && (c[1] - FRAC_1_SQRT_2).abs() < 1e-15);

        let err = speaker_centroid(&speaker("a", &[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap_err();
        assert_eq!(err, MetricError::DegenerateCentroid("a".into()));
    }

    fn three_speaker_corpus() -> Corpus {
        let h = FRAC_1_SQRT_2 as f32;
        let mut c = Corpus::new(2);
        c.speakers.push(speaker("east", &[&[1.0, 0.0]]));
        c.speakers.push(speaker("diag", &[&[h, h]]));
        c.speakers.push(speaker("north", &[&[0.0, 1.0]]));
        c
    }

    #[test]
    fn summed_distance_three_centroids() {
        let c = three_speaker_corpus();
        let s = crate::corpus::filter_speakers(&c, &AttributeFilter::new()).unwrap();
        // hand enumeration: 2(1 - 1/sqrt2) and (1 - 1/sqrt2) + 1
        let mid = summed_cosine_distance("diag", &s, &c).unwrap();
        let end = summed_cosine_distance("east", &s, &c).unwrap();
        assert!((mid - 0.585_786_437_626_905).abs() < 1e-6, "{mid}");
        assert!((end - 1.292_893_218_813_452).abs() < 1e-6, "{end}");
        assert_eq!(select_proximal(&s, &c).unwrap(), "diag");
        assert!(matches!(
            summed_cosine_distance("nobody", &s, &c),
            Err(MetricError::NotAMember(_))
        ));
    }

    #[test]
    fn singleton_subset() {
        let c = three_speaker_corpus();
        let s = SpeakerSubset {
            filter: AttributeFilter::new(),
            members: vec!["north".into()],
        };
        assert_eq!(summed_cosine_distance("north", &s, &c).unwrap(), 0.0);
        assert_eq!(select_proximal(&s, &c).unwrap(), "north");
    }

    #[test]
    fn ties_go_to_first_member() {
        let mut c = Corpus::new(2);
        c.speakers.push(speaker("a", &[&[1.0, 0.0]]));
        c.speakers.push(speaker("b", &[&[0.0, 1.0]]));
        let s = crate::corpus::filter_speakers(&c, &AttributeFilter::new()).unwrap();
        assert_eq!(select_proximal(&s, &c).unwrap(), "a");
    }

    #[test]
    fn pair_cardinality_and_order() {
        let a = speaker("a", &[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = speaker("b", &[&[1.0, 0.0]]);
        let s = pair_similarities(&a, &b, SampleLabel::Other).unwrap();
        assert_eq!(s.values(), &[1.0, 0.0]);

        let rows: Vec<Vec<f32>> = (0..5).map(|i| vec![1.0, i as f32]).collect();
        let rows: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let five = speaker("five", &rows);
        let three = speaker("three", &rows[..3]);
        assert_eq!(pair_similarities(&three, &five, SampleLabel::B).unwrap().count(), 15);
    }

    #[test]
    fn duplicated_content_under_two_ids_is_all_ones() {
        let a = speaker("a", &[&[0.2, 0.9], &[0.5, -0.1]]);
        let conv = ConversionSet {
            id: "a".into(), // same string, different kind: allowed
            source_id: "x".into(),
            target_id: "y".into(),
            utterances: vec![Utterance::new("v", vec![0.2f32, 0.9])],
        };
        let s = pair_similarities(&conv, &a, SampleLabel::G).unwrap();
        assert_eq!(s.values()[0], 1.0);

        let mut b = a.clone();
        b.id = "b".into();
        b.utterances.truncate(1);
        let s = pair_similarities(&b, &speaker("c", &[&[0.2, 0.9]]), SampleLabel::G).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));
        assert!(matches!(
            pair_similarities(&a, &a, SampleLabel::B),
            Err(MetricError::SameEntity(_))
        ));
    }

    #[test]
    fn sample_rejects_out_of_range() {
        let pair = ("a".to_string(), "b".to_string());
        assert!(SimilaritySample::new(SampleLabel::B, pair.clone(), vec![1.5]).is_err());
        assert!(SimilaritySample::new(SampleLabel::B, pair, vec![f64::NAN]).is_err());
    }
}
