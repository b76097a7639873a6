//! Synthetic corpora: speaker clusters on the unit hypersphere and a
//! converted-speaker simulator with a leakage knob `alpha`.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`, and Gaussian draws from `rand_distr::StandardNormal`.
//! Draw order is canonical: for each speaker in index order, `dim` draws for
//! its mean direction followed by `dim` draws per utterance. Conversions use
//! their own generator seeded from their own config.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ConversionSet, Corpus, Speaker, Utterance};
use crate::metric::{speaker_centroid, MetricError};

/// Interpolated means shorter than this cannot be normalized.
pub const MEAN_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),
    #[error("conversion id `{0}` already exists")]
    DuplicateConversion(String),
    #[error("interpolated mean has norm below 1e-9 (alpha {alpha})")]
    DegenerateMean { alpha: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidConfig(_) => "invalid-config",
            SynthError::UnknownSpeaker(_) => "unknown-speaker",
            SynthError::DuplicateConversion(_) => "duplicate-conversion-id",
            SynthError::DegenerateMean { .. } => "degenerate-mean",
            SynthError::Metric(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub n_utterances: usize,
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Attribute name -> values, assigned to speakers cyclically
    /// (speaker `i` gets `values[i % values.len()]`).
    #[serde(default)]
    pub attribute_plan: BTreeMap<String, Vec<String>>,
}

impl SynthConfig {
    pub fn check(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_speakers == 0 {
            return fail("n_speakers must be positive".into());
        }
        if self.n_utterances == 0 {
            return fail("n_utterances must be positive".into());
        }
        if self.dim < 2 {
            return fail(format!("dim must be >= 2, got {}", self.dim));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return fail(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if let Some((k, _)) = self.attribute_plan.iter().find(|(_, v)| v.is_empty()) {
            return fail(format!("attribute `{k}` has no values"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionSimConfig {
    /// Defaults to `<source>_to_<target>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub source_id: String,
    pub target_id: String,
    pub alpha: f64,
    pub n_utterances: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl ConversionSimConfig {
    pub fn conversion_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}_to_{}", self.source_id, self.target_id))
    }

    pub fn check(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.n_utterances == 0 {
            return fail("n_utterances must be positive".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return fail(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.source_id == self.target_id {
            return fail("source and target must differ".into());
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm < MEAN_EPS {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// `normalize(mean + sigma * N(0, I))`, stored as f32.
fn noisy_unit(rng: &mut ChaCha20Rng, mean: &[f64], sigma: f64) -> Vec<f32> {
    let noise = gaussian(rng, mean.len());
    let mut v: Vec<f64> = mean.iter().zip(noise).map(|(m, n)| m + sigma * n).collect();
    if normalize(&mut v).is_none() {
        // noise cancelled the mean; fall back on the mean direction
        v = mean.to_vec();
    }
    v.into_iter().map(|x| x as f32).collect()
}

fn utterance_id(j: usize) -> String {
    format!("utt{j:03}")
}

/// Generates speakers with uniformly random mean directions and
/// `n_utterances` noisy unit embeddings each.
pub fn generate_corpus(config: &SynthConfig) -> Result<Corpus, SynthError> {
    config.check()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut corpus = Corpus::new(config.dim);
    for i in 0..config.n_speakers {
        let mut mean = gaussian(&mut rng, config.dim);
        while normalize(&mut mean).is_none() {
            mean = gaussian(&mut rng, config.dim);
        }
        let utterances = (0..config.n_utterances)
            .map(|j| Utterance::new(utterance_id(j), noisy_unit(&mut rng, &mean, config.sigma)))
            .collect();
        let attributes = config
            .attribute_plan
            .iter()
            .map(|(k, values)| (k.clone(), values[i % values.len()].clone()))
            .collect();
        corpus.speakers.push(Speaker {
            id: format!("spk{i}"),
            attributes,
            utterances,
        });
    }
    corpus.provenance = Some(serde_json::json!({
        "generator": "vcleak synth",
        "config": config,
        "conversions": [],
    }));
    Ok(corpus)
}

/// Converted speaker whose mean is `normalize((1 - alpha) * centroid(target)
/// + alpha * centroid(source))`, with noisy unit utterances around it.
pub fn simulate_conversion(corpus: &Corpus, config: &ConversionSimConfig) -> Result<ConversionSet, SynthError> {
    config.check()?;
    let target = corpus
        .speaker(&config.target_id)
        .ok_or_else(|| SynthError::UnknownSpeaker(config.target_id.clone()))?;
    let source = corpus
        .speaker(&config.source_id)
        .ok_or_else(|| SynthError::UnknownSpeaker(config.source_id.clone()))?;
    let ct = speaker_centroid(target)?;
    let cs = speaker_centroid(source)?;
    let mut mean: Vec<f64> = ct
        .iter()
        .zip(&cs)
        .map(|(t, s)| (1.0 - config.alpha) * t + config.alpha * s)
        .collect();
    normalize(&mut mean).ok_or(SynthError::DegenerateMean { alpha: config.alpha })?;

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let utterances = (0..config.n_utterances)
        .map(|j| Utterance::new(utterance_id(j), noisy_unit(&mut rng, &mean, config.sigma)))
        .collect();
    Ok(ConversionSet {
        id: config.conversion_id(),
        source_id: config.source_id.clone(),
        target_id: config.target_id.clone(),
        utterances,
    })
}

/// Simulates a conversion and appends it to the corpus, recording its
/// config in the provenance block.
pub fn append_conversion(corpus: &mut Corpus, config: &ConversionSimConfig) -> Result<(), SynthError> {
    let id = config.conversion_id();
    if corpus.conversion(&id).is_some() {
        return Err(SynthError::DuplicateConversion(id));
    }
    let set = simulate_conversion(corpus, config)?;
    corpus.conversions.push(set);
    if let Some(list) = corpus
        .provenance
        .as_mut()
        .and_then(|p| p.get_mut("conversions"))
        .and_then(|c| c.as_array_mut())
    {
        list.push(serde_json::to_value(config).expect("config serializes"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate;
    use crate::metric::{cosine_similarity, pair_similarities, SampleLabel};

    fn config(n_speakers: usize, n_utterances: usize, dim: usize, sigma: f64) -> SynthConfig {
        SynthConfig {
            n_speakers,
            n_utterances,
            dim,
            sigma,
            seed: 42,
            attribute_plan: BTreeMap::new(),
        }
    }

    #[test]
    fn shape_and_unit_norm() {
        let c = generate_corpus(&config(2, 3, 8, 0.1)).unwrap();
        assert_eq!(c.speakers.len(), 2);
        assert!(c.speakers.iter().all(|s| s.utterances.len() == 3));
        for s in &c.speakers {
            for u in &s.utterances {
                assert_eq!(u.embedding.len(), 8);
                assert!((u.embedding.norm() - 1.0).abs() < 1e-6);
            }
        }
        assert!(validate(&c).is_empty());
    }

    #[test]
    fn zero_noise_collapses_each_speaker() {
        let c = generate_corpus(&config(3, 4, 16, 0.0)).unwrap();
        for s in &c.speakers {
            let first = &s.utterances[0].embedding;
            assert!(s.utterances.iter().all(|u| &u.embedding == first));
            let mut twin = s.clone();
            twin.id.push_str("-twin");
            let sims = pair_similarities(s, &twin, SampleLabel::Other).unwrap();
            assert!(sims.values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = config(3, 5, 12, 0.2);
        assert_eq!(generate_corpus(&cfg).unwrap(), generate_corpus(&cfg).unwrap());
        let other = SynthConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(generate_corpus(&cfg).unwrap(), generate_corpus(&other).unwrap());
    }

    #[test]
    fn attributes_follow_plan_cyclically() {
        let mut cfg = config(5, 1, 4, 0.1);
        cfg.attribute_plan
            .insert("gender".into(), vec!["male".into(), "female".into()]);
        let c = generate_corpus(&cfg).unwrap();
        let genders: Vec<&str> = c.speakers.iter().map(|s| s.attributes["gender"].as_str()).collect();
        assert_eq!(genders, ["male", "female", "male", "female", "male"]);
    }

    #[test]
    fn alpha_one_without_noise_reproduces_source_centroid() {
        let mut c = generate_corpus(&config(2, 10, 16, 0.1)).unwrap();
        let sim = ConversionSimConfig {
            id: None,
            source_id: "spk1".into(),
            target_id: "spk0".into(),
            alpha: 1.0,
            n_utterances: 4,
            sigma: 0.0,
            seed: 9,
        };
        append_conversion(&mut c, &sim).unwrap();
        let centroid = speaker_centroid(c.speaker("spk1").unwrap()).unwrap();
        let conv = c.conversion("spk1_to_spk0").unwrap();
        for u in &conv.utterances {
            for (x, m) in u.embedding.iter().zip(&centroid) {
                assert!((f64::from(*x) - m).abs() < 1e-7);
            }
        }
        assert!(validate(&c).is_empty());
        assert!(matches!(
            append_conversion(&mut c, &sim),
            Err(SynthError::DuplicateConversion(_))
        ));
        let recorded = c.provenance.as_ref().unwrap()["conversions"].as_array().unwrap().len();
        assert_eq!(recorded, 1);
    }

    #[test]
    fn antipodal_interpolation_is_degenerate() {
        let mut c = Corpus::new(2);
        for (id, v) in [("a", [1.0f32, 0.0]), ("b", [-1.0, 0.0])] {
            c.speakers.push(Speaker {
                id: id.into(),
                attributes: Default::default(),
                utterances: vec![Utterance::new("u", v.to_vec())],
            });
        }
        let sim = ConversionSimConfig {
            id: None,
            source_id: "a".into(),
            target_id: "b".into(),
            alpha: 0.5,
            n_utterances: 1,
            sigma: 0.0,
            seed: 0,
        };
        assert!(matches!(
            simulate_conversion(&c, &sim),
            Err(SynthError::DegenerateMean { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(config(0, 1, 4, 0.1).check().is_err());
        assert!(config(1, 1, 1, 0.1).check().is_err());
        assert!(config(1, 1, 4, -0.1).check().is_err());
        let sim = ConversionSimConfig {
            id: None,
            source_id: "a".into(),
            target_id: "b".into(),
            alpha: 1.5,
            n_utterances: 1,
            sigma: 0.0,
            seed: 0,
        };
        assert!(sim.check().is_err());
    }

    #[test]
    fn half_alpha_sits_between_speakers() {
        let mut c = generate_corpus(&config(2, 50, 32, 0.05)).unwrap();
        let sim = ConversionSimConfig {
            id: Some("half".into()),
            source_id: "spk1".into(),
            target_id: "spk0".into(),
            alpha: 0.5,
            n_utterances: 50,
            sigma: 0.05,
            seed: 3,
        };
        append_conversion(&mut c, &sim).unwrap();
        let conv = speaker_centroid(c.conversion("half").unwrap()).unwrap();
        let p = speaker_centroid(c.speaker("spk0").unwrap()).unwrap();
        let d = speaker_centroid(c.speaker("spk1").unwrap()).unwrap();
        let (to_p, to_d) = (
            cosine_similarity(&conv, &p).unwrap(),
            cosine_similarity(&conv, &d).unwrap(),
        );
        assert!((to_p - to_d).abs() < 0.05, "{to_p} vs {to_d}");
    }
}
