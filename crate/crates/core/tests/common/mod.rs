//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vcleak::corpus::{AttributeFilter, SpeakerSubset};
use vcleak::leakage::EvalConfig;
use vcleak::synth::{append_conversion, generate_corpus, ConversionSimConfig, SynthConfig};
use vcleak::{BinEdges, Corpus, Histogram, LeakageReport, Speaker, Utterance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random unit-mass histogram from integer counts, with some empty bins.
pub fn random_histogram(rng: &mut ChaCha8Rng, edges: BinEdges) -> Histogram {
    loop {
        let counts: Vec<u64> = (0..edges.nbins())
            .map(|_| {
                if rng.random_bool(0.3) {
                    0
                } else {
                    rng.random_range(0..=40)
                }
            })
            .collect();
        if counts.iter().any(|&c| c > 0) {
            return Histogram::from_counts(edges, counts).unwrap();
        }
    }
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
}

/// Random corpus of `n` speakers with 1..=max_utts raw (unnormalized)
/// gaussian embeddings clustered around a per-speaker mean.
pub fn random_corpus(rng: &mut ChaCha8Rng, n: usize, dim: usize, max_utts: usize) -> Corpus {
    let mut corpus = Corpus::new(dim);
    for i in 0..n {
        let mean = gaussian_vec(rng, dim);
        let utts = rng.random_range(1..=max_utts);
        let scale: f32 = rng.random_range(0.2..3.0);
        let utterances = (0..utts)
            .map(|j| {
                let noise = gaussian_vec(rng, dim);
                let v: Vec<f32> = mean.iter().zip(noise).map(|(m, e)| scale * (m + 0.6 * e)).collect();
                Utterance::new(format!("u{j}"), v)
            })
            .collect();
        corpus.speakers.push(Speaker {
            id: format!("s{i}"),
            attributes: [("group".to_string(), "all".to_string())].into(),
            utterances,
        });
    }
    corpus
}

pub fn everyone(corpus: &Corpus) -> SpeakerSubset {
    SpeakerSubset {
        filter: AttributeFilter::new(),
        members: corpus.speakers.iter().map(|s| s.id.clone()).collect(),
    }
}

/// Brute-force proximal selection written independently of the library:
/// full centroid distance matrix, row sums, first strict minimum.
pub fn brute_force_proximal(corpus: &Corpus, members: &[String]) -> String {
    let centroids: Vec<Vec<f64>> = members
        .iter()
        .map(|id| {
            let s = corpus.speakers.iter().find(|s| &s.id == id).unwrap();
            let dim = s.utterances[0].embedding.len();
            let mut mean = vec![0.0f64; dim];
            for u in &s.utterances {
                let v: Vec<f64> = u.embedding.iter().map(|&x| x as f64).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for k in 0..dim {
                    mean[k] += v[k] / norm;
                }
            }
            let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            mean.iter().map(|x| x / norm).collect()
        })
        .collect();
    let n = centroids.len();
    let mut matrix = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = centroids[i].iter().zip(&centroids[j]).map(|(a, b)| a * b).sum();
            matrix[i][j] = if i == j { 0.0 } else { 1.0 - dot };
        }
    }
    let sums: Vec<f64> = matrix.iter().map(|row| row.iter().sum()).collect();
    let mut best = 0;
    for i in 1..n {
        if sums[i] < sums[best] {
            best = i;
        }
    }
    members[best].clone()
}

pub const LEAKAGE_ALPHAS: [f64; 5] = [0.0, 0.125, 0.25, 0.375, 0.5];
pub const LEAKAGE_SEED: u64 = 7;

/// Two-speaker corpus (dim 64, sigma 0.05, 200 utterances each) with one
/// conversion `spk1 -> spk0` per alpha, all sharing one noise seed.
pub fn leakage_corpus() -> Corpus {
    let config = SynthConfig {
        n_speakers: 2,
        n_utterances: 200,
        dim: 64,
        sigma: 0.05,
        seed: LEAKAGE_SEED,
        attribute_plan: Default::default(),
    };
    let mut corpus = generate_corpus(&config).unwrap();
    for (i, &alpha) in LEAKAGE_ALPHAS.iter().enumerate() {
        append_conversion(
            &mut corpus,
            &ConversionSimConfig {
                id: Some(format!("alpha{i}")),
                source_id: "spk1".into(),
                target_id: "spk0".into(),
                alpha,
                n_utterances: 200,
                sigma: 0.05,
                seed: 1000,
            },
        )
        .unwrap();
    }
    corpus
}

pub fn leakage_reports(corpus: &Corpus) -> Vec<LeakageReport> {
    (0..LEAKAGE_ALPHAS.len())
        .map(|i| vcleak::evaluate(corpus, "spk0", "spk1", &format!("alpha{i}"), &EvalConfig::default()).unwrap())
        .collect()
}
