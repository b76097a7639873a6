//! Measurement engine for source-speaker leakage in one-to-one voice
//! conversion.
//!
//! Works on utterance-level speaker embeddings: cosine-similarity
//! distributions between the target `P`, the source `D` and the converted
//! speech `P'` are binned into shared fixed-width histograms and compared
//! with Earth Mover's Distance. The ratio `L = EMD(B, G) / EMD(R, G)`
//! summarizes how far the converted speech has drifted towards the source.

pub mod cli;
pub mod corpus;
pub mod emd;
pub mod histogram;
pub mod leakage;
pub mod metric;
pub mod report;
pub mod synth;

pub use corpus::{
    filter_speakers, load_manifest, read_manifest, validate, write_corpus, AttributeFilter, ConversionSet, Corpus,
    CorpusError, EmbeddingVector, Speaker, SpeakerSubset, Utterance, Violation,
};
pub use emd::{emd_1d, emd_transport, EmdError, TransportPlan};
pub use histogram::{build_histogram, shared_edges, BinEdges, Histogram, HistogramError, RangePolicy};
pub use leakage::{
    assemble_triple, classify, evaluate, leakage_ratio, run_experiment, EmdTriple, EvalConfig, LeakageError,
    LeakageRatio, LeakageReport, Mismatch, Scenario,
};
pub use metric::{
    cosine_similarity, pair_similarities, select_proximal, speaker_centroid, summed_cosine_distance, MetricError,
    SampleLabel, SimilaritySample,
};
pub use synth::{generate_corpus, simulate_conversion, ConversionSimConfig, SynthConfig, SynthError};
