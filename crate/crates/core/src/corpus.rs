//! Corpus data model, on-disk manifest and embedding formats, validation and
//! attribute-based speaker filtering.
//!
//! A corpus is described by a single JSON manifest. Embedding vectors live in
//! sidecar files next to it, one matrix per speaker and per conversion set,
//! either in the binary `EMB1` layout or as plain CSV for small fixtures.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Only supported manifest schema version.
pub const MANIFEST_VERSION: u32 = 1;

/// Conventional speaker-encoder output size.
pub const DEFAULT_EMBEDDING_DIM: usize = 192;

/// Magic bytes opening every binary embedding file.
pub const EMB_MAGIC: [u8; 4] = *b"EMB1";

const EMB_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest {0} not found")]
    NotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("unresolvable embedding reference `{file}` for {owner}")]
    UnresolvableEmbedding { owner: String, file: PathBuf },
    #[error("malformed embedding file {file}: {reason}")]
    MalformedEmbedding { file: PathBuf, reason: String },
    #[error("dimension mismatch in {file} ({owner}{}): declared {expected}, found {found}",
        .row.map(|r| format!(", row {r}")).unwrap_or_default())]
    DimensionMismatch {
        owner: String,
        file: PathBuf,
        row: Option<usize>,
        expected: usize,
        found: usize,
    },
    #[error("{file} holds {rows} embedding rows but {owner} lists {ids} utterance ids")]
    RowCountMismatch {
        owner: String,
        file: PathBuf,
        ids: usize,
        rows: usize,
    },
    #[error("non-finite embedding component in {file} ({owner}, utterance `{utterance}`)")]
    NonFinite {
        owner: String,
        file: PathBuf,
        utterance: String,
    },
    #[error("corpus failed validation with {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("no speaker matches filter {0}")]
    EmptySubset(AttributeFilter),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::NotFound(_) => "not-found",
            CorpusError::Io { .. } => "io",
            CorpusError::MalformedManifest { .. } => "malformed-manifest",
            CorpusError::UnresolvableEmbedding { .. } => "unresolvable-embedding",
            CorpusError::MalformedEmbedding { .. } => "malformed-embedding",
            CorpusError::DimensionMismatch { .. } => "dimension-mismatch",
            CorpusError::RowCountMismatch { .. } => "row-count-mismatch",
            CorpusError::NonFinite { .. } => "non-finite-component",
            CorpusError::Invalid(_) => "invalid-corpus",
            CorpusError::UnknownAttribute(_) => "unknown-attribute",
            CorpusError::EmptySubset(_) => "empty-subset",
            CorpusError::Write { .. } => "io",
        }
    }

    /// True for failures to reach or parse the inputs at all, as opposed to
    /// inputs that were read but violate the corpus contract.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            CorpusError::NotFound(_)
                | CorpusError::Io { .. }
                | CorpusError::MalformedManifest { .. }
                | CorpusError::UnresolvableEmbedding { .. }
                | CorpusError::Write { .. }
        )
    }
}

/// One utterance in speaker-encoder space. Stored as `f32`, the on-disk
/// precision; all arithmetic downstream widens to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for EmbeddingVector {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl From<Vec<f32>> for EmbeddingVector {
    fn from(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub embedding: EmbeddingVector,
}

impl Utterance {
    pub fn new(id: impl Into<String>, embedding: impl Into<EmbeddingVector>) -> Self {
        Utterance {
            id: id.into(),
            embedding: embedding.into(),
        }
    }
}

/// Categorical speaker metadata (gender, age bracket, accent, environment, ...).
/// Values are opaque labels compared by exact string equality.
pub type AttributeSet = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub id: String,
    pub attributes: AttributeSet,
    pub utterances: Vec<Utterance>,
}

/// Converted-speech utterances produced from source speaker `source_id`
/// towards target speaker `target_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionSet {
    pub id: String,
    pub source_id: String,
    pub target_id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Speaker,
    Conversion,
}

/// Anything carrying an ordered list of utterance embeddings.
pub trait UtteranceSet {
    fn entity_id(&self) -> &str;
    fn kind(&self) -> EntityKind;
    fn utterances(&self) -> &[Utterance];
}

impl UtteranceSet for Speaker {
    fn entity_id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> EntityKind {
        EntityKind::Speaker
    }
    fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }
}

impl UtteranceSet for ConversionSet {
    fn entity_id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> EntityKind {
        EntityKind::Conversion
    }
    fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub version: u32,
    pub embedding_dim: usize,
    pub speakers: Vec<Speaker>,
    pub conversions: Vec<ConversionSet>,
    /// Free-form generator metadata, carried through untouched.
    pub provenance: Option<serde_json::Value>,
}

impl Corpus {
    pub fn new(embedding_dim: usize) -> Self {
        Corpus {
            version: MANIFEST_VERSION,
            embedding_dim,
            speakers: Vec::new(),
            conversions: Vec::new(),
            provenance: None,
        }
    }

    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn conversion(&self, id: &str) -> Option<&ConversionSet> {
        self.conversions.iter().find(|c| c.id == id)
    }

    /// First conversion set (manifest order) converting `source` towards `target`.
    pub fn find_conversion(&self, source: &str, target: &str) -> Option<&ConversionSet> {
        self.conversions
            .iter()
            .find(|c| c.source_id == source && c.target_id == target)
    }

    /// Attribute keys used by any speaker.
    pub fn attribute_schema(&self) -> BTreeSet<&str> {
        self.speakers
            .iter()
            .flat_map(|s| s.attributes.keys().map(String::as_str))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationCode {
    UnsupportedVersion,
    InvalidEmbeddingDim,
    DuplicateSpeakerId,
    DuplicateConversionId,
    DuplicateUtteranceId,
    EmptySpeaker,
    EmptyConversion,
    DimensionMismatch,
    NonFiniteComponent,
    ZeroNormEmbedding,
    SelfConversion,
    DanglingConversionSource,
    DanglingConversionTarget,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::UnsupportedVersion => "unsupported-version",
            ViolationCode::InvalidEmbeddingDim => "invalid-embedding-dim",
            ViolationCode::DuplicateSpeakerId => "duplicate-speaker-id",
            ViolationCode::DuplicateConversionId => "duplicate-conversion-id",
            ViolationCode::DuplicateUtteranceId => "duplicate-utterance-id",
            ViolationCode::EmptySpeaker => "empty-speaker",
            ViolationCode::EmptyConversion => "empty-conversion",
            ViolationCode::DimensionMismatch => "dimension-mismatch",
            ViolationCode::NonFiniteComponent => "non-finite-component",
            ViolationCode::ZeroNormEmbedding => "zero-norm-embedding",
            ViolationCode::SelfConversion => "self-conversion",
            ViolationCode::DanglingConversionSource => "dangling-conversion-source",
            ViolationCode::DanglingConversionTarget => "dangling-conversion-target",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    /// `speaker:<id>`, `conversion:<id>`, optionally `/utterance:<id>`, or `corpus`.
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.code, self.location, self.detail)
    }
}

fn location(kind: EntityKind, id: &str) -> String {
    match kind {
        EntityKind::Speaker => format!("speaker:{id}"),
        EntityKind::Conversion => format!("conversion:{id}"),
    }
}

fn check_utterances(set: &dyn UtteranceSet, dim: usize, out: &mut Vec<Violation>) {
    let owner = location(set.kind(), set.entity_id());
    if set.utterances().is_empty() {
        let code = match set.kind() {
            EntityKind::Speaker => ViolationCode::EmptySpeaker,
            EntityKind::Conversion => ViolationCode::EmptyConversion,
        };
        out.push(Violation {
            code,
            location: owner.clone(),
            detail: "no utterances".into(),
        });
    }
    let mut seen = HashSet::new();
    for utt in set.utterances() {
        let loc = format!("{owner}/utterance:{}", utt.id);
        if !seen.insert(utt.id.as_str()) {
            out.push(Violation {
                code: ViolationCode::DuplicateUtteranceId,
                location: loc.clone(),
                detail: "utterance id repeated".into(),
            });
        }
        if utt.embedding.len() != dim {
            out.push(Violation {
                code: ViolationCode::DimensionMismatch,
                location: loc.clone(),
                detail: format!("expected {dim}, found {}", utt.embedding.len()),
            });
        }
        if !utt.embedding.is_finite() {
            out.push(Violation {
                code: ViolationCode::NonFiniteComponent,
                location: loc,
                detail: "NaN or infinite component".into(),
            });
        } else if utt.embedding.norm() == 0.0 {
            out.push(Violation {
                code: ViolationCode::ZeroNormEmbedding,
                location: loc,
                detail: "all-zero embedding".into(),
            });
        }
    }
}

/// Checks every corpus invariant. Violations are data: an empty list means
/// the corpus is well formed.
pub fn validate(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    if corpus.version != MANIFEST_VERSION {
        out.push(Violation {
            code: ViolationCode::UnsupportedVersion,
            location: "corpus".into(),
            detail: format!("version {} (expected {MANIFEST_VERSION})", corpus.version),
        });
    }
    if corpus.embedding_dim == 0 {
        out.push(Violation {
            code: ViolationCode::InvalidEmbeddingDim,
            location: "corpus".into(),
            detail: "embedding_dim must be positive".into(),
        });
    }

    let mut speaker_ids = HashSet::new();
    for speaker in &corpus.speakers {
        if !speaker_ids.insert(speaker.id.as_str()) {
            out.push(Violation {
                code: ViolationCode::DuplicateSpeakerId,
                location: location(EntityKind::Speaker, &speaker.id),
                detail: "speaker id repeated".into(),
            });
        }
        check_utterances(speaker, corpus.embedding_dim, &mut out);
    }

    let mut conversion_ids = HashSet::new();
    for conv in &corpus.conversions {
        let loc = location(EntityKind::Conversion, &conv.id);
        if !conversion_ids.insert(conv.id.as_str()) {
            out.push(Violation {
                code: ViolationCode::DuplicateConversionId,
                location: loc.clone(),
                detail: "conversion id repeated".into(),
            });
        }
        if conv.source_id == conv.target_id {
            out.push(Violation {
                code: ViolationCode::SelfConversion,
                location: loc.clone(),
                detail: format!("source and target are both `{}`", conv.source_id),
            });
        }
        if !speaker_ids.contains(conv.source_id.as_str()) {
            out.push(Violation {
                code: ViolationCode::DanglingConversionSource,
                location: loc.clone(),
                detail: format!("source `{}` is not a speaker", conv.source_id),
            });
        }
        if !speaker_ids.contains(conv.target_id.as_str()) {
            out.push(Violation {
                code: ViolationCode::DanglingConversionTarget,
                location: loc,
                detail: format!("target `{}` is not a speaker", conv.target_id),
            });
        }
        check_utterances(conv, corpus.embedding_dim, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Conjunction of attribute equality constraints. Empty matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeFilter(pub BTreeMap<String, String>);

impl AttributeFilter {
    pub fn new() -> Self {
        AttributeFilter::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(key.into(), value.into());
        self
    }

    /// Parses `key=value` constraints.
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self, String> {
        let mut filter = AttributeFilter::new();
        for item in items {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{item}`"))?;
            if k.is_empty() {
                return Err(format!("empty attribute name in `{item}`"));
            }
            filter.0.insert(k.to_string(), v.to_string());
        }
        Ok(filter)
    }

    pub fn matches(&self, attributes: &AttributeSet) -> bool {
        self.0.iter().all(|(k, v)| attributes.get(k).is_some_and(|a| a == v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for AttributeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("{}");
        }
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Speakers satisfying a filter, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSubset {
    pub filter: AttributeFilter,
    pub members: Vec<String>,
}

impl SpeakerSubset {
    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m == id)
    }

    /// Re-applies `filter` to this subset's members only.
    pub fn refine(&self, corpus: &Corpus, filter: &AttributeFilter) -> Result<SpeakerSubset, CorpusError> {
        check_filter_keys(corpus, filter)?;
        let members: Vec<String> = self
            .members
            .iter()
            .filter(|id| corpus.speaker(id).is_some_and(|s| filter.matches(&s.attributes)))
            .cloned()
            .collect();
        if members.is_empty() {
            return Err(CorpusError::EmptySubset(filter.clone()));
        }
        Ok(SpeakerSubset {
            filter: filter.clone(),
            members,
        })
    }

    /// This subset with `id` removed. `None` if nothing would remain.
    pub fn without(&self, id: &str) -> Option<SpeakerSubset> {
        let members: Vec<String> = self.members.iter().filter(|m| *m != id).cloned().collect();
        (!members.is_empty()).then(|| SpeakerSubset {
            filter: self.filter.clone(),
            members,
        })
    }
}

fn check_filter_keys(corpus: &Corpus, filter: &AttributeFilter) -> Result<(), CorpusError> {
    let schema = corpus.attribute_schema();
    match filter.0.keys().find(|k| !schema.contains(k.as_str())) {
        Some(k) => Err(CorpusError::UnknownAttribute(k.clone())),
        None => Ok(()),
    }
}

/// All speakers matching every constraint of `filter`, in manifest order.
pub fn filter_speakers(corpus: &Corpus, filter: &AttributeFilter) -> Result<SpeakerSubset, CorpusError> {
    check_filter_keys(corpus, filter)?;
    let members: Vec<String> = corpus
        .speakers
        .iter()
        .filter(|s| filter.matches(&s.attributes))
        .map(|s| s.id.clone())
        .collect();
    if members.is_empty() {
        return Err(CorpusError::EmptySubset(filter.clone()));
    }
    Ok(SpeakerSubset {
        filter: filter.clone(),
        members,
    })
}

// ---------------------------------------------------------------------------
// Embedding files
// ---------------------------------------------------------------------------

/// Encodes rows into the binary `EMB1` layout: magic, u32 dim, u32 count,
/// then `count * dim` little-endian f32, row-major.
pub fn encode_embeddings<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(EMB_HEADER_LEN + 4 * dim * rows.len());
    buf.extend_from_slice(&EMB_MAGIC);
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for row in rows {
        let row = row.as_ref();
        debug_assert_eq!(row.len(), dim);
        for x in row {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

/// Decodes an `EMB1` buffer into `(dim, rows)`.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>), String> {
    if bytes.len() < EMB_HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if bytes[..4] != EMB_MAGIC {
        return Err(format!("bad magic {:02X?}", &bytes[..4]));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let dim = word(4);
    let count = word(8);
    let expected = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(EMB_HEADER_LEN))
        .ok_or("header sizes overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "expected {expected} bytes for {count} x {dim}, found {}",
            bytes.len()
        ));
    }
    let rows = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4 * dim.max(1))
        .take(count)
        .map(|chunk| {
            chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect::<Vec<Vec<f32>>>();
    // dim == 0 leaves the chunk iterator empty
    let rows = if dim == 0 { vec![Vec::new(); count] } else { rows };
    Ok((dim, rows))
}

fn read_csv_embeddings(path: &Path, owner: &str, expected_dim: usize) -> Result<Vec<Vec<f32>>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| embedding_open_error(path, owner, e.into_kind()))?;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CorpusError::MalformedEmbedding {
            file: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if record.len() != expected_dim {
            return Err(CorpusError::DimensionMismatch {
                owner: owner.to_string(),
                file: path.to_path_buf(),
                row: Some(k),
                expected: expected_dim,
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .map(|field| field.parse::<f32>())
            .collect::<Result<Vec<f32>, _>>()
            .map_err(|e| CorpusError::MalformedEmbedding {
                file: path.to_path_buf(),
                reason: format!("row {k}: {e}"),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

fn embedding_open_error(path: &Path, owner: &str, kind: csv::ErrorKind) -> CorpusError {
    match kind {
        csv::ErrorKind::Io(e) if e.kind() == io::ErrorKind::NotFound => CorpusError::UnresolvableEmbedding {
            owner: owner.to_string(),
            file: path.to_path_buf(),
        },
        csv::ErrorKind::Io(e) => CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        },
        other => CorpusError::MalformedEmbedding {
            file: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

fn read_binary_embeddings(path: &Path, owner: &str, expected_dim: usize) -> Result<Vec<Vec<f32>>, CorpusError> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CorpusError::UnresolvableEmbedding {
                owner: owner.to_string(),
                file: path.to_path_buf(),
            }
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    // check the declared dim before the length so a short/long file of the
    // wrong width is reported as a dimension problem
    if bytes.len() >= EMB_HEADER_LEN && bytes[..4] == EMB_MAGIC {
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if dim != expected_dim {
            return Err(CorpusError::DimensionMismatch {
                owner: owner.to_string(),
                file: path.to_path_buf(),
                row: None,
                expected: expected_dim,
                found: dim,
            });
        }
    }
    let (_, rows) = decode_embeddings(&bytes).map_err(|reason| CorpusError::MalformedEmbedding {
        file: path.to_path_buf(),
        reason,
    })?;
    Ok(rows)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads an embedding file, dispatching on extension (`.csv` is textual,
/// anything else is `EMB1`).
pub fn read_embedding_file(path: &Path, owner: &str, expected_dim: usize) -> Result<Vec<Vec<f32>>, CorpusError> {
    if is_csv(path) {
        read_csv_embeddings(path, owner, expected_dim)
    } else {
        read_binary_embeddings(path, owner, expected_dim)
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    version: u32,
    embedding_dim: usize,
    speakers: Vec<SpeakerEntry>,
    #[serde(default)]
    conversions: Vec<ConversionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpeakerEntry {
    id: String,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
    utterance_ids: Vec<String>,
    embedding_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConversionEntry {
    id: String,
    source: String,
    target: String,
    utterance_ids: Vec<String>,
    embedding_file: String,
}

fn read_utterances(
    base: &Path,
    owner: &str,
    ids: &[String],
    file: &str,
    dim: usize,
) -> Result<Vec<Utterance>, CorpusError> {
    let path = base.join(file);
    let rows = read_embedding_file(&path, owner, dim)?;
    if rows.len() != ids.len() {
        return Err(CorpusError::RowCountMismatch {
            owner: owner.to_string(),
            file: path,
            ids: ids.len(),
            rows: rows.len(),
        });
    }
    ids.iter()
        .zip(rows)
        .map(|(id, row)| {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(CorpusError::NonFinite {
                    owner: owner.to_string(),
                    file: path.clone(),
                    utterance: id.clone(),
                });
            }
            Ok(Utterance::new(id.clone(), row))
        })
        .collect()
}

/// Reads a manifest and every embedding file it references without checking
/// corpus-level invariants (duplicate ids, dangling references, ...).
/// File-level problems (missing files, wrong widths, non-finite values) are
/// still errors.
pub fn read_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CorpusError::NotFound(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| CorpusError::MalformedManifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let dim = doc.embedding_dim;

    let speakers = doc
        .speakers
        .into_iter()
        .map(|entry| {
            let owner = location(EntityKind::Speaker, &entry.id);
            let utterances = read_utterances(base, &owner, &entry.utterance_ids, &entry.embedding_file, dim)?;
            Ok(Speaker {
                id: entry.id,
                attributes: entry.attributes,
                utterances,
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;

    let conversions = doc
        .conversions
        .into_iter()
        .map(|entry| {
            let owner = location(EntityKind::Conversion, &entry.id);
            let utterances = read_utterances(base, &owner, &entry.utterance_ids, &entry.embedding_file, dim)?;
            Ok(ConversionSet {
                id: entry.id,
                source_id: entry.source,
                target_id: entry.target,
                utterances,
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;

    Ok(Corpus {
        version: doc.version,
        embedding_dim: dim,
        speakers,
        conversions,
        provenance: doc.provenance,
    })
}

/// Reads and fully validates a corpus. Anything this accepts passes
/// [`validate`] with no violations.
pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let corpus = read_manifest(path)?;
    let violations = validate(&corpus);
    if violations.is_empty() {
        Ok(corpus)
    } else {
        Err(CorpusError::Invalid(violations))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
const EMB_DIR: &str = "emb";

/// Writes `manifest.json` plus one `EMB1` file per speaker and per
/// conversion set under `dir`, overwriting same-named files. Returns the
/// manifest path.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf, CorpusError> {
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Write { path, source }
    };
    let emb_dir = dir.join(EMB_DIR);
    fs::create_dir_all(&emb_dir).map_err(write_err(&emb_dir))?;

    let write_matrix = |name: String, utterances: &[Utterance]| -> Result<String, CorpusError> {
        let rel = format!("{EMB_DIR}/{name}");
        let rows: Vec<&[f32]> = utterances.iter().map(|u| u.embedding.values()).collect();
        let path = dir.join(&rel);
        fs::write(&path, encode_embeddings(corpus.embedding_dim, &rows)).map_err(write_err(&path))?;
        Ok(rel)
    };

    let mut speakers = Vec::with_capacity(corpus.speakers.len());
    for (i, s) in corpus.speakers.iter().enumerate() {
        speakers.push(SpeakerEntry {
            id: s.id.clone(),
            attributes: s.attributes.clone(),
            utterance_ids: s.utterances.iter().map(|u| u.id.clone()).collect(),
            embedding_file: write_matrix(format!("speaker_{i:04}.emb"), &s.utterances)?,
        });
    }
    let mut conversions = Vec::with_capacity(corpus.conversions.len());
    for (i, c) in corpus.conversions.iter().enumerate() {
        conversions.push(ConversionEntry {
            id: c.id.clone(),
            source: c.source_id.clone(),
            target: c.target_id.clone(),
            utterance_ids: c.utterances.iter().map(|u| u.id.clone()).collect(),
            embedding_file: write_matrix(format!("conversion_{i:04}.emb"), &c.utterances)?,
        });
    }

    let doc = ManifestDoc {
        version: corpus.version,
        embedding_dim: corpus.embedding_dim,
        speakers,
        conversions,
        provenance: corpus.provenance.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    let manifest = dir.join(MANIFEST_FILE);
    fs::write(&manifest, text).map_err(write_err(&manifest))?;
    Ok(manifest)
}
