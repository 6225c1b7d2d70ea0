//! Loading and saving corpora, lexicons and trained models.
//!
//! Corpora and lexicons are UTF-8 TSV files with a mandatory header row.
//! Models are JSON documents with a fixed key order and shortest
//! round-trip float formatting, so a load/save cycle is byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{TrainedModel, TrainingMetadata};
use crate::error::{DetoxError, Result};
use crate::language::Language;
use crate::normalizer::normalize;
use crate::vectorizer::Vocabulary;

pub const CORPUS_HEADER: &str = "toxic\tdetox";
pub const LEXICON_HEADER: &str = "toxic_token\treplacement";
pub const MODEL_FORMAT: &str = "detox-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MODEL_EXTENSION: &str = "detoxmodel";

/// A toxic sentence aligned with its detoxified rewrite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub toxic_text: String,
    pub detox_text: String,
    pub language: Language,
}

impl ParallelPair {
    pub fn new(toxic_text: &str, detox_text: &str, language: Language) -> Result<Self> {
        let toxic_text = toxic_text.trim();
        let detox_text = detox_text.trim();
        if toxic_text.is_empty() || detox_text.is_empty() {
            return Err(DetoxError::InvalidConfig(
                "parallel pair sides must be non-empty".into(),
            ));
        }
        if toxic_text == detox_text {
            return Err(DetoxError::InvalidConfig(format!(
                "parallel pair has identical sides: {toxic_text:?}"
            )));
        }
        Ok(ParallelPair {
            toxic_text: toxic_text.to_string(),
            detox_text: detox_text.to_string(),
            language,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    /// 1 = toxic, 0 = non-toxic.
    pub label: u8,
    pub language: Language,
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| DetoxError::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| DetoxError::NotUtf8 {
        path: path.to_path_buf(),
    })
}

/// Data rows of a two-column TSV file as `(line_number, first, second)`.
fn read_tsv_rows(path: &Path, header: &str) -> Result<Vec<(usize, String, String)>> {
    let content = read_utf8(path)?;
    let mut lines = content
        .split('\n')
        .enumerate()
        .map(|(i, line)| (i + 1, line.strip_suffix('\r').unwrap_or(line)));
    let parse_err = |line: usize, message: String| DetoxError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    match lines.next() {
        Some((_, first)) if first.trim_start_matches('\u{feff}') == header => {}
        Some((n, first)) => {
            return Err(parse_err(
                n,
                format!("expected header {header:?}, found {first:?}"),
            ))
        }
        None => return Err(parse_err(1, "missing header".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 2 {
            return Err(parse_err(
                n,
                format!("expected 2 tab-separated columns, found {}", columns.len()),
            ));
        }
        rows.push((n, columns[0].to_string(), columns[1].to_string()));
    }
    Ok(rows)
}

pub fn load_parallel_corpus(path: impl AsRef<Path>, language: Language) -> Result<Vec<ParallelPair>> {
    let path = path.as_ref();
    let rows = read_tsv_rows(path, CORPUS_HEADER)?;
    if rows.is_empty() {
        return Err(DetoxError::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut pairs = Vec::with_capacity(rows.len());
    for (line, toxic, detox) in rows {
        let pair = ParallelPair::new(&toxic, &detox, language).map_err(|e| DetoxError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if let Some(&first_line) = seen.get(&pair.toxic_text) {
            return Err(DetoxError::DuplicateKey {
                key: pair.toxic_text,
                first_line,
                second_line: line,
            });
        }
        seen.insert(pair.toxic_text.clone(), line);
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Writes a corpus in the TSV format read by [`load_parallel_corpus`].
pub fn write_parallel_corpus(path: impl AsRef<Path>, pairs: &[ParallelPair]) -> Result<()> {
    let mut out = String::from(CORPUS_HEADER);
    out.push('\n');
    for pair in pairs {
        out.push_str(&pair.toxic_text);
        out.push('\t');
        out.push_str(&pair.detox_text);
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Each toxic side becomes a positive example, each rewrite a negative one.
pub fn derive_labeled_set(pairs: &[ParallelPair]) -> Vec<LabeledExample> {
    pairs
        .iter()
        .flat_map(|pair| {
            [
                LabeledExample {
                    text: pair.toxic_text.clone(),
                    label: 1,
                    language: pair.language,
                },
                LabeledExample {
                    text: pair.detox_text.clone(),
                    label: 0,
                    language: pair.language,
                },
            ]
        })
        .collect()
}

/// Map from normalized offensive token (or token sequence) to its replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    language: Language,
    entries: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn new(language: Language, entries: BTreeMap<String, String>) -> Result<Self> {
        let invalid = |key: &str, message: &str| DetoxError::InvalidLexicon {
            key: key.to_string(),
            message: message.to_string(),
        };
        // Every token that can take part in a match.
        let key_tokens: BTreeSet<&str> = entries.keys().flat_map(|k| k.split(' ')).collect();
        for (key, replacement) in &entries {
            if key.is_empty() || replacement.trim().is_empty() {
                return Err(invalid(key, "empty key or replacement"));
            }
            if normalize(key).text != *key {
                return Err(invalid(key, "key is not in normalized form"));
            }
            let replaced = normalize(replacement);
            if replaced.text == *key {
                return Err(invalid(key, "key maps to itself"));
            }
            if replaced.tokens.iter().any(|t| key_tokens.contains(t.as_str())) {
                return Err(invalid(
                    key,
                    "replacement contains a token that is itself matched by the lexicon",
                ));
            }
        }
        Ok(Lexicon { language, entries })
    }

    pub fn empty(language: Language) -> Self {
        Lexicon {
            language,
            entries: BTreeMap::new(),
        }
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn get(&self, normalized_key: &str) -> Option<&str> {
        self.entries.get(normalized_key).map(String::as_str)
    }

    pub fn contains_key(&self, normalized_key: &str) -> bool {
        self.entries.contains_key(normalized_key)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_lexicon(path: impl AsRef<Path>, language: Language) -> Result<Lexicon> {
    let path = path.as_ref();
    let mut entries = BTreeMap::new();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (line, key, replacement) in read_tsv_rows(path, LEXICON_HEADER)? {
        let key = key.trim().to_string();
        if let Some(&first_line) = lines.get(&key) {
            return Err(DetoxError::DuplicateKey {
                key,
                first_line,
                second_line: line,
            });
        }
        lines.insert(key.clone(), line);
        entries.insert(key, replacement.trim().to_string());
    }
    Lexicon::new(language, entries)
}

/// On-disk layout of a trained model. Field order is the serialized key order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    format_version: u32,
    language: Language,
    trained_at: u64,
    config_fingerprint: String,
    threshold: f64,
    bias: f64,
    idf_log_base: String,
    ngram_range: [u8; 2],
    metadata: TrainingMetadata,
    stopwords: Vec<String>,
    vocabulary: VocabularyDocument,
    weights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyDocument {
    corpus_size: usize,
    terms: Vec<String>,
    doc_freq: Vec<u32>,
}

// Only the envelope, so a newer version is reported as such instead of a
// generic schema error.
#[derive(Deserialize)]
struct ModelEnvelope {
    format: String,
    format_version: u32,
}

pub fn model_to_string(model: &TrainedModel) -> Result<String> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        language: model.language,
        trained_at: model.trained_at,
        config_fingerprint: model.config_fingerprint.clone(),
        threshold: model.threshold,
        bias: model.bias,
        idf_log_base: "e".to_string(),
        ngram_range: [1, 2],
        metadata: model.metadata.clone(),
        stopwords: model.vocabulary.stopwords().iter().cloned().collect(),
        vocabulary: VocabularyDocument {
            corpus_size: model.vocabulary.corpus_size(),
            terms: model.vocabulary.terms().to_vec(),
            doc_freq: model.vocabulary.doc_freq().to_vec(),
        },
        weights: model.weights.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| DetoxError::Schema(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn model_from_str(text: &str) -> Result<TrainedModel> {
    let envelope: ModelEnvelope =
        serde_json::from_str(text).map_err(|e| DetoxError::Schema(e.to_string()))?;
    if envelope.format != MODEL_FORMAT {
        return Err(DetoxError::Schema(format!(
            "not a model file (format {:?})",
            envelope.format
        )));
    }
    if envelope.format_version != MODEL_FORMAT_VERSION {
        return Err(DetoxError::FormatVersion {
            found: envelope.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| DetoxError::Schema(e.to_string()))?;
    if doc.idf_log_base != "e" || doc.ngram_range != [1, 2] {
        return Err(DetoxError::Schema(format!(
            "unsupported feature settings: log base {:?}, n-gram range {:?}",
            doc.idf_log_base, doc.ngram_range
        )));
    }
    if doc.weights.len() != doc.vocabulary.terms.len() {
        return Err(DetoxError::Integrity(format!(
            "{} weights for {} vocabulary terms",
            doc.weights.len(),
            doc.vocabulary.terms.len()
        )));
    }
    if !(doc.threshold > 0.0 && doc.threshold < 1.0) {
        return Err(DetoxError::Integrity(format!(
            "threshold {} outside (0, 1)",
            doc.threshold
        )));
    }
    if !doc.bias.is_finite() || doc.weights.iter().any(|w| !w.is_finite()) {
        return Err(DetoxError::Integrity("non-finite parameter".into()));
    }
    let stopwords: BTreeSet<String> = doc.stopwords.into_iter().collect();
    let vocabulary = Vocabulary::from_parts(
        doc.vocabulary.terms,
        doc.vocabulary.doc_freq,
        doc.vocabulary.corpus_size,
        stopwords,
    )?;
    Ok(TrainedModel {
        language: doc.language,
        vocabulary,
        weights: doc.weights,
        bias: doc.bias,
        threshold: doc.threshold,
        trained_at: doc.trained_at,
        config_fingerprint: doc.config_fingerprint,
        metadata: doc.metadata,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let text = model_to_string(model)?;
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    model_from_str(&read_utf8(path)?)
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(DetoxError::io(path, e));
    }
    Ok(())
}
