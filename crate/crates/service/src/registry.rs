//! Per-language models, corpus indexes and lexicons, swappable as one snapshot.
//!
//! A model directory holds, per language code `xx`:
//! `xx.detoxmodel` (required), `xx.corpus.tsv` and `xx.lexicon.tsv` (optional).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use detox_core::corpus_io::{load_lexicon, model_from_str, Lexicon, MODEL_EXTENSION};
use detox_core::rewriter::{build_corpus_index, CorpusIndex};
use detox_core::{load_parallel_corpus, DetoxError, Language, TrainedModel};
use sha2::{Digest, Sha256};

pub struct LanguageBundle {
    pub model: TrainedModel,
    pub corpus: CorpusIndex,
    pub lexicon: Lexicon,
    /// SHA-256 of the model file.
    pub fingerprint: String,
}

#[derive(Default)]
pub struct ModelSet {
    pub bundles: BTreeMap<Language, LanguageBundle>,
}

impl ModelSet {
    pub fn load_dir(dir: &Path) -> Result<Self, DetoxError> {
        let mut bundles = BTreeMap::new();
        if !dir.is_dir() {
            return Ok(ModelSet { bundles });
        }
        for lang in Language::ALL {
            let model_path = dir.join(format!("{}.{MODEL_EXTENSION}", lang.code()));
            if !model_path.exists() {
                continue;
            }
            let bytes = std::fs::read(&model_path).map_err(|source| DetoxError::Io {
                path: model_path.clone(),
                source,
            })?;
            let text = String::from_utf8(bytes).map_err(|_| DetoxError::NotUtf8 {
                path: model_path.clone(),
            })?;
            let model = model_from_str(&text)?;
            if model.language != lang {
                return Err(DetoxError::LanguageMismatch {
                    component: "model file",
                    expected: lang,
                    found: model.language,
                });
            }
            let corpus_path = dir.join(format!("{}.corpus.tsv", lang.code()));
            let corpus = if corpus_path.exists() {
                build_corpus_index(&load_parallel_corpus(&corpus_path, lang)?)?
            } else {
                CorpusIndex::default()
            };
            let lexicon_path = dir.join(format!("{}.lexicon.tsv", lang.code()));
            let lexicon = if lexicon_path.exists() {
                load_lexicon(&lexicon_path, lang)?
            } else {
                Lexicon::empty(lang)
            };
            let fingerprint = hex(&Sha256::digest(text.as_bytes()));
            bundles.insert(
                lang,
                LanguageBundle {
                    model,
                    corpus,
                    lexicon,
                    fingerprint,
                },
            );
        }
        Ok(ModelSet { bundles })
    }

    pub fn languages(&self) -> Vec<Language> {
        self.bundles.keys().copied().collect()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Holds the current [`ModelSet`]. Readers take a cheap `Arc` snapshot;
/// a reload builds a complete new set before swapping it in.
pub struct ModelRegistry {
    dir: PathBuf,
    current: RwLock<Arc<ModelSet>>,
}

impl ModelRegistry {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, DetoxError> {
        let dir = dir.into();
        let set = ModelSet::load_dir(&dir)?;
        Ok(ModelRegistry {
            dir,
            current: RwLock::new(Arc::new(set)),
        })
    }

    pub fn snapshot(&self) -> Arc<ModelSet> {
        self.current.read().expect("registry lock").clone()
    }

    /// Re-reads the model directory. On error the previous snapshot stays active.
    pub fn reload(&self) -> Result<Vec<Language>, DetoxError> {
        let set = Arc::new(ModelSet::load_dir(&self.dir)?);
        let languages = set.languages();
        *self.current.write().expect("registry lock") = set;
        Ok(languages)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
