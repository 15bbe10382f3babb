//! Synonym identification over a pluggable lexicon.
//!
//! Three phases: tokenize and drop stopwords while stemming the remaining
//! words, look each keyword up in the lexicon, and emit the lemma-form
//! synonyms as one matrix row per keyword.
//!
//! Lexicon file layout (JSON object):
//!
//! ```json
//! {
//!   "stopwords": ["the", "is"],
//!   "synonyms": { "soil": ["earth", "ground"] },
//!   "stem_rules": [["ies", "y"], ["es", ""], ["s", ""], ["ing", ""], ["ed", ""]]
//! }
//! ```
//!
//! `stem_rules` is optional and defaults to the rules shown.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_config_file, ConfigError};

/// Stems shorter than this are never produced.
pub const MIN_STEM_LEN: usize = 3;

/// One suffix-strip rule: replace `suffix` with `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemRule {
    pub suffix: String,
    pub replacement: String,
}

impl StemRule {
    fn new(suffix: &str, replacement: &str) -> Self {
        Self {
            suffix: suffix.into(),
            replacement: replacement.into(),
        }
    }
}

pub fn default_stem_rules() -> Vec<StemRule> {
    vec![
        StemRule::new("ies", "y"),
        StemRule::new("es", ""),
        StemRule::new("s", ""),
        StemRule::new("ing", ""),
        StemRule::new("ed", ""),
    ]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    #[serde(default)]
    stopwords: Vec<String>,
    synonyms: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    stem_rules: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
    /// lemma -> base words listing it, for words that are not base words.
    reverse: HashMap<String, Vec<String>>,
    stopwords: HashSet<String>,
    stem_rules: Vec<StemRule>,
}

const BUNDLED: &str = include_str!("../../data/lexicon.json");

impl Lexicon {
    /// The agriculture lexicon and English stopword list shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&read_config_file(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: LexiconFile =
            serde_json::from_str(text).map_err(|e| ConfigError::parse("lexicon", e))?;
        let rules = file
            .stem_rules
            .map(|rs| rs.iter().map(|(s, r)| StemRule::new(s, r)).collect())
            .unwrap_or_else(default_stem_rules);
        Self::new(file.synonyms, file.stopwords, rules)
    }

    pub fn new(
        entries: BTreeMap<String, Vec<String>>,
        stopwords: impl IntoIterator<Item = String>,
        stem_rules: Vec<StemRule>,
    ) -> Result<Self, ConfigError> {
        let invalid = |reason: String| ConfigError::invalid("lexicon", reason);
        let stopwords: HashSet<String> = stopwords.into_iter().map(|w| w.to_lowercase()).collect();
        let mut normalized = BTreeMap::new();
        for (word, synonyms) in entries {
            let word = word.to_lowercase();
            if stopwords.contains(&word) {
                return Err(invalid(format!("base word {word:?} is also a stopword")));
            }
            if synonyms.is_empty() {
                return Err(invalid(format!("{word:?} has an empty synonym list")));
            }
            let lowered: Vec<String> = synonyms.iter().map(|s| s.to_lowercase()).collect();
            let unique: BTreeSet<&String> = lowered.iter().collect();
            if unique.len() != lowered.len() {
                return Err(invalid(format!("{word:?} lists a synonym twice")));
            }
            if normalized.insert(word.clone(), lowered).is_some() {
                return Err(invalid(format!("{word:?} defined twice")));
            }
        }
        if stem_rules.iter().any(|r| r.suffix.is_empty()) {
            return Err(invalid("stem rule with empty suffix".into()));
        }
        let mut reverse: HashMap<String, Vec<String>> = HashMap::new();
        for (word, synonyms) in &normalized {
            for s in synonyms {
                if !normalized.contains_key(s) {
                    reverse.entry(s.clone()).or_default().push(word.clone());
                }
            }
        }
        Ok(Self {
            entries: normalized,
            reverse,
            stopwords,
            stem_rules,
        })
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies the first (longest-suffix) rule that leaves a stem of at
    /// least [`MIN_STEM_LEN`] characters. At most one rule fires.
    pub fn stem(&self, word: &str) -> String {
        let mut rules: Vec<&StemRule> = self.stem_rules.iter().collect();
        // Stable sort keeps file order among equal-length suffixes.
        rules.sort_by_key(|r| std::cmp::Reverse(r.suffix.chars().count()));
        for rule in rules {
            if let Some(base) = word.strip_suffix(rule.suffix.as_str()) {
                let stem = format!("{base}{}", rule.replacement);
                if stem.chars().count() >= MIN_STEM_LEN {
                    return stem;
                }
            }
        }
        word.to_string()
    }

    /// Synonym set for a word, trying the stem, the stem with a restored
    /// trailing `e`, then the surface form. Returns the matched lemma.
    fn lookup(&self, surface: &str, stem: &str) -> Option<(String, Vec<String>)> {
        let candidates = [stem.to_string(), format!("{stem}e"), surface.to_string()];
        for c in &candidates {
            if let Some(syns) = self.entries.get(c) {
                return Some((c.clone(), syns.clone()));
            }
        }
        for c in &candidates {
            if let Some(bases) = self.reverse.get(c) {
                let mut syns: Vec<String> = Vec::new();
                for base in bases {
                    for s in std::iter::once(base).chain(&self.entries[base]) {
                        if s != c && !syns.contains(s) {
                            syns.push(s.clone());
                        }
                    }
                }
                return Some((c.clone(), syns));
            }
        }
        None
    }
}

/// One retained keyword and its synonyms, in lexicon order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymRow {
    pub keyword: String,
    pub synonyms: Vec<String>,
}

/// Rows follow the order of the retained keywords in the input text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymMatrix {
    pub rows: Vec<SynonymRow>,
}

impl SynonymMatrix {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.keyword.as_str())
    }
}

/// Lowercased words; apostrophes inside a word are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn identify_synonyms(text: &str, lexicon: &Lexicon) -> SynonymMatrix {
    let keywords: Vec<(String, String)> = tokenize(text)
        .into_iter()
        .filter(|w| !lexicon.is_stopword(w))
        .map(|w| {
            let stem = lexicon.stem(&w);
            (w, stem)
        })
        .collect();

    let rows = keywords
        .into_iter()
        .map(|(surface, stem)| match lexicon.lookup(&surface, &stem) {
            Some((lemma, synonyms)) => SynonymRow {
                keyword: lemma,
                synonyms,
            },
            None => SynonymRow {
                keyword: stem,
                synonyms: Vec::new(),
            },
        })
        .collect();
    SynonymMatrix { rows }
}
