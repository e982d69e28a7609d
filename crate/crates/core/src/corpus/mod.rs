//! Text normalization, vocabulary indexing and reshare-percentile
//! trimming.

use std::collections::{BTreeMap, HashSet};

use crate::ingest::Post;
use crate::{Error, Result};

/// A tokenized document ready for topic modeling.
///
/// `tokens` are vocabulary indices in text order; unparsable documents
/// (too little readable text) carry an empty or ignored token list and are
/// excluded from model fitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub post_id: String,
    pub tokens: Vec<usize>,
    pub parsable: bool,
}

/// Normalization rules applied before vocabulary indexing.
#[derive(Debug, Clone)]
pub struct NormalizeRules {
    pub min_token_length: usize,
    pub stopwords: HashSet<String>,
}

impl Default for NormalizeRules {
    fn default() -> Self {
        NormalizeRules {
            min_token_length: 3,
            stopwords: default_stopwords(),
        }
    }
}

/// The bundled English stopword list.
pub fn default_stopwords() -> HashSet<String> {
    include_str!("stopwords_en.txt")
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Lowercases, strips punctuation and digits, and drops stopwords and
/// short tokens. Token order is preserved.
pub fn tokenize_normalize(text: &str, rules: &NormalizeRules) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphabetic() {
                c.to_lowercase().next().unwrap_or(' ')
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| t.chars().count() >= rules.min_token_length)
        .filter(|t| !rules.stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

/// A bijective token index with dense, lexicographically ordered indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary of tokens appearing in at least `min_df`
    /// documents, indexed in lexicographic order.
    pub fn build<D: AsRef<[String]>>(docs: &[D], min_df: usize) -> Result<Self> {
        if min_df < 1 {
            return Err(Error::Corpus("min_df must be at least 1".into()));
        }
        let mut document_frequency: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: HashSet<&str> = HashSet::new();
            for token in doc.as_ref() {
                if seen.insert(token) {
                    *document_frequency.entry(token).or_insert(0) += 1;
                }
            }
        }
        let tokens: Vec<String> = document_frequency
            .into_iter()
            .filter(|(_, df)| *df >= min_df)
            .map(|(t, _)| t.to_string())
            .collect();
        if tokens.is_empty() {
            return Err(Error::Corpus("empty vocabulary".into()));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { tokens, index })
    }

    /// Rebuilds a vocabulary from its serialized token list, one token per
    /// line in index order.
    pub fn from_lines(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::Corpus("empty vocabulary".into()));
        }
        let index: BTreeMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::Corpus("duplicate token in vocabulary".into()));
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Serialization: one token per line, line number = index.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Maps token strings to indices, silently dropping out-of-vocabulary
    /// tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }
}

/// Outcome of the top-percentile trim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimReport {
    pub n_before: usize,
    pub n_removed: usize,
    /// Reshare count at the cut (the smallest removed count); `None` when
    /// nothing was removed.
    pub threshold_value: Option<u64>,
}

/// Removes the `floor(percentile * N)` posts with the highest reshare
/// counts, pooled over the whole input.
///
/// Ties are broken by post id: among equal counts the higher id is removed
/// first. Survivors keep their input order.
pub fn trim_top_percentile(posts: Vec<Post>, percentile: f64) -> Result<(Vec<Post>, TrimReport)> {
    if !(0.0..1.0).contains(&percentile) {
        return Err(Error::Corpus(format!(
            "trim percentile must be in [0, 1), got {percentile}"
        )));
    }
    let n_before = posts.len();
    let n_removed = (percentile * n_before as f64).floor() as usize;
    if n_removed == 0 {
        return Ok((
            posts,
            TrimReport {
                n_before,
                n_removed: 0,
                threshold_value: None,
            },
        ));
    }
    let mut ranked: Vec<usize> = (0..n_before).collect();
    ranked.sort_by(|&a, &b| {
        posts[b]
            .reshare_count
            .cmp(&posts[a].reshare_count)
            .then_with(|| posts[b].id.cmp(&posts[a].id))
    });
    let removed: HashSet<usize> = ranked[..n_removed].iter().copied().collect();
    let threshold_value = ranked[..n_removed]
        .iter()
        .map(|&i| posts[i].reshare_count)
        .min();
    let survivors: Vec<Post> = posts
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, p)| p)
        .collect();
    Ok((
        survivors,
        TrimReport {
            n_before,
            n_removed,
            threshold_value,
        },
    ))
}
