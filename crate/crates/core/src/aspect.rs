//! Analyst topic labels and per-document content-aspect scores.
//!
//! Labeling is a human-in-the-loop step: after inspecting the top words of
//! each topic, the analyst records one of `episodic`, `thematic` or
//! `unparsable` per topic in a small CSV file. Scores are then plain sums
//! of document-topic posterior mass over each label class, so the three
//! components always partition the posterior row.

use std::str::FromStr;

use crate::{Error, Result};

/// Analyst-assigned aspect of one topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AspectLabel {
    Episodic,
    Thematic,
    Unparsable,
}

impl FromStr for AspectLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "episodic" => Ok(AspectLabel::Episodic),
            "thematic" => Ok(AspectLabel::Thematic),
            "unparsable" => Ok(AspectLabel::Unparsable),
            other => Err(Error::Labeling(format!("unknown label {other:?}"))),
        }
    }
}

impl AspectLabel {
    pub fn name(self) -> &'static str {
        match self {
            AspectLabel::Episodic => "episodic",
            AspectLabel::Thematic => "thematic",
            AspectLabel::Unparsable => "unparsable",
        }
    }
}

/// A complete topic labeling: exactly one label per topic index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicLabeling {
    labels: Vec<AspectLabel>,
}

impl TopicLabeling {
    pub fn new(labels: Vec<AspectLabel>) -> Self {
        TopicLabeling { labels }
    }

    /// Parses labeling text with exactly `num_topics` lines of
    /// `topic_index,label` (0-based indices, labels case-insensitive).
    pub fn parse(text: &str, num_topics: usize) -> Result<Self> {
        let mut labels: Vec<Option<AspectLabel>> = vec![None; num_topics];
        let mut seen = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (index_part, label_part) = line.split_once(',').ok_or_else(|| {
                Error::Labeling(format!("line {}: expected 'index,label'", lineno + 1))
            })?;
            let index: usize = index_part.trim().parse().map_err(|_| {
                Error::Labeling(format!("line {}: bad topic index {index_part:?}", lineno + 1))
            })?;
            if index >= num_topics {
                return Err(Error::Labeling(format!(
                    "line {}: topic index {index} out of range for {num_topics} topics",
                    lineno + 1
                )));
            }
            if labels[index].is_some() {
                return Err(Error::Labeling(format!(
                    "duplicate labeling for topic {index}"
                )));
            }
            labels[index] = Some(label_part.parse()?);
            seen += 1;
        }
        if seen < num_topics {
            return Err(Error::Labeling(format!(
                "incomplete labeling: {seen} of {num_topics} topics labeled"
            )));
        }
        Ok(TopicLabeling {
            labels: labels.into_iter().map(|l| l.expect("all labeled")).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, topic: usize) -> AspectLabel {
        self.labels[topic]
    }

    pub fn labels(&self) -> &[AspectLabel] {
        &self.labels
    }
}

/// Per-document content scores; the components sum to the posterior row
/// sum because the labels partition the topics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentScores {
    pub episodic: f64,
    pub thematic: f64,
    pub unparsable: f64,
}

/// Sums posterior mass over each label class of the topic labeling.
pub fn score(theta_row: &[f64], labeling: &TopicLabeling) -> Result<ContentScores> {
    if theta_row.len() != labeling.len() {
        return Err(Error::Labeling(format!(
            "labeling covers {} topics but the posterior row has {}",
            labeling.len(),
            theta_row.len()
        )));
    }
    let mut scores = ContentScores {
        episodic: 0.0,
        thematic: 0.0,
        unparsable: 0.0,
    };
    for (k, &mass) in theta_row.iter().enumerate() {
        match labeling.label(k) {
            AspectLabel::Episodic => scores.episodic += mass,
            AspectLabel::Thematic => scores.thematic += mass,
            AspectLabel::Unparsable => scores.unparsable += mass,
        }
    }
    Ok(scores)
}
