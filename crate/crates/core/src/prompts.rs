//! Prompt templates and the triadic tone word groups.
//!
//! A [`TonePromptSet`] holds the positive / neutral / negative synonym
//! groups; a [`ScoringMode`] selects which of those words participate in a
//! given run. Word-to-token mapping is deliberately left to the serving
//! side: this module deals only in surface words, and the wire contract
//! requires the server to evaluate each candidate prefixed with a single
//! space (the template never ends in whitespace).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prompt prefix used when none is configured.
pub const DEFAULT_TEMPLATE_PREFIX: &str =
    "Rate the quality of the image. The quality of this image is";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("empty template prefix")]
    EmptyTemplate,
    #[error("invalid prompt set: {}", .0.join("; "))]
    InvalidPromptSet(Vec<String>),
}

/// The fixed text whose next-token distribution is queried.
///
/// The stored prefix never carries trailing whitespace; the single
/// separating space lives on the candidate-word side of the wire contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    prefix: String,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    prefix: String,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = PromptError;
    fn try_from(raw: RawTemplate) -> Result<Self, PromptError> {
        PromptTemplate::new(raw.prefix)
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> RawTemplate {
        RawTemplate { prefix: t.prefix }
    }
}

impl PromptTemplate {
    pub fn new(prefix: impl Into<String>) -> Result<Self, PromptError> {
        let prefix = prefix.into();
        let trimmed = prefix.trim_end();
        if trimmed.is_empty() {
            return Err(PromptError::EmptyTemplate);
        }
        Ok(Self {
            prefix: trimmed.to_string(),
        })
    }

    /// The exact prefix text sent to the backend.
    pub fn build_prompt(&self) -> &str {
        &self.prefix
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            prefix: DEFAULT_TEMPLATE_PREFIX.to_string(),
        }
    }
}

/// Tone of a candidate word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tone {
    Positive,
    Neutral,
    Negative,
}

impl Tone {
    pub fn name(self) -> &'static str {
        match self {
            Tone::Positive => "positive",
            Tone::Neutral => "neutral",
            Tone::Negative => "negative",
        }
    }
}

/// Which words of the prompt set a run reads.
///
/// `Binary` uses the first positive word against the first negative word,
/// `Tti` the first word of each of the three groups, and `TtiMpe` every
/// word, averaged per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    Binary,
    Tti,
    TtiMpe,
}

impl ScoringMode {
    /// All modes, in ablation-row order.
    pub const ALL: [ScoringMode; 3] = [ScoringMode::Binary, ScoringMode::Tti, ScoringMode::TtiMpe];

    pub fn name(self) -> &'static str {
        match self {
            ScoringMode::Binary => "binary",
            ScoringMode::Tti => "tti",
            ScoringMode::TtiMpe => "tti_mpe",
        }
    }
}

impl std::fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScoringMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(ScoringMode::Binary),
            "tti" => Ok(ScoringMode::Tti),
            "tti_mpe" | "tti+mpe" => Ok(ScoringMode::TtiMpe),
            other => Err(format!(
                "unknown scoring mode '{other}' (expected binary, tti or tti+mpe)"
            )),
        }
    }
}

/// The positive / neutral / negative synonym word groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TonePromptSet {
    pub positive: Vec<String>,
    pub neutral: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for TonePromptSet {
    fn default() -> Self {
        fn words(ws: &[&str]) -> Vec<String> {
            ws.iter().map(|w| w.to_string()).collect()
        }
        Self {
            positive: words(&["good", "high", "fine"]),
            neutral: words(&["average", "medium", "acceptable"]),
            negative: words(&["poor", "low", "bad"]),
        }
    }
}

impl TonePromptSet {
    /// Builds a validated set; see [`validate_prompt_set`] for the rules.
    pub fn new(
        positive: Vec<String>,
        neutral: Vec<String>,
        negative: Vec<String>,
    ) -> Result<Self, PromptError> {
        let set = Self {
            positive,
            neutral,
            negative,
        };
        let violations = validate_prompt_set(&set);
        if violations.is_empty() {
            Ok(set)
        } else {
            Err(PromptError::InvalidPromptSet(violations))
        }
    }

    pub fn group(&self, tone: Tone) -> &[String] {
        match tone {
            Tone::Positive => &self.positive,
            Tone::Neutral => &self.neutral,
            Tone::Negative => &self.negative,
        }
    }

    /// The words a mode reads, in group-major order (positive, neutral,
    /// negative; list order within a group).
    pub fn active_words(&self, mode: ScoringMode) -> Vec<(&str, Tone)> {
        let mut out = Vec::new();
        match mode {
            ScoringMode::Binary => {
                if let Some(w) = self.positive.first() {
                    out.push((w.as_str(), Tone::Positive));
                }
                if let Some(w) = self.negative.first() {
                    out.push((w.as_str(), Tone::Negative));
                }
            }
            ScoringMode::Tti => {
                for tone in [Tone::Positive, Tone::Neutral, Tone::Negative] {
                    if let Some(w) = self.group(tone).first() {
                        out.push((w.as_str(), tone));
                    }
                }
            }
            ScoringMode::TtiMpe => {
                for tone in [Tone::Positive, Tone::Neutral, Tone::Negative] {
                    for w in self.group(tone) {
                        out.push((w.as_str(), tone));
                    }
                }
            }
        }
        out
    }

    /// Candidate list for a backend query: the active words, order kept.
    pub fn candidate_words(&self, mode: ScoringMode) -> Vec<String> {
        self.active_words(mode)
            .into_iter()
            .map(|(w, _)| w.to_string())
            .collect()
    }
}

/// Checks every prompt-set invariant; returns violations as data.
///
/// Rules: the three groups are nonempty; words are nonempty, lowercase and
/// whitespace-free; no duplicates within a group; no word in two groups.
pub fn validate_prompt_set(set: &TonePromptSet) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for tone in [Tone::Positive, Tone::Neutral, Tone::Negative] {
        let group = set.group(tone);
        if group.is_empty() {
            violations.push(format!("empty group: {}", tone.name()));
        }
        let mut in_group: Vec<&str> = Vec::new();
        for word in group {
            if word.is_empty()
                || word.chars().any(char::is_whitespace)
                || word.chars().any(char::is_uppercase)
            {
                violations.push(format!("invalid word in {}: {word:?}", tone.name()));
            }
            if in_group.contains(&word.as_str()) {
                violations.push(format!("duplicate word in {}: {word}", tone.name()));
            } else if seen.contains(&word.as_str()) {
                violations.push(format!("word in multiple groups: {word}"));
            }
            in_group.push(word);
        }
        seen.extend(in_group);
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pos: &[&str], neu: &[&str], neg: &[&str]) -> TonePromptSet {
        TonePromptSet {
            positive: pos.iter().map(|s| s.to_string()).collect(),
            neutral: neu.iter().map(|s| s.to_string()).collect(),
            negative: neg.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn default_template_is_the_quality_prompt() {
        let t = PromptTemplate::default();
        assert_eq!(
            t.build_prompt(),
            "Rate the quality of the image. The quality of this image is"
        );
    }

    #[test]
    fn custom_prefix_round_trips() {
        let t = PromptTemplate::new("The quality of this video is").unwrap();
        assert_eq!(t.build_prompt(), "The quality of this video is");
    }

    #[test]
    fn empty_prefix_rejected_at_construction() {
        assert!(matches!(
            PromptTemplate::new(""),
            Err(PromptError::EmptyTemplate)
        ));
        assert!(matches!(
            PromptTemplate::new("   "),
            Err(PromptError::EmptyTemplate)
        ));
    }

    #[test]
    fn trailing_whitespace_is_trimmed() {
        let t = PromptTemplate::new("The quality of this image is ").unwrap();
        assert_eq!(t.build_prompt(), "The quality of this image is");
    }

    #[test]
    fn active_words_binary_defaults() {
        let set = TonePromptSet::default();
        let words = set.active_words(ScoringMode::Binary);
        assert_eq!(
            words,
            vec![("good", Tone::Positive), ("poor", Tone::Negative)]
        );
    }

    #[test]
    fn active_words_tti_defaults() {
        let set = TonePromptSet::default();
        let words: Vec<&str> = set
            .active_words(ScoringMode::Tti)
            .into_iter()
            .map(|(w, _)| w)
            .collect();
        assert_eq!(words, vec!["good", "average", "poor"]);
    }

    #[test]
    fn active_words_tti_mpe_is_all_nine() {
        let set = TonePromptSet::default();
        let words: Vec<&str> = set
            .active_words(ScoringMode::TtiMpe)
            .into_iter()
            .map(|(w, _)| w)
            .collect();
        assert_eq!(
            words,
            vec!["good", "high", "fine", "average", "medium", "acceptable", "poor", "low", "bad"]
        );
    }

    #[test]
    fn active_word_lengths_per_mode() {
        let set = TonePromptSet::default();
        assert_eq!(set.active_words(ScoringMode::Binary).len(), 2);
        assert_eq!(set.active_words(ScoringMode::Tti).len(), 3);
        assert_eq!(
            set.active_words(ScoringMode::TtiMpe).len(),
            set.positive.len() + set.neutral.len() + set.negative.len()
        );
    }

    #[test]
    fn default_set_is_valid() {
        assert!(validate_prompt_set(&TonePromptSet::default()).is_empty());
    }

    #[test]
    fn word_in_two_groups_is_a_violation() {
        let violations = validate_prompt_set(&set(&["good"], &["good"], &["poor"]));
        assert!(violations.iter().any(|v| v == "word in multiple groups: good"), "{violations:?}");
    }

    #[test]
    fn empty_group_is_a_violation() {
        let violations = validate_prompt_set(&set(&[], &["average"], &["poor"]));
        assert!(violations.iter().any(|v| v == "empty group: positive"), "{violations:?}");
    }

    #[test]
    fn uppercase_and_spaced_words_are_violations() {
        let violations = validate_prompt_set(&set(&["Good"], &["so so"], &["poor"]));
        assert_eq!(violations.len(), 2, "{violations:?}");
    }

    #[test]
    fn mode_parses_cli_spelling() {
        assert_eq!("tti+mpe".parse::<ScoringMode>().unwrap(), ScoringMode::TtiMpe);
        assert_eq!("tti_mpe".parse::<ScoringMode>().unwrap(), ScoringMode::TtiMpe);
        assert_eq!("binary".parse::<ScoringMode>().unwrap(), ScoringMode::Binary);
        assert!("triadic".parse::<ScoringMode>().is_err());
    }

    #[test]
    fn default_set_round_trips_through_serde() {
        let set = TonePromptSet::default();
        let json = serde_json::to_string(&set).unwrap();
        let back: TonePromptSet = serde_json::from_str(&json).unwrap();
        assert_eq!(set, back);
        let again: TonePromptSet =
            serde_json::from_str(&serde_json::to_string(&back).unwrap()).unwrap();
        assert_eq!(set, again);
    }
}
