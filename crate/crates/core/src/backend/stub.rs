//! Deterministic stub provider.
//!
//! Values are pure functions of a stable SHA-256 hash, so any (seed,
//! query) pair yields the same record on every platform and run. Hash
//! mode draws each word logit independently from a configurable range;
//! latent mode derives the three tones monotonically from a per-item
//! quality scalar, which makes end-to-end rank tests exact.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{BackendError, LogitProvider, LogitQuery, StubOptions, WordLogitRecord};
use crate::prompts::{Tone, TonePromptSet};

fn stable_hash(domain: &str, seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(domain.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is at least 8 bytes"))
}

fn unit(domain: &str, seed: u64, parts: &[&str]) -> f64 {
    stable_hash(domain, seed, parts) as f64 / (u64::MAX as f64 + 1.0)
}

/// Per-item latent quality in [0, 1), a stable function of (seed, item).
pub fn latent_quality(seed: u64, item_id: &str) -> f64 {
    unit("latent", seed, &[item_id])
}

/// Monotone tone logits for a latent quality `q`:
/// `pos = 12q`, `neg = 12(1 - q)`, `neu = 12(1 - |2q - 1|)`.
pub fn latent_tone_logits(q: f64) -> (f64, f64, f64) {
    (
        12.0 * q,
        12.0 * (1.0 - (2.0 * q - 1.0).abs()),
        12.0 * (1.0 - q),
    )
}

#[derive(Debug, Clone)]
pub struct StubProvider {
    options: StubOptions,
    tone_of: BTreeMap<String, Tone>,
}

impl StubProvider {
    pub fn new(options: StubOptions) -> Self {
        Self {
            options,
            tone_of: BTreeMap::new(),
        }
    }

    /// Builds the stub with the word-to-tone map latent mode needs.
    pub fn from_config(options: &StubOptions, prompts: &TonePromptSet) -> Self {
        let mut tone_of = BTreeMap::new();
        for tone in [Tone::Positive, Tone::Neutral, Tone::Negative] {
            for word in prompts.group(tone) {
                tone_of.insert(word.clone(), tone);
            }
        }
        Self {
            options: options.clone(),
            tone_of,
        }
    }

    fn hash_value(&self, query: &LogitQuery, word: &str) -> f64 {
        let (lo, hi) = self.options.range;
        let frame = query.frame_index.to_string();
        lo + (hi - lo) * unit("word", self.options.seed, &[&query.item_id, &frame, word])
    }

    fn word_value(&self, query: &LogitQuery, word: &str) -> f64 {
        let base = if self.options.latent {
            match self.tone_of.get(word) {
                Some(tone) => {
                    let q = latent_quality(self.options.seed, &query.item_id);
                    let (pos, neu, neg) = latent_tone_logits(q);
                    match tone {
                        Tone::Positive => pos,
                        Tone::Neutral => neu,
                        Tone::Negative => neg,
                    }
                }
                // Words outside the configured groups fall back to hashing.
                None => self.hash_value(query, word),
            }
        } else {
            self.hash_value(query, word)
        };
        if self.options.noise != 0.0 {
            let frame = query.frame_index.to_string();
            let u = 2.0 * unit("noise", self.options.seed, &[&query.item_id, &frame, word]) - 1.0;
            base + self.options.noise * u
        } else {
            base
        }
    }

    fn record(&self, query: &LogitQuery) -> WordLogitRecord {
        let word_logits = query
            .candidate_words
            .iter()
            .map(|w| (w.clone(), self.word_value(query, w)))
            .collect();
        WordLogitRecord {
            item_id: query.item_id.clone(),
            frame_index: query.frame_index,
            word_logits,
            provider_id: self.id(),
            prompt_digest: query.prompt_digest(),
        }
    }
}

impl LogitProvider for StubProvider {
    fn fetch_raw(&self, query: &LogitQuery) -> Result<WordLogitRecord, BackendError> {
        query.validate()?;
        Ok(self.record(query))
    }

    fn id(&self) -> String {
        format!(
            "stub:seed={}:{}",
            self.options.seed,
            if self.options.latent { "latent" } else { "hash" }
        )
    }
}

/// Hash-mode stub record for a query, without building a provider.
pub fn stub_logits(query: &LogitQuery, seed: u64) -> WordLogitRecord {
    StubProvider::new(StubOptions {
        seed,
        ..StubOptions::default()
    })
    .record(query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MediaRef;

    fn query(item: &str, frame: u32, words: &[&str]) -> LogitQuery {
        LogitQuery {
            item_id: item.into(),
            frame_index: frame,
            media: MediaRef::Inline(Vec::new()),
            prompt_text: "The quality of this image is".into(),
            candidate_words: words.iter().map(|w| w.to_string()).collect(),
        }
    }

    #[test]
    fn same_seed_and_query_is_bit_identical() {
        let q = query("img", 0, &["good", "average", "poor"]);
        assert_eq!(stub_logits(&q, 7), stub_logits(&q, 7));
    }

    #[test]
    fn different_seed_changes_values() {
        let q = query("img", 0, &["good"]);
        assert_ne!(
            stub_logits(&q, 1).word_logits["good"],
            stub_logits(&q, 2).word_logits["good"]
        );
    }

    #[test]
    fn hash_values_stay_in_range() {
        for frame in 0..20 {
            let q = query("clip", frame, &["good", "bad"]);
            for (_, v) in stub_logits(&q, 3).word_logits {
                assert!((0.0..=12.0).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn latent_formula_endpoints() {
        assert_eq!(latent_tone_logits(1.0), (12.0, 0.0, 0.0));
        assert_eq!(latent_tone_logits(0.5), (6.0, 12.0, 6.0));
        assert_eq!(latent_tone_logits(0.0), (0.0, 0.0, 12.0));
    }

    #[test]
    fn latent_mode_uses_tone_formula() {
        let provider = StubProvider::from_config(
            &StubOptions {
                seed: 11,
                latent: true,
                ..StubOptions::default()
            },
            &TonePromptSet::default(),
        );
        let q = query("vid", 2, &["good", "average", "poor"]);
        let record = provider.fetch_raw(&q).unwrap();
        let quality = latent_quality(11, "vid");
        let (pos, neu, neg) = latent_tone_logits(quality);
        assert_eq!(record.word_logits["good"], pos);
        assert_eq!(record.word_logits["average"], neu);
        assert_eq!(record.word_logits["poor"], neg);
    }

    #[test]
    fn latent_mode_gives_group_mates_equal_logits() {
        let provider = StubProvider::from_config(
            &StubOptions {
                seed: 5,
                latent: true,
                ..StubOptions::default()
            },
            &TonePromptSet::default(),
        );
        let q = query("vid", 0, &["good", "high", "fine"]);
        let record = provider.fetch_raw(&q).unwrap();
        assert_eq!(record.word_logits["good"], record.word_logits["high"]);
        assert_eq!(record.word_logits["good"], record.word_logits["fine"]);
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let noisy = StubProvider::from_config(
            &StubOptions {
                seed: 9,
                latent: true,
                noise: 0.5,
                ..StubOptions::default()
            },
            &TonePromptSet::default(),
        );
        let clean = StubProvider::from_config(
            &StubOptions {
                seed: 9,
                latent: true,
                ..StubOptions::default()
            },
            &TonePromptSet::default(),
        );
        let q = query("img", 0, &["good", "average", "poor"]);
        let a = noisy.fetch_raw(&q).unwrap();
        let b = noisy.fetch_raw(&q).unwrap();
        assert_eq!(a, b);
        let base = clean.fetch_raw(&q).unwrap();
        for (word, v) in &a.word_logits {
            assert!((v - base.word_logits[word]).abs() <= 0.5);
        }
    }

    #[test]
    fn latent_quality_is_stable_and_unit_ranged() {
        let q1 = latent_quality(0, "item-1");
        assert_eq!(q1, latent_quality(0, "item-1"));
        assert!((0.0..1.0).contains(&q1));
        assert_ne!(q1, latent_quality(0, "item-2"));
    }
}
