//! JSONL record/replay cache.
//!
//! One line per (item, frame, word) logit, UTF-8, append-only. A record's
//! lines are written with a single `write` on an `O_APPEND` handle so
//! concurrent writers cannot interleave. On load, later lines win over
//! earlier ones for the same key, which makes re-recording an overwrite.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackendError, LogitProvider, LogitQuery, WordLogitRecord};

/// Wire format of one cache line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheLine {
    pub item: String,
    pub frame: u32,
    pub word: String,
    pub logit: f64,
    pub provider: String,
    pub prompt_sha256: String,
}

#[derive(Debug, Clone)]
pub struct CachedEntry {
    pub logit: f64,
    pub provider: String,
    pub prompt_sha256: String,
}

pub type CacheMap = BTreeMap<(String, u32), BTreeMap<String, CachedEntry>>;

/// Appends one record to the cache, one JSONL line per word.
pub fn record_logits(record: &WordLogitRecord, cache_path: &Path) -> Result<(), BackendError> {
    let mut buffer = String::new();
    for (word, logit) in &record.word_logits {
        if !logit.is_finite() {
            return Err(BackendError::InvalidLogit {
                word: word.clone(),
                value: *logit,
            });
        }
        let line = CacheLine {
            item: record.item_id.clone(),
            frame: record.frame_index,
            word: word.clone(),
            logit: *logit,
            provider: record.provider_id.clone(),
            prompt_sha256: record.prompt_digest.clone(),
        };
        let json = serde_json::to_string(&line).map_err(|e| BackendError::CacheWrite {
            path: cache_path.to_path_buf(),
            reason: e.to_string(),
        })?;
        buffer.push_str(&json);
        buffer.push('\n');
    }
    let write = || -> std::io::Result<()> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(cache_path)?;
        file.write_all(buffer.as_bytes())?;
        file.flush()
    };
    write().map_err(|e| BackendError::CacheWrite {
        path: cache_path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads a cache file into a lookup map; last line wins per key.
pub fn load_cache(path: &Path) -> Result<CacheMap, BackendError> {
    let file = std::fs::File::open(path).map_err(|e| BackendError::CacheRead {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let reader = BufReader::new(file);
    let mut map: CacheMap = BTreeMap::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BackendError::CacheRead {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", index + 1),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CacheLine =
            serde_json::from_str(&line).map_err(|e| BackendError::CacheRead {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", index + 1),
            })?;
        map.entry((parsed.item, parsed.frame)).or_default().insert(
            parsed.word,
            CachedEntry {
                logit: parsed.logit,
                provider: parsed.provider,
                prompt_sha256: parsed.prompt_sha256,
            },
        );
    }
    Ok(map)
}

/// Serves previously recorded logits; never touches the network.
pub struct ReplayProvider {
    map: CacheMap,
    path: PathBuf,
}

impl ReplayProvider {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Ok(Self {
            map: load_cache(path)?,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogitProvider for ReplayProvider {
    fn fetch_raw(&self, query: &LogitQuery) -> Result<WordLogitRecord, BackendError> {
        query.validate()?;
        let key = (query.item_id.clone(), query.frame_index);
        let entries = self.map.get(&key).ok_or_else(|| BackendError::CacheMiss {
            item: query.item_id.clone(),
            frame: query.frame_index,
            digest: query.prompt_digest(),
        })?;
        let mut word_logits = BTreeMap::new();
        let mut providers: Vec<&str> = Vec::new();
        for word in &query.candidate_words {
            if let Some(entry) = entries.get(word) {
                word_logits.insert(word.clone(), entry.logit);
                if !providers.contains(&entry.provider.as_str()) {
                    providers.push(&entry.provider);
                }
            }
        }
        providers.sort_unstable();
        let provider_id = if providers.is_empty() {
            self.id()
        } else {
            providers.join("+")
        };
        Ok(WordLogitRecord {
            item_id: query.item_id.clone(),
            frame_index: query.frame_index,
            word_logits,
            provider_id,
            prompt_digest: query.prompt_digest(),
        })
    }

    fn id(&self) -> String {
        "replay".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MediaRef;

    fn record(item: &str, frame: u32, words: &[(&str, f64)]) -> WordLogitRecord {
        WordLogitRecord {
            item_id: item.into(),
            frame_index: frame,
            word_logits: words.iter().map(|(w, v)| (w.to_string(), *v)).collect(),
            provider_id: "test-provider".into(),
            prompt_digest: "ab".repeat(32),
        }
    }

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
    fn round_trip_preserves_exact_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let values = [
            ("good", 0.1 + 0.2),
            ("average", 1e-300),
            ("poor", -11.140000000000001),
        ];
        record_logits(&record("img", 4, &values), &path).unwrap();
        let provider = ReplayProvider::load(&path).unwrap();
        let got = provider
            .fetch_raw(&query("img", 4, &["good", "average", "poor"]))
            .unwrap();
        for (word, v) in values {
            assert_eq!(got.word_logits[word], v, "{word}");
        }
    }

    #[test]
    fn replay_serves_table1_image1() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        record_logits(
            &record("image-1", 0, &[("good", 11.14), ("average", 8.68), ("poor", 7.96)]),
            &path,
        )
        .unwrap();
        let provider = ReplayProvider::load(&path).unwrap();
        let got = provider
            .fetch_raw(&query("image-1", 0, &["good", "average", "poor"]))
            .unwrap();
        assert_eq!(got.word_logits["good"], 11.14);
        assert_eq!(got.word_logits["average"], 8.68);
        assert_eq!(got.word_logits["poor"], 7.96);
    }

    #[test]
    fn last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        record_logits(&record("img", 0, &[("good", 1.0)]), &path).unwrap();
        record_logits(&record("img", 0, &[("good", 2.0)]), &path).unwrap();
        let provider = ReplayProvider::load(&path).unwrap();
        let got = provider.fetch_raw(&query("img", 0, &["good"])).unwrap();
        assert_eq!(got.word_logits["good"], 2.0);
    }

    #[test]
    fn cache_miss_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        record_logits(&record("img", 0, &[("good", 1.0)]), &path).unwrap();
        let provider = ReplayProvider::load(&path).unwrap();
        let q = query("other", 3, &["good"]);
        let digest = q.prompt_digest();
        let err = provider.fetch_raw(&q).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cache miss"), "{msg}");
        assert!(msg.contains("other"), "{msg}");
        assert!(msg.contains("frame 3"), "{msg}");
        assert!(msg.contains(&digest), "{msg}");
    }

    #[test]
    fn partial_entries_are_returned_leniently() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        record_logits(&record("img", 0, &[("good", 1.0), ("poor", -1.0)]), &path).unwrap();
        let provider = ReplayProvider::load(&path).unwrap();
        let got = provider
            .fetch_raw(&query("img", 0, &["good", "average", "poor"]))
            .unwrap();
        assert_eq!(got.word_logits.len(), 2);
        assert!(got.check_complete(&["good", "poor"]).is_ok());
        assert!(got.check_complete(&["good", "average", "poor"]).is_err());
    }

    #[test]
    fn concurrent_appends_keep_lines_intact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::thread::scope(|scope| {
            for t in 0..8 {
                let path = path.clone();
                scope.spawn(move || {
                    for frame in 0..16u32 {
                        let item = format!("item-{t}");
                        let rec = record(
                            &item,
                            frame,
                            &[("good", t as f64 + frame as f64), ("poor", -1.0)],
                        );
                        record_logits(&rec, &path).unwrap();
                    }
                });
            }
        });
        let map = load_cache(&path).unwrap();
        assert_eq!(map.len(), 8 * 16);
        for t in 0..8 {
            for frame in 0..16u32 {
                let entries = &map[&(format!("item-{t}"), frame)];
                assert_eq!(entries["good"].logit, t as f64 + frame as f64);
            }
        }
    }

    #[test]
    fn corrupt_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"item\":\"a\",\"frame\":0,\"word\":\"good\",\"logit\":1.0,\"provider\":\"p\",\"prompt_sha256\":\"d\"}\nnot json\n").unwrap();
        let err = load_cache(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn non_finite_logit_refused_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let err = record_logits(&record("img", 0, &[("good", f64::NAN)]), &path).unwrap_err();
        assert!(err.to_string().contains("invalid backend logit"), "{err}");
        assert!(!path.exists());
    }
}
