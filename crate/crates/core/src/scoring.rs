//! Pure scoring math: tone-group averaging, triadic softmax, weighted
//! pooling, the binary baseline, and per-second video aggregation.
//!
//! Everything here is a pure function of its inputs. Means are computed
//! with Neumaier-compensated summation in a fixed order so repeated runs
//! are bit-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::WordLogitRecord;
use crate::prompts::{ScoringMode, Tone, TonePromptSet};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("empty tone group")]
    EmptyToneGroup,
    #[error("invalid logit: {0}")]
    InvalidLogit(f64),
    #[error("empty video")]
    EmptyVideo,
    #[error("invalid frame interval: {0}")]
    InvalidInterval(f64),
    #[error("degenerate weights: w1 and w2 must be nonnegative and not both zero")]
    DegenerateWeights,
    #[error("incomplete logit record: word {word:?} missing in frame {frame}")]
    IncompleteRecord { word: String, frame: u32 },
}

/// The three tone-level logits for one image or aggregated video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToneLogits {
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
}

impl ToneLogits {
    pub fn new(pos: f64, neu: f64, neg: f64) -> Result<Self, ScoreError> {
        for v in [pos, neu, neg] {
            if !v.is_finite() {
                return Err(ScoreError::InvalidLogit(v));
            }
        }
        Ok(Self { pos, neu, neg })
    }
}

/// Softmax of the tone logits; components sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToneProbabilities {
    pub q_pos: f64,
    pub q_neu: f64,
    pub q_neg: f64,
}

/// Pooling weights for the positive and neutral probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct ScoreWeights {
    w1: f64,
    w2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    w1: f64,
    w2: f64,
}

impl TryFrom<RawWeights> for ScoreWeights {
    type Error = ScoreError;
    fn try_from(raw: RawWeights) -> Result<Self, ScoreError> {
        ScoreWeights::new(raw.w1, raw.w2)
    }
}

impl From<ScoreWeights> for RawWeights {
    fn from(w: ScoreWeights) -> RawWeights {
        RawWeights { w1: w.w1, w2: w.w2 }
    }
}

impl ScoreWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, ScoreError> {
        if !w1.is_finite() || !w2.is_finite() || w1 < 0.0 || w2 < 0.0 || (w1 == 0.0 && w2 == 0.0)
        {
            return Err(ScoreError::DegenerateWeights);
        }
        Ok(Self { w1, w2 })
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.5 }
    }
}

/// A final scalar quality score and how it was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityScore {
    pub value: f64,
    pub weights: ScoreWeights,
    pub mode: ScoringMode,
}

/// Ordered per-frame tone logits sampled at a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLogitSeries {
    frames: Vec<ToneLogits>,
    interval_seconds: f64,
}

impl FrameLogitSeries {
    pub fn new(frames: Vec<ToneLogits>, interval_seconds: f64) -> Result<Self, ScoreError> {
        if frames.is_empty() {
            return Err(ScoreError::EmptyVideo);
        }
        if !(interval_seconds.is_finite() && interval_seconds > 0.0) {
            return Err(ScoreError::InvalidInterval(interval_seconds));
        }
        Ok(Self {
            frames,
            interval_seconds,
        })
    }

    pub fn frames(&self) -> &[ToneLogits] {
        &self.frames
    }

    pub fn interval_seconds(&self) -> f64 {
        self.interval_seconds
    }
}

/// Neumaier-compensated sum in slice order.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Arithmetic mean of a tone group's word logits.
pub fn average_tone_logits(word_logits: &[f64]) -> Result<f64, ScoreError> {
    if word_logits.is_empty() {
        return Err(ScoreError::EmptyToneGroup);
    }
    for &v in word_logits {
        if !v.is_finite() {
            return Err(ScoreError::InvalidLogit(v));
        }
    }
    Ok(mean(word_logits))
}

/// Softmax over the three tone logits, max-subtracted for stability.
pub fn triadic_probabilities(logits: &ToneLogits) -> Result<ToneProbabilities, ScoreError> {
    for v in [logits.pos, logits.neu, logits.neg] {
        if !v.is_finite() {
            return Err(ScoreError::InvalidLogit(v));
        }
    }
    let max = logits.pos.max(logits.neu).max(logits.neg);
    let e_pos = (logits.pos - max).exp();
    let e_neu = (logits.neu - max).exp();
    let e_neg = (logits.neg - max).exp();
    let total = e_pos + e_neu + e_neg;
    Ok(ToneProbabilities {
        q_pos: e_pos / total,
        q_neu: e_neu / total,
        q_neg: e_neg / total,
    })
}

/// Pools the tone probabilities: `w1 * q_pos + w2 * q_neu`.
pub fn weighted_quality_score(
    probs: &ToneProbabilities,
    weights: ScoreWeights,
    mode: ScoringMode,
) -> QualityScore {
    QualityScore {
        value: weights.w1 * probs.q_pos + weights.w2 * probs.q_neu,
        weights,
        mode,
    }
}

/// Two-way softmax baseline on the positive and negative logits; equals
/// the logistic of their difference.
pub fn binary_quality_score(pos_logit: f64, neg_logit: f64) -> Result<QualityScore, ScoreError> {
    for v in [pos_logit, neg_logit] {
        if !v.is_finite() {
            return Err(ScoreError::InvalidLogit(v));
        }
    }
    let diff = pos_logit - neg_logit;
    let value = if diff >= 0.0 {
        1.0 / (1.0 + (-diff).exp())
    } else {
        let e = diff.exp();
        e / (1.0 + e)
    };
    Ok(QualityScore {
        value,
        weights: ScoreWeights::default(),
        mode: ScoringMode::Binary,
    })
}

/// Per-tone arithmetic mean over frames, in frame order.
pub fn aggregate_video_logits(series: &FrameLogitSeries) -> ToneLogits {
    let frames = series.frames();
    let pos: Vec<f64> = frames.iter().map(|f| f.pos).collect();
    let neu: Vec<f64> = frames.iter().map(|f| f.neu).collect();
    let neg: Vec<f64> = frames.iter().map(|f| f.neg).collect();
    ToneLogits {
        pos: mean(&pos),
        neu: mean(&neu),
        neg: mean(&neg),
    }
}

fn word_logit(record: &WordLogitRecord, word: &str) -> Result<f64, ScoreError> {
    match record.word_logits.get(word) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(v) => Err(ScoreError::InvalidLogit(*v)),
        None => Err(ScoreError::IncompleteRecord {
            word: word.to_string(),
            frame: record.frame_index,
        }),
    }
}

fn tone_logit_for_frame(
    record: &WordLogitRecord,
    prompts: &TonePromptSet,
    tone: Tone,
    mode: ScoringMode,
) -> Result<f64, ScoreError> {
    let group = prompts.group(tone);
    match mode {
        ScoringMode::Binary | ScoringMode::Tti => {
            let word = group.first().ok_or(ScoreError::EmptyToneGroup)?;
            word_logit(record, word)
        }
        ScoringMode::TtiMpe => {
            let logits = group
                .iter()
                .map(|w| word_logit(record, w))
                .collect::<Result<Vec<f64>, _>>()?;
            average_tone_logits(&logits)
        }
    }
}

/// Scores one item from its per-frame word-logit records.
///
/// Word selection follows the mode, frames are averaged per tone, and the
/// pooled (or binary) score is returned. Intermediate values are
/// observable through [`score_item_detailed`].
pub fn score_item(
    frames: &[WordLogitRecord],
    prompts: &TonePromptSet,
    weights: ScoreWeights,
    mode: ScoringMode,
) -> Result<QualityScore, ScoreError> {
    score_item_detailed(frames, prompts, weights, mode).map(|d| d.score)
}

/// A score plus the intermediate tone logits and probabilities.
#[derive(Debug, Clone, Copy)]
pub struct ScoreBreakdown {
    pub score: QualityScore,
    /// Frame-aggregated tone logits. `neu` is meaningless in binary mode.
    pub tone_logits: ToneLogits,
    /// Tone probabilities. In binary mode `q_neu` is zero and the other
    /// two come from the two-way softmax.
    pub probabilities: ToneProbabilities,
}

pub fn score_item_detailed(
    frames: &[WordLogitRecord],
    prompts: &TonePromptSet,
    weights: ScoreWeights,
    mode: ScoringMode,
) -> Result<ScoreBreakdown, ScoreError> {
    if frames.is_empty() {
        return Err(ScoreError::EmptyVideo);
    }
    match mode {
        ScoringMode::Binary => {
            let pos: Vec<f64> = frames
                .iter()
                .map(|f| tone_logit_for_frame(f, prompts, Tone::Positive, mode))
                .collect::<Result<_, _>>()?;
            let neg: Vec<f64> = frames
                .iter()
                .map(|f| tone_logit_for_frame(f, prompts, Tone::Negative, mode))
                .collect::<Result<_, _>>()?;
            let pos = mean(&pos);
            let neg = mean(&neg);
            let score = binary_quality_score(pos, neg)?;
            Ok(ScoreBreakdown {
                score,
                tone_logits: ToneLogits { pos, neu: 0.0, neg },
                probabilities: ToneProbabilities {
                    q_pos: score.value,
                    q_neu: 0.0,
                    q_neg: 1.0 - score.value,
                },
            })
        }
        ScoringMode::Tti | ScoringMode::TtiMpe => {
            let per_frame: Vec<ToneLogits> = frames
                .iter()
                .map(|f| {
                    Ok(ToneLogits {
                        pos: tone_logit_for_frame(f, prompts, Tone::Positive, mode)?,
                        neu: tone_logit_for_frame(f, prompts, Tone::Neutral, mode)?,
                        neg: tone_logit_for_frame(f, prompts, Tone::Negative, mode)?,
                    })
                })
                .collect::<Result<_, ScoreError>>()?;
            let series = FrameLogitSeries::new(per_frame, 1.0)?;
            let tone_logits = aggregate_video_logits(&series);
            let probabilities = triadic_probabilities(&tone_logits)?;
            let mut score = weighted_quality_score(&probabilities, weights, mode);
            score.mode = mode;
            Ok(ScoreBreakdown {
                score,
                tone_logits,
                probabilities,
            })
        }
    }
}
