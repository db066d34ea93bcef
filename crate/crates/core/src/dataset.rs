//! Dataset manifests and frame planning.
//!
//! A manifest is a CSV of `id,kind,path,mos[,mos_scale]` rows. Images map
//! to a single frame; videos are either directories of pre-extracted
//! frames (sorted lexicographically, one per interval) or media files
//! handed to a configurable external extractor command. Media existence
//! is checked at scoring time, not at load, so offline manifests can be
//! validated without the files present.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("invalid manifest header: missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("invalid manifest row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("empty manifest")]
    EmptyManifest,
    #[error("duplicate item id: {0}")]
    DuplicateId(String),
    #[error("invalid kind {kind:?} for item {id} (expected image or video)")]
    InvalidKind { id: String, kind: String },
    #[error("mos out of range for item {id}: {mos} not in [{lo}, {hi}]")]
    MosOutOfRange { id: String, mos: f64, lo: f64, hi: f64 },
    #[error("invalid mos_scale {raw:?} for item {id} (expected \"lo-hi\" with lo < hi)")]
    InvalidScale { id: String, raw: String },
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("media not found: {0}")]
    MissingMedia(PathBuf),
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("frame extraction failed ({status}): {output}")]
    ExtractionFailed { status: String, output: String },
    #[error("no frame extractor configured for media file {0} (supply frames as a directory or configure an extractor command)")]
    NoExtractor(PathBuf),
    #[error("cannot access {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

/// One labelled image or video.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaItem {
    pub id: String,
    pub kind: MediaKind,
    pub path: PathBuf,
    pub mos: f64,
    pub mos_scale: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediaManifest {
    pub items: Vec<MediaItem>,
    pub source_path: PathBuf,
}

impl MediaManifest {
    pub fn any_video(&self) -> bool {
        self.items.iter().any(|i| i.kind == MediaKind::Video)
    }
}

/// Ordered frame references for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub item_id: String,
    pub frame_refs: Vec<PathBuf>,
    pub interval_seconds: f64,
}

/// External frame-extraction command.
///
/// The template is run through `sh -c` with `{input}`, `{output_dir}` and
/// `{interval}` substituted (paths shell-quoted). It must exit 0 and leave
/// frames named `frame_%06d.<extension>` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub command: String,
    #[serde(default = "default_extension")]
    pub extension: String,
}

fn default_extension() -> String {
    "png".to_string()
}

fn parse_scale(raw: &str) -> Option<(f64, f64)> {
    // "lo-hi"; scan split points so negative bounds like "-1-1" parse.
    for (idx, ch) in raw.char_indices().skip(1) {
        if ch != '-' {
            continue;
        }
        let (lo, hi) = (&raw[..idx], &raw[idx + 1..]);
        if let (Ok(lo), Ok(hi)) = (lo.parse::<f64>(), hi.parse::<f64>()) {
            if lo.is_finite() && hi.is_finite() && lo < hi {
                return Some((lo, hi));
            }
        }
    }
    None
}

/// Parses and validates a manifest CSV; row order is preserved.
pub fn load_manifest(path: &Path) -> Result<MediaManifest, ManifestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ManifestError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| ManifestError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &'static str| -> Result<usize, ManifestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(ManifestError::MissingColumn(name))
    };
    let id_col = column("id")?;
    let kind_col = column("kind")?;
    let path_col = column("path")?;
    let mos_col = column("mos")?;
    let scale_col = headers.iter().position(|h| h == "mos_scale");

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (row_index, row) in reader.records().enumerate() {
        let row_number = row_index + 2; // 1-based, after the header
        let row = row.map_err(|e| ManifestError::Row {
            row: row_number,
            reason: e.to_string(),
        })?;
        let field = |col: usize| row.get(col).unwrap_or("").to_string();
        let id = field(id_col);
        if id.is_empty() {
            return Err(ManifestError::Row {
                row: row_number,
                reason: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(ManifestError::DuplicateId(id));
        }
        let kind = match field(kind_col).as_str() {
            "image" => MediaKind::Image,
            "video" => MediaKind::Video,
            other => {
                return Err(ManifestError::InvalidKind {
                    id,
                    kind: other.to_string(),
                })
            }
        };
        let mos: f64 = field(mos_col).parse().map_err(|_| ManifestError::Row {
            row: row_number,
            reason: format!("invalid mos {:?}", field(mos_col)),
        })?;
        let mos_scale = match scale_col {
            Some(col) if !field(col).is_empty() => {
                let raw = field(col);
                parse_scale(&raw).ok_or_else(|| ManifestError::InvalidScale {
                    id: id.clone(),
                    raw,
                })?
            }
            _ => (1.0, 5.0),
        };
        let (lo, hi) = mos_scale;
        if !(mos.is_finite() && lo <= mos && mos <= hi) {
            return Err(ManifestError::MosOutOfRange { id, mos, lo, hi });
        }
        items.push(MediaItem {
            id,
            kind,
            path: PathBuf::from(field(path_col)),
            mos,
            mos_scale,
        });
    }
    if items.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    Ok(MediaManifest {
        items,
        source_path: path.to_path_buf(),
    })
}

/// MOS rescaled to [0, 1] over the item's own scale.
pub fn normalize_mos(item: &MediaItem) -> f64 {
    let (lo, hi) = item.mos_scale;
    (item.mos - lo) / (hi - lo)
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', "'\\''"))
}

fn sorted_files(dir: &Path, filter: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, PlanError> {
    let entries = std::fs::read_dir(dir).map_err(|e| PlanError::Io {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| PlanError::Io {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let path = entry.path();
        if path.is_file() && filter(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn extract_frames(
    item: &MediaItem,
    extractor: &ExtractorConfig,
    interval_seconds: f64,
    extract_root: &Path,
) -> Result<Vec<PathBuf>, PlanError> {
    let safe_id: String = item
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let out_dir = extract_root.join(safe_id);
    std::fs::create_dir_all(&out_dir).map_err(|e| PlanError::Io {
        path: out_dir.clone(),
        reason: e.to_string(),
    })?;
    let command = extractor
        .command
        .replace("{input}", &shell_quote(&item.path))
        .replace("{output_dir}", &shell_quote(&out_dir))
        .replace("{interval}", &format!("{interval_seconds}"));
    let output = std::process::Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(|e| PlanError::Io {
            path: item.path.clone(),
            reason: format!("cannot run extractor: {e}"),
        })?;
    if !output.status.success() {
        let mut text = String::from_utf8_lossy(&output.stdout).to_string();
        text.push_str(&String::from_utf8_lossy(&output.stderr));
        return Err(PlanError::ExtractionFailed {
            status: output.status.to_string(),
            output: text.trim().to_string(),
        });
    }
    let extension = extractor.extension.as_str();
    sorted_files(&out_dir, |p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("frame_"))
            && p.extension().and_then(|e| e.to_str()) == Some(extension)
    })
}

/// Resolves an item into its ordered frame references.
///
/// Images yield exactly one frame. Video directories yield one frame per
/// file, lexicographically; video files go through the extractor, which
/// samples the frame at each whole-second boundary.
pub fn plan_frames(
    item: &MediaItem,
    interval_seconds: f64,
    extractor: Option<&ExtractorConfig>,
    extract_root: &Path,
) -> Result<FramePlan, PlanError> {
    let frame_refs = match item.kind {
        MediaKind::Image => {
            if !item.path.is_file() {
                return Err(PlanError::MissingMedia(item.path.clone()));
            }
            vec![item.path.clone()]
        }
        MediaKind::Video => {
            if item.path.is_dir() {
                let files = sorted_files(&item.path, |_| true)?;
                if files.is_empty() {
                    return Err(PlanError::NoFrames(item.path.clone()));
                }
                files
            } else if item.path.is_file() {
                let extractor =
                    extractor.ok_or_else(|| PlanError::NoExtractor(item.path.clone()))?;
                let files = extract_frames(item, extractor, interval_seconds, extract_root)?;
                if files.is_empty() {
                    return Err(PlanError::NoFrames(item.path.clone()));
                }
                files
            } else {
                return Err(PlanError::MissingMedia(item.path.clone()));
            }
        }
    };
    Ok(FramePlan {
        item_id: item.id.clone(),
        frame_refs,
        interval_seconds,
    })
}
