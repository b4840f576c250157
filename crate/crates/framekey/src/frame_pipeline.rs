//! Frame ingestion and sampling.
//!
//! Videos arrive as manifests of pre-extracted frame images (one JSON record
//! per line), which keeps the pipeline deterministic and free of codec
//! dependencies. Three sampling regimes produce a [`SampledSequence`]:
//! fixed-count uniform, fps-capped uniform, and fractional with a minimum
//! frame floor. Display indices are always the contiguous 1-based positions
//! rendered by the visual prompter and referenced in augmented queries.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A source video: an ordered list of frame image files plus optional timing
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSource {
    pub video_id: String,
    /// Frame files in temporal order. Resolved against the manifest directory
    /// at load time.
    pub frames: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl VideoSource {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

/// One sampled frame: its 1-based position in the sampled sequence (the
/// number rendered by the visual prompt), the 0-based index into the source
/// frame list, and the frame file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledItem {
    pub display_index: usize,
    pub source_index: usize,
    pub frame_ref: PathBuf,
}

/// An ordered subsequence of a video's frames.
///
/// Invariants: `display_index` runs exactly 1..=N, `source_index` is strictly
/// increasing, and N >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledSequence {
    pub video_id: String,
    pub items: Vec<SampledItem>,
}

impl SampledSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Timestamp in seconds of the item's source frame, given the source fps.
    pub fn timestamp_s(&self, item: &SampledItem, source_fps: f64) -> f64 {
        item.source_index as f64 / source_fps
    }
}

/// Load a manifest file: one JSON record per non-empty line, each of the form
/// `{"video_id": ..., "frames": [...], "fps"?: ..., "duration_s"?: ...}`.
/// Frame paths are resolved relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<VideoSource>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut sources = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: VideoSource = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            index,
            message: e.to_string(),
        })?;
        let entry = VideoSource {
            frames: entry.frames.iter().map(|p| dir.join(p)).collect(),
            ..entry
        };
        validate_source(&entry).map_err(|message| Error::Manifest {
            path: path.to_path_buf(),
            index,
            message,
        })?;
        sources.push(entry);
    }
    Ok(sources)
}

/// Write sources back out in the manifest format (paths as stored).
pub fn write_manifest(sources: &[VideoSource], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for source in sources {
        let line = serde_json::to_string(source)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn validate_source(source: &VideoSource) -> std::result::Result<(), String> {
    if source.frames.is_empty() {
        return Err(format!("video `{}` has an empty frame list", source.video_id));
    }
    let mut seen = HashSet::new();
    for frame in &source.frames {
        if !seen.insert(frame) {
            return Err(format!(
                "video `{}` lists frame `{}` more than once",
                source.video_id,
                frame.display()
            ));
        }
    }
    if let Some(fps) = source.fps {
        if !(fps > 0.0) {
            return Err(format!("video `{}` has non-positive fps", source.video_id));
        }
    }
    if let Some(d) = source.duration_s {
        if !(d > 0.0) {
            return Err(format!(
                "video `{}` has non-positive duration_s",
                source.video_id
            ));
        }
    }
    Ok(())
}

/// Endpoints-inclusive uniform index selection: `n` indices out of `total`,
/// index `i` at `floor(i * (total - 1) / (n - 1))`. Requires `n <= total`.
fn uniform_indices(total: usize, n: usize) -> Vec<usize> {
    debug_assert!(n >= 1 && n <= total);
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .map(|i| i * (total - 1) / (n - 1))
        .collect()
}

fn sequence_from_indices(video: &VideoSource, indices: &[usize]) -> SampledSequence {
    SampledSequence {
        video_id: video.video_id.clone(),
        items: indices
            .iter()
            .enumerate()
            .map(|(i, &src)| SampledItem {
                display_index: i + 1,
                source_index: src,
                frame_ref: video.frames[src].clone(),
            })
            .collect(),
    }
}

/// Uniformly sample `n` frames (all frames, in order, if `n` exceeds the
/// available count).
pub fn sample_fixed(video: &VideoSource, n: usize) -> Result<SampledSequence> {
    if n == 0 {
        return Err(Error::Sampling("requested frame count is zero".into()));
    }
    let total = video.frame_count();
    let n = n.min(total);
    Ok(sequence_from_indices(video, &uniform_indices(total, n)))
}

/// Sample at `target_fps`, capped at `cap` frames.
///
/// The candidate pool holds `min(floor(duration_s * target_fps), F)` frames
/// (at least one); when the pool exceeds `cap`, `cap` frames are selected
/// uniformly from the pool. Requires fps and duration metadata.
pub fn sample_fps_capped(video: &VideoSource, target_fps: f64, cap: usize) -> Result<SampledSequence> {
    if !(target_fps > 0.0) {
        return Err(Error::Sampling("target_fps must be positive".into()));
    }
    if cap == 0 {
        return Err(Error::Sampling("cap must be positive".into()));
    }
    let duration = video.duration_s.ok_or_else(|| {
        Error::Sampling(format!(
            "video `{}` has no duration_s metadata (required for fps sampling)",
            video.video_id
        ))
    })?;
    video.fps.ok_or_else(|| {
        Error::Sampling(format!(
            "video `{}` has no fps metadata (required for fps sampling)",
            video.video_id
        ))
    })?;
    let total = video.frame_count();
    let candidates = ((duration * target_fps).floor() as usize).min(total).max(1);
    let pool = uniform_indices(total, candidates);
    if candidates <= cap {
        return Ok(sequence_from_indices(video, &pool));
    }
    let picks: Vec<usize> = uniform_indices(candidates, cap)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    Ok(sequence_from_indices(video, &picks))
}

/// Fractional sampling with a minimum frame floor: `n = max(floor(F * fraction),
/// min_frames)` clamped to the available count, then uniform selection.
pub fn sample_fraction(video: &VideoSource, fraction: f64, min_frames: usize) -> Result<SampledSequence> {
    let n = fraction_count(video.frame_count(), fraction, min_frames)?;
    sample_fixed(video, n)
}

/// Fractional re-sampling of an already-sampled sequence (e.g. taking 20% of
/// the fps-capped pool). Display indices are re-assigned 1..=n; source indices
/// keep their original values.
pub fn resample_fraction(
    seq: &SampledSequence,
    fraction: f64,
    min_frames: usize,
) -> Result<SampledSequence> {
    let n = fraction_count(seq.len(), fraction, min_frames)?;
    let picks = uniform_indices(seq.len(), n);
    Ok(SampledSequence {
        video_id: seq.video_id.clone(),
        items: picks
            .iter()
            .enumerate()
            .map(|(i, &p)| SampledItem {
                display_index: i + 1,
                source_index: seq.items[p].source_index,
                frame_ref: seq.items[p].frame_ref.clone(),
            })
            .collect(),
    })
}

fn fraction_count(total: usize, fraction: f64, min_frames: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Sampling(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if min_frames == 0 {
        return Err(Error::Sampling("min_frames must be positive".into()));
    }
    // The 1e-9 nudge keeps decimal fractions like 0.2 from flooring one short
    // of the exact product.
    let floored = (total as f64 * fraction + 1e-9).floor() as usize;
    Ok(floored.max(min_frames).min(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(id: &str, frames: usize) -> VideoSource {
        VideoSource {
            video_id: id.to_string(),
            frames: (0..frames).map(|i| PathBuf::from(format!("{id}/{i:04}.png"))).collect(),
            fps: None,
            duration_s: None,
        }
    }

    fn source_indices(seq: &SampledSequence) -> Vec<usize> {
        seq.items.iter().map(|it| it.source_index).collect()
    }

    #[test]
    fn fixed_hand_computed_indices() {
        let seq = sample_fixed(&video("v", 100), 4).unwrap();
        assert_eq!(source_indices(&seq), vec![0, 33, 66, 99]);
    }

    #[test]
    fn fixed_identity_when_n_equals_frames() {
        let seq = sample_fixed(&video("v", 5), 5).unwrap();
        assert_eq!(source_indices(&seq), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn fixed_clamps_to_available_frames() {
        let seq = sample_fixed(&video("v", 3), 8).unwrap();
        assert_eq!(source_indices(&seq), vec![0, 1, 2]);
    }

    #[test]
    fn fixed_rejects_zero() {
        assert!(sample_fixed(&video("v", 3), 0).is_err());
    }

    #[test]
    fn fixed_display_indices_contiguous() {
        let seq = sample_fixed(&video("v", 100), 7).unwrap();
        let displays: Vec<usize> = seq.items.iter().map(|it| it.display_index).collect();
        assert_eq!(displays, (1..=7).collect::<Vec<_>>());
    }

    #[test]
    fn fps_capped_under_cap() {
        let mut v = video("v", 1200);
        v.fps = Some(30.0);
        v.duration_s = Some(40.0);
        let seq = sample_fps_capped(&v, 1.0, 64).unwrap();
        assert_eq!(seq.len(), 40);
    }

    #[test]
    fn fps_capped_hits_cap() {
        let mut v = video("v", 6000);
        v.fps = Some(30.0);
        v.duration_s = Some(200.0);
        let seq = sample_fps_capped(&v, 1.0, 64).unwrap();
        assert_eq!(seq.len(), 64);
    }

    #[test]
    fn fps_capped_degenerate_short_video() {
        let mut v = video("v", 15);
        v.fps = Some(30.0);
        v.duration_s = Some(0.5);
        let seq = sample_fps_capped(&v, 1.0, 64).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.items[0].source_index, 0);
    }

    #[test]
    fn fps_capped_requires_metadata() {
        let err = sample_fps_capped(&video("clipX", 10), 1.0, 64).unwrap_err();
        assert!(err.to_string().contains("clipX"));
    }

    #[test]
    fn fraction_min_floor_applies() {
        let seq = sample_fraction(&video("v", 10), 0.2, 3).unwrap();
        assert_eq!(source_indices(&seq), vec![0, 4, 9]);
    }

    #[test]
    fn fraction_exact_percentage() {
        let seq = sample_fraction(&video("v", 100), 0.2, 3).unwrap();
        assert_eq!(seq.len(), 20);
    }

    #[test]
    fn fraction_clamped_by_available() {
        let seq = sample_fraction(&video("v", 2), 0.2, 3).unwrap();
        assert_eq!(seq.len(), 2);
    }

    #[test]
    fn fraction_rejects_out_of_range() {
        assert!(sample_fraction(&video("v", 10), 0.0, 3).is_err());
        assert!(sample_fraction(&video("v", 10), 1.5, 3).is_err());
    }

    #[test]
    fn resample_keeps_source_indices_from_pool() {
        let mut v = video("v", 600);
        v.fps = Some(30.0);
        v.duration_s = Some(20.0);
        let pool = sample_fps_capped(&v, 1.0, 64).unwrap();
        assert_eq!(pool.len(), 20);
        let sub = resample_fraction(&pool, 0.2, 3).unwrap();
        assert_eq!(sub.len(), 4);
        let pool_set: Vec<usize> = source_indices(&pool);
        for item in &sub.items {
            assert!(pool_set.contains(&item.source_index));
        }
        assert_eq!(
            sub.items.iter().map(|it| it.display_index).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"video_id":"a","frames":["a/0.png","a/1.png","a/2.png","a/3.png"]}"#,
                "\n",
                r#"{"video_id":"b","frames":["b/0.png","b/1.png","b/2.png","b/3.png","b/4.png","b/5.png"],"fps":30.0,"duration_s":0.2}"#,
                "\n",
            ),
        )
        .unwrap();
        let sources = load_manifest(&path).unwrap();
        assert_eq!(sources.len(), 2);
        assert_eq!(sources[0].frame_count(), 4);
        assert_eq!(sources[1].frame_count(), 6);
        assert!(sources[0].frames[0].starts_with(dir.path()));

        let path2 = dir.path().join("manifest2.jsonl");
        write_manifest(&sources, &path2).unwrap();
        let reloaded = load_manifest(&path2).unwrap();
        assert_eq!(sources, reloaded);
    }

    #[test]
    fn manifest_empty_frames_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(&path, "{\"video_id\":\"broken\",\"frames\":[]}\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("broken"));
    }

    #[test]
    fn manifest_malformed_entry_reports_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"video_id":"a","frames":["a/0.png"]}"#,
                "\n",
                "{not json}\n"
            ),
        )
        .unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("entry 1"));
    }

    #[test]
    fn manifest_missing_file() {
        assert!(load_manifest(Path::new("/nonexistent/manifest.jsonl")).is_err());
    }
}
