//! Synthetic frame-referencing benchmark: lookup and reverse lookup.
//!
//! A marker image is composited onto exactly one randomly chosen frame of a
//! sampled sequence, the sequence gets its visual prompts, and the model is
//! asked either to describe the marker frame by its number (lookup) or to
//! name the frame containing the marker (reverse lookup). Scoring is exact or
//! with a ±1-frame tolerance. With the mock decoder backend the whole loop is
//! deterministic, which pins rendering, prompt assembly, marker insertion and
//! scoring end to end.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backends::VideoLlmBackend;
use crate::error::{Error, Result};
use crate::frame_pipeline::{sample_fixed, SampledSequence, VideoSource};
use crate::prompting::{system_prompt, DatasetStyle, PromptProfile};
use crate::raster;
use crate::vp::{insert_vp, pad_width_for, LabeledFrame, VpConfig, VpPosition};

pub const DEFAULT_MARKER_WORD: &str = "panda";

/// The black-and-white marker bundled for self-contained runs: a bordered
/// checkerboard. Any marker image can be supplied instead.
pub fn default_marker() -> RgbImage {
    const SIZE: u32 = 64;
    const BORDER: u32 = 4;
    const CELL: u32 = 8;
    RgbImage::from_fn(SIZE, SIZE, |x, y| {
        let edge = x < BORDER || y < BORDER || x >= SIZE - BORDER || y >= SIZE - BORDER;
        let dark = edge || ((x / CELL) + (y / CELL)) % 2 == 0;
        if dark {
            Rgb([0, 0, 0])
        } else {
            Rgb([255, 255, 255])
        }
    })
}

/// Scaled size and centered placement of `marker` on a frame: the marker's
/// longer side becomes half the frame's shorter side, aspect preserved.
pub fn marker_geometry(
    frame_w: u32,
    frame_h: u32,
    marker_w: u32,
    marker_h: u32,
) -> Result<(u32, u32, u32, u32)> {
    let target = frame_w.min(frame_h) / 2;
    if target < 1 {
        return Err(Error::Probe(format!(
            "frame {frame_w}x{frame_h} too small to hold a scaled marker"
        )));
    }
    let (mw, mh) = if marker_w >= marker_h {
        (target, ((marker_h as u64 * target as u64 / marker_w as u64) as u32).max(1))
    } else {
        (((marker_w as u64 * target as u64 / marker_h as u64) as u32).max(1), target)
    };
    Ok((mw, mh, (frame_w - mw) / 2, (frame_h - mh) / 2))
}

/// Composite the scaled marker at the frame's center.
pub fn composite_marker(frame: &mut RgbImage, marker: &RgbImage) -> Result<()> {
    let (mw, mh, x0, y0) = marker_geometry(frame.width(), frame.height(), marker.width(), marker.height())?;
    let scaled = raster::scale_nearest(marker, mw, mh);
    raster::composite(frame, &scaled, x0, y0);
    Ok(())
}

/// One generated probe: the (optionally VP-labeled) frames and the marker's
/// ground-truth display index.
#[derive(Debug, Clone)]
pub struct ProbeInstance {
    pub frames: Vec<LabeledFrame>,
    pub marker_display_index: usize,
    pub marker_word: String,
    pub seed: u64,
    /// The VP corner, or `None` when VP rendering was skipped.
    pub vp_position: Option<VpPosition>,
}

/// Build a probe from a sampled sequence: pick the marker frame uniformly
/// with the seeded RNG, composite the marker at its center, then apply VP
/// labels (unless `vp` is `None`, the no-VP baseline).
pub fn build_probe(
    seq: &SampledSequence,
    marker: &RgbImage,
    seed: u64,
    vp: Option<&VpConfig>,
) -> Result<ProbeInstance> {
    if seq.is_empty() {
        return Err(Error::Probe("cannot build a probe over an empty sequence".into()));
    }
    let n = seq.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marker_display_index = rng.gen_range(1..=n);
    let pad_width = pad_width_for(n);

    let mut frames = Vec::with_capacity(n);
    for item in &seq.items {
        let mut pixels = raster::load_rgb(&item.frame_ref)?;
        if item.display_index == marker_display_index {
            composite_marker(&mut pixels, marker)?;
        }
        let frame = match vp {
            Some(config) => insert_vp(&pixels, item.display_index, config, pad_width, None)?,
            None => LabeledFrame::unlabeled(item.display_index, pixels),
        };
        frames.push(frame);
    }
    Ok(ProbeInstance {
        frames,
        marker_display_index,
        marker_word: DEFAULT_MARKER_WORD.to_string(),
        seed,
        vp_position: vp.map(|c| c.position),
    })
}

/// "Describe the content of frame #k."
pub fn lookup_question(k: usize) -> Result<String> {
    if k < 1 {
        return Err(Error::Probe("display index must be >= 1".into()));
    }
    Ok(format!("Describe the content of frame #{k}."))
}

/// "Which frame number contains the <marker_word>? ..."
pub fn reverse_question(marker_word: &str) -> Result<String> {
    if marker_word.trim().is_empty() {
        return Err(Error::Probe("marker word must be non-empty".into()));
    }
    Ok(format!(
        "Which frame number contains the {marker_word}? Answer with the frame number only."
    ))
}

/// Case-insensitive whole-word containment of `marker_word` in the answer.
pub fn score_lookup(answer: &str, marker_word: &str) -> bool {
    let answer = answer.to_lowercase();
    let needle = marker_word.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let bytes = answer.as_bytes();
    let mut from = 0;
    while let Some(pos) = answer[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

/// Parse the first integer in the answer and compare against the true index
/// within the tolerance. Unparseable answers are scored false.
pub fn score_reverse(answer: &str, true_k: usize, tolerance: usize) -> bool {
    let Some(predicted) = first_integer(answer) else {
        return false;
    };
    predicted.abs_diff(true_k as u64) <= tolerance as u64
}

fn first_integer(text: &str) -> Option<u64> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |len| start + len);
    text[start..end].parse().ok()
}

/// Which of the two probe tasks a result belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTask {
    Lookup,
    ReverseLookup,
}

/// One scored model answer.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub task: ProbeTask,
    pub n_frames: usize,
    pub position: Option<VpPosition>,
    pub correct: bool,
    pub tolerance: usize,
    pub raw_answer: String,
}

/// Accumulated counts for one (task, position, n) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProbeCell {
    pub evaluated: usize,
    pub correct: usize,
    pub errors: usize,
}

impl ProbeCell {
    pub fn accuracy_pct(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| 100.0 * self.correct as f64 / self.evaluated as f64)
    }
}

/// One row of a probe table: a VP position (or the no-VP baseline) with one
/// cell per frame count.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub position: String,
    pub cells: Vec<ProbeCell>,
}

/// One sub-table: a task at a scoring tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeTable {
    pub task: ProbeTask,
    pub tolerance: usize,
    pub frame_counts: Vec<usize>,
    pub rows: Vec<ProbeRow>,
}

impl ProbeTable {
    pub fn cell(&self, position: &str, n_frames: usize) -> Option<&ProbeCell> {
        let col = self.frame_counts.iter().position(|&n| n == n_frames)?;
        self.rows
            .iter()
            .find(|row| row.position == position)
            .map(|row| &row.cells[col])
    }

    /// Mean of the per-column accuracies of a row.
    pub fn row_average(&self, position: &str) -> Option<f64> {
        let row = self.rows.iter().find(|row| row.position == position)?;
        let accs: Vec<f64> = row.cells.iter().filter_map(|c| c.accuracy_pct()).collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }
}

/// The full suite report: lookup exact, reverse exact, reverse ±1.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub tables: Vec<ProbeTable>,
}

pub const NO_VP_ROW: &str = "no-VP";

impl ProbeReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned-text tables in the lookup / reverse-lookup layout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, table) in self.tables.iter().enumerate() {
            let title = match (table.task, table.tolerance) {
                (ProbeTask::Lookup, _) => "Look-up".to_string(),
                (ProbeTask::ReverseLookup, 0) => "Reverse Look-up (exact)".to_string(),
                (ProbeTask::ReverseLookup, t) => format!("Reverse Look-up (tolerance +-{t})"),
            };
            out.push_str(&format!("({}) {title}\n", (b'a' + i as u8) as char));
            out.push_str(&format!("{:<10}", "Position"));
            for n in &table.frame_counts {
                out.push_str(&format!("{:>12}", format!("{n} frames")));
            }
            out.push_str(&format!("{:>12}\n", "average"));
            for row in &table.rows {
                out.push_str(&format!("{:<10}", row.position));
                for cell in &row.cells {
                    let text = match cell.accuracy_pct() {
                        Some(pct) => format_pct(pct),
                        None => "--".to_string(),
                    };
                    out.push_str(&format!("{text:>12}"));
                }
                let avg = match self.tables[i].row_average(&row.position) {
                    Some(pct) => format_pct(pct),
                    None => "--".to_string(),
                };
                out.push_str(&format!("{avg:>12}\n"));
            }
            out.push('\n');
        }
        out
    }
}

/// Percentage with two decimals, half-up.
fn format_pct(pct: f64) -> String {
    let scaled = (pct * 100.0).round() as i64;
    format!("{}.{:02}", scaled / 100, scaled % 100)
}

/// Options for a probe suite run.
#[derive(Debug, Clone)]
pub struct ProbeSuiteOptions {
    pub frame_counts: Vec<usize>,
    pub positions: Vec<VpPosition>,
    pub vp_base: VpConfig,
    pub marker: RgbImage,
    pub marker_word: String,
    pub seed: u64,
    /// Include the baseline row with VP rendering skipped.
    pub include_no_vp: bool,
}

impl Default for ProbeSuiteOptions {
    fn default() -> Self {
        ProbeSuiteOptions {
            frame_counts: vec![8, 16, 32, 64],
            positions: VpPosition::ALL.to_vec(),
            vp_base: VpConfig::default(),
            marker: default_marker(),
            marker_word: DEFAULT_MARKER_WORD.to_string(),
            seed: 0,
            include_no_vp: true,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// The per-(source, n) probe seed. Independent of the VP position so the
/// marker lands on the same frame in every row.
pub fn instance_seed(suite_seed: u64, source_index: usize, n_frames: usize) -> u64 {
    splitmix(splitmix(suite_seed ^ source_index as u64) ^ (n_frames as u64))
}

/// Run the full lookup / reverse-lookup suite and aggregate accuracies into
/// a [`ProbeReport`]. Backend failures are recorded per cell and excluded
/// from denominators.
pub fn run_probe_suite(
    sources: &[VideoSource],
    model: &dyn VideoLlmBackend,
    options: &ProbeSuiteOptions,
) -> Result<ProbeReport> {
    if sources.is_empty() {
        return Err(Error::Probe("probe suite needs at least one source".into()));
    }
    let mut row_keys: Vec<Option<VpPosition>> = Vec::new();
    if options.include_no_vp {
        row_keys.push(None);
    }
    row_keys.extend(options.positions.iter().copied().map(Some));

    let n_cols = options.frame_counts.len();
    // [row][col] cells per table: lookup@0, reverse@0, reverse@1.
    let mut lookup = vec![vec![ProbeCell::default(); n_cols]; row_keys.len()];
    let mut reverse0 = vec![vec![ProbeCell::default(); n_cols]; row_keys.len()];
    let mut reverse1 = vec![vec![ProbeCell::default(); n_cols]; row_keys.len()];

    for (source_index, source) in sources.iter().enumerate() {
        for (col, &n) in options.frame_counts.iter().enumerate() {
            let seq = sample_fixed(source, n)?;
            let seed = instance_seed(options.seed, source_index, n);
            for (row, key) in row_keys.iter().enumerate() {
                let config = key.map(|position| VpConfig {
                    position,
                    ..options.vp_base.clone()
                });
                let mut instance = build_probe(&seq, &options.marker, seed, config.as_ref())?;
                instance.marker_word = options.marker_word.clone();
                let profile =
                    PromptProfile::new(DatasetStyle::Generic, key.unwrap_or(options.vp_base.position));
                let system = system_prompt(&profile);

                let question = lookup_question(instance.marker_display_index)?;
                match model.answer(&system, &question, &instance.frames) {
                    Ok(answer) => {
                        lookup[row][col].evaluated += 1;
                        if score_lookup(&answer, &instance.marker_word) {
                            lookup[row][col].correct += 1;
                        }
                    }
                    Err(err) => {
                        log::warn!("lookup backend failure ({}, n={n}): {err}", source.video_id);
                        lookup[row][col].errors += 1;
                    }
                }

                let question = reverse_question(&instance.marker_word)?;
                match model.answer(&system, &question, &instance.frames) {
                    Ok(answer) => {
                        for (cells, tolerance) in
                            [(&mut reverse0, 0usize), (&mut reverse1, 1usize)]
                        {
                            cells[row][col].evaluated += 1;
                            if score_reverse(&answer, instance.marker_display_index, tolerance) {
                                cells[row][col].correct += 1;
                            }
                        }
                    }
                    Err(err) => {
                        log::warn!(
                            "reverse lookup backend failure ({}, n={n}): {err}",
                            source.video_id
                        );
                        reverse0[row][col].errors += 1;
                        reverse1[row][col].errors += 1;
                    }
                }
            }
        }
    }

    let row_label = |key: &Option<VpPosition>| match key {
        None => NO_VP_ROW.to_string(),
        Some(p) => p.code().to_string(),
    };
    let table = |task, tolerance, cells: Vec<Vec<ProbeCell>>| ProbeTable {
        task,
        tolerance,
        frame_counts: options.frame_counts.clone(),
        rows: row_keys
            .iter()
            .zip(cells)
            .map(|(key, cells)| ProbeRow {
                position: row_label(key),
                cells,
            })
            .collect(),
    };
    Ok(ProbeReport {
        tables: vec![
            table(ProbeTask::Lookup, 0, lookup),
            table(ProbeTask::ReverseLookup, 0, reverse0),
            table(ProbeTask::ReverseLookup, 1, reverse1),
        ],
    })
}
