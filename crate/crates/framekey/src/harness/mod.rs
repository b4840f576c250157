//! End-to-end orchestration: question manifests, the per-question pipeline,
//! answer parsing, and accuracy reporting.

pub mod config;

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_pipeline::{
    resample_fraction, sample_fixed, sample_fps_capped, sample_fraction, SampledSequence,
    VideoSource,
};
use crate::kfm::{insert_index, map_keywords, Mapping};
use crate::prompting::{system_prompt, user_prompt, PromptProfile};
use crate::vp::{apply_sequence, LabeledFrame};

pub use config::{
    build_backends, build_embedder, build_extractor, build_model, load_run_config,
    parse_run_config, Backends, EmbedderSpec, ExtractorSpec, FractionPool, KfmConfig, ModelSpec,
    RunConfig, SamplingConfig,
};

/// One benchmark question, as carried by the question manifest (one JSON
/// record per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub video_id: String,
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    /// Gold answer: an option letter when options are present, else free text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_type: Option<String>,
}

/// Load a question manifest, validating that gold answers of multiple-choice
/// questions fall in the assigned letter range.
pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut questions = Vec::new();
    for (index, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            index,
            message: e.to_string(),
        })?;
        if !record.options.is_empty() {
            if let Some(answer) = &record.answer {
                if normalize_gold_letter(answer, record.options.len()).is_none() {
                    return Err(Error::Manifest {
                        path: path.to_path_buf(),
                        index,
                        message: format!(
                            "question `{}`: answer `{answer}` is not one of the {} option letters",
                            record.id,
                            record.options.len()
                        ),
                    });
                }
            }
        }
        questions.push(record);
    }
    Ok(questions)
}

/// Index sources by video id.
pub fn sources_by_id(sources: Vec<VideoSource>) -> HashMap<String, VideoSource> {
    sources
        .into_iter()
        .map(|s| (s.video_id.clone(), s))
        .collect()
}

fn normalize_gold_letter(answer: &str, n_options: usize) -> Option<char> {
    let trimmed = answer.trim().trim_end_matches(['.', ')']);
    let mut chars = trimmed.chars();
    let letter = chars.next()?.to_ascii_uppercase();
    if chars.next().is_some() {
        return None;
    }
    let last = (b'A' + (n_options as u8).saturating_sub(1)) as char;
    ('A'..=last).contains(&letter).then_some(letter)
}

/// A pipeline stage failure recorded on the evaluation record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// The outcome of one question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub category: String,
    pub augmented_prompt: String,
    pub mappings: Vec<Mapping>,
    pub raw_answer: String,
    pub parsed_choice: Option<char>,
    /// Defined only when a gold answer is present and the pipeline ran.
    pub correct: Option<bool>,
    pub latency_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
}

impl EvalRecord {
    /// A record counts toward accuracy when the pipeline succeeded and a gold
    /// answer was present.
    pub fn evaluated(&self) -> bool {
        self.failure.is_none() && self.correct.is_some()
    }
}

/// Sample a video according to the configured regime.
pub fn sample_by_config(video: &VideoSource, sampling: &SamplingConfig) -> Result<SampledSequence> {
    match sampling {
        SamplingConfig::Fixed { n } => sample_fixed(video, *n),
        SamplingConfig::FpsCapped { target_fps, cap } => sample_fps_capped(video, *target_fps, *cap),
        SamplingConfig::Fraction {
            fraction,
            min_frames,
            pool,
            target_fps,
            cap,
        } => match pool {
            FractionPool::Raw => sample_fraction(video, *fraction, *min_frames),
            FractionPool::FpsCapped => {
                let pool = sample_fps_capped(video, *target_fps, *cap)?;
                resample_fraction(&pool, *fraction, *min_frames)
            }
        },
    }
}

/// A question after keyword-frame mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingOutcome {
    pub question_id: String,
    pub mappings: Vec<Mapping>,
    pub augmented_question: String,
}

type Staged<T> = std::result::Result<T, (&'static str, Error)>;

fn stage<T>(name: &'static str, result: Result<T>) -> Staged<T> {
    result.map_err(|e| (name, e))
}

/// The KFM portion of the pipeline: extract keywords from the question
/// portion (options never enter the extractor), embed them alongside the
/// labeled frames, map at tau, and rewrite the question.
fn map_question_staged(
    question: &QuestionRecord,
    frames: &[LabeledFrame],
    config: &RunConfig,
    backends: &Backends,
) -> Staged<MappingOutcome> {
    let keywords = stage(
        "extraction",
        backends
            .extractor
            .extract(&question.question, config.prompt_profile),
    )?;
    if keywords.is_empty() {
        return Ok(MappingOutcome {
            question_id: question.id.clone(),
            mappings: Vec::new(),
            augmented_question: question.question.clone(),
        });
    }
    let keyword_texts: Vec<String> = keywords.iter().map(|k| k.text.clone()).collect();
    let keyword_embs = stage("embedding", backends.embedder.embed_texts(&keyword_texts))?;
    let pngs = stage(
        "embedding",
        frames.iter().map(|f| f.to_png()).collect::<Result<Vec<_>>>(),
    )?;
    let frame_embs = stage("embedding", backends.embedder.embed_images(&pngs))?;
    let mappings = stage(
        "mapping",
        map_keywords(&keywords, &frame_embs, &keyword_embs, config.kfm.tau),
    )?;
    let augmented = insert_index(&question.question, &mappings);
    for warning in &augmented.warnings {
        log::warn!("question `{}`: {warning}", question.id);
    }
    Ok(MappingOutcome {
        question_id: question.id.clone(),
        mappings,
        augmented_question: augmented.text,
    })
}

/// Public entry for the mapping stage alone (the CLI `map` subcommand).
pub fn map_question(
    question: &QuestionRecord,
    frames: &[LabeledFrame],
    config: &RunConfig,
    backends: &Backends,
) -> Result<MappingOutcome> {
    map_question_staged(question, frames, config, backends).map_err(|(_, error)| error)
}

/// Run the full per-question pipeline: sample, render VP, extract keywords
/// from the question portion, embed, map at tau, rewrite the question, query
/// the model, parse and score.
///
/// Stage failures are recorded on the returned record rather than propagated,
/// so a long run survives transient backend errors.
pub fn run_pipeline(
    question: &QuestionRecord,
    source: &VideoSource,
    config: &RunConfig,
    backends: &Backends,
) -> EvalRecord {
    let profile = PromptProfile::new(config.prompt_profile, config.vp.position);
    let mut record = EvalRecord {
        question_id: question.id.clone(),
        category: question.category.clone(),
        augmented_prompt: String::new(),
        mappings: Vec::new(),
        raw_answer: String::new(),
        parsed_choice: None,
        correct: None,
        latency_ms: 0,
        failure: None,
    };

    let outcome: Staged<()> = (|| {
        let seq = stage("sampling", sample_by_config(source, &config.sampling))?;
        let frames: Vec<LabeledFrame> =
            stage("rendering", apply_sequence(&seq, &config.vp, source.fps))?;

        let outcome = map_question_staged(question, &frames, config, backends)?;
        record.mappings = outcome.mappings.clone();
        let augmented = outcome.augmented_question;

        let user = stage(
            "prompting",
            user_prompt(
                &profile,
                &augmented,
                &question.options,
                question.task_type.as_deref(),
            ),
        )?;
        record.augmented_prompt = user.clone();
        let system = system_prompt(&profile);

        let started = Instant::now();
        let answer = stage("model", backends.model.answer(&system, &user, &frames))?;
        record.latency_ms = started.elapsed().as_millis() as u64;
        record.raw_answer = answer;

        if !question.options.is_empty() {
            record.parsed_choice = parse_choice(&record.raw_answer, &question.options);
            if let Some(gold) = &question.answer {
                let gold_letter = normalize_gold_letter(gold, question.options.len());
                record.correct = Some(record.parsed_choice.is_some() && record.parsed_choice == gold_letter);
            }
        } else if let Some(gold) = &question.answer {
            record.correct = Some(record.raw_answer.trim().eq_ignore_ascii_case(gold.trim()));
        }
        Ok(())
    })();

    if let Err((stage, error)) = outcome {
        log::warn!("question `{}` failed at {stage}: {error}", question.id);
        record.failure = Some(StageFailure {
            stage: stage.to_string(),
            message: error.to_string(),
        });
        record.correct = None;
    }
    record
}

/// Extract the chosen option letter from a model answer.
///
/// First standalone letter within the valid range wins (word-boundary
/// delimited, optionally followed by `.` or `)`); otherwise the answer is
/// matched against the full option texts case-insensitively, longest match
/// first.
pub fn parse_choice(answer: &str, options: &[String]) -> Option<char> {
    if options.is_empty() {
        return None;
    }
    let last = (b'A' + (options.len() as u8) - 1) as char;

    let chars: Vec<char> = answer.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !('A'..=last).contains(&c) {
            continue;
        }
        let left_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let right_ok = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if left_ok && right_ok {
            return Some(c);
        }
    }

    let haystack = answer.to_lowercase();
    let mut best: Option<(usize, usize)> = None; // (text length, option index)
    for (i, option) in options.iter().enumerate() {
        let needle = option.trim().to_lowercase();
        if needle.is_empty() || !haystack.contains(&needle) {
            continue;
        }
        if best.is_none_or(|(len, _)| needle.len() > len) {
            best = Some((needle.len(), i));
        }
    }
    best.map(|(_, i)| (b'A' + i as u8) as char)
}

/// Accuracy counters for one category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CategoryStats {
    pub questions: usize,
    pub evaluated: usize,
    pub correct: usize,
    pub unevaluated: usize,
}

impl CategoryStats {
    fn add(&mut self, record: &EvalRecord) {
        self.questions += 1;
        if record.evaluated() {
            self.evaluated += 1;
            if record.correct == Some(true) {
                self.correct += 1;
            }
        } else {
            self.unevaluated += 1;
        }
    }

    /// Accuracy in percent, two decimals, half-up; `None` when nothing was
    /// evaluated.
    pub fn accuracy_pct(&self) -> Option<String> {
        (self.evaluated > 0).then(|| format_pct_half_up(self.correct, self.evaluated))
    }
}

/// Percentage with two decimals, rounded half-up, computed in integers.
pub fn format_pct_half_up(numerator: usize, denominator: usize) -> String {
    assert!(denominator > 0);
    let scaled = numerator as u128 * 10_000;
    let d = denominator as u128;
    let mut q = scaled / d;
    if (scaled % d) * 2 >= d {
        q += 1;
    }
    format!("{}.{:02}", q / 100, q % 100)
}

/// The aggregated evaluation report: per-category and total counts with
/// formatted accuracies. Categories are sorted, so serialization is stable
/// regardless of record order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub categories: BTreeMap<String, CategoryStatsView>,
    pub total: CategoryStatsView,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStatsView {
    pub questions: usize,
    pub evaluated: usize,
    pub correct: usize,
    pub unevaluated: usize,
    pub accuracy_pct: Option<String>,
}

impl From<CategoryStats> for CategoryStatsView {
    fn from(stats: CategoryStats) -> Self {
        CategoryStatsView {
            questions: stats.questions,
            evaluated: stats.evaluated,
            correct: stats.correct,
            unevaluated: stats.unevaluated,
            accuracy_pct: stats.accuracy_pct(),
        }
    }
}

pub const UNCATEGORIZED: &str = "(uncategorized)";

/// Aggregate evaluation records into a report. Order-independent: counts are
/// integers and categories are sorted.
pub fn aggregate(records: &[EvalRecord]) -> EvalReport {
    let mut categories: BTreeMap<String, CategoryStats> = BTreeMap::new();
    let mut total = CategoryStats::default();
    for record in records {
        let key = if record.category.is_empty() {
            UNCATEGORIZED.to_string()
        } else {
            record.category.clone()
        };
        categories.entry(key).or_default().add(record);
        total.add(record);
    }
    EvalReport {
        categories: categories.into_iter().map(|(k, v)| (k, v.into())).collect(),
        total: total.into(),
    }
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20}{:>10}{:>11}{:>9}{:>13}{:>10}\n",
            "Category", "Questions", "Evaluated", "Correct", "Unevaluated", "Accuracy"
        ));
        let mut row = |name: &str, stats: &CategoryStatsView| {
            out.push_str(&format!(
                "{:<20}{:>10}{:>11}{:>9}{:>13}{:>10}\n",
                name,
                stats.questions,
                stats.evaluated,
                stats.correct,
                stats.unevaluated,
                stats.accuracy_pct.as_deref().unwrap_or("--"),
            ));
        };
        for (name, stats) in &self.categories {
            row(name, stats);
        }
        row("total", &self.total);
        out
    }
}

/// Evaluate every question with bounded parallelism (`config.in_flight`
/// worker threads). Results keep the input question order.
pub fn run_eval(
    questions: &[QuestionRecord],
    sources: &HashMap<String, VideoSource>,
    config: &RunConfig,
    backends: &Backends,
) -> Vec<EvalRecord> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<EvalRecord>>> =
        questions.iter().map(|_| Mutex::new(None)).collect();
    let workers = config.in_flight.max(1).min(questions.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= questions.len() {
                    break;
                }
                let question = &questions[index];
                let record = match sources.get(&question.video_id) {
                    Some(source) => run_pipeline(question, source, config, backends),
                    None => EvalRecord {
                        question_id: question.id.clone(),
                        category: question.category.clone(),
                        augmented_prompt: String::new(),
                        mappings: Vec::new(),
                        raw_answer: String::new(),
                        parsed_choice: None,
                        correct: None,
                        latency_ms: 0,
                        failure: Some(StageFailure {
                            stage: "resolve".into(),
                            message: format!(
                                "video `{}` is not in the manifest",
                                question.video_id
                            ),
                        }),
                    },
                };
                *slots[index].lock().unwrap() = Some(record);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("all slots filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_choice_standalone_letter() {
        let options = opts(&["one", "two", "three", "four"]);
        assert_eq!(parse_choice("The best answer is: B", &options), Some('B'));
        assert_eq!(parse_choice("(C)", &options), Some('C'));
        assert_eq!(parse_choice("D.", &options), Some('D'));
        assert_eq!(parse_choice("A", &options), Some('A'));
    }

    #[test]
    fn parse_choice_ignores_out_of_range_letters() {
        let options = opts(&["one", "two"]);
        assert_eq!(parse_choice("The answer is C", &options), None);
        assert_eq!(parse_choice("B", &options), Some('B'));
    }

    #[test]
    fn parse_choice_option_text_fallback() {
        let options = opts(&["Burning in fire", "None of both", "Smoking"]);
        assert_eq!(parse_choice("burning in fire", &options), Some('A'));
        assert_eq!(
            parse_choice("it ends with the skillet smoking", &options),
            Some('C')
        );
    }

    #[test]
    fn parse_choice_prefers_longest_option_text() {
        let options = opts(&["red", "dark red"]);
        assert_eq!(parse_choice("the cloth is dark red", &options), Some('B'));
    }

    #[test]
    fn parse_choice_unparseable() {
        let options = opts(&["one", "two", "three", "four"]);
        assert_eq!(parse_choice("maybe", &options), None);
    }

    #[test]
    fn parse_choice_letter_inside_word_not_matched() {
        let options = opts(&["one", "two", "three", "four"]);
        // No standalone letter; "CAB" does not count.
        assert_eq!(parse_choice("CAB rides", &options), None);
    }

    fn record(category: &str, correct: Option<bool>, failed: bool) -> EvalRecord {
        EvalRecord {
            question_id: "q".into(),
            category: category.into(),
            augmented_prompt: String::new(),
            mappings: vec![],
            raw_answer: String::new(),
            parsed_choice: None,
            correct,
            latency_ms: 0,
            failure: failed.then(|| StageFailure {
                stage: "model".into(),
                message: "boom".into(),
            }),
        }
    }

    #[test]
    fn aggregate_arithmetic() {
        let records = vec![
            record("EO", Some(true), false),
            record("EO", Some(true), false),
            record("EO", Some(true), false),
            record("EO", Some(false), false),
        ];
        let report = aggregate(&records);
        assert_eq!(report.categories["EO"].accuracy_pct.as_deref(), Some("75.00"));
        assert_eq!(report.total.evaluated, 4);
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let mut records = vec![
            record("EO", Some(true), false),
            record("AC", Some(false), false),
            record("EO", None, true),
            record("", Some(true), false),
        ];
        let a = aggregate(&records);
        records.reverse();
        let b = aggregate(&records);
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn aggregate_counts_unevaluated() {
        let records = vec![record("EO", Some(true), false), record("EO", None, true)];
        let report = aggregate(&records);
        assert_eq!(report.categories["EO"].unevaluated, 1);
        assert_eq!(report.categories["EO"].evaluated, 1);
        // A category with nothing evaluated reports no accuracy.
        let failed_only = aggregate(&[record("ST", None, true)]);
        assert_eq!(failed_only.categories["ST"].accuracy_pct, None);
        assert!(failed_only.to_text().contains("--"));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_pct_half_up(1, 3), "33.33");
        assert_eq!(format_pct_half_up(2, 3), "66.67");
        assert_eq!(format_pct_half_up(1, 8), "12.50");
        assert_eq!(format_pct_half_up(1, 800), "0.13"); // 0.125 rounds up
        assert_eq!(format_pct_half_up(3, 4), "75.00");
        assert_eq!(format_pct_half_up(0, 7), "0.00");
        assert_eq!(format_pct_half_up(7, 7), "100.00");
    }

    #[test]
    fn gold_letter_normalization() {
        assert_eq!(normalize_gold_letter("B", 4), Some('B'));
        assert_eq!(normalize_gold_letter(" b.", 4), Some('B'));
        assert_eq!(normalize_gold_letter("E", 4), None);
        assert_eq!(normalize_gold_letter("BB", 4), None);
    }
}
