//! Prompt assembly: system prompt, per-dataset user prompts, and the
//! keyword-extractor prompt.
//!
//! Every template is an embedded constant so emitted strings are byte-stable
//! across runs and platforms; golden-string tests pin them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vp::VpPosition;

/// Question/answer formatting style of the evaluated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetStyle {
    TempCompass,
    MvBench,
    VideoMme,
    LongVideoBench,
    Generic,
}

impl std::str::FromStr for DatasetStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tempcompass" => Ok(DatasetStyle::TempCompass),
            "mvbench" => Ok(DatasetStyle::MvBench),
            "videomme" => Ok(DatasetStyle::VideoMme),
            "longvideobench" => Ok(DatasetStyle::LongVideoBench),
            "generic" => Ok(DatasetStyle::Generic),
            other => Err(Error::Prompt(format!("unknown dataset style `{other}`"))),
        }
    }
}

/// Prompt profile: the dataset style plus the VP corner the system prompt
/// points the model at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptProfile {
    pub dataset_style: DatasetStyle,
    pub position: VpPosition,
}

impl PromptProfile {
    pub fn new(dataset_style: DatasetStyle, position: VpPosition) -> Self {
        Self {
            dataset_style,
            position,
        }
    }

    /// The corner name substituted into the system prompt.
    pub fn position_word(&self) -> &'static str {
        self.position.word()
    }
}

const GENERIC_CLOSING: &str = "Please answer the question.";

/// The shared system prompt, pointing the model at the numbered corner.
pub fn system_prompt(profile: &PromptProfile) -> String {
    format!(
        "You are a helpful assistant.\nFocus on the temporal relationships by referring to the \
         number written in the {} corner of each frame.",
        profile.position_word()
    )
}

/// The user prompt: question, lettered options, and the dataset's closing
/// line. Open-ended questions (no options) use the generic closing.
///
/// `task_type` selects among task-specific closings where the dataset has
/// them (only TempCompass does); pass `None` otherwise.
pub fn user_prompt(
    profile: &PromptProfile,
    question: &str,
    options: &[String],
    task_type: Option<&str>,
) -> Result<String> {
    if options.len() > 26 {
        return Err(Error::Prompt(format!(
            "{} options exceed the A-Z letter range",
            options.len()
        )));
    }
    let closing = if options.is_empty() {
        GENERIC_CLOSING
    } else {
        closing_line(profile.dataset_style, task_type)
    };
    let mut out = String::from(question);
    for (i, option) in options.iter().enumerate() {
        let letter = (b'A' + i as u8) as char;
        out.push('\n');
        out.push_str(&format!("{letter}. {option}"));
    }
    out.push_str("\n\n");
    out.push_str(closing);
    Ok(out)
}

fn closing_line(style: DatasetStyle, task_type: Option<&str>) -> &'static str {
    match style {
        DatasetStyle::TempCompass => match normalize_task(task_type) {
            TempCompassTask::YesNo => "Please answer yes or no.",
            TempCompassTask::Choice => "Please directly give the best option.",
            TempCompassTask::Other => GENERIC_CLOSING,
        },
        DatasetStyle::MvBench => "Only give the best option.",
        DatasetStyle::VideoMme => "The best answer is:",
        DatasetStyle::LongVideoBench => {
            "Answer with the option's letter from the given choices directly."
        }
        DatasetStyle::Generic => GENERIC_CLOSING,
    }
}

enum TempCompassTask {
    /// Multi-choice, caption matching, and captioning share one closing.
    Choice,
    YesNo,
    Other,
}

fn normalize_task(task_type: Option<&str>) -> TempCompassTask {
    let Some(raw) = task_type else {
        return TempCompassTask::Choice;
    };
    let norm: String = raw
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == '-' || c == ' ' || c == '/' { '_' } else { c })
        .collect();
    match norm.as_str() {
        "" | "multi_choice" | "caption_matching" | "captioning" => TempCompassTask::Choice,
        "yes_no" | "yesno" => TempCompassTask::YesNo,
        _ => TempCompassTask::Other,
    }
}

const EXTRACTOR_SYSTEM: &str =
    "You are a helpful assistant that only extracts keywords and outputs them as a Python list.";

const EXTRACTOR_RULES: &str = "Follow these rules carefully:\n\
1. Identify Key Phrases: Your goal is to extract key phrases from the question that refer to \
specific scenes, events, actions, or distinct items.\n\
2. Exact Extraction: The extracted phrases must appear exactly as they do in the question. Do not \
modify or rephrase them.\n\
3. Empty List Condition: If no relevant key phrases (as defined in Rule 1) are found in the \
question, you must return an empty list [].";

/// Two few-shot (question, answer-list-literal) pairs per dataset style.
fn extractor_examples(style: DatasetStyle) -> [(&'static str, &'static str); 2] {
    match style {
        DatasetStyle::TempCompass => [
            ("Which sentence better captures the essence of the video?", "[]"),
            ("Which description is a more suitable match for the video?", "[]"),
        ],
        DatasetStyle::MvBench => [
            (
                "What happened after the person took the food?",
                r#"["the person took the food"]"#,
            ),
            (
                "What happened after the person closed the door?",
                r#"["the person closed the door"]"#,
            ),
        ],
        DatasetStyle::VideoMme => [
            (
                "When is the zodiacal light visible from the video?",
                r#"["the zodiacal light"]"#,
            ),
            (
                "Which GPT is introduced after Convert Anything?",
                r#"["Convert Anything"]"#,
            ),
        ],
        DatasetStyle::LongVideoBench => [
            (
                "In front of a blue background, a gentleman wearing a shirt with pink floral \
                 patterns is speaking. What did the gentleman do after becoming friends with the \
                 unicorn?",
                r#"["gentleman wearing a shirt with pink floral patterns is speaking", "becoming friends with the unicorn"]"#,
            ),
            (
                "In the movie scene, there is a man in gray-black clothes standing between a red \
                 door and wall on the left, and a silver-white window and yellow wall on the \
                 right. After this man appears, which person or object appears first?",
                r#"["man in gray-black clothes standing", "a red door and wall on the left, and a silver-white window and yellow wall on the right"]"#,
            ),
        ],
        // A mixed pair so user-supplied datasets see both behaviours.
        DatasetStyle::Generic => [
            (
                "What happened after the person took the food?",
                r#"["the person took the food"]"#,
            ),
            ("Which sentence better captures the essence of the video?", "[]"),
        ],
    }
}

/// The (system, user) prompt pair sent to the keyword extractor.
pub fn extractor_prompt(profile: &PromptProfile, question: &str) -> (String, String) {
    let examples = extractor_examples(profile.dataset_style);
    let mut user = String::from(EXTRACTOR_RULES);
    for (i, (q, a)) in examples.iter().enumerate() {
        user.push_str("\n\n");
        user.push_str(&format!("Example {}:\nQuestion: {q}\nYour Answer: {a}", i + 1));
    }
    user.push_str("\n\n");
    user.push_str(&format!("Now:\nQuestion: {question}\nYour Answer:"));
    (EXTRACTOR_SYSTEM.to_string(), user)
}
