//! framekey CLI: render visual prompts, map keywords to frames, evaluate
//! question sets, run the frame-referencing probe, and compute the analysis
//! tables.
//!
//! Exit codes: 0 on success, 1 on any stage error, 2 on configuration errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use framekey::attention::{layer_mean_attention, load_dump, relative_change};
use framekey::frame_pipeline::load_manifest;
use framekey::harness::{
    aggregate, build_backends, build_model, load_questions, load_run_config, map_question,
    run_eval, sample_by_config, sources_by_id, ModelSpec, RunConfig,
};
use framekey::position_lab::{layout_table, DegradationMode, RopeLayout};
use framekey::probe::{run_probe_suite, ProbeSuiteOptions};
use framekey::raster;
use framekey::vp::{apply_sequence, MarginSpec, PaddingMode, VpPosition, VpStyle};

#[derive(Parser)]
#[command(
    name = "framekey",
    version,
    about = "Frame-index visual prompting and keyword-frame mapping for VideoLLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the pipeline subcommands: a config file plus visual
/// prompt flag overrides.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Run configuration TOML (defaults apply when omitted).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Label corner: TL, TR, BL, BR.
    #[arg(long, value_name = "CORNER")]
    vp_position: Option<String>,

    /// Label style 1-4.
    #[arg(long, value_name = "STYLE")]
    vp_style: Option<u8>,

    /// Font size divisor s (fontsize = floor(min(w, h) / s)).
    #[arg(long = "vp-s", value_name = "S")]
    vp_s: Option<u32>,

    /// Stroke each glyph with the outline color.
    #[arg(long, value_name = "BOOL")]
    vp_outline: Option<bool>,

    /// Padding mode: overlay or letterbox.
    #[arg(long, value_name = "MODE")]
    vp_padding: Option<String>,

    /// Corner margin in pixels (default: auto).
    #[arg(long, value_name = "PX")]
    vp_margin: Option<u32>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => load_run_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(position) = &self.vp_position {
            config.vp.position = position.parse::<VpPosition>()?;
        }
        if let Some(style) = self.vp_style {
            config.vp.style = VpStyle::try_from(style)?;
        }
        if let Some(s) = self.vp_s {
            config.vp.size_divisor = s;
        }
        if let Some(outline) = self.vp_outline {
            config.vp.outline = outline;
        }
        if let Some(padding) = &self.vp_padding {
            config.vp.padding = match padding.to_ascii_lowercase().as_str() {
                "overlay" => PaddingMode::Overlay,
                "letterbox" => PaddingMode::Letterbox,
                other => {
                    return Err(
                        framekey::Error::Config(format!("unknown padding mode `{other}`")).into(),
                    )
                }
            };
        }
        if let Some(margin) = self.vp_margin {
            config.vp.margin = MarginSpec::Px(margin);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample each manifest video and write VP-labeled frames.
    Render {
        #[command(flatten)]
        config: ConfigArgs,
        /// Video manifest (one JSON record per line).
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (one subdirectory per video).
        #[arg(long)]
        out: PathBuf,
    },
    /// Map question keywords to frames and print the augmented prompts.
    Map {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Question manifest (one JSON record per line).
        #[arg(long)]
        questions: PathBuf,
        /// Write outcomes as JSON lines to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline over a question set and report accuracy.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        report_json: Option<PathBuf>,
        /// Write the aligned-text report here (also printed to stdout).
        #[arg(long)]
        report_text: Option<PathBuf>,
        /// Write per-question records as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Print the resolved config and planned request counts, then exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the lookup / reverse-lookup probe suite.
    Probe {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Force the model backend (`mock` for the closed-loop decoder).
        #[arg(long)]
        model: Option<String>,
        /// Frame counts per probe instance.
        #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16, 32, 64])]
        frame_counts: Vec<usize>,
        /// VP corners to test.
        #[arg(long, value_delimiter = ',', default_values_t = vec!["TL".to_string(), "TR".to_string(), "BL".to_string(), "BR".to_string()])]
        positions: Vec<String>,
        /// Marker image (defaults to the bundled marker).
        #[arg(long)]
        marker: Option<PathBuf>,
        #[arg(long, default_value = "panda")]
        marker_word: String,
        /// Skip the no-VP baseline row.
        #[arg(long)]
        skip_no_vp: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report here.
        #[arg(long)]
        report_json: Option<PathBuf>,
    },
    /// Emit position-index tables for rotary embedding degradation.
    Poslab {
        /// Number of text tokens preceding the visual tokens.
        #[arg(long, default_value_t = 0)]
        text_len: usize,
        /// Visual tokens per frame.
        #[arg(long)]
        tokens_per_frame: usize,
        #[arg(long)]
        num_frames: usize,
        /// standard, temporal_only, full_collapse, or all.
        #[arg(long, default_value = "all")]
        mode: String,
        /// json or text.
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Aggregate an attention dump into per-layer image-token attention.
    Attn {
        /// Attention dump (JSON container).
        #[arg(long)]
        dump: PathBuf,
        /// No-VP baseline dump; when given, relative changes are reported.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// json or text.
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error:#}");
        let code = match error.downcast_ref::<framekey::Error>() {
            Some(framekey::Error::Config(_)) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Render { config, manifest, out } => render(&config.load()?, &manifest, &out),
        Command::Map {
            config,
            manifest,
            questions,
            out,
        } => map(&config.load()?, &manifest, &questions, out.as_deref()),
        Command::Eval {
            config,
            manifest,
            questions,
            report_json,
            report_text,
            records,
            dry_run,
        } => eval(
            &config.load()?,
            &manifest,
            &questions,
            report_json.as_deref(),
            report_text.as_deref(),
            records.as_deref(),
            dry_run,
        ),
        Command::Probe {
            config,
            manifest,
            model,
            frame_counts,
            positions,
            marker,
            marker_word,
            skip_no_vp,
            seed,
            report_json,
        } => probe(
            &config.load()?,
            &manifest,
            model.as_deref(),
            frame_counts,
            &positions,
            marker.as_deref(),
            marker_word,
            skip_no_vp,
            seed,
            report_json.as_deref(),
        ),
        Command::Poslab {
            text_len,
            tokens_per_frame,
            num_frames,
            mode,
            format,
        } => poslab(text_len, tokens_per_frame, num_frames, &mode, &format),
        Command::Attn {
            dump,
            baseline,
            format,
        } => attn(&dump, baseline.as_deref(), &format),
    }
}

fn render(config: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let sources = load_manifest(manifest)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut total = 0usize;
    for source in &sources {
        let seq = sample_by_config(source, &config.sampling)?;
        let frames = apply_sequence(&seq, &config.vp, source.fps)?;
        let dir = out.join(&source.video_id);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let pad = frames.len().to_string().len();
        for frame in &frames {
            let path = dir.join(format!("{:0pad$}.png", frame.display_index));
            raster::save_png(&frame.image, &path)?;
            total += 1;
        }
    }
    println!("rendered {total} labeled frames from {} videos into {}", sources.len(), out.display());
    Ok(())
}

fn map(config: &RunConfig, manifest: &Path, questions: &Path, out: Option<&Path>) -> Result<()> {
    let sources = sources_by_id(load_manifest(manifest)?);
    let questions = load_questions(questions)?;
    let backends = build_backends(config)?;
    let mut lines = Vec::new();
    for question in &questions {
        let source = sources.get(&question.video_id).ok_or_else(|| {
            framekey::Error::Config(format!("video `{}` is not in the manifest", question.video_id))
        })?;
        let seq = sample_by_config(source, &config.sampling)?;
        let frames = apply_sequence(&seq, &config.vp, source.fps)?;
        let outcome = map_question(question, &frames, config, &backends)?;
        lines.push(serde_json::to_string(&outcome)?);
    }
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            for line in &lines {
                writeln!(file, "{line}")?;
            }
            println!("wrote {} mapping outcomes to {}", lines.len(), path.display());
        }
        None => {
            for line in &lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    config: &RunConfig,
    manifest: &Path,
    questions_path: &Path,
    report_json: Option<&Path>,
    report_text: Option<&Path>,
    records_path: Option<&Path>,
    dry_run: bool,
) -> Result<()> {
    let sources = sources_by_id(load_manifest(manifest)?);
    let questions = load_questions(questions_path)?;

    if dry_run {
        println!("resolved config:\n{}", resolved_config_pretty(config)?);
        println!("videos in manifest:   {}", sources.len());
        println!("questions to answer:  {}", questions.len());
        println!("planned requests:     {} extractor, {} model", questions.len(), questions.len());
        println!("dry run: no requests issued");
        return Ok(());
    }

    let backends = build_backends(config)?;
    let records = run_eval(&questions, &sources, config, &backends);
    let report = aggregate(&records);

    if let Some(path) = records_path {
        let mut file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        for record in &records {
            writeln!(file, "{}", serde_json::to_string(record)?)?;
        }
    }
    if let Some(path) = report_json {
        std::fs::write(path, report.to_json()?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let text = report.to_text();
    if let Some(path) = report_text {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{text}");

    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    if failures > 0 {
        anyhow::bail!("{failures} of {} questions failed a pipeline stage", records.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn probe(
    config: &RunConfig,
    manifest: &Path,
    model_override: Option<&str>,
    frame_counts: Vec<usize>,
    positions: &[String],
    marker: Option<&Path>,
    marker_word: String,
    skip_no_vp: bool,
    seed: Option<u64>,
    report_json: Option<&Path>,
) -> Result<()> {
    let sources = load_manifest(manifest)?;
    let model_spec = match model_override {
        Some("mock") => ModelSpec::Mock,
        Some(other) => {
            return Err(framekey::Error::Config(format!(
                "unknown --model `{other}` (use `mock` or configure [model] in the config file)"
            ))
            .into())
        }
        None => config.model.clone(),
    };
    let model = build_model(&model_spec, &config.vp)?;
    let mut options = ProbeSuiteOptions {
        frame_counts,
        positions: positions
            .iter()
            .map(|p| p.parse::<VpPosition>())
            .collect::<framekey::Result<Vec<_>>>()?,
        vp_base: config.vp.clone(),
        marker_word,
        seed: seed.unwrap_or(config.seed),
        include_no_vp: !skip_no_vp,
        ..ProbeSuiteOptions::default()
    };
    if let Some(path) = marker {
        options.marker = raster::load_rgb(path)?;
    }
    let report = run_probe_suite(&sources, model.as_ref(), &options)?;
    if let Some(path) = report_json {
        std::fs::write(path, report.to_json()?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn poslab(
    text_len: usize,
    tokens_per_frame: usize,
    num_frames: usize,
    mode: &str,
    format: &str,
) -> Result<()> {
    let layout = RopeLayout::new(text_len, tokens_per_frame, num_frames)?;
    let modes: Vec<(&str, DegradationMode)> = match mode {
        "standard" => vec![("standard", DegradationMode::Standard)],
        "temporal_only" => vec![("temporal_only", DegradationMode::TemporalOnly)],
        "full_collapse" => vec![("full_collapse", DegradationMode::FullCollapse)],
        "all" => vec![
            ("standard", DegradationMode::Standard),
            ("temporal_only", DegradationMode::TemporalOnly),
            ("full_collapse", DegradationMode::FullCollapse),
        ],
        other => {
            return Err(framekey::Error::Config(format!("unknown mode `{other}`")).into());
        }
    };
    let tables: BTreeMap<&str, Vec<usize>> = modes
        .into_iter()
        .map(|(name, mode)| (name, layout_table(&layout, mode)))
        .collect();
    match format {
        "json" => println!("{}", serde_json::to_string_pretty(&tables)?),
        "text" => {
            for (name, table) in &tables {
                let rendered: Vec<String> = table.iter().map(|i| i.to_string()).collect();
                println!("{name}\t{}", rendered.join(" "));
            }
        }
        other => return Err(framekey::Error::Config(format!("unknown format `{other}`")).into()),
    }
    Ok(())
}

fn attn(dump_path: &Path, baseline: Option<&Path>, format: &str) -> Result<()> {
    let dump = load_dump(dump_path)?;
    let means = layer_mean_attention(&dump)?;
    let comparison = baseline
        .map(|path| -> Result<_> {
            let base = load_dump(path)?;
            let base_means = layer_mean_attention(&base)?;
            Ok(relative_change(&means, &base_means)?)
        })
        .transpose()?;

    match format {
        "json" => {
            let mut value = serde_json::json!({ "layer_mean_attention": means });
            if let Some(change) = &comparison {
                value["relative_change"] = serde_json::to_value(change)?;
            }
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
        "text" => {
            println!("{:<8}{:>16}", "layer", "image-attn");
            for (l, mean) in means.iter().enumerate() {
                println!("{l:<8}{mean:>16.6}");
            }
            if let Some(change) = &comparison {
                println!();
                println!("{:<8}{:>16}", "layer", "rel-change");
                for (l, rc) in change.per_layer.iter().enumerate() {
                    println!("{l:<8}{rc:>16.6}");
                }
                println!();
                println!("layer-mean relative change: {:.6}", change.layer_mean);
                println!("overall relative change:    {:.6}", change.overall);
            }
        }
        other => return Err(framekey::Error::Config(format!("unknown format `{other}`")).into()),
    }
    Ok(())
}

fn resolved_config_pretty(config: &RunConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(config)?)
}
