//! Sequential visual prompting: render frame-index labels into pixel space.
//!
//! Every sampled frame gets a label derived from its 1-based display index
//! ("frame #01" by default), drawn with the bundled bitmap font at a size of
//! `floor(min(width, height) / s)` pixels. Rendering is pure integer math
//! over an immutable glyph atlas, so identical inputs produce byte-identical
//! images on every platform.

pub mod atlas;

use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_pipeline::SampledSequence;
use crate::raster;

/// Corner where the label is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VpPosition {
    #[serde(rename = "TL")]
    TopLeft,
    #[serde(rename = "TR")]
    TopRight,
    #[serde(rename = "BL")]
    BottomLeft,
    #[serde(rename = "BR")]
    BottomRight,
}

impl VpPosition {
    pub const ALL: [VpPosition; 4] = [
        VpPosition::TopLeft,
        VpPosition::TopRight,
        VpPosition::BottomLeft,
        VpPosition::BottomRight,
    ];

    /// Short form used in tables and CLI flags.
    pub fn code(self) -> &'static str {
        match self {
            VpPosition::TopLeft => "TL",
            VpPosition::TopRight => "TR",
            VpPosition::BottomLeft => "BL",
            VpPosition::BottomRight => "BR",
        }
    }

    /// English corner name used in prompt text.
    pub fn word(self) -> &'static str {
        match self {
            VpPosition::TopLeft => "top-left",
            VpPosition::TopRight => "top-right",
            VpPosition::BottomLeft => "bottom-left",
            VpPosition::BottomRight => "bottom-right",
        }
    }

    pub fn is_top(self) -> bool {
        matches!(self, VpPosition::TopLeft | VpPosition::TopRight)
    }

    pub fn is_left(self) -> bool {
        matches!(self, VpPosition::TopLeft | VpPosition::BottomLeft)
    }
}

impl FromStr for VpPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TL" | "TOP-LEFT" => Ok(VpPosition::TopLeft),
            "TR" | "TOP-RIGHT" => Ok(VpPosition::TopRight),
            "BL" | "BOTTOM-LEFT" => Ok(VpPosition::BottomLeft),
            "BR" | "BOTTOM-RIGHT" => Ok(VpPosition::BottomRight),
            other => Err(Error::Config(format!("unknown VP position `{other}`"))),
        }
    }
}

impl fmt::Display for VpPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Label text format.
///
/// Styles 1-3 render the display index ("frame #01", "#01", "1"); style 4
/// renders the frame's timestamp as "t=mm:ss" and therefore needs source fps
/// metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum VpStyle {
    Style1,
    Style2,
    Style3,
    Style4,
}

impl TryFrom<u8> for VpStyle {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(VpStyle::Style1),
            2 => Ok(VpStyle::Style2),
            3 => Ok(VpStyle::Style3),
            4 => Ok(VpStyle::Style4),
            other => Err(Error::Config(format!("VP style must be 1..=4, got {other}"))),
        }
    }
}

impl From<VpStyle> for u8 {
    fn from(s: VpStyle) -> u8 {
        match s {
            VpStyle::Style1 => 1,
            VpStyle::Style2 => 2,
            VpStyle::Style3 => 3,
            VpStyle::Style4 => 4,
        }
    }
}

/// Whether the label is drawn over the frame or inside an appended black band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Draw directly onto the frame; pixels outside the label box stay
    /// byte-identical to the input.
    Overlay,
    /// Append a solid black band of height `fontsize + 2*margin` on the
    /// label's edge and draw inside it; original pixels untouched.
    Letterbox,
}

/// Corner offset of the label box, in pixels or derived from the font size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum MarginSpec {
    /// `max(2, fontsize / 8)` pixels.
    Auto(AutoTag),
    Px(u32),
}

/// Serde helper so `margin = "auto"` round-trips in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl MarginSpec {
    pub const AUTO: MarginSpec = MarginSpec::Auto(AutoTag::Auto);

    fn resolve(self, fontsize: u32) -> u32 {
        match self {
            MarginSpec::Auto(_) => (fontsize / 8).max(2),
            MarginSpec::Px(px) => px,
        }
    }
}

/// Rendering configuration for sequential visual prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VpConfig {
    pub position: VpPosition,
    pub style: VpStyle,
    /// Font size divisor `s`: fontsize = floor(min(width, height) / s).
    pub size_divisor: u32,
    /// Outline flag `o`: stroke each glyph with `outline_color` at width
    /// ceil(fontsize / 15) before filling.
    pub outline: bool,
    pub padding: PaddingMode,
    pub text_color: [u8; 3],
    pub outline_color: [u8; 3],
    pub margin: MarginSpec,
}

impl Default for VpConfig {
    fn default() -> Self {
        VpConfig {
            position: VpPosition::BottomLeft,
            style: VpStyle::Style1,
            size_divisor: 12,
            outline: false,
            padding: PaddingMode::Overlay,
            text_color: [255, 0, 0],
            outline_color: [0, 0, 0],
            margin: MarginSpec::AUTO,
        }
    }
}

/// Pixel rectangle of a rendered label (fill plus outline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl LabelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// The label rendered into a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VpLabel {
    pub rect: LabelRect,
    pub text: String,
}

/// A frame after visual prompting. `label` is `None` when VP rendering was
/// skipped (the no-VP baseline).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledFrame {
    pub display_index: usize,
    pub image: RgbImage,
    pub label: Option<VpLabel>,
}

impl LabeledFrame {
    /// A frame that carries no visual prompt.
    pub fn unlabeled(display_index: usize, image: RgbImage) -> Self {
        LabeledFrame {
            display_index,
            image,
            label: None,
        }
    }

    /// Encode the frame as PNG bytes.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        raster::encode_png(&self.image)
    }
}

/// fontsize = floor(min(width, height) / s), clamped below at 1.
pub fn compute_fontsize(width: u32, height: u32, s: u32) -> Result<u32> {
    if s == 0 {
        return Err(Error::Render("size divisor s must be >= 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Render("frame dimensions must be >= 1".into()));
    }
    Ok((width.min(height) / s).max(1))
}

/// Number of decimal digits of `n` (used as the zero-pad width for a
/// sequence of length `n`).
pub fn pad_width_for(n: usize) -> usize {
    n.max(1).to_string().len()
}

/// Label text for a display index under the given style.
///
/// `pad_width` is the zero-pad width (digits of the sequence length);
/// `timestamp_s` is required for [`VpStyle::Style4`].
pub fn render_label(
    display_index: usize,
    style: VpStyle,
    pad_width: usize,
    timestamp_s: Option<f64>,
) -> Result<String> {
    if display_index < 1 {
        return Err(Error::Render("display_index must be >= 1".into()));
    }
    Ok(match style {
        VpStyle::Style1 => format!("frame #{display_index:0pad_width$}"),
        VpStyle::Style2 => format!("#{display_index:0pad_width$}"),
        VpStyle::Style3 => format!("{display_index}"),
        VpStyle::Style4 => {
            let ts = timestamp_s.ok_or_else(|| {
                Error::Render("style 4 renders timestamps and needs source fps metadata".into())
            })?;
            if !(ts.is_finite() && ts >= 0.0) {
                return Err(Error::Render(format!("invalid timestamp {ts}")));
            }
            let total = ts.floor() as u64;
            format!("t={:02}:{:02}", total / 60, total % 60)
        }
    })
}

/// Scaled glyph metrics at a given font size.
fn glyph_width(fontsize: u32) -> u32 {
    (atlas::GLYPH_W * fontsize / atlas::GLYPH_H).max(1)
}

fn glyph_spacing(fontsize: u32) -> u32 {
    (fontsize / atlas::GLYPH_H).max(1)
}

fn text_width(text: &str, fontsize: u32) -> u32 {
    let chars = text.chars().count() as u32;
    if chars == 0 {
        return 0;
    }
    chars * glyph_width(fontsize) + (chars - 1) * glyph_spacing(fontsize)
}

/// Filled pixels of `text` at `fontsize`, in text-local coordinates, via
/// nearest-neighbour scaling of the 5x7 atlas.
fn text_mask(text: &str, fontsize: u32) -> Result<Vec<(u32, u32)>> {
    let gw = glyph_width(fontsize);
    let sp = glyph_spacing(fontsize);
    let mut mask = Vec::new();
    let mut cursor = 0u32;
    for c in text.chars() {
        let rows = atlas::glyph_rows(c)
            .ok_or_else(|| Error::Render(format!("character `{c}` is outside the label font")))?;
        for y in 0..fontsize {
            let sy = (y * atlas::GLYPH_H / fontsize) as usize;
            let row = rows[sy];
            for x in 0..gw {
                let sx = x * atlas::GLYPH_W / gw;
                if row & (1 << (atlas::GLYPH_W - 1 - sx)) != 0 {
                    mask.push((cursor + x, y));
                }
            }
        }
        cursor += gw + sp;
    }
    Ok(mask)
}

/// Full placement of a label on a frame: final canvas size, the label box,
/// and the absolute fill/outline pixel sets.
///
/// This is the single source of truth for label geometry; the renderer paints
/// it and the mock decoder matches against it.
#[derive(Debug, Clone)]
pub struct LabelLayout {
    pub fontsize: u32,
    pub margin: u32,
    pub outline_px: u32,
    pub rect: LabelRect,
    pub canvas_w: u32,
    pub canvas_h: u32,
    /// Vertical offset of the original frame content on the canvas (non-zero
    /// only for a top letterbox band).
    pub content_offset_y: u32,
    /// Rows `band.0 .. band.0 + band.1` are the letterbox band, if any.
    pub band: Option<(u32, u32)>,
    pub fill: Vec<(u32, u32)>,
    pub outline: Vec<(u32, u32)>,
    /// True when the font size had to be reduced below floor(min/s) to fit.
    pub shrunk: bool,
}

/// Compute the layout of `text` on a `frame_w` x `frame_h` frame, shrinking
/// the font size (minimum 1) until the label fits.
pub fn compute_label_layout(
    frame_w: u32,
    frame_h: u32,
    text: &str,
    config: &VpConfig,
) -> Result<LabelLayout> {
    let nominal = compute_fontsize(frame_w, frame_h, config.size_divisor)?;
    let mut fontsize = nominal;
    loop {
        match try_layout(frame_w, frame_h, text, config, fontsize)? {
            Some(mut layout) => {
                layout.shrunk = fontsize < nominal;
                if layout.shrunk {
                    log::warn!(
                        "label `{text}` did not fit a {frame_w}x{frame_h} frame at fontsize \
                         {nominal}; shrunk to {fontsize}"
                    );
                }
                return Ok(layout);
            }
            None if fontsize > 1 => fontsize -= 1,
            None => {
                return Err(Error::Render(format!(
                    "label `{text}` cannot fit a {frame_w}x{frame_h} frame even at fontsize 1"
                )))
            }
        }
    }
}

/// Layout at one exact font size, or `None` if the label does not fit.
fn try_layout(
    frame_w: u32,
    frame_h: u32,
    text: &str,
    config: &VpConfig,
    fontsize: u32,
) -> Result<Option<LabelLayout>> {
    let outline_px = if config.outline {
        fontsize.div_ceil(15)
    } else {
        0
    };
    let margin = config.margin.resolve(fontsize);
    let tw = text_width(text, fontsize);
    let box_w = tw + 2 * outline_px;
    let box_h = fontsize + 2 * outline_px;

    if box_w + margin > frame_w {
        return Ok(None);
    }
    let x = if config.position.is_left() {
        margin
    } else {
        frame_w - margin - box_w
    };

    let (canvas_h, content_offset_y, band, y) = match config.padding {
        PaddingMode::Overlay => {
            if box_h + margin > frame_h {
                return Ok(None);
            }
            let y = if config.position.is_top() {
                margin
            } else {
                frame_h - margin - box_h
            };
            (frame_h, 0, None, y)
        }
        PaddingMode::Letterbox => {
            // Band height fits the glyphs at margin `m`; the outlined box
            // needs m >= outline width to stay inside it.
            if margin < outline_px {
                return Ok(None);
            }
            let band_h = fontsize + 2 * margin;
            if config.position.is_top() {
                (frame_h + band_h, band_h, Some((0, band_h)), margin - outline_px)
            } else {
                (
                    frame_h + band_h,
                    0,
                    Some((frame_h, band_h)),
                    frame_h + margin - outline_px,
                )
            }
        }
    };

    let rect = LabelRect {
        x,
        y,
        w: box_w,
        h: box_h,
    };

    let local = text_mask(text, fontsize)?;
    let fill: Vec<(u32, u32)> = local
        .iter()
        .map(|&(lx, ly)| (x + outline_px + lx, y + outline_px + ly))
        .collect();

    let mut outline = Vec::new();
    if outline_px > 0 {
        // Chebyshev dilation of the local mask, minus the mask itself,
        // computed on the outlined box grid.
        let grid_w = box_w as usize;
        let grid_h = box_h as usize;
        let mut occupied = vec![false; grid_w * grid_h];
        for &(lx, ly) in &local {
            let gx = (lx + outline_px) as usize;
            let gy = (ly + outline_px) as usize;
            occupied[gy * grid_w + gx] = true;
        }
        let r = outline_px as i64;
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                if occupied[gy * grid_w + gx] {
                    continue;
                }
                'search: for dy in -r..=r {
                    for dx in -r..=r {
                        let nx = gx as i64 + dx;
                        let ny = gy as i64 + dy;
                        if nx >= 0
                            && ny >= 0
                            && (nx as usize) < grid_w
                            && (ny as usize) < grid_h
                            && occupied[ny as usize * grid_w + nx as usize]
                        {
                            outline.push((x + gx as u32, y + gy as u32));
                            break 'search;
                        }
                    }
                }
            }
        }
    }

    Ok(Some(LabelLayout {
        fontsize,
        margin,
        outline_px,
        rect,
        canvas_w: frame_w,
        canvas_h,
        content_offset_y,
        band,
        fill,
        outline,
        shrunk: false,
    }))
}

/// Render the display-index label into a frame.
///
/// `pad_width` is the zero-pad width shared by the sequence (digits of N);
/// `timestamp_s` feeds style 4. In overlay mode every pixel outside the
/// returned label rect is byte-identical to the input.
pub fn insert_vp(
    frame: &RgbImage,
    display_index: usize,
    config: &VpConfig,
    pad_width: usize,
    timestamp_s: Option<f64>,
) -> Result<LabeledFrame> {
    let (w, h) = frame.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Render("frame is empty".into()));
    }
    let text = render_label(display_index, config.style, pad_width, timestamp_s)?;
    let layout = compute_label_layout(w, h, &text, config)?;

    let mut canvas = match config.padding {
        PaddingMode::Overlay => frame.clone(),
        PaddingMode::Letterbox => {
            let mut canvas = RgbImage::from_pixel(layout.canvas_w, layout.canvas_h, Rgb([0, 0, 0]));
            raster::composite(&mut canvas, frame, 0, layout.content_offset_y);
            canvas
        }
    };

    let outline_color = Rgb(config.outline_color);
    for &(x, y) in &layout.outline {
        canvas.put_pixel(x, y, outline_color);
    }
    let text_color = Rgb(config.text_color);
    for &(x, y) in &layout.fill {
        canvas.put_pixel(x, y, text_color);
    }

    Ok(LabeledFrame {
        display_index,
        image: canvas,
        label: Some(VpLabel {
            rect: layout.rect,
            text,
        }),
    })
}

/// Render labels for every frame of a sampled sequence, loading frames from
/// their file references. `source_fps` is required for style 4 timestamps.
pub fn apply_sequence(
    seq: &SampledSequence,
    config: &VpConfig,
    source_fps: Option<f64>,
) -> Result<Vec<LabeledFrame>> {
    let pad_width = pad_width_for(seq.len());
    seq.items
        .iter()
        .map(|item| {
            let frame = raster::load_rgb(&item.frame_ref)?;
            let ts = source_fps.map(|fps| item.source_index as f64 / fps);
            insert_vp(&frame, item.display_index, config, pad_width, ts)
        })
        .collect()
}
