//! Closed-loop mock VideoLLM: answers probe questions by reading pixels.
//!
//! The mock never looks at frame metadata. It decodes each frame's display
//! index by re-rendering candidate labels from the glyph atlas (over every
//! corner position) and requiring the frame's set of text-colored pixels to
//! equal the candidate's fill mask exactly, and it detects the marker by
//! exact template comparison at the probe's scaled, centered placement.
//! Rendering, prompt assembly, marker insertion and scoring must therefore
//! all be correct for a probe run to come back 100%.
//!
//! Frames without a single text-colored pixel count as unlabeled (the no-VP
//! baseline); text-colored pixels that match no candidate label signal a
//! rendering regression and surface as an error. Decoding assumes overlay
//! padding, styles 1-3, and frames whose own content never uses the exact
//! text color; the probe generator guarantees all three.

use std::collections::HashMap;

use image::RgbImage;

use crate::backends::VideoLlmBackend;
use crate::error::{Error, Result};
use crate::probe::{self, DEFAULT_MARKER_WORD};
use crate::raster;
use crate::vp::{
    compute_label_layout, pad_width_for, render_label, LabelRect, LabeledFrame, PaddingMode,
    VpConfig, VpPosition, VpStyle,
};

pub struct MockDecoderModel {
    marker: RgbImage,
    marker_word: String,
    vp: Option<VpConfig>,
}

/// What the pixels of one frame say about its label.
enum Decoded {
    /// No text-colored pixels: the frame carries no visual prompt.
    NoLabel,
    /// The label round-tripped: display index plus the painted box.
    Index(usize, LabelRect),
    /// Text-colored pixels that match no candidate label.
    Unrecognized,
}

impl MockDecoderModel {
    /// Mock with an explicit marker template and the VP config the frames
    /// were rendered with (`None` disables label decoding entirely). The
    /// config's position is not trusted: candidates are tried at all four
    /// corners, so one instance can serve a whole probe suite.
    pub fn new(marker: RgbImage, marker_word: impl Into<String>, vp: Option<VpConfig>) -> Self {
        MockDecoderModel {
            marker,
            marker_word: marker_word.into(),
            vp,
        }
    }

    /// Mock over the bundled marker and default marker word.
    pub fn with_default_marker(vp: Option<VpConfig>) -> Self {
        Self::new(probe::default_marker(), DEFAULT_MARKER_WORD, vp)
    }

    fn decode_config(&self) -> Result<Option<&VpConfig>> {
        let Some(config) = &self.vp else {
            return Ok(None);
        };
        if config.padding != PaddingMode::Overlay {
            return Err(Error::Backend {
                backend: "mock-decoder".into(),
                message: "label decoding supports overlay padding only".into(),
            });
        }
        if config.style == VpStyle::Style4 {
            return Err(Error::Backend {
                backend: "mock-decoder".into(),
                message: "timestamp labels do not encode a display index".into(),
            });
        }
        Ok(Some(config))
    }

    /// Decode a frame's display index from its pixels.
    fn decode_display_index(
        &self,
        frame: &RgbImage,
        n_frames: usize,
        cache: &mut LayoutCache,
    ) -> Result<Decoded> {
        let Some(config) = self.decode_config()? else {
            return Ok(Decoded::NoLabel);
        };
        let text_color = image::Rgb(config.text_color);
        let mut painted: Vec<(u32, u32)> = Vec::new();
        for (x, y, pixel) in frame.enumerate_pixels() {
            if *pixel == text_color {
                painted.push((y, x));
            }
        }
        if painted.is_empty() {
            return Ok(Decoded::NoLabel);
        }
        let pad_width = pad_width_for(n_frames);
        for candidate in 1..=n_frames {
            for position in VpPosition::ALL {
                let (fill, rect) =
                    cache.fill_for(frame.dimensions(), candidate, position, config, pad_width)?;
                if *fill == painted {
                    return Ok(Decoded::Index(candidate, rect));
                }
            }
        }
        Ok(Decoded::Unrecognized)
    }

    /// Exact template match of the scaled marker at its centered placement,
    /// ignoring pixels the label overwrote.
    fn marker_present(&self, frame: &RgbImage, exclude: Option<LabelRect>) -> Result<bool> {
        let (w, h) = frame.dimensions();
        let (mw, mh, x0, y0) =
            probe::marker_geometry(w, h, self.marker.width(), self.marker.height())?;
        let scaled = raster::scale_nearest(&self.marker, mw, mh);
        for y in 0..mh {
            for x in 0..mw {
                let (fx, fy) = (x0 + x, y0 + y);
                if exclude.is_some_and(|rect| rect.contains(fx, fy)) {
                    continue;
                }
                if frame.get_pixel(fx, fy) != scaled.get_pixel(x, y) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn regression_error(&self) -> Error {
        Error::Backend {
            backend: "mock-decoder".into(),
            message: "labeled pixels present but no frame's label decodes; the renderer or \
                      probe regressed"
                .into(),
        }
    }

    fn answer_lookup(&self, k: usize, frames: &[LabeledFrame]) -> Result<String> {
        let mut cache = LayoutCache::default();
        let mut any_decoded = false;
        let mut any_unrecognized = false;
        for frame in frames {
            match self.decode_display_index(&frame.image, frames.len(), &mut cache)? {
                Decoded::Index(decoded, rect) => {
                    any_decoded = true;
                    if decoded == k {
                        return Ok(if self.marker_present(&frame.image, Some(rect))? {
                            format!("In that frame I can clearly see a {}.", self.marker_word)
                        } else {
                            "That frame shows an ordinary scene.".to_string()
                        });
                    }
                }
                Decoded::Unrecognized => any_unrecognized = true,
                Decoded::NoLabel => {}
            }
        }
        if any_unrecognized {
            return Err(self.regression_error());
        }
        Ok(if any_decoded {
            "No frame carries that number.".to_string()
        } else {
            "There are no visible frame numbers to look up.".to_string()
        })
    }

    fn answer_reverse(&self, frames: &[LabeledFrame]) -> Result<String> {
        let mut cache = LayoutCache::default();
        let mut any_decoded = false;
        let mut any_unrecognized = false;
        for frame in frames {
            match self.decode_display_index(&frame.image, frames.len(), &mut cache)? {
                Decoded::Index(decoded, rect) => {
                    any_decoded = true;
                    if self.marker_present(&frame.image, Some(rect))? {
                        return Ok(format!("frame {decoded}"));
                    }
                }
                Decoded::Unrecognized => any_unrecognized = true,
                Decoded::NoLabel => {}
            }
        }
        if any_unrecognized {
            return Err(self.regression_error());
        }
        Ok(if any_decoded {
            format!("I could not find the {}.", self.marker_word)
        } else {
            "unknown".to_string()
        })
    }
}

/// Candidate fill masks keyed by (dims, index, position); labels are
/// re-rendered once per distinct frame size.
#[derive(Default)]
struct LayoutCache {
    masks: HashMap<(u32, u32, usize, VpPosition), (Vec<(u32, u32)>, LabelRect)>,
}

impl LayoutCache {
    fn fill_for(
        &mut self,
        dims: (u32, u32),
        index: usize,
        position: VpPosition,
        config: &VpConfig,
        pad_width: usize,
    ) -> Result<(&Vec<(u32, u32)>, LabelRect)> {
        let key = (dims.0, dims.1, index, position);
        if !self.masks.contains_key(&key) {
            let candidate = VpConfig {
                position,
                ..config.clone()
            };
            let text = render_label(index, candidate.style, pad_width, None)?;
            let layout = compute_label_layout(dims.0, dims.1, &text, &candidate)?;
            let mut fill: Vec<(u32, u32)> = layout.fill.iter().map(|&(x, y)| (y, x)).collect();
            fill.sort_unstable();
            self.masks.insert(key, (fill, layout.rect));
        }
        let (fill, rect) = &self.masks[&key];
        Ok((fill, *rect))
    }
}

impl VideoLlmBackend for MockDecoderModel {
    fn name(&self) -> &str {
        "mock"
    }

    fn answer(
        &self,
        _system_prompt: &str,
        user_prompt: &str,
        frames: &[LabeledFrame],
    ) -> Result<String> {
        if frames.is_empty() {
            return Err(Error::Backend {
                backend: "mock-decoder".into(),
                message: "a video question requires at least one frame".into(),
            });
        }
        if user_prompt.starts_with("Describe the content of frame") {
            let k = first_integer(user_prompt).ok_or_else(|| Error::Backend {
                backend: "mock-decoder".into(),
                message: format!("lookup question without an index: {user_prompt}"),
            })?;
            return self.answer_lookup(k, frames);
        }
        if user_prompt.starts_with("Which frame number contains") {
            return self.answer_reverse(frames);
        }
        Ok("unknown".to_string())
    }
}

fn first_integer(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |len| start + len);
    text[start..end].parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{build_probe, lookup_question, reverse_question};
    use image::Rgb;

    fn synth_frames(n: usize, size: u32) -> Vec<RgbImage> {
        (0..n)
            .map(|i| {
                RgbImage::from_fn(size, size, |x, y| {
                    Rgb([
                        ((x + i as u32 * 11) % 200) as u8,
                        ((y + i as u32 * 5) % 200) as u8,
                        ((x + y) % 200) as u8,
                    ])
                })
            })
            .collect()
    }

    fn labeled(frames: &[RgbImage], config: &VpConfig) -> Vec<LabeledFrame> {
        let pad = pad_width_for(frames.len());
        frames
            .iter()
            .enumerate()
            .map(|(i, f)| crate::vp::insert_vp(f, i + 1, config, pad, None).unwrap())
            .collect()
    }

    fn decoded_index(mock: &MockDecoderModel, frame: &RgbImage, n: usize) -> Option<usize> {
        let mut cache = LayoutCache::default();
        match mock.decode_display_index(frame, n, &mut cache).unwrap() {
            Decoded::Index(k, _) => Some(k),
            _ => None,
        }
    }

    #[test]
    fn decodes_display_index_from_pixels() {
        let config = VpConfig::default();
        let frames = labeled(&synth_frames(8, 224), &config);
        let mock = MockDecoderModel::with_default_marker(Some(config));
        for (i, frame) in frames.iter().enumerate() {
            assert_eq!(decoded_index(&mock, &frame.image, frames.len()), Some(i + 1));
        }
    }

    #[test]
    fn decode_round_trip_all_positions_and_styles() {
        for position in VpPosition::ALL {
            for style in [VpStyle::Style1, VpStyle::Style2, VpStyle::Style3] {
                let config = VpConfig {
                    position,
                    style,
                    size_divisor: 9,
                    ..VpConfig::default()
                };
                // The mock is constructed with the default (BL) config; it
                // must still decode labels rendered at any corner.
                let base = VpConfig {
                    style,
                    size_divisor: 9,
                    ..VpConfig::default()
                };
                let frames = labeled(&synth_frames(16, 224), &config);
                let mock = MockDecoderModel::with_default_marker(Some(base));
                for (i, frame) in frames.iter().enumerate() {
                    assert_eq!(
                        decoded_index(&mock, &frame.image, frames.len()),
                        Some(i + 1),
                        "{position:?} {style:?} frame {}",
                        i + 1
                    );
                }
            }
        }
    }

    #[test]
    fn reverse_lookup_closed_loop() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (i, frame) in synth_frames(8, 224).iter().enumerate() {
            let path = dir.path().join(format!("{i}.png"));
            raster::save_png(frame, &path).unwrap();
            paths.push(path);
        }
        let video = crate::frame_pipeline::VideoSource {
            video_id: "v".into(),
            frames: paths,
            fps: None,
            duration_s: None,
        };
        let seq = crate::frame_pipeline::sample_fixed(&video, 8).unwrap();
        let config = VpConfig::default();
        let instance = build_probe(&seq, &probe::default_marker(), 5, Some(&config)).unwrap();
        let mock = MockDecoderModel::with_default_marker(Some(config));

        let answer = mock
            .answer("", &reverse_question("panda").unwrap(), &instance.frames)
            .unwrap();
        assert_eq!(answer, format!("frame {}", instance.marker_display_index));

        // Lookup of the marker frame names the marker; other frames do not.
        let hit = mock
            .answer(
                "",
                &lookup_question(instance.marker_display_index).unwrap(),
                &instance.frames,
            )
            .unwrap();
        assert!(hit.contains("panda"), "{hit}");
        let other = if instance.marker_display_index == 1 { 2 } else { 1 };
        let miss = mock
            .answer("", &lookup_question(other).unwrap(), &instance.frames)
            .unwrap();
        assert!(!crate::probe::score_lookup(&miss, "panda"), "{miss}");
    }

    #[test]
    fn no_vp_frames_answer_unknown() {
        // Even with a VP config, label-free pixels mean the no-VP baseline.
        let frames: Vec<LabeledFrame> = synth_frames(4, 224)
            .into_iter()
            .enumerate()
            .map(|(i, f)| LabeledFrame::unlabeled(i + 1, f))
            .collect();
        let mock = MockDecoderModel::with_default_marker(Some(VpConfig::default()));
        let answer = mock
            .answer("", &reverse_question("panda").unwrap(), &frames)
            .unwrap();
        assert_eq!(answer, "unknown");
    }

    #[test]
    fn corrupted_label_signals_regression() {
        let config = VpConfig::default();
        let mut frames = labeled(&synth_frames(4, 224), &config);
        // Stamp a stray text-colored pixel far from any label.
        let image = &mut frames[2].image;
        image.put_pixel(112, 10, Rgb(config.text_color));
        let mock = MockDecoderModel::with_default_marker(Some(config));
        assert!(mock
            .answer("", &reverse_question("panda").unwrap(), &frames)
            .is_err());
    }
}
