//! Position-index assignment for rotary embeddings under degradation.
//!
//! VideoLLMs concatenate text and visual tokens and encode order through the
//! position indices handed to the rotary embedding. This module computes
//! those indices for three schemes: the standard assignment, a temporal-only
//! degradation that makes every frame share the same index range, and a full
//! collapse that maps every visual token to a single index. Both the 1D
//! (single index) and the multi-axis (temporal/height/width triplet) variants
//! are covered. The module emits index tables only; applying them inside a
//! transformer is left to external model-patching scripts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token layout of a text-then-vision sequence: `text_len` text tokens
/// followed by `num_frames` frames of `tokens_per_frame` visual tokens each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RopeLayout {
    pub text_len: usize,
    pub tokens_per_frame: usize,
    pub num_frames: usize,
}

impl RopeLayout {
    pub fn new(text_len: usize, tokens_per_frame: usize, num_frames: usize) -> Result<Self> {
        if tokens_per_frame == 0 || num_frames == 0 {
            return Err(Error::PositionRange(
                "tokens_per_frame and num_frames must be >= 1".into(),
            ));
        }
        Ok(Self {
            text_len,
            tokens_per_frame,
            num_frames,
        })
    }
}

/// How positional structure is (de)graded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationMode {
    /// Unmodified index assignment.
    Standard,
    /// Frames share the same index range: frame order erased, within-frame
    /// order kept.
    TemporalOnly,
    /// Every visual token maps to one index: all positional structure erased.
    FullCollapse,
}

/// A temporal/height/width index triplet for multi-axis rotary embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MRopeTriplet {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl MRopeTriplet {
    pub const ZERO: MRopeTriplet = MRopeTriplet { t: 0, h: 0, w: 0 };

    pub fn new(t: usize, h: usize, w: usize) -> Self {
        Self { t, h, w }
    }
}

/// 1D position index of visual token `j` (0-based within the frame) of frame
/// `k` (1-based).
///
/// Standard: `text_len + (k-1) * tokens_per_frame + j`. Temporal-only drops
/// the frame offset; full collapse drops `j` as well.
pub fn rope_pos(layout: &RopeLayout, k: usize, j: usize, mode: DegradationMode) -> Result<usize> {
    if k < 1 || k > layout.num_frames {
        return Err(Error::PositionRange(format!(
            "frame index k={k} outside 1..={}",
            layout.num_frames
        )));
    }
    if j >= layout.tokens_per_frame {
        return Err(Error::PositionRange(format!(
            "token index j={j} outside 0..{}",
            layout.tokens_per_frame
        )));
    }
    Ok(match mode {
        DegradationMode::Standard => layout.text_len + (k - 1) * layout.tokens_per_frame + j,
        DegradationMode::TemporalOnly => layout.text_len + j,
        DegradationMode::FullCollapse => layout.text_len,
    })
}

/// Multi-axis position of a visual token under degradation.
///
/// Temporal-only pins the temporal component to the anchor's; full collapse
/// replaces the whole triplet with the anchor.
pub fn mrope_pos(base: MRopeTriplet, mode: DegradationMode, anchor: MRopeTriplet) -> MRopeTriplet {
    match mode {
        DegradationMode::Standard => base,
        DegradationMode::TemporalOnly => MRopeTriplet::new(anchor.t, base.h, base.w),
        DegradationMode::FullCollapse => anchor,
    }
}

/// The full index table for a layout: `rope_pos` over all `(k, j)` in
/// frame-major order, length `num_frames * tokens_per_frame`.
pub fn layout_table(layout: &RopeLayout, mode: DegradationMode) -> Vec<usize> {
    let mut table = Vec::with_capacity(layout.num_frames * layout.tokens_per_frame);
    for k in 1..=layout.num_frames {
        for j in 0..layout.tokens_per_frame {
            // In-range by construction.
            table.push(rope_pos(layout, k, j, mode).expect("indices in range"));
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values_per_scheme() {
        let layout = RopeLayout::new(10, 4, 3).unwrap();
        assert_eq!(rope_pos(&layout, 2, 3, DegradationMode::Standard).unwrap(), 17);
        assert_eq!(rope_pos(&layout, 2, 3, DegradationMode::TemporalOnly).unwrap(), 13);
        assert_eq!(rope_pos(&layout, 2, 3, DegradationMode::FullCollapse).unwrap(), 10);
    }

    #[test]
    fn out_of_range_rejected() {
        let layout = RopeLayout::new(0, 4, 3).unwrap();
        assert!(rope_pos(&layout, 0, 0, DegradationMode::Standard).is_err());
        assert!(rope_pos(&layout, 4, 0, DegradationMode::Standard).is_err());
        assert!(rope_pos(&layout, 1, 4, DegradationMode::Standard).is_err());
    }

    #[test]
    fn table_enumeration() {
        let layout = RopeLayout::new(0, 2, 2).unwrap();
        assert_eq!(layout_table(&layout, DegradationMode::Standard), vec![0, 1, 2, 3]);
        assert_eq!(layout_table(&layout, DegradationMode::TemporalOnly), vec![0, 1, 0, 1]);
        assert_eq!(layout_table(&layout, DegradationMode::FullCollapse), vec![0, 0, 0, 0]);
    }

    #[test]
    fn mrope_per_mode() {
        let base = MRopeTriplet::new(7, 2, 5);
        assert_eq!(mrope_pos(base, DegradationMode::Standard, MRopeTriplet::ZERO), base);
        assert_eq!(
            mrope_pos(base, DegradationMode::TemporalOnly, MRopeTriplet::ZERO),
            MRopeTriplet::new(0, 2, 5)
        );
        assert_eq!(
            mrope_pos(base, DegradationMode::FullCollapse, MRopeTriplet::ZERO),
            MRopeTriplet::ZERO
        );
    }

    #[test]
    fn mrope_nonzero_anchor() {
        let base = MRopeTriplet::new(7, 2, 5);
        let anchor = MRopeTriplet::new(3, 1, 1);
        assert_eq!(
            mrope_pos(base, DegradationMode::TemporalOnly, anchor),
            MRopeTriplet::new(3, 2, 5)
        );
        assert_eq!(mrope_pos(base, DegradationMode::FullCollapse, anchor), anchor);
    }
}
