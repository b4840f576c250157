//! Layer-wise mean attention to image tokens, computed from exported
//! attention dumps.
//!
//! Dumps are produced outside this crate by model-specific hooks; this module
//! owns the validated format and the aggregation math. Per layer, the
//! statistic is the head-averaged, query-averaged sum of attention mass on
//! the image-token key columns; the relative-change statistic compares a
//! with-VP run against its no-VP baseline both per layer and on the overall
//! means.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which query rows enter the average: every text query row, or only the
/// final token of the input prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    AllRows,
    LastRow,
}

/// An exported attention dump.
///
/// `layers[l][h]` is the row-major `t x k_total` attention matrix of head `h`
/// at layer `l`; every query row is a softmax row summing to 1 (tolerance
/// 1e-4), and `image_token_mask` selects the image-token key columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    /// Number of query (text) rows per matrix.
    pub t: usize,
    /// Total number of key columns.
    pub k_total: usize,
    /// Number of attention heads per layer.
    pub h: usize,
    pub query_mode: QueryMode,
    /// Length `k_total`; true marks an image-token column.
    pub image_token_mask: Vec<bool>,
    pub layers: Vec<Vec<Vec<f64>>>,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

impl AttentionDump {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of image-token columns (S).
    pub fn image_cols(&self) -> usize {
        self.image_token_mask.iter().filter(|&&m| m).count()
    }

    /// Check every structural invariant, naming the first offender.
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.k_total == 0 || self.h == 0 {
            return Err(Error::AttentionDump("t, k_total and h must be >= 1".into()));
        }
        if self.image_token_mask.len() != self.k_total {
            return Err(Error::AttentionDump(format!(
                "mask length {} does not match k_total {}",
                self.image_token_mask.len(),
                self.k_total
            )));
        }
        if self.image_cols() == 0 {
            return Err(Error::AttentionDump("mask selects no image columns".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::AttentionDump("dump holds no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.len() != self.h {
                return Err(Error::AttentionDump(format!(
                    "layer {l} has {} heads, expected {}",
                    layer.len(),
                    self.h
                )));
            }
            for (head_idx, matrix) in layer.iter().enumerate() {
                if matrix.len() != self.t * self.k_total {
                    return Err(Error::AttentionDump(format!(
                        "layer {l} head {head_idx} holds {} values, expected {}",
                        matrix.len(),
                        self.t * self.k_total
                    )));
                }
                for (row_idx, row) in matrix.chunks(self.k_total).enumerate() {
                    let mut sum = 0.0;
                    for (col, &v) in row.iter().enumerate() {
                        if !(v >= 0.0) {
                            return Err(Error::AttentionDump(format!(
                                "layer {l} head {head_idx} row {row_idx} col {col}: negative or \
                                 non-finite entry {v}"
                            )));
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::AttentionDump(format!(
                            "layer {l} head {head_idx} row {row_idx} sums to {sum}, expected 1 \
                             within {ROW_SUM_TOLERANCE}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Load and validate a dump from its JSON container.
pub fn load_dump(path: &Path) -> Result<AttentionDump> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let dump: AttentionDump = serde_json::from_slice(&bytes)?;
    dump.validate()?;
    Ok(dump)
}

/// Write a dump to disk in the JSON container format.
pub fn save_dump(dump: &AttentionDump, path: &Path) -> Result<()> {
    let json = serde_json::to_string(dump)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Per-layer mean attention mass on the image-token columns.
///
/// In `AllRows` mode the average runs over every query row; in `LastRow` mode
/// only the final query row contributes.
pub fn layer_mean_attention(dump: &AttentionDump) -> Result<Vec<f64>> {
    dump.validate()?;
    let rows: Vec<usize> = match dump.query_mode {
        QueryMode::AllRows => (0..dump.t).collect(),
        QueryMode::LastRow => vec![dump.t - 1],
    };
    let mut out = Vec::with_capacity(dump.num_layers());
    for layer in &dump.layers {
        let mut head_sum = 0.0;
        for matrix in layer {
            let mut row_sum = 0.0;
            for &row in &rows {
                let base = row * dump.k_total;
                for (col, &is_image) in dump.image_token_mask.iter().enumerate() {
                    if is_image {
                        row_sum += matrix[base + col];
                    }
                }
            }
            head_sum += row_sum / rows.len() as f64;
        }
        out.push(head_sum / dump.h as f64);
    }
    Ok(out)
}

/// The VP vs no-VP comparison: per-layer relative changes, their arithmetic
/// mean, and the relative change of the overall means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeChange {
    pub per_layer: Vec<f64>,
    pub layer_mean: f64,
    pub overall: f64,
}

/// Relative change of `with_vp` against `without_vp`, per layer and overall.
///
/// `layer_mean` averages the per-layer ratios; `overall` compares the means
/// of the two series. The two differ whenever layers differ in magnitude,
/// which is why both are reported.
pub fn relative_change(with_vp: &[f64], without_vp: &[f64]) -> Result<RelativeChange> {
    if with_vp.len() != without_vp.len() {
        return Err(Error::AttentionDump(format!(
            "series lengths differ: {} vs {}",
            with_vp.len(),
            without_vp.len()
        )));
    }
    if with_vp.is_empty() {
        return Err(Error::AttentionDump("empty attention series".into()));
    }
    let per_layer: Vec<f64> = with_vp
        .iter()
        .zip(without_vp)
        .enumerate()
        .map(|(l, (&a, &b))| {
            if b <= 0.0 {
                return Err(Error::AttentionDump(format!(
                    "baseline layer {l} is {b}; relative change needs a positive baseline"
                )));
            }
            Ok((a - b) / b)
        })
        .collect::<Result<_>>()?;
    let layer_mean = per_layer.iter().sum::<f64>() / per_layer.len() as f64;
    let mean_a = with_vp.iter().sum::<f64>() / with_vp.len() as f64;
    let mean_b = without_vp.iter().sum::<f64>() / without_vp.len() as f64;
    Ok(RelativeChange {
        per_layer,
        layer_mean,
        overall: (mean_a - mean_b) / mean_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dump with every attention row uniform over all key columns.
    fn uniform_dump(layers: usize, h: usize, t: usize, k: usize, s: usize) -> AttentionDump {
        let mask: Vec<bool> = (0..k).map(|i| i < s).collect();
        let matrix = vec![1.0 / k as f64; t * k];
        AttentionDump {
            t,
            k_total: k,
            h,
            query_mode: QueryMode::AllRows,
            image_token_mask: mask,
            layers: vec![vec![matrix; h]; layers],
        }
    }

    #[test]
    fn uniform_attention_value() {
        let dump = uniform_dump(3, 2, 3, 8, 4);
        let means = layer_mean_attention(&dump).unwrap();
        assert_eq!(means, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn mass_on_non_image_column_scores_zero() {
        let mut dump = uniform_dump(1, 1, 1, 4, 2);
        // All mass on column 3, which the mask excludes.
        dump.layers[0][0] = vec![0.0, 0.0, 0.0, 1.0];
        assert_eq!(layer_mean_attention(&dump).unwrap(), vec![0.0]);
    }

    #[test]
    fn last_row_mode_uses_final_query_only() {
        let mut dump = uniform_dump(1, 1, 2, 4, 2);
        // Row 0 puts everything on image columns, row 1 nothing.
        dump.layers[0][0] = vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5];
        dump.query_mode = QueryMode::LastRow;
        assert_eq!(layer_mean_attention(&dump).unwrap(), vec![0.0]);
        dump.query_mode = QueryMode::AllRows;
        assert_eq!(layer_mean_attention(&dump).unwrap(), vec![0.5]);
    }

    #[test]
    fn validation_names_the_bad_row() {
        let mut dump = uniform_dump(2, 2, 2, 4, 2);
        dump.layers[1][0][4] = 0.4; // row 1 of layer 1 head 0 now sums to 0.9
        let err = dump.validate().unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
        assert!(err.contains("head 0"), "{err}");
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn validation_rejects_shape_mismatch() {
        let mut dump = uniform_dump(1, 2, 2, 4, 2);
        dump.layers[0][1].pop();
        assert!(dump.validate().is_err());
    }

    #[test]
    fn round_trip_identity() {
        let dump = uniform_dump(2, 2, 2, 4, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.json");
        save_dump(&dump, &path).unwrap();
        assert_eq!(load_dump(&path).unwrap(), dump);
    }

    #[test]
    fn relative_change_identity_is_zero() {
        let a = vec![0.3, 0.4];
        let rc = relative_change(&a, &a).unwrap();
        assert_eq!(rc.per_layer, vec![0.0, 0.0]);
        assert_eq!(rc.layer_mean, 0.0);
        assert_eq!(rc.overall, 0.0);
    }

    #[test]
    fn layer_mean_and_overall_can_differ() {
        let rc = relative_change(&[0.02, 0.10], &[0.01, 0.10]).unwrap();
        assert!((rc.layer_mean - 0.5).abs() < 1e-12);
        assert!((rc.overall - 0.005 / 0.055).abs() < 1e-12);
    }

    #[test]
    fn zero_baseline_rejected() {
        assert!(relative_change(&[0.1], &[0.0]).is_err());
    }
}
