//! Endpoint-error metrics and structured metric records.

use serde::Serialize;
use thiserror::Error;

use crate::raster::FlowField;
use crate::sphere::wrap_u;
use crate::warp::OcclusionMask;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no pixels selected: every pixel is masked out")]
    EmptySelection,
    #[error("band count {bands} must divide height {height}")]
    BadBands { bands: usize, height: usize },
}

/// One scalar metric with the population it was computed over.
///
/// Serializes to a single JSON object per record; `band_index` appears
/// only for per-band breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_index: Option<usize>,
}

impl MetricReport {
    /// The record as one line of JSON (no trailing newline).
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain fields serialize")
    }
}

fn check_dims(pred: &FlowField, gt: &FlowField) -> Result<(), EvalError> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(EvalError::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

fn check_mask(mask: Option<&OcclusionMask>, gt: &FlowField) -> Result<(), EvalError> {
    if let Some(mask) = mask {
        if mask.height() != gt.height() || mask.width() != gt.width() {
            return Err(EvalError::DimensionMismatch(format!(
                "mask {}x{} vs flow {}x{}",
                mask.height(),
                mask.width(),
                gt.height(),
                gt.width()
            )));
        }
    }
    Ok(())
}

fn mean_endpoint_error(
    pred: &FlowField,
    gt: &FlowField,
    mask: Option<&OcclusionMask>,
    rows: std::ops::Range<usize>,
    wrap: bool,
) -> Result<(f64, usize), EvalError> {
    let width = pred.width() as f64;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in rows {
        for j in 0..pred.width() {
            if mask.is_some_and(|m| m.get(i, j) == 1) {
                continue;
            }
            let (pu, pv) = pred.get(i, j);
            let (gu, gv) = gt.get(i, j);
            let mut du = pu as f64 - gu as f64;
            if wrap {
                du = wrap_u(du, width);
            }
            let dv = pv as f64 - gv as f64;
            sum += (du * du + dv * dv).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::EmptySelection);
    }
    Ok((sum / count as f64, count))
}

/// Mean Euclidean endpoint error, optionally excluding masked pixels
/// (mask value `1` excludes).
pub fn epe(
    pred: &FlowField,
    gt: &FlowField,
    mask: Option<&OcclusionMask>,
) -> Result<MetricReport, EvalError> {
    check_dims(pred, gt)?;
    check_mask(mask, gt)?;
    let (value, count) = mean_endpoint_error(pred, gt, mask, 0..pred.height(), false)?;
    Ok(MetricReport {
        name: "epe".into(),
        value,
        count,
        band_index: None,
    })
}

/// Endpoint error with the horizontal difference folded into
/// `(-w/2, w/2]`: disagreement across the seam is measured the short way
/// around. Never exceeds the plain [`epe`].
pub fn wrapped_epe(
    pred: &FlowField,
    gt: &FlowField,
    mask: Option<&OcclusionMask>,
) -> Result<MetricReport, EvalError> {
    check_dims(pred, gt)?;
    check_mask(mask, gt)?;
    let (value, count) = mean_endpoint_error(pred, gt, mask, 0..pred.height(), true)?;
    Ok(MetricReport {
        name: "wrapped_epe".into(),
        value,
        count,
        band_index: None,
    })
}

/// Wrapped endpoint error per horizontal band of rows, top to bottom.
/// `bands` must divide the height evenly.
pub fn latitude_band_report(
    pred: &FlowField,
    gt: &FlowField,
    bands: usize,
) -> Result<Vec<MetricReport>, EvalError> {
    check_dims(pred, gt)?;
    if bands == 0 || !pred.height().is_multiple_of(bands) {
        return Err(EvalError::BadBands {
            bands,
            height: pred.height(),
        });
    }
    let rows_per_band = pred.height() / bands;
    let mut reports = Vec::with_capacity(bands);
    for band in 0..bands {
        let rows = band * rows_per_band..(band + 1) * rows_per_band;
        let (value, count) = mean_endpoint_error(pred, gt, None, rows, true)?;
        reports.push(MetricReport {
            name: "wrapped_epe".into(),
            value,
            count,
            band_index: Some(band),
        });
    }
    Ok(reports)
}
