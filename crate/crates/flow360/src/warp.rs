//! Wrap-aware warping and the losses built on it.
//!
//! Displacement targets are resolved on the sphere: horizontal overflow
//! wraps around the longitude seam, vertical overflow crosses the pole
//! onto the antipodal column with negated longitude. [`wrap_target_grid`]
//! states those rules in degrees; [`backward_warp`] applies the same
//! resolution in pixel space.
//!
//! Latitude runs from `-90` at the top edge to `+90` at the bottom edge
//! (polar angle minus ninety), longitude from `-180` to `180` across the
//! row.

use thiserror::Error;

use crate::raster::{EdgePolicy, FlowField, Image};

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-pixel flow expressed in degrees: `(delta_lon, delta_lat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeFlow {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DegreeFlow {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (f32, f32) {
        let base = (row * self.width + col) * 2;
        (self.data[base], self.data[base + 1])
    }
}

/// Per-pixel absolute target position in degrees: `(lon, lat)` with
/// `lon` in `[-180, 180]` and `lat` in `[-90, 90]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DegreeGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (f64, f64) {
        let base = (row * self.width + col) * 2;
        (self.data[base], self.data[base + 1])
    }
}

/// Binary per-pixel mask; `1` marks the special set (occluded, static,
/// or excluded depending on the producing operation).
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl OcclusionMask {
    pub fn new(height: usize, width: usize) -> OcclusionMask {
        assert!(height > 0 && width > 0, "zero-sized mask");
        OcclusionMask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.data[row * self.width + col] = value;
    }

    /// Fraction of pixels set to `1`.
    pub fn coverage(&self) -> f64 {
        let ones: usize = self.data.iter().map(|&b| b as usize).sum();
        ones as f64 / self.data.len() as f64
    }
}

/// Convert pixel flow to angular flow: `dlon = u * 360 / w`,
/// `dlat = v * 180 / h`.
pub fn flow_to_degrees(flow: &FlowField) -> DegreeFlow {
    let (h, w) = (flow.height(), flow.width());
    let mut data = Vec::with_capacity(h * w * 2);
    for i in 0..h {
        for j in 0..w {
            let (u, v) = flow.get(i, j);
            data.push((u as f64 * 360.0 / w as f64) as f32);
            data.push((v as f64 * 180.0 / h as f64) as f32);
        }
    }
    DegreeFlow {
        height: h,
        width: w,
        data,
    }
}

/// Fold an angle into `[-180, 180]`; values beyond one period reduce
/// modulo 360 first.
fn fold_longitude(lon: f64) -> f64 {
    let mut r = lon % 360.0;
    if r > 180.0 {
        r -= 360.0;
    } else if r < -180.0 {
        r += 360.0;
    }
    r
}

/// Absolute target positions of a flow field in degrees, with seam and
/// pole overflow resolved.
///
/// Longitude overflow wraps (`sign(lon) * (|lon| - 360)` after modular
/// reduction). Latitude overflow reflects over the pole
/// (`sign(lat) * (180 - |lat|)`) and negates the longitude, because a
/// great circle crossing a pole re-enters on the opposite meridian.
pub fn wrap_target_grid(flow: &FlowField) -> DegreeGrid {
    let (h, w) = (flow.height(), flow.width());
    let mut data = Vec::with_capacity(h * w * 2);
    for i in 0..h {
        let base_lat = (i as f64 + 0.5) * 180.0 / h as f64 - 90.0;
        for j in 0..w {
            let base_lon = (j as f64 + 0.5) * 360.0 / w as f64 - 180.0;
            let (u, v) = flow.get(i, j);
            let mut lon = base_lon + u as f64 * 360.0 / w as f64;
            if !(-180.0..=180.0).contains(&lon) {
                lon = fold_longitude(lon);
            }
            let mut lat = base_lat + v as f64 * 180.0 / h as f64;
            if !(-90.0..=90.0).contains(&lat) {
                lat = fold_longitude(lat); // same period-360 reduction
                if !(-90.0..=90.0).contains(&lat) {
                    lat = lat.signum() * (180.0 - lat.abs());
                    lon = -lon;
                }
            }
            data.push(lon);
            data.push(lat);
        }
    }
    DegreeGrid {
        height: h,
        width: w,
        data,
    }
}

/// Resolve a continuous index-space target `(x, y)` onto the raster,
/// pixel-space mirror of the [`wrap_target_grid`] rules. Total for any
/// finite input.
pub(crate) fn resolve_pixel_target(x: f64, y: f64, height: usize, width: usize) -> (f64, f64) {
    let (hf, wf) = (height as f64, width as f64);
    let mut xc = x + 0.5;
    let mut yc = (y + 0.5).rem_euclid(2.0 * hf);
    if yc > hf {
        yc = 2.0 * hf - yc;
        xc = wf - xc;
    }
    xc = xc.rem_euclid(wf);
    (xc - 0.5, yc - 0.5)
}

/// Sample the second frame at each pixel's displaced position:
/// `out(p) = img(p + flow(p))`, with seam wrap and pole reflection.
pub fn backward_warp(img: &Image, flow: &FlowField) -> Result<Image, WarpError> {
    let (h, w) = (img.height(), img.width());
    if flow.height() != h || flow.width() != w {
        return Err(WarpError::DimensionMismatch(format!(
            "image {h}x{w} vs flow {}x{}",
            flow.height(),
            flow.width()
        )));
    }
    let mut out = Image::new(h, w, img.channels());
    for i in 0..h {
        for j in 0..w {
            let (u, v) = flow.get(i, j);
            let (x, y) = resolve_pixel_target(j as f64 + u as f64, i as f64 + v as f64, h, w);
            for c in 0..img.channels() {
                let value = img
                    .bilinear_sample_channel(c, x, y, EdgePolicy::SPHERE)
                    .clamp(0.0, 1.0);
                out.set(i, j, c, value);
            }
        }
    }
    Ok(out)
}

/// Static-pixel mask: `1` where the displacement magnitude is at most
/// `eps` (Euclidean, in pixels).
pub fn motion_mask(flow: &FlowField, eps: f64) -> Result<OcclusionMask, WarpError> {
    if eps < 0.0 {
        return Err(WarpError::InvalidParameter(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    let mut mask = OcclusionMask::new(flow.height(), flow.width());
    for i in 0..flow.height() {
        for j in 0..flow.width() {
            let (u, v) = flow.get(i, j);
            let mag = ((u as f64).powi(2) + (v as f64).powi(2)).sqrt();
            mask.set(i, j, u8::from(mag <= eps));
        }
    }
    Ok(mask)
}

fn check_same_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<(), WarpError> {
    if a != b {
        return Err(WarpError::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Occlusion masks from the static-pixel fixed point: a pixel is
/// occluded in a direction when it is static there and moving in the
/// other direction.
///
/// This closed form is the unique fixed point of the mutual recursion
/// `O_fw = M1 * ((1 - M2) + O_bw)` (and symmetrically), reached after
/// two iterations from all-zero because `M * (1 - M) = 0`.
pub fn occlusion_masks(
    flow_fw: &FlowField,
    flow_bw: &FlowField,
    eps: f64,
) -> Result<(OcclusionMask, OcclusionMask), WarpError> {
    check_same_dims(
        (flow_fw.height(), flow_fw.width()),
        (flow_bw.height(), flow_bw.width()),
        "forward vs backward flow",
    )?;
    let m1 = motion_mask(flow_fw, eps)?;
    let m2 = motion_mask(flow_bw, eps)?;
    let mut occ_fw = OcclusionMask::new(m1.height, m1.width);
    let mut occ_bw = OcclusionMask::new(m1.height, m1.width);
    for i in 0..m1.height {
        for j in 0..m1.width {
            occ_fw.set(i, j, m1.get(i, j) & (1 - m2.get(i, j)));
            occ_bw.set(i, j, m2.get(i, j) & (1 - m1.get(i, j)));
        }
    }
    Ok((occ_fw, occ_bw))
}

/// Occlusion masks by forward-backward consistency: a pixel is occluded
/// when the round trip `flow_fw(p) + flow_bw(p + flow_fw(p))` misses by
/// more than `eps` pixels.
pub fn occlusion_masks_consistency(
    flow_fw: &FlowField,
    flow_bw: &FlowField,
    eps: f64,
) -> Result<(OcclusionMask, OcclusionMask), WarpError> {
    check_same_dims(
        (flow_fw.height(), flow_fw.width()),
        (flow_bw.height(), flow_bw.width()),
        "forward vs backward flow",
    )?;
    if eps < 0.0 {
        return Err(WarpError::InvalidParameter(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    let (h, w) = (flow_fw.height(), flow_fw.width());
    let round_trip = |from: &FlowField, to: &FlowField, mask: &mut OcclusionMask| {
        for i in 0..h {
            for j in 0..w {
                let (u, v) = from.get(i, j);
                let (x, y) = resolve_pixel_target(j as f64 + u as f64, i as f64 + v as f64, h, w);
                let (bu, bv) = to.bilinear_sample(x, y, EdgePolicy::SPHERE);
                let du = u as f64 + bu as f64;
                let dv = v as f64 + bv as f64;
                mask.set(i, j, u8::from((du * du + dv * dv).sqrt() > eps));
            }
        }
    };
    let mut occ_fw = OcclusionMask::new(h, w);
    let mut occ_bw = OcclusionMask::new(h, w);
    round_trip(flow_fw, flow_bw, &mut occ_fw);
    round_trip(flow_bw, flow_fw, &mut occ_bw);
    Ok((occ_fw, occ_bw))
}

/// Robust penalty `(|x| + eps)^q`.
fn psi(x: f64, eps: f64, q: f64) -> f64 {
    (x.abs() + eps).powf(q)
}

/// Occlusion-weighted bidirectional photometric loss.
///
/// Each direction contributes the mean of `psi(I - I_pred)` (averaged
/// over channels per pixel) over its non-occluded pixels; a fully
/// occluded direction contributes zero. With identical frames, identity
/// predictions, and no occlusion the loss is exactly `2 * eps^q`.
#[allow(clippy::too_many_arguments)]
pub fn photometric_loss(
    frame1: &Image,
    frame1_pred: &Image,
    frame2: &Image,
    frame2_pred: &Image,
    occ_fw: &OcclusionMask,
    occ_bw: &OcclusionMask,
    eps: f64,
    q: f64,
) -> Result<f64, WarpError> {
    if eps < 0.0 || !(0.0..=1.0).contains(&q) || q == 0.0 {
        return Err(WarpError::InvalidParameter(format!(
            "need eps >= 0 and 0 < q <= 1, got eps={eps}, q={q}"
        )));
    }
    let dims = (frame1.height(), frame1.width());
    for (img, what) in [(frame1_pred, "frame1 prediction"), (frame2, "frame2"), (frame2_pred, "frame2 prediction")] {
        check_same_dims(dims, (img.height(), img.width()), what)?;
        if img.channels() != frame1.channels() {
            return Err(WarpError::DimensionMismatch(format!(
                "{what}: channel count {} vs {}",
                img.channels(),
                frame1.channels()
            )));
        }
    }
    check_same_dims(dims, (occ_fw.height(), occ_fw.width()), "forward occlusion")?;
    check_same_dims(dims, (occ_bw.height(), occ_bw.width()), "backward occlusion")?;

    let directional = |target: &Image, pred: &Image, occ: &OcclusionMask| -> f64 {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for i in 0..target.height() {
            for j in 0..target.width() {
                if occ.get(i, j) == 1 {
                    continue;
                }
                let mut pixel = 0.0f64;
                for c in 0..target.channels() {
                    let diff = target.get(i, j, c) as f64 - pred.get(i, j, c) as f64;
                    pixel += psi(diff, eps, q);
                }
                sum += pixel / target.channels() as f64;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };
    Ok(directional(frame1, frame1_pred, occ_fw) + directional(frame2, frame2_pred, occ_bw))
}

/// Root-mean-square brightness error of warping the second frame back
/// onto the first: `rms(backward_warp(frame2, flow) - frame1)`.
pub fn brightness_error(
    frame1: &Image,
    frame2: &Image,
    flow_fw: &FlowField,
) -> Result<f64, WarpError> {
    brightness_error_rows(frame1, frame2, flow_fw, 0, frame1.height())
}

/// [`brightness_error`] restricted to rows `row_start..row_end`, for
/// excluding polar bands where equirectangular sampling degenerates.
pub fn brightness_error_rows(
    frame1: &Image,
    frame2: &Image,
    flow_fw: &FlowField,
    row_start: usize,
    row_end: usize,
) -> Result<f64, WarpError> {
    check_same_dims(
        (frame1.height(), frame1.width()),
        (frame2.height(), frame2.width()),
        "frame1 vs frame2",
    )?;
    if frame1.channels() != frame2.channels() {
        return Err(WarpError::DimensionMismatch(format!(
            "channel count {} vs {}",
            frame1.channels(),
            frame2.channels()
        )));
    }
    if row_start >= row_end || row_end > frame1.height() {
        return Err(WarpError::InvalidParameter(format!(
            "bad row range {row_start}..{row_end} for height {}",
            frame1.height()
        )));
    }
    let warped = backward_warp(frame2, flow_fw)?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in row_start..row_end {
        for j in 0..frame1.width() {
            for c in 0..frame1.channels() {
                let diff = warped.get(i, j, c) as f64 - frame1.get(i, j, c) as f64;
                sum += diff * diff;
                count += 1;
            }
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// Mean absolute brightness error over `row_start..row_end`.
pub fn mean_abs_error_rows(
    frame1: &Image,
    frame2: &Image,
    row_start: usize,
    row_end: usize,
) -> Result<f64, WarpError> {
    check_same_dims(
        (frame1.height(), frame1.width()),
        (frame2.height(), frame2.width()),
        "frame1 vs frame2",
    )?;
    if frame1.channels() != frame2.channels() {
        return Err(WarpError::DimensionMismatch(format!(
            "channel count {} vs {}",
            frame1.channels(),
            frame2.channels()
        )));
    }
    if row_start >= row_end || row_end > frame1.height() {
        return Err(WarpError::InvalidParameter(format!(
            "bad row range {row_start}..{row_end} for height {}",
            frame1.height()
        )));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in row_start..row_end {
        for j in 0..frame1.width() {
            for c in 0..frame1.channels() {
                sum += (frame1.get(i, j, c) as f64 - frame2.get(i, j, c) as f64).abs();
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}
