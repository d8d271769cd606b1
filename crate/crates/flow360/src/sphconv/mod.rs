//! Distortion-adaptive convolution by latitude row groups.
//!
//! Equirectangular distortion varies only with latitude, so one learned
//! kernel per horizontal band suffices. [`rowgroup_partition`] splits the
//! height into equal groups whose ranges overlap by a few interleave
//! rows; [`interleaved_conv`] runs one kernel per group and linearly
//! blends the overlap so band seams stay continuous. Per-band kernels
//! come from per-band projection matrices applied to one shared source
//! kernel ([`apply_projection`]), fitted by
//! [`fit_transform`](crate::sphconv::fit_transform).

mod fit;
mod io;

pub use fit::{
    fit_transform, transform_loss, transform_loss_and_gradient, Correspondence, FitError,
    FitMethod, FitOptions, FitResult,
};
pub use io::{read_kernel, read_projection_set, write_kernel, write_projection_set};

use std::ops::Range;

use thiserror::Error;

use crate::raster::Image;

#[derive(Debug, Error)]
pub enum ConvError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("group rows {group_rows} must divide height {height}")]
    NonDivisor { group_rows: usize, height: usize },
    #[error("interleave {interleave} must not exceed group rows {group_rows}")]
    InvalidInterleave {
        interleave: usize,
        group_rows: usize,
    },
    #[error("kernel spatial dims must be odd, got {kernel_height}x{kernel_width}")]
    EvenKernel {
        kernel_height: usize,
        kernel_width: usize,
    },
    #[error("zero-sized dimension")]
    ZeroDimension,
    #[error("data length {found} does not match expected {expected}")]
    InvalidDataLength { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: bad magic, expected {expected}")]
    BadMagic { path: String, expected: &'static str },
    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("{path}: non-finite value at element {index}")]
    NonFinite { path: String, index: usize },
}

/// Dense multi-channel feature raster, row-major `[h][w][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    /// All-zero map.
    ///
    /// # Panics
    /// If any dimension is zero.
    pub fn new(height: usize, width: usize, channels: usize) -> FeatureMap {
        assert!(
            height > 0 && width > 0 && channels > 0,
            "zero-sized feature map"
        );
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_data(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<FeatureMap, ConvError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ConvError::ZeroDimension);
        }
        if data.len() != height * width * channels {
            return Err(ConvError::InvalidDataLength {
                expected: height * width * channels,
                found: data.len(),
            });
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    /// View an image's channels as features.
    pub fn from_image(img: &Image) -> FeatureMap {
        FeatureMap {
            height: img.height(),
            width: img.width(),
            channels: img.channels(),
            data: img.data().to_vec(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }
}

/// Convolution kernel, `[kh][kw][c_in][c_out]`, odd spatial dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    kernel_height: usize,
    kernel_width: usize,
    c_in: usize,
    c_out: usize,
    data: Vec<f32>,
}

impl Kernel {
    pub fn zeros(
        kernel_height: usize,
        kernel_width: usize,
        c_in: usize,
        c_out: usize,
    ) -> Result<Kernel, ConvError> {
        Kernel::from_data(
            kernel_height,
            kernel_width,
            c_in,
            c_out,
            vec![0.0; kernel_height * kernel_width * c_in * c_out],
        )
    }

    pub fn from_data(
        kernel_height: usize,
        kernel_width: usize,
        c_in: usize,
        c_out: usize,
        data: Vec<f32>,
    ) -> Result<Kernel, ConvError> {
        if kernel_height == 0 || kernel_width == 0 || c_in == 0 || c_out == 0 {
            return Err(ConvError::ZeroDimension);
        }
        if kernel_height.is_multiple_of(2) || kernel_width.is_multiple_of(2) {
            return Err(ConvError::EvenKernel {
                kernel_height,
                kernel_width,
            });
        }
        let expected = kernel_height * kernel_width * c_in * c_out;
        if data.len() != expected {
            return Err(ConvError::InvalidDataLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Kernel {
            kernel_height,
            kernel_width,
            c_in,
            c_out,
            data,
        })
    }

    pub fn kernel_height(&self) -> usize {
        self.kernel_height
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, dy: usize, dx: usize, ci: usize, co: usize) -> f32 {
        self.data[((dy * self.kernel_width + dx) * self.c_in + ci) * self.c_out + co]
    }

    #[inline]
    pub fn set(&mut self, dy: usize, dx: usize, ci: usize, co: usize, value: f32) {
        self.data[((dy * self.kernel_width + dx) * self.c_in + ci) * self.c_out + co] = value;
    }
}

/// Out-of-range input handling for convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Zeros on all four sides.
    Zero,
    /// Columns wrap around the longitude seam; rows still pad with
    /// zeros.
    #[default]
    HorizontalWrap,
}

/// Padded input fetch shared by convolution and transform fitting, so
/// both see bit-identical values.
#[inline]
fn fetch_padded(x: &FeatureMap, row: i64, col: i64, channel: usize, padding: Padding) -> f64 {
    if row < 0 || row >= x.height as i64 {
        return 0.0;
    }
    let col = match padding {
        Padding::Zero => {
            if col < 0 || col >= x.width as i64 {
                return 0.0;
            }
            col as usize
        }
        Padding::HorizontalWrap => col.rem_euclid(x.width as i64) as usize,
    };
    x.data[((row as usize) * x.width + col) * x.channels + channel] as f64
}

/// Same-size cross-correlation of `rows` only, written to `out`
/// (`rows.len() * w * c_out`, row-major). `f64` accumulation per output
/// element, rounded once.
fn conv_rows(
    x: &FeatureMap,
    kernel: &Kernel,
    padding: Padding,
    rows: Range<usize>,
    out: &mut [f32],
) {
    let pad_h = (kernel.kernel_height / 2) as i64;
    let pad_w = (kernel.kernel_width / 2) as i64;
    let row_base = rows.start;
    for y in rows {
        for col in 0..x.width {
            for co in 0..kernel.c_out {
                let mut acc = 0.0f64;
                for dy in 0..kernel.kernel_height {
                    let sy = y as i64 + dy as i64 - pad_h;
                    for dx in 0..kernel.kernel_width {
                        let sx = col as i64 + dx as i64 - pad_w;
                        for ci in 0..kernel.c_in {
                            let w = kernel.get(dy, dx, ci, co) as f64;
                            acc += w * fetch_padded(x, sy, sx, ci, padding);
                        }
                    }
                }
                out[((y - row_base) * x.width + col) * kernel.c_out + co] = acc as f32;
            }
        }
    }
}

/// Same-size 2D cross-correlation.
pub fn conv2d(x: &FeatureMap, kernel: &Kernel, padding: Padding) -> Result<FeatureMap, ConvError> {
    if kernel.c_in != x.channels {
        return Err(ConvError::ShapeMismatch(format!(
            "kernel expects {} input channels, feature map has {}",
            kernel.c_in, x.channels
        )));
    }
    let mut out = FeatureMap::new(x.height, x.width, kernel.c_out);
    conv_rows(x, kernel, padding, 0..x.height, out.data.as_mut_slice());
    Ok(out)
}

/// Partition of the rows into equal groups with interleaved overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowGroupPlan {
    height: usize,
    group_rows: usize,
    interleave: usize,
}

impl RowGroupPlan {
    pub fn height(&self) -> usize {
        self.height
    }

    /// Rows per group (`n_g`).
    pub fn group_rows(&self) -> usize {
        self.group_rows
    }

    /// Overlap rows blended between consecutive groups (`n_l`).
    pub fn interleave(&self) -> usize {
        self.interleave
    }

    pub fn group_count(&self) -> usize {
        self.height / self.group_rows
    }

    /// Row range group `r` convolves: `n_g + n_l` rows, except the last
    /// group which stops at the bottom edge.
    pub fn range(&self, group: usize) -> Range<usize> {
        let start = group * self.group_rows;
        if group + 1 == self.group_count() {
            start..self.height
        } else {
            start..start + self.group_rows + self.interleave
        }
    }

    /// Rows owned by group `r` alone: its range minus rows blended with
    /// the previous and next groups' ranges.
    pub fn exclusive_range(&self, group: usize) -> Range<usize> {
        let start = if group == 0 {
            0
        } else {
            group * self.group_rows + self.interleave
        };
        let end = if group + 1 == self.group_count() {
            self.height
        } else {
            (group + 1) * self.group_rows
        };
        start..end
    }
}

/// Build a row-group plan: `group_rows` must divide `height`,
/// `interleave` must not exceed `group_rows` (ranges never span more
/// than two groups).
pub fn rowgroup_partition(
    height: usize,
    group_rows: usize,
    interleave: usize,
) -> Result<RowGroupPlan, ConvError> {
    if height == 0 {
        return Err(ConvError::ZeroDimension);
    }
    if group_rows == 0 || !height.is_multiple_of(group_rows) {
        return Err(ConvError::NonDivisor { group_rows, height });
    }
    if interleave > group_rows {
        return Err(ConvError::InvalidInterleave {
            interleave,
            group_rows,
        });
    }
    Ok(RowGroupPlan {
        height,
        group_rows,
        interleave,
    })
}

/// Per-group convolution with linear blending of the interleave rows.
///
/// Group `r`'s output covers its plan range; where consecutive ranges
/// overlap, row `t` of the overlap (counted from its top) mixes the next
/// group in with weight `(t + 1) / (n_l + 1)`, ramping from mostly-
/// previous to mostly-next. Identical kernels make every blend a no-op,
/// reducing to plain [`conv2d`] bit for bit.
pub fn interleaved_conv(
    x: &FeatureMap,
    kernels: &[Kernel],
    plan: &RowGroupPlan,
    padding: Padding,
) -> Result<FeatureMap, ConvError> {
    if plan.height != x.height {
        return Err(ConvError::ShapeMismatch(format!(
            "plan height {} vs feature map height {}",
            plan.height, x.height
        )));
    }
    if kernels.len() != plan.group_count() {
        return Err(ConvError::ShapeMismatch(format!(
            "{} kernels for {} groups",
            kernels.len(),
            plan.group_count()
        )));
    }
    let c_out = kernels[0].c_out;
    for kernel in kernels {
        if kernel.c_in != x.channels {
            return Err(ConvError::ShapeMismatch(format!(
                "kernel expects {} input channels, feature map has {}",
                kernel.c_in, x.channels
            )));
        }
        if kernel.c_out != c_out {
            return Err(ConvError::ShapeMismatch(format!(
                "kernel output channels differ: {} vs {c_out}",
                kernel.c_out
            )));
        }
    }
    let w = x.width;
    let row_len = w * c_out;
    let mut out = FeatureMap::new(x.height, w, c_out);
    let mut prev: Option<(Range<usize>, Vec<f32>)> = None;
    for (group, kernel) in kernels.iter().enumerate() {
        let range = plan.range(group);
        let mut buf = vec![0.0f32; range.len() * row_len];
        conv_rows(x, kernel, padding, range.clone(), &mut buf);
        if let Some((prev_range, prev_buf)) = &prev {
            // Overlap rows: range.start .. prev_range.end.
            for (t, row) in (range.start..prev_range.end).enumerate() {
                let wn = (t + 1) as f64 / (plan.interleave + 1) as f64;
                let p_off = (row - prev_range.start) * row_len;
                let n_off = (row - range.start) * row_len;
                let o_off = row * row_len;
                for k in 0..row_len {
                    let p = prev_buf[p_off + k] as f64;
                    let n = buf[n_off + k] as f64;
                    out.data[o_off + k] = (p + wn * (n - p)) as f32;
                }
            }
        }
        // Rows this group writes alone (the next group blends the tail).
        let solo = plan.exclusive_range(group);
        let src_off = (solo.start - range.start) * row_len;
        let len = solo.len() * row_len;
        out.data[solo.start * row_len..solo.start * row_len + len]
            .copy_from_slice(&buf[src_off..src_off + len]);
        prev = Some((range, buf));
    }
    Ok(out)
}

/// One group's kernel-space map: a `t x s` matrix taking a flattened
/// `source_h x source_w` kernel tap vector to a `target_h x target_w`
/// one, shared by every `(c_in, c_out)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    target_height: usize,
    target_width: usize,
    source_height: usize,
    source_width: usize,
    data: Vec<f32>,
}

impl ProjectionMatrix {
    pub fn from_data(
        target_height: usize,
        target_width: usize,
        source_height: usize,
        source_width: usize,
        data: Vec<f32>,
    ) -> Result<ProjectionMatrix, ConvError> {
        if target_height == 0 || target_width == 0 || source_height == 0 || source_width == 0 {
            return Err(ConvError::ZeroDimension);
        }
        if target_height.is_multiple_of(2) || target_width.is_multiple_of(2) {
            return Err(ConvError::EvenKernel {
                kernel_height: target_height,
                kernel_width: target_width,
            });
        }
        if source_height.is_multiple_of(2) || source_width.is_multiple_of(2) {
            return Err(ConvError::EvenKernel {
                kernel_height: source_height,
                kernel_width: source_width,
            });
        }
        let expected = target_height * target_width * source_height * source_width;
        if data.len() != expected {
            return Err(ConvError::InvalidDataLength {
                expected,
                found: data.len(),
            });
        }
        Ok(ProjectionMatrix {
            target_height,
            target_width,
            source_height,
            source_width,
            data,
        })
    }

    /// Identity map for a square kernel shape.
    pub fn identity(kernel_height: usize, kernel_width: usize) -> Result<ProjectionMatrix, ConvError> {
        let size = kernel_height * kernel_width;
        let mut data = vec![0.0f32; size * size];
        for i in 0..size {
            data[i * size + i] = 1.0;
        }
        ProjectionMatrix::from_data(kernel_height, kernel_width, kernel_height, kernel_width, data)
    }

    pub fn target_height(&self) -> usize {
        self.target_height
    }

    pub fn target_width(&self) -> usize {
        self.target_width
    }

    pub fn source_height(&self) -> usize {
        self.source_height
    }

    pub fn source_width(&self) -> usize {
        self.source_width
    }

    /// Flattened target size `t`.
    pub fn target_size(&self) -> usize {
        self.target_height * self.target_width
    }

    /// Flattened source size `s`.
    pub fn source_size(&self) -> usize {
        self.source_height * self.source_width
    }

    /// Row-major `t x s` entries.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, target_index: usize, source_index: usize) -> f32 {
        self.data[target_index * self.source_size() + source_index]
    }
}

/// One projection matrix per row group.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrixSet {
    pub groups: Vec<ProjectionMatrix>,
}

/// Map a shared source kernel through each group's projection matrix:
/// `kappa_r[q, ci, co] = sum_m P_r[q, m] * kernel[m, ci, co]`.
///
/// Linear in both arguments; accumulates in `f64`.
pub fn apply_projection(
    set: &ProjectionMatrixSet,
    kernel: &Kernel,
) -> Result<Vec<Kernel>, ConvError> {
    let mut kernels = Vec::with_capacity(set.groups.len());
    for projection in &set.groups {
        if projection.source_height != kernel.kernel_height
            || projection.source_width != kernel.kernel_width
        {
            return Err(ConvError::ShapeMismatch(format!(
                "projection source {}x{} vs kernel {}x{}",
                projection.source_height,
                projection.source_width,
                kernel.kernel_height,
                kernel.kernel_width
            )));
        }
        let (t_h, t_w) = (projection.target_height, projection.target_width);
        let mut out = Kernel::zeros(t_h, t_w, kernel.c_in, kernel.c_out)?;
        let s = projection.source_size();
        for q in 0..projection.target_size() {
            for ci in 0..kernel.c_in {
                for co in 0..kernel.c_out {
                    let mut acc = 0.0f64;
                    for m in 0..s {
                        let tap = kernel.data[(m * kernel.c_in + ci) * kernel.c_out + co] as f64;
                        acc += projection.get(q, m) as f64 * tap;
                    }
                    out.data[(q * kernel.c_in + ci) * kernel.c_out + co] = acc as f32;
                }
            }
        }
        kernels.push(out);
    }
    Ok(kernels)
}

/// Sum of squared differences over two equal-shaped feature maps.
pub fn layer_l2_loss(a: &FeatureMap, b: &FeatureMap) -> Result<f64, ConvError> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(ConvError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    Ok(a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum())
}

/// Mean over groups of the squared difference restricted to each
/// group's exclusive rows. A single-group plan reduces to
/// [`layer_l2_loss`].
pub fn rowgroup_loss(a: &FeatureMap, b: &FeatureMap, plan: &RowGroupPlan) -> Result<f64, ConvError> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(ConvError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    if plan.height != a.height {
        return Err(ConvError::ShapeMismatch(format!(
            "plan height {} vs feature map height {}",
            plan.height, a.height
        )));
    }
    let row_len = a.width * a.channels;
    let mut total = 0.0f64;
    for group in 0..plan.group_count() {
        let rows = plan.exclusive_range(group);
        let mut sse = 0.0f64;
        for k in rows.start * row_len..rows.end * row_len {
            let d = a.data[k] as f64 - b.data[k] as f64;
            sse += d * d;
        }
        total += sse;
    }
    Ok(total / plan.group_count() as f64)
}
