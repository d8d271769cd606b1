//! Raster containers, resampling, and flow/image file formats.
//!
//! Continuous sample coordinates are index-space: pixel `(row i, col j)`
//! sits at `(x, y) = (j, i)`, so integer coordinates hit pixel centers and
//! sampling there returns the stored value exactly.

mod colorize;
mod io;

pub use colorize::flow_to_color;
pub use io::{read_flo, read_image, write_flo, write_image};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
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
    #[error("unsupported format for {path}: {reason}")]
    UnsupportedFormat { path: String, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero-sized raster dimension")]
    ZeroDimension,
    #[error("unsupported channel count {0}, expected 1 or 3")]
    InvalidChannels(usize),
    #[error("data length {found} does not match {height}x{width}x{channels}")]
    InvalidDataLength {
        height: usize,
        width: usize,
        channels: usize,
        found: usize,
    },
}

/// How sampling resolves coordinates past the horizontal edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalEdge {
    /// Columns wrap modulo the width (longitude seam).
    Wrap,
    /// Columns clamp to the nearest valid column.
    Clamp,
}

/// How sampling resolves coordinates past the top or bottom edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalEdge {
    /// Rows reflect back into range and the column shifts by half the
    /// width: walking over a pole continues down the far side of the
    /// sphere.
    PoleReflect,
    /// Rows clamp to the nearest valid row.
    Clamp,
}

/// Edge handling for one sampling operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgePolicy {
    pub horizontal: HorizontalEdge,
    pub vertical: VerticalEdge,
}

impl EdgePolicy {
    /// Spherical policy: wrap columns, reflect rows across the poles.
    pub const SPHERE: EdgePolicy = EdgePolicy {
        horizontal: HorizontalEdge::Wrap,
        vertical: VerticalEdge::PoleReflect,
    };

    /// Planar policy: clamp both axes.
    pub const CLAMP: EdgePolicy = EdgePolicy {
        horizontal: HorizontalEdge::Clamp,
        vertical: VerticalEdge::Clamp,
    };
}

/// Resolve integer neighbour indices under an edge policy.
///
/// Total: every `(row, col)` maps to a valid index pair. Pole reflection
/// folds the row with period `2 * height` and shifts the column by half
/// the width.
pub(crate) fn resolve_index(
    row: i64,
    col: i64,
    height: usize,
    width: usize,
    policy: EdgePolicy,
) -> (usize, usize) {
    let h = height as i64;
    let w = width as i64;
    let mut r = row;
    let mut c = col;
    match policy.vertical {
        VerticalEdge::Clamp => r = r.clamp(0, h - 1),
        VerticalEdge::PoleReflect => {
            let folded = r.rem_euclid(2 * h);
            if folded < h {
                r = folded;
            } else {
                r = 2 * h - 1 - folded;
                c += w / 2;
            }
        }
    }
    c = match policy.horizontal {
        HorizontalEdge::Wrap => c.rem_euclid(w),
        HorizontalEdge::Clamp => c.clamp(0, w - 1),
    };
    (r as usize, c as usize)
}

/// Bilinear sample of one interleaved channel plane.
///
/// Accumulates in `f64` and rounds once to `f32`; integer coordinates
/// return the stored value exactly.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sample_plane(
    data: &[f32],
    height: usize,
    width: usize,
    stride: usize,
    offset: usize,
    x: f64,
    y: f64,
    policy: EdgePolicy,
) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = x - x0;
    let wy = y - y0;
    let xi = x0 as i64;
    let yi = y0 as i64;
    let fetch = |r: i64, c: i64| -> f64 {
        let (ri, ci) = resolve_index(r, c, height, width, policy);
        data[(ri * width + ci) * stride + offset] as f64
    };
    let top = {
        let a = fetch(yi, xi);
        let b = fetch(yi, xi + 1);
        a + wx * (b - a)
    };
    let bottom = {
        let a = fetch(yi + 1, xi);
        let b = fetch(yi + 1, xi + 1);
        a + wx * (b - a)
    };
    (top + wy * (bottom - top)) as f32
}

/// Nearest-neighbour source index for `resize_nearest`: the source pixel
/// whose center is nearest the back-projected output center, ties toward
/// the smaller index.
fn nearest_src(out_index: usize, out_len: usize, src_len: usize) -> usize {
    let pos = (out_index as f64 + 0.5) * src_len as f64 / out_len as f64;
    (pos.floor() as usize).min(src_len - 1)
}

/// Dense `f32` image, row-major with interleaved channels (1 or 3).
///
/// Values are in `[0, 1]` after any load or warp operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// All-zero image.
    ///
    /// # Panics
    /// If a dimension is zero or `channels` is not 1 or 3.
    pub fn new(height: usize, width: usize, channels: usize) -> Image {
        assert!(height > 0 && width > 0, "zero-sized image");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Wrap existing interleaved data.
    pub fn from_data(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Image, RasterError> {
        if height == 0 || width == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::InvalidChannels(channels));
        }
        if data.len() != height * width * channels {
            return Err(RasterError::InvalidDataLength {
                height,
                width,
                channels,
                found: data.len(),
            });
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
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

    /// Bilinear sample of one channel at index-space `(x, y)`.
    pub fn bilinear_sample_channel(&self, channel: usize, x: f64, y: f64, policy: EdgePolicy) -> f32 {
        sample_plane(
            &self.data,
            self.height,
            self.width,
            self.channels,
            channel,
            x,
            y,
            policy,
        )
    }

    /// Bilinear sample of all channels at index-space `(x, y)`.
    ///
    /// Entries past `channels()` are zero.
    pub fn bilinear_sample(&self, x: f64, y: f64, policy: EdgePolicy) -> [f32; 3] {
        let mut out = [0.0f32; 3];
        for (c, slot) in out.iter_mut().enumerate().take(self.channels) {
            *slot = self.bilinear_sample_channel(c, x, y, policy);
        }
        out
    }

    /// Nearest-neighbour resize. Identity when the size is unchanged.
    pub fn resize_nearest(&self, out_height: usize, out_width: usize) -> Result<Image, RasterError> {
        if out_height == 0 || out_width == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if out_height == self.height && out_width == self.width {
            return Ok(self.clone());
        }
        let mut out = Image::new(out_height, out_width, self.channels);
        for i in 0..out_height {
            let si = nearest_src(i, out_height, self.height);
            for j in 0..out_width {
                let sj = nearest_src(j, out_width, self.width);
                for c in 0..self.channels {
                    out.set(i, j, c, self.get(si, sj, c));
                }
            }
        }
        Ok(out)
    }
}

/// Dense per-pixel `(u, v)` flow field in pixel units (Middlebury
/// convention: `u` rightward, `v` downward).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FlowField {
    /// All-zero flow.
    ///
    /// # Panics
    /// If a dimension is zero.
    pub fn new(height: usize, width: usize) -> FlowField {
        assert!(height > 0 && width > 0, "zero-sized flow field");
        FlowField {
            height,
            width,
            data: vec![0.0; height * width * 2],
        }
    }

    /// Wrap existing interleaved `(u, v)` data.
    pub fn from_data(height: usize, width: usize, data: Vec<f32>) -> Result<FlowField, RasterError> {
        if height == 0 || width == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if data.len() != height * width * 2 {
            return Err(RasterError::InvalidDataLength {
                height,
                width,
                channels: 2,
                found: data.len(),
            });
        }
        Ok(FlowField {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (f32, f32) {
        let base = (row * self.width + col) * 2;
        (self.data[base], self.data[base + 1])
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, u: f32, v: f32) {
        let base = (row * self.width + col) * 2;
        self.data[base] = u;
        self.data[base + 1] = v;
    }

    /// Bilinear sample of `(u, v)` at index-space `(x, y)`.
    pub fn bilinear_sample(&self, x: f64, y: f64, policy: EdgePolicy) -> (f32, f32) {
        let u = sample_plane(&self.data, self.height, self.width, 2, 0, x, y, policy);
        let v = sample_plane(&self.data, self.height, self.width, 2, 1, x, y, policy);
        (u, v)
    }

    /// Nearest-neighbour resize; displacement components are rescaled by
    /// the per-axis size ratio so displacements keep their geometric
    /// meaning at the new resolution.
    pub fn resize_nearest(
        &self,
        out_height: usize,
        out_width: usize,
    ) -> Result<FlowField, RasterError> {
        if out_height == 0 || out_width == 0 {
            return Err(RasterError::ZeroDimension);
        }
        let su = out_width as f64 / self.width as f64;
        let sv = out_height as f64 / self.height as f64;
        let mut out = FlowField::new(out_height, out_width);
        for i in 0..out_height {
            let si = nearest_src(i, out_height, self.height);
            for j in 0..out_width {
                let sj = nearest_src(j, out_width, self.width);
                let (u, v) = self.get(si, sj);
                out.set(i, j, (u as f64 * su) as f32, (v as f64 * sv) as f32);
            }
        }
        Ok(out)
    }
}
