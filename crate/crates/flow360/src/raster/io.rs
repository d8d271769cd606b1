//! Flow and image file I/O.
//!
//! Flow fields use the Middlebury `.flo` layout: a 4-byte float magic,
//! 32-bit width and height, then row-major interleaved `(u, v)` pairs,
//! everything little-endian. Images round-trip through binary netpbm
//! (P6 for RGB, P5 for grayscale, 8-bit) or PNG.

use std::fs;
use std::path::Path;

use super::{FlowField, Image, RasterError};

const FLO_MAGIC: f32 = 202021.25;
const FLO_HEADER_LEN: usize = 12;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Read a Middlebury `.flo` flow field.
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, RasterError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < FLO_HEADER_LEN {
        return Err(RasterError::Truncated {
            path: path_str(path),
            expected: FLO_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(RasterError::BadMagic {
            path: path_str(path),
            expected: "202021.25",
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(RasterError::MalformedHeader {
            path: path_str(path),
            reason: format!("non-positive dimensions {width}x{height}"),
        });
    }
    let (width, height) = (width as usize, height as usize);
    let expected = FLO_HEADER_LEN + width * height * 2 * 4;
    if bytes.len() < expected {
        return Err(RasterError::Truncated {
            path: path_str(path),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(RasterError::MalformedHeader {
            path: path_str(path),
            reason: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let mut data = Vec::with_capacity(width * height * 2);
    for (index, chunk) in bytes[FLO_HEADER_LEN..].chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().unwrap());
        if !value.is_finite() {
            return Err(RasterError::NonFinite {
                path: path_str(path),
                index,
            });
        }
        data.push(value);
    }
    FlowField::from_data(height, width, data)
}

/// Write a Middlebury `.flo` flow field.
pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let mut bytes = Vec::with_capacity(FLO_HEADER_LEN + flow.data().len() * 4);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    bytes.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for value in flow.data() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path.as_ref(), bytes)?;
    Ok(())
}

/// Read an image; the format is sniffed from the file's magic bytes
/// (netpbm P5/P6 or PNG).
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, RasterError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    match bytes.first() {
        Some(b'P') if bytes.get(1) == Some(&b'5') || bytes.get(1) == Some(&b'6') => {
            read_pnm(&bytes, path)
        }
        Some(0x89) if bytes.get(1..4) == Some(b"PNG") => read_png(&bytes, path),
        _ => Err(RasterError::UnsupportedFormat {
            path: path_str(path),
            reason: "unrecognized magic bytes".into(),
        }),
    }
}

/// Write an image; the format follows the file extension (`.ppm`/`.pgm`
/// for binary netpbm, `.png` for PNG).
pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("ppm") | Some("pgm") => write_pnm(img, path),
        Some("png") => write_png(img, path),
        other => Err(RasterError::UnsupportedFormat {
            path: path_str(path),
            reason: format!("unknown extension {other:?}"),
        }),
    }
}

/// 8-bit quantization used by every image writer.
fn to_byte(value: f32) -> u8 {
    (value.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct PnmHeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmHeaderParser<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        let token = self.token()?;
        std::str::from_utf8(token).ok()?.parse().ok()
    }
}

fn read_pnm(bytes: &[u8], path: &Path) -> Result<Image, RasterError> {
    let malformed = |reason: &str| RasterError::MalformedHeader {
        path: path_str(path),
        reason: reason.into(),
    };
    let mut parser = PnmHeaderParser { bytes, pos: 0 };
    let magic = parser.token().ok_or_else(|| malformed("missing magic"))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(malformed("expected P5 or P6")),
    };
    let width = parser.number().ok_or_else(|| malformed("missing width"))?;
    let height = parser.number().ok_or_else(|| malformed("missing height"))?;
    let maxval = parser.number().ok_or_else(|| malformed("missing maxval"))?;
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroDimension);
    }
    if maxval == 0 || maxval > 255 {
        return Err(malformed("maxval must be in 1..=255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    let payload_start = parser.pos + 1;
    let expected = payload_start + width * height * channels;
    if bytes.len() < expected {
        return Err(RasterError::Truncated {
            path: path_str(path),
            expected,
            found: bytes.len(),
        });
    }
    let maxval = maxval as f32;
    let data = bytes[payload_start..expected]
        .iter()
        .map(|&b| b as f32 / maxval)
        .collect();
    Image::from_data(height, width, channels, data)
}

fn write_pnm(img: &Image, path: &Path) -> Result<(), RasterError> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let mut bytes = Vec::with_capacity(header.len() + img.data().len());
    bytes.extend_from_slice(header.as_bytes());
    bytes.extend(img.data().iter().map(|&v| to_byte(v)));
    fs::write(path, bytes)?;
    Ok(())
}

fn read_png(bytes: &[u8], path: &Path) -> Result<Image, RasterError> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(
        |err| RasterError::UnsupportedFormat {
            path: path_str(path),
            reason: err.to_string(),
        },
    )?;
    let grayscale = matches!(
        decoded.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16
    );
    if grayscale {
        let gray = decoded.into_luma8();
        let (w, h) = gray.dimensions();
        let data = gray.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Image::from_data(h as usize, w as usize, 1, data)
    } else {
        let rgb = decoded.into_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Image::from_data(h as usize, w as usize, 3, data)
    }
}

fn write_png(img: &Image, path: &Path) -> Result<(), RasterError> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_byte(v)).collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let save = |err: image::ImageError| RasterError::UnsupportedFormat {
        path: path_str(path),
        reason: err.to_string(),
    };
    if img.channels() == 1 {
        let buf = image::GrayImage::from_raw(w, h, bytes).expect("sized buffer");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(save)?;
    } else {
        let buf = image::RgbImage::from_raw(w, h, bytes).expect("sized buffer");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(save)?;
    }
    Ok(())
}
