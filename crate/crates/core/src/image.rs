//! Image representation and preprocessing: binary PGM/PPM decode, bilinear
//! resize, axis flips and the small/elongated-image quality filter.

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// H x W x C grid of values in [0, 1], row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<F> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    values: Vec<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

impl<F: Real> ImageTensor<F> {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<F>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(CoreError::InvalidInput(
                "image dimensions must be positive".into(),
            ));
        }
        if values.len() != height * width * channels {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} values for {height}x{width}x{channels}", height * width * channels),
                found: format!("{}", values.len()),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidInput("image contains non-finite values".into()));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, v: F) -> Self {
        ImageTensor {
            height,
            width,
            channels,
            values: vec![v; height * width * channels],
        }
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> F {
        self.values[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: F) {
        self.values[(y * self.width + x) * self.channels + c] = v;
    }

    /// Channel-mean grayscale; identity copy for single-channel images.
    pub fn to_grayscale(&self) -> ImageTensor<F> {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = F::one() / F::from_count(self.channels);
        let mut values = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = F::zero();
                for c in 0..self.channels {
                    acc += self.at(y, x, c);
                }
                values.push(acc * inv);
            }
        }
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: 1,
            values,
        }
    }
}

/// Decode a binary PGM (P5) or PPM (P6) file with maxval 255.
/// Values are scaled to [0, 1] by division by 255.
pub fn decode_image<F: Real>(bytes: &[u8]) -> Result<ImageTensor<F>> {
    let mut pos = 0usize;
    let magic = read_header_token(bytes, &mut pos)
        .ok_or_else(|| CoreError::ImageDecode("missing magic number".into()))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(CoreError::ImageDecode(format!(
                "unsupported magic `{other}` (want binary P5 or P6)"
            )))
        }
    };
    let width = read_header_usize(bytes, &mut pos, "width")?;
    let height = read_header_usize(bytes, &mut pos, "height")?;
    let maxval = read_header_usize(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(CoreError::ImageDecode(format!(
            "unsupported maxval {maxval} (want 255)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(CoreError::ImageDecode("zero image dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(CoreError::ImageDecode("missing payload separator".into()));
    }
    pos += 1;
    let need = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(CoreError::ImageDecode(format!(
            "payload holds {} bytes, header promises {need}",
            payload.len()
        )));
    }
    let scale = F::of(1.0 / 255.0);
    let values: Vec<F> = payload[..need]
        .iter()
        .map(|&b| F::of(b as f64) * scale)
        .collect();
    ImageTensor::new(height, width, channels, values)
}

/// Encode as binary PGM (1 channel) or PPM (3 channels), maxval 255.
pub fn encode_image<F: Real>(img: &ImageTensor<F>) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(CoreError::InvalidInput(format!(
                "cannot encode {c}-channel image as PGM/PPM"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.values().iter().map(|&v| {
        let x = v.as_f64().clamp(0.0, 1.0);
        (x * 255.0).round() as u8
    }));
    Ok(out)
}

fn read_header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    // Skip whitespace and `#` comment lines.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn read_header_usize(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = read_header_token(bytes, pos)
        .ok_or_else(|| CoreError::ImageDecode(format!("missing {what}")))?;
    tok.parse::<usize>()
        .map_err(|_| CoreError::ImageDecode(format!("bad {what} `{tok}`")))
}

/// Bilinear resize with pixel-center alignment: output pixel centers map to
/// input coordinates (i + 0.5) * scale - 0.5, clamped to the image.
pub fn resize_bilinear<F: Real>(img: &ImageTensor<F>, out_h: usize, out_w: usize) -> ImageTensor<F> {
    assert!(out_h >= 1 && out_w >= 1, "output dimensions must be >= 1");
    let sy = img.height as f64 / out_h as f64;
    let sx = img.width as f64 / out_w as f64;
    let mut out = ImageTensor::constant(out_h, out_w, img.channels, F::zero());
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = F::of(fy - y0 as f64);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = F::of(fx - x0 as f64);
            for c in 0..img.channels {
                let top = img.at(y0, x0, c) * (F::one() - wx) + img.at(y0, x1, c) * wx;
                let bot = img.at(y1, x0, c) * (F::one() - wx) + img.at(y1, x1, c) * wx;
                out.set(oy, ox, c, top * (F::one() - wy) + bot * wy);
            }
        }
    }
    out
}

/// Mirror along the named axis.
pub fn flip<F: Real>(img: &ImageTensor<F>, axis: FlipAxis) -> ImageTensor<F> {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let (sy, sx) = match axis {
                FlipAxis::Horizontal => (y, img.width - 1 - x),
                FlipAxis::Vertical => (img.height - 1 - y, x),
            };
            for c in 0..img.channels {
                out.set(y, x, c, img.at(sy, sx, c));
            }
        }
    }
    out
}

/// Quality filter: rejects images with a side below `min_side` or an aspect
/// ratio (long/short) above `max_aspect`.
pub fn passes_size_filter<F: Real>(img: &ImageTensor<F>, min_side: usize, max_aspect: f64) -> bool {
    let short = img.height.min(img.width);
    let long = img.height.max(img.width);
    short >= min_side && (long as f64) <= max_aspect * (short as f64)
}
