//! Image tensors and the per-image operations of the data path.

use std::path::Path;

use image::{ImageBuffer, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};

/// One image as `channels x height x width` values in `[0, 1]`, row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::arg(format!(
                "image data has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invariant(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        let value = value.clamp(0.0, 1.0);
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds an image from a function of `(channel, row, col)`, clamping into `[0, 1]`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
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

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Loads a PNG (or JPEG) as an RGB tensor. Alpha is composited over white.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::ImageFormat {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let rgba = decoded.to_rgba32f();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in rgba.enumerate_pixels() {
        let a = px[3].clamp(0.0, 1.0);
        for c in 0..3 {
            let v = px[c].clamp(0.0, 1.0);
            let out = if a == 1.0 { v } else { v * a + (1.0 - a) };
            data[(c * h + y as usize) * w + x as usize] = out.clamp(0.0, 1.0);
        }
    }
    ImageTensor::new(3, h, w, data)
}

/// Writes a 1- or 3-channel tensor as an 8-bit PNG.
pub fn save_png(img: &ImageTensor, path: &Path) -> Result<()> {
    let (h, w) = (img.height as u32, img.width as u32);
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let result = match img.channels {
        1 => ImageBuffer::<Luma<u8>, _>::from_fn(w, h, |x, y| Luma([q(img.get(0, y as usize, x as usize))]))
            .save_with_format(path, image::ImageFormat::Png),
        3 => ImageBuffer::<Rgb<u8>, _>::from_fn(w, h, |x, y| {
            let (y, x) = (y as usize, x as usize);
            Rgb([q(img.get(0, y, x)), q(img.get(1, y, x)), q(img.get(2, y, x))])
        })
        .save_with_format(path, image::ImageFormat::Png),
        c => return Err(Error::arg(format!("cannot save {c}-channel image as PNG"))),
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::ImageFormat {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Bilinear resize using the pixel-center convention
/// (`src = (dst + 0.5) * in / out - 0.5`, clamped to the valid range).
pub fn resize(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::arg(format!("resize target {out_h}x{out_w} is empty")));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(out_h, img.height);
    let xs = taps(out_w, img.width);
    let mut data = Vec::with_capacity(img.channels * out_h * out_w);
    for c in 0..img.channels {
        let p = img.plane(c);
        let at = |y: usize, x: usize| p[y * img.width + x] as f64;
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                data.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageTensor::new(img.channels, out_h, out_w, data)
}

/// Luma conversion followed by a 3x3 Sobel gradient magnitude with replicate
/// padding, normalized by the global maximum. Single-channel output.
pub fn to_edge(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels != 3 {
        return Err(Error::arg(format!(
            "edge extraction needs an RGB image, got {} channels",
            img.channels
        )));
    }
    let (h, w) = (img.height, img.width);
    let luma: Vec<f64> = (0..h * w)
        .map(|i| {
            0.299 * img.data[i] as f64
                + 0.587 * img.data[h * w + i] as f64
                + 0.114 * img.data[2 * h * w + i] as f64
        })
        .collect();
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        luma[y * w + x]
    };
    let mut mag = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            mag.push((gx * gx + gy * gy).sqrt());
        }
    }
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let data = if max > 0.0 {
        mag.iter().map(|m| (m / max).clamp(0.0, 1.0) as f32).collect()
    } else {
        vec![0.0; h * w]
    };
    ImageTensor::new(1, h, w, data)
}
