//! RGB image buffer, PPM (P6) codec, and model-input preprocessing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util;

/// ImageNet channel statistics used to normalize model inputs.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

pub const INPUT_SIDE: usize = 224;

/// Interleaved RGB, f64 in [0,1] (8-bit at the file boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("image dimensions must be positive"));
        }
        Ok(Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut img = Image::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    img.set(x, y, c, f(x, y, c));
                }
            }
        }
        Ok(img)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    /// Rec.601 luma of one pixel.
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        0.299 * self.get(x, y, 0) + 0.587 * self.get(x, y, 1) + 0.114 * self.get(x, y, 2)
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Bilinear sample with black fill outside the image.
    pub fn sample_bilinear_or_black(&self, x: f64, y: f64) -> [f64; 3] {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if x < 0.0 || y < 0.0 || x > max_x || y > max_y {
            return [0.0; 3];
        }
        self.sample_bilinear_clamped(x, y)
    }

    /// Bilinear sample, coordinates clamped into the image.
    pub fn sample_bilinear_clamped(&self, x: f64, y: f64) -> [f64; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        out
    }
}

/// Bilinear resize (pixel-center convention). Identical dimensions return a
/// bit-exact copy.
pub fn resize_bilinear(img: &Image, new_w: usize, new_h: usize) -> Result<Image> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::dim("resize target must be positive"));
    }
    if new_w == img.width && new_h == img.height {
        return Ok(img.clone());
    }
    let mut out = Image::new(new_w, new_h)?;
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    for y in 0..new_h {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..new_w {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let px = img.sample_bilinear_clamped(src_x, src_y);
            for c in 0..3 {
                out.set(x, y, c, px[c]);
            }
        }
    }
    Ok(out)
}

pub fn center_crop(img: &Image, crop_w: usize, crop_h: usize) -> Result<Image> {
    if crop_w > img.width || crop_h > img.height {
        return Err(Error::dim(format!(
            "crop {crop_w}x{crop_h} larger than image {}x{}",
            img.width, img.height
        )));
    }
    let ox = (img.width - crop_w) / 2;
    let oy = (img.height - crop_h) / 2;
    let mut out = Image::new(crop_w, crop_h)?;
    for y in 0..crop_h {
        for x in 0..crop_w {
            for c in 0..3 {
                out.set(x, y, c, img.get(x + ox, y + oy, c));
            }
        }
    }
    Ok(out)
}

/// Resize shorter side to 224, center-crop 224x224, normalize with ImageNet
/// channel statistics. Returns a `[224, 224, 3]` tensor.
pub fn preprocess(img: &Image) -> Result<Tensor> {
    if img.width < 2 || img.height < 2 {
        return Err(Error::dim(format!(
            "image {}x{} too small to preprocess",
            img.width, img.height
        )));
    }
    let (new_w, new_h) = if img.width <= img.height {
        let scale = INPUT_SIDE as f64 / img.width as f64;
        (INPUT_SIDE, (img.height as f64 * scale).round() as usize)
    } else {
        let scale = INPUT_SIDE as f64 / img.height as f64;
        ((img.width as f64 * scale).round() as usize, INPUT_SIDE)
    };
    let resized = resize_bilinear(img, new_w.max(INPUT_SIDE), new_h.max(INPUT_SIDE))?;
    let cropped = center_crop(&resized, INPUT_SIDE, INPUT_SIDE)?;
    let mut data = Vec::with_capacity(INPUT_SIDE * INPUT_SIDE * 3);
    for y in 0..INPUT_SIDE {
        for x in 0..INPUT_SIDE {
            for c in 0..3 {
                data.push((cropped.get(x, y, c) - IMAGENET_MEAN[c]) / IMAGENET_STD[c]);
            }
        }
    }
    Tensor::new(vec![INPUT_SIDE, INPUT_SIDE, 3], data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.data.iter().map(|&v| quantize(v)));
    util::atomic_write(path, &bytes)
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    /// Next whitespace-separated token, skipping `#` comments.
    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, "unexpected end of PPM header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(start as u64, "bad number in PPM header"))
    }
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = util::read_bytes(path)?;
    let mut cur = PpmCursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.token()?;
    if magic != b"P6" {
        return Err(Error::format(0, "not a binary PPM (P6) file"));
    }
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(Error::format(
            cur.pos as u64,
            format!("unsupported maxval {maxval}, expected 255"),
        ));
    }
    // Exactly one whitespace byte separates the header from the payload.
    let payload_start = cur.pos + 1;
    let expected = width * height * 3;
    if bytes.len() < payload_start + expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "PPM payload truncated: want {expected} bytes, have {}",
                bytes.len().saturating_sub(payload_start)
            ),
        ));
    }
    let mut img = Image::new(width, height)?;
    for (v, &b) in img.data.iter_mut().zip(&bytes[payload_start..payload_start + expected]) {
        *v = f64::from(b) / 255.0;
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let img = Image::from_fn(5, 3, |x, y, c| ((x + y * 5) * 3 + c) as f64 / 255.0).unwrap();
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.width, 5);
        assert_eq!(back.height, 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ppm_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        std::fs::write(&path, b"P5\n2 2\n255\n0000").unwrap();
        assert!(read_ppm(&path).is_err());
    }

    #[test]
    fn preprocess_cancels_mean_on_uniform_image() {
        let img = Image::from_fn(32, 32, |_, _, c| IMAGENET_MEAN[c]).unwrap();
        let t = preprocess(&img).unwrap();
        for v in t.data() {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn preprocess_identity_crop_at_224() {
        let img = Image::from_fn(224, 224, |x, _, _| x as f64 / 223.0).unwrap();
        let t = preprocess(&img).unwrap();
        // pixel (0,0,0): (0 - mean)/std
        let expect = (0.0 - IMAGENET_MEAN[0]) / IMAGENET_STD[0];
        assert!((t.data()[0] - expect).abs() < 1e-12);
        assert_eq!(t.shape(), &[224, 224, 3]);
    }

    #[test]
    fn wide_image_keeps_center_columns() {
        // 448x224: no resampling, crop keeps columns 112..336.
        let img = Image::from_fn(448, 224, |x, _, _| if (112..336).contains(&x) { 1.0 } else { 0.0 })
            .unwrap();
        let t = preprocess(&img).unwrap();
        let expect = (1.0 - IMAGENET_MEAN[0]) / IMAGENET_STD[0];
        for y in [0usize, 100, 223] {
            for x in [0usize, 223] {
                let v = t.data()[(y * 224 + x) * 3];
                assert!((v - expect).abs() < 1e-9, "pixel ({x},{y}) = {v}");
            }
        }
    }

    #[test]
    fn preprocess_rejects_tiny_images() {
        let img = Image::new(1, 5).unwrap();
        assert!(preprocess(&img).is_err());
    }
}
