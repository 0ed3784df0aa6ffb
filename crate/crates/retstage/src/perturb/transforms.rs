//! Geometric and photometric perturbations.

use crate::error::{Error, Result};
use crate::perturb::image::Image;

/// Rotate about the image center, bilinear interpolation, black fill.
/// Output dimensions equal input dimensions. Zero degrees is bit-identity.
pub fn rotate(img: &Image, angle_deg: f64) -> Result<Image> {
    if angle_deg.abs() > 180.0 {
        return Err(Error::config(format!(
            "rotation angle {angle_deg} outside [-180, 180]"
        )));
    }
    let theta = angle_deg.to_radians();
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let cx = (img.width - 1) as f64 / 2.0;
    let cy = (img.height - 1) as f64 / 2.0;
    let mut out = Image::new(img.width, img.height)?;
    for y in 0..img.height {
        let dy = y as f64 - cy;
        for x in 0..img.width {
            let dx = x as f64 - cx;
            // inverse map: rotate the destination offset by -theta
            let src_x = cx + dx * cos_t + dy * sin_t;
            let src_y = cy - dx * sin_t + dy * cos_t;
            let px = img.sample_bilinear_or_black(src_x, src_y);
            for c in 0..3 {
                out.set(x, y, c, px[c]);
            }
        }
    }
    Ok(out)
}

/// Normalized 1-D Gaussian taps for an odd kernel.
pub fn gaussian_kernel(kernel: usize, sigma: f64) -> Result<Vec<f64>> {
    if kernel % 2 == 0 || kernel == 0 {
        return Err(Error::config(format!("blur kernel must be odd, got {kernel}")));
    }
    if sigma <= 0.0 {
        return Err(Error::config(format!("blur sigma must be positive, got {sigma}")));
    }
    let radius = (kernel / 2) as isize;
    let mut taps = Vec::with_capacity(kernel);
    for i in -radius..=radius {
        taps.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Separable Gaussian blur, clamp-to-edge boundary handling.
pub fn gaussian_blur(img: &Image, kernel: usize, sigma: f64) -> Result<Image> {
    let taps = gaussian_kernel(kernel, sigma)?;
    let radius = (kernel / 2) as isize;
    let w = img.width as isize;
    let h = img.height as isize;

    let mut horizontal = Image::new(img.width, img.height)?;
    for y in 0..img.height {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, tap) in taps.iter().enumerate() {
                let sx = (x + k as isize - radius).clamp(0, w - 1) as usize;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += tap * img.get(sx, y, c);
                }
            }
            for c in 0..3 {
                horizontal.set(x as usize, y, c, acc[c]);
            }
        }
    }

    let mut out = Image::new(img.width, img.height)?;
    for y in 0..h {
        for x in 0..img.width {
            let mut acc = [0.0; 3];
            for (k, tap) in taps.iter().enumerate() {
                let sy = (y + k as isize - radius).clamp(0, h - 1) as usize;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += tap * horizontal.get(x, sy, c);
                }
            }
            for c in 0..3 {
                out.set(x, y as usize, c, acc[c]);
            }
        }
    }
    Ok(out)
}

/// Brightness, contrast, saturation in that order, each followed by a clamp
/// to [0,1]. Factors of 1.0 are identity.
pub fn color_jitter(img: &Image, brightness: f64, contrast: f64, saturation: f64) -> Image {
    let mut out = img.clone();

    if brightness != 1.0 {
        out.data_mut().iter_mut().for_each(|v| *v *= brightness);
        out.clamp_unit();
    }

    if contrast != 1.0 {
        let mut mean_gray = 0.0;
        for y in 0..out.height {
            for x in 0..out.width {
                mean_gray += out.luma(x, y);
            }
        }
        mean_gray /= (out.width * out.height) as f64;
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = mean_gray + (*v - mean_gray) * contrast);
        out.clamp_unit();
    }

    if saturation != 1.0 {
        for y in 0..out.height {
            for x in 0..out.width {
                let l = out.luma(x, y);
                for c in 0..3 {
                    let v = l + (out.get(x, y, c) - l) * saturation;
                    out.set(x, y, c, v);
                }
            }
        }
        out.clamp_unit();
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::image::Image;

    fn blob(width: usize, height: usize) -> Image {
        // Smooth dim blob: near-zero borders so rotation fill costs little.
        let cx = (width - 1) as f64 / 2.0;
        let cy = (height - 1) as f64 / 2.0;
        let sigma = width as f64 / 6.0;
        Image::from_fn(width, height, |x, y, c| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            0.8 * (-d2 / (2.0 * sigma * sigma)).exp() * (1.0 - 0.1 * c as f64)
        })
        .unwrap()
    }

    #[test]
    fn zero_rotation_is_bit_identity() {
        let img = blob(33, 27);
        let rotated = rotate(&img, 0.0).unwrap();
        assert_eq!(img, rotated);
    }

    #[test]
    fn rotation_round_trip_close_on_smooth_image() {
        let img = blob(65, 65);
        let back = rotate(&rotate(&img, 30.0).unwrap(), -30.0).unwrap();
        let mad: f64 = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / img.data().len() as f64;
        assert!(mad < 0.05, "mean abs diff {mad}");
    }

    #[test]
    fn rotation_fixes_center_pixel() {
        let mut img = Image::new(33, 33).unwrap();
        img.set(16, 16, 0, 1.0);
        img.set(16, 16, 1, 1.0);
        img.set(16, 16, 2, 1.0);
        for angle in [13.0, 45.0, -90.0, 178.0] {
            let r = rotate(&img, angle).unwrap();
            for c in 0..3 {
                assert!((r.get(16, 16, c) - 1.0).abs() < 1e-9, "angle {angle}");
            }
        }
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = Image::from_fn(16, 16, |_, _, _| 0.4).unwrap();
        let blurred = gaussian_blur(&img, 5, 1.3).unwrap();
        for (a, b) in img.data().iter().zip(blurred.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_impulse_gives_kernel_outer_product() {
        let mut img = Image::new(15, 15).unwrap();
        img.set(7, 7, 0, 1.0);
        let sigma = 0.9;
        let blurred = gaussian_blur(&img, 5, sigma).unwrap();
        let taps = gaussian_kernel(5, sigma).unwrap();
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let expect = taps[(dx + 2) as usize] * taps[(dy + 2) as usize];
                let got = blurred.get((7 + dx) as usize, (7 + dy) as usize, 0);
                assert!((got - expect).abs() < 1e-12, "({dx},{dy}): {got} vs {expect}");
            }
        }
        // all mass within the 5x5 window
        assert!(blurred.get(7, 3, 0) == 0.0 && blurred.get(3, 7, 0) == 0.0);
    }

    #[test]
    fn blur_never_increases_variance() {
        let img = blob(21, 21);
        let var = |im: &Image| {
            let mean: f64 = im.data().iter().sum::<f64>() / im.data().len() as f64;
            im.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / im.data().len() as f64
        };
        let blurred = gaussian_blur(&img, 5, 1.7).unwrap();
        assert!(var(&blurred) <= var(&img) + 1e-12);
    }

    #[test]
    fn blur_rejects_even_kernel() {
        let img = Image::new(4, 4).unwrap();
        assert!(gaussian_blur(&img, 4, 1.0).is_err());
    }

    #[test]
    fn unit_jitter_is_identity() {
        let img = blob(9, 9);
        assert_eq!(color_jitter(&img, 1.0, 1.0, 1.0), img);
    }

    #[test]
    fn brightness_is_multiplicative() {
        let img = Image::from_fn(2, 2, |_, _, _| 0.5).unwrap();
        let out = color_jitter(&img, 1.2, 1.0, 1.0);
        for v in out.data() {
            assert!((v - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_saturation_is_grayscale() {
        let img = Image::from_fn(3, 3, |x, y, c| ((x + y + c) % 3) as f64 / 2.0).unwrap();
        let out = color_jitter(&img, 1.0, 1.0, 0.0);
        for y in 0..3 {
            for x in 0..3 {
                let l = img.luma(x, y);
                for c in 0..3 {
                    assert!((out.get(x, y, c) - l).abs() < 1e-12);
                }
            }
        }
    }
}
