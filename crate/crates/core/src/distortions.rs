//! Synthetic degradations: additive white Gaussian noise, Gaussian blur and
//! codec-free blockiness (tile averaging).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imageio::LuminanceImage;
use crate::normalization::reflect;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortionKind {
    Awgn,
    GaussianBlur,
    Blockify,
}

/// One degradation: noise sigma, blur sigma, or tile side depending on kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub severity: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DistortionKind::Awgn | DistortionKind::GaussianBlur => {
                if !(self.severity.is_finite() && self.severity > 0.0) {
                    return Err(Error::Config(format!(
                        "severity must be > 0, got {}",
                        self.severity
                    )));
                }
            }
            DistortionKind::Blockify => {
                if !(self.severity >= 1.0 && self.severity.fract() == 0.0) {
                    return Err(Error::Config(format!(
                        "block side must be an integer >= 1, got {}",
                        self.severity
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, image: &LuminanceImage) -> Result<LuminanceImage> {
        self.validate()?;
        match self.kind {
            DistortionKind::Awgn => add_white_noise(image, self.severity, self.seed),
            DistortionKind::GaussianBlur => gaussian_blur(image, self.severity),
            DistortionKind::Blockify => blockify(image, self.severity as usize),
        }
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise from a ChaCha8 stream seeded with `seed`
/// and clamps to `[0, 255]`.
pub fn add_white_noise(image: &LuminanceImage, sigma: f64, seed: u64) -> Result<LuminanceImage> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    image.map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 255.0))
}

/// Normalized samples of `exp(-k^2 / (2 sigma^2))` for `k` in `-r..=r`,
/// `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with mirrored borders. `sigma = 0` is the identity.
pub fn gaussian_blur(image: &LuminanceImage, sigma: f64) -> Result<LuminanceImage> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!(
            "blur sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let src = image.data();

    let mut horizontal = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            horizontal[row * w + col] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[row * w + reflect(col as isize + i as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            out[row * w + col] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    k * horizontal[reflect(row as isize + i as isize - radius, h) * w + col]
                })
                .sum();
        }
    }
    LuminanceImage::new(w, h, out)
}

/// Replaces every `side x side` tile (partial tiles at the right and bottom
/// included) by its mean.
pub fn blockify(image: &LuminanceImage, side: usize) -> Result<LuminanceImage> {
    if side == 0 {
        return Err(Error::Config("block side must be >= 1".into()));
    }
    if side == 1 {
        return Ok(image.clone());
    }
    let (w, h) = (image.width(), image.height());
    let src = image.data();
    let mut out = vec![0.0; w * h];
    for top in (0..h).step_by(side) {
        let bottom = (top + side).min(h);
        for left in (0..w).step_by(side) {
            let right = (left + side).min(w);
            let mut sum = 0.0;
            for r in top..bottom {
                sum += src[r * w + left..r * w + right].iter().sum::<f64>();
            }
            let mean = sum / ((bottom - top) * (right - left)) as f64;
            for r in top..bottom {
                out[r * w + left..r * w + right].fill(mean);
            }
        }
    }
    LuminanceImage::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> LuminanceImage {
        LuminanceImage::from_fn(w, h, |r, c| ((r * 37 + c * 11) % 200) as f64 + 20.0).unwrap()
    }

    #[test]
    fn awgn_zero_sigma_and_determinism() {
        let img = ramp(16, 9);
        assert_eq!(add_white_noise(&img, 0.0, 1).unwrap(), img);
        let a = add_white_noise(&img, 7.0, 42).unwrap();
        let b = add_white_noise(&img, 7.0, 42).unwrap();
        let c = add_white_noise(&img, 7.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|v| (0.0..=255.0).contains(v)));
        assert!(add_white_noise(&img, -1.0, 0).is_err());
    }

    #[test]
    fn awgn_standard_deviation() {
        let img = LuminanceImage::filled(512, 512, 128.0).unwrap();
        let noisy = add_white_noise(&img, 20.0, 2024).unwrap();
        let diffs: Vec<f64> = noisy.data().iter().map(|v| v - 128.0).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 20.0).abs() < 0.02 * 20.0, "sd {sd}");
    }

    #[test]
    fn blur_basics() {
        let img = ramp(10, 8);
        assert_eq!(gaussian_blur(&img, 0.0).unwrap(), img);
        let flat = LuminanceImage::filled(9, 9, 77.0).unwrap();
        let blurred = gaussian_blur(&flat, 2.3).unwrap();
        assert!(blurred.data().iter().all(|v| (v - 77.0).abs() < 1e-12));
        assert!(gaussian_blur(&img, f64::NAN).is_err());
    }

    #[test]
    fn blur_impulse_centre_weight() {
        // Oracle: normalize exp(-k^2/2) over k = -3..=3 and square it.
        let raw: Vec<f64> = (-3i32..=3).map(|k| (-(k * k) as f64 / 2.0).exp()).collect();
        let centre_1d = raw[3] / raw.iter().sum::<f64>();
        let expected = centre_1d * centre_1d;
        assert!((expected - 0.1592).abs() < 1e-4);

        let img = LuminanceImage::from_fn(15, 15, |r, c| if (r, c) == (7, 7) { 1.0 } else { 0.0 })
            .unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        assert!((out.get(7, 7) - expected).abs() < 1e-15);
        assert_eq!(gaussian_kernel(1.0).len(), 7);
    }

    #[test]
    fn blur_preserves_mean_with_constant_border() {
        // A constant band wider than the radius makes mirrored reads stand in
        // exactly for the mass pushed off the edge.
        let sigma: f64 = 1.5;
        let radius = (3.0 * sigma).ceil() as usize;
        let (w, h) = (40, 30);
        let img = LuminanceImage::from_fn(w, h, |r, c| {
            let inner = r > radius && r < h - 1 - radius && c > radius && c < w - 1 - radius;
            if inner {
                ((r * 13 + c * 7) % 90) as f64 + 60.0
            } else {
                100.0
            }
        })
        .unwrap();
        let mean = |i: &LuminanceImage| i.data().iter().sum::<f64>() / i.data().len() as f64;
        let out = gaussian_blur(&img, sigma).unwrap();
        assert!((mean(&out) - mean(&img)).abs() < 1e-6);
    }

    #[test]
    fn blockify_examples() {
        let img = ramp(7, 5);
        assert_eq!(blockify(&img, 1).unwrap(), img);
        let flat = LuminanceImage::filled(7, 5, 3.0).unwrap();
        assert_eq!(blockify(&flat, 3).unwrap(), flat);
        let tile = LuminanceImage::new(2, 2, vec![0.0, 100.0, 50.0, 50.0]).unwrap();
        assert_eq!(blockify(&tile, 2).unwrap().data(), &[50.0; 4]);
        // Partial tiles on the right and bottom.
        let img = LuminanceImage::new(3, 2, vec![0.0, 2.0, 9.0, 4.0, 6.0, 1.0]).unwrap();
        assert_eq!(
            blockify(&img, 2).unwrap().data(),
            &[3.0, 3.0, 5.0, 3.0, 3.0, 5.0]
        );
        assert!(blockify(&img, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = |kind, severity| {
            DistortionSpec {
                kind,
                severity,
                seed: 0,
            }
            .validate()
            .is_err()
        };
        assert!(bad(DistortionKind::Awgn, 0.0));
        assert!(bad(DistortionKind::GaussianBlur, -2.0));
        assert!(bad(DistortionKind::Blockify, 2.5));
        assert!(bad(DistortionKind::Blockify, 0.0));
        assert!(!bad(DistortionKind::Blockify, 8.0));
        let img = ramp(8, 8);
        let spec = DistortionSpec {
            kind: DistortionKind::Blockify,
            severity: 4.0,
            seed: 0,
        };
        assert_eq!(spec.apply(&img).unwrap(), blockify(&img, 4).unwrap());
    }

    proptest! {
        #[test]
        fn blockify_idempotent(
            w in 2usize..20,
            h in 2usize..20,
            side in 1usize..7,
            seed in any::<u64>(),
        ) {
            let img = add_white_noise(&LuminanceImage::filled(w, h, 128.0).unwrap(), 40.0, seed).unwrap();
            let once = blockify(&img, side).unwrap();
            let twice = blockify(&once, side).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
