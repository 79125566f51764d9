//! Local mean subtraction and contrast normalization.
//!
//! Every pixel is replaced by `(x - mu) / (sigma + c)`, where `mu` and
//! `sigma` are the weighted mean and standard deviation over a
//! `(2K+1) x (2L+1)` window. Windows that hang over the border read mirrored
//! pixels (reflection without repeating the edge sample).

use crate::error::{Error, Result};
use crate::exec::{fill_rows, Execution};
use crate::imageio::LuminanceImage;

/// Window weight presets selectable from the command line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WindowWeights {
    /// Box filter, every weight `1/9`.
    #[default]
    Uniform,
    /// Binomial `[1 2 1]^T [1 2 1] / 16`, the unit-sum 3x3 Gaussian approximation.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationConfig {
    half_rows: usize,
    half_cols: usize,
    weights: Vec<f64>,
    c: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self::preset(WindowWeights::Uniform, 1.0).expect("default preset is valid")
    }
}

impl NormalizationConfig {
    /// `weights` is the row-major `(2*half_rows+1) x (2*half_cols+1)` window.
    /// Weights must be non-negative and sum to one; `c` must be positive.
    pub fn new(half_rows: usize, half_cols: usize, weights: Vec<f64>, c: f64) -> Result<Self> {
        let expected = (2 * half_rows + 1) * (2 * half_cols + 1);
        if weights.len() != expected {
            return Err(Error::Config(format!(
                "window needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "window weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "window weights sum to {total}, not 1"
            )));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("stabilizer c must be > 0, got {c}")));
        }
        Ok(NormalizationConfig {
            half_rows,
            half_cols,
            weights,
            c,
        })
    }

    /// 3x3 window with the given weights and stabilizer.
    pub fn preset(weights: WindowWeights, c: f64) -> Result<Self> {
        let w = match weights {
            WindowWeights::Uniform => vec![1.0 / 9.0; 9],
            WindowWeights::Gaussian => [1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]
                .iter()
                .map(|v| v / 16.0)
                .collect(),
        };
        Self::new(1, 1, w, c)
    }

    pub fn half_rows(&self) -> usize {
        self.half_rows
    }

    pub fn half_cols(&self) -> usize {
        self.half_cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// Normalized image plus the local moment maps it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
    mean_map: Vec<f64>,
    std_map: Vec<f64>,
}

impl NormalizedImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean_map(&self) -> &[f64] {
        &self.mean_map
    }

    pub fn std_map(&self) -> &[f64] {
        &self.std_map
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Wraps already-normalized values, e.g. for feeding synthetic data to the
    /// block model. Moment maps are set to zero.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} grid needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("normalized values must be finite".into()));
        }
        Ok(NormalizedImage {
            width,
            height,
            mean_map: vec![0.0; values.len()],
            std_map: vec![0.0; values.len()],
            values,
        })
    }
}

/// Mirror index into `0..n` without repeating the edge sample:
/// `-1 -> 1`, `n -> n - 2`.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Weighted local mean and standard deviation maps.
pub fn local_moments(image: &LuminanceImage, cfg: &NormalizationConfig) -> (Vec<f64>, Vec<f64>) {
    local_moments_with(image, cfg, Execution::default())
}

pub fn local_moments_with(
    image: &LuminanceImage,
    cfg: &NormalizationConfig,
    exec: Execution,
) -> (Vec<f64>, Vec<f64>) {
    let data = image.data();
    centered_moments(image, cfg, exec)
        .into_iter()
        .zip(data)
        .map(|((offset, sd), x)| (x + offset, sd))
        .unzip()
}

/// Per pixel `(mu - x, sigma)`. Moments are accumulated on deviations from the
/// window centre, so a locally constant window yields exactly `(0, 0)`.
fn centered_moments(
    image: &LuminanceImage,
    cfg: &NormalizationConfig,
    exec: Execution,
) -> Vec<(f64, f64)> {
    let (w, h) = (image.width(), image.height());
    let kr = cfg.half_rows as isize;
    let kc = cfg.half_cols as isize;
    let data = image.data();

    let mut moments = vec![(0.0f64, 0.0f64); w * h];
    fill_rows(exec, &mut moments, w, |row, out| {
        let mut devs = Vec::with_capacity(cfg.weights.len());
        for (col, slot) in out.iter_mut().enumerate() {
            let centre = data[row * w + col];
            devs.clear();
            for dr in -kr..=kr {
                let r = reflect(row as isize + dr, h);
                for dc in -kc..=kc {
                    let c = reflect(col as isize + dc, w);
                    devs.push(data[r * w + c] - centre);
                }
            }
            let offset: f64 = devs.iter().zip(&cfg.weights).map(|(d, wt)| wt * d).sum();
            let var: f64 = devs
                .iter()
                .zip(&cfg.weights)
                .map(|(d, wt)| wt * (d - offset) * (d - offset))
                .sum();
            *slot = (offset, var.max(0.0).sqrt());
        }
    });
    moments
}

/// Mean-subtracted, contrast-normalized image.
pub fn normalize(image: &LuminanceImage, cfg: &NormalizationConfig) -> NormalizedImage {
    normalize_with(image, cfg, Execution::default())
}

pub fn normalize_with(
    image: &LuminanceImage,
    cfg: &NormalizationConfig,
    exec: Execution,
) -> NormalizedImage {
    let moments = centered_moments(image, cfg, exec);
    let n = moments.len();
    let mut values = Vec::with_capacity(n);
    let mut mean_map = Vec::with_capacity(n);
    let mut std_map = Vec::with_capacity(n);
    for (&x, &(offset, sd)) in image.data().iter().zip(&moments) {
        // x - mu == -offset
        values.push((0.0 - offset) / (sd + cfg.c));
        mean_map.push(x + offset);
        std_map.push(sd);
    }
    NormalizedImage {
        width: image.width(),
        height: image.height(),
        values,
        mean_map,
        std_map,
    }
}
