//! Reductions of an energy map: summary statistics, normalized histograms,
//! 8-bit renders, AR coefficient statistics and multi-level Otsu segmentation.
//!
//! All variances use the population convention (divide by the block count).

use serde::Serialize;

use crate::ar::{ArParams, BlockSequence, EnergyMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imageio::{quantize, GrayOutputImage};

/// Top-edge widening applied to data-derived histogram ranges.
const RANGE_PAD: f64 = 1e-12;

/// Number of bins the Otsu search runs over.
pub const OTSU_BINS: usize = 256;

fn ensure_non_empty(map: &EnergyMap) -> Result<()> {
    if map.is_empty() {
        return Err(Error::Dimension("energy map is empty".into()));
    }
    Ok(())
}

/// Two-pass mean and population variance.
pub(crate) fn mean_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyStats {
    pub mean: f64,
    pub variance: f64,
    pub mean_abs: f64,
    pub block_count: usize,
}

pub fn energy_stats(map: &EnergyMap) -> Result<EnergyStats> {
    ensure_non_empty(map)?;
    let (mean, variance) = mean_variance(map.as_slice());
    let mean_abs = map.iter().map(|v| v.abs()).sum::<f64>() / map.len() as f64;
    Ok(EnergyStats {
        mean,
        variance,
        mean_abs,
        block_count: map.len(),
    })
}

/// The `(mean, variance)` coordinate of one image in energy space.
pub fn footprint_point(stats: &EnergyStats) -> (f64, f64) {
    (stats.mean, stats.variance)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub heights: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    /// `bin_lo,bin_hi,height` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,height\n");
        for (i, h) in self.heights.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                h
            ));
        }
        out
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Equal-width bin of `v`; values on an interior edge go to the upper bin and
/// anything outside `[lo, lo + bins * width)` clamps into the end bins.
fn bin_index(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    let t = ((v - lo) / width).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

fn bin_counts(values: &[f64], lo: f64, hi: f64, bins: usize) -> (Vec<usize>, f64) {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[bin_index(v, lo, width, bins)] += 1;
    }
    (counts, width)
}

/// `[lo, hi + RANGE_PAD]`, unless bins that narrow would fall below the
/// float resolution at this magnitude (e.g. a constant map of large values);
/// then the top edge moves up just far enough for distinct bin edges.
fn default_range(lo: f64, hi: f64, bins: usize) -> (f64, f64) {
    let min_span = 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) * bins as f64;
    if (hi + RANGE_PAD) - lo >= min_span {
        (lo, hi + RANGE_PAD)
    } else {
        (lo, lo + min_span.max(RANGE_PAD))
    }
}

/// Normalized histogram of the energy map.
///
/// Without an explicit `range` the bins span `[min, max]` with the top edge
/// nudged up so the maximum falls in the last bin.
pub fn energy_histogram(
    map: &EnergyMap,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    ensure_non_empty(map)?;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "invalid histogram range ({lo}, {hi})"
                )));
            }
            (lo, hi)
        }
        None => {
            let (lo, hi) = min_max(map.as_slice());
            default_range(lo, hi, bins)
        }
    };
    let (counts, width) = bin_counts(map.as_slice(), lo, hi, bins);
    let total = map.len() as f64;
    let bin_edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect();
    Ok(Histogram {
        bin_edges,
        heights: counts.iter().map(|&c| c as f64 / total).collect(),
    })
}

/// Min-max scales the energy map to `[0, 255]`, rounding half up. A map with
/// no spread renders black.
pub fn render_snem(map: &EnergyMap) -> Result<GrayOutputImage> {
    ensure_non_empty(map)?;
    let (lo, hi) = min_max(map.as_slice());
    let span = hi - lo;
    let pixels = if span > 0.0 {
        map.iter()
            .map(|&v| quantize((v - lo) / span * 255.0))
            .collect()
    } else {
        vec![0u8; map.len()]
    };
    GrayOutputImage::new(map.cols(), map.rows(), pixels)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVariance {
    fn of(values: &[f64]) -> Self {
        let (mean, variance) = mean_variance(values);
        MeanVariance { mean, variance }
    }
}

/// Statistics of the AR coefficients over all blocks.
///
/// `horizontal`, `vertical` and `main_diagonal` are `a1`, `a2`, `a3`;
/// `pooled` treats every coefficient of every block as one sample.
/// `secondary_diagonal` is the per-block product `x[n-1] x[n-2]`, the pair the
/// default autocorrelation estimate leaves out; the model has no fourth
/// coefficient to take its place.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArStats {
    pub horizontal: MeanVariance,
    pub vertical: MeanVariance,
    pub main_diagonal: MeanVariance,
    pub pooled: MeanVariance,
    pub secondary_diagonal: MeanVariance,
}

pub fn ar_statistics(
    params: &Grid<ArParams>,
    blocks: impl IntoIterator<Item = BlockSequence>,
) -> Result<ArStats> {
    if params.is_empty() {
        return Err(Error::Dimension("no blocks to summarise".into()));
    }
    let products: Vec<f64> = blocks
        .into_iter()
        .map(|b| b.secondary_diagonal_product())
        .collect();
    if products.len() != params.len() {
        return Err(Error::Dimension(format!(
            "{} parameter sets but {} blocks",
            params.len(),
            products.len()
        )));
    }
    let column = |i: usize| params.iter().map(|p| p.coeffs[i]).collect::<Vec<_>>();
    let (a1, a2, a3) = (column(1), column(2), column(3));
    let pooled: Vec<f64> = params
        .iter()
        .flat_map(|p| p.coeffs[1..].iter().copied())
        .collect();
    Ok(ArStats {
        horizontal: MeanVariance::of(&a1),
        vertical: MeanVariance::of(&a2),
        main_diagonal: MeanVariance::of(&a3),
        pooled: MeanVariance::of(&pooled),
        secondary_diagonal: MeanVariance::of(&products),
    })
}

/// Class labels per block plus the `k - 1` thresholds separating them.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    pub labels: Grid<u8>,
    pub thresholds: Vec<f64>,
}

impl LabelMap {
    pub fn classes(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Labels spread evenly over `0..=255`.
    pub fn to_gray(&self) -> Result<GrayOutputImage> {
        let top = (self.classes() - 1) as f64;
        let pixels = self
            .labels
            .iter()
            .map(|&l| quantize(f64::from(l) * 255.0 / top))
            .collect();
        GrayOutputImage::new(self.labels.cols(), self.labels.rows(), pixels)
    }
}

/// Multi-level Otsu: splits the 256-bin histogram of the map into `k`
/// contiguous classes maximising the between-class variance, found exactly
/// by dynamic programming over bin boundaries.
pub fn threshold_segment(map: &EnergyMap, k: usize) -> Result<LabelMap> {
    ensure_non_empty(map)?;
    if !(2..=OTSU_BINS).contains(&k) {
        return Err(Error::Config(format!(
            "class count must be in 2..=256, got {k}"
        )));
    }
    let mut distinct: Vec<f64> = map.as_slice().to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Degenerate(format!(
            "{} distinct energy values cannot form {k} classes",
            distinct.len()
        )));
    }

    // The maximum lands on the top edge and clamps into the last bin.
    let (lo, hi) = min_max(map.as_slice());
    let (counts, width) = bin_counts(map.as_slice(), lo, hi, OTSU_BINS);
    let starts = otsu_class_starts(&counts, k).ok_or_else(|| {
        Error::Degenerate(format!("energy histogram has fewer than {k} occupied bins"))
    })?;

    let mut class_of_bin = vec![0u8; OTSU_BINS];
    for (class, window) in starts.windows(2).enumerate() {
        class_of_bin[window[0]..window[1]].fill(class as u8);
    }
    let last = *starts.last().expect("k >= 2");
    class_of_bin[last..].fill((k - 1) as u8);

    let labels = map.map(|&v| class_of_bin[bin_index(v, lo, width, OTSU_BINS)]);
    let thresholds: Vec<f64> = starts[1..].iter().map(|&b| lo + b as f64 * width).collect();
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Degenerate(
            "energy values too close together to separate".into(),
        ));
    }
    Ok(LabelMap { labels, thresholds })
}

/// First bin of each class (`starts[0] == 0`) for the optimal `k`-class
/// split, or `None` when fewer than `k` bins are occupied.
///
/// Bin centres are measured in bin units, so the search sees the same input
/// for any affine relabeling of the data.
fn otsu_class_starts(counts: &[usize], k: usize) -> Option<Vec<usize>> {
    let n = counts.len();
    let mut weight = vec![0.0f64; n + 1];
    let mut moment = vec![0.0f64; n + 1];
    for (i, &c) in counts.iter().enumerate() {
        weight[i + 1] = weight[i] + c as f64;
        moment[i + 1] = moment[i] + c as f64 * (i as f64 + 0.5);
    }
    // Between-class variance differs from sum(S_c^2 / w_c) by a constant.
    let score = |from: usize, to: usize| -> f64 {
        let w = weight[to] - weight[from];
        if w <= 0.0 {
            f64::NEG_INFINITY
        } else {
            let s = moment[to] - moment[from];
            s * s / w
        }
    };

    // best[c][b]: classes 0..=c cover bins 0..b exactly.
    let mut best = vec![vec![f64::NEG_INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for (b, slot) in best[0].iter_mut().enumerate().skip(1) {
        *slot = score(0, b);
    }
    for c in 1..k {
        for b in (c + 1)..=n {
            for a in c..b {
                let prev = best[c - 1][a];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let cand = prev + score(a, b);
                if cand > best[c][b] {
                    best[c][b] = cand;
                    split[c][b] = a;
                }
            }
        }
    }
    if best[k - 1][n] == f64::NEG_INFINITY {
        return None;
    }
    let mut starts = vec![0usize; k];
    let mut end = n;
    for c in (1..k).rev() {
        let a = split[c][end];
        starts[c] = a;
        end = a;
    }
    Some(starts)
}
