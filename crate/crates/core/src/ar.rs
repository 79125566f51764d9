//! Block-wise third-order autoregressive modelling.
//!
//! The normalized image is cut into non-overlapping 2x2 blocks. Each block is
//! read top row first, left to right, giving the sequence
//! `x[n-3], x[n-2], x[n-1], x[n]`, and is modelled as
//!
//! ```text
//! x[n] + a1 x[n-1] + a2 x[n-2] + a3 x[n-3] = b0 i[n]
//! ```
//!
//! with `i` white. The coefficients solve the Yule-Walker system built from
//! the block's sample autocorrelation, and the energy of the driving term
//! `b0 i` is the quadratic form `sum_ij a_i a_j R(|i-j|)` with `a0 = 1`.
//!
//! Sample autocorrelations from four pixels need not be positive definite,
//! so the energy can be negative.

use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::grid::Grid;
use crate::normalization::NormalizedImage;

/// Model order. Blocks are `sqrt(ORDER + 1)` pixels on a side.
pub const ORDER: usize = 3;

/// Default singularity tolerance for [`solve_yule_walker`].
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Per-block stem noise energy, `blocks_down x blocks_across`.
pub type EnergyMap = Grid<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    order: usize,
    side: usize,
    blocks_down: usize,
    blocks_across: usize,
}

impl BlockLayout {
    /// Layout of square blocks for an AR model of order [`ORDER`] over a
    /// `height x width` image. Trailing rows and columns that do not fill a
    /// block are dropped.
    pub fn for_dimensions(height: usize, width: usize) -> Result<Self> {
        let side = ((ORDER + 1) as f64).sqrt() as usize;
        debug_assert_eq!(side * side, ORDER + 1);
        let (blocks_down, blocks_across) = (height / side, width / side);
        if blocks_down == 0 || blocks_across == 0 {
            return Err(Error::Dimension(format!(
                "{width}x{height} image holds no {side}x{side} block"
            )));
        }
        Ok(BlockLayout {
            order: ORDER,
            side,
            blocks_down,
            blocks_across,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn block_side(&self) -> usize {
        self.side
    }

    pub fn blocks_down(&self) -> usize {
        self.blocks_down
    }

    pub fn blocks_across(&self) -> usize {
        self.blocks_across
    }

    pub fn block_count(&self) -> usize {
        self.blocks_down * self.blocks_across
    }
}

/// A 2x2 block flattened in scan order: `[x[n-3], x[n-2], x[n-1], x[n]]`
/// = `[top-left, top-right, bottom-left, bottom-right]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockSequence(pub [f64; 4]);

impl BlockSequence {
    /// `x[n - lag]` for `lag` in `0..=3`.
    #[inline]
    pub fn lagged(&self, lag: usize) -> f64 {
        self.0[ORDER - lag]
    }

    /// The secondary-diagonal product `x[n-1] * x[n-2]` (bottom-left times
    /// top-right).
    #[inline]
    pub fn secondary_diagonal_product(&self) -> f64 {
        self.lagged(1) * self.lagged(2)
    }
}

fn block_at(norm: &NormalizedImage, block_row: usize, block_col: usize) -> BlockSequence {
    let (r, c) = (2 * block_row, 2 * block_col);
    BlockSequence([
        norm.get(r, c),
        norm.get(r, c + 1),
        norm.get(r + 1, c),
        norm.get(r + 1, c + 1),
    ])
}

/// Splits `norm` into 2x2 blocks, yielded in row-major block order.
pub fn partition_blocks(
    norm: &NormalizedImage,
) -> Result<(BlockLayout, impl Iterator<Item = BlockSequence> + '_)> {
    let layout = BlockLayout::for_dimensions(norm.height(), norm.width())?;
    let across = layout.blocks_across;
    let iter = (0..layout.block_count()).map(move |i| block_at(norm, i / across, i % across));
    Ok((layout, iter))
}

/// How the lag-1 autocorrelation is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AcfMode {
    /// Drop the `x[n-1] x[n-2]` product: it pairs the end of the top row
    /// with the start of the bottom row, which are not horizontal neighbours.
    #[default]
    ExcludedR1,
    /// Keep all three lag-1 products.
    FullR1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcfEstimate {
    pub lags: [f64; 4],
    pub mode: AcfMode,
}

/// Sample autocorrelation of one block: `R(p)` is the mean of the included
/// products `x[n-m] x[n-m-p]`, `m = 0..=3-p`.
pub fn estimate_acf(block: &BlockSequence, mode: AcfMode) -> AcfEstimate {
    let mut lags = [0.0; 4];
    for (p, lag) in lags.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for m in 0..=(ORDER - p) {
            if mode == AcfMode::ExcludedR1 && p == 1 && m == 1 {
                continue;
            }
            sum += block.lagged(m) * block.lagged(m + p);
            count += 1;
        }
        *lag = sum / count as f64;
    }
    AcfEstimate { lags, mode }
}

/// AR coefficients `[a0, a1, a2, a3]` (with `a0 = 1`) and innovation gain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArParams {
    pub coeffs: [f64; 4],
    pub b0_sq: f64,
    pub degenerate: bool,
}

impl ArParams {
    fn fallback(r0: f64) -> Self {
        ArParams {
            coeffs: [1.0, 0.0, 0.0, 0.0],
            b0_sq: r0,
            degenerate: true,
        }
    }

    pub fn a1(&self) -> f64 {
        self.coeffs[1]
    }

    pub fn a2(&self) -> f64 {
        self.coeffs[2]
    }

    pub fn a3(&self) -> f64 {
        self.coeffs[3]
    }
}

/// Solves the order-3 Yule-Walker system by Levinson-Durbin recursion.
///
/// The block is flagged degenerate, with `a = 0` and `b0^2 = R(0)`, when
/// `R(0) <= epsilon` or a prediction-error denominator drops below
/// `epsilon * R(0)` in magnitude. Positive definiteness is not assumed: a
/// negative prediction error is carried through as long as it stays clear of
/// zero.
pub fn solve_yule_walker(acf: &AcfEstimate, epsilon: f64) -> ArParams {
    let r = &acf.lags;
    if r[0].is_nan() || r[0] <= epsilon {
        return ArParams::fallback(r[0]);
    }
    let floor = epsilon * r[0];
    let mut a = [1.0, 0.0, 0.0, 0.0];
    let mut err = r[0];
    for m in 1..=ORDER {
        if err.is_nan() || err.abs() < floor {
            return ArParams::fallback(r[0]);
        }
        let acc: f64 = (0..m).map(|j| a[j] * r[m - j]).sum();
        let k = -acc / err;
        let prev = a;
        for j in 1..m {
            a[j] = prev[j] + k * prev[m - j];
        }
        a[m] = k;
        err *= 1.0 - k * k;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return ArParams::fallback(r[0]);
    }
    let b0_sq = r[0] + a[1] * r[1] + a[2] * r[2] + a[3] * r[3];
    ArParams {
        coeffs: a,
        b0_sq,
        degenerate: false,
    }
}

/// Stem noise energy `b0^2 E{i^2}` of one block:
///
/// ```text
/// R(0) sum a_m^2 + 2 R(1) sum a_m a_{m+1} + 2 R(2) sum a_m a_{m+2} + 2 R(3) a_0 a_3
/// ```
///
/// Each inner sum runs over ascending `m` and the four lag terms are added
/// left to right.
pub fn stem_noise_energy(acf: &AcfEstimate, ar: &ArParams) -> f64 {
    let a = &ar.coeffs;
    let r = &acf.lags;
    let mut energy = 0.0;
    for p in 0..=ORDER {
        let pair_sum: f64 = (0..=ORDER - p).map(|m| a[m] * a[m + p]).sum();
        let weight = if p == 0 { r[0] } else { 2.0 * r[p] };
        energy += weight * pair_sum;
    }
    energy
}

/// Energy map and per-block model parameters of one normalized image.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockModels {
    pub layout: BlockLayout,
    pub energy: EnergyMap,
    pub params: Grid<ArParams>,
}

pub fn compute_energy_map(
    norm: &NormalizedImage,
    mode: AcfMode,
    epsilon: f64,
    exec: Execution,
) -> Result<BlockModels> {
    let layout = BlockLayout::for_dimensions(norm.height(), norm.width())?;
    let across = layout.blocks_across;
    let per_block = map_indices(exec, layout.block_count(), |i| {
        let block = block_at(norm, i / across, i % across);
        let acf = estimate_acf(&block, mode);
        let params = solve_yule_walker(&acf, epsilon);
        (stem_noise_energy(&acf, &params), params)
    });
    let (energy, params): (Vec<f64>, Vec<ArParams>) = per_block.into_iter().unzip();
    Ok(BlockModels {
        layout,
        energy: Grid::new(layout.blocks_down, across, energy)?,
        params: Grid::new(layout.blocks_down, across, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn acf(lags: [f64; 4]) -> AcfEstimate {
        AcfEstimate {
            lags,
            mode: AcfMode::ExcludedR1,
        }
    }

    #[test]
    fn layout_floors() {
        let l = BlockLayout::for_dimensions(512, 512).unwrap();
        assert_eq!(
            (l.blocks_down(), l.blocks_across(), l.block_count()),
            (256, 256, 65536)
        );
        let l = BlockLayout::for_dimensions(5, 7).unwrap();
        assert_eq!(
            (l.blocks_down(), l.blocks_across(), l.block_count()),
            (2, 3, 6)
        );
        assert_eq!((l.order(), l.block_side()), (3, 2));
        assert!(BlockLayout::for_dimensions(1, 8).is_err());
    }

    #[test]
    fn partition_scan_order() {
        // 5x7 grid; the fifth row and seventh column must never be read.
        let vals: Vec<f64> = (0..35).map(|i| i as f64).collect();
        let norm = NormalizedImage::from_values(7, 5, vals).unwrap();
        let (layout, blocks) = partition_blocks(&norm).unwrap();
        let blocks: Vec<_> = blocks.collect();
        assert_eq!(blocks.len(), layout.block_count());
        assert_eq!(blocks[0], BlockSequence([0.0, 1.0, 7.0, 8.0]));
        assert_eq!(blocks[2], BlockSequence([4.0, 5.0, 11.0, 12.0]));
        assert_eq!(blocks[3], BlockSequence([14.0, 15.0, 21.0, 22.0]));
        for b in &blocks {
            for v in b.0 {
                assert!(v < 28.0 && (v as usize) % 7 != 6);
            }
        }

        let norm = NormalizedImage::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, mut blocks) = partition_blocks(&norm).unwrap();
        let b = blocks.next().unwrap();
        assert_eq!(
            (b.lagged(3), b.lagged(2), b.lagged(1), b.lagged(0)),
            (1.0, 2.0, 3.0, 4.0)
        );
        assert_eq!(b.secondary_diagonal_product(), 6.0);
    }

    #[test]
    fn acf_examples() {
        let zero = BlockSequence([0.0; 4]);
        for mode in [AcfMode::ExcludedR1, AcfMode::FullR1] {
            assert_eq!(estimate_acf(&zero, mode).lags, [0.0; 4]);
        }
        let b = BlockSequence([1.0, 2.0, 3.0, 4.0]);
        let ex = estimate_acf(&b, AcfMode::ExcludedR1);
        assert_eq!(ex.lags, [7.5, 7.0, 5.5, 4.0]);
        let full = estimate_acf(&b, AcfMode::FullR1);
        assert!((full.lags[1] - 20.0 / 3.0).abs() < 1e-15);
        assert_eq!(full.lags[0], 7.5);
        assert_eq!(full.lags[2], 5.5);
        assert_eq!(full.lags[3], 4.0);
    }

    #[test]
    fn solver_examples() {
        let white = solve_yule_walker(&acf([1.0, 0.0, 0.0, 0.0]), DEFAULT_EPSILON);
        assert!(!white.degenerate);
        assert_eq!(white.coeffs, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(white.b0_sq, 1.0);

        let ar1 = solve_yule_walker(&acf([1.0, 0.5, 0.25, 0.125]), DEFAULT_EPSILON);
        assert!(!ar1.degenerate);
        assert!((ar1.a1() + 0.5).abs() < 1e-15);
        assert!(ar1.a2().abs() < 1e-15 && ar1.a3().abs() < 1e-15);
        assert!((ar1.b0_sq - 0.75).abs() < 1e-15);

        let flat = solve_yule_walker(&acf([0.0; 4]), DEFAULT_EPSILON);
        assert!(flat.degenerate);
        assert_eq!(flat.coeffs, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(flat.b0_sq, 0.0);
    }

    #[test]
    fn singular_block_falls_back() {
        // A block of equal values makes every Toeplitz entry equal.
        let b = BlockSequence([0.7; 4]);
        let a = estimate_acf(&b, AcfMode::ExcludedR1);
        let p = solve_yule_walker(&a, DEFAULT_EPSILON);
        assert!(p.degenerate);
        assert_eq!(p.b0_sq, a.lags[0]);
        assert_eq!(stem_noise_energy(&a, &p), a.lags[0]);
    }

    #[test]
    fn energy_examples() {
        let zero_a = ArParams {
            coeffs: [1.0, 0.0, 0.0, 0.0],
            b0_sq: 0.0,
            degenerate: true,
        };
        assert_eq!(stem_noise_energy(&acf([3.5, -1.0, 2.0, 9.0]), &zero_a), 3.5);

        let r = acf([1.0, 0.5, 0.25, 0.125]);
        let p = solve_yule_walker(&r, DEFAULT_EPSILON);
        assert!((stem_noise_energy(&r, &p) - 0.75).abs() < 1e-15);

        let neg = ArParams {
            coeffs: [1.0, -1.0, 0.0, 0.0],
            b0_sq: 0.0,
            degenerate: false,
        };
        assert_eq!(stem_noise_energy(&acf([1.0, 1.5, 0.0, 0.0]), &neg), -1.0);
    }

    #[test]
    fn constant_normalized_input_gives_zero_map() {
        let norm = NormalizedImage::from_values(6, 4, vec![0.0; 24]).unwrap();
        let m = compute_energy_map(
            &norm,
            AcfMode::default(),
            DEFAULT_EPSILON,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!((m.energy.rows(), m.energy.cols()), (2, 3));
        assert!(m.energy.iter().all(|&e| e == 0.0));
        assert!(m.params.iter().all(|p| p.degenerate));
    }

    fn arb_block() -> impl Strategy<Value = BlockSequence> {
        prop::array::uniform4(-3.0f64..3.0).prop_map(BlockSequence)
    }

    proptest! {
        #[test]
        fn residuals_vanish_for_solved_blocks(block in arb_block(), full in any::<bool>()) {
            let mode = if full { AcfMode::FullR1 } else { AcfMode::ExcludedR1 };
            let est = estimate_acf(&block, mode);
            prop_assert!(est.lags[0] >= 0.0);
            let p = solve_yule_walker(&est, DEFAULT_EPSILON);
            if p.degenerate {
                prop_assert_eq!(p.coeffs, [1.0, 0.0, 0.0, 0.0]);
            } else {
                let r = est.lags;
                let a = p.coeffs;
                let tol = 1e-9 * r[0].max(1.0);
                for row in 1..=3usize {
                    let res: f64 = (0..=3usize)
                        .map(|j| a[j] * r[(row as isize - j as isize).unsigned_abs()])
                        .sum();
                    prop_assert!(res.abs() < tol,
                        "row {} residual {} for {:?}", row, res, block);
                }
            }
            prop_assert!(stem_noise_energy(&est, &p).is_finite());
        }
    }
}
