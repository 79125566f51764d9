use crate::ar::{self, AcfMode, ArParams, BlockLayout, BlockSequence, EnergyMap, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::Grid;
use crate::imageio::LuminanceImage;
use crate::normalization::{normalize_with, NormalizationConfig, NormalizedImage};

/// Everything needed to turn a luminance image into an energy map.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub normalization: NormalizationConfig,
    pub acf_mode: AcfMode,
    pub epsilon: f64,
    pub execution: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            normalization: NormalizationConfig::default(),
            acf_mode: AcfMode::default(),
            epsilon: DEFAULT_EPSILON,
            execution: Execution::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_acf_mode(mut self, mode: AcfMode) -> Self {
        self.acf_mode = mode;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Result of running the full pipeline on one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub normalized: NormalizedImage,
    pub layout: BlockLayout,
    pub energy: EnergyMap,
    pub params: Grid<ArParams>,
}

impl Analysis {
    /// The blocks the energy map was computed from, in row-major order.
    pub fn blocks(&self) -> impl Iterator<Item = BlockSequence> + '_ {
        ar::partition_blocks(&self.normalized)
            .expect("analysed image has a valid layout")
            .1
    }
}

/// Normalize, partition, fit every block and evaluate its stem noise energy.
pub fn analyze(image: &LuminanceImage, cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    let normalized = normalize_with(image, &cfg.normalization, cfg.execution);
    let models = ar::compute_energy_map(&normalized, cfg.acf_mode, cfg.epsilon, cfg.execution)?;
    Ok(Analysis {
        normalized,
        layout: models.layout,
        energy: models.energy,
        params: models.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_size_map() {
        let img =
            LuminanceImage::from_fn(720, 480, |r, c| ((r * 7 + c * 13) % 256) as f64).unwrap();
        let a = analyze(&img, &PipelineConfig::default()).unwrap();
        assert_eq!((a.energy.rows(), a.energy.cols()), (240, 360));
        assert_eq!(a.blocks().count(), 240 * 360);
    }

    #[test]
    fn constant_image_is_all_degenerate() {
        let img = LuminanceImage::filled(9, 7, 200.0).unwrap();
        let a = analyze(&img, &PipelineConfig::default()).unwrap();
        assert!(a.normalized.values().iter().all(|&v| v == 0.0));
        assert!(a.energy.iter().all(|&e| e == 0.0));
        assert!(a.params.iter().all(|p| p.degenerate));
    }

    #[test]
    fn schedule_does_not_change_bytes() {
        let img = LuminanceImage::from_fn(64, 48, |r, c| {
            ((r as f64 * 0.37).sin() * 90.0 + (c as f64 * 0.21).cos() * 60.0 + 128.0).round()
        })
        .unwrap();
        let seq = analyze(
            &img,
            &PipelineConfig::default().with_execution(Execution::Sequential),
        )
        .unwrap();
        let par = analyze(
            &img,
            &PipelineConfig::default().with_execution(Execution::Parallel),
        )
        .unwrap();
        let bits = |a: &Analysis| a.energy.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&seq), bits(&par));
    }

    #[test]
    fn bad_epsilon_rejected() {
        let img = LuminanceImage::filled(4, 4, 1.0).unwrap();
        let cfg = PipelineConfig {
            epsilon: -1.0,
            ..PipelineConfig::default()
        };
        assert!(matches!(analyze(&img, &cfg), Err(Error::Config(_))));
    }
}
