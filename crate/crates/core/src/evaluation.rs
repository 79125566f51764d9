//! Correlation of per-image features with subjective scores.
//!
//! A manifest lists `path,subset,dmos` rows. Every image runs through the
//! pipeline, features are grouped by subset, and each feature is rank
//! correlated (Spearman, average ranks for ties) with the scores. No mapping
//! or training is applied to the raw features.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Serialize;

use crate::ar::AcfMode;
use crate::error::{Error, Result};
use crate::exec::map_slice;
use crate::features::{ar_statistics, energy_stats, ArStats, EnergyStats};
use crate::imageio::{load_image, LuminanceImage};
use crate::pipeline::{analyze, PipelineConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub path: PathBuf,
    pub subset: String,
    pub dmos: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory relative image paths are resolved against.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Subset names in order of first appearance.
    pub fn subsets(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !names.contains(&e.subset.as_str()) {
                names.push(&e.subset);
            }
        }
        names
    }
}

/// Reads a `path,subset,dmos` CSV. Relative image paths are taken relative
/// to the manifest's directory.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let entries = parse_manifest_str(&text).map_err(|(line, message)| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    })?;
    Ok(DatasetManifest { base_dir, entries })
}

fn parse_manifest_str(text: &str) -> std::result::Result<Vec<ManifestEntry>, (u64, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| (1, format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err((1, "empty manifest".into()));
    }
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            (
                1,
                format!("missing column `{name}` (expected path,subset,dmos)"),
            )
        })
    };
    let (path_col, subset_col, dmos_col) = (column("path")?, column("subset")?, column("dmos")?);

    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            (line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| {
            record
                .get(i)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| (line, format!("empty `{name}` field")))
        };
        let path = field(path_col, "path")?;
        let subset = field(subset_col, "subset")?;
        let raw = field(dmos_col, "dmos")?;
        let dmos: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| (line, format!("dmos `{raw}` is not a number")))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(path),
            subset: subset.to_string(),
            dmos,
        });
    }
    if entries.is_empty() {
        return Err((1, "manifest has no entries".into()));
    }
    Ok(entries)
}

/// Average (fractional) ranks, 1-based; tied values share the mean of the
/// ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank-order correlation: Pearson correlation of average ranks.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "need at least two samples".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite sample".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("constant input".into()))
}

/// Correlated features, in report row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    MeanArCoeffs,
    VarArCoeffs,
    MeanHorizontal,
    VarHorizontal,
    MeanVertical,
    VarVertical,
    MeanMainDiagonal,
    VarMainDiagonal,
    MeanSecondaryDiagonal,
    VarSecondaryDiagonal,
    MeanEnergy,
    VarEnergy,
    MeanAbsEnergy,
    /// Energy statistics recomputed with all three lag-1 products.
    MeanEnergyFullR1,
    VarEnergyFullR1,
}

impl Feature {
    pub const ALL: [Feature; 15] = [
        Feature::MeanArCoeffs,
        Feature::VarArCoeffs,
        Feature::MeanHorizontal,
        Feature::VarHorizontal,
        Feature::MeanVertical,
        Feature::VarVertical,
        Feature::MeanMainDiagonal,
        Feature::VarMainDiagonal,
        Feature::MeanSecondaryDiagonal,
        Feature::VarSecondaryDiagonal,
        Feature::MeanEnergy,
        Feature::VarEnergy,
        Feature::MeanAbsEnergy,
        Feature::MeanEnergyFullR1,
        Feature::VarEnergyFullR1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::MeanArCoeffs => "mean_ar_coeffs",
            Feature::VarArCoeffs => "var_ar_coeffs",
            Feature::MeanHorizontal => "mean_horizontal_ar",
            Feature::VarHorizontal => "var_horizontal_ar",
            Feature::MeanVertical => "mean_vertical_ar",
            Feature::VarVertical => "var_vertical_ar",
            Feature::MeanMainDiagonal => "mean_main_diagonal_ar",
            Feature::VarMainDiagonal => "var_main_diagonal_ar",
            Feature::MeanSecondaryDiagonal => "mean_secondary_diagonal",
            Feature::VarSecondaryDiagonal => "var_secondary_diagonal",
            Feature::MeanEnergy => "mean_energy",
            Feature::VarEnergy => "var_energy",
            Feature::MeanAbsEnergy => "mean_abs_energy",
            Feature::MeanEnergyFullR1 => "mean_energy_full_r1",
            Feature::VarEnergyFullR1 => "var_energy_full_r1",
        }
    }
}

/// Every statistic the report correlates, for one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImageFeatures {
    pub energy: EnergyStats,
    pub ar: ArStats,
    pub energy_full_r1: EnergyStats,
}

impl ImageFeatures {
    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::MeanArCoeffs => self.ar.pooled.mean,
            Feature::VarArCoeffs => self.ar.pooled.variance,
            Feature::MeanHorizontal => self.ar.horizontal.mean,
            Feature::VarHorizontal => self.ar.horizontal.variance,
            Feature::MeanVertical => self.ar.vertical.mean,
            Feature::VarVertical => self.ar.vertical.variance,
            Feature::MeanMainDiagonal => self.ar.main_diagonal.mean,
            Feature::VarMainDiagonal => self.ar.main_diagonal.variance,
            Feature::MeanSecondaryDiagonal => self.ar.secondary_diagonal.mean,
            Feature::VarSecondaryDiagonal => self.ar.secondary_diagonal.variance,
            Feature::MeanEnergy => self.energy.mean,
            Feature::VarEnergy => self.energy.variance,
            Feature::MeanAbsEnergy => self.energy.mean_abs,
            Feature::MeanEnergyFullR1 => self.energy_full_r1.mean,
            Feature::VarEnergyFullR1 => self.energy_full_r1.variance,
        }
    }
}

/// Runs the pipeline with the configured autocorrelation mode and again with
/// the full lag-1 estimate.
pub fn image_features(image: &LuminanceImage, cfg: &PipelineConfig) -> Result<ImageFeatures> {
    let base = analyze(image, cfg)?;
    let energy = energy_stats(&base.energy)?;
    let ar = ar_statistics(&base.params, base.blocks())?;
    let energy_full_r1 = if cfg.acf_mode == AcfMode::FullR1 {
        energy
    } else {
        let full = analyze(image, &cfg.clone().with_acf_mode(AcfMode::FullR1))?;
        energy_stats(&full.energy)?
    };
    Ok(ImageFeatures {
        energy,
        ar,
        energy_full_r1,
    })
}

/// Features of every manifest image, in manifest order. Images are processed
/// in parallel under [`crate::Execution::Parallel`]; the first failure (in
/// manifest order) is returned.
pub fn manifest_features(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
) -> Result<Vec<ImageFeatures>> {
    // Per-image work is already parallel across images; keep the inner loops
    // sequential to avoid nested fan-out.
    let inner = cfg.clone().with_execution(crate::Execution::Sequential);
    map_slice(cfg.execution, &manifest.entries, |entry| {
        let image = load_image(manifest.resolve(entry))?;
        image_features(&image, &inner)
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeatureCorrelation {
    /// `None` when the feature (or the scores) are constant over the subset.
    pub srocc: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelationReport {
    pub subsets: IndexMap<String, IndexMap<&'static str, FeatureCorrelation>>,
    pub warnings: Vec<String>,
}

impl CorrelationReport {
    /// `{subset: {feature: {srocc, n}}}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.subsets).expect("report is serializable") + "\n"
    }

    /// Aligned table with features as rows and subsets as columns.
    pub fn to_table(&self) -> String {
        let subsets: Vec<&String> = self.subsets.keys().collect();
        let name_width = Feature::ALL
            .iter()
            .map(|f| f.name().len())
            .max()
            .unwrap_or(0);
        let col_width = subsets.iter().map(|s| s.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<name_width$}", "feature");
        for s in &subsets {
            let _ = write!(out, "  {s:>col_width$}");
        }
        out.push('\n');
        for f in Feature::ALL {
            let _ = write!(out, "{:<name_width$}", f.name());
            for s in &subsets {
                let cell = match self.subsets[*s].get(f.name()).and_then(|c| c.srocc) {
                    Some(v) => format!("{v:+.4}"),
                    None => "n/a".to_string(),
                };
                let _ = write!(out, "  {cell:>col_width$}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<name_width$}", "n");
        for s in &subsets {
            let n = self.subsets[*s].values().next().map(|c| c.n).unwrap_or(0);
            let _ = write!(out, "  {n:>col_width$}");
        }
        out.push('\n');
        out
    }
}

/// Correlates precomputed features with the manifest scores.
///
/// Within a subset samples are put in a canonical order (path, then score)
/// before correlating, so the result does not depend on manifest row order.
pub fn correlate(
    manifest: &DatasetManifest,
    features: &[ImageFeatures],
) -> Result<CorrelationReport> {
    if features.len() != manifest.entries.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} manifest entries",
            features.len(),
            manifest.entries.len()
        )));
    }
    let mut report = CorrelationReport::default();
    for subset in manifest.subsets() {
        let mut members: Vec<(&ManifestEntry, &ImageFeatures)> = manifest
            .entries
            .iter()
            .zip(features)
            .filter(|(e, _)| e.subset == subset)
            .collect();
        if members.len() < 2 {
            report.warnings.push(format!(
                "subset `{subset}` skipped: {} image(s), need at least 2",
                members.len()
            ));
            continue;
        }
        members.sort_by(|(a, _), (b, _)| a.path.cmp(&b.path).then(a.dmos.total_cmp(&b.dmos)));
        let dmos: Vec<f64> = members.iter().map(|(e, _)| e.dmos).collect();
        let mut row = IndexMap::new();
        for feature in Feature::ALL {
            let values: Vec<f64> = members.iter().map(|(_, f)| f.value(feature)).collect();
            let srocc = match srocc(&values, &dmos) {
                Ok(v) => Some(v),
                Err(e) => {
                    report
                        .warnings
                        .push(format!("subset `{subset}`, {}: {e}", feature.name()));
                    None
                }
            };
            row.insert(
                feature.name(),
                FeatureCorrelation {
                    srocc,
                    n: members.len(),
                },
            );
        }
        report.subsets.insert(subset.to_string(), row);
    }
    Ok(report)
}

/// Runs the pipeline over every manifest image and correlates each feature
/// with the scores, per subset.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
) -> Result<CorrelationReport> {
    let features = manifest_features(manifest, cfg)?;
    correlate(manifest, &features)
}

/// One `(mean, variance)` footprint row per manifest image.
#[derive(Clone, Debug, PartialEq)]
pub struct FootprintRow {
    pub path: PathBuf,
    pub subset: String,
    pub stats: EnergyStats,
}

pub fn footprints(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<Vec<FootprintRow>> {
    let inner = cfg.clone().with_execution(crate::Execution::Sequential);
    map_slice(cfg.execution, &manifest.entries, |entry| {
        let image = load_image(manifest.resolve(entry))?;
        let stats = energy_stats(&analyze(&image, &inner)?.energy)?;
        Ok(FootprintRow {
            path: entry.path.clone(),
            subset: entry.subset.clone(),
            stats,
        })
    })
    .into_iter()
    .collect()
}

/// `path,subset,mean,variance,mean_abs` CSV.
pub fn footprints_csv(rows: &[FootprintRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
    writer
        .write_record(["path", "subset", "mean", "variance", "mean_abs"])
        .map_err(csv_err)?;
    for row in rows {
        writer
            .write_record([
                row.path.to_string_lossy().as_ref(),
                row.subset.as_str(),
                &row.stats.mean.to_string(),
                &row.stats.variance.to_string(),
                &row.stats.mean_abs.to_string(),
            ])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> std::result::Result<Vec<ManifestEntry>, (u64, String)> {
        parse_manifest_str(text)
    }

    #[test]
    fn manifest_examples() {
        let e = parse("path,subset,dmos\nimg1.bmp,wn,56.3\n").unwrap();
        assert_eq!(
            e,
            vec![ManifestEntry {
                path: "img1.bmp".into(),
                subset: "wn".into(),
                dmos: 56.3
            }]
        );
        assert_eq!(parse("path,subset,dmos\n").unwrap_err().0, 1);
        assert_eq!(parse("").unwrap_err().0, 1);
        let (line, msg) = parse("path,subset,dmos\na.bmp,blur,not_a_number\n").unwrap_err();
        assert_eq!(line, 2);
        assert!(msg.contains("not_a_number"));
        let (line, msg) = parse("path,dmos\na.bmp,3\n").unwrap_err();
        assert_eq!(line, 1);
        assert!(msg.contains("subset"));
        let (line, _) = parse("path,subset,dmos\na,b,1\nc,d,2\n,e,3\n").unwrap_err();
        assert_eq!(line, 4);
        // Column order is free.
        let e = parse("dmos,path,subset\n1.5, x.png , jp2k\n").unwrap();
        assert_eq!(
            (e[0].path.to_str(), e[0].subset.as_str(), e[0].dmos),
            (Some("x.png"), "jp2k", 1.5)
        );
    }

    #[test]
    fn manifest_file_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,subset,dmos\n").unwrap();
        let err = parse_manifest(&p).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 1, .. }));
        assert!(err.to_string().contains("m.csv"));
        std::fs::write(&p, "path,subset,dmos\nsub/a.png,wn,1\n/abs/b.png,wn,2\n").unwrap();
        let m = parse_manifest(&p).unwrap();
        assert_eq!(m.resolve(&m.entries[0]), dir.path().join("sub/a.png"));
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/abs/b.png"));
    }

    #[test]
    fn srocc_examples() {
        assert!((srocc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((srocc(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(
            average_ranks(&[1.0, 2.0, 2.0, 3.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        let r = srocc(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((r - 0.9487).abs() < 1e-4);
        assert!((r - 3.0 / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn srocc_errors() {
        assert!(srocc(&[1.0, 2.0], &[1.0]).is_err());
        assert!(srocc(&[1.0], &[1.0]).is_err());
        assert!(srocc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(srocc(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn table_and_json_shapes() {
        let mut report = CorrelationReport::default();
        let mut row = IndexMap::new();
        row.insert(
            "mean_energy",
            FeatureCorrelation {
                srocc: Some(0.5),
                n: 3,
            },
        );
        report.subsets.insert("wn".into(), row);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["wn"]["mean_energy"]["srocc"], 0.5);
        assert_eq!(json["wn"]["mean_energy"]["n"], 3);
        let table = report.to_table();
        assert!(table.contains("+0.5000"));
        assert!(table.lines().next().unwrap().contains("wn"));
    }

    proptest! {
        #[test]
        fn srocc_symmetry_and_invariance(
            pairs in prop::collection::vec((0i32..20, -1e3f64..1e3), 3..40),
            perm_seed in any::<u64>(),
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let Ok(r) = srocc(&x, &y) else { return Ok(()); };
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((srocc(&y, &x).unwrap() - r).abs() < 1e-12);
            let tx: Vec<f64> = x.iter().map(|v| v.powi(3) * 0.5 + 7.0).collect();
            prop_assert!((srocc(&tx, &y).unwrap() - r).abs() < 1e-12);
            let mut idx: Vec<usize> = (0..x.len()).collect();
            let mut s = perm_seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let px: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let py: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            prop_assert!((srocc(&px, &py).unwrap() - r).abs() < 1e-12);
        }
    }
}
