use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::aggregate::{aggregate, AggregationMode};
use crate::error::{Error, Result};
use crate::ingest::{write_manifest, write_saliency, write_segmentation, CorpusManifest, ManifestEntry};
use crate::model::{AggregateSat, Sat};
use crate::sat::build_sat;

use super::classifier::{saliency_gradient_x_input, train_classifier, LinearModel};
use super::config::SynthConfig;
use super::dataset::{class_name, generate_dataset, Dataset, SynthSample, WATERMARK};

pub const SALIENCY_METHOD: &str = "gradient-x-input";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub prevalence: f64,
    /// Relative aggregate mean rank of the watermark over the watermarked
    /// test set; NaN when no test image carries a watermark.
    pub watermark_mean_rank: f64,
    pub acc_clean: f64,
    pub acc_watermarked: f64,
    pub acc_train: f64,
    pub seed: u64,
    pub model: LinearModel,
    /// Relative aggregate over the watermarked test SATs.
    pub aggregate: AggregateSat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config: SynthConfig,
    pub points: Vec<SweepPoint>,
}

/// SATs of every sample under `model`, class label attached.
pub fn sample_sats(cfg: &SynthConfig, model: &LinearModel, samples: &[SynthSample]) -> Result<Vec<Sat>> {
    samples
        .iter()
        .map(|s| {
            let saliency = saliency_gradient_x_input(model, s, SALIENCY_METHOD)?;
            let mut sat = build_sat(&saliency, &s.segmentation(), cfg.pad_radius)?;
            sat.class_label = Some(class_name(s.label).to_string());
            Ok(sat)
        })
        .collect()
}

/// Train on the dataset generated from `cfg` and evaluate it.
pub fn evaluate_point(cfg: &SynthConfig) -> Result<(SweepPoint, Dataset)> {
    let data = generate_dataset(cfg)?;
    let trained = train_classifier(&data.train, &cfg.train)?;
    let model = trained.model;
    let sats = sample_sats(cfg, &model, &data.test_watermarked)?;
    let aggregate = aggregate(&sats, AggregationMode::Relative)?;
    let watermark_mean_rank = aggregate.row(WATERMARK).and_then(|r| r.relative_mean_rank()).unwrap_or(f64::NAN);
    let point = SweepPoint {
        prevalence: cfg.watermark_prevalence,
        watermark_mean_rank,
        acc_clean: model.accuracy(&data.test_clean),
        acc_watermarked: model.accuracy(&data.test_watermarked),
        acc_train: model.accuracy(&data.train),
        seed: cfg.seed,
        model,
        aggregate,
    };
    Ok((point, data))
}

fn check_grid(prevalences: &[f64]) -> Result<()> {
    if prevalences.is_empty() {
        return Err(Error::BadConfig("at least one prevalence is required".into()));
    }
    if let Some(p) = prevalences.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::BadConfig(format!("prevalence {p} is outside [0, 1]")));
    }
    if prevalences.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::BadConfig("prevalences must be sorted ascending".into()));
    }
    Ok(())
}

/// One trained model per prevalence, evaluated on the shared test sets.
pub fn run_prevalence_sweep(base: &SynthConfig, prevalences: &[f64]) -> Result<SweepReport> {
    check_grid(prevalences)?;
    base.validate()?;
    let points = prevalences
        .iter()
        .map(|&p| evaluate_point(&base.with_prevalence(p)).map(|(pt, _)| pt))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { config: base.clone(), points })
}

/// As `run_prevalence_sweep`, with sweep points spread over `jobs` threads.
/// Results are identical to the sequential run.
pub fn run_prevalence_sweep_jobs(base: &SynthConfig, prevalences: &[f64], jobs: usize) -> Result<SweepReport> {
    if jobs <= 1 {
        return run_prevalence_sweep(base, prevalences);
    }
    check_grid(prevalences)?;
    base.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::BadConfig(format!("cannot start {jobs} worker threads: {e}")))?;
    let points = pool.install(|| {
        prevalences
            .par_iter()
            .map(|&p| evaluate_point(&base.with_prevalence(p)).map(|(pt, _)| pt))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepReport { config: base.clone(), points })
}

/// Shortest round-trip decimal for every float.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("prevalence,watermark_mean_rank,acc_clean,acc_watermarked,seed\n");
    for p in &report.points {
        let rank = if p.watermark_mean_rank.is_nan() { String::new() } else { p.watermark_mean_rank.to_string() };
        let _ = writeln!(out, "{},{rank},{},{},{}", p.prevalence, p.acc_clean, p.acc_watermarked, p.seed);
    }
    out
}

/// Rank and accuracy side by side, one line per prevalence.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::from("prevalence  watermark_rank  acc_clean  acc_watermarked  accuracy_change\n");
    for p in &report.points {
        let _ = writeln!(
            out,
            "{:>9.1}%  {:>14.3}  {:>9.3}  {:>15.3}  {:>14.1}%",
            p.prevalence * 100.0,
            p.watermark_mean_rank,
            p.acc_clean,
            p.acc_watermarked,
            (p.acc_watermarked - p.acc_clean) * 100.0
        );
    }
    out
}

/// Write samples in the ingest formats: `saliency/<id>.npy`,
/// `segmentation/<id>.json` and a `manifest.json` with relative paths.
/// Returns the manifest path.
pub fn dump_corpus(model: &LinearModel, samples: &[SynthSample], dir: &Path) -> Result<PathBuf> {
    let sal_dir = dir.join("saliency");
    let seg_dir = dir.join("segmentation");
    for d in [&sal_dir, &seg_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let saliency = saliency_gradient_x_input(model, s, SALIENCY_METHOD)?;
        let sal_rel = PathBuf::from("saliency").join(format!("{}.npy", s.id));
        let seg_rel = PathBuf::from("segmentation").join(format!("{}.json", s.id));
        write_saliency(&saliency, dir.join(&sal_rel))?;
        write_segmentation(&s.segmentation(), dir.join(&seg_rel))?;
        entries.push(ManifestEntry {
            image_id: s.id.clone(),
            class_label: class_name(s.label).to_string(),
            saliency_path: sal_rel,
            segmentation_path: seg_rel,
            method_tag: SALIENCY_METHOD.to_string(),
        });
    }
    let path = dir.join("manifest.json");
    write_manifest(&CorpusManifest { entries }, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let cfg = SynthConfig::default();
        assert!(run_prevalence_sweep(&cfg, &[]).is_err());
        assert!(run_prevalence_sweep(&cfg, &[0.2, 0.1]).is_err());
        assert!(run_prevalence_sweep(&cfg, &[1.2]).is_err());
    }

    #[test]
    fn small_sweep_csv_shape() {
        let cfg = SynthConfig {
            n_train: 20,
            n_test: 10,
            train: super::super::TrainConfig { epochs: 50, ..Default::default() },
            ..SynthConfig::default()
        };
        let rep = run_prevalence_sweep(&cfg, &[0.0, 0.5]).unwrap();
        let csv = sweep_csv(&rep);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("prevalence,watermark_mean_rank,acc_clean,acc_watermarked,seed\n"));
        assert_eq!(rep, run_prevalence_sweep_jobs(&cfg, &[0.0, 0.5], 2).unwrap());
    }
}
