use proptest::prelude::*;

use satkit::ingest::{build_corpus, load_manifest};
use satkit::model::SaliencyMap;
use satkit::sat::build_sat;
use satkit::synth::{
    dump_corpus, generate_dataset, run_prevalence_sweep, run_prevalence_sweep_jobs, saliency_gradient_x_input,
    sample_sats, sweep_csv, train_classifier, SynthConfig, TrainConfig, WATERMARK, ZEBRA,
};

fn small(prevalence: f64) -> SynthConfig {
    SynthConfig {
        n_train: 40,
        n_test: 12,
        train: TrainConfig { epochs: 200, ..Default::default() },
        ..SynthConfig::default().with_prevalence(prevalence)
    }
}

#[test]
fn saliency_sums_to_logit_minus_bias() {
    let cfg = small(0.25);
    let data = generate_dataset(&cfg).unwrap();
    let model = train_classifier(&data.train, &cfg.train).unwrap().model;
    for s in data.test_watermarked.iter().chain(&data.test_clean) {
        let sal = saliency_gradient_x_input(&model, s, "gxi").unwrap();
        let total: f64 = sal.values().iter().sum();
        assert!((total - (model.logit(&s.pixels) - model.bias)).abs() < 1e-9, "{}", s.id);
    }
}

#[test]
fn watermark_only_saliency_ranks_watermark_first() {
    let data = generate_dataset(&small(0.5)).unwrap();
    for s in data.test_watermarked.iter().filter(|s| s.watermark_present) {
        let values = s.watermark_mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let sal = SaliencyMap::new(s.grid, values, "oracle").unwrap();
        let sat = build_sat(&sal, &s.segmentation(), 0).unwrap();
        let row = sat.row(WATERMARK).unwrap();
        assert_eq!(row.rank, 1.0, "{}", s.id);
        assert_eq!(row.mean_attr, 1.0);
        assert_eq!(row.mask_size, 25);
    }
}

#[test]
fn watermark_mean_matches_direct_average() {
    let cfg = small(0.5);
    let data = generate_dataset(&cfg).unwrap();
    let model = train_classifier(&data.train, &cfg.train).unwrap().model;
    let s = data.test_watermarked.iter().find(|s| s.watermark_present).unwrap();
    let sal = saliency_gradient_x_input(&model, s, "gxi").unwrap();
    let sat = build_sat(&sal, &s.segmentation(), 0).unwrap();
    let inside: Vec<f64> = s
        .watermark_mask
        .set_pixels()
        .map(|(r, c)| model.weights[r * s.grid.width() + c] * s.pixels[r * s.grid.width() + c])
        .collect();
    let oracle = inside.iter().sum::<f64>() / inside.len() as f64;
    let got = sat.row(WATERMARK).unwrap().mean_attr;
    assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-12), "{got} vs {oracle}");
}

#[test]
fn dumped_corpus_rebuilds_the_in_memory_sats() {
    let cfg = small(0.25);
    let data = generate_dataset(&cfg).unwrap();
    let model = train_classifier(&data.train, &cfg.train).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let manifest = dump_corpus(&model, &data.test_watermarked, dir.path()).unwrap();
    let (from_files, warnings) = build_corpus(&load_manifest(&manifest).unwrap(), cfg.pad_radius, 2).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(from_files, sample_sats(&cfg, &model, &data.test_watermarked).unwrap());
}

#[test]
fn sweep_is_reproducible_and_thread_independent() {
    let cfg = small(0.0);
    let grid = [0.0, 0.25, 0.5];
    let a = run_prevalence_sweep(&cfg, &grid).unwrap();
    let b = run_prevalence_sweep_jobs(&cfg, &grid, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(sweep_csv(&a), sweep_csv(&run_prevalence_sweep(&cfg, &grid).unwrap()));
    let other = run_prevalence_sweep(&SynthConfig { seed: cfg.seed + 1, ..cfg.clone() }, &grid).unwrap();
    assert_ne!(sweep_csv(&a), sweep_csv(&other));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_sample_is_fully_segmented(seed in any::<u64>(), prevalence in 0.0f64..=1.0) {
        let cfg = SynthConfig { n_train: 6, n_test: 4, seed, ..SynthConfig::default().with_prevalence(prevalence) };
        let data = generate_dataset(&cfg).unwrap();
        for s in data.train.iter().chain(&data.test_clean).chain(&data.test_watermarked) {
            let mut cover = vec![0usize; s.grid.len()];
            for (_, m) in &s.part_masks {
                for (i, b) in m.bits().iter().enumerate() {
                    cover[i] += usize::from(*b);
                }
            }
            prop_assert!(cover.iter().all(|c| *c == 1), "{}", s.id);
            prop_assert!(s.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
            let has_mark = s.part_masks.iter().any(|(n, _)| n == WATERMARK);
            prop_assert_eq!(has_mark, s.watermark_present);
            if s.watermark_present {
                prop_assert_eq!(s.watermark_mask.count(), 25);
                prop_assert!(s.watermark_mask.set_pixels().all(|(r, c)| s.pixels[r * s.grid.width() + c] == 1.0));
            }
        }
        prop_assert!(data.test_watermarked.iter().all(|s| s.watermark_present == (s.label == ZEBRA)));
    }
}
