use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satkit::aggregate::{aggregate, fill_to_union, name_union, AggregationMode};
use satkit::ingest::{read_sat_csv_from, write_sat_csv_to};
use satkit::model::{ImageGrid, Mask, SaliencyMap, Sat, SegmentMask, SegmentationMap};
use satkit::sat::build_sat;

struct Image {
    saliency: SaliencyMap,
    segmentation: SegmentationMap,
}

fn random_image(rng: &mut ChaCha8Rng, id: &str, names: &[&str]) -> Image {
    let grid = ImageGrid::new(rng.random_range(4..=16), rng.random_range(4..=16)).unwrap();
    let values = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut segments = Vec::new();
    for name in names {
        let density = rng.random_range(0.05..0.6);
        let mut bits: Vec<bool> = (0..grid.len()).map(|_| rng.random_bool(density)).collect();
        bits[rng.random_range(0..grid.len())] = true;
        segments.push(SegmentMask::new(*name, Mask::from_bits(grid, bits).unwrap()).unwrap());
    }
    Image {
        saliency: SaliencyMap::new(grid, values, "m").unwrap(),
        segmentation: SegmentationMap::new(grid, segments, id).unwrap(),
    }
}

const NAMES: [&str; 8] = ["ears", "eyes", "head", "legs", "mane", "tail", "torso", "watermark"];

/// A corpus where every image carries a random non-empty subset of `NAMES`.
fn random_corpus(seed: u64, n: usize) -> Vec<Sat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut names: Vec<&str> = NAMES.iter().copied().filter(|_| rng.random_bool(0.7)).collect();
            if names.is_empty() {
                names.push(NAMES[i % NAMES.len()]);
            }
            let img = random_image(&mut rng, &format!("img-{i:03}"), &names);
            let mut sat = build_sat(&img.saliency, &img.segmentation, rng.random_range(0..=2)).unwrap();
            sat.class_label = Some(if i % 2 == 0 { "zebra" } else { "horse" }.into());
            sat
        })
        .collect()
}

fn rows_by_name(sat: &Sat) -> Vec<(String, u64, u64, f64)> {
    let mut v: Vec<_> = sat
        .rows
        .iter()
        .map(|r| (r.segment_name.clone(), r.mean_attr.to_bits(), r.abs_mean_attr.to_bits(), r.rank))
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sat_csv_round_trips_bit_exactly(seed in any::<u64>(), n in 1usize..6) {
        let sats = random_corpus(seed, n);
        let mut buf = Vec::new();
        write_sat_csv_to(&sats, &mut buf).unwrap();
        let (back, warnings) = read_sat_csv_from(buf.as_slice(), "mem").unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back, sats);
    }

    #[test]
    fn ranks_sum_to_triangular_number(seed in any::<u64>()) {
        for sat in random_corpus(seed, 3) {
            let n = sat.rows.len() as f64;
            let total: f64 = sat.rows.iter().map(|r| r.rank).sum();
            prop_assert_eq!(total, n * (n + 1.0) / 2.0);
            prop_assert!(sat.rows.iter().all(|r| r.abs_mean_attr == r.mean_attr.abs()));
        }
    }

    #[test]
    fn positive_scaling_scales_means_and_keeps_ranks(seed in any::<u64>(), exp in -8i32..8, c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, "x", &NAMES);
        let base = build_sat(&img.saliency, &img.segmentation, 0).unwrap();
        let pow2 = 2f64.powi(exp);
        let exact = build_sat(&img.saliency.scaled(pow2).unwrap(), &img.segmentation, 0).unwrap();
        let general = build_sat(&img.saliency.scaled(c).unwrap(), &img.segmentation, 0).unwrap();
        for (a, b) in base.rows.iter().zip(&exact.rows) {
            prop_assert_eq!(&a.segment_name, &b.segment_name);
            prop_assert_eq!(a.mean_attr * pow2, b.mean_attr);
            prop_assert_eq!(a.rank, b.rank);
        }
        for row in &base.rows {
            let g = general.row(&row.segment_name).unwrap();
            prop_assert!((g.mean_attr - c * row.mean_attr).abs() <= 1e-12 * (c * row.mean_attr).abs().max(1e-300));
            prop_assert_eq!(g.rank, row.rank);
        }
    }

    #[test]
    fn negative_scaling_flips_signs_and_keeps_absolute_values(seed in any::<u64>(), exp in -8i32..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, "x", &NAMES);
        let c = -(2f64.powi(exp));
        let base = build_sat(&img.saliency, &img.segmentation, 1).unwrap();
        let flipped = build_sat(&img.saliency.scaled(c).unwrap(), &img.segmentation, 1).unwrap();
        for row in &base.rows {
            let f = flipped.row(&row.segment_name).unwrap();
            prop_assert_eq!(f.mean_attr, c * row.mean_attr);
            prop_assert_eq!(f.abs_mean_attr, -c * row.abs_mean_attr);
            prop_assert_eq!(f.rank, row.rank);
        }
    }

    #[test]
    fn translation_leaves_means_unchanged(seed in any::<u64>(), dy in 0usize..5, dx in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, "x", &NAMES[..4]);
        let g = img.saliency.grid();
        let big = ImageGrid::new(g.height() + 4, g.width() + 4).unwrap();
        let mut values = vec![0.0; big.len()];
        for r in 0..g.height() {
            for c in 0..g.width() {
                values[big.index(r + dy, c + dx)] = img.saliency.get(r, c);
            }
        }
        let segments = img
            .segmentation
            .segments()
            .iter()
            .map(|s| {
                let m = Mask::from_fn(big, |r, c| r >= dy && c >= dx && r - dy < g.height() && c - dx < g.width() && s.mask().get(r - dy, c - dx));
                SegmentMask::new(s.name(), m).unwrap()
            })
            .collect();
        let moved = SegmentationMap::new(big, segments, "x").unwrap();
        let a = build_sat(&img.saliency, &img.segmentation, 0).unwrap();
        let b = build_sat(&SaliencyMap::new(big, values, "m").unwrap(), &moved, 0).unwrap();
        prop_assert_eq!(rows_by_name(&a), rows_by_name(&b));
    }

    #[test]
    fn segment_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, "x", &NAMES);
        let mut segments = img.segmentation.segments().to_vec();
        segments.shuffle(&mut rng);
        let shuffled = SegmentationMap::new(img.saliency.grid(), segments, "x").unwrap();
        let a = build_sat(&img.saliency, &img.segmentation, 2).unwrap();
        let b = build_sat(&img.saliency, &shuffled, 2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn aggregation_ignores_sat_order(seed in any::<u64>(), n in 1usize..12) {
        let sats = random_corpus(seed, n);
        let mut shuffled = sats.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        for s in &mut shuffled {
            s.rows.reverse();
        }
        prop_assert_eq!(aggregate(&sats, AggregationMode::Both).unwrap(), aggregate(&shuffled, AggregationMode::Both).unwrap());
    }

    #[test]
    fn fill_keeps_original_rows(seed in any::<u64>(), n in 1usize..8) {
        let sats = random_corpus(seed, n);
        let k_star = name_union(&sats);
        for s in &sats {
            let filled = fill_to_union(s, &k_star).unwrap();
            prop_assert_eq!(&filled.rows[..s.rows.len()], &s.rows[..]);
            let names: BTreeSet<String> = filled.rows.iter().map(|r| r.segment_name.clone()).collect();
            prop_assert_eq!(&names, &k_star);
            let fill_rank = (s.rows.len() + 1) as f64;
            prop_assert!(filled.rows[s.rows.len()..].iter().all(|r| r.rank == fill_rank && r.abs_mean_attr == 0.0));
        }
    }

    #[test]
    fn relative_rank_below_absolute_when_tables_share_a_size(seed in any::<u64>(), n in 2usize..12, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sats: Vec<Sat> = (0..n)
            .map(|i| {
                let mut names = NAMES.to_vec();
                names.shuffle(&mut rng);
                let img = random_image(&mut rng, &format!("img-{i}"), &names[..k]);
                build_sat(&img.saliency, &img.segmentation, 0).unwrap()
            })
            .collect();
        let agg = aggregate(&sats, AggregationMode::Both).unwrap();
        for r in &agg.rows {
            let (rel, abs) = (r.relative_mean_rank().unwrap(), r.absolute_mean_rank().unwrap());
            if r.appearance_count < r.corpus_size {
                prop_assert!(rel < abs, "{}: relative {rel} vs absolute {abs}", r.name);
            } else {
                prop_assert_eq!(rel, abs);
                prop_assert_eq!(r.relative_mean_attr(), r.absolute_mean_attr());
            }
        }
    }
}

#[test]
fn relative_rank_can_exceed_absolute_when_table_sizes_differ() {
    let grid = ImageGrid::new(1, 8).unwrap();
    let big = SegmentationMap::new(
        grid,
        (0..8).map(|i| SegmentMask::new(format!("s{i}"), Mask::from_fn(grid, |_, c| c == i)).unwrap()).collect(),
        "big",
    )
    .unwrap();
    let small = SegmentationMap::new(grid, vec![SegmentMask::new("s0", Mask::full(grid)).unwrap()], "small").unwrap();
    let values: Vec<f64> = (0..8).map(|i| 8.0 - i as f64).collect();
    let sal = SaliencyMap::new(grid, values, "m").unwrap();
    let sats = vec![build_sat(&sal, &big, 0).unwrap(), build_sat(&sal, &small, 0).unwrap()];
    let agg = aggregate(&sats, AggregationMode::Both).unwrap();
    let last = agg.row("s7").unwrap();
    assert_eq!(last.relative_mean_rank(), Some(8.0));
    assert_eq!(last.absolute_mean_rank(), Some(5.0));
}
