use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use satkit::ingest::{
    write_manifest, write_saliency, write_sat_csv, write_segmentation, CorpusManifest, ManifestEntry,
};
use satkit::model::{ImageGrid, Mask, Position, SaliencyMap, Sat, SatRow, SegmentMask, SegmentationMap};
use satkit::sat::assign_ranks;

fn satkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satkit")).args(args).output().expect("satkit runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Three images with four parts laid out as vertical stripes.
fn write_corpus(dir: &Path) -> PathBuf {
    let grid = ImageGrid::new(6, 8).unwrap();
    let parts = ["mane", "eyes", "torso", "watermark"];
    let mut entries = Vec::new();
    for i in 0..3 {
        let id = format!("img-{i}");
        let values = (0..grid.len()).map(|k| ((k % 8) as f64 + 1.0) * 0.01 * (i as f64 + 1.0) - 0.02).collect();
        let segments = parts
            .iter()
            .enumerate()
            .filter(|(s, _)| i != 2 || *s != 1)
            .map(|(s, name)| SegmentMask::new(*name, Mask::from_fn(grid, |_, c| c / 2 == s)).unwrap())
            .collect();
        write_saliency(&SaliencyMap::new(grid, values, "lrp").unwrap(), dir.join(format!("{id}.npy"))).unwrap();
        write_segmentation(&SegmentationMap::new(grid, segments, &id).unwrap(), dir.join(format!("{id}.json")))
            .unwrap();
        entries.push(ManifestEntry {
            image_id: id.clone(),
            class_label: "zebra".into(),
            saliency_path: format!("{id}.npy").into(),
            segmentation_path: format!("{id}.json").into(),
            method_tag: "lrp".into(),
        });
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&CorpusManifest { entries }, &manifest).unwrap();
    manifest
}

/// Twelve images, five names; only mane and eyes stay indistinguishable.
fn golden_sats() -> Vec<Sat> {
    let strength = [("watermark", 0.9), ("mane", 0.5), ("eyes", 0.45), ("torso", 0.2), ("hooves", 0.1)];
    (0..12)
        .map(|i| {
            let image = format!("img-{i:02}");
            let mut rows: Vec<SatRow> = strength
                .iter()
                .enumerate()
                .map(|(k, (name, s))| {
                    let jitter = (((i * 7 + k * 3) % 5) as f64 - 2.0) * 0.03;
                    let v = s + jitter;
                    SatRow {
                        segment_name: name.to_string(),
                        mean_attr: v,
                        abs_mean_attr: v.abs(),
                        total_attr: v * 4.0,
                        mask_size: 4,
                        rank: 0.0,
                        position: Position::CentreCentre,
                        image_id: image.clone(),
                        segment_id: format!("{image}:{name}"),
                        method_tag: "lrp".into(),
                    }
                })
                .collect();
            assign_ranks(&mut rows);
            Sat { image_id: image, method_tag: "lrp".into(), class_label: Some("zebra".into()), rows }
        })
        .collect()
}

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("SATKIT_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the golden file");
}

#[test]
fn help_for_every_subcommand() {
    for cmd in ["build", "aggregate", "diagram", "barplot", "query", "watermark-sweep"] {
        let out = satkit(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{cmd}");
    }
    assert_eq!(satkit(&[]).status.code(), Some(2));
}

#[test]
fn build_aggregate_diagram_barplot_query() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path());
    let sats = dir.path().join("sats.csv");
    let agg = dir.path().join("agg.csv");
    let svg = dir.path().join("cd.svg");
    let bars = dir.path().join("bars.svg");
    let report = dir.path().join("report.json");
    for args in [
        vec!["build", "--manifest", p(&manifest), "--out", p(&sats), "--pad-radius", "0", "--jobs", "2"],
        vec!["aggregate", "-i", p(&sats), "-o", p(&agg)],
        vec!["diagram", "-i", p(&sats), "-o", p(&svg), "--report", p(&report)],
        vec!["barplot", "-i", p(&agg), "-o", p(&bars), "--highlight", "watermark", "--top-k", "3"],
    ] {
        let out = satkit(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
    }
    let agg_text = fs::read_to_string(&agg).unwrap();
    assert!(agg_text.starts_with(
        "name,relative_mean_attr,absolute_mean_attr,relative_mean_rank,absolute_mean_rank,appearance_count,corpus_size"
    ));
    assert_eq!(agg_text.lines().count(), 5);
    let eyes = agg_text.lines().find(|l| l.starts_with("eyes,")).unwrap();
    assert!(eyes.contains(",2,3,"), "{eyes}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["names"].as_array().unwrap().len(), 4);
    assert_eq!(fs::read_to_string(&bars).unwrap().matches("<rect class=\"bar").count(), 3);

    let out = satkit(&["query", "-i", p(&sats), "--filter", "segment_name==watermark", "--sort", "rank"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");

    let out = satkit(&["query", "-i", p(&sats), "--group-by", "segment_name", "--reduce", "mean:rank"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
}

#[test]
fn outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path());
    let run = |tag: &str, jobs: &str| {
        let sats = dir.path().join(format!("sats-{tag}.csv"));
        let agg = dir.path().join(format!("agg-{tag}.csv"));
        let svg = dir.path().join(format!("cd-{tag}.svg"));
        assert_eq!(
            satkit(&["build", "--manifest", p(&manifest), "--out", p(&sats), "--jobs", jobs]).status.code(),
            Some(0)
        );
        assert_eq!(satkit(&["aggregate", "-i", p(&sats), "-o", p(&agg)]).status.code(), Some(0));
        assert_eq!(satkit(&["diagram", "-i", p(&sats), "-o", p(&svg)]).status.code(), Some(0));
        [sats, agg, svg].map(|f| fs::read(f).unwrap())
    };
    assert_eq!(run("a", "1"), run("b", "1"));
    assert_eq!(run("a", "1"), run("c", "4"));
}

#[test]
fn golden_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let sats = dir.path().join("sats.csv");
    write_sat_csv(&golden_sats(), &sats).unwrap();
    let agg = dir.path().join("agg.csv");
    let cd = dir.path().join("cd.svg");
    let bars = dir.path().join("bars.svg");
    assert_eq!(satkit(&["aggregate", "-i", p(&sats), "-o", p(&agg)]).status.code(), Some(0));
    assert_eq!(satkit(&["diagram", "-i", p(&sats), "-o", p(&cd)]).status.code(), Some(0));
    let out = satkit(&["barplot", "-i", p(&agg), "-o", p(&bars), "--highlight", "watermark", "--title", "Fixture"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    check_golden("cd.svg", &fs::read_to_string(&cd).unwrap());
    check_golden("bars.svg", &fs::read_to_string(&bars).unwrap());
}

#[test]
fn empty_manifest_gives_header_only_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.json");
    write_manifest(&CorpusManifest { entries: vec![] }, &manifest).unwrap();
    let sats = dir.path().join("sats.csv");
    let agg = dir.path().join("agg.csv");
    assert_eq!(satkit(&["build", "--manifest", p(&manifest), "--out", p(&sats)]).status.code(), Some(0));
    let out = satkit(&["aggregate", "-i", p(&sats), "-o", p(&agg)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("warning"));
    assert_eq!(fs::read_to_string(&agg).unwrap().lines().count(), 1);
}

#[test]
fn missing_saliency_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path());
    fs::remove_file(dir.path().join("img-1.npy")).unwrap();
    let out = satkit(&["build", "--manifest", p(&manifest), "--out", p(&dir.path().join("s.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("img-1.npy"), "{}", stderr(&out));

    let out = satkit(&["aggregate", "-i", "/nonexistent/sats.csv", "-o", p(&dir.path().join("a.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sats = dir.path().join("sats.csv");
    write_sat_csv(&golden_sats(), &sats).unwrap();
    let agg = dir.path().join("agg.csv");
    assert_eq!(satkit(&["aggregate", "-i", p(&sats), "-o", p(&agg)]).status.code(), Some(0));
    let svg = dir.path().join("x.svg");

    let out = satkit(&["diagram", "-i", p(&sats), "-o", p(&svg), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = satkit(&["barplot", "-i", p(&agg), "-o", p(&svg), "--top-k", "0"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = satkit(&["query", "-i", p(&sats), "--sort", "colour"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mask_size"), "{}", stderr(&out));
    let out = satkit(&["aggregate", "-i", p(&sats), "-o", p(&agg), "--mode", "median"]);
    assert_eq!(out.status.code(), Some(2));
    let out = satkit(&["watermark-sweep", "--out-dir", p(&dir.path().join("w")), "--prevalences", "0.5,0.1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn watermark_sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"n_train": 30, "n_test": 8, "train": {"epochs": 60}}"#).unwrap();
    let run = |name: &str, jobs: &str| {
        let out_dir = dir.path().join(name);
        let out = satkit(&[
            "watermark-sweep",
            "--out-dir",
            p(&out_dir),
            "--config",
            p(&config),
            "--seed",
            "11",
            "--jobs",
            jobs,
            "--dump",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        out_dir
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",11")));
    for f in ["aggregates/prevalence-0.25.csv", "barplots/prevalence-0.05.svg", "sweep_table.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("corpus/prevalence-0.5/manifest.json").exists());

    let single = dir.path().join("single");
    let out = satkit(&["watermark-sweep", "--out-dir", p(&single), "--config", p(&config), "--prevalences", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(single.join("sweep.csv")).unwrap().lines().count(), 2);
}
