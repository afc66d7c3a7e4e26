//! File formats: corpus manifests, NPY saliency arrays, segmentation
//! documents (RLE or PNG masks) and SAT tables.

mod morphology;
pub mod npy;
pub mod rle;
mod tables;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ImageGrid, Mask, SaliencyMap, Sat, SegmentationMap, Warning};
use crate::sat::build_sat;

pub use morphology::{pad_mask, pad_segmentation};
pub use tables::{
    read_aggregate_csv, read_sat_csv, read_sat_csv_from, write_aggregate_csv, write_aggregate_csv_to, write_sat_csv,
    write_sat_csv_to, AggregateCsvOptions, AGGREGATE_COLUMNS, SAT_COLUMNS,
};

/// Mask padding applied before building SATs unless overridden.
pub const DEFAULT_PAD_RADIUS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub class_label: String,
    pub saliency_path: PathBuf,
    pub segmentation_path: PathBuf,
    pub method_tag: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks (image_id, method_tag) uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (index, e) in self.entries.iter().enumerate() {
            if !seen.insert((e.image_id.as_str(), e.method_tag.as_str())) {
                return Err(Error::DuplicateImageId {
                    image_id: e.image_id.clone(),
                    method_tag: e.method_tag.clone(),
                    index,
                });
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let file = open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::schema(path.display().to_string(), format!("invalid JSON: {e}")))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads and validates a manifest. Relative paths are resolved against the
/// manifest's own directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let doc = read_json(path)?;
    let entries = doc
        .get("entries")
        .and_then(|e| e.as_array())
        .ok_or_else(|| Error::schema("manifest", "top-level \"entries\" array is required"))?;
    let dir = base_dir(path);
    let mut manifest = CorpusManifest::default();
    for (index, raw) in entries.iter().enumerate() {
        let mut entry: ManifestEntry = serde_json::from_value(raw.clone())
            .map_err(|e| Error::schema(format!("manifest entry {index}"), e.to_string()))?;
        for (field, value) in [("image_id", &entry.image_id), ("method_tag", &entry.method_tag)] {
            if value.is_empty() {
                return Err(Error::schema(format!("manifest entry {index}"), format!("field `{field}` is empty")));
            }
        }
        entry.saliency_path = resolve(&dir, &entry.saliency_path);
        entry.segmentation_path = resolve(&dir, &entry.segmentation_path);
        manifest.entries.push(entry);
    }
    manifest.validate()?;
    Ok(manifest)
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

pub fn write_manifest(manifest: &CorpusManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, manifest).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reads a 2-D NPY array as a saliency map on `grid`.
pub fn read_saliency(path: impl AsRef<Path>, grid: ImageGrid, method_tag: &str) -> Result<SaliencyMap> {
    let path = path.as_ref();
    let mut reader = BufReader::new(open(path)?);
    let arr = npy::read_array2(&mut reader)?;
    if (arr.rows, arr.cols) != (grid.height(), grid.width()) {
        return Err(Error::ShapeMismatch {
            expected_h: grid.height(),
            expected_w: grid.width(),
            found_h: arr.rows,
            found_w: arr.cols,
        });
    }
    SaliencyMap::new(grid, arr.data, method_tag)
}

pub fn write_saliency(map: &SaliencyMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let g = map.grid();
    npy::write_array2(&mut w, g.height(), g.width(), map.values())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize, Serialize)]
struct SegmentDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_png: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Serialize)]
struct SegmentationDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_id: Option<String>,
    height: usize,
    width: usize,
    segments: Vec<SegmentDoc>,
}

/// Reads a segmentation document. Duplicate names are unioned and masks that
/// decode empty are dropped; both produce warnings.
pub fn read_segmentation(path: impl AsRef<Path>) -> Result<(SegmentationMap, Vec<Warning>)> {
    let path = path.as_ref();
    let doc: SegmentationDoc = serde_json::from_value(read_json(path)?)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
    let grid = ImageGrid::new(doc.height, doc.width)?;
    let image_id =
        doc.image_id.unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    if doc.segments.is_empty() {
        return Err(Error::NoSegments(image_id));
    }
    let dir = base_dir(path);
    let mut raw = Vec::with_capacity(doc.segments.len());
    for (i, s) in doc.segments.into_iter().enumerate() {
        let mask = match (&s.rle, &s.mask_png) {
            (Some(text), None) => rle::decode(text, grid, &s.name)?,
            (None, Some(png)) => read_png_mask(&resolve(&dir, png), grid, &s.name)?,
            _ => {
                return Err(Error::schema(
                    format!("{} segment {i}", path.display()),
                    "exactly one of \"rle\" or \"mask_png\" is required",
                ))
            }
        };
        raw.push((s.name, mask));
    }
    SegmentationMap::merging(grid, raw, image_id)
}

/// Writes a segmentation document with RLE masks.
pub fn write_segmentation(seg: &SegmentationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = SegmentationDoc {
        image_id: Some(seg.image_id().to_string()),
        height: seg.grid().height(),
        width: seg.grid().width(),
        segments: seg
            .segments()
            .iter()
            .map(|s| SegmentDoc { name: s.name().to_string(), rle: Some(rle::encode(s.mask())), mask_png: None })
            .collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &doc).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit grayscale PNG; any nonzero pixel is a member.
pub fn read_png_mask(path: &Path, grid: ImageGrid, segment: &str) -> Result<Mask> {
    let decoder = png::Decoder::new(BufReader::new(open(path)?));
    let bad = |m: String| Error::schema(path.display().to_string(), m);
    let mut reader = decoder.read_info().map_err(|e| bad(format!("invalid PNG: {e}")))?;
    let size = reader.output_buffer_size().ok_or_else(|| bad("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(format!("invalid PNG: {e}")))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(bad(format!("mask must be 8-bit grayscale, found {:?} at {:?}", info.color_type, info.bit_depth)));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    if (h, w) != (grid.height(), grid.width()) {
        return Err(Error::MaskShapeMismatch {
            segment: segment.to_string(),
            expected_h: grid.height(),
            expected_w: grid.width(),
            found_h: h,
            found_w: w,
        });
    }
    let bits = (0..h)
        .flat_map(|r| {
            let row = &buf[r * info.line_size..r * info.line_size + w];
            row.iter().map(|&v| v != 0).collect::<Vec<_>>()
        })
        .collect();
    Mask::from_bits(grid, bits)
}

/// Writes a mask as an 8-bit grayscale PNG (0 or 255).
pub fn write_png_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = mask.grid();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), g.width() as u32, g.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e.to_string()));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// One SAT per manifest entry, in manifest order, with the entry's image id,
/// class label and method tag. Warnings name their entry. With `jobs > 1`
/// entries are processed on that many threads; the output is unchanged.
pub fn build_corpus(manifest: &CorpusManifest, pad_radius: usize, jobs: usize) -> Result<(Vec<Sat>, Vec<Warning>)> {
    manifest.validate()?;
    let one = |(index, entry): (usize, &ManifestEntry)| {
        build_entry(entry, pad_radius).map_err(|e| Error::Entry {
            index,
            image_id: entry.image_id.clone(),
            source: Box::new(e),
        })
    };
    let results: Vec<Result<(Sat, Vec<Warning>)>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::BadConfig(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| manifest.entries.par_iter().enumerate().map(one).collect())
    } else {
        manifest.entries.iter().enumerate().map(one).collect()
    };
    let mut sats = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for r in results {
        let (sat, w) = r?;
        sats.push(sat);
        warnings.extend(w);
    }
    Ok((sats, warnings))
}

fn build_entry(entry: &ManifestEntry, pad_radius: usize) -> Result<(Sat, Vec<Warning>)> {
    let (seg, seg_warnings) = read_segmentation(&entry.segmentation_path)?;
    let seg = seg.with_image_id(entry.image_id.clone());
    let saliency = read_saliency(&entry.saliency_path, seg.grid(), &entry.method_tag)?;
    let mut sat = build_sat(&saliency, &seg, pad_radius)?;
    sat.class_label = Some(entry.class_label.clone());
    let warnings = seg_warnings
        .into_iter()
        .map(|w| Warning {
            context: format!("entry {} ({}): {}", entry.image_id, entry.method_tag, w.context),
            message: w.message,
        })
        .collect();
    Ok((sat, warnings))
}
