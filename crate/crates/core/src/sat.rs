//! Building one Segment Attribution Table from a saliency map and a
//! segmentation of the same image.

use crate::error::{Error, Result};
use crate::ingest::pad_segmentation;
use crate::model::{ImageGrid, Mask, Position, SaliencyMap, Sat, SatRow, SegmentationMap};
use crate::numeric::{average_ranks, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStats {
    pub mean: f64,
    pub total: f64,
    pub size: usize,
}

/// Sum, pixel count and mean of the saliency inside `mask`.
pub fn mean_saliency(saliency: &SaliencyMap, mask: &Mask) -> Result<MaskStats> {
    if saliency.grid() != mask.grid() {
        let (e, f) = (saliency.grid(), mask.grid());
        return Err(Error::ShapeMismatch {
            expected_h: e.height(),
            expected_w: e.width(),
            found_h: f.height(),
            found_w: f.width(),
        });
    }
    let mut total = CompensatedSum::new();
    let mut size = 0usize;
    for (&v, &m) in saliency.values().iter().zip(mask.bits()) {
        if m {
            total.add(v);
            size += 1;
        }
    }
    if size == 0 {
        return Err(Error::EmptyMask { segment: None });
    }
    let total = total.value();
    Ok(MaskStats { mean: total / size as f64, total, size })
}

/// Magnitude of an already-averaged attribution. Opposite signs inside a
/// segment cancel before this is applied.
#[inline]
pub fn abs_after_mean(mean: f64) -> f64 {
    mean.abs()
}

/// Position of the mask centroid on a 3x3 grid of equal thirds. Pixel
/// centres sit at half-integer coordinates; a centroid exactly on a third
/// boundary belongs to the lower-index bucket.
pub fn position_bucket(mask: &Mask, grid: ImageGrid) -> Result<Position> {
    let mut n = 0usize;
    let (mut sy, mut sx) = (0.0f64, 0.0f64);
    for (r, c) in mask.set_pixels() {
        sy += r as f64 + 0.5;
        sx += c as f64 + 0.5;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask { segment: None });
    }
    let bucket = |centroid: f64, extent: usize| -> usize {
        // centroid * 3 <= extent  <=>  centroid <= extent / 3, without rounding
        let scaled = centroid * 3.0;
        let extent = extent as f64;
        if scaled <= extent {
            0
        } else if scaled <= 2.0 * extent {
            1
        } else {
            2
        }
    };
    let n = n as f64;
    Ok(Position::from_buckets(bucket(sy / n, grid.height()), bucket(sx / n, grid.width())))
}

/// Builds the SAT for one image. Masks are padded by `pad_radius` first.
/// Rows are ordered by rank, then by segment name.
pub fn build_sat(saliency: &SaliencyMap, segmentation: &SegmentationMap, pad_radius: usize) -> Result<Sat> {
    if saliency.grid() != segmentation.grid() {
        let (e, f) = (saliency.grid(), segmentation.grid());
        return Err(Error::ShapeMismatch {
            expected_h: e.height(),
            expected_w: e.width(),
            found_h: f.height(),
            found_w: f.width(),
        });
    }
    if segmentation.is_empty() {
        return Err(Error::NoSegments(segmentation.image_id().to_string()));
    }
    let padded = pad_segmentation(segmentation, pad_radius)?;
    let image_id = segmentation.image_id().to_string();
    let method_tag = saliency.method_tag().to_string();

    let mut rows = Vec::with_capacity(padded.len());
    for seg in padded.segments() {
        let stats = mean_saliency(saliency, seg.mask()).map_err(|e| match e {
            Error::EmptyMask { .. } => Error::EmptyMask { segment: Some(seg.name().to_string()) },
            other => other,
        })?;
        rows.push(SatRow {
            segment_name: seg.name().to_string(),
            mean_attr: stats.mean,
            abs_mean_attr: abs_after_mean(stats.mean),
            total_attr: stats.total,
            mask_size: stats.size,
            rank: 0.0,
            position: position_bucket(seg.mask(), padded.grid())?,
            image_id: image_id.clone(),
            segment_id: format!("{image_id}:{}", seg.name()),
            method_tag: method_tag.clone(),
        });
    }
    assign_ranks(&mut rows);
    Ok(Sat { image_id, method_tag, class_label: None, rows })
}

/// Sets descending average-ranks of `abs_mean_attr` and sorts the rows by
/// (rank, name).
pub fn assign_ranks(rows: &mut [SatRow]) {
    let values: Vec<f64> = rows.iter().map(|r| r.abs_mean_attr).collect();
    for (row, rank) in rows.iter_mut().zip(average_ranks(&values, true)) {
        row.rank = rank;
    }
    rows.sort_by(|a, b| a.rank.total_cmp(&b.rank).then_with(|| a.segment_name.cmp(&b.segment_name)));
}
