//! Domain types: grids, saliency maps, segment masks, SAT rows and
//! aggregate summaries.
//!
//! Everything here is an immutable value once constructed. Constructors
//! enforce the invariants documented on each type.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::BadGrid { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    fn check_same(&self, other: &ImageGrid) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected_h: self.height,
                expected_w: self.width,
                found_h: other.height,
                found_w: other.width,
            });
        }
        Ok(())
    }
}

/// Per-pixel attribution scores, row-major. Signed values are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    grid: ImageGrid,
    values: Vec<f64>,
    method_tag: String,
}

impl SaliencyMap {
    pub fn new(grid: ImageGrid, values: Vec<f64>, method_tag: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::schema(
                "saliency map",
                format!("{} values for a {}x{} grid", values.len(), grid.height, grid.width),
            ));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = grid.coords(idx);
            return Err(Error::NonFiniteValue { row, col, value: values[idx] });
        }
        Ok(Self { grid, values, method_tag: method_tag.into() })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    /// Returns the same map with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect(), self.method_tag.clone())
    }
}

/// Boolean membership grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    grid: ImageGrid,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(grid: ImageGrid) -> Self {
        Self { grid, bits: vec![false; grid.len()] }
    }

    pub fn full(grid: ImageGrid) -> Self {
        Self { grid, bits: vec![true; grid.len()] }
    }

    pub fn from_bits(grid: ImageGrid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::schema(
                "mask",
                format!("{} cells for a {}x{} grid", bits.len(), grid.height, grid.width),
            ));
        }
        Ok(Self { grid, bits })
    }

    pub fn from_fn(grid: ImageGrid, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(grid.len());
        for r in 0..grid.height {
            for c in 0..grid.width {
                bits.push(f(r, c));
            }
        }
        Self { grid, bits }
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.grid.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = self.grid.index(row, col);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// (row, col) of every set pixel in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| self.grid.coords(i))
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.grid.check_same(&other.grid)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(Mask { grid: self.grid, bits })
    }

    /// True when every pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.grid == other.grid && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// A named region of an image. The mask is never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMask {
    name: String,
    mask: Mask,
}

impl SegmentMask {
    pub fn new(name: impl Into<String>, mask: Mask) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::schema("segment", "segment name must be non-empty"));
        }
        if mask.is_empty() {
            return Err(Error::EmptyMask { segment: Some(name) });
        }
        Ok(Self { name, mask })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn into_parts(self) -> (String, Mask) {
        (self.name, self.mask)
    }
}

/// Non-fatal observation raised while assembling inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub context: String,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}

/// The set of named segments for one image. Names are unique, masks may
/// overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    grid: ImageGrid,
    segments: Vec<SegmentMask>,
    image_id: String,
}

impl SegmentationMap {
    /// Strict constructor: rejects duplicate names and foreign grids.
    pub fn new(grid: ImageGrid, segments: Vec<SegmentMask>, image_id: impl Into<String>) -> Result<Self> {
        let image_id = image_id.into();
        if segments.is_empty() {
            return Err(Error::NoSegments(image_id));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &segments {
            check_mask_grid(grid, s.name(), s.mask())?;
            if !seen.insert(s.name()) {
                return Err(Error::schema(
                    format!("segmentation {image_id}"),
                    format!("duplicate segment name {:?}", s.name()),
                ));
            }
        }
        Ok(Self { grid, segments, image_id })
    }

    /// Lenient constructor used at ingest: duplicate names are merged by
    /// mask union (first occurrence keeps its position) and empty masks are
    /// dropped with a warning.
    pub fn merging(
        grid: ImageGrid,
        raw: Vec<(String, Mask)>,
        image_id: impl Into<String>,
    ) -> Result<(Self, Vec<Warning>)> {
        let image_id = image_id.into();
        let mut warnings = Vec::new();
        let mut order: Vec<String> = Vec::new();
        let mut merged: BTreeMap<String, Mask> = BTreeMap::new();
        for (name, mask) in raw {
            check_mask_grid(grid, &name, &mask)?;
            if name.is_empty() {
                return Err(Error::schema(format!("segmentation {image_id}"), "empty segment name"));
            }
            match merged.get_mut(&name) {
                Some(existing) => {
                    warnings.push(Warning {
                        context: format!("segmentation {image_id}"),
                        message: format!("duplicate segment {name:?} merged by union"),
                    });
                    *existing = existing.union(&mask)?;
                }
                None => {
                    order.push(name.clone());
                    merged.insert(name, mask);
                }
            }
        }
        let mut segments = Vec::with_capacity(order.len());
        for name in order {
            let mask = merged.remove(&name).expect("name recorded on insert");
            if mask.is_empty() {
                warnings.push(Warning {
                    context: format!("segmentation {image_id}"),
                    message: format!("segment {name:?} has an empty mask and was dropped"),
                });
                continue;
            }
            segments.push(SegmentMask { name, mask });
        }
        if segments.is_empty() {
            return Err(Error::NoSegments(image_id));
        }
        Ok((Self { grid, segments, image_id }, warnings))
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn segments(&self) -> &[SegmentMask] {
        &self.segments
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn with_image_id(mut self, image_id: impl Into<String>) -> Self {
        self.image_id = image_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Replaces every mask with `f(mask)`. Masks that become empty are an
    /// error because the result would violate the non-empty invariant.
    pub fn map_masks(&self, mut f: impl FnMut(&Mask) -> Mask) -> Result<Self> {
        let segments =
            self.segments.iter().map(|s| SegmentMask::new(s.name.clone(), f(&s.mask))).collect::<Result<Vec<_>>>()?;
        Self::new(self.grid, segments, self.image_id.clone())
    }
}

fn check_mask_grid(grid: ImageGrid, name: &str, mask: &Mask) -> Result<()> {
    if mask.grid() != grid {
        return Err(Error::MaskShapeMismatch {
            segment: name.to_string(),
            expected_h: grid.height,
            expected_w: grid.width,
            found_h: mask.grid().height,
            found_w: mask.grid().width,
        });
    }
    Ok(())
}

/// Coarse location of a segment: its centroid placed on a 3x3 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    TopLeft,
    TopCentre,
    TopRight,
    CentreLeft,
    CentreCentre,
    CentreRight,
    BottomLeft,
    BottomCentre,
    BottomRight,
}

impl Position {
    pub const ALL: [Position; 9] = [
        Position::TopLeft,
        Position::TopCentre,
        Position::TopRight,
        Position::CentreLeft,
        Position::CentreCentre,
        Position::CentreRight,
        Position::BottomLeft,
        Position::BottomCentre,
        Position::BottomRight,
    ];

    /// `vertical` and `horizontal` are bucket indices in 0..3.
    pub fn from_buckets(vertical: usize, horizontal: usize) -> Self {
        Self::ALL[vertical.min(2) * 3 + horizontal.min(2)]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Position::TopLeft => "top-left",
            Position::TopCentre => "top-centre",
            Position::TopRight => "top-right",
            Position::CentreLeft => "centre-left",
            Position::CentreCentre => "centre-centre",
            Position::CentreRight => "centre-right",
            Position::BottomLeft => "bottom-left",
            Position::BottomCentre => "bottom-centre",
            Position::BottomRight => "bottom-right",
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::schema("position", format!("unknown position {s:?}")))
    }
}

/// One row of a Segment Attribution Table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatRow {
    pub segment_name: String,
    /// Signed mean attribution over the mask.
    pub mean_attr: f64,
    pub abs_mean_attr: f64,
    pub total_attr: f64,
    pub mask_size: usize,
    /// Descending average-rank of `abs_mean_attr` within the table.
    pub rank: f64,
    pub position: Position,
    pub image_id: String,
    pub segment_id: String,
    pub method_tag: String,
}

/// Segment Attribution Table for one (image, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sat {
    pub image_id: String,
    pub method_tag: String,
    /// Class of the image, when known. Used to stratify aggregation.
    pub class_label: Option<String>,
    pub rows: Vec<SatRow>,
}

impl Sat {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, name: &str) -> Option<&SatRow> {
        self.rows.iter().find(|r| r.segment_name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.segment_name.as_str())
    }
}

/// Mean attribution and rank of one segment name under one aggregation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    /// Mean of `abs_mean_attr`.
    pub mean_attr: f64,
    /// Mean of the signed `mean_attr`; zero-filled like `mean_attr` under
    /// absolute aggregation.
    pub mean_signed_attr: f64,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub name: String,
    pub relative: Option<AggregateStat>,
    pub absolute: Option<AggregateStat>,
    /// Number of distinct images whose SAT contains the name.
    pub appearance_count: usize,
    pub corpus_size: usize,
}

impl AggregateRow {
    pub fn relative_mean_attr(&self) -> Option<f64> {
        self.relative.map(|s| s.mean_attr)
    }

    pub fn absolute_mean_attr(&self) -> Option<f64> {
        self.absolute.map(|s| s.mean_attr)
    }

    pub fn relative_mean_rank(&self) -> Option<f64> {
        self.relative.map(|s| s.mean_rank)
    }

    pub fn absolute_mean_rank(&self) -> Option<f64> {
        self.absolute.map(|s| s.mean_rank)
    }
}

/// Per-name summary across a corpus of SATs sharing one method tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSat {
    pub method_tag: String,
    pub class_label: Option<String>,
    pub corpus_size: usize,
    pub rows: Vec<AggregateRow>,
}

impl AggregateSat {
    pub fn row(&self, name: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Outcome of the pairwise significance procedure behind a critical
/// difference diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    /// Names ordered by absolute mean rank (ties by name).
    pub segment_names: Vec<String>,
    /// Absolute-aggregation mean rank, aligned with `segment_names`.
    pub mean_ranks: Vec<f64>,
    /// Relative-aggregation mean rank, aligned with `segment_names`.
    pub relative_mean_ranks: Vec<f64>,
    pub appearance_counts: Vec<usize>,
    pub corpus_size: usize,
    /// Symmetric; the diagonal is 1.0 and carries no meaning.
    pub p_matrix: Vec<Vec<f64>>,
    pub adjusted_p_matrix: Vec<Vec<f64>>,
    /// `rejected[i][j]`: the pair differs significantly after Holm.
    pub rejected: Vec<Vec<bool>>,
    /// Pairs where every paired difference was zero.
    pub all_zero_pairs: Vec<(usize, usize)>,
    pub n_paired: Vec<Vec<usize>>,
    /// Index sets into `segment_names`, each sorted ascending.
    pub cliques: Vec<Vec<usize>>,
    pub alpha: f64,
}

impl SignificanceReport {
    pub fn len(&self) -> usize {
        self.segment_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.segment_names.iter().position(|n| n == name)
    }

    pub fn clique_names(&self) -> Vec<Vec<&str>> {
        self.cliques.iter().map(|c| c.iter().map(|&i| self.segment_names[i].as_str()).collect()).collect()
    }

    /// True when some clique contains both names.
    pub fn share_clique(&self, a: &str, b: &str) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.cliques.iter().any(|c| c.contains(&i) && c.contains(&j)),
            _ => false,
        }
    }
}
