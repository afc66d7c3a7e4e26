//! Segment Attribution Tables: per-image segment-level summaries of saliency
//! maps, their corpus-level aggregation, pairwise significance testing, SVG
//! rendering, and a synthetic watermark-shortcut laboratory.

pub mod aggregate;
pub mod error;
pub mod ingest;
pub mod model;
pub mod numeric;
pub mod query;
pub mod render;
pub mod sat;
pub mod stats;
pub mod synth;

pub use aggregate::{aggregate, aggregate_strata, AggregationMode};
pub use error::{Error, Result};
pub use model::{
    AggregateRow, AggregateSat, AggregateStat, ImageGrid, Mask, Position, SaliencyMap, Sat, SatRow, SegmentMask,
    SegmentationMap, SignificanceReport, Warning,
};
pub use sat::{build_sat, mean_saliency};
pub use stats::build_significance;
