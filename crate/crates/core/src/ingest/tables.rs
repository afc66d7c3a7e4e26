//! CSV serialisation of SATs and aggregates.
//!
//! Floats are written with 17 significant digits so every finite `f64`
//! round-trips bit-exactly. Readers tolerate unknown columns (with a
//! warning) but require every fixed column.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AggregateRow, AggregateSat, AggregateStat, Position, Sat, SatRow, Warning};
use crate::numeric::format_g17;

pub const SAT_COLUMNS: [&str; 10] = [
    "image_id",
    "segment_id",
    "segment_name",
    "method_tag",
    "mean_attr",
    "abs_mean_attr",
    "total_attr",
    "mask_size",
    "rank",
    "position",
];

/// Optional trailing SAT column carrying the image class.
const CLASS_COLUMN: &str = "class_label";

pub const AGGREGATE_COLUMNS: [&str; 7] = [
    "name",
    "relative_mean_attr",
    "absolute_mean_attr",
    "relative_mean_rank",
    "absolute_mean_rank",
    "appearance_count",
    "corpus_size",
];

/// Trailing aggregate columns: stratum identity and signed means.
const AGGREGATE_EXTRA: [&str; 4] =
    ["class_label", "method_tag", "relative_mean_signed_attr", "absolute_mean_signed_attr"];

fn csv_err(context: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(context, io),
        other => Error::schema(context, format!("{other:?}")),
    }
}

pub fn write_sat_csv(sats: &[Sat], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sat_csv_to(sats, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_sat_csv_to<W: Write>(sats: &[Sat], writer: W) -> Result<()> {
    let with_class = sats.iter().any(|s| s.class_label.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = SAT_COLUMNS.to_vec();
    if with_class {
        header.push(CLASS_COLUMN);
    }
    w.write_record(&header).map_err(|e| csv_err("sat csv", e))?;
    for sat in sats {
        for r in &sat.rows {
            let mut rec = vec![
                r.image_id.clone(),
                r.segment_id.clone(),
                r.segment_name.clone(),
                r.method_tag.clone(),
                format_g17(r.mean_attr),
                format_g17(r.abs_mean_attr),
                format_g17(r.total_attr),
                r.mask_size.to_string(),
                format_g17(r.rank),
                r.position.to_string(),
            ];
            if with_class {
                rec.push(sat.class_label.clone().unwrap_or_default());
            }
            w.write_record(&rec).map_err(|e| csv_err("sat csv", e))?;
        }
    }
    w.flush().map_err(|e| Error::io("sat csv", e))
}

pub fn read_sat_csv(path: impl AsRef<Path>) -> Result<(Vec<Sat>, Vec<Warning>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sat_csv_from(file, &path.display().to_string())
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(header: &csv::StringRecord, known: &[&str], context: &str, warnings: &mut Vec<Warning>) -> Self {
        let mut index = HashMap::new();
        for (i, h) in header.iter().enumerate() {
            if !known.contains(&h) {
                warnings
                    .push(Warning { context: context.to_string(), message: format!("unknown column {h:?} ignored") });
            }
            index.entry(h.to_string()).or_insert(i);
        }
        Self { index }
    }

    fn require(&self, required: &[&str], context: &str) -> Result<()> {
        for col in required {
            if !self.index.contains_key(*col) {
                return Err(Error::schema(context, format!("missing required column {col:?}")));
            }
        }
        Ok(())
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        self.index.get(name).and_then(|&i| rec.get(i))
    }
}

fn parse_num<T: std::str::FromStr>(text: &str, column: &str, line: u64, context: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::schema(context, format!("line {line}: column {column:?} has unparsable value {text:?}")))
}

pub fn read_sat_csv_from<R: Read>(reader: R, context: &str) -> Result<(Vec<Sat>, Vec<Warning>)> {
    let mut warnings = Vec::new();
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(context, e))?.clone();
    let mut known: Vec<&str> = SAT_COLUMNS.to_vec();
    known.push(CLASS_COLUMN);
    let cols = Columns::new(&header, &known, context, &mut warnings);
    cols.require(&SAT_COLUMNS, context)?;

    let mut sats: Vec<Sat> = Vec::new();
    let mut by_key: HashMap<(String, String), usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(context, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| cols.get(&rec, name).unwrap_or("");
        let row = SatRow {
            image_id: field("image_id").to_string(),
            segment_id: field("segment_id").to_string(),
            segment_name: field("segment_name").to_string(),
            method_tag: field("method_tag").to_string(),
            mean_attr: parse_num(field("mean_attr"), "mean_attr", line, context)?,
            abs_mean_attr: parse_num(field("abs_mean_attr"), "abs_mean_attr", line, context)?,
            total_attr: parse_num(field("total_attr"), "total_attr", line, context)?,
            mask_size: parse_num(field("mask_size"), "mask_size", line, context)?,
            rank: parse_num(field("rank"), "rank", line, context)?,
            position: field("position")
                .parse::<Position>()
                .map_err(|_| Error::schema(context, format!("line {line}: bad position {:?}", field("position"))))?,
        };
        if row.segment_name.is_empty() {
            return Err(Error::schema(context, format!("line {line}: empty segment_name")));
        }
        let class_label = cols.get(&rec, CLASS_COLUMN).filter(|s| !s.is_empty()).map(str::to_string);
        let key = (row.image_id.clone(), row.method_tag.clone());
        let idx = *by_key.entry(key).or_insert_with(|| {
            sats.push(Sat {
                image_id: row.image_id.clone(),
                method_tag: row.method_tag.clone(),
                class_label: class_label.clone(),
                rows: Vec::new(),
            });
            sats.len() - 1
        });
        if sats[idx].class_label != class_label {
            return Err(Error::schema(
                context,
                format!("line {line}: image {:?} has inconsistent class_label", row.image_id),
            ));
        }
        sats[idx].rows.push(row);
    }
    Ok((sats, warnings))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AggregateCsvOptions {
    /// Fixed number of decimals for attribution and rank columns. `None`
    /// writes 17 significant digits.
    pub decimals: Option<usize>,
}

pub fn write_aggregate_csv(aggs: &[AggregateSat], path: impl AsRef<Path>, opts: AggregateCsvOptions) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_aggregate_csv_to(aggs, file, opts).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_aggregate_csv_to<W: Write>(aggs: &[AggregateSat], writer: W, opts: AggregateCsvOptions) -> Result<()> {
    let fmt = |v: Option<f64>| match (v, opts.decimals) {
        (None, _) => String::new(),
        (Some(v), Some(d)) => format!("{v:.d$}"),
        (Some(v), None) => format_g17(v),
    };
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = AGGREGATE_COLUMNS.iter().chain(AGGREGATE_EXTRA.iter()).copied().collect();
    w.write_record(&header).map_err(|e| csv_err("aggregate csv", e))?;
    for agg in aggs {
        for r in &agg.rows {
            let rec = [
                r.name.clone(),
                fmt(r.relative_mean_attr()),
                fmt(r.absolute_mean_attr()),
                fmt(r.relative_mean_rank()),
                fmt(r.absolute_mean_rank()),
                r.appearance_count.to_string(),
                r.corpus_size.to_string(),
                agg.class_label.clone().unwrap_or_default(),
                agg.method_tag.clone(),
                fmt(r.relative.map(|s| s.mean_signed_attr)),
                fmt(r.absolute.map(|s| s.mean_signed_attr)),
            ];
            w.write_record(&rec).map_err(|e| csv_err("aggregate csv", e))?;
        }
    }
    w.flush().map_err(|e| Error::io("aggregate csv", e))
}

/// Reads an aggregate CSV back into one `AggregateSat` per stratum. Signed
/// means absent from the file are reported as NaN.
pub fn read_aggregate_csv(path: impl AsRef<Path>) -> Result<(Vec<AggregateSat>, Vec<Warning>)> {
    let path = path.as_ref();
    let context = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut warnings = Vec::new();
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(&context, e))?.clone();
    let known: Vec<&str> = AGGREGATE_COLUMNS.iter().chain(AGGREGATE_EXTRA.iter()).copied().collect();
    let cols = Columns::new(&header, &known, &context, &mut warnings);
    cols.require(&AGGREGATE_COLUMNS, &context)?;

    let mut out: Vec<AggregateSat> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(&context, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| cols.get(&rec, name).unwrap_or("");
        let opt = |name: &str| -> Result<Option<f64>> {
            let t = field(name);
            if t.trim().is_empty() {
                Ok(None)
            } else {
                parse_num(t, name, line, &context).map(Some)
            }
        };
        let stat = |attr: &str, rank: &str, signed: &str| -> Result<Option<AggregateStat>> {
            match (opt(attr)?, opt(rank)?) {
                (Some(mean_attr), Some(mean_rank)) => {
                    Ok(Some(AggregateStat { mean_attr, mean_rank, mean_signed_attr: opt(signed)?.unwrap_or(f64::NAN) }))
                }
                (None, None) => Ok(None),
                _ => Err(Error::schema(
                    &context,
                    format!("line {line}: {attr} and {rank} must be both set or both empty"),
                )),
            }
        };
        let row = AggregateRow {
            name: field("name").to_string(),
            relative: stat("relative_mean_attr", "relative_mean_rank", "relative_mean_signed_attr")?,
            absolute: stat("absolute_mean_attr", "absolute_mean_rank", "absolute_mean_signed_attr")?,
            appearance_count: parse_num(field("appearance_count"), "appearance_count", line, &context)?,
            corpus_size: parse_num(field("corpus_size"), "corpus_size", line, &context)?,
        };
        let class_label = cols.get(&rec, "class_label").filter(|s| !s.is_empty()).map(str::to_string);
        let method_tag = cols.get(&rec, "method_tag").unwrap_or("").to_string();
        let idx = match out.iter().position(|a| a.class_label == class_label && a.method_tag == method_tag) {
            Some(i) => i,
            None => {
                out.push(AggregateSat { method_tag, class_label, corpus_size: row.corpus_size, rows: Vec::new() });
                out.len() - 1
            }
        };
        out[idx].rows.push(row);
    }
    Ok((out, warnings))
}
