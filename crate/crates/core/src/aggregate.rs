//! Relative and absolute aggregation of SAT collections.
//!
//! Relative aggregation averages each name over the SATs that contain it.
//! Absolute aggregation first extends every SAT to the union of names,
//! giving missing names attribution 0 and rank `n + 1` where `n` is the
//! SAT's original row count, then averages over the whole corpus.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AggregateRow, AggregateSat, AggregateStat, Position, Sat, SatRow};
use crate::numeric::order_invariant_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    Relative,
    Absolute,
    Both,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(Self::Relative),
            "absolute" => Ok(Self::Absolute),
            "both" => Ok(Self::Both),
            other => Err(Error::BadQuery(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

/// Union of segment names across the corpus, sorted.
pub fn name_union(sats: &[Sat]) -> BTreeSet<String> {
    sats.iter().flat_map(|s| s.names().map(str::to_string)).collect()
}

fn check_corpus(sats: &[Sat]) -> Result<&str> {
    let first = sats.first().ok_or(Error::EmptyCorpus)?;
    let tags: BTreeSet<&str> = sats.iter().map(|s| s.method_tag.as_str()).collect();
    if tags.len() > 1 {
        return Err(Error::MixedMethodTags(tags.into_iter().map(str::to_string).collect()));
    }
    Ok(&first.method_tag)
}

fn common_class(sats: &[Sat]) -> Option<String> {
    let mut labels = sats.iter().map(|s| s.class_label.as_ref());
    let first = labels.next()??;
    labels.all(|l| l == Some(first)).then(|| first.clone())
}

#[derive(Default)]
struct Samples {
    attr: Vec<f64>,
    signed: Vec<f64>,
    rank: Vec<f64>,
    images: BTreeSet<String>,
}

impl Samples {
    fn push(&mut self, row: &SatRow) {
        self.attr.push(row.abs_mean_attr);
        self.signed.push(row.mean_attr);
        self.rank.push(row.rank);
    }

    fn stat(&mut self, denominator: usize) -> AggregateStat {
        let d = denominator as f64;
        AggregateStat {
            mean_attr: order_invariant_sum(&mut self.attr) / d,
            mean_signed_attr: order_invariant_sum(&mut self.signed) / d,
            mean_rank: order_invariant_sum(&mut self.rank) / d,
        }
    }
}

fn collect(sats: &[Sat]) -> BTreeMap<String, Samples> {
    let mut by_name: BTreeMap<String, Samples> = BTreeMap::new();
    for sat in sats {
        for row in &sat.rows {
            let s = by_name.entry(row.segment_name.clone()).or_default();
            s.push(row);
            s.images.insert(sat.image_id.clone());
        }
    }
    by_name
}

/// Computes the requested aggregation families in one pass.
pub fn aggregate(sats: &[Sat], mode: AggregationMode) -> Result<AggregateSat> {
    let method_tag = check_corpus(sats)?.to_string();
    let corpus_size = sats.len();
    let want_rel = matches!(mode, AggregationMode::Relative | AggregationMode::Both);
    let want_abs = matches!(mode, AggregationMode::Absolute | AggregationMode::Both);

    let mut relative = collect(sats);
    let mut absolute = if want_abs {
        let k_star = name_union(sats);
        let filled = sats.iter().map(|s| fill_to_union(s, &k_star)).collect::<Result<Vec<_>>>()?;
        Some(collect(&filled))
    } else {
        None
    };

    let mut rows: Vec<AggregateRow> = relative
        .iter_mut()
        .map(|(name, samples)| {
            let appearance_count = samples.images.len();
            AggregateRow {
                name: name.clone(),
                relative: want_rel.then(|| samples.stat(samples.attr.len())),
                absolute: absolute.as_mut().map(|abs| abs.get_mut(name).expect("union covers name").stat(corpus_size)),
                appearance_count,
                corpus_size,
            }
        })
        .collect();
    sort_rows(&mut rows);
    Ok(AggregateSat { method_tag, class_label: common_class(sats), corpus_size, rows })
}

/// Orders rows by descending mean attribution (relative when available),
/// ties by name.
fn sort_rows(rows: &mut [AggregateRow]) {
    let key = |r: &AggregateRow| r.relative_mean_attr().or(r.absolute_mean_attr()).unwrap_or(0.0);
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.name.cmp(&b.name)));
}

pub fn aggregate_relative(sats: &[Sat]) -> Result<AggregateSat> {
    aggregate(sats, AggregationMode::Relative)
}

pub fn aggregate_absolute(sats: &[Sat]) -> Result<AggregateSat> {
    aggregate(sats, AggregationMode::Absolute)
}

/// Extends `sat` to cover every name in `k_star`. Added rows carry zero
/// attribution, mask size 0 and rank `n + 1` for the SAT's original row
/// count `n`; original rows are left untouched.
pub fn fill_to_union(sat: &Sat, k_star: &BTreeSet<String>) -> Result<Sat> {
    let present: BTreeSet<&str> = sat.names().collect();
    if let Some(unknown) = present.iter().find(|n| !k_star.contains(**n)) {
        return Err(Error::UnknownName(unknown.to_string()));
    }
    let fill_rank = (sat.rows.len() + 1) as f64;
    let mut out = sat.clone();
    for name in k_star.iter().filter(|n| !present.contains(n.as_str())) {
        out.rows.push(SatRow {
            segment_name: name.clone(),
            mean_attr: 0.0,
            abs_mean_attr: 0.0,
            total_attr: 0.0,
            mask_size: 0,
            rank: fill_rank,
            position: Position::CentreCentre,
            image_id: sat.image_id.clone(),
            segment_id: format!("{}:{}", sat.image_id, name),
            method_tag: sat.method_tag.clone(),
        });
    }
    Ok(out)
}

/// Splits a corpus into (class_label, method_tag) strata, sorted by key.
/// With `merge_classes`, strata differ only by method tag.
pub fn stratify(sats: &[Sat], merge_classes: bool) -> Vec<Vec<Sat>> {
    let mut strata: BTreeMap<(Option<String>, String), Vec<Sat>> = BTreeMap::new();
    for s in sats {
        let class = if merge_classes { None } else { s.class_label.clone() };
        strata.entry((class, s.method_tag.clone())).or_default().push(s.clone());
    }
    strata.into_values().collect()
}

/// Aggregates every stratum of the corpus.
pub fn aggregate_strata(sats: &[Sat], mode: AggregationMode, merge_classes: bool) -> Result<Vec<AggregateSat>> {
    if sats.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    stratify(sats, merge_classes).iter().map(|stratum| aggregate(stratum, mode)).collect()
}
