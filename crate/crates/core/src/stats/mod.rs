//! Pairwise significance testing behind critical difference diagrams.
//!
//! Every SAT is first extended to the corpus-wide name set (absolute
//! aggregation fill). For each pair of names the per-image rank differences
//! go through a two-sided Wilcoxon signed-rank test; the `k(k-1)/2` p-values
//! are Holm-adjusted jointly; cliques are the maximal runs of names, in mean
//! rank order, with no rejected pair inside.

mod holm;
mod wilcoxon;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::aggregate::{aggregate, fill_to_union, name_union, AggregationMode};
use crate::error::{Error, Result};
use crate::model::{Sat, SignificanceReport};

pub use holm::holm_adjust;
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMode, WilcoxonResult, EXACT_LIMIT};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Per-image rank differences for one name pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub name_a: String,
    pub name_b: String,
    pub differences: Vec<f64>,
}

/// Rank differences `rank_a - rank_b` for every pair of names, over SATs
/// filled to the union of names. Images are visited in `image_id` order.
pub fn paired_samples(sats: &[Sat], names: &[String]) -> Result<Vec<PairedSample>> {
    let k_star = name_union(sats);
    let mut filled = sats.iter().map(|s| fill_to_union(s, &k_star)).collect::<Result<Vec<_>>>()?;
    filled.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let ranks: Vec<BTreeMap<&str, f64>> =
        filled.iter().map(|s| s.rows.iter().map(|r| (r.segment_name.as_str(), r.rank)).collect()).collect();
    let mut out = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let differences = ranks
                .iter()
                .map(|r| {
                    let ra = r.get(a.as_str()).ok_or_else(|| Error::UnknownName(a.clone()))?;
                    let rb = r.get(b.as_str()).ok_or_else(|| Error::UnknownName(b.clone()))?;
                    Ok(ra - rb)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(PairedSample { name_a: a.clone(), name_b: b.clone(), differences });
        }
    }
    Ok(out)
}

pub fn build_significance(sats: &[Sat], alpha: f64) -> Result<SignificanceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if sats.len() < 2 {
        return Err(Error::DegenerateCorpus(sats.len()));
    }
    let agg = aggregate(sats, AggregationMode::Both)?;
    let mut order: Vec<_> = agg.rows.iter().collect();
    order.sort_by(|a, b| {
        let ka = a.absolute_mean_rank().expect("both modes computed");
        let kb = b.absolute_mean_rank().expect("both modes computed");
        ka.total_cmp(&kb).then_with(|| a.name.cmp(&b.name))
    });
    let names: Vec<String> = order.iter().map(|r| r.name.clone()).collect();
    let k = names.len();

    let samples = paired_samples(sats, &names)?;
    let results =
        samples.iter().map(|s| wilcoxon_signed_rank(&s.differences, WilcoxonMode::Auto)).collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let adjusted = holm_adjust(&raw)?;

    let mut p_matrix = vec![vec![1.0; k]; k];
    let mut adjusted_p_matrix = vec![vec![1.0; k]; k];
    let mut rejected = vec![vec![false; k]; k];
    let mut n_paired = vec![vec![0usize; k]; k];
    let mut all_zero_pairs = Vec::new();
    let mut idx = 0;
    for i in 0..k {
        n_paired[i][i] = sats.len();
        for j in i + 1..k {
            let r = &results[idx];
            for (a, b) in [(i, j), (j, i)] {
                p_matrix[a][b] = raw[idx];
                adjusted_p_matrix[a][b] = adjusted[idx];
                rejected[a][b] = adjusted[idx] < alpha;
                n_paired[a][b] = samples[idx].differences.len();
            }
            if r.all_zero {
                all_zero_pairs.push((i, j));
            }
            idx += 1;
        }
    }
    let cliques = cliques_from_rejections(&rejected);
    Ok(SignificanceReport {
        segment_names: names,
        mean_ranks: order.iter().map(|r| r.absolute_mean_rank().unwrap()).collect(),
        relative_mean_ranks: order.iter().map(|r| r.relative_mean_rank().unwrap()).collect(),
        appearance_counts: order.iter().map(|r| r.appearance_count).collect(),
        corpus_size: sats.len(),
        p_matrix,
        adjusted_p_matrix,
        rejected,
        all_zero_pairs,
        n_paired,
        cliques,
        alpha,
    })
}

/// Maximal contiguous runs (over indices already sorted by mean rank) in
/// which no pair is rejected. Each start index is extended as far right as
/// possible; runs contained in another run are pruned. Names that differ
/// from both neighbours come out as singletons.
pub fn cliques_from_rejections(rejected: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let k = rejected.len();
    let mut windows: Vec<(usize, usize)> = Vec::with_capacity(k);
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && (start..=end).all(|i| !rejected[i][end + 1]) {
            end += 1;
        }
        windows.push((start, end));
    }
    let keep: Vec<(usize, usize)> = windows
        .iter()
        .copied()
        .filter(|&(s, e)| !windows.iter().any(|&(s2, e2)| (s2, e2) != (s, e) && s2 <= s && e <= e2))
        .collect();
    keep.into_iter().map(|(s, e)| (s..=e).collect()).collect()
}

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    names: &'a [String],
    mean_ranks: &'a [f64],
    relative_mean_ranks: &'a [f64],
    appearance_counts: &'a [usize],
    corpus_size: usize,
    alpha: f64,
    /// Upper triangle, row-major: (0,1), (0,2), ..., (1,2), ...
    p_values: Vec<f64>,
    adjusted_p_values: Vec<f64>,
    rejected: Vec<bool>,
    n_paired: Vec<usize>,
    all_zero_pairs: Vec<[&'a str; 2]>,
    cliques: Vec<Vec<&'a str>>,
}

fn upper<T: Copy>(m: &[Vec<T>]) -> Vec<T> {
    (0..m.len()).flat_map(|i| (i + 1..m.len()).map(move |j| m[i][j])).collect()
}

pub fn report_to_json(report: &SignificanceReport) -> String {
    let names = &report.segment_names;
    let doc = ReportJson {
        names,
        mean_ranks: &report.mean_ranks,
        relative_mean_ranks: &report.relative_mean_ranks,
        appearance_counts: &report.appearance_counts,
        corpus_size: report.corpus_size,
        alpha: report.alpha,
        p_values: upper(&report.p_matrix),
        adjusted_p_values: upper(&report.adjusted_p_matrix),
        rejected: upper(&report.rejected),
        n_paired: upper(&report.n_paired),
        all_zero_pairs: report.all_zero_pairs.iter().map(|&(i, j)| [names[i].as_str(), names[j].as_str()]).collect(),
        cliques: report.clique_names(),
    };
    serde_json::to_string_pretty(&doc).expect("report serialises")
}
