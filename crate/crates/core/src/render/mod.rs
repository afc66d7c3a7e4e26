//! Standalone SVG output: critical difference diagrams and horizontal
//! top-k bar charts. Rendering is a pure function of its inputs.

mod svg;

use crate::error::{Error, Result};
use crate::model::{AggregateRow, AggregateSat, SignificanceReport, Warning};

use svg::{nice_step, text_width, tick_label, Svg};

pub use svg::{nice_step as tick_step, nice_ticks};

pub const BAR_GREY: &str = "#9e9e9e";
pub const HIGHLIGHT_BLUE: &str = "#1f77b4";

#[derive(Debug, Clone, PartialEq)]
pub struct CdOptions {
    pub width: f64,
    pub font_size: f64,
    /// Append appearance count and relative mean rank to labels.
    pub show_relative: bool,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self { width: 720.0, font_size: 12.0, show_relative: true }
    }
}

fn cd_label(report: &SignificanceReport, i: usize, opts: &CdOptions) -> String {
    let name = &report.segment_names[i];
    if opts.show_relative {
        format!("{name} (n={}, rel. {:.2})", report.appearance_counts[i], report.relative_mean_ranks[i])
    } else {
        name.clone()
    }
}

/// Critical difference diagram. Names sit at their absolute mean rank on an
/// axis from 1 to k, best rank on the left; the better half is labelled on
/// the left, the rest on the right; each clique of two or more names is
/// one horizontal bar below the axis.
pub fn render_cd_diagram(report: &SignificanceReport, opts: &CdOptions) -> Result<String> {
    let k = report.len();
    if k < 2 {
        return Err(Error::DegenerateReport(k));
    }
    let fs = opts.font_size;
    let labels: Vec<String> = (0..k).map(|i| cd_label(report, i, opts)).collect();
    let widest = labels.iter().map(|l| text_width(l, fs)).fold(0.0, f64::max);
    let side = (widest + 24.0).min(opts.width * 0.3).max(40.0);
    let (axis_left, axis_right) = (side, (opts.width - side).max(side + 100.0));
    let width = axis_right + side;
    let axis_y = 36.0;
    let x_of = |rank: f64| axis_left + (rank - 1.0) / (k as f64 - 1.0) * (axis_right - axis_left);

    let bars: Vec<&Vec<usize>> = report.cliques.iter().filter(|c| c.len() >= 2).collect();
    let bar_top = axis_y + 14.0;
    let bar_gap = 7.0;
    let label_top = bar_top + bars.len() as f64 * bar_gap + fs + 8.0;
    let row_h = fs * 1.6;
    let left_count = k.div_ceil(2);
    let rows = left_count.max(k - left_count);
    let height = label_top + rows as f64 * row_h + 12.0;

    let mut doc = Svg::new(width, height);
    doc.line(axis_left, axis_y, axis_right, axis_y, 1.0, "axis");
    for r in 1..=k {
        let x = x_of(r as f64);
        doc.line(x, axis_y - 6.0, x, axis_y, 1.0, "tick");
        doc.text(x, axis_y - 10.0, fs * 0.9, "middle", "tick-label", &r.to_string());
        if r < k {
            let xm = x_of(r as f64 + 0.5);
            doc.line(xm, axis_y - 3.0, xm, axis_y, 0.7, "tick");
        }
    }

    for (row, clique) in bars.iter().enumerate() {
        let lo = report.mean_ranks[*clique.first().expect("clique non-empty")];
        let hi = report.mean_ranks[*clique.last().expect("clique non-empty")];
        let y = bar_top + row as f64 * bar_gap;
        doc.line(x_of(lo) - 3.0, y, x_of(hi) + 3.0, y, 3.0, "clique");
    }

    // left: best first from the top; right: worst first from the top
    let mut placements: Vec<(usize, usize, bool)> = (0..left_count).map(|i| (i, i, true)).collect();
    placements.extend((left_count..k).rev().enumerate().map(|(row, i)| (i, row, false)));
    for (i, row, left) in placements {
        let x = x_of(report.mean_ranks[i]);
        let y = label_top + row as f64 * row_h;
        let end_x = if left { axis_left - 10.0 } else { axis_right + 10.0 };
        doc.polyline(&[(x, axis_y), (x, y), (end_x, y)], "elbow");
        let (text_x, anchor) = if left { (end_x - 4.0, "end") } else { (end_x + 4.0, "start") };
        doc.text(text_x, y + fs * 0.35, fs, anchor, "label", &labels[i]);
        let rank_x = if left { end_x + 2.0 } else { end_x - 2.0 };
        let rank_anchor = if left { "start" } else { "end" };
        doc.text(rank_x, y - 3.0, fs * 0.75, rank_anchor, "rank", &format!("{:.2}", report.mean_ranks[i]));
    }
    Ok(doc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarMetric {
    RelativeMeanAttr,
    AbsoluteMeanAttr,
    RelativeMeanRank,
    AbsoluteMeanRank,
}

impl BarMetric {
    fn value(self, row: &AggregateRow) -> Option<f64> {
        match self {
            BarMetric::RelativeMeanAttr => row.relative_mean_attr(),
            BarMetric::AbsoluteMeanAttr => row.absolute_mean_attr(),
            BarMetric::RelativeMeanRank => row.relative_mean_rank(),
            BarMetric::AbsoluteMeanRank => row.absolute_mean_rank(),
        }
    }

    fn is_rank(self) -> bool {
        matches!(self, BarMetric::RelativeMeanRank | BarMetric::AbsoluteMeanRank)
    }

    fn axis_title(self) -> &'static str {
        match self {
            BarMetric::RelativeMeanAttr => "relative aggregate mean attribution",
            BarMetric::AbsoluteMeanAttr => "absolute aggregate mean attribution",
            BarMetric::RelativeMeanRank => "relative aggregate mean rank",
            BarMetric::AbsoluteMeanRank => "absolute aggregate mean rank",
        }
    }
}

impl std::str::FromStr for BarMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative_mean_attr" => Ok(Self::RelativeMeanAttr),
            "absolute_mean_attr" => Ok(Self::AbsoluteMeanAttr),
            "relative_mean_rank" => Ok(Self::RelativeMeanRank),
            "absolute_mean_rank" => Ok(Self::AbsoluteMeanRank),
            other => Err(Error::UnknownField {
                field: other.to_string(),
                valid: ["relative_mean_attr", "absolute_mean_attr", "relative_mean_rank", "absolute_mean_rank"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarOptions {
    pub width: f64,
    pub font_size: f64,
    pub top_k: usize,
    pub metric: BarMetric,
    pub highlight: Option<String>,
    pub title: Option<String>,
}

impl Default for BarOptions {
    fn default() -> Self {
        Self {
            width: 640.0,
            font_size: 12.0,
            top_k: 7,
            metric: BarMetric::RelativeMeanAttr,
            highlight: None,
            title: None,
        }
    }
}

/// Names in the order a bar chart shows them: attribution descending, rank
/// ascending, ties by name; truncated to `top_k`.
pub fn bar_order(agg: &AggregateSat, metric: BarMetric, top_k: usize) -> Result<Vec<(&str, f64)>> {
    let mut rows = agg
        .rows
        .iter()
        .map(|r| {
            metric
                .value(r)
                .map(|v| (r.name.as_str(), v))
                .ok_or_else(|| Error::BadConfig(format!("aggregate has no {} values", metric.axis_title())))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        let o = if metric.is_rank() { a.1.total_cmp(&b.1) } else { b.1.total_cmp(&a.1) };
        o.then_with(|| a.0.cmp(b.0))
    });
    rows.truncate(top_k);
    Ok(rows)
}

/// Horizontal bar chart of the `top_k` segments. A highlight name that is
/// not among the drawn bars yields a warning and no highlight.
pub fn render_bar_chart(agg: &AggregateSat, opts: &BarOptions) -> Result<(String, Vec<Warning>)> {
    if agg.rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if opts.top_k == 0 {
        return Err(Error::BadConfig("top_k must be at least 1".into()));
    }
    let rows = bar_order(agg, opts.metric, opts.top_k)?;
    let mut warnings = Vec::new();
    if let Some(h) = &opts.highlight {
        if !rows.iter().any(|(n, _)| n == h) {
            warnings.push(Warning {
                context: "bar chart".into(),
                message: format!("highlight segment {h:?} not among the drawn bars; rendered without highlight"),
            });
        }
    }

    let fs = opts.font_size;
    let widest = rows.iter().map(|(n, _)| text_width(n, fs)).fold(0.0, f64::max);
    let plot_left = (widest + 16.0).min(opts.width * 0.4);
    let plot_right = (opts.width - 24.0).max(plot_left + 100.0);
    let width = plot_right + 24.0;
    let top = if opts.title.is_some() { 34.0 } else { 12.0 };
    let bar_h = 18.0;
    let gap = 6.0;
    let plot_bottom = top + rows.len() as f64 * (bar_h + gap);
    let height = plot_bottom + 46.0;

    let max = rows.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    let ticks = nice_ticks(max, 5);
    let step = nice_step(max, 5);
    let axis_max = *ticks.last().expect("at least one tick");
    let x_of = |v: f64| plot_left + if axis_max > 0.0 { v / axis_max } else { 0.0 } * (plot_right - plot_left);

    let mut doc = Svg::new(width, height);
    if let Some(t) = &opts.title {
        doc.text(width / 2.0, 20.0, fs * 1.15, "middle", "title", t);
    }
    for (i, (name, value)) in rows.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let highlighted = opts.highlight.as_deref() == Some(*name);
        let (fill, class) = if highlighted { (HIGHLIGHT_BLUE, "bar highlight") } else { (BAR_GREY, "bar") };
        doc.rect(plot_left, y, x_of(*value) - plot_left, bar_h, fill, class);
        doc.text(plot_left - 6.0, y + bar_h / 2.0 + fs * 0.35, fs, "end", "label", name);
    }
    doc.line(plot_left, plot_bottom, plot_right, plot_bottom, 1.0, "axis");
    doc.line(plot_left, top - 4.0, plot_left, plot_bottom, 1.0, "axis");
    for t in &ticks {
        let x = x_of(*t);
        doc.line(x, plot_bottom, x, plot_bottom + 5.0, 1.0, "tick");
        doc.text(x, plot_bottom + 17.0, fs * 0.85, "middle", "tick-label", &tick_label(*t, step));
    }
    doc.text((plot_left + plot_right) / 2.0, plot_bottom + 36.0, fs, "middle", "axis-title", opts.metric.axis_title());
    Ok((doc.finish(), warnings))
}
