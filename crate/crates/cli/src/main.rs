use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use satkit::aggregate::{aggregate_strata, AggregationMode};
use satkit::ingest::{
    build_corpus, load_manifest, read_aggregate_csv, read_sat_csv, write_aggregate_csv, write_aggregate_csv_to,
    write_sat_csv, AggregateCsvOptions, DEFAULT_PAD_RADIUS,
};
use satkit::model::{AggregateSat, Sat, Warning};
use satkit::query::{query, Filter, QuerySpec, Reducer, SortKey, Table};
use satkit::render::{render_bar_chart, render_cd_diagram, BarMetric, BarOptions, CdOptions};
use satkit::stats::{build_significance, report_to_json, DEFAULT_ALPHA};
use satkit::synth::{
    dump_corpus, generate_dataset, run_prevalence_sweep_jobs, sweep_csv, sweep_table, SynthConfig, DEFAULT_PREVALENCES,
    WATERMARK,
};
use satkit::Error;

/// Segment attribution tables: build, aggregate, test and plot.
#[derive(Debug, Parser)]
#[command(name = "satkit", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build one SAT per manifest entry and write them to a single CSV.
    Build(BuildArgs),
    /// Aggregate a SAT CSV per (class, method) stratum.
    Aggregate(AggregateArgs),
    /// Run pairwise significance tests and draw a critical difference diagram.
    Diagram(DiagramArgs),
    /// Draw a horizontal bar chart of the top segments of an aggregate CSV.
    Barplot(BarplotArgs),
    /// Filter, group, reduce and sort a SAT or aggregate CSV.
    Query(QueryArgs),
    /// Run the synthetic watermark prevalence sweep.
    WatermarkSweep(SweepArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Corpus manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Output SAT CSV.
    #[arg(long, short)]
    out: PathBuf,
    /// Square dilation radius applied to every mask.
    #[arg(long, default_value_t = DEFAULT_PAD_RADIUS)]
    pad_radius: usize,
    /// Worker threads; output order does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Relative,
    Absolute,
    Both,
}

impl From<ModeArg> for AggregationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Relative => AggregationMode::Relative,
            ModeArg::Absolute => AggregationMode::Absolute,
            ModeArg::Both => AggregationMode::Both,
        }
    }
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Input SAT CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Output aggregate CSV.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    /// Pool all class labels of a method into one stratum.
    #[arg(long)]
    merge_strata: bool,
    /// Round attribution and rank values to this many decimals.
    #[arg(long)]
    decimals: Option<usize>,
}

#[derive(Debug, Args)]
struct StratumArgs {
    /// Keep only this class label.
    #[arg(long = "class")]
    class_label: Option<String>,
    /// Keep only this method tag.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Debug, Args)]
struct DiagramArgs {
    /// Input SAT CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Output SVG.
    #[arg(long, short)]
    out: PathBuf,
    /// Family-wise significance level for the Holm-adjusted tests.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Also write the significance report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    stratum: StratumArgs,
    /// SVG width in pixels.
    #[arg(long, default_value_t = 720.0)]
    width: f64,
    /// Label with the bare segment name only.
    #[arg(long)]
    names_only: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    RelativeMeanAttr,
    AbsoluteMeanAttr,
    RelativeMeanRank,
    AbsoluteMeanRank,
}

impl From<MetricArg> for BarMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::RelativeMeanAttr => BarMetric::RelativeMeanAttr,
            MetricArg::AbsoluteMeanAttr => BarMetric::AbsoluteMeanAttr,
            MetricArg::RelativeMeanRank => BarMetric::RelativeMeanRank,
            MetricArg::AbsoluteMeanRank => BarMetric::AbsoluteMeanRank,
        }
    }
}

#[derive(Debug, Args)]
struct BarplotArgs {
    /// Input aggregate CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Output SVG.
    #[arg(long, short)]
    out: PathBuf,
    /// Number of bars; clamped to the number of segments.
    #[arg(long, default_value_t = 7)]
    top_k: usize,
    /// Segment drawn in the highlight colour.
    #[arg(long)]
    highlight: Option<String>,
    #[arg(long, value_enum, default_value_t = MetricArg::RelativeMeanAttr)]
    metric: MetricArg,
    /// Chart title.
    #[arg(long)]
    title: Option<String>,
    #[command(flatten)]
    stratum: StratumArgs,
    /// SVG width in pixels.
    #[arg(long, default_value_t = 640.0)]
    width: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableKind {
    Sat,
    Aggregate,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Input CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Kind of table in the input.
    #[arg(long, value_enum, default_value_t = TableKind::Sat)]
    table: TableKind,
    /// Row filter such as mask_size>=100 or position==top-left; repeatable, all must hold.
    #[arg(long)]
    filter: Vec<String>,
    /// Group rows by these fields; repeatable.
    #[arg(long)]
    group_by: Vec<String>,
    /// Reducer for grouped rows: mean:FIELD, min:FIELD, max:FIELD or count.
    #[arg(long)]
    reduce: Option<String>,
    /// Sort key: FIELD, FIELD:asc, FIELD:desc or -FIELD.
    #[arg(long)]
    sort: Option<String>,
    /// Keep the first K rows after sorting.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Directory for sweep.csv, sweep_table.txt, config.json, aggregates and bar charts.
    #[arg(long)]
    out_dir: PathBuf,
    /// Synthetic lab configuration (JSON; unspecified fields take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the shortcut-collapse configuration instead of the default.
    #[arg(long)]
    collapse: bool,
    /// Seed for every random choice; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated ascending prevalences in [0, 1].
    #[arg(long, value_delimiter = ',')]
    prevalences: Option<Vec<f64>>,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write each sweep point's watermarked test set in the ingest formats.
    #[arg(long)]
    dump: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_io() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult<T = ()> = Result<T, Failure>;

fn warn(warnings: &[Warning]) {
    let mut err = io::stderr().lock();
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn write_file(path: &Path, content: &str) -> CliResult {
    fs::write(path, content).map_err(|e| Failure { code: 1, message: format!("cannot write {}: {e}", path.display()) })
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Failure { code: 1, message: format!("cannot create {}: {e}", path.display()) })
}

fn cmd_build(a: &BuildArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let (sats, warnings) = build_corpus(&manifest, a.pad_radius, a.jobs.max(1))?;
    warn(&warnings);
    write_sat_csv(&sats, &a.out)?;
    Ok(())
}

fn cmd_aggregate(a: &AggregateArgs) -> CliResult {
    let (sats, warnings) = read_sat_csv(&a.input)?;
    warn(&warnings);
    let aggs = if sats.is_empty() {
        warn(&[Warning { context: a.input.display().to_string(), message: "no SAT rows; writing header only".into() }]);
        Vec::new()
    } else {
        aggregate_strata(&sats, a.mode.into(), a.merge_strata)?
    };
    write_aggregate_csv(&aggs, &a.out, AggregateCsvOptions { decimals: a.decimals })?;
    Ok(())
}

fn select_sats(sats: Vec<Sat>, s: &StratumArgs) -> CliResult<Vec<Sat>> {
    let kept: Vec<Sat> = sats
        .into_iter()
        .filter(|sat| s.class_label.as_ref().is_none_or(|c| sat.class_label.as_ref() == Some(c)))
        .filter(|sat| s.method.as_ref().is_none_or(|m| &sat.method_tag == m))
        .collect();
    let mut methods: Vec<&str> = kept.iter().map(|s| s.method_tag.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    if methods.len() > 1 {
        return Err(usage(format!(
            "input holds several method tags ({}); choose one with --method",
            methods.join(", ")
        )));
    }
    Ok(kept)
}

fn cmd_diagram(a: &DiagramArgs) -> CliResult {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Error::InvalidAlpha(a.alpha).into());
    }
    let (sats, warnings) = read_sat_csv(&a.input)?;
    warn(&warnings);
    let sats = select_sats(sats, &a.stratum)?;
    let report = build_significance(&sats, a.alpha)?;
    let svg =
        render_cd_diagram(&report, &CdOptions { width: a.width, show_relative: !a.names_only, ..Default::default() })?;
    write_file(&a.out, &svg)?;
    if let Some(path) = &a.report {
        write_file(path, &(report_to_json(&report) + "\n"))?;
    }
    Ok(())
}

fn select_aggregate(aggs: Vec<AggregateSat>, s: &StratumArgs) -> CliResult<AggregateSat> {
    let mut kept: Vec<AggregateSat> = aggs
        .into_iter()
        .filter(|a| s.class_label.as_ref().is_none_or(|c| a.class_label.as_ref() == Some(c)))
        .filter(|a| s.method.as_ref().is_none_or(|m| &a.method_tag == m))
        .collect();
    match kept.len() {
        0 => Err(usage("no aggregate stratum matches the selection")),
        1 => Ok(kept.remove(0)),
        _ => {
            let names: Vec<String> =
                kept.iter().map(|a| format!("{}/{}", a.class_label.as_deref().unwrap_or("-"), a.method_tag)).collect();
            Err(usage(format!(
                "input holds several strata ({}); choose one with --class and --method",
                names.join(", ")
            )))
        }
    }
}

fn cmd_barplot(a: &BarplotArgs) -> CliResult {
    if a.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let (aggs, warnings) = read_aggregate_csv(&a.input)?;
    warn(&warnings);
    let agg = select_aggregate(aggs, &a.stratum)?;
    let opts = BarOptions {
        width: a.width,
        top_k: a.top_k,
        metric: a.metric.into(),
        highlight: a.highlight.clone(),
        title: a.title.clone(),
        ..Default::default()
    };
    let (svg, warnings) = render_bar_chart(&agg, &opts)?;
    warn(&warnings);
    write_file(&a.out, &svg)
}

fn cmd_query(a: &QueryArgs) -> CliResult {
    let table = match a.table {
        TableKind::Sat => {
            let (sats, warnings) = read_sat_csv(&a.input)?;
            warn(&warnings);
            Table::from_sats(&sats)
        }
        TableKind::Aggregate => {
            let (aggs, warnings) = read_aggregate_csv(&a.input)?;
            warn(&warnings);
            Table::from_aggregates(&aggs)
        }
    };
    let spec = QuerySpec {
        filters: a.filter.iter().map(|f| Filter::parse(f)).collect::<Result<_, _>>()?,
        group_by: a.group_by.clone(),
        reduce: a.reduce.as_deref().map(Reducer::parse).transpose()?,
        sort: a.sort.as_deref().map(SortKey::parse).transpose()?,
        top_k: a.top_k,
    };
    let result = query(&table, &spec)?;
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Failure { code: 1, message: format!("cannot write {}: {e}", path.display()) })?;
            result.write_csv(io::BufWriter::new(file))?;
        }
        None => result.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn prevalence_label(p: f64) -> String {
    format!("prevalence-{p}")
}

fn cmd_sweep(a: &SweepArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure { code: 1, message: format!("cannot read {}: {e}", path.display()) })?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
        }
        None if a.collapse => SynthConfig::collapse(),
        None => SynthConfig::default(),
    };
    if a.collapse && a.config.is_some() {
        return Err(usage("--collapse and --config are mutually exclusive"));
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let prevalences = a.prevalences.clone().unwrap_or_else(|| DEFAULT_PREVALENCES.to_vec());
    let report = run_prevalence_sweep_jobs(&cfg, &prevalences, a.jobs.max(1))?;

    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("sweep.csv"), &sweep_csv(&report))?;
    write_file(&a.out_dir.join("sweep_table.txt"), &sweep_table(&report))?;
    let cfg_text = serde_json::to_string_pretty(&cfg).expect("config serialises") + "\n";
    write_file(&a.out_dir.join("config.json"), &cfg_text)?;

    let agg_dir = a.out_dir.join("aggregates");
    let bar_dir = a.out_dir.join("barplots");
    create_dir(&agg_dir)?;
    create_dir(&bar_dir)?;
    for point in &report.points {
        let label = prevalence_label(point.prevalence);
        let mut csv = Vec::new();
        write_aggregate_csv_to(std::slice::from_ref(&point.aggregate), &mut csv, AggregateCsvOptions::default())?;
        write_file(&agg_dir.join(format!("{label}.csv")), &String::from_utf8(csv).expect("csv is utf-8"))?;
        let opts = BarOptions {
            top_k: point.aggregate.rows.len(),
            metric: BarMetric::RelativeMeanRank,
            highlight: Some(WATERMARK.to_string()),
            title: Some(format!("{}% of zebra training images watermarked", point.prevalence * 100.0)),
            ..Default::default()
        };
        let (svg, warnings) = render_bar_chart(&point.aggregate, &opts)?;
        warn(&warnings);
        write_file(&bar_dir.join(format!("{label}.svg")), &svg)?;
        if a.dump {
            let data = generate_dataset(&cfg.with_prevalence(point.prevalence))?;
            dump_corpus(&point.model, &data.test_watermarked, &a.out_dir.join("corpus").join(&label))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Diagram(a) => cmd_diagram(a),
        Command::Barplot(a) => cmd_barplot(a),
        Command::Query(a) => cmd_query(a),
        Command::WatermarkSweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(io::stderr(), "error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
