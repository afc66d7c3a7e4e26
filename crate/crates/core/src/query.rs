//! Filter / group / reduce / sort queries over SAT rows or aggregates.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::{AGGREGATE_COLUMNS, SAT_COLUMNS};
use crate::model::{AggregateSat, Sat};
use crate::numeric::{format_g17, order_invariant_sum};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl Value {
    fn cmp_total(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Num(_), Value::Text(_)) => Ordering::Less,
            (Value::Text(_), Value::Num(_)) => Ordering::Greater,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Text(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Num(v) => format_g17(*v),
            Value::Text(s) => s.clone(),
        }
    }
}

/// A rectangular table of named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn from_sats(sats: &[Sat]) -> Self {
        let mut columns: Vec<String> = SAT_COLUMNS.iter().map(|s| s.to_string()).collect();
        columns.push("class_label".into());
        let rows = sats
            .iter()
            .flat_map(|sat| {
                sat.rows.iter().map(move |r| {
                    vec![
                        Value::Text(r.image_id.clone()),
                        Value::Text(r.segment_id.clone()),
                        Value::Text(r.segment_name.clone()),
                        Value::Text(r.method_tag.clone()),
                        Value::Num(r.mean_attr),
                        Value::Num(r.abs_mean_attr),
                        Value::Num(r.total_attr),
                        Value::Num(r.mask_size as f64),
                        Value::Num(r.rank),
                        Value::Text(r.position.to_string()),
                        Value::Text(sat.class_label.clone().unwrap_or_default()),
                    ]
                })
            })
            .collect();
        Self { columns, rows }
    }

    /// Empty aggregate cells (a mode that was not computed) become NaN.
    pub fn from_aggregates(aggs: &[AggregateSat]) -> Self {
        let mut columns: Vec<String> = AGGREGATE_COLUMNS.iter().map(|s| s.to_string()).collect();
        columns.push("class_label".into());
        columns.push("method_tag".into());
        let num = |v: Option<f64>| Value::Num(v.unwrap_or(f64::NAN));
        let rows = aggs
            .iter()
            .flat_map(|agg| {
                agg.rows.iter().map(move |r| {
                    vec![
                        Value::Text(r.name.clone()),
                        num(r.relative_mean_attr()),
                        num(r.absolute_mean_attr()),
                        num(r.relative_mean_rank()),
                        num(r.absolute_mean_rank()),
                        Value::Num(r.appearance_count as f64),
                        Value::Num(r.corpus_size as f64),
                        Value::Text(agg.class_label.clone().unwrap_or_default()),
                        Value::Text(agg.method_tag.clone()),
                    ]
                })
            })
            .collect();
        Self { columns, rows }
    }

    fn column(&self, field: &str) -> Result<usize> {
        // "name" addresses the segment name in SAT tables
        let field = if field == "name" && !self.columns.iter().any(|c| c == "name") { "segment_name" } else { field };
        self.columns
            .iter()
            .position(|c| c == field)
            .ok_or_else(|| Error::UnknownField { field: field.to_string(), valid: self.columns.clone() })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("query output", std::io::Error::other(e.to_string()));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("query output", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Ge,
    Le,
    Eq,
    Ne,
    Gt,
    Lt,
}

impl Comparator {
    fn holds(self, o: Ordering) -> bool {
        match self {
            Comparator::Ge => o != Ordering::Less,
            Comparator::Le => o != Ordering::Greater,
            Comparator::Eq => o == Ordering::Equal,
            Comparator::Ne => o != Ordering::Equal,
            Comparator::Gt => o == Ordering::Greater,
            Comparator::Lt => o == Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub field: String,
    pub comparator: Comparator,
    pub value: String,
}

impl Filter {
    /// Parses `field<op>value`, e.g. `mask_size>=100` or `position==top-left`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let split = text
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .ok_or_else(|| Error::BadComparator(text.to_string()))?;
        let (field, rest) = text.split_at(split);
        let op_len = rest.find(|c: char| !"<>=!".contains(c)).unwrap_or(rest.len());
        let (op, value) = rest.split_at(op_len);
        let comparator = match op {
            ">=" => Comparator::Ge,
            "<=" => Comparator::Le,
            "==" | "=" => Comparator::Eq,
            "!=" => Comparator::Ne,
            ">" => Comparator::Gt,
            "<" => Comparator::Lt,
            _ => return Err(Error::BadComparator(text.to_string())),
        };
        if field.is_empty() {
            return Err(Error::BadQuery(format!("filter {text:?} has no field")));
        }
        Ok(Self { field: field.to_string(), comparator, value: value.trim().to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Mean,
    Count,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reducer {
    pub op: ReduceOp,
    /// Ignored by `Count`.
    pub field: Option<String>,
}

impl Reducer {
    /// Parses `mean:field`, `min:field`, `max:field` or `count`.
    pub fn parse(text: &str) -> Result<Self> {
        let (op, field) = match text.split_once(':') {
            Some((op, f)) => (op, Some(f.trim().to_string())),
            None => (text, None),
        };
        let op = match op.trim() {
            "mean" => ReduceOp::Mean,
            "count" => ReduceOp::Count,
            "min" => ReduceOp::Min,
            "max" => ReduceOp::Max,
            other => return Err(Error::BadQuery(format!("unknown reducer {other:?}"))),
        };
        if op != ReduceOp::Count && field.is_none() {
            return Err(Error::BadQuery(format!("reducer {text:?} needs a field, e.g. mean:abs_mean_attr")));
        }
        Ok(Self { op, field })
    }

    fn column_name(&self) -> String {
        match (&self.op, &self.field) {
            (ReduceOp::Count, _) => "count".to_string(),
            (op, Some(f)) => format!("{}_{f}", format!("{op:?}").to_lowercase()),
            (op, None) => format!("{op:?}").to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub field: String,
    pub descending: bool,
}

impl SortKey {
    /// `field`, `field:asc` or `field:desc`; a leading `-` also means descending.
    pub fn parse(text: &str) -> Result<Self> {
        let (body, descending) = match text.strip_prefix('-') {
            Some(rest) => (rest, true),
            None => (text, false),
        };
        match body.split_once(':') {
            Some((f, "desc")) => Ok(Self { field: f.to_string(), descending: true }),
            Some((f, "asc")) => Ok(Self { field: f.to_string(), descending }),
            Some((_, dir)) => Err(Error::BadQuery(format!("unknown sort direction {dir:?}"))),
            None => Ok(Self { field: body.to_string(), descending }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuerySpec {
    pub filters: Vec<Filter>,
    pub group_by: Vec<String>,
    pub reduce: Option<Reducer>,
    pub sort: Option<SortKey>,
    pub top_k: Option<usize>,
}

/// Runs a query. Without grouping the table's columns pass through; with
/// grouping the output holds the group fields and one reduced column
/// (`count` when no reducer is given). Sort ties fall back to comparing
/// whole rows column by column.
pub fn query(table: &Table, spec: &QuerySpec) -> Result<Table> {
    let mut filters = Vec::with_capacity(spec.filters.len());
    for f in &spec.filters {
        let col = table.column(&f.field)?;
        let numeric_column = table.rows.first().map(|r| r[col].as_num().is_some()).unwrap_or(false);
        let target = if numeric_column {
            Value::Num(f.value.parse().map_err(|_| {
                Error::BadQuery(format!("field {:?} is numeric, {:?} is not a number", f.field, f.value))
            })?)
        } else {
            Value::Text(f.value.clone())
        };
        filters.push((col, f.comparator, target));
    }
    let kept = table.rows.iter().filter(|row| {
        filters.iter().all(|(col, cmp, target)| {
            let v = &row[*col];
            // NaN never satisfies an ordering comparison
            if matches!(v, Value::Num(x) if x.is_nan()) {
                return *cmp == Comparator::Ne;
            }
            cmp.holds(v.cmp_total(target))
        })
    });

    let mut out = if spec.group_by.is_empty() {
        Table { columns: table.columns.clone(), rows: kept.cloned().collect() }
    } else {
        let group_cols = spec.group_by.iter().map(|g| table.column(g)).collect::<Result<Vec<_>>>()?;
        let reducer = spec.reduce.clone().unwrap_or(Reducer { op: ReduceOp::Count, field: None });
        let value_col = match (&reducer.op, &reducer.field) {
            (ReduceOp::Count, _) => None,
            (_, Some(f)) => Some(table.column(f)?),
            (_, None) => unreachable!("Reducer::parse requires a field"),
        };
        let mut groups: BTreeMap<Vec<String>, (Vec<Value>, Vec<f64>)> = BTreeMap::new();
        for row in kept {
            let key_vals: Vec<Value> = group_cols.iter().map(|&c| row[c].clone()).collect();
            let key: Vec<String> = key_vals.iter().map(Value::render).collect();
            let entry = groups.entry(key).or_insert_with(|| (key_vals, Vec::new()));
            let v = match value_col {
                Some(c) => row[c]
                    .as_num()
                    .ok_or_else(|| Error::BadQuery(format!("cannot reduce text column {:?}", table.columns[c])))?,
                None => 1.0,
            };
            entry.1.push(v);
        }
        let mut columns: Vec<String> = spec.group_by.clone();
        columns.push(reducer.column_name());
        let rows = groups
            .into_values()
            .map(|(mut key, mut vals)| {
                let reduced = match reducer.op {
                    ReduceOp::Count => vals.len() as f64,
                    ReduceOp::Mean => order_invariant_sum(&mut vals) / vals.len() as f64,
                    ReduceOp::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    ReduceOp::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                key.push(Value::Num(reduced));
                key
            })
            .collect();
        Table { columns, rows }
    };

    if let Some(sort) = &spec.sort {
        let col = out.column(&sort.field)?;
        out.rows.sort_by(|a, b| {
            let primary = a[col].cmp_total(&b[col]);
            let primary = if sort.descending { primary.reverse() } else { primary };
            primary.then_with(|| {
                a.iter().zip(b).map(|(x, y)| x.cmp_total(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
            })
        });
    }
    if let Some(k) = spec.top_k {
        out.rows.truncate(k);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Position, SatRow};

    fn row(image: &str, name: &str, attr: f64, size: usize, pos: Position) -> SatRow {
        SatRow {
            segment_name: name.into(),
            mean_attr: attr,
            abs_mean_attr: attr.abs(),
            total_attr: attr * size as f64,
            mask_size: size,
            rank: 1.0,
            position: pos,
            image_id: image.into(),
            segment_id: format!("{image}:{name}"),
            method_tag: "m".into(),
        }
    }

    fn fixture() -> Vec<Sat> {
        use Position::*;
        let mk = |image: &str, rows: Vec<SatRow>| Sat {
            image_id: image.into(),
            method_tag: "m".into(),
            class_label: Some("dog".into()),
            rows,
        };
        vec![
            mk("i1", vec![row("i1", "eyes", 0.5, 40, TopLeft), row("i1", "body", 0.2, 400, CentreCentre)]),
            mk("i2", vec![row("i2", "eyes", 0.3, 120, TopCentre), row("i2", "body", -0.4, 600, CentreCentre)]),
            mk("i3", vec![row("i3", "eyes", 0.1, 150, TopLeft), row("i3", "grass", 0.05, 99, BottomLeft)]),
        ]
    }

    #[test]
    fn filter_group_mean_matches_hand_oracle() {
        let spec = QuerySpec {
            filters: vec![Filter::parse("mask_size>=100").unwrap()],
            group_by: vec!["name".into()],
            reduce: Some(Reducer::parse("mean:abs_mean_attr").unwrap()),
            ..Default::default()
        };
        let out = query(&Table::from_sats(&fixture()), &spec).unwrap();
        assert_eq!(out.columns, vec!["name", "mean_abs_mean_attr"]);
        // body: (0.2 + 0.4) / 2, eyes: (0.3 + 0.1) / 2; grass (99 px) and i1 eyes (40 px) excluded
        assert_eq!(
            out.rows,
            vec![
                vec![Value::Text("body".into()), Value::Num((0.2 + 0.4) / 2.0)],
                vec![Value::Text("eyes".into()), Value::Num((0.3 + 0.1) / 2.0)],
            ]
        );
    }

    #[test]
    fn empty_spec_is_identity() {
        let t = Table::from_sats(&fixture());
        assert_eq!(query(&t, &QuerySpec::default()).unwrap(), t);
    }

    #[test]
    fn group_by_position_counts() {
        let spec = QuerySpec { group_by: vec!["position".into()], ..Default::default() };
        let out = query(&Table::from_sats(&fixture()), &spec).unwrap();
        let top_left = out.rows.iter().find(|r| r[0] == Value::Text("top-left".into())).unwrap();
        assert_eq!(top_left[1], Value::Num(2.0));
    }

    #[test]
    fn sort_desc_with_lexicographic_ties_and_top_k() {
        let spec = QuerySpec { sort: Some(SortKey::parse("rank:desc").unwrap()), top_k: Some(3), ..Default::default() };
        let out = query(&Table::from_sats(&fixture()), &spec).unwrap();
        // every rank is 1, so ties fall back to image_id then segment_id
        let ids: Vec<_> = out.rows.iter().map(|r| r[1].render()).collect();
        assert_eq!(ids, vec!["i1:body", "i1:eyes", "i2:body"]);
    }

    #[test]
    fn unknown_field_lists_valid_fields() {
        let spec = QuerySpec { filters: vec![Filter::parse("colour==red").unwrap()], ..Default::default() };
        let err = query(&Table::from_sats(&fixture()), &spec).unwrap_err();
        match err {
            Error::UnknownField { field, valid } => {
                assert_eq!(field, "colour");
                assert!(valid.contains(&"mask_size".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_comparator() {
        assert!(matches!(Filter::parse("mask_size=>100"), Err(Error::BadComparator(_))));
        assert!(matches!(Filter::parse("mask_size~100"), Err(Error::BadComparator(_))));
        assert!(matches!(Filter::parse("mask_size"), Err(Error::BadComparator(_))));
    }

    #[test]
    fn text_filters() {
        let spec = QuerySpec { filters: vec![Filter::parse("position==top-left").unwrap()], ..Default::default() };
        assert_eq!(query(&Table::from_sats(&fixture()), &spec).unwrap().rows.len(), 2);
    }

    #[test]
    fn top_seven_over_aggregate() {
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "i"];
        let sats: Vec<Sat> = vec![Sat {
            image_id: "x".into(),
            method_tag: "m".into(),
            class_label: None,
            rows: names
                .iter()
                .enumerate()
                .map(|(i, n)| row("x", n, 0.01 * (i + 1) as f64, 10, Position::CentreCentre))
                .collect(),
        }];
        let agg = crate::aggregate::aggregate_relative(&sats).unwrap();
        let spec = QuerySpec {
            sort: Some(SortKey::parse("-relative_mean_attr").unwrap()),
            top_k: Some(7),
            ..Default::default()
        };
        let out = query(&Table::from_aggregates(&[agg]), &spec).unwrap();
        let got: Vec<_> = out.rows.iter().map(|r| r[0].render()).collect();
        assert_eq!(got, vec!["i", "h", "g", "f", "e", "d", "c"]);
    }
}
