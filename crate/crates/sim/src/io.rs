//! Edge-list CSV for single graphs and streams, JSON helpers and CSV tables.
//!
//! A graph file is an optional `n=N` line followed by a `i,j,w` header and
//! one row per revealed pair with `w ∈ {-1, +1}`. A stream file has the same
//! shape with a leading `t` column. Absent pairs are unrevealed (0). Without
//! an `n=` line the node count is one past the largest index.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use cbmdetect_core::TernaryGraph;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, SimError};

/// Graphs keyed by the time indices that appear in a stream file, in
/// increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStream {
    pub n: usize,
    pub steps: Vec<(u64, TernaryGraph)>,
}

impl GraphStream {
    pub fn graphs(&self) -> impl Iterator<Item = &TernaryGraph> {
        self.steps.iter().map(|(_, g)| g)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

struct Row {
    line: u64,
    t: u64,
    i: usize,
    j: usize,
    w: i8,
}

struct EdgeList {
    n: Option<usize>,
    rows: Vec<Row>,
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str, line: u64) -> Result<T> {
    let raw = field.ok_or_else(|| SimError::parse(line, format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| SimError::parse(line, format!("bad {name} value {raw:?}")))
}

fn parse_edge_list<R: Read>(mut reader: R, timed: bool) -> Result<EdgeList> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut offset = 0u64;
    let mut n = None;
    let mut body = text.as_str();
    if let Some(first) = body.lines().next() {
        if let Some(value) = first.trim().strip_prefix("n=") {
            let count = value
                .trim()
                .parse::<usize>()
                .map_err(|_| SimError::parse(1, format!("bad node count {value:?}")))?;
            n = Some(count);
            offset = 1;
            body = body.split_once('\n').map_or("", |(_, rest)| rest);
        }
    }
    let expected: &[&str] = if timed { &["t", "i", "j", "w"] } else { &["i", "j", "w"] };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line()) + offset;
            SimError::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line()) + offset;
        if !seen_header {
            if record.iter().collect::<Vec<_>>() != expected {
                return Err(SimError::parse(line, format!("expected header {}", expected.join(","))));
            }
            seen_header = true;
            continue;
        }
        if record.len() != expected.len() {
            return Err(SimError::parse(line, format!("expected {} columns, found {}", expected.len(), record.len())));
        }
        let mut fields = record.iter();
        let t = if timed { parse_field(fields.next(), "t", line)? } else { 0 };
        let i: usize = parse_field(fields.next(), "i", line)?;
        let j: usize = parse_field(fields.next(), "j", line)?;
        let w: i64 = parse_field(fields.next(), "w", line)?;
        if w != 1 && w != -1 {
            return Err(SimError::parse(line, format!("w = {w}, expected -1 or +1")));
        }
        if i == j {
            return Err(SimError::parse(line, format!("self loop at node {i}")));
        }
        if let Some(n) = n {
            if i.max(j) >= n {
                return Err(SimError::parse(line, format!("node {} out of range for n = {n}", i.max(j))));
            }
        }
        rows.push(Row { line, t, i, j, w: w as i8 });
    }
    if n.is_none() && !seen_header && !body.trim().is_empty() {
        return Err(SimError::parse(1 + offset, "missing header"));
    }
    Ok(EdgeList { n, rows })
}

fn node_count(list: &EdgeList) -> usize {
    list.n.unwrap_or_else(|| list.rows.iter().map(|r| r.i.max(r.j) + 1).max().unwrap_or(0))
}

fn build_graph(n: usize, rows: &[&Row]) -> Result<TernaryGraph> {
    let mut graph = TernaryGraph::empty(n);
    let mut seen = HashSet::new();
    for row in rows {
        let key = (row.i.min(row.j), row.i.max(row.j));
        if !seen.insert(key) {
            return Err(SimError::parse(row.line, format!("duplicate pair ({}, {}) at t = {}", key.0, key.1, row.t)));
        }
        graph.set(key.0, key.1, row.w)?;
    }
    Ok(graph)
}

pub fn read_graph<R: Read>(reader: R) -> Result<TernaryGraph> {
    let list = parse_edge_list(reader, false)?;
    let rows: Vec<&Row> = list.rows.iter().collect();
    build_graph(node_count(&list), &rows)
}

/// Reads a stream file into one graph per distinct `t`.
pub fn ingest_stream<R: Read>(reader: R) -> Result<GraphStream> {
    let list = parse_edge_list(reader, true)?;
    let n = node_count(&list);
    let mut by_t: BTreeMap<u64, Vec<&Row>> = BTreeMap::new();
    for row in &list.rows {
        by_t.entry(row.t).or_default().push(row);
    }
    let steps = by_t
        .into_iter()
        .map(|(t, rows)| Ok((t, build_graph(n, &rows)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphStream { n, steps })
}

pub fn write_graph<W: Write>(mut writer: W, graph: &TernaryGraph) -> Result<()> {
    writeln!(writer, "n={}", graph.n())?;
    writeln!(writer, "i,j,w")?;
    for (i, j, w) in graph.edges() {
        writeln!(writer, "{i},{j},{w}")?;
    }
    Ok(())
}

/// Writes a stream; every graph must have `n` nodes. Steps with no revealed
/// pair leave no rows and are therefore dropped on re-ingestion.
pub fn write_stream<W: Write>(mut writer: W, n: usize, steps: &[(u64, TernaryGraph)]) -> Result<()> {
    writeln!(writer, "n={n}")?;
    writeln!(writer, "t,i,j,w")?;
    for (t, graph) in steps {
        if graph.n() != n {
            return Err(cbmdetect_core::Error::DimensionMismatch { expected: n, found: graph.n() }.into());
        }
        for (i, j, w) in graph.edges() {
            writeln!(writer, "{t},{i},{j},{w}")?;
        }
    }
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| SimError::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| SimError::io(path, e))
}

pub fn read_graph_file(path: &Path) -> Result<TernaryGraph> {
    read_graph(open(path)?)
}

pub fn write_graph_file(path: &Path, graph: &TernaryGraph) -> Result<()> {
    let mut w = create(path)?;
    write_graph(&mut w, graph)?;
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn ingest_stream_file(path: &Path) -> Result<GraphStream> {
    ingest_stream(open(path)?)
}

pub fn write_stream_file(path: &Path, n: usize, steps: &[(u64, TernaryGraph)]) -> Result<()> {
    let mut w = create(path)?;
    write_stream(&mut w, n, steps)?;
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Writes serializable rows as a CSV table with a header line.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(create(path)?, rows)
}
