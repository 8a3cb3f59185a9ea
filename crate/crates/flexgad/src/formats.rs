//! Native text and binary formats for edges, features and labels.
//!
//! Edge file: one `u v` pair of 0-based node ids per line, `#` starts a
//! comment line. Features: headerless CSV, or `FGFM` + u64 rows + u64 cols +
//! row-major little-endian f64. Labels: one `0` or `1` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flexgad_core::graph::BuildReport;
use flexgad_core::{AttributedGraph, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, IoError, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FGFM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    #[default]
    Csv,
    Binary,
}

impl FeatureFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            FeatureFormat::Csv => "features.csv",
            FeatureFormat::Binary => "features.bin",
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).at(path)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).at(path)
}

/// Reads an edge list. With `num_nodes`, ids are bounds-checked so the
/// error can name the offending line.
pub fn read_edges(path: &Path, num_nodes: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.at(path)?;
        let lineno = i + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut parts = body.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = parts
                .next()
                .ok_or_else(|| IoError::parse(path, lineno, "expected two node ids"))?;
            tok.parse()
                .map_err(|_| IoError::parse(path, lineno, format!("invalid node id {tok:?}")))
        };
        let (u, v) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(IoError::parse(path, lineno, "expected exactly two node ids"));
        }
        if let Some(n) = num_nodes {
            if u >= n || v >= n {
                return Err(IoError::parse(
                    path,
                    lineno,
                    format!("edge ({u}, {v}) out of bounds for {n} nodes"),
                ));
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn write_edges(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut w = create(path)?;
    for (u, v) in edges {
        writeln!(w, "{u} {v}").at(path)?;
    }
    w.flush().at(path)
}

/// Reads features in either format, detected from the leading magic bytes.
pub fn read_features(path: &Path) -> Result<Matrix> {
    let mut head = [0u8; 4];
    let n = open(path)?.read(&mut head).at(path)?;
    if n == 4 && &head == FEATURE_MAGIC {
        read_features_binary(path)
    } else {
        read_features_csv(path)
    }
}

pub fn read_features_csv(path: &Path) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            IoError::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(rows + 1, |p| p.line() as usize);
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(IoError::parse(
                    path,
                    line,
                    format!("row has {} columns, expected {c}", rec.len()),
                ))
            }
            Some(_) => {}
        }
        for field in &rec {
            let x: f64 = field
                .parse()
                .map_err(|_| IoError::parse(path, line, format!("invalid number {field:?}")))?;
            if !x.is_finite() {
                return Err(IoError::parse(path, line, format!("non-finite value {field:?}")));
            }
            data.push(x);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| IoError::format(path, "feature file has no rows"))?;
    Matrix::from_vec(rows, cols, data).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn read_features_binary(path: &Path) -> Result<Matrix> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).at(path)?;
    if bytes.len() < 20 || &bytes[..4] != FEATURE_MAGIC {
        return Err(IoError::format(path, "missing FGFM header"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (word(4), word(12));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(20))
        .ok_or_else(|| IoError::format(path, "shape overflows"))?;
    if bytes.len() as u64 != expected {
        return Err(IoError::format(
            path,
            format!("{rows}x{cols} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(IoError::format(path, format!("non-finite value in row {}", i / cols as usize)));
    }
    Matrix::from_vec(rows as usize, cols as usize, data).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_features(path: &Path, x: &Matrix, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Csv => write_features_csv(path, x),
        FeatureFormat::Binary => write_features_binary(path, x),
    }
}

/// Values are written with `{}` formatting, which round-trips every f64.
pub fn write_features_csv(path: &Path, x: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    for r in 0..x.rows() {
        let line: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).at(path)?;
    }
    w.flush().at(path)
}

pub fn write_features_binary(path: &Path, x: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(FEATURE_MAGIC).at(path)?;
    w.write_all(&(x.rows() as u64).to_le_bytes()).at(path)?;
    w.write_all(&(x.cols() as u64).to_le_bytes()).at(path)?;
    for v in x.as_slice() {
        w.write_all(&v.to_le_bytes()).at(path)?;
    }
    w.flush().at(path)
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut labels = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.at(path)?;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        match body {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => return Err(IoError::parse(path, i + 1, format!("label {other:?} is not 0 or 1"))),
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}").at(path)?;
    }
    w.flush().at(path)
}

/// Summary of a load, including both edge-count conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub num_nodes: usize,
    pub num_features: usize,
    /// Distinct unordered pairs after cleaning.
    pub undirected_edges: usize,
    /// Adjacency entries, each undirected edge counted in both directions.
    pub directed_edges: usize,
    pub raw_entries: usize,
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

impl LoadReport {
    fn new(g: &AttributedGraph, b: BuildReport) -> Self {
        Self {
            num_nodes: g.num_nodes(),
            num_features: g.num_features(),
            undirected_edges: g.num_edges(),
            directed_edges: g.num_directed_entries(),
            raw_entries: b.raw_entries,
            self_loops_dropped: b.self_loops_dropped,
            duplicates_collapsed: b.duplicates_collapsed,
        }
    }
}

/// Loads and validates a graph. The node count is the number of feature rows.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(AttributedGraph, LoadReport)> {
    let features = read_features(feature_path)?;
    let n = features.rows();
    let edges = read_edges(edge_path, Some(n))?;
    let labels = match label_path {
        Some(p) => {
            let l = read_labels(p)?;
            if l.len() != n {
                return Err(IoError::format(p, format!("{} labels for {n} nodes", l.len())));
            }
            Some(l)
        }
        None => None,
    };
    let (g, build) = AttributedGraph::build(n, edges, features, labels).map_err(|error| IoError::Graph {
        path: edge_path.to_path_buf(),
        error,
    })?;
    if build.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            edge_path.display(),
            build.self_loops_dropped
        );
    }
    let report = LoadReport::new(&g, build);
    log::info!(
        "loaded {} nodes, {} features, {} undirected edges ({} directed)",
        report.num_nodes,
        report.num_features,
        report.undirected_edges,
        report.directed_edges
    );
    Ok((g, report))
}

/// File names used when a graph is written as a directory.
pub const EDGES_FILE: &str = "edges.txt";
pub const LABELS_FILE: &str = "labels.txt";

/// Writes `edges.txt`, the feature file and, when present, `labels.txt`
/// into `dir`.
pub fn write_graph(dir: &Path, g: &AttributedGraph, format: FeatureFormat) -> Result<()> {
    write_edges(&dir.join(EDGES_FILE), g.edges())?;
    write_features(&dir.join(format.file_name()), g.features(), format)?;
    if let Some(l) = g.labels() {
        write_labels(&dir.join(LABELS_FILE), l)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_graph() {
        let d = tempfile::tempdir().unwrap();
        let e = put(d.path(), "e", "# comment\n0 1\n");
        let f = put(d.path(), "f", "1\n2\n");
        let (g, r) = load_graph(&e, &f, None).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.num_features()), (2, 1, 1));
        assert_eq!((r.undirected_edges, r.directed_edges), (1, 2));
    }

    #[test]
    fn symmetric_listing_counts_once() {
        let d = tempfile::tempdir().unwrap();
        let e = put(d.path(), "e", "0 1\n1 0\n1 1\n");
        let f = put(d.path(), "f", "1\n2\n");
        let (g, r) = load_graph(&e, &f, None).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(r.self_loops_dropped, 1);
        assert_eq!(r.duplicates_collapsed, 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let d = tempfile::tempdir().unwrap();
        let f = put(d.path(), "f", "1\n2\n");
        let bad = put(d.path(), "e", "0 1\n0 x\n");
        let err = load_graph(&bad, &f, None).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }), "{err}");
        let three = put(d.path(), "e3", "0 1 2\n");
        assert!(matches!(read_edges(&three, None), Err(IoError::Parse { line: 1, .. })));
        let oob = put(d.path(), "e4", "\n0 5\n");
        assert!(matches!(load_graph(&oob, &f, None), Err(IoError::Parse { line: 2, .. })));
        let ragged = put(d.path(), "r", "1,2\n3\n");
        assert!(matches!(read_features(&ragged), Err(IoError::Parse { line: 2, .. })));
        let lab = put(d.path(), "l", "0\n2\n");
        assert!(matches!(read_labels(&lab), Err(IoError::Parse { line: 2, .. })));
        let short = put(d.path(), "l2", "0\n");
        let e = put(d.path(), "e5", "0 1\n");
        assert!(load_graph(&e, &f, Some(&short)).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_features(Path::new("/nonexistent/feat.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/feat.csv"));
    }

    #[test]
    fn binary_features_round_trip_and_reject_truncation() {
        let d = tempfile::tempdir().unwrap();
        let x = Matrix::from_rows(&[[0.1, -2.5e-300], [f64::MAX, 3.0]]);
        let p = d.path().join("x.bin");
        write_features_binary(&p, &x).unwrap();
        assert_eq!(read_features(&p).unwrap(), x);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_features(&p), Err(IoError::Format { .. })));
    }
}
