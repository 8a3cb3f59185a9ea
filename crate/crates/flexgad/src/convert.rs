//! Converters from public benchmark dumps to the native formats.
//!
//! * `linqs`: a `<name>.content` file (`id f1 .. fM class`, tab or space
//!   separated) plus `<name>.cites` (`cited citing`). Node ids follow the
//!   order of the content file; citations naming unknown documents are skipped.
//!   Class labels are not anomaly labels and are dropped.
//! * `graphml`: numeric node attributes become feature columns in key
//!   declaration order; the attribute named by `label_key` becomes the label.
//! * `npy`: a directory with `x.npy` (N x M), `edge_index.npy` (2 x E or
//!   E x 2) and optionally `y.npy` (N, any nonzero value is an anomaly).

use std::collections::HashMap;
use std::path::Path;

use flexgad_core::{AttributedGraph, Matrix};
use serde::Serialize;

use crate::error::{IoContext, IoError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConvertReport {
    pub num_nodes: usize,
    pub num_features: usize,
    pub undirected_edges: usize,
    pub directed_edges: usize,
    pub raw_edge_entries: usize,
    pub skipped_edges: usize,
    pub self_loops_dropped: usize,
    pub missing_values: usize,
    pub labeled: bool,
}

fn finish(
    path: &Path,
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Option<Vec<u8>>,
    mut report: ConvertReport,
) -> Result<(AttributedGraph, ConvertReport)> {
    let (g, b) = AttributedGraph::build(n, edges, features, labels).map_err(|error| IoError::Graph {
        path: path.to_path_buf(),
        error,
    })?;
    report.num_nodes = g.num_nodes();
    report.num_features = g.num_features();
    report.undirected_edges = g.num_edges();
    report.directed_edges = g.num_directed_entries();
    report.raw_edge_entries = b.raw_entries;
    report.self_loops_dropped = b.self_loops_dropped;
    report.labeled = g.labels().is_some();
    Ok((g, report))
}

pub fn linqs(content: &Path, cites: &Path) -> Result<(AttributedGraph, ConvertReport)> {
    let text = std::fs::read_to_string(content).at(content)?;
    let mut ids = HashMap::new();
    let mut data = Vec::new();
    let mut cols = None;
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(IoError::parse(content, i + 1, "expected id, features and class"));
        }
        let feats = &toks[1..toks.len() - 1];
        match cols {
            None => cols = Some(feats.len()),
            Some(c) if c != feats.len() => {
                return Err(IoError::parse(content, i + 1, format!("{} features, expected {c}", feats.len())))
            }
            Some(_) => {}
        }
        for f in feats {
            let v: f64 = f
                .parse()
                .map_err(|_| IoError::parse(content, i + 1, format!("invalid feature {f:?}")))?;
            data.push(v);
        }
        let next = ids.len();
        if ids.insert(toks[0].to_string(), next).is_some() {
            return Err(IoError::parse(content, i + 1, format!("duplicate document id {}", toks[0])));
        }
    }
    let cols = cols.ok_or_else(|| IoError::format(content, "no nodes"))?;
    let n = ids.len();
    let features = Matrix::from_vec(n, cols, data)?;
    let mut report = ConvertReport::default();
    let mut edges = Vec::new();
    let text = std::fs::read_to_string(cites).at(cites)?;
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            [a, b] => match (ids.get(*a), ids.get(*b)) {
                (Some(&u), Some(&v)) => edges.push((u, v)),
                _ => report.skipped_edges += 1,
            },
            _ => return Err(IoError::parse(cites, i + 1, "expected two document ids")),
        }
    }
    if report.skipped_edges > 0 {
        log::warn!("{}: skipped {} citation(s) to unknown documents", cites.display(), report.skipped_edges);
    }
    finish(cites, n, edges, features, None, report)
}

struct Key {
    id: String,
    name: String,
    boolean: bool,
    default: Option<f64>,
}

fn graphml_value(raw: &str, boolean: bool) -> Option<f64> {
    let raw = raw.trim();
    if boolean {
        match raw.to_ascii_lowercase().as_str() {
            "true" | "1" => Some(1.0),
            "false" | "0" => Some(0.0),
            _ => None,
        }
    } else {
        raw.parse().ok().filter(|v: &f64| v.is_finite())
    }
}

pub fn graphml(path: &Path, label_key: &str) -> Result<(AttributedGraph, ConvertReport)> {
    let text = std::fs::read_to_string(path).at(path)?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| IoError::format(path, e.to_string()))?;
    let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row as usize;
    let mut keys = Vec::new();
    for k in doc.descendants().filter(|d| d.has_tag_name("key")) {
        let domain = k.attribute("for").unwrap_or("all");
        if domain != "node" && domain != "all" {
            continue;
        }
        let ty = k.attribute("attr.type").unwrap_or("string");
        if !matches!(ty, "int" | "long" | "float" | "double" | "boolean") {
            continue;
        }
        let boolean = ty == "boolean";
        let id = k.attribute("id").unwrap_or_default().to_string();
        let default = k
            .children()
            .find(|c| c.has_tag_name("default"))
            .and_then(|d| d.text())
            .and_then(|t| graphml_value(t, boolean));
        keys.push(Key {
            name: k.attribute("attr.name").unwrap_or(&id).to_string(),
            id,
            boolean,
            default,
        });
    }
    let label_idx = keys.iter().position(|k| k.name == label_key || k.id == label_key);
    let feature_keys: Vec<usize> = (0..keys.len()).filter(|&i| Some(i) != label_idx).collect();
    if feature_keys.is_empty() {
        return Err(IoError::format(path, "no numeric node attributes"));
    }
    let col_of: HashMap<&str, usize> = feature_keys
        .iter()
        .enumerate()
        .map(|(c, &k)| (keys[k].id.as_str(), c))
        .collect();
    let mut ids = HashMap::new();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut report = ConvertReport::default();
    for node in doc.descendants().filter(|d| d.has_tag_name("node")) {
        let id = node
            .attribute("id")
            .ok_or_else(|| IoError::parse(path, line_of(node), "node without id"))?;
        if ids.insert(id.to_string(), ids.len()).is_some() {
            return Err(IoError::parse(path, line_of(node), format!("duplicate node id {id}")));
        }
        let mut row = vec![None; feature_keys.len()];
        let mut label = None;
        for d in node.children().filter(|c| c.has_tag_name("data")) {
            let key = d.attribute("key").unwrap_or_default();
            let raw = d.text().unwrap_or_default();
            if let Some(&c) = col_of.get(key) {
                let k = &keys[feature_keys[c]];
                row[c] = Some(graphml_value(raw, k.boolean).ok_or_else(|| {
                    IoError::parse(path, line_of(d), format!("invalid value {raw:?} for {}", k.name))
                })?);
            } else if label_idx.is_some_and(|l| keys[l].id == key) {
                let v = graphml_value(raw, keys[label_idx.unwrap()].boolean)
                    .ok_or_else(|| IoError::parse(path, line_of(d), format!("invalid label {raw:?}")))?;
                label = Some(u8::from(v != 0.0));
            }
        }
        for (c, v) in row.into_iter().enumerate() {
            data.push(v.or(keys[feature_keys[c]].default).unwrap_or_else(|| {
                report.missing_values += 1;
                0.0
            }));
        }
        labels.push(label.or_else(|| label_idx.and_then(|l| keys[l].default).map(|v| u8::from(v != 0.0))));
    }
    let n = ids.len();
    if n == 0 {
        return Err(IoError::format(path, "no nodes"));
    }
    let mut edges = Vec::new();
    for e in doc.descendants().filter(|d| d.has_tag_name("edge")) {
        let end = |attr: &str| -> Result<usize> {
            let id = e
                .attribute(attr)
                .ok_or_else(|| IoError::parse(path, line_of(e), format!("edge without {attr}")))?;
            ids.get(id)
                .copied()
                .ok_or_else(|| IoError::parse(path, line_of(e), format!("edge to unknown node {id}")))
        };
        edges.push((end("source")?, end("target")?));
    }
    if report.missing_values > 0 {
        log::warn!("{}: {} missing attribute value(s) set to 0", path.display(), report.missing_values);
    }
    let labels = match label_idx {
        None => None,
        Some(_) => Some(
            labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| l.ok_or_else(|| IoError::format(path, format!("node {i} has no {label_key}"))))
                .collect::<Result<Vec<u8>>>()?,
        ),
    };
    let features = Matrix::from_vec(n, feature_keys.len(), data)?;
    finish(path, n, edges, features, labels, report)
}

/// Numeric `.npy` array as f64 with its shape, in row-major order.
pub fn read_npy(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = std::fs::read(path).at(path)?;
    let npy = npyz::NpyFile::new(&bytes[..]).at(path)?;
    let shape: Vec<usize> = npy.shape().iter().map(|&s| s as usize).collect();
    let fortran = npy.order() == npyz::Order::Fortran;
    let ty = npy.dtype().descr();
    let code = ty.trim_matches(|c| matches!(c, '\'' | '<' | '>' | '|' | '='));
    let data: Vec<f64> = match code {
        "f8" => npy.into_vec::<f64>().at(path)?,
        "f4" => npy.into_vec::<f32>().at(path)?.into_iter().map(f64::from).collect(),
        "i8" => npy.into_vec::<i64>().at(path)?.into_iter().map(|v| v as f64).collect(),
        "i4" => npy.into_vec::<i32>().at(path)?.into_iter().map(f64::from).collect(),
        "i2" => npy.into_vec::<i16>().at(path)?.into_iter().map(f64::from).collect(),
        "i1" => npy.into_vec::<i8>().at(path)?.into_iter().map(f64::from).collect(),
        "u8" => npy.into_vec::<u64>().at(path)?.into_iter().map(|v| v as f64).collect(),
        "u4" => npy.into_vec::<u32>().at(path)?.into_iter().map(f64::from).collect(),
        "u1" => npy.into_vec::<u8>().at(path)?.into_iter().map(f64::from).collect(),
        "b1" => npy.into_vec::<bool>().at(path)?.into_iter().map(|b| f64::from(u8::from(b))).collect(),
        other => return Err(IoError::format(path, format!("unsupported dtype {other}"))),
    };
    if fortran && shape.len() == 2 {
        let (r, c) = (shape[0], shape[1]);
        let mut out = vec![0.0; data.len()];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = data[j * r + i];
            }
        }
        return Ok((shape, out));
    }
    Ok((shape, data))
}

pub fn npy_dir(dir: &Path) -> Result<(AttributedGraph, ConvertReport)> {
    let xp = dir.join("x.npy");
    let (xs, x) = read_npy(&xp)?;
    let (n, m) = match xs.as_slice() {
        [n, m] => (*n, *m),
        [n] => (*n, 1),
        _ => return Err(IoError::format(&xp, format!("expected a 2-d array, shape {xs:?}"))),
    };
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(IoError::format(&xp, format!("non-finite value in row {}", i / m.max(1))));
    }
    let ep = dir.join("edge_index.npy");
    let (es, e) = read_npy(&ep)?;
    let as_id = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 && v < n as f64 {
            Ok(v as usize)
        } else {
            Err(IoError::format(&ep, format!("invalid node id {v} for {n} nodes")))
        }
    };
    let mut edges = Vec::new();
    match es.as_slice() {
        [2, count] => {
            for k in 0..*count {
                edges.push((as_id(e[k])?, as_id(e[count + k])?));
            }
        }
        [count, 2] => {
            for k in 0..*count {
                edges.push((as_id(e[2 * k])?, as_id(e[2 * k + 1])?));
            }
        }
        _ => return Err(IoError::format(&ep, format!("expected shape 2xE or Ex2, got {es:?}"))),
    }
    let yp = dir.join("y.npy");
    let labels = if yp.exists() {
        let (ys, y) = read_npy(&yp)?;
        if y.len() != n || ys.iter().product::<usize>() != n {
            return Err(IoError::format(&yp, format!("shape {ys:?} does not match {n} nodes")));
        }
        Some(y.into_iter().map(|v| u8::from(v != 0.0)).collect())
    } else {
        None
    };
    let features = Matrix::from_vec(n, m, x)?;
    finish(&ep, n, edges, features, labels, ConvertReport::default())
}
