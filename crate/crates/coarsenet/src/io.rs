//! On-disk formats: TSV edge lists, the CMX1 binary feature matrix (with a
//! text alternative), label/split/partition files, JSON-lines records, and
//! adapters for citation-style and OGB-CSV-style dataset layouts.
//!
//! All node-referencing text files use dense ids after remapping; the
//! dense-to-original mapping is emitted as `id_map.tsv`.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{CoarseGraph, Graph, Partition, Split};
use crate::matrix::Matrix;

const FEATURE_MAGIC: &[u8; 4] = b"CMX1";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Raw directed records from an edge file: `src<TAB>dst[<TAB>weight]`,
/// `#` comments and blank lines skipped, weight defaults to 1.0.
pub fn read_edge_records(path: &Path) -> Result<Vec<(u64, u64, f64)>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut it = body.split('\t');
        let src = it
            .next()
            .and_then(|t| t.trim().parse::<u64>().ok())
            .ok_or_else(|| parse_err(path, lineno, "bad source id"))?;
        let dst = it
            .next()
            .and_then(|t| t.trim().parse::<u64>().ok())
            .ok_or_else(|| parse_err(path, lineno, "bad destination id"))?;
        let w = match it.next() {
            None => 1.0,
            Some(t) => t
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, lineno, "bad weight"))?,
        };
        if !w.is_finite() || w <= 0.0 {
            return Err(parse_err(path, lineno, format!("non-positive weight {w}")));
        }
        if it.next().is_some() {
            return Err(parse_err(path, lineno, "too many fields"));
        }
        out.push((src, dst, w));
    }
    Ok(out)
}

fn read_id_value_records(path: &Path) -> Result<Vec<(u64, String)>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut it = body.split('\t');
        let id = it
            .next()
            .and_then(|t| t.trim().parse::<u64>().ok())
            .ok_or_else(|| parse_err(path, lineno, "bad node id"))?;
        let val = it
            .next()
            .ok_or_else(|| parse_err(path, lineno, "missing value field"))?
            .trim()
            .to_string();
        if it.next().is_some() {
            return Err(parse_err(path, lineno, "too many fields"));
        }
        out.push((id, val));
    }
    Ok(out)
}

/// Read a feature matrix; sniffs the CMX1 binary magic and falls back to the
/// text format (`n d` header, then rows of floats).
pub fn read_features(path: &Path) -> Result<Matrix> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    let got = {
        let mut read = 0;
        while read < 4 {
            match f.read(&mut magic[read..])? {
                0 => break,
                k => read += k,
            }
        }
        read
    };
    if got == 4 && &magic == FEATURE_MAGIC {
        let mut u64buf = [0u8; 8];
        f.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        f.read_exact(&mut u64buf)?;
        let d = u64::from_le_bytes(u64buf) as usize;
        let count = n
            .checked_mul(d)
            .ok_or_else(|| Error::input("feature matrix dimensions overflow"))?;
        let mut data = vec![0.0f64; count];
        for v in data.iter_mut() {
            f.read_exact(&mut u64buf)?;
            *v = f64::from_le_bytes(u64buf);
        }
        return Ok(Matrix {
            rows: n,
            cols: d,
            data,
        });
    }
    // Text fallback: re-read from the start.
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines().enumerate();
    let (header_no, header) = loop {
        match lines.next() {
            None => return Err(parse_err(path, 1, "empty feature file")),
            Some((idx, line)) => {
                let line = line?;
                let body = line.split('#').next().unwrap_or("").trim().to_string();
                if !body.is_empty() {
                    break (idx + 1, body);
                }
            }
        }
    };
    let mut hd = header.split_whitespace();
    let n: usize = hd
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, header_no, "bad n in header"))?;
    let d: usize = hd
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, header_no, "bad d in header"))?;
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals: Vec<f64> = body
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, idx + 1, "bad float"))?;
        if vals.len() != d {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {d} values, got {}", vals.len()),
            ));
        }
        data.extend(vals);
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, header_no, format!("expected {n} rows, got {rows}")));
    }
    Ok(Matrix { rows: n, cols: d, data })
}

/// Write the binary feature format: magic, n, d, then n*d f64 values, all
/// little-endian.
pub fn write_features_binary(path: &Path, m: &Matrix) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(FEATURE_MAGIC)?;
    f.write_all(&(m.rows as u64).to_le_bytes())?;
    f.write_all(&(m.cols as u64).to_le_bytes())?;
    for &v in &m.data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

fn parse_split(s: &str) -> Option<Split> {
    match s {
        "train" => Some(Split::Train),
        "valid" => Some(Split::Valid),
        "test" => Some(Split::Test),
        _ => None,
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Valid => "valid",
        Split::Test => "test",
    }
}

/// A loaded dataset plus the dense → original id mapping.
pub struct LoadedGraph {
    pub graph: Graph,
    /// `id_map[dense] = original id`.
    pub id_map: Vec<u64>,
}

/// Load a dataset from native files. Node ids may be arbitrary nonnegative
/// integers; they are remapped to dense `[0, n)` in ascending original-id
/// order, and feature row `i` belongs to dense id `i`. Directed duplicates
/// are symmetrized by taking the maximum weight; self-loops are dropped.
pub fn load_graph(
    edges_path: &Path,
    features_path: &Path,
    labels_path: Option<&Path>,
    splits_path: Option<&Path>,
) -> Result<LoadedGraph> {
    let raw_edges = read_edge_records(edges_path)?;
    let raw_labels = match labels_path {
        Some(p) => read_id_value_records(p)?,
        None => Vec::new(),
    };
    let raw_splits = match splits_path {
        Some(p) => read_id_value_records(p)?,
        None => Vec::new(),
    };
    let x = read_features(features_path)?;
    let n = x.rows;

    let mut ids: BTreeSet<u64> = BTreeSet::new();
    for &(u, v, _) in &raw_edges {
        ids.insert(u);
        ids.insert(v);
    }
    for (u, _) in raw_labels.iter().chain(&raw_splits) {
        ids.insert(*u);
    }
    // Already-dense ids keep their positions (allowing isolated trailing
    // nodes covered only by feature rows); otherwise every feature row must
    // be claimed by exactly one distinct id.
    let dense_already = ids.iter().next_back().map_or(true, |&m| (m as usize) < n);
    let id_map: Vec<u64> = if dense_already {
        (0..n as u64).collect()
    } else if ids.len() == n {
        ids.iter().copied().collect()
    } else {
        return Err(Error::input(format!(
            "{} distinct node ids but {} feature rows; sparse id spaces must cover every feature row",
            ids.len(),
            n
        )));
    };
    let lookup: std::collections::HashMap<u64, u32> = id_map
        .iter()
        .enumerate()
        .map(|(i, &orig)| (orig, i as u32))
        .collect();
    let map = |orig: u64| -> Result<u32> {
        lookup
            .get(&orig)
            .copied()
            .ok_or_else(|| Error::input(format!("node id {orig} out of range for {n} nodes")))
    };

    // Symmetrize by max weight; drop self-loops.
    let mut undirected: std::collections::BTreeMap<(u32, u32), f64> = std::collections::BTreeMap::new();
    for &(u, v, w) in &raw_edges {
        let (u, v) = (map(u)?, map(v)?);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        let e = undirected.entry(key).or_insert(0.0);
        *e = e.max(w);
    }
    let edges: Vec<(u32, u32, f64)> = undirected
        .into_iter()
        .map(|((u, v), w)| (u, v, w))
        .collect();

    let mut labels = vec![None; n];
    for (orig, val) in &raw_labels {
        let c: u32 = val
            .parse()
            .map_err(|_| Error::input(format!("bad class '{val}' for node {orig}")))?;
        labels[map(*orig)? as usize] = Some(c);
    }
    let mut splits = vec![None; n];
    for (orig, val) in &raw_splits {
        let s = parse_split(val)
            .ok_or_else(|| Error::input(format!("bad split '{val}' for node {orig}")))?;
        splits[map(*orig)? as usize] = Some(s);
    }

    let graph = Graph::new(n, &edges, x, labels, splits)?;
    Ok(LoadedGraph { graph, id_map })
}

pub fn write_id_map(path: &Path, id_map: &[u64]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for (dense, orig) in id_map.iter().enumerate() {
        writeln!(f, "{dense}\t{orig}")?;
    }
    f.flush()?;
    Ok(())
}

/// Write a partition as `node<TAB>supernode` lines.
pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for (node, &s) in p.assign.iter().enumerate() {
        writeln!(f, "{node}\t{s}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let recs = read_id_value_records(path)?;
    let mut assign = vec![u32::MAX; recs.len()];
    let mut n_prime = 0usize;
    for (node, val) in &recs {
        let node = *node as usize;
        if node >= assign.len() {
            return Err(Error::input(format!("partition node id {node} out of range")));
        }
        let s: u32 = val
            .parse()
            .map_err(|_| Error::input(format!("bad supernode '{val}'")))?;
        assign[node] = s;
        n_prime = n_prime.max(s as usize + 1);
    }
    Partition::new(assign, n_prime)
}

/// Write coarse-graph artifacts into `dir`: `edges.tsv` (diagonal entries as
/// self-referential lines carrying intra-cluster weight), `features.bin`,
/// `sizes.tsv`, and `labels.tsv`.
pub fn write_coarse(dir: &Path, cg: &CoarseGraph) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(File::create(dir.join("edges.tsv"))?);
    for u in 0..cg.n_prime as u32 {
        for &(v, w) in &cg.adj[u as usize] {
            if u <= v {
                writeln!(f, "{u}\t{v}\t{w}")?;
            }
        }
    }
    f.flush()?;
    write_features_binary(&dir.join("features.bin"), &cg.x)?;
    let mut f = BufWriter::new(File::create(dir.join("sizes.tsv"))?);
    for (i, &s) in cg.sizes.iter().enumerate() {
        writeln!(f, "{i}\t{s}")?;
    }
    f.flush()?;
    let mut f = BufWriter::new(File::create(dir.join("labels.tsv"))?);
    for (i, l) in cg.labels.iter().enumerate() {
        if let Some(c) = l {
            writeln!(f, "{i}\t{c}")?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_coarse(dir: &Path) -> Result<CoarseGraph> {
    let x = read_features(&dir.join("features.bin"))?;
    let n_prime = x.rows;
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_prime];
    for (u, v, w) in read_edge_records(&dir.join("edges.tsv"))? {
        let (u, v) = (u as usize, v as usize);
        if u >= n_prime || v >= n_prime {
            return Err(Error::input(format!("coarse edge ({u}, {v}) out of range")));
        }
        adj[u].push((v as u32, w));
        if u != v {
            adj[v].push((u as u32, w));
        }
    }
    for row in adj.iter_mut() {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    let mut sizes = vec![0u64; n_prime];
    for (i, val) in read_id_value_records(&dir.join("sizes.tsv"))? {
        let i = i as usize;
        if i >= n_prime {
            return Err(Error::input("sizes entry out of range"));
        }
        sizes[i] = val
            .parse()
            .map_err(|_| Error::input(format!("bad size '{val}'")))?;
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::input("missing size entry for some supernode"));
    }
    let mut labels = vec![None; n_prime];
    let labels_path = dir.join("labels.tsv");
    if labels_path.exists() {
        for (i, val) in read_id_value_records(&labels_path)? {
            let i = i as usize;
            if i >= n_prime {
                return Err(Error::input("label entry out of range"));
            }
            labels[i] = Some(
                val.parse()
                    .map_err(|_| Error::input(format!("bad class '{val}'")))?,
            );
        }
    }
    // Degrees are row sums of A' with the diagonal counted once.
    let degrees: Vec<f64> = adj
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum())
        .collect();
    Ok(CoarseGraph {
        n_prime,
        adj,
        sizes,
        x,
        degrees,
        labels,
    })
}

/// Write pairs (LP holdout) as `a<TAB>b` lines.
pub fn write_pairs(path: &Path, pairs: &[(u32, u32)]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for &(a, b) in pairs {
        writeln!(f, "{a}\t{b}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    read_id_value_records(path)?
        .into_iter()
        .map(|(a, b)| {
            let b: u32 = b
                .parse()
                .map_err(|_| Error::input(format!("bad pair endpoint '{b}'")))?;
            Ok((a as u32, b))
        })
        .collect()
}

/// Append one serialized JSON object as a line.
pub fn append_json_line<T: Serialize, W: Write>(w: &mut W, record: &T) -> Result<()> {
    let s = serde_json::to_string(record)?;
    writeln!(w, "{s}")?;
    Ok(())
}

/// Convert citation-style files (`.content`: `id feat... label`;
/// `.cites`: `cited citing`) into the native layout under `out_dir`:
/// `edges.tsv`, `features.bin`, `labels.tsv`, `id_map.tsv`, and
/// `class_names.tsv`. Ids are densified in `.content` file order; class
/// names map to ids in sorted-name order.
pub fn convert_citation(content: &Path, cites: &Path, out_dir: &Path) -> Result<()> {
    let mut id_map: Vec<u64> = Vec::new();
    let mut lookup = std::collections::HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let f = File::open(content)?;
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(content, idx + 1, "expected id, features, label"));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(content, idx + 1, "bad paper id"))?;
        let feats: Vec<f64> = fields[1..fields.len() - 1]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(content, idx + 1, "bad feature value"))?;
        if lookup.insert(id, id_map.len() as u32).is_some() {
            return Err(parse_err(content, idx + 1, format!("duplicate paper id {id}")));
        }
        id_map.push(id);
        rows.push(feats);
        label_names.push(fields[fields.len() - 1].to_string());
    }
    let mut classes: Vec<String> = label_names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    classes.sort();

    fs::create_dir_all(out_dir)?;
    let x = Matrix::from_rows(&rows)?;
    write_features_binary(&out_dir.join("features.bin"), &x)?;
    write_id_map(&out_dir.join("id_map.tsv"), &id_map)?;
    let mut f = BufWriter::new(File::create(out_dir.join("labels.tsv"))?);
    for (dense, name) in label_names.iter().enumerate() {
        let c = classes.binary_search(name).unwrap();
        writeln!(f, "{dense}\t{c}")?;
    }
    f.flush()?;
    let mut f = BufWriter::new(File::create(out_dir.join("class_names.tsv"))?);
    for (c, name) in classes.iter().enumerate() {
        writeln!(f, "{c}\t{name}")?;
    }
    f.flush()?;

    let f = File::open(cites)?;
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let mut it = body.split_whitespace();
        let a: u64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(cites, idx + 1, "bad cited id"))?;
        let b: u64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(cites, idx + 1, "bad citing id"))?;
        // Citations referencing papers absent from .content are dropped.
        if let (Some(&da), Some(&db)) = (lookup.get(&a), lookup.get(&b)) {
            if da != db {
                edges.insert((da.min(db), da.max(db)));
            }
        }
    }
    let mut f = BufWriter::new(File::create(out_dir.join("edges.tsv"))?);
    for (a, b) in edges {
        writeln!(f, "{a}\t{b}")?;
    }
    f.flush()?;
    Ok(())
}

/// Convert an OGB-exported CSV directory (`edge.csv`: `src,dst` per line;
/// `node-feat.csv`: comma-separated floats per node; optional
/// `node-label.csv`) into the native layout under `out_dir`.
pub fn convert_ogb_csv(in_dir: &Path, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let feat_path = in_dir.join("node-feat.csv");
    let f = File::open(&feat_path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .trim()
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(&feat_path, idx + 1, "bad float"))?;
        rows.push(vals);
    }
    let x = Matrix::from_rows(&rows)?;
    write_features_binary(&out_dir.join("features.bin"), &x)?;

    let edge_path = in_dir.join("edge.csv");
    let f = File::open(&edge_path)?;
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.trim().split(',');
        let a: u32 = it
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| parse_err(&edge_path, idx + 1, "bad source id"))?;
        let b: u32 = it
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| parse_err(&edge_path, idx + 1, "bad destination id"))?;
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut f = BufWriter::new(File::create(out_dir.join("edges.tsv"))?);
    for (a, b) in edges {
        writeln!(f, "{a}\t{b}")?;
    }
    f.flush()?;

    let label_path = in_dir.join("node-label.csv");
    if label_path.exists() {
        let f = File::open(&label_path)?;
        let mut out = BufWriter::new(File::create(out_dir.join("labels.tsv"))?);
        for (idx, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let c: u32 = line
                .trim()
                .parse()
                .map_err(|_| parse_err(&label_path, idx + 1, "bad class"))?;
            writeln!(out, "{idx}\t{c}")?;
        }
        out.flush()?;
    }
    Ok(())
}

/// Write labels as `node<TAB>class` lines, skipping unlabeled nodes.
pub fn write_labels(path: &Path, labels: &[Option<u32>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            writeln!(f, "{i}\t{c}")?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Write splits as `node<TAB>train|valid|test` lines, skipping nodes outside
/// all splits.
pub fn write_splits(path: &Path, splits: &[Option<Split>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for (i, s) in splits.iter().enumerate() {
        if let Some(s) = s {
            writeln!(f, "{i}\t{}", split_name(*s))?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn write_edges(path: &Path, g: &Graph) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for u in 0..g.n as u32 {
        for &(v, w) in &g.adj[u as usize] {
            if u < v {
                writeln!(f, "{u}\t{v}\t{w}")?;
            }
        }
    }
    f.flush()?;
    Ok(())
}
