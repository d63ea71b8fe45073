//! Text dataset directory: `graph.txt`, `features.txt`, `labels.txt`, `splits.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use graphacl_core::eval::Splits;
use graphacl_core::graph::{build_graph, Graph, Labels};
use graphacl_core::linalg::DenseMatrix;
use graphacl_core::rng::{rng_from_seed, shuffle};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// Labeled graph.
    pub graph: Graph,
    pub features: DenseMatrix,
    pub splits: Splits,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn data_err(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Data { path: path.to_path_buf(), msg: msg.into() }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_usize(path: &Path, line: usize, tok: &str) -> CliResult<usize> {
    tok.parse().map_err(|_| parse_err(path, line, format!("`{tok}` is not a non-negative integer")))
}

/// Reads `graph.txt`: header `N M`, then exactly `M` edge lines.
pub fn parse_graph(path: &Path) -> CliResult<(usize, Vec<(usize, usize)>)> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (hl, header) = lines.next().ok_or_else(|| data_err(path, "empty file, expected header `N M`"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(parse_err(path, hl, format!("expected header `N M`, found `{header}`")));
    }
    let n = parse_usize(path, hl, head[0])?;
    let m = parse_usize(path, hl, head[1])?;
    let mut edges = Vec::with_capacity(m);
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(path, ln, format!("expected `u v`, found `{line}`")));
        }
        let u = parse_usize(path, ln, toks[0])?;
        let v = parse_usize(path, ln, toks[1])?;
        for x in [u, v] {
            if x >= n {
                return Err(parse_err(path, ln, format!("node {x} out of range for N = {n}")));
            }
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(data_err(path, format!("header declares {m} edges, found {}", edges.len())));
    }
    Ok((n, edges))
}

pub fn parse_features(path: &Path) -> CliResult<DenseMatrix> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in content_lines(&text) {
        let before = data.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok.parse().map_err(|_| parse_err(path, ln, format!("`{tok}` is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(path, ln, format!("non-finite value `{tok}`")));
            }
            data.push(x);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(path, ln, format!("row has {width} values, previous rows have {c}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| data_err(path, "no feature rows"))?;
    Ok(DenseMatrix::from_vec(rows, cols, data)?)
}

pub fn parse_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = read(path)?;
    content_lines(&text)
        .map(|(ln, line)| {
            if line.split_whitespace().count() != 1 {
                return Err(parse_err(path, ln, format!("expected one label, found `{line}`")));
            }
            parse_usize(path, ln, line)
        })
        .collect()
}

pub fn parse_splits(path: &Path) -> CliResult<Splits> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Loads and validates a dataset directory. Duplicate and reverse edges are merged.
pub fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    let graph_path = dir.join("graph.txt");
    let feat_path = dir.join("features.txt");
    let label_path = dir.join("labels.txt");
    let split_path = dir.join("splits.json");
    let (n, edges) = parse_graph(&graph_path)?;
    let features = parse_features(&feat_path)?;
    if features.rows() != n {
        return Err(data_err(
            &feat_path,
            format!("{} feature rows but graph.txt declares N = {n}", features.rows()),
        ));
    }
    let ids = parse_labels(&label_path)?;
    if ids.len() != n {
        return Err(data_err(&label_path, format!("{} labels but graph.txt declares N = {n}", ids.len())));
    }
    let splits = parse_splits(&split_path)?;
    splits.validate(n).map_err(|e| data_err(&split_path, e.to_string()))?;
    let graph = build_graph(&edges, n, Some(Labels::infer(ids))).map_err(|e| data_err(&graph_path, e.to_string()))?;
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Dataset { name, graph, features, splits })
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(CliError::io(path))?))
}

/// Writes `ds` in the directory format; the inverse of [`load_dataset`] up to edge order.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let write_all = |path: PathBuf, body: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| {
        let mut w = create(&path)?;
        body(&mut w).and_then(|_| w.flush()).map_err(CliError::io(&path))
    };
    write_all(dir.join("graph.txt"), &|w| {
        writeln!(w, "{} {}", ds.graph.num_nodes(), ds.graph.num_edges())?;
        for (u, v) in ds.graph.edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    })?;
    write_all(dir.join("features.txt"), &|w| {
        for r in 0..ds.features.rows() {
            let row: Vec<String> = ds.features.row(r).iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    })?;
    let labels = ds.graph.require_labels()?;
    write_all(dir.join("labels.txt"), &|w| {
        for y in labels.ids() {
            writeln!(w, "{y}")?;
        }
        Ok(())
    })?;
    write_all(dir.join("splits.json"), &|w| {
        serde_json::to_writer(&mut *w, &ds.splits).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

/// Seeded 60/20/20 node split.
pub fn random_splits(num_nodes: usize, seed: u64) -> Splits {
    let mut order: Vec<usize> = (0..num_nodes).collect();
    shuffle(&mut order, &mut rng_from_seed(seed));
    let train_end = num_nodes * 3 / 5;
    let val_end = train_end + num_nodes / 5;
    let part = |r: std::ops::Range<usize>| {
        let mut v = order[r].to_vec();
        v.sort_unstable();
        v
    };
    Splits { train: part(0..train_end), val: part(train_end..val_end), test: part(val_end..num_nodes) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_files(dir: &Path, graph: &str, features: &str, labels: &str, splits: &str) {
        fs::write(dir.join("graph.txt"), graph).unwrap();
        fs::write(dir.join("features.txt"), features).unwrap();
        fs::write(dir.join("labels.txt"), labels).unwrap();
        fs::write(dir.join("splits.json"), splits).unwrap();
    }

    const SPLITS: &str = r#"{"train":[0],"val":[],"test":[1]}"#;

    #[test]
    fn minimal_two_node_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), "2 1\n0 1\n", "1.0 0.0\n0.0 1.0\n", "0\n1\n", SPLITS);
        let ds = load_dataset(dir.path()).unwrap();
        let expect = build_graph(&[(0, 1)], 2, Some(Labels::infer(vec![0, 1]))).unwrap();
        assert_eq!(ds.graph, expect);
        assert_eq!(ds.features.shape(), (2, 2));
        assert_eq!(ds.splits.test, vec![1]);
    }

    #[test]
    fn duplicate_and_reverse_edges_merge() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), "2 3\n0 1\n1 0\n0 1\n", "1\n2\n", "0\n1\n", SPLITS);
        assert_eq!(load_dataset(dir.path()).unwrap().graph.num_edges(), 1);
    }

    fn error_text(graph: &str, features: &str, labels: &str, splits: &str) -> String {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), graph, features, labels, splits);
        load_dataset(dir.path()).unwrap_err().to_string()
    }

    #[test]
    fn errors_name_lines_and_counts() {
        let e = error_text("2 1\n0 x\n", "1\n2\n", "0\n1\n", SPLITS);
        assert!(e.contains("graph.txt:2") && e.contains("`x`"), "{e}");
        let e = error_text("2 1\n0 2\n", "1\n2\n", "0\n1\n", SPLITS);
        assert!(e.contains("graph.txt:2") && e.contains("out of range"), "{e}");
        let e = error_text("2 1\n0 1\n", "1\n2\n3\n", "0\n1\n", SPLITS);
        assert!(e.contains("3 feature rows") && e.contains("N = 2"), "{e}");
        let e = error_text("2 1\n0 1\n", "1 2\n3\n", "0\n1\n", SPLITS);
        assert!(e.contains("features.txt:2"), "{e}");
        let e = error_text("2 1\n0 1\n", "1\n2\n", "0\n-1\n", SPLITS);
        assert!(e.contains("labels.txt:2"), "{e}");
        let e = error_text("2 2\n0 1\n", "1\n2\n", "0\n1\n", SPLITS);
        assert!(e.contains("declares 2 edges, found 1"), "{e}");
        let e = error_text("2 1\n0 1\n", "1\n2\n", "0\n1\n", r#"{"train":[0],"val":[0],"test":[]}"#);
        assert!(e.contains("splits.json"), "{e}");
        let e = error_text("2 1\n0 1\n", "1\n2\n", "0\n1\n", "{\n\"train\": [0,\n}");
        assert!(e.contains("splits.json:3"), "{e}");
    }

    #[test]
    fn write_then_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let graph = build_graph(&[(0, 1), (1, 2), (2, 3)], 4, Some(Labels::infer(vec![0, 1, 0, 2]))).unwrap();
        let features = DenseMatrix::from_fn(4, 3, |i, j| (i as f64 - j as f64) / 3.0);
        let ds = Dataset { name: "x".into(), graph, features, splits: random_splits(4, 1) };
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.splits, ds.splits);
    }

    #[test]
    fn random_splits_partition_nodes() {
        let s = random_splits(103, 9);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (61, 20, 22));
        s.validate(103).unwrap();
        assert_eq!(s, random_splits(103, 9));
        assert_ne!(s, random_splits(103, 10));
    }
}
