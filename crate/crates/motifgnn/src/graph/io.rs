//! Canonical dataset directory IO.
//!
//! A dataset directory holds:
//!
//! - `meta.json`: `{"name": ..., "directed": bool, "num_classes": int}`
//! - `edges.tsv`: one `src<TAB>dst` pair of node ids per line
//! - `features.tsv` (sparse `row col value` triplets) or
//!   `features.csv` (dense rows of comma-separated reals)
//! - `labels.tsv`: `node<TAB>class` per line
//!
//! Loading validates the files, drops self-loops and duplicate edges
//! (counted in the [`LoadReport`]), and restricts the graph to its
//! largest connected component.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttributedGraph, Features};
use crate::tensor::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    name: String,
    directed: bool,
    num_classes: usize,
}

/// What loading scrubbed or removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_self_loops: usize,
    pub dropped_duplicate_edges: usize,
    pub nodes_outside_largest_component: usize,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        file: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_columns<const N: usize>(path: &Path, text: &str) -> Result<Vec<[String; N]>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != N {
            return Err(format_err(
                path,
                i + 1,
                format!("expected {N} columns, found {}", cols.len()),
            ));
        }
        out.push(std::array::from_fn(|j| cols[j].to_string()));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| format_err(path, line, format!("invalid {what}: {s:?}")))
}

/// Load a canonical dataset directory, validate it, and restrict it to
/// the largest connected component.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(AttributedGraph, LoadReport)> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_to_string(&meta_path)?)
        .map_err(|e| format_err(&meta_path, 1, e.to_string()))?;

    // features determine the node count
    let sparse_path = dir.join("features.tsv");
    let dense_path = dir.join("features.csv");
    let features = if sparse_path.exists() {
        let rows = parse_columns::<3>(&sparse_path, &read_to_string(&sparse_path)?)?;
        let mut triplets = Vec::with_capacity(rows.len());
        let mut max_row = 0usize;
        for (i, [r, c, v]) in rows.iter().enumerate() {
            let r: usize = parse_num(&sparse_path, i + 1, r, "row index")?;
            let c: usize = parse_num(&sparse_path, i + 1, c, "column index")?;
            let v: f64 = parse_num(&sparse_path, i + 1, v, "value")?;
            max_row = max_row.max(r);
            triplets.push((r, c, v));
        }
        if triplets.is_empty() {
            return Err(format_err(&sparse_path, 1, "empty feature file"));
        }
        let num_nodes = max_row + 1;
        let num_cols = triplets.iter().map(|t| t.1).max().unwrap() + 1;
        Features::Sparse(CsrMatrix::from_triplets(num_nodes, num_cols, triplets)?)
    } else if dense_path.exists() {
        let text = read_to_string(&dense_path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>> = line
                .split(',')
                .map(|s| parse_num(&dense_path, i + 1, s.trim(), "value"))
                .collect();
            let row = row?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(format_err(
                        &dense_path,
                        i + 1,
                        format!("row width {} differs from {}", row.len(), first.len()),
                    ));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(format_err(&dense_path, 1, "empty feature file"));
        }
        let (n, f) = (rows.len(), rows[0].len());
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Features::Dense(
            ndarray::Array2::from_shape_vec((n, f), flat).expect("row widths checked"),
        )
    } else {
        return Err(Error::io(
            sparse_path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "neither features.tsv nor features.csv present",
            ),
        ));
    };
    let num_nodes = features.num_rows();

    let labels_path = dir.join("labels.tsv");
    let mut labels: Vec<Option<u16>> = vec![None; num_nodes];
    for (i, [node, class]) in parse_columns::<2>(&labels_path, &read_to_string(&labels_path)?)?
        .iter()
        .enumerate()
    {
        let node: usize = parse_num(&labels_path, i + 1, node, "node id")?;
        let class: u16 = parse_num(&labels_path, i + 1, class, "class id")?;
        if node >= num_nodes {
            return Err(Error::Integrity(format!(
                "label references node {node}, but features define only {num_nodes} nodes"
            )));
        }
        if class as usize >= meta.num_classes {
            return Err(Error::Integrity(format!(
                "node {node} labeled {class}, outside [0, {})",
                meta.num_classes
            )));
        }
        labels[node] = Some(class);
    }

    let edges_path = dir.join("edges.tsv");
    let mut raw_edges = Vec::new();
    for (i, [u, v]) in parse_columns::<2>(&edges_path, &read_to_string(&edges_path)?)?
        .iter()
        .enumerate()
    {
        let u: u32 = parse_num(&edges_path, i + 1, u, "node id")?;
        let v: u32 = parse_num(&edges_path, i + 1, v, "node id")?;
        if u as usize >= num_nodes || v as usize >= num_nodes {
            return Err(Error::Integrity(format!(
                "edge ({u}, {v}) references a node outside the {num_nodes} defined nodes"
            )));
        }
        raw_edges.push((u, v));
    }

    let (full, loops, dups) = AttributedGraph::from_raw_edges(
        num_nodes,
        meta.directed,
        raw_edges,
        features,
        labels,
        meta.num_classes,
    )?;
    let mut report = LoadReport {
        dropped_self_loops: loops,
        dropped_duplicate_edges: dups,
        nodes_outside_largest_component: 0,
    };
    if loops > 0 || dups > 0 {
        log::warn!(
            "{}: dropped {loops} self-loops and {dups} duplicate edges",
            dir.display()
        );
    }

    let components = full.components();
    let graph = if components.len() > 1 {
        let keep = &components[0];
        report.nodes_outside_largest_component = num_nodes - keep.len();
        log::warn!(
            "{}: restricted to largest connected component ({} of {} nodes)",
            dir.display(),
            keep.len(),
            num_nodes
        );
        full.induced_subgraph(keep)?
    } else {
        full
    };
    Ok((graph, report))
}

/// Write a graph back out in the canonical directory format.
pub fn save_dataset(g: &AttributedGraph, name: &str, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        name: name.to_string(),
        directed: g.directed(),
        num_classes: g.num_classes(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::io(&meta_path, e))?;

    let write_lines = |path: &Path, f: &mut dyn FnMut(&mut dyn Write) -> std::io::Result<()>| {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| Error::io(path, e))
    };

    write_lines(&dir.join("edges.tsv"), &mut |w| {
        for &(u, v) in g.edges() {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    })?;
    write_lines(&dir.join("features.tsv"), &mut |w| {
        for (r, c, v) in g.features().to_csr().iter() {
            writeln!(w, "{r}\t{c}\t{v}")?;
        }
        Ok(())
    })?;
    write_lines(&dir.join("labels.tsv"), &mut |w| {
        for (v, label) in g.labels().iter().enumerate() {
            if let Some(c) = label {
                writeln!(w, "{v}\t{c}")?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dataset(dir: &Path, edges: &str, features: &str, labels: &str, meta: &str) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join("meta.json"), meta).unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.tsv"), features).unwrap();
        fs::write(dir.join("labels.tsv"), labels).unwrap();
    }

    #[test]
    fn single_edge_dataset_loads() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            "0\t1\n",
            "0\t0\t1.0\n1\t1\t1.0\n",
            "0\t0\n1\t1\n",
            r#"{"name": "tiny", "directed": false, "num_classes": 2}"#,
        );
        let (g, report) = load_dataset(tmp.path()).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 1);
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn malformed_edge_line_reports_line_number() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            "0\t1\nbogus\n",
            "0\t0\t1.0\n1\t1\t1.0\n",
            "0\t0\n",
            r#"{"name": "tiny", "directed": false, "num_classes": 1}"#,
        );
        match load_dataset(tmp.path()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_edge_is_integrity_error() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            "0\t7\n",
            "0\t0\t1.0\n1\t1\t1.0\n",
            "0\t0\n",
            r#"{"name": "tiny", "directed": false, "num_classes": 1}"#,
        );
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn restricts_to_largest_component() {
        let tmp = tempfile::tempdir().unwrap();
        // 0-1-2 chain plus isolated pair 3-4
        write_dataset(
            tmp.path(),
            "0\t1\n1\t2\n3\t4\n",
            "0\t0\t1.0\n1\t0\t1.0\n2\t0\t1.0\n3\t0\t1.0\n4\t0\t1.0\n",
            "0\t0\n1\t0\n2\t0\n3\t0\n4\t0\n",
            r#"{"name": "two_comp", "directed": false, "num_classes": 1}"#,
        );
        let (g, report) = load_dataset(tmp.path()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(report.nodes_outside_largest_component, 2);
    }

    #[test]
    fn load_save_load_roundtrips_bit_identically() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            &tmp.path().join("a"),
            "0\t1\n1\t2\n0\t2\n2\t3\n",
            "0\t0\t0.125\n1\t1\t0.333333333333333314829616256247\n2\t0\t1.5\n3\t2\t-2.0\n",
            "0\t0\n1\t1\n2\t0\n3\t1\n",
            r#"{"name": "rt", "directed": true, "num_classes": 2}"#,
        );
        let (g1, _) = load_dataset(tmp.path().join("a")).unwrap();
        save_dataset(&g1, "rt", tmp.path().join("b")).unwrap();
        let (g2, _) = load_dataset(tmp.path().join("b")).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(g1.labels(), g2.labels());
        assert_eq!(g1.features().to_csr(), g2.features().to_csr());
        assert_eq!(g1.directed(), g2.directed());
        assert_eq!(g1.num_classes(), g2.num_classes());
    }
}
