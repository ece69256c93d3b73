//! Directory interchange format.
//!
//! * `nodes.csv`: `node_id,label,split,f0,...,f{d-1}`, one row per node in id order
//! * `edges.csv`: `src,dst`, one row per directed edge
//! * `meta.json`: optional string map
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{NodeGraph, Split};
use crate::error::{Error, Result};

pub fn write_graph_dir(graph: &NodeGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let nodes_path = dir.join("nodes.csv");
    let mut w = csv::Writer::from_path(&nodes_path).map_err(|e| csv_err(&nodes_path, e))?;
    let mut header = vec!["node_id".to_string(), "label".into(), "split".into()];
    header.extend((0..graph.feature_dim()).map(|i| format!("f{i}")));
    w.write_record(&header)
        .map_err(|e| csv_err(&nodes_path, e))?;
    for v in 0..graph.num_nodes() {
        let mut rec = vec![
            v.to_string(),
            graph.labels()[v].to_string(),
            graph.split()[v].to_string(),
        ];
        rec.extend(graph.features().row(v).iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(&nodes_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&nodes_path, e))?;

    let edges_path = dir.join("edges.csv");
    let mut w = csv::Writer::from_path(&edges_path).map_err(|e| csv_err(&edges_path, e))?;
    w.write_record(["src", "dst"])
        .map_err(|e| csv_err(&edges_path, e))?;
    for &(s, d) in graph.edges() {
        w.write_record([s.to_string(), d.to_string()])
            .map_err(|e| csv_err(&edges_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&edges_path, e))?;

    let meta_path = dir.join("meta.json");
    let json =
        serde_json::to_string_pretty(graph.metadata()).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn read_graph_dir(dir: &Path) -> Result<NodeGraph> {
    let nodes_path = dir.join("nodes.csv");
    let mut r = csv::Reader::from_path(&nodes_path).map_err(|e| csv_err(&nodes_path, e))?;
    let headers = r.headers().map_err(|e| csv_err(&nodes_path, e))?.clone();
    if headers.len() < 3
        || &headers[0] != "node_id"
        || &headers[1] != "label"
        || &headers[2] != "split"
    {
        return Err(Error::Parse(format!(
            "{}: header must start with node_id,label,split",
            nodes_path.display()
        )));
    }
    let dim = headers.len() - 3;
    let mut labels = Vec::new();
    let mut split = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&nodes_path, e))?;
        let id: usize = parse_field(&rec[0], &nodes_path, row)?;
        if id != row {
            return Err(Error::Parse(format!(
                "{}: node ids must be 0..n in order (row {row} has id {id})",
                nodes_path.display()
            )));
        }
        labels.push(parse_field::<i64>(&rec[1], &nodes_path, row)?);
        split.push(rec[2].parse::<Split>()?);
        for field in rec.iter().skip(3) {
            values.push(parse_field::<f64>(field, &nodes_path, row)?);
        }
    }
    let features = Array2::from_shape_vec((labels.len(), dim), values)
        .map_err(|e| Error::Parse(format!("{}: {e}", nodes_path.display())))?;

    let edges_path = dir.join("edges.csv");
    let mut r = csv::Reader::from_path(&edges_path).map_err(|e| csv_err(&edges_path, e))?;
    let mut edges = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&edges_path, e))?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!(
                "{}: row {row} needs two columns",
                edges_path.display()
            )));
        }
        edges.push((
            parse_field(&rec[0], &edges_path, row)?,
            parse_field(&rec[1], &edges_path, row)?,
        ));
    }

    let meta_path = dir.join("meta.json");
    let metadata: BTreeMap<String, String> = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", meta_path.display())))?
    } else {
        BTreeMap::new()
    };

    Ok(NodeGraph::new(features, edges, labels, split)?.with_metadata(metadata))
}

fn parse_field<T: std::str::FromStr>(field: &str, path: &Path, row: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .trim()
        .parse::<T>()
        .map_err(|e| Error::Parse(format!("{}: row {row}: {field:?}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}
