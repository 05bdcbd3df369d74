//! Graph bundle directory: `meta.json`, `edges.bin`, `features.bin`,
//! `labels.bin`, `masks.bin`. All integers little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Csr, Graph, NodeRole};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

fn read_file(dir: &Path, file: &str) -> Result<Vec<u8>> {
    let path = dir.join(file);
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Format {
            file: file.to_string(),
            msg: format!("missing from {}", dir.display()),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn expect_len(file: &str, bytes: &[u8], want: usize) -> Result<()> {
    if bytes.len() != want {
        return Err(Error::Corruption {
            file: file.to_string(),
            msg: format!("expected {want} bytes, found {}", bytes.len()),
        });
    }
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_raw = read_file(dir, "meta.json")?;
    let meta: BundleMeta = serde_json::from_slice(&meta_raw).map_err(|e| Error::Format {
        file: "meta.json".into(),
        msg: e.to_string(),
    })?;
    let n = meta.num_nodes;
    let f = meta.num_features;
    if meta.num_classes == 0 || meta.num_classes > u16::MAX as usize + 1 {
        return Err(Error::validation(format!(
            "num_classes {} outside 1..=65536",
            meta.num_classes
        )));
    }

    let edges_raw = read_file(dir, "edges.bin")?;
    if edges_raw.len() < 8 {
        return Err(Error::Corruption {
            file: "edges.bin".into(),
            msg: "shorter than the edge count header".into(),
        });
    }
    let (head, body) = edges_raw.split_at(8);
    let count = u64::from_le_bytes(head.try_into().expect("8 bytes"));
    let want = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Corruption {
            file: "edges.bin".into(),
            msg: format!("edge count {count} overflows"),
        })?;
    expect_len("edges.bin", body, want)?;
    let edges = body.chunks_exact(8).map(|rec| {
        let u = u32::from_le_bytes(rec[0..4].try_into().expect("4 bytes")) as usize;
        let v = u32::from_le_bytes(rec[4..8].try_into().expect("4 bytes")) as usize;
        (u, v)
    });
    let adjacency = Csr::from_edges(n, edges)?;

    let feat_raw = read_file(dir, "features.bin")?;
    expect_len("features.bin", &feat_raw, n * f * 4)?;
    let feats = feat_raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let features = Matrix::from_vec(n, f, feats)?;

    let label_raw = read_file(dir, "labels.bin")?;
    expect_len("labels.bin", &label_raw, n * 2)?;
    let labels = label_raw
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
        .collect();

    let mask_raw = read_file(dir, "masks.bin")?;
    expect_len("masks.bin", &mask_raw, n)?;
    let roles = mask_raw
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            NodeRole::from_bits(b)
                .ok_or_else(|| Error::validation(format!("mask byte {b:#04x} of node {i}")))
        })
        .collect::<Result<Vec<_>>>()?;

    Graph::from_parts(
        meta.name,
        features,
        meta.num_classes,
        adjacency,
        labels,
        roles,
    )
}

fn write_file(dir: &Path, file: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(file);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_bundle(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if graph.num_nodes() > u32::MAX as usize + 1 {
        return Err(Error::validation("node ids exceed u32"));
    }
    if graph.num_classes() > u16::MAX as usize + 1 {
        return Err(Error::validation("class ids exceed u16"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = BundleMeta {
        name: graph.name().to_string(),
        num_nodes: graph.num_nodes(),
        num_features: graph.num_features(),
        num_classes: graph.num_classes(),
    };
    let mut meta_json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Format {
        file: "meta.json".into(),
        msg: e.to_string(),
    })?;
    meta_json.push(b'\n');
    write_file(dir, "meta.json", &meta_json)?;

    let adj = graph.adjacency();
    let mut edges = Vec::with_capacity(8 + adj.num_edges() * 8);
    edges.extend_from_slice(&(adj.num_edges() as u64).to_le_bytes());
    for (u, v) in adj.edges() {
        edges.extend_from_slice(&(u as u32).to_le_bytes());
        edges.extend_from_slice(&(v as u32).to_le_bytes());
    }
    write_file(dir, "edges.bin", &edges)?;

    let feats: Vec<u8> = graph
        .features()
        .as_slice()
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect();
    write_file(dir, "features.bin", &feats)?;

    let labels: Vec<u8> = graph
        .labels()
        .iter()
        .flat_map(|&y| (y as u16).to_le_bytes())
        .collect();
    write_file(dir, "labels.bin", &labels)?;

    let masks: Vec<u8> = graph.roles().iter().map(|r| r.to_bits()).collect();
    write_file(dir, "masks.bin", &masks)
}
