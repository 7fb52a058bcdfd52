//! Plain-text interchange formats: nodes (JSON Lines), BOM edges and
//! substitute pairs (CSV), split manifests (JSON) and matrix exports (CSV).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{MkgError, Result};
use crate::graph::{BomEdge, ComponentNode, MachineKnowledgeGraph, PartIdentifier};
use crate::linalg::Matrix;
use crate::split::TripleSplit;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| MkgError::Format(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn read_nodes<R: BufRead>(reader: R) -> Result<Vec<ComponentNode>> {
    let mut nodes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let node: ComponentNode = serde_json::from_str(&line)
            .map_err(|e| MkgError::Format(format!("nodes line {}: {e}", i + 1)))?;
        if node.component_type.trim().is_empty() {
            return Err(MkgError::Format(format!("nodes line {}: empty type", i + 1)));
        }
        nodes.push(node);
    }
    Ok(nodes)
}

pub fn write_nodes<W: Write>(mut writer: W, nodes: &[ComponentNode]) -> Result<()> {
    for n in nodes {
        serde_json::to_writer(&mut writer, n)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    parent_id: String,
    child_id: String,
    quantity: u32,
}

/// Reads `parent_id,child_id,quantity`. Quantities must be positive.
pub fn read_edges<R: Read>(reader: R) -> Result<Vec<BomEdge>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<EdgeRow>().enumerate() {
        let row = row?;
        if row.quantity == 0 {
            return Err(MkgError::Format(format!("edges row {}: quantity must be positive", i + 1)));
        }
        out.push(BomEdge {
            parent: PartIdentifier::new(&row.parent_id)?,
            child: PartIdentifier::new(&row.child_id)?,
            quantity: row.quantity,
        });
    }
    Ok(out)
}

pub fn write_edges<W: Write>(writer: W, edges: &[BomEdge]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in edges {
        w.serialize(EdgeRow {
            parent_id: e.parent.to_string(),
            child_id: e.child.to_string(),
            quantity: e.quantity,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    part_a: String,
    part_b: String,
}

pub fn read_pairs<R: Read>(reader: R) -> Result<Vec<(PartIdentifier, PartIdentifier)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<PairRow>() {
        let row = row?;
        out.push((PartIdentifier::new(&row.part_a)?, PartIdentifier::new(&row.part_b)?));
    }
    Ok(out)
}

pub fn write_pairs<W: Write>(writer: W, pairs: &[(PartIdentifier, PartIdentifier)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["part_a", "part_b"])?;
    for (a, b) in pairs {
        w.write_record([a.as_str(), b.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Builds a graph from the three input files. Edges and pairs must refer to
/// parts listed in the nodes file.
pub fn load_graph(
    nodes: &Path,
    edges: &Path,
    pairs: Option<&Path>,
    symmetric_pairs: bool,
) -> Result<MachineKnowledgeGraph> {
    let mut g = MachineKnowledgeGraph::new();
    for n in read_nodes(open(nodes)?)? {
        g.upsert_node(&n);
    }
    let edges: Vec<_> = read_edges(open(edges)?)?.into_iter().map(|e| (e.parent, e.child)).collect();
    g.ingest_connections(&edges)?;
    if let Some(p) = pairs {
        g.ingest_substitutes(&read_pairs(open(p)?)?, symmetric_pairs)?;
    }
    Ok(g)
}

pub fn read_nodes_file(path: &Path) -> Result<Vec<ComponentNode>> {
    read_nodes(open(path)?)
}

pub fn write_nodes_file(path: &Path, nodes: &[ComponentNode]) -> Result<()> {
    write_nodes(create(path)?, nodes)
}

pub fn write_edges_file(path: &Path, edges: &[BomEdge]) -> Result<()> {
    write_edges(create(path)?, edges)
}

pub fn write_pairs_file(path: &Path, pairs: &[(PartIdentifier, PartIdentifier)]) -> Result<()> {
    write_pairs(create(path)?, pairs)
}

/// Split manifest: triple indices per split, the seed and the fingerprint of
/// the graph the indices refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub graph_fingerprint: String,
    pub ratios: [f64; 3],
    #[serde(flatten)]
    pub split: TripleSplit,
}

impl SplitManifest {
    /// Returns the split after checking it belongs to `graph`.
    pub fn split_for(&self, graph: &MachineKnowledgeGraph) -> Result<&TripleSplit> {
        if self.graph_fingerprint != graph.fingerprint() {
            return Err(MkgError::Format("split manifest was made for a different graph".into()));
        }
        let n = graph.triples().len();
        let s = &self.split;
        if let Some(&bad) = s.train.iter().chain(&s.valid).chain(&s.test).find(|&&i| i >= n) {
            return Err(MkgError::Index { index: bad, len: n });
        }
        Ok(s)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Writes `id,{prefix}1..{prefix}d`, one row per node.
pub fn write_matrix_csv<W: Write>(writer: W, ids: &[PartIdentifier], prefix: &str, m: &Matrix) -> Result<()> {
    if ids.len() != m.rows() {
        return Err(MkgError::Shape(format!("{} ids for {} rows", ids.len(), m.rows())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=m.cols()).map(|j| format!("{prefix}{j}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        // `{:?}` keeps full round-trip precision
        rec.extend(m.row(i).iter().map(|x| format!("{x:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv_file(path: &Path, ids: &[PartIdentifier], prefix: &str, m: &Matrix) -> Result<()> {
    write_matrix_csv(create(path)?, ids, prefix, m)
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<(Vec<PartIdentifier>, Matrix)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let width = rdr.headers()?.len().saturating_sub(1);
    let (mut ids, mut data) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(PartIdentifier::new(&rec[0])?);
        for v in rec.iter().skip(1) {
            data.push(
                v.parse::<f64>()
                    .map_err(|e| MkgError::Format(format!("bad number {v:?}: {e}")))?,
            );
        }
    }
    let m = Matrix::from_vec(ids.len(), width, data)?;
    Ok((ids, m))
}

/// Writes `id,type,x,y`.
pub fn write_projection_csv<W: Write>(writer: W, graph: &MachineKnowledgeGraph, coords: &Matrix) -> Result<()> {
    if coords.rows() != graph.num_nodes() || coords.cols() != 2 {
        return Err(MkgError::Shape(format!(
            "projection is {}x{}, graph has {} nodes",
            coords.rows(),
            coords.cols(),
            graph.num_nodes()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "type", "x", "y"])?;
    for (i, n) in graph.nodes().iter().enumerate() {
        w.write_record([
            n.id.as_str(),
            n.component_type.as_str(),
            &format!("{:?}", coords[(i, 0)]),
            &format!("{:?}", coords[(i, 1)]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_projection_csv_file(path: &Path, graph: &MachineKnowledgeGraph, coords: &Matrix) -> Result<()> {
    write_projection_csv(create(path)?, graph, coords)
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    let mut f = open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
