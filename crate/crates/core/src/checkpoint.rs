//! Binary checkpoints: `MKG1`, a little-endian u64 header length, a JSON
//! header, then every array as little-endian f64 in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ensemble::{EnsembleModel, FusedEmbeddingTable, ScorerParams};
use crate::error::{MkgError, Result};
use crate::finetune::FinetuneConfig;
use crate::kge::{EmbeddingTable, ModelKind};
use crate::linalg::Matrix;
use crate::pca::{ProjectionModel, SIGN_CONVENTION};

pub const MAGIC: &[u8; 4] = b"MKG1";
const MAX_HEADER: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    arrays: Vec<ArraySpec>,
}

/// A checkpoint in memory: a kind tag, free-form metadata and named arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    pub arrays: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, m)| ArraySpec {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, m) in &self.arrays {
            for x in m.as_slice() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MkgError::Format("not a checkpoint (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > MAX_HEADER {
            return Err(MkgError::Format(format!("checkpoint header too large ({len} bytes)")));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for spec in header.arrays {
            let n = spec
                .rows
                .checked_mul(spec.cols)
                .ok_or_else(|| MkgError::Format(format!("array {} is too large", spec.name)))?;
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)
                .map_err(|e| MkgError::Format(format!("array {} truncated: {e}", spec.name)))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            arrays.push((spec.name, Matrix::from_vec(spec.rows, spec.cols, data)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(MkgError::Format("trailing bytes after checkpoint arrays".into()));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| MkgError::Format(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(MkgError::Format(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    fn take(&mut self, name: &str) -> Result<Matrix> {
        let pos = self
            .arrays
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| MkgError::Format(format!("checkpoint lacks array {name}")))?;
        Ok(self.arrays.remove(pos).1)
    }

    fn meta_field<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| MkgError::Format(format!("checkpoint header lacks {key}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

fn row_vector(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("one row")
}

/// Metadata stored with stage-1 embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub model: ModelKind,
    pub dim: usize,
    pub epoch: usize,
    pub seed: u64,
    pub graph_fingerprint: String,
}

pub fn embeddings_checkpoint(table: &EmbeddingTable, meta: &EmbeddingMeta) -> Result<Checkpoint> {
    Ok(Checkpoint {
        kind: "embeddings".into(),
        meta: serde_json::to_value(meta)?,
        arrays: vec![
            ("entities".into(), table.entities.clone()),
            ("relations".into(), table.relations.clone()),
        ],
    })
}

pub fn embeddings_from_checkpoint(mut ck: Checkpoint) -> Result<(EmbeddingTable, EmbeddingMeta)> {
    ck.expect_kind("embeddings")?;
    let meta: EmbeddingMeta = serde_json::from_value(ck.meta.clone())?;
    let entities = ck.take("entities")?;
    let relations = ck.take("relations")?;
    let width = meta.model.width(meta.dim);
    if entities.cols() != width || relations.cols() != width {
        return Err(MkgError::Shape(format!("embedding width does not match {} dim {}", meta.model, meta.dim)));
    }
    Ok((
        EmbeddingTable {
            kind: meta.model,
            dim: meta.dim,
            entities,
            relations,
        },
        meta,
    ))
}

pub fn projection_checkpoint(model: &ProjectionModel, min_freq: usize) -> Checkpoint {
    Checkpoint {
        kind: "projection".into(),
        meta: serde_json::json!({
            "input_dim": model.input_dim(),
            "output_dim": model.output_dim(),
            "min_freq": min_freq,
            "sign_convention": SIGN_CONVENTION,
        }),
        arrays: vec![
            ("means".into(), row_vector(&model.means)),
            ("components".into(), model.components.clone()),
            ("explained_variance".into(), row_vector(&model.explained_variance)),
            ("explained_variance_ratio".into(), row_vector(&model.explained_variance_ratio)),
        ],
    }
}

pub fn projection_from_checkpoint(mut ck: Checkpoint) -> Result<ProjectionModel> {
    ck.expect_kind("projection")?;
    let version: u32 = ck.meta_field("sign_convention")?;
    if version != SIGN_CONVENTION {
        return Err(MkgError::Format(format!("unsupported sign convention version {version}")));
    }
    let model = ProjectionModel {
        means: ck.take("means")?.into_vec(),
        components: ck.take("components")?,
        explained_variance: ck.take("explained_variance")?.into_vec(),
        explained_variance_ratio: ck.take("explained_variance_ratio")?.into_vec(),
    };
    if model.means.len() != model.input_dim() || model.explained_variance.len() != model.output_dim() {
        return Err(MkgError::Shape("projection arrays disagree in size".into()));
    }
    Ok(model)
}

/// Metadata stored with a fine-tuned ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub topology_model: ModelKind,
    pub topology_width: usize,
    pub feature_width: usize,
    pub use_bias: bool,
    pub best_epoch: usize,
    pub best_valid_mrr: f64,
    pub config: FinetuneConfig,
    pub graph_fingerprint: String,
}

pub fn ensemble_checkpoint(model: &EnsembleModel, meta: &EnsembleMeta) -> Result<Checkpoint> {
    Ok(Checkpoint {
        kind: "ensemble".into(),
        meta: serde_json::to_value(meta)?,
        arrays: vec![
            ("entities".into(), model.fused.entities.clone()),
            ("relations".into(), model.fused.relations.clone()),
            ("w1".into(), model.scorer.w1.clone()),
            ("b1".into(), row_vector(&model.scorer.b1)),
            ("w2".into(), row_vector(&model.scorer.w2)),
            ("b2".into(), row_vector(&[model.scorer.b2])),
        ],
    })
}

pub fn ensemble_from_checkpoint(mut ck: Checkpoint) -> Result<(EnsembleModel, EnsembleMeta)> {
    ck.expect_kind("ensemble")?;
    let meta: EnsembleMeta = serde_json::from_value(ck.meta.clone())?;
    let fused = FusedEmbeddingTable {
        topology_width: meta.topology_width,
        feature_width: meta.feature_width,
        entities: ck.take("entities")?,
        relations: ck.take("relations")?,
    };
    if fused.entities.cols() != fused.width() {
        return Err(MkgError::Shape("fused entity width disagrees with header".into()));
    }
    let b2 = ck.take("b2")?;
    if b2.as_slice().len() != 1 {
        return Err(MkgError::Shape("b2 must hold one value".into()));
    }
    let scorer = ScorerParams {
        w1: ck.take("w1")?,
        b1: ck.take("b1")?.into_vec(),
        w2: ck.take("w2")?.into_vec(),
        b2: b2.as_slice()[0],
        use_bias: meta.use_bias,
    };
    if scorer.b1.len() != scorer.w1.rows() || scorer.w2.len() != scorer.w1.rows() {
        return Err(MkgError::Shape("scorer arrays disagree in size".into()));
    }
    Ok((EnsembleModel::new(fused, scorer)?, meta))
}
