//! Machine knowledge graphs built from bills of materials, fused
//! topology + metadata embeddings, and substitute-component ranking.

pub mod checkpoint;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod finetune;
pub mod graph;
pub mod homophily;
pub mod io;
pub mod kge;
pub mod linalg;
pub mod negatives;
pub mod optim;
pub mod pca;
pub mod pipeline;
pub mod projection;
pub mod split;
pub mod synth;
pub mod train;

pub use error::{MkgError, Result};
pub use graph::{
    AttrValue, BomEdge, BomTree, ComponentNode, MachineKnowledgeGraph, PartIdentifier,
    RelationKind, Triple,
};
