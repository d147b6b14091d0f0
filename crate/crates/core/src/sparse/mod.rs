//! Compact structures for pruned models and the low-latency inference path.

pub mod checkpoint;
mod compile;
mod crs;

pub use checkpoint::{
    decode, encode_dense, encode_sparse, load_checkpoint, save_dense, save_sparse, Checkpoint, CheckpointMeta,
    Precision,
};
pub use compile::{
    compile_sparse, sparse_forward, sparse_forward_with, FieldPair, PairList, SparseLayer, SparseModel, SparseScratch,
};
pub use crs::{crs_matvec, from_crs, to_crs, CrsMatrix};
