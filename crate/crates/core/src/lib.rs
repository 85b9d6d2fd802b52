//! Self-supervised pretraining for heterogeneous hypergraph neural networks.
//!
//! The pipeline clique-expands a typed hypergraph, pretrains a message-passing
//! encoder on two joint tasks (reconstructing node attributes through dummy
//! nodes, and telling true hyperedges from perturbed ones), then fine-tunes
//! the encoder for node classification or link prediction.

pub mod autograd;
pub mod cli;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod expansion;
pub mod finetune;
pub mod hypergraph;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod pretrain;
pub mod report;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
