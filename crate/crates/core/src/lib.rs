//! Lexical-semantic relation classification over word-embedding pair features.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense feed-forward layers, Glorot initialisation, softmax/cross-entropy and RMSprop.
//! - [`multitask`]: hard-parameter-sharing model (shared trunk, one softmax head per task) and its
//!   round-robin training loop. A model with a single head is the one-task NN baseline.
//! - [`selflearn`]: stratified self-training over an unlabeled pool.
//! - [`data`]: embeddings, pair files, pair encoding, lexical splitting and partitioning.
//! - [`taxonomy`]: hypernym graphs, LCA path distances and relation-pair sampling.
//! - [`eval`]: accuracy, macro-F1, majority and logistic-regression baselines.
//!
//! Data-parallel inner loops (batched matrix products, pair encoding, pool scoring) use rayon
//! when the `parallel` feature is enabled (the default). Results are bitwise identical with and
//! without the feature: every parallel loop writes disjoint output rows and reduces in a fixed
//! order.

pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod multitask;
pub mod nn;
pub mod seed;
pub mod selflearn;
pub mod synthetic;
pub mod taxonomy;

pub use error::{Error, Result};
