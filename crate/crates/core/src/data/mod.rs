//! Embeddings, relation-pair datasets, pair features and train/test splitting.

mod embeddings;
mod manifest;
mod pairs;
mod split;

pub use embeddings::{encode_pair, encode_pairs, encode_pairs_with, filter_known, load_embeddings, read_embeddings, write_embeddings, EmbeddingTable};
pub use manifest::{content_hash, SplitManifest, PART_NAMES};
pub use pairs::{load_pairs, read_pairs, save_pairs, write_pairs, PairDataset, Relation, TaskSpec, WordPair};
pub use split::{
    lexical_split, lexical_split_with_lots, make_split, partition_train, vocabulary, LexicalSplit, PartitionConfig, SplitBundle,
    SplitConfig, UnlabeledPool,
};
