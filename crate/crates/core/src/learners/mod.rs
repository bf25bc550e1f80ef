//! Numeric learners written from scratch: a backpropagation MLP and k-means.

pub mod kmeans;
pub mod mlp;

pub use kmeans::{kmeans_fit, KmeansModel};
pub use mlp::{Mlp, Sample, TrainConfig, TrainMode, TrainReport};
