//! Image-dissemination analytics: perceptual hashing and clustering of image
//! corpora, entity annotation of clusters, entity/domain graphs, and
//! multivariate Hawkes estimation of cross-community influence.

pub mod annotate;
pub mod cluster;
pub mod events;
pub mod fixture;
pub mod graphs;
pub mod hawkes;
pub mod phash;
pub mod report;

pub use cluster::{cluster_corpus, cluster_stats, medoid, Cluster, Clustering};
pub use phash::{compute_phash, hamming, ImageRef, PHash64};
