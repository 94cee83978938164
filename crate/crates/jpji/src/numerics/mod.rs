//! Numerical kernel: cumulants, symmetric linear algebra, clustering and voxelwise statistics.

pub mod cumulant;
pub mod kmeans;
pub mod linalg;
pub mod stats;

pub use cumulant::{cross_cumulant, cumulant_vector, partner_weights};
pub use kmeans::{kmeans, silhouette, KMeans};
pub use linalg::{covariance, dominant_eigenvector, inverse_sqrt_psd, symmetric_eigen};
pub use stats::{bh_fdr, one_sample_margin_test, two_sample_t_test, welch_margin_test};
