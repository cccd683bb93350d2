//! Scene and object feature extraction: superpoint features from a small
//! trainable point encoder, plus per-object 3D/2D features via pluggable
//! providers.

pub mod objects;
pub mod point_encoder;
pub mod views;

pub use objects::{
    extract_object_features_3d, Feature3dProvider, FeatureFile, ObjectFeatures, ObjectProposal,
    PointSetEncoder3d,
};
pub use point_encoder::{knn_groups, PointEncoder, KNN_K};
pub use views::{
    extract_object_features_2d, orbital_views, Camera, Feature2dProvider, RandomProjection2d, GRID,
};
