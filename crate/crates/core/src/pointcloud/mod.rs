//! Scene data model, superpoint generation, pooling/unpooling between point
//! and superpoint level, and the synthetic scene generator.

pub mod pooling;
pub mod scene;
pub mod superpoint;
pub mod synth;

pub use pooling::{pool_features, pool_gt_mask, unpool_mask};
pub use scene::{load_scene, save_scene, Instance, InstanceMask, MaskLevel, PointCloud};
pub use superpoint::{generate_superpoints, SuperpointPartition, DEFAULT_VOXEL_SIZE};
pub use synth::{synth_scene, GeneratorConfig, SampleRecord, TaskKind, GRAMMAR_VERSION};
