//! Feature-to-token fusion: projectors into the embedding space, positional
//! tokens, interleaved per-object sequences, and prompt assembly.

pub mod position;
pub mod projector;
pub mod sequence;

pub use position::{normalized_center, sinusoid_features, PositionEncoder, SINUSOID_DIM};
pub use projector::MlpProjector;
pub use sequence::{
    assemble_prompt, build_interleaved_sequence, fuse_object, FusedObjectTokens, FusionFlags,
    Fuser, PromptLayout,
};
