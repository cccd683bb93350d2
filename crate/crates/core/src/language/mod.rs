//! Tiny autoregressive transformer LM with extended vocabulary, LoRA
//! adaptation, response-only loss, greedy generation, and `<SEG>` hidden
//! state extraction.

pub mod lora;
pub mod model;
pub mod vocab;

pub use lora::LoraAdapter;
pub use model::{
    extract_seg_embedding, llm_loss, LmConfig, LmOutput, TrainingSequence, TransformerLm,
    LAYER_NORM_EPS,
};
pub use vocab::{grammar_vocabulary, Vocabulary, SEG_TOKEN};
