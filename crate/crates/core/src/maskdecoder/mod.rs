//! Cross-attention mask decoding from the `<SEG>` hidden state and the
//! BCE + Dice mask objective.

pub mod decoder;
pub mod loss;

pub use decoder::{project_seg_query, MaskDecoder, DEFAULT_DECODER_LAYERS};
pub use loss::{dice_loss, mask_loss, total_loss, LossBreakdown, DICE_EPS};
