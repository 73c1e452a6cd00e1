//! Sentence-level sliding-window attention with a few global rows.

pub mod kernel;
mod layer;
mod mask;

pub use layer::{
    attention, full_attention_reference, global_attention, insert_layer_params, sliding_window_attention,
    transformer_layer, transformer_stack, LayerConfig,
};
pub use mask::{build_attention_mask, padded_length, select_global, AttentionMask, GlobalPolicy, GLOBAL, LOCAL, PAD};
