//! Clip geometry: fixed-stride frame sampling, cube tokenization of the
//! pixel volume, and tube masking across time.

mod clip;
mod cube;
mod mask;

pub use clip::{load_clip_dir, sample_clip, save_clip_dir, Clip, ClipHeader, Frame, SamplerSpec};
pub use cube::{cube_embed, cube_pixels, sinusoidal_positions, CubeDims, CubeGrid};
pub use mask::{make_tube_mask, visible_token_rows, TubeMask};
