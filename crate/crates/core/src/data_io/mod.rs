//! Image and depth-map files, colour conversion, bicubic resampling, dataset
//! manifests and synthetic datasets.

mod codec;
mod color;
mod image;
mod manifest;
mod resize;
mod synth;

pub use codec::{
    decode_pgm16, decode_png, encode_pgm16, encode_png, load_pgm16, load_png, save_pgm16, save_png,
    validate_png_chunks,
};
pub use color::{luma, rgb_to_y, rgb_to_ycbcr, rgb_to_ycbcr_px, ycbcr_to_rgb, ycbcr_to_rgb_px};
pub use image::{DepthMap, ImageU8};
pub use manifest::{Manifest, Record, Role};
pub use resize::{bicubic_resize, bicubic_upsample_anchored, keys_kernel, KEYS_A};
pub use synth::{synth_rgbd_pair, synth_texture_image, write_rgbd_dataset, write_sisr_dataset};
