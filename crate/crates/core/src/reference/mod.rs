//! Literal, loop-level implementations of the upsampling operators.
//!
//! Nothing here is optimised: the zero-upsampled key/value maps and the
//! `−inf` mask are materialised, and every `K×K` window is visited in full.
//! These functions are the oracles the fast kernels and the autodiff tape
//! are tested against.
//!
//! Conventions shared by every attention operator:
//!
//! - the positional table `pos_x` is indexed by the row offset `a − i` and
//!   fills the first `C/2` channels, `pos_y` by the column offset `b − j`
//!   and fills the second half; row index = offset + (K−1)/2;
//! - logits are divided by `√C` when `scale_logits` is set, `C` being the
//!   query/key width;
//! - neighbours outside the image are dropped from the softmax rather than
//!   zero padded.

mod attention;
mod ops;
mod params;

pub use attention::{
    attention_conv, attention_joint_upsample, attention_joint_upsample_counted, attention_upsample,
    attention_upsample_counted, attention_upsample_support, relative_logit, scaled_dot_attention,
};
pub use ops::{
    bilinear_upsample, bilinear_upsample_counted, make_mask, transposed_conv2d,
    transposed_conv2d_counted, zero_upsample,
};
pub use params::{
    count_params_attention, count_params_deconv, AttnUpsampleParams, DeconvParams, Mask,
};

/// Multiply-add counter threaded through the `_counted` reference variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCounter {
    pub macs: u64,
}

impl MacCounter {
    #[inline]
    pub(crate) fn add(&mut self, n: usize) {
        self.macs += n as u64;
    }
}
