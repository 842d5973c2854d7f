//! Fully convolutional regressor whose first-layer kernels are restricted
//! to fixed random spatial masks, followed by a depthwise layer, channel
//! group sums and distance-transform pooling per group.

mod conv;
mod dtpool;
mod masks;
mod model;
mod planes;
#[cfg(test)]
mod tests;

pub use conv::{masked_conv_backward, masked_conv_forward, ConvGrads, MaskedConvLayer};
pub use dtpool::{dt_pool, dt_pool_backward, dt_pool_exhaustive, group_sum, maxout, maxout_backward, DtParamGrads, DtPoolParams};
pub use masks::{make_masks, SpatialMask};
pub use model::{
    cnn_forward, cnn_stage1_step, cnn_stage2_step, stage1_gradients, stage2_gradients, CnnConfig, CnnSrkModel,
    ConvParamGrads,
};
