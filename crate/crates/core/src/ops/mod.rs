//! Forward and backward kernels for every layer primitive.

mod activation;
mod conv;
mod join;
mod pool;

pub use activation::{relu, relu_backward, softmax_channels, softmax_channels_backward};
pub use conv::{
    conv2d, conv2d_backward, conv2d_output_shape, conv_transpose2d, conv_transpose2d_backward, ConvParams,
    Padding,
};
pub use join::{add_elementwise, concat_channels, concat_channels_backward};
pub use pool::{maxpool2d, maxpool2d_backward, upsample_nearest2x, upsample_nearest2x_backward, PoolIndices};

