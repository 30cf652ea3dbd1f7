from .gradcheck import grad_check, numerical_gradient, relative_error
from .init import lecun_normal_init, make_rng
from .ops import (
    SELU,
    SeluParams,
    ShapeError,
    batchnorm,
    batchnorm_backward,
    batchnorm_train,
    batchnorm_train_backward,
    bilinear_upsample2x,
    bilinear_upsample2x_backward,
    check_tensor,
    concat_channels,
    conv2d,
    conv2d_backward,
    conv_output_size,
    depthwise_conv2d,
    depthwise_conv2d_backward,
    pointwise_conv,
    pointwise_conv_backward,
    pool2,
    pool2_backward,
    selu,
    selu_backward,
    split_channels,
    update_running_stats,
)
