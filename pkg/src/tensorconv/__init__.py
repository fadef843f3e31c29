"""Convolution as sparse tensor contraction, and networks built on it.

The library treats a convolution filter as a small array that is lowered
into an explicit sparse operator (a banded, Toeplitz-like tensor of twice
the order); convolution, network layers and backpropagation are then all
plain inner products between tensors.  On top of the tensor core sit a
layer/loss toolbox and a full-batch gradient-descent training loop whose
gradients are auditable against central finite differences.
"""

from .errors import (
    ConfigError,
    DatasetFormatError,
    DimensionMismatch,
    DomainError,
    EmptyBatch,
    GeometryError,
    OrderError,
    RangeError,
    TensorConvError,
)
from .tensor import (
    DenseTensor,
    IndexRange,
    SparseTensor,
    add,
    frobenius_norm,
    identity_tensor,
    inner_product,
    scale,
    sub,
    subarray,
    tensor_product,
)
from .convolution import (
    ConvGeometry,
    FilterSpec,
    compounded_filter,
    conv_geometry,
    convolve,
    filter_gradient,
    output_dims,
    zero_pad,
)
from .network import (
    ActivationKind,
    LayerConfig,
    LossKind,
    NetworkConfig,
    PoolSpec,
    activate,
    activate_derivative,
    batch_loss,
    feature_map_forward,
    layer_forward,
    loss,
    loss_gradient,
    pool,
    pool_backward,
    pooled_dims,
)
from .training import (
    BatchedTrace,
    EpochRecord,
    ForwardTrace,
    TrainConfig,
    TrainResult,
    batch_gather,
    batch_gradients,
    batched_forward,
    delta_backward,
    delta_output,
    forward_pass,
    grad_bias,
    grad_filter,
    initialize_network,
    sgd_step,
    train,
)

__version__ = "0.1.0"
