"""Kernel backend selection.

The compiled extension is preferred when importable; set ASDKIT_KERNELS to
``pure`` or ``fast`` to force a backend (``fast`` raises if unavailable).
"""

import os

from . import _pure

_choice = os.environ.get("ASDKIT_KERNELS", "auto")

if _choice == "pure":
    _impl = _pure
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "fast":
            raise
        _impl = _pure

BACKEND = _impl.BACKEND
im2col = _impl.im2col
depthwise_conv2d = _impl.depthwise_conv2d
depthwise_conv2d_backward = _impl.depthwise_conv2d_backward
depthwise_bias_relu = _impl.depthwise_bias_relu
depthwise_bias_relu_backward = _impl.depthwise_bias_relu_backward
bias_relu_inplace = _impl.bias_relu_inplace
relu_mask_inplace = _impl.relu_mask_inplace

pure = _pure
