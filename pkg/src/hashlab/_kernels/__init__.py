"""Hot-loop kernels with backend selection at import time.

The compiled extension (``hashlab._kernels._core``) is preferred when it
was built; otherwise the numpy fallback is used.  Set the environment
variable ``HASHLAB_NO_EXT=1`` before import to force the fallback.
``BACKEND`` reports which one is active.
"""

import os

from . import _fallback

if os.environ.get("HASHLAB_NO_EXT"):
    _impl = _fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward
hamming_distances = _impl.hamming_distances
