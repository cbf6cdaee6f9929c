"""Kernel backend selection.

The compiled Cython backend is preferred when it was built; otherwise
the pure numpy fallback is used.  Both produce bit-identical results
(see _pykernels), so the choice only affects speed.

CFTALIGN_KERNELS=python|c|auto forces the choice (default auto).
"""

import os

from .. import errors

_choice = os.environ.get("CFTALIGN_KERNELS", "auto")
if _choice not in ("auto", "c", "python"):
    raise errors.ConfigurationError(
        "CFTALIGN_KERNELS must be auto, c or python (got %r)" % _choice
    )

if _choice == "python":
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise errors.ConfigurationError(
                "CFTALIGN_KERNELS=c but the compiled extension is not available; "
                "build it with `python setup.py build_ext --inplace`"
            )
        from . import _pykernels as _impl

        BACKEND = "python"

conv_out_size = _impl.conv_out_size
im2col = _impl.im2col
col2im = _impl.col2im
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
