"""Hot numeric kernels in two interchangeable flavours.

``sgns`` and ``lstm`` point at the numba-jitted modules when numba is
available and ``CHORDSEG_NUMBA`` is not disabled, and at the pure numpy
fallbacks otherwise.  Both flavours share one calling convention and agree
numerically to rounding error; tests and the benchmark import the concrete
modules directly to compare them.
"""

from .. import accel

if accel.NUMBA_ENABLED:
    from . import lstm_numba as lstm
    from . import sgns_numba as sgns
else:
    from . import lstm_numpy as lstm
    from . import sgns_numpy as sgns

ACTIVE = "numba" if accel.NUMBA_ENABLED else "numpy"

__all__ = ["sgns", "lstm", "ACTIVE"]
