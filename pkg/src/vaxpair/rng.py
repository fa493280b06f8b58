"""Counter-based uniform streams keyed by (seed, partnership id).

Partnership ``k`` owns a fixed run of ``stride`` doubles in the Philox
stream keyed by ``seed``, starting at counter ``k * stride / 4``. Any slice
of partnerships can be generated independently, so chunked or threaded runs
reproduce a serial run exactly.
"""

import numpy as np

_DOUBLES_PER_COUNTER = 4


def uniform_block(seed, start, stop, stride):
    """Uniforms for partnerships ``start .. stop-1`` as an array (stop-start, stride).

    Values lie in (0, 1); exact zeros from the generator are nudged to the
    smallest positive double so log and inverse-normal transforms stay finite.
    """
    if stride % _DOUBLES_PER_COUNTER:
        raise ValueError(f"stride must be a multiple of {_DOUBLES_PER_COUNTER}")
    n = stop - start
    bitgen = np.random.Philox(key=int(seed) % (1 << 128))
    if start:
        bitgen.advance(start * stride // _DOUBLES_PER_COUNTER)
    u = np.random.Generator(bitgen).random((n, stride))
    u[u == 0.0] = np.finfo(float).tiny
    return u
