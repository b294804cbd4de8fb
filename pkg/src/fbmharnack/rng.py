"""Counter-based Gaussian streams.

Every draw is a pure function of ``(seed, path_index, stream, position)``:
a Philox4x32-10 block cipher turns the counter into 128 random bits, two
53-bit uniforms are formed from them and mapped through the inverse normal
CDF (Cephes ``ndtri``).  Nothing depends on how paths are batched or
scheduled across workers.
"""

import numpy as np
from scipy.special import ndtri

__all__ = ["philox4x32", "uniforms", "normals", "PathStream"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)

# stream tags
WIENER = 0
DETAIL = 1
CHOLESKY = 2


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : array of shape (..., 4), values < 2**32
    key : array of shape (..., 2), broadcastable against ``counter``

    Returns
    -------
    ndarray of uint64 with the same shape as ``counter`` holding 32-bit words.
    """
    ctr = np.asarray(counter, dtype=np.uint64) & _MASK
    k = np.asarray(key, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = ctr[..., 0], ctr[..., 1], ctr[..., 2], ctr[..., 3]
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _SHIFT) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3), axis=-1)


def _key(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)


def uniforms(seed, path_index, stream, count):
    """Open-interval uniforms of shape ``(len(path_index), count)``."""
    paths = np.atleast_1d(np.asarray(path_index, dtype=np.uint64))
    n_blocks = (count + 1) // 2
    block = np.arange(n_blocks, dtype=np.uint64)
    ctr = np.empty((paths.size, n_blocks, 4), dtype=np.uint64)
    ctr[..., 0] = block[None, :]
    ctr[..., 1] = np.uint64(stream)
    ctr[..., 2] = (paths & _MASK)[:, None]
    ctr[..., 3] = (paths >> _SHIFT)[:, None]
    bits = philox4x32(ctr, _key(seed))
    hi = bits[..., 0::2] >> np.uint64(5)  # 27 bits
    lo = bits[..., 1::2] >> np.uint64(6)  # 26 bits
    k = (hi << np.uint64(26)) | lo
    u = (k.astype(np.float64) + 0.5) * 2.0**-53
    return u.reshape(paths.size, 2 * n_blocks)[:, :count]


def normals(seed, path_index, stream, count):
    """Standard normals of shape ``(len(path_index), count)``."""
    return ndtri(uniforms(seed, path_index, stream, count))


class PathStream:
    """Normal source bound to ``(seed, path indices, stream)``.

    ``standard_normal(count)`` returns ``(count,)`` for a scalar path index
    and ``(n_paths, count)`` otherwise.  It is idempotent: the numbers are
    the first ``count`` of the stream, whatever was drawn before.
    """

    def __init__(self, seed, path_index, stream=CHOLESKY):
        self.seed = int(seed)
        self.scalar = np.ndim(path_index) == 0
        self.path_index = np.atleast_1d(np.asarray(path_index, dtype=np.int64))
        self.stream = int(stream)

    def standard_normal(self, count):
        z = normals(self.seed, self.path_index, self.stream, count)
        return z[0] if self.scalar else z
