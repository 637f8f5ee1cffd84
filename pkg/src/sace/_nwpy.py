"""Pure numpy fallback for the kernel sums in ``_nwcore``."""

import numpy as np

CHUNK = 256


def nw_sums(train_x, train_y, h, query, kernel):
    """Same contract as the compiled ``nw_sums``."""
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=float)
    query = np.asarray(query, dtype=float)
    inv_h = 1.0 / np.asarray(h, dtype=float)
    tx = train_x * inv_h
    nq = query.shape[0]
    num = np.zeros((nq, train_y.shape[1]))
    den = np.zeros(nq)
    for start in range(0, nq, CHUNK):
        qs = query[start:start + CHUNK] * inv_h
        u = qs[:, None, :] - tx[None, :, :]
        if kernel == 0:
            w = np.exp(-0.5 * np.einsum("aij,aij->ai", u, u))
        else:
            inside = np.abs(u) < 1.0
            w = np.prod(np.where(inside, 0.75 * (1.0 - u * u), 0.0), axis=2)
        den[start:start + CHUNK] = w.sum(axis=1)
        num[start:start + CHUNK] = w @ train_y
    return num, den
