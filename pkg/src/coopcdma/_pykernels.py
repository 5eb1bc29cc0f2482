"""Pure-Python block kernels, used when the compiled extension is missing.

Each function loops over the rows of ``Y`` and runs the per-symbol
reference detector from :mod:`coopcdma.detect`. Signatures and return
values match :mod:`coopcdma._ckernels` exactly.
"""

import numpy as np

from . import detect
from .sysmodel import Constellation


def _constellation(points):
    points = np.asarray(points, dtype=complex)
    nc = len(points)
    bits = np.zeros((nc, max(1, int(np.log2(nc)))), dtype=np.int8)
    return Constellation("custom", points, bits)


def _run(fn, Y, eff, points, d_th, n_group, full, grey="disc", **kw):
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    ctx = detect.DetectorContext(eff, _constellation(points), d_th, n_group, grey=grey)
    if np.any(ctx.energy == 0):
        raise ValueError("zero-energy signature")
    P, K = len(Y), ctx.K
    dec = np.empty((P, K), dtype=np.int32)
    order = np.empty((P, K), dtype=np.int32)
    branch = np.empty(P, dtype=np.int32)
    ncand = np.empty(P, dtype=np.int32)
    for i in range(P):
        c = fn(Y[i], ctx, **kw)
        dec[i] = c.decisions
        order[i] = c.ordering
        branch[i] = c.branch_id
        ncand[i] = c.n_candidates
    if full:
        return dec, order, branch, ncand
    return dec


def sic_block(Y, eff, points, n_group, forced=None, full=False):
    return _run(detect.conventional_sic, Y, eff, points, 0.0, n_group, full, forced_ordering=forced)


def glsic_block(Y, eff, points, d_th, n_group, forced=None, full=False, grey="disc"):
    return _run(detect.gl_sic, Y, eff, points, d_th, n_group, full, grey, forced_ordering=forced)


def mbglsic_block(Y, eff, points, d_th, n_group, full=False, grey="disc"):
    return _run(detect.mb_gl_sic, Y, eff, points, d_th, n_group, full, grey)
