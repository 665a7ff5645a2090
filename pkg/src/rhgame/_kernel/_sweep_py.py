"""numpy implementation of the better-response sweep.

Mirrors ``_sweep.pyx`` operation for operation (same evaluation order of
every floating-point expression) so both backends produce identical plans.
"""

from __future__ import annotations

import numpy as np


def _link_prices(v, price_kind, slope, bx, by, bslopes):
    if price_kind == 0:
        return slope * v
    k = np.clip(np.searchsorted(bx, v, side="right") - 1, 0, len(bx) - 2)
    return by[k] + bslopes[k] * (v - bx[k])


def sweep(
    x, lam, active, mu, offset, eta, apath_ptr, apath_idx, plink_ptr, plink_idx,
    plen, price_kind, slope, bx, by, bslopes, kappa, phase, period, gamma, deadband,
):
    """Run ``gamma`` sweeps in place on ``x`` (agents, T, paths) and ``lam`` (T, links).

    Returns the number of swaps applied.
    """
    n_agents = x.shape[0]
    T = period
    links_of = [plink_idx[plink_ptr[p] : plink_ptr[p + 1]] for p in range(len(plen))]
    swaps = 0
    for _ in range(gamma):
        for i in range(n_agents):
            if not active[i]:
                continue
            paths = apath_idx[apath_ptr[i] : apath_ptr[i + 1]]
            k = len(paths)
            if k == 0:
                continue
            m = mu[i]
            best = deadband
            pick = None
            for shift in (-T, 0, T):
                a = offset[i] - phase + shift
                b = a + eta[i]
                a, b = max(a, 0), min(b, T - 1)
                if a > b:
                    continue
                lp = _link_prices(lam[a : b + 1], price_kind, slope, bx, by, bslopes)
                pp = np.empty((b - a + 1, k))
                for j, p in enumerate(paths):
                    ls = links_of[p]
                    col = lp[:, ls[0]].copy()
                    for l in ls[1:]:
                        col += lp[:, l]
                    pp[:, j] = col
                xs = x[i, a : b + 1][:, paths]
                gain = (pp[None, :, None, :] - pp[:, None, :, None]) * (m - xs)[:, None, :, None]
                gain = gain * xs[None, :, None, :]
                s = b - a + 1
                idx = np.arange(s)
                gain[idx[:, None], idx[:, None], np.arange(k)[None, :], np.arange(k)[None, :]] = -np.inf
                flat = int(np.argmax(gain))
                g = gain.flat[flat]
                if g > best:
                    tb, tu, jb, ju = np.unravel_index(flat, gain.shape)
                    best = g
                    pick = (a + tb, a + tu, paths[jb], paths[ju], pp[tu, ju] - pp[tb, jb])
            if pick is None:
                continue
            tb, tu, pb, pu, gap = pick
            d = gap / (kappa * float(plen[pb] + plen[pu]))
            if d < 0.0:
                d = 0.0
            xb = x[i, tb, pb]
            xu = x[i, tu, pu]
            d = min(d, m - xb, xu)
            if not d > 0.0:
                continue
            x[i, tb, pb] = min(xb + d, m)
            x[i, tu, pu] = max(xu - d, 0.0)
            for l in links_of[pb]:
                lam[tb, l] += d
            for l in links_of[pu]:
                lam[tu, l] -= d
            swaps += 1
    return swaps
