"""Fused per-chunk kernel for the interference-limited metrics.

One pass over a block of points computes the metric, the serving RSS, the
linear SINR, the interference and (optionally) both gradients. Gradients
accumulate point by point in row order, so results depend only on the
chunk boundaries.
"""

import math

import numba as nb
import numpy as np

KIND_CODES = {"sinr": 1, "mp": 2, "sm": 3}
_C10 = math.log(10.0) / 10.0


@nb.njit(cache=True, nogil=True, error_model="numpy")
def sinr_chunk(
    elev, static, vslope, tilts, powers, base, pw, assign, weight,
    kind, sigma2, mu, nu, alpha, xi, want_theta, want_rho,
    metric, own_dbm, sinr, interference, g_theta, g_rho,
):  # fmt: skip
    """Returns the first row whose SINR denominator is not positive, or -1.

    ``base`` with zero rows means "compute the linear gains from dB";
    otherwise the gain of (q, n) is ``base[q, n] * pw[n]``.
    """
    n_rows, n_bs = elev.shape
    cached = base.shape[0] > 0
    lin = np.empty(n_bs)
    for q in range(n_rows):
        a = assign[q]
        for n in range(n_bs):
            if cached:
                lin[n] = base[q, n] * pw[n]
            else:
                d = elev[q, n] - tilts[n]
                lin[n] = math.exp((static[q, n] + powers[n] - vslope * d * d) * _C10)
        d_own = elev[q, a] - tilts[a]
        own = static[q, a] + powers[a] - vslope * d_own * d_own
        total = 0.0
        for n in range(n_bs):
            if n != a:
                total += lin[n]
        den = total + sigma2
        if not den > 0.0:
            return q
        s = lin[a] / den
        if kind == 1:
            m = own - 10.0 * math.log10(den)
            ow = 1.0
        elif kind == 2:
            t = s + nu
            m = -math.log(mu + 1.0 / t)
            ow = s * _C10 / (t * (1.0 + mu * t))
        else:
            t = s + nu
            e = math.exp(alpha / t**xi)
            m = -e
            ow = alpha * xi * s * _C10 / t ** (xi + 1.0) * e
        metric[q] = m
        own_dbm[q] = own
        sinr[q] = s
        interference[q] = total
        if want_theta or want_rho:
            w_own = weight[q] * ow
            f = -w_own / den
            two_v = 2.0 * vslope
            for n in range(n_bs):
                c = w_own if n == a else f * lin[n]
                if want_rho:
                    g_rho[n] += c
                if want_theta:
                    g_theta[n] += c * two_v * (elev[q, n] - tilts[n])
    return -1
