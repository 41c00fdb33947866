"""Pointwise hot kernels with a numba backend and a pure-numpy fallback.

Every kernel exists in two implementations that produce the same values (up
to last-ulp reassociation): a vectorized numpy one and an explicit-loop one
compiled with ``numba.njit``.  The active backend is chosen at import time
from the ``STCNS_BACKEND`` environment variable:

* ``STCNS_BACKEND=numba``  force the jitted kernels (error if numba missing)
* ``STCNS_BACKEND=numpy``  force the pure-numpy fallback
* unset                    numba when importable, numpy otherwise

``IMPLEMENTATIONS`` maps backend name to its function table so tests and
``benchmarks/bench_kernels.py`` can exercise both paths side by side.
Kernels are compiled without ``parallel=True`` on purpose: ensemble runs
promise bit-reproducible output and parallel reductions would break that.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "IMPLEMENTATIONS",
    "taming_g",
    "taming_g_prime",
    "taming_g_second",
    "tamed_velocity",
    "logistic_cubic",
    "shifted_entropy",
    "weighted_hessian_sq",
    "quartic_gradient",
    "smoothstep_fall",
    "leray_snap",
    "expo_update",
    "expo_update_noise",
]


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _np_taming_g(r, n_thr, c3, c4, c5, c6):
    """g(r): 0 below n_thr, r - n_thr above n_thr + 1, C^3 blend between.

    The blend is the antiderivative of q(t) = c3 t^3 + c4 t^4 + c5 t^5 + c6 t^6
    evaluated at t = r - n_thr.
    """
    r = np.asarray(r, dtype=np.float64)
    t = r - n_thr
    blend = t**4 * (c3 / 4.0 + t * (c4 / 5.0 + t * (c5 / 6.0 + t * (c6 / 7.0))))
    out = np.where(r <= n_thr, 0.0, np.where(r >= n_thr + 1.0, t, blend))
    return out


def _np_taming_g_prime(r, n_thr, c3, c4, c5, c6):
    r = np.asarray(r, dtype=np.float64)
    t = r - n_thr
    q = t**3 * (c3 + t * (c4 + t * (c5 + t * c6)))
    return np.where(r <= n_thr, 0.0, np.where(r >= n_thr + 1.0, 1.0, q))


def _np_taming_g_second(r, n_thr, c3, c4, c5, c6):
    r = np.asarray(r, dtype=np.float64)
    t = r - n_thr
    qp = t**2 * (3.0 * c3 + t * (4.0 * c4 + t * (5.0 * c5 + t * 6.0 * c6)))
    return np.where((r <= n_thr) | (r >= n_thr + 1.0), 0.0, qp)


def _np_tamed_velocity(u1, u2, u3, n_thr, c3, c4, c5, c6):
    """g(|u|^2) u, componentwise."""
    r2 = u1 * u1 + u2 * u2 + u3 * u3
    g = _np_taming_g(r2, n_thr, c3, c4, c5, c6)
    return g * u1, g * u2, g * u3


def _np_logistic_cubic(n, a):
    """n (1 - n) (n - a), kept in factored form so roots are exact."""
    return n * (1.0 - n) * (n - a)


def _np_shifted_entropy(n, floor):
    """(n+1) ln(n+1) with the argument of ln floored at ``floor``.

    Returns the integrand array and the number of floored points.
    """
    x = n + 1.0
    bad = x < floor
    xf = np.where(bad, floor, x)
    return xf * np.log(xf), int(np.count_nonzero(bad))


def _np_weighted_hessian_sq(c, h11, h22, h33, h12, h13, h23, floor):
    """max(c, floor) * |H|^2 with H the symmetric matrix given by 6 entries."""
    frob = (
        h11 * h11 + h22 * h22 + h33 * h33
        + 2.0 * (h12 * h12 + h13 * h13 + h23 * h23)
    )
    return np.maximum(c, floor) * frob


def _np_quartic_gradient(c, g1, g2, g3, floor):
    """|grad c|^4 / max(c, floor)^3."""
    m = g1 * g1 + g2 * g2 + g3 * g3
    cf = np.maximum(c, floor)
    return (m * m) / (cf * cf * cf)


def _np_smoothstep_fall(x, r):
    """Quintic falloff: 1 on [0, r], 0 on [2r, inf), monotone in between."""
    x = np.asarray(x, dtype=np.float64)
    s = np.clip((x - r) / r, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 + s * (-15.0 + 6.0 * s))


def _np_leray_snap(k1, k2, k3, k_sq, p1, p2, p3, u1, u2, u3, tol):
    """Mode-wise removal of the longitudinal part; modes whose longitudinal
    fraction is below tol pass through verbatim (see leray_project_hat)."""
    s = k1 * u1
    s += k2 * u2
    s += k3 * u3
    mag2 = u1.real**2
    for part in (u1.imag, u2.real, u2.imag, u3.real, u3.imag):
        mag2 += part**2
    snap = (s.real**2 + s.imag**2) <= (tol * tol) * k_sq * mag2
    return (
        np.where(snap, u1, u1 - p1 * s),
        np.where(snap, u2, u2 - p2 * s),
        np.where(snap, u3, u3 - p3 * s),
    )


def _np_expo_update(v, d, lap_mult, prop, dt):
    """prop * (v + dt * (d - lap_mult * v)): one exponential-Euler update."""
    return prop * (v + dt * (d - lap_mult * v))


def _np_expo_update_noise(v, d, lap_mult, prop, dt, extra, theta):
    return prop * (v + dt * (d - lap_mult * v) + theta * extra)


_NUMPY_IMPL = {
    "taming_g": _np_taming_g,
    "taming_g_prime": _np_taming_g_prime,
    "taming_g_second": _np_taming_g_second,
    "tamed_velocity": _np_tamed_velocity,
    "logistic_cubic": _np_logistic_cubic,
    "shifted_entropy": _np_shifted_entropy,
    "weighted_hessian_sq": _np_weighted_hessian_sq,
    "quartic_gradient": _np_quartic_gradient,
    "smoothstep_fall": _np_smoothstep_fall,
    "leray_snap": _np_leray_snap,
    "expo_update": _np_expo_update,
    "expo_update_noise": _np_expo_update_noise,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def _g_scalar(r, n_thr, c3, c4, c5, c6):
        if r <= n_thr:
            return 0.0
        t = r - n_thr
        if r >= n_thr + 1.0:
            return t
        return t**4 * (c3 / 4.0 + t * (c4 / 5.0 + t * (c5 / 6.0 + t * (c6 / 7.0))))

    @njit(cache=True)
    def nb_taming_g(r, n_thr, c3, c4, c5, c6):
        out = np.empty_like(r)
        rf = r.ravel()
        of = out.ravel()
        for i in range(rf.size):
            of[i] = _g_scalar(rf[i], n_thr, c3, c4, c5, c6)
        return out

    @njit(cache=True)
    def nb_taming_g_prime(r, n_thr, c3, c4, c5, c6):
        out = np.empty_like(r)
        rf = r.ravel()
        of = out.ravel()
        for i in range(rf.size):
            ri = rf[i]
            if ri <= n_thr:
                of[i] = 0.0
            elif ri >= n_thr + 1.0:
                of[i] = 1.0
            else:
                t = ri - n_thr
                of[i] = t**3 * (c3 + t * (c4 + t * (c5 + t * c6)))
        return out

    @njit(cache=True)
    def nb_taming_g_second(r, n_thr, c3, c4, c5, c6):
        out = np.empty_like(r)
        rf = r.ravel()
        of = out.ravel()
        for i in range(rf.size):
            ri = rf[i]
            if ri <= n_thr or ri >= n_thr + 1.0:
                of[i] = 0.0
            else:
                t = ri - n_thr
                of[i] = t**2 * (3.0 * c3 + t * (4.0 * c4 + t * (5.0 * c5 + t * 6.0 * c6)))
        return out

    @njit(cache=True)
    def nb_tamed_velocity(u1, u2, u3, n_thr, c3, c4, c5, c6):
        o1 = np.empty_like(u1)
        o2 = np.empty_like(u2)
        o3 = np.empty_like(u3)
        f1, f2, f3 = u1.ravel(), u2.ravel(), u3.ravel()
        w1, w2, w3 = o1.ravel(), o2.ravel(), o3.ravel()
        for i in range(f1.size):
            a, b, c = f1[i], f2[i], f3[i]
            g = _g_scalar(a * a + b * b + c * c, n_thr, c3, c4, c5, c6)
            w1[i] = g * a
            w2[i] = g * b
            w3[i] = g * c
        return o1, o2, o3

    @njit(cache=True)
    def nb_logistic_cubic(n, a):
        out = np.empty_like(n)
        nf = n.ravel()
        of = out.ravel()
        for i in range(nf.size):
            x = nf[i]
            of[i] = x * (1.0 - x) * (x - a)
        return out

    @njit(cache=True)
    def nb_shifted_entropy(n, floor):
        out = np.empty_like(n)
        nf = n.ravel()
        of = out.ravel()
        count = 0
        for i in range(nf.size):
            x = nf[i] + 1.0
            if x < floor:
                x = floor
                count += 1
            of[i] = x * np.log(x)
        return out, count

    @njit(cache=True)
    def nb_weighted_hessian_sq(c, h11, h22, h33, h12, h13, h23, floor):
        out = np.empty_like(c)
        cf = c.ravel()
        a11, a22, a33 = h11.ravel(), h22.ravel(), h33.ravel()
        a12, a13, a23 = h12.ravel(), h13.ravel(), h23.ravel()
        of = out.ravel()
        for i in range(cf.size):
            frob = (
                a11[i] * a11[i] + a22[i] * a22[i] + a33[i] * a33[i]
                + 2.0 * (a12[i] * a12[i] + a13[i] * a13[i] + a23[i] * a23[i])
            )
            ci = cf[i]
            if ci < floor:
                ci = floor
            of[i] = ci * frob
        return out

    @njit(cache=True)
    def nb_quartic_gradient(c, g1, g2, g3, floor):
        out = np.empty_like(c)
        cf = c.ravel()
        b1, b2, b3 = g1.ravel(), g2.ravel(), g3.ravel()
        of = out.ravel()
        for i in range(cf.size):
            m = b1[i] * b1[i] + b2[i] * b2[i] + b3[i] * b3[i]
            ci = cf[i]
            if ci < floor:
                ci = floor
            of[i] = (m * m) / (ci * ci * ci)
        return out

    @njit(cache=True)
    def nb_smoothstep_fall(x, r):
        out = np.empty_like(x)
        xf = x.ravel()
        of = out.ravel()
        for i in range(xf.size):
            s = (xf[i] - r) / r
            if s <= 0.0:
                of[i] = 1.0
            elif s >= 1.0:
                of[i] = 0.0
            else:
                of[i] = 1.0 - s**3 * (10.0 + s * (-15.0 + 6.0 * s))
        return out

    @njit(cache=True)
    def nb_leray_snap(k1, k2, k3, k_sq, p1, p2, p3, u1, u2, u3, tol):
        o1 = np.empty_like(u1)
        o2 = np.empty_like(u2)
        o3 = np.empty_like(u3)
        a1, a2, a3 = u1.ravel(), u2.ravel(), u3.ravel()
        b1, b2, b3 = o1.ravel(), o2.ravel(), o3.ravel()
        q1, q2, q3, qs = k1.ravel(), k2.ravel(), k3.ravel(), k_sq.ravel()
        r1, r2, r3 = p1.ravel(), p2.ravel(), p3.ravel()
        tol2 = tol * tol
        for i in range(a1.size):
            s = q1[i] * a1[i] + q2[i] * a2[i] + q3[i] * a3[i]
            mag2 = (
                a1[i].real**2 + a1[i].imag**2
                + a2[i].real**2 + a2[i].imag**2
                + a3[i].real**2 + a3[i].imag**2
            )
            if s.real**2 + s.imag**2 <= tol2 * qs[i] * mag2:
                b1[i] = a1[i]
                b2[i] = a2[i]
                b3[i] = a3[i]
            else:
                b1[i] = a1[i] - r1[i] * s
                b2[i] = a2[i] - r2[i] * s
                b3[i] = a3[i] - r3[i] * s
        return o1, o2, o3

    @njit(cache=True)
    def nb_expo_update(v, d, lap_mult, prop, dt):
        out = np.empty_like(v)
        vf, df = v.ravel(), d.ravel()
        lm, pr, of = lap_mult.ravel(), prop.ravel(), out.ravel()
        for i in range(vf.size):
            of[i] = pr[i] * (vf[i] + dt * (df[i] - lm[i] * vf[i]))
        return out

    @njit(cache=True)
    def nb_expo_update_noise(v, d, lap_mult, prop, dt, extra, theta):
        out = np.empty_like(v)
        vf, df, ef = v.ravel(), d.ravel(), extra.ravel()
        lm, pr, of = lap_mult.ravel(), prop.ravel(), out.ravel()
        for i in range(vf.size):
            of[i] = pr[i] * (vf[i] + dt * (df[i] - lm[i] * vf[i]) + theta * ef[i])
        return out

    return {
        "taming_g": nb_taming_g,
        "taming_g_prime": nb_taming_g_prime,
        "taming_g_second": nb_taming_g_second,
        "tamed_velocity": nb_tamed_velocity,
        "logistic_cubic": nb_logistic_cubic,
        "shifted_entropy": nb_shifted_entropy,
        "weighted_hessian_sq": nb_weighted_hessian_sq,
        "quartic_gradient": nb_quartic_gradient,
        "smoothstep_fall": nb_smoothstep_fall,
        "leray_snap": nb_leray_snap,
        "expo_update": nb_expo_update,
        "expo_update_noise": nb_expo_update_noise,
    }


def _select_backend():
    requested = os.environ.get("STCNS_BACKEND", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"STCNS_BACKEND={requested!r} not understood (use 'numba' or 'numpy')"
        )
    impls = {"numpy": _NUMPY_IMPL}
    if requested != "numpy":
        try:
            impls["numba"] = _build_numba_impl()
        except ImportError:
            if requested == "numba":
                raise
    backend = "numba" if "numba" in impls else "numpy"
    if requested:
        backend = requested
    return backend, impls


BACKEND, IMPLEMENTATIONS = _select_backend()

_active = IMPLEMENTATIONS[BACKEND]
taming_g = _active["taming_g"]
taming_g_prime = _active["taming_g_prime"]
taming_g_second = _active["taming_g_second"]
tamed_velocity = _active["tamed_velocity"]
logistic_cubic = _active["logistic_cubic"]
shifted_entropy = _active["shifted_entropy"]
weighted_hessian_sq = _active["weighted_hessian_sq"]
quartic_gradient = _active["quartic_gradient"]
smoothstep_fall = _active["smoothstep_fall"]
leray_snap = _active["leray_snap"]
expo_update = _active["expo_update"]
expo_update_noise = _active["expo_update_noise"]
