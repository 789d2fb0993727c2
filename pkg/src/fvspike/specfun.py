"""Sine integral and Jacobi elliptic functions for any real parameter m.

Only real arguments are supported.  The elliptic functions take the
parameter m as the second argument (not the modulus k = sqrt(m)), and m may
lie anywhere on the real line: values above 1 are reduced with the
reciprocal-parameter transformation, negative values with the standard
negative-parameter transformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["JacobiTriple", "sine_integral", "jacobi_elliptic", "jacobi_cd"]

_AGM_TOL = 1e-15
_AGM_MAX_ITERS = 64
_SI_CROSSOVER = 4.0


@dataclass(frozen=True)
class JacobiTriple:
    """Values (sn, cn, dn) at a common argument and parameter."""

    sn: float
    cn: float
    dn: float


def sine_integral(x: float) -> float:
    """Si(x) = integral of sin(t)/t from 0 to x.

    Power series up to |x| = 4; beyond that the auxiliary-function form
    Si = pi/2 - f(x) cos x - g(x) sin x, with f and g obtained from the
    continued fraction of the exponential integral at imaginary argument
    (modified Lentz iteration).  Absolute accuracy is ~1e-15 for |x| <= 1e4.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"sine_integral requires finite x, got {x}")
    ax = abs(x)
    if ax <= _SI_CROSSOVER:
        val = _si_series(ax)
    else:
        val = _si_auxiliary(ax)
    return -val if x < 0 else val


def _si_series(x: float) -> float:
    # Si(x) = sum_k (-1)^k x^(2k+1) / ((2k+1) (2k+1)!)
    term = x
    total = x
    k = 0
    while True:
        k += 1
        term *= -x * x / ((2 * k) * (2 * k + 1))
        new = total + term / (2 * k + 1)
        if new == total:
            return total
        total = new
        if k > 60:  # unreachable for |x| <= 4
            return total


def _si_auxiliary(x: float) -> float:
    # Evaluate h = e^{-ix} * CF(ix) where CF is the Lentz continued fraction
    # of e^z E1(z); then Im(h) = Si(x) - pi/2.
    tiny = 1e-300
    b = complex(1.0, x)
    c = complex(1.0 / tiny, 0.0)
    d = 1.0 / b
    h = d
    for k in range(2, 400):
        a = -(k - 1) * (k - 1)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta.real - 1.0) + abs(delta.imag) < 1e-16:
            break
    h *= complex(math.cos(x), -math.sin(x))
    return 0.5 * math.pi + h.imag


def jacobi_elliptic(u: float, m: float) -> JacobiTriple:
    """(sn, cn, dn) at argument u with parameter m, any real m.

    m = 0 and m = 1 degenerate exactly to trigonometric and hyperbolic
    functions; 0 < m < 1 uses the arithmetic-geometric mean with the phase
    back-recursion; m > 1 and m < 0 are first mapped into [0, 1].
    """
    u = float(u)
    m = float(m)
    if not (math.isfinite(u) and math.isfinite(m)):
        raise ValueError(f"jacobi_elliptic requires finite arguments, got u={u}, m={m}")
    if m == 0.0:
        return JacobiTriple(math.sin(u), math.cos(u), 1.0)
    if m == 1.0:
        sech = 1.0 / math.cosh(u)
        return JacobiTriple(math.tanh(u), sech, sech)
    if m > 1.0:
        # reciprocal parameter: sn(u, m) = sn(u sqrt(m), 1/m) / sqrt(m),
        # cn and dn swap roles
        rm = math.sqrt(m)
        inner = jacobi_elliptic(u * rm, 1.0 / m)
        return JacobiTriple(inner.sn / rm, inner.dn, inner.cn)
    if m < 0.0:
        # negative parameter: map to mu = -m / (1 - m) in (0, 1)
        f = math.sqrt(1.0 - m)
        inner = jacobi_elliptic(u * f, -m / (1.0 - m))
        return JacobiTriple(inner.sn / (f * inner.dn), inner.cn / inner.dn,
                            1.0 / inner.dn)
    return _jacobi_agm(u, m)


def _jacobi_agm(u: float, m: float) -> JacobiTriple:
    # 0 < m < 1: descending Landen / AGM scale sequence, then recover the
    # amplitude by halving the phase back down.
    a = [1.0]
    c = [math.sqrt(m)]
    b = math.sqrt(1.0 - m)
    n = 0
    while abs(c[n]) > _AGM_TOL * a[n] and n < _AGM_MAX_ITERS:
        a_next = 0.5 * (a[n] + b)
        c_next = 0.5 * (a[n] - b)
        b = math.sqrt(a[n] * b)
        a.append(a_next)
        c.append(c_next)
        n += 1
    phi = (2.0 ** n) * a[n] * u
    phi_next = phi
    for k in range(n, 0, -1):
        arg = c[k] / a[k] * math.sin(phi)
        phi_next = phi
        phi = 0.5 * (phi + math.asin(max(-1.0, min(1.0, arg))))
    sn = math.sin(phi)
    cn = math.cos(phi)
    if n == 0:
        return JacobiTriple(sn, cn, 1.0)
    denom = math.cos(phi_next - phi)
    if abs(denom) < 1e-8:
        # cn and the denominator vanish together near u = K; the well-
        # conditioned identity value is accurate there
        dn = math.sqrt(max(0.0, 1.0 - m * sn * sn))
    else:
        dn = cn / denom
    return JacobiTriple(sn, cn, dn)


def jacobi_cd(u: float, m: float) -> float:
    """cd(u, m) = cn(u, m) / dn(u, m)."""
    t = jacobi_elliptic(u, m)
    if t.dn == 0.0:
        raise ZeroDivisionError(f"jacobi_cd pole: dn({u}, {m}) = 0")
    return t.cn / t.dn
