"""Per-variable equilibrium densities and moment/expectation evaluation.

All stock densities are even, so odd moments are exactly zero (an ``int`` 0,
not a small float).  That exactness is what makes odd Liouville moments of
Hamiltonian chains vanish identically in rational mode: every contributing
monomial carries at least one odd exponent and is short-circuited before any
floating-point moment is touched.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from .errors import InvalidDensityError, MissingDensityError
from .poly import Polynomial

_moment_cache: dict = {}


@dataclass(frozen=True)
class Gaussian:
    """Centered Gaussian with inverse-temperature parameter: variance 1/gamma."""

    gamma: object  # int | Fraction | float, > 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidDensityError("Gaussian gamma must be positive")


@dataclass(frozen=True)
class QuarticGibbs:
    """Density proportional to exp(-gamma*(alpha1 x^2/2 + beta1 x^4/4))."""

    gamma: object
    alpha1: object = 1
    beta1: object = 1

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidDensityError("QuarticGibbs gamma must be positive")
        if self.beta1 < 0:
            raise InvalidDensityError("QuarticGibbs beta1 must be nonnegative")
        if self.beta1 == 0 and self.alpha1 <= 0:
            raise InvalidDensityError(
                "non-integrable density: beta1 = 0 requires alpha1 > 0")


@dataclass(frozen=True)
class CustomDensity:
    """Unnormalized log-density on a symmetric quadrature domain [-a, a]."""

    log_density: Callable[[np.ndarray], np.ndarray]
    halfwidth: float
    nodes: int = 801

    def __post_init__(self):
        if self.halfwidth <= 0 or self.nodes < 8:
            raise InvalidDensityError("CustomDensity needs halfwidth > 0, nodes >= 8")


Density1D = Gaussian | QuarticGibbs | CustomDensity


def _gaussian_moment(gamma, m: int):
    if m % 2 == 1:
        return 0
    k = m // 2
    dfact = 1
    for i in range(3, m, 2):
        dfact *= i
    var = (Fraction(1, 1) / gamma) if not isinstance(gamma, float) else 1.0 / gamma
    return dfact * var**k


def _quartic_domain(d: QuarticGibbs, m: int) -> float:
    g, a1, b1 = float(d.gamma), float(d.alpha1), float(d.beta1)
    # choose a so the integrand tail x^m exp(-g V(x)) drops below ~1e-320
    a = 1.0
    while g * (0.5 * a1 * a * a + 0.25 * b1 * a**4) - m * math.log(a + 1.0) < 740.0:
        a *= 1.5
        if a > 1e8:
            raise InvalidDensityError("quartic density fails to decay")
    return a

def _quartic_moment(d: QuarticGibbs, m: int):
    if m % 2 == 1:
        return 0
    if d.beta1 == 0:
        return _gaussian_moment(d.gamma * d.alpha1, m)
    g, a1, b1 = float(d.gamma), float(d.alpha1), float(d.beta1)
    a = _quartic_domain(d, m)
    weight = lambda x: np.exp(-g * (0.5 * a1 * x * x + 0.25 * b1 * x**4))
    num, _ = integrate.quad(lambda x: x**m * weight(x), 0.0, a,
                            epsabs=1e-300, epsrel=1e-13, limit=200)
    den, _ = integrate.quad(weight, 0.0, a, epsabs=1e-300, epsrel=1e-13, limit=200)
    return num / den


def _custom_nodes(d: CustomDensity):
    x, w = np.polynomial.legendre.leggauss(d.nodes)
    x = x * d.halfwidth
    w = w * d.halfwidth
    dens = np.exp(np.asarray(d.log_density(x), dtype=float))
    z = float(np.dot(w, dens))
    if not np.isfinite(z) or z <= 0:
        raise InvalidDensityError("custom density does not normalize")
    return x, w * dens / z


def _custom_moment(d: CustomDensity, m: int) -> float:
    x, w = _custom_nodes(d)
    return float(np.dot(w, x**m))


def moment(d: Density1D, m: int):
    """m-th raw moment of a 1D density; odd moments of even densities are exact 0."""
    if m < 0 or not isinstance(m, int):
        raise ValueError("moment order must be a nonnegative integer")
    if m == 0:
        return 1 if not isinstance(d, CustomDensity) else 1.0
    key = (d, m)
    try:
        return _moment_cache[key]
    except KeyError:
        pass
    except TypeError:
        key = None  # unhashable custom callable; skip the cache
    if isinstance(d, Gaussian):
        val = _gaussian_moment(d.gamma, m)
    elif isinstance(d, QuarticGibbs):
        val = _quartic_moment(d, m)
    elif isinstance(d, CustomDensity):
        val = _custom_moment(d, m)
    else:
        raise InvalidDensityError(f"unknown density type {type(d).__name__}")
    if key is not None:
        _moment_cache[key] = val
    return val


def variance(d: Density1D):
    m1 = moment(d, 1)
    return moment(d, 2) - m1 * m1


@dataclass(frozen=True)
class ProductMeasure:
    """Independent per-variable densities keyed by variable index."""

    densities: Mapping[int, Density1D] = field(default_factory=dict)

    def density(self, v: int) -> Density1D:
        try:
            return self.densities[v]
        except KeyError:
            raise MissingDensityError(f"no density for variable {v}") from None

    @classmethod
    def uniform(cls, density: Density1D, dimension: int) -> "ProductMeasure":
        return cls({v: density for v in range(dimension)})


def gibbs_measure(system, gamma) -> ProductMeasure:
    """Gibbs product measure of a built-in chain in (r, p) coordinates.

    Momenta are Gaussian with variance mass/gamma; displacements follow the
    quartic Gibbs marginal (Gaussian when the quartic coupling vanishes).
    """
    params = dict(system.params)
    n = params["n_sites"]
    a1, b1, m = params["alpha1"], params["beta1"], params["mass"]
    if b1 == 0:
        r_density: Density1D = Gaussian(gamma * a1)
    else:
        r_density = QuarticGibbs(gamma, a1, b1)
    p_density = Gaussian(gamma / m if isinstance(gamma, float) or isinstance(m, float)
                         else Fraction(gamma, 1) / m)
    dens: dict[int, Density1D] = {}
    for j in range(n):
        dens[j] = r_density
        dens[n + j] = p_density
    return ProductMeasure(dens)


def expectation(poly: Polynomial, measure: ProductMeasure):
    """E[poly] under the product measure, factorizing over variables."""
    total = 0
    for key, coeff in poly._terms.items():
        term = coeff
        for v, e in key:
            mv = moment(measure.density(v), e)
            if mv == 0:
                term = 0
                break
            term = term * mv
        total = total + term
    return total


def _parity_classes(poly: Polynomial):
    classes = defaultdict(list)
    for key, coeff in poly._terms.items():
        sig = tuple(v for v, e in key if e & 1)
        classes[sig].append((key, coeff))
    return classes


def product_expectation(f: Polynomial, g: Polynomial, measure: ProductMeasure):
    """E[f*g] without materializing the product polynomial.

    Pairs of terms contribute only when their odd-exponent variable sets
    coincide (all stock densities are even), so terms are bucketed by parity
    signature first; within a bucket the pairwise merged moments are summed.
    """
    fc = _parity_classes(f)
    total = 0
    if f is g:
        for terms in fc.values():
            for i, (ka, ca) in enumerate(terms):
                da = dict(ka)
                for j in range(i, len(terms)):
                    kb, cb = terms[j]
                    term = ca * cb if j == i else 2 * ca * cb
                    d = dict(da)
                    for v, e in kb:
                        d[v] = d.get(v, 0) + e
                    for v, e in d.items():
                        mv = moment(measure.density(v), e)
                        if mv == 0:
                            term = 0
                            break
                        term = term * mv
                    total = total + term
        return total
    gc = _parity_classes(g)
    for sig, fterms in fc.items():
        gterms = gc.get(sig)
        if not gterms:
            continue
        for ka, ca in fterms:
            da = dict(ka)
            for kb, cb in gterms:
                term = ca * cb
                d = dict(da)
                for v, e in kb:
                    d[v] = d.get(v, 0) + e
                for v, e in d.items():
                    mv = moment(measure.density(v), e)
                    if mv == 0:
                        term = 0
                        break
                    term = term * mv
                total = total + term
    return total
