"""Cylinder functions: local smooth functions of a tagged tuple and a
background configuration, assembled from smooth blocks (polynomials,
Gaussians, compactly supported bumps) that carry analytic gradients. The
analytic route is the oracle the finite-difference form evaluators are
checked against."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


class SmoothMap:
    """Smooth function R^d -> R with an analytic gradient."""

    d: int

    def value(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __mul__(self, other):
        if isinstance(other, SmoothMap):
            return SmoothProduct(self, other)
        return NotImplemented


class Polynomial(SmoothMap):
    """Multivariate polynomial sum_alpha c_alpha y^alpha."""

    def __init__(self, coeffs: dict, d: int):
        self.coeffs = {tuple(a): float(c) for a, c in coeffs.items()}
        self.d = d

    def value(self, y):
        y = np.asarray(y, dtype=float).reshape(self.d)
        return float(sum(c * np.prod(y**np.array(a)) for a, c in self.coeffs.items()))

    def gradient(self, y):
        y = np.asarray(y, dtype=float).reshape(self.d)
        grad = np.zeros(self.d)
        for alpha, c in self.coeffs.items():
            for j, p in enumerate(alpha):
                if p == 0:
                    continue
                mono = c * p
                for i, q in enumerate(alpha):
                    power = q - 1 if i == j else q
                    mono *= y[i] ** power
                grad[j] += mono
        return grad


class Gaussian(SmoothMap):
    """amplitude * exp(-|y - center|^2 / (2 width^2))."""

    def __init__(self, amplitude: float, center, width: float):
        self.amplitude = float(amplitude)
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.width = float(width)
        self.d = self.center.size

    def value(self, y):
        diff = np.asarray(y, dtype=float).reshape(self.d) - self.center
        return self.amplitude * math.exp(-float(diff @ diff) / (2.0 * self.width**2))

    def gradient(self, y):
        diff = np.asarray(y, dtype=float).reshape(self.d) - self.center
        return self.value(y) * (-diff / self.width**2)


class Bump(SmoothMap):
    """C-infinity bump amplitude * exp(1 - 1/(1 - |y|^2/R^2)) on |y| < R, 0 outside."""

    def __init__(self, radius: float, d: int, amplitude: float = 1.0):
        self.radius = float(radius)
        self.d = d
        self.amplitude = float(amplitude)

    def value(self, y):
        y = np.asarray(y, dtype=float).reshape(self.d)
        u = float(y @ y) / self.radius**2
        if u >= 1.0:
            return 0.0
        return self.amplitude * math.exp(1.0 - 1.0 / (1.0 - u))

    def gradient(self, y):
        y = np.asarray(y, dtype=float).reshape(self.d)
        u = float(y @ y) / self.radius**2
        if u >= 1.0:
            return np.zeros(self.d)
        v = self.value(y)
        # d/dy exp(-1/(1-u)) -> -(1/(1-u)^2) * du/dy
        return v * (-1.0 / (1.0 - u) ** 2) * (2.0 * y / self.radius**2)


class SmoothProduct(SmoothMap):
    def __init__(self, a: SmoothMap, b: SmoothMap):
        if a.d != b.d:
            raise ValueError("smooth factors must share a dimension")
        self.a, self.b = a, b
        self.d = a.d

    def value(self, y):
        return self.a.value(y) * self.b.value(y)

    def gradient(self, y):
        return self.a.value(y) * self.b.gradient(y) + self.b.value(y) * self.a.gradient(y)


class CylinderFunction:
    """Base class; value(x, pts) with x (k, d) tagged and pts (m, d) background.

    Subclasses built from smooth blocks also provide analytic grad_tagged /
    grad_points; the finite-difference machinery in `forms` never uses them.
    """

    k: int = 0
    d: int = 1
    window: float | None = None

    def value(self, x: np.ndarray, pts: np.ndarray) -> float:
        raise NotImplementedError

    def grad_tagged(self, x, pts) -> np.ndarray:
        raise NotImplementedError

    def grad_points(self, x, pts) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_analytic_gradients(self) -> bool:
        cls = type(self)
        return (
            cls.grad_tagged is not CylinderFunction.grad_tagged
            and cls.grad_points is not CylinderFunction.grad_points
        )

    def __add__(self, other):
        return CylSum(self, other)

    def __mul__(self, other):
        if isinstance(other, CylinderFunction):
            return CylProduct(self, other)
        if isinstance(other, (int, float)):
            return CylScale(self, float(other))
        return NotImplemented

    __rmul__ = __mul__


class Constant(CylinderFunction):
    def __init__(self, c: float, d: int = 1, k: int = 0):
        self.c = float(c)
        self.d = d
        self.k = k

    def value(self, x, pts):
        return self.c

    def grad_tagged(self, x, pts):
        return np.zeros_like(np.atleast_2d(x)) if np.size(x) else np.zeros((0, self.d))

    def grad_points(self, x, pts):
        return np.zeros_like(pts)


class LinearStatistic(CylinderFunction):
    """f(s) = sum_i phi(s_i), the basic local observable."""

    k = 0

    def __init__(self, phi: SmoothMap, window: float | None = None):
        self.phi = phi
        self.d = phi.d
        self.window = window

    def value(self, x, pts):
        return math.fsum(self.phi.value(p) for p in np.atleast_2d(pts))

    def grad_tagged(self, x, pts):
        x = np.atleast_2d(x) if np.size(x) else np.zeros((0, self.d))
        return np.zeros_like(x)

    def grad_points(self, x, pts):
        pts = np.atleast_2d(pts)
        return np.array([self.phi.gradient(p) for p in pts]).reshape(pts.shape)


class PairStatistic(CylinderFunction):
    """f(s) = 1/2 sum_{i != j} phi(s_i - s_j); translation invariant."""

    k = 0

    def __init__(self, phi: SmoothMap):
        self.phi = phi
        self.d = phi.d

    def value(self, x, pts):
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        return 0.5 * math.fsum(
            self.phi.value(pts[i] - pts[j]) for i in range(n) for j in range(n) if i != j
        )

    def grad_tagged(self, x, pts):
        x = np.atleast_2d(x) if np.size(x) else np.zeros((0, self.d))
        return np.zeros_like(x)

    def grad_points(self, x, pts):
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        grad = np.zeros_like(pts)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                grad[i] += 0.5 * (
                    self.phi.gradient(pts[i] - pts[j]) - self.phi.gradient(pts[j] - pts[i])
                )
        return grad


class TaggedFunction(CylinderFunction):
    """f(x, s) = psi(x_1, ..., x_k) flattened; independent of the background."""

    def __init__(self, psi: SmoothMap, k: int, d: int):
        if psi.d != k * d:
            raise ValueError("psi must act on the flattened tagged tuple")
        self.psi = psi
        self.k = k
        self.d = d

    def value(self, x, pts):
        return self.psi.value(np.asarray(x, dtype=float).reshape(self.k * self.d))

    def grad_tagged(self, x, pts):
        flat = np.asarray(x, dtype=float).reshape(self.k * self.d)
        return self.psi.gradient(flat).reshape(self.k, self.d)

    def grad_points(self, x, pts):
        return np.zeros_like(np.atleast_2d(pts))


class CylSum(CylinderFunction):
    def __init__(self, a: CylinderFunction, b: CylinderFunction):
        self.a, self.b = a, b
        self.k = max(a.k, b.k)
        self.d = a.d

    def value(self, x, pts):
        return self.a.value(x, pts) + self.b.value(x, pts)

    def grad_tagged(self, x, pts):
        return self.a.grad_tagged(x, pts) + self.b.grad_tagged(x, pts)

    def grad_points(self, x, pts):
        return self.a.grad_points(x, pts) + self.b.grad_points(x, pts)


class CylScale(CylinderFunction):
    def __init__(self, a: CylinderFunction, c: float):
        self.a, self.c = a, c
        self.k, self.d = a.k, a.d

    def value(self, x, pts):
        return self.c * self.a.value(x, pts)

    def grad_tagged(self, x, pts):
        return self.c * self.a.grad_tagged(x, pts)

    def grad_points(self, x, pts):
        return self.c * self.a.grad_points(x, pts)


class CylProduct(CylinderFunction):
    def __init__(self, a: CylinderFunction, b: CylinderFunction):
        self.a, self.b = a, b
        self.k = max(a.k, b.k)
        self.d = a.d

    def value(self, x, pts):
        return self.a.value(x, pts) * self.b.value(x, pts)

    def grad_tagged(self, x, pts):
        return self.a.value(x, pts) * self.b.grad_tagged(x, pts) + self.b.value(
            x, pts
        ) * self.a.grad_tagged(x, pts)

    def grad_points(self, x, pts):
        return self.a.value(x, pts) * self.b.grad_points(x, pts) + self.b.value(
            x, pts
        ) * self.a.grad_points(x, pts)


class CylCompose(CylinderFunction):
    """outer(f(x, s)) for a smooth scalar map given as (P, P')."""

    def __init__(self, inner: CylinderFunction, outer: Callable, outer_prime: Callable):
        self.inner = inner
        self.outer = outer
        self.outer_prime = outer_prime
        self.k, self.d = inner.k, inner.d

    def value(self, x, pts):
        return float(self.outer(self.inner.value(x, pts)))

    def grad_tagged(self, x, pts):
        return self.outer_prime(self.inner.value(x, pts)) * self.inner.grad_tagged(x, pts)

    def grad_points(self, x, pts):
        return self.outer_prime(self.inner.value(x, pts)) * self.inner.grad_points(x, pts)


class Evaluator(CylinderFunction):
    """Black-box cylinder function from a bare evaluator (no analytic route)."""

    def __init__(self, fn: Callable, k: int, d: int, window: float | None = None):
        self.fn = fn
        self.k = k
        self.d = d
        self.window = window

    def value(self, x, pts):
        return float(self.fn(x, pts))


def tensor_product(phi: SmoothMap, f: CylinderFunction) -> CylinderFunction:
    """(phi tensor f)(x, s) = phi(x) f(s) for a 1-tagged slot."""
    if f.k != 0:
        raise ValueError("tensor_product expects an unlabeled cylinder function")
    psi = TaggedFunction(phi, k=1, d=phi.d)
    return CylProduct(psi, f)


def random_smooth(rng, d: int, kind: str | None = None) -> SmoothMap:
    kind = kind or rng.choice(["poly", "gauss"])
    if kind == "poly":
        coeffs = {}
        for _ in range(rng.integers(2, 4)):
            alpha = tuple(int(a) for a in rng.integers(0, 3, size=d))
            coeffs[alpha] = float(rng.normal(scale=0.5))
        return Polynomial(coeffs, d)
    return Gaussian(float(rng.normal(scale=1.0)), rng.normal(scale=0.8, size=d),
                    float(rng.uniform(0.6, 1.5)))


def random_cylinder(rng, k: int, d: int) -> CylinderFunction:
    """Random smooth cylinder function with analytic gradients, O(1) scale."""
    f: CylinderFunction = LinearStatistic(random_smooth(rng, d))
    if rng.uniform() < 0.5:
        f = f + LinearStatistic(random_smooth(rng, d))
    if rng.uniform() < 0.4:
        u = float(rng.uniform(0.5, 1.5))
        f = CylCompose(f, lambda t, u=u: math.sin(u * t), lambda t, u=u: u * math.cos(u * t))
    if k >= 1:
        psi = random_smooth(rng, k * d)
        tagged = TaggedFunction(psi, k, d)
        f = tagged + f if rng.uniform() < 0.5 else CylProduct(tagged, f) + tagged
    return f
