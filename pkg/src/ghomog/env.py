"""Random drift fields with unit range of dependence.

The random field is a sum of compactly supported bumps, one per site of the
lattice ``Z^d / refine``:

    V(x) = amplitude * sum_v [ curl part of a_v phi(x - v) + div_knob * b_v grad phi(x - v) ]

In two dimensions the curl part is ``grad_perp (a_v phi)``; in three it is
``curl (a_v phi)`` with a vector coefficient ``a_v``.  Coefficients are
i.i.d. uniform on ``[-1, 1]`` and are derived from ``(seed, site, component)``
by a counter-based hash, so the field can be evaluated anywhere without global
state.  Because the bump radius is below ``1/2``, restrictions of ``V`` to
sets at distance at least one are independent.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BumpProfile",
    "FieldNorms",
    "VectorField",
    "ConstantField",
    "LinearField",
    "LatticeEnvironment",
    "build_environment",
    "environment_from_params",
    "eval_field",
    "eval_jacobian",
    "eval_div",
    "field_norms",
    "small_div_knob",
    "SMALL_DIV_LEVEL",
]

# Certified divergence level treated as "small" by the growth experiments.
SMALL_DIV_LEVEL = 0.05


@dataclass(frozen=True)
class BumpProfile:
    """Radial polynomial bump ``c * (1 - |x|^2 / r^2)^m`` with ``m = 3 + smoothness``.

    The constant ``c`` normalizes the profile so that ``sup |grad phi| = 1``.
    With ``m >= 3`` the profile is C^2 and its Hessian is Lipschitz.
    """

    radius: float = 0.45
    smoothness: int = 0

    def __post_init__(self):
        if not (0.0 < self.radius <= 0.5):
            raise ValueError(f"bump radius must lie in (0, 1/2], got {self.radius}")
        if self.smoothness < 0 or int(self.smoothness) != self.smoothness:
            raise ValueError("smoothness must be a nonnegative integer")

    @property
    def power(self) -> int:
        return 3 + int(self.smoothness)

    @property
    def scale(self) -> float:
        m, r = self.power, self.radius
        u = 1.0 / math.sqrt(2 * m - 1)
        return 1.0 / ((2 * m / r) * u * (1 - u * u) ** (m - 1))

    # -- pointwise evaluation on displacement arrays of shape (..., d) --------

    def _w(self, disp):
        s = np.sum(disp * disp, axis=-1) / self.radius**2
        inside = s < 1.0
        return np.where(inside, 1.0 - s, 0.0), inside

    def value(self, disp):
        w, _ = self._w(np.asarray(disp, dtype=float))
        return self.scale * w**self.power

    def gradient(self, disp):
        disp = np.asarray(disp, dtype=float)
        w, _ = self._w(disp)
        m, r = self.power, self.radius
        coef = -2.0 * self.scale * m / r**2 * w ** (m - 1)
        return coef[..., None] * disp

    def hessian(self, disp):
        disp = np.asarray(disp, dtype=float)
        d = disp.shape[-1]
        w, _ = self._w(disp)
        m, r = self.power, self.radius
        c = self.scale
        outer = disp[..., :, None] * disp[..., None, :]
        a = 4.0 * c * m * (m - 1) / r**4 * w ** (m - 2)
        b = -2.0 * c * m / r**2 * w ** (m - 1)
        return a[..., None, None] * outer + b[..., None, None] * np.eye(d)

    def laplacian(self, disp):
        disp = np.asarray(disp, dtype=float)
        d = disp.shape[-1]
        w, _ = self._w(disp)
        m, r = self.power, self.radius
        c = self.scale
        rho2 = np.sum(disp * disp, axis=-1)
        return (4.0 * c * m * (m - 1) / r**4 * w ** (m - 2) * rho2
                - 2.0 * c * m * d / r**2 * w ** (m - 1))

    # -- certified sup norms --------------------------------------------------

    @property
    def sup_value(self) -> float:
        return self.scale

    @property
    def sup_gradient(self) -> float:
        return 1.0

    @property
    def sup_hessian(self) -> float:
        """Operator-norm bound of the Hessian, exact up to rounding.

        Eigenvalues are the tangential ``-k (1-w)^(m-1)`` and the radial
        ``k (1-w)^(m-2) ((2m-1) w - 1)`` with ``w = |x|^2/r^2`` and
        ``k = 2 c m / r^2``.
        """
        m = self.power
        k = 2.0 * self.scale * m / self.radius**2
        radial = np.polynomial.Polynomial([-1.0, 2 * m - 1]) * np.polynomial.Polynomial([1.0, -1.0]) ** (m - 2)
        return k * max(1.0, _poly_abs_max(radial))

    def sup_laplacian(self, dim: int) -> float:
        m = self.power
        k = 2.0 * self.scale * m / self.radius**2
        lap = np.polynomial.Polynomial([-dim, 2 * m - 2 + dim]) * np.polynomial.Polynomial([1.0, -1.0]) ** (m - 2)
        return k * _poly_abs_max(lap)


def _poly_abs_max(poly) -> float:
    """max |poly(w)| over w in [0, 1], via critical points."""
    pts = [0.0, 1.0]
    for root in poly.deriv().roots():
        if abs(root.imag) < 1e-12 and 0.0 <= root.real <= 1.0:
            pts.append(float(root.real))
    return float(max(abs(poly(w)) for w in pts))


@dataclass(frozen=True)
class FieldNorms:
    """Certified global bounds: sup |V|, max(1, Lip V) and sup |div V|."""

    sup_v: float
    lip_v: float
    sup_div: float


class VectorField:
    """Common interface of drift fields. Subclasses evaluate on ``(..., d)`` arrays."""

    dim: int

    def field(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def div(self, x):
        return np.trace(self.jacobian(x), axis1=-2, axis2=-1)

    def norms(self) -> FieldNorms:
        raise NotImplementedError

    def to_params(self) -> dict:
        raise NotImplementedError

    def sample(self, points):
        """Evaluate the field on an array of points, chunked to bound memory."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, self.dim)
        out = np.empty_like(flat)
        step = 1 << 16
        for i in range(0, len(flat), step):
            out[i:i + step] = self.field(flat[i:i + step])
        return out.reshape(points.shape)


class ConstantField(VectorField):
    """V(x) = c everywhere. ``ConstantField(np.zeros(d))`` is the zero field."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)
        self.dim = self.c.shape[0]

    def field(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.c, x.shape).copy()

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.dim,))

    def div(self, x):
        return np.zeros(np.asarray(x).shape[:-1])

    def norms(self):
        return FieldNorms(float(np.linalg.norm(self.c)), 1.0, 0.0)

    def to_params(self):
        return {"kind": "constant", "c": [float(v) for v in self.c]}

    def __repr__(self):
        return f"ConstantField({self.c.tolist()})"


class LinearField(VectorField):
    """V(x) = A x. Unbounded; used as a closed-form ODE oracle."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        self.dim = self.A.shape[0]

    def field(self, x):
        return np.asarray(x, dtype=float) @ self.A.T

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.A, x.shape[:-1] + self.A.shape).copy()

    def norms(self):
        return FieldNorms(math.inf, max(1.0, float(np.linalg.norm(self.A, 2))),
                          abs(float(np.trace(self.A))))

    def to_params(self):
        return {"kind": "linear", "A": self.A.tolist()}


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def site_uniform(seed: int, sites, component: int):
    """Uniform[-1, 1] variate attached to ``(seed, site, component)``.

    ``sites`` is an integer array of shape ``(..., d)``.
    """
    sites = np.atleast_1d(np.asarray(sites, dtype=np.int64))
    h = _splitmix64(np.full(sites.shape[:-1], np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64))
    for i in range(sites.shape[-1]):
        h = _splitmix64(h ^ sites[..., i].view(np.uint64))
    h = _splitmix64(h ^ np.uint64(component))
    u = (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return 2.0 * u - 1.0


@dataclass(frozen=True)
class LatticeEnvironment(VectorField):
    """Seeded bump field; see the module docstring for the construction."""

    seed: int
    dim: int = 2
    amplitude: float = 1.0
    div_knob: float = 0.0
    profile: BumpProfile = field(default_factory=BumpProfile)
    refine: int = 1

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.amplitude < 0 or self.div_knob < 0:
            raise ValueError("amplitude and div_knob must be nonnegative")
        if self.refine < 1 or int(self.refine) != self.refine:
            raise ValueError("refine must be a positive integer")

    @property
    def n_curl(self) -> int:
        return 1 if self.dim == 2 else 3

    @property
    def _offsets(self):
        reach = math.ceil(self.profile.radius * self.refine + 0.5) - 1
        rng = range(-reach, reach + 1)
        return np.array(list(itertools.product(rng, repeat=self.dim)), dtype=np.int64)

    def coefficients(self, sites):
        """Return ``(a, b)``: curl coefficients ``(..., n_curl)`` and gradient ones ``(...)``."""
        sites = np.asarray(sites, dtype=np.int64)
        a = np.stack([site_uniform(self.seed, sites, c) for c in range(self.n_curl)], axis=-1)
        b = site_uniform(self.seed, sites, self.n_curl)
        return a, b

    def _local_terms(self, x):
        x = np.asarray(x, dtype=float)
        base = np.rint(x * self.refine).astype(np.int64)
        for off in self._offsets:
            sites = base + off
            disp = x - sites / self.refine
            a, b = self.coefficients(sites)
            yield disp, a, b

    def field(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.amplitude == 0.0:
            return out
        for disp, a, b in self._local_terms(x):
            g = self.profile.gradient(disp)
            if self.dim == 2:
                out[..., 0] -= a[..., 0] * g[..., 1]
                out[..., 1] += a[..., 0] * g[..., 0]
            else:
                out += np.cross(g, a)
            if self.div_knob:
                out += self.div_knob * b[..., None] * g
        return self.amplitude * out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.dim,))
        if self.amplitude == 0.0:
            return out
        for disp, a, b in self._local_terms(x):
            H = self.profile.hessian(disp)
            if self.dim == 2:
                out[..., 0, :] -= a[..., 0, None] * H[..., 1, :]
                out[..., 1, :] += a[..., 0, None] * H[..., 0, :]
            else:
                for col in range(3):
                    out[..., :, col] += np.cross(H[..., :, col], a)
            if self.div_knob:
                out += self.div_knob * b[..., None, None] * H
        return self.amplitude * out

    def div(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        if self.amplitude == 0.0 or self.div_knob == 0.0:
            return out
        for disp, _, b in self._local_terms(x):
            out += b * self.profile.laplacian(disp)
        return self.amplitude * self.div_knob * out

    def stream_function(self, x):
        """psi with V = grad_perp psi for the curl part (d = 2 only)."""
        if self.dim != 2:
            raise ValueError("stream function is defined for d = 2")
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for disp, a, _ in self._local_terms(x):
            out += a[..., 0] * self.profile.value(disp)
        return self.amplitude * out

    @property
    def overlap_bound(self) -> int:
        """Upper bound on the number of bumps whose support contains a point."""
        per_axis = math.floor(2 * self.profile.radius * self.refine) + 1
        return per_axis**self.dim

    def norms(self) -> FieldNorms:
        k = self.overlap_bound * self.amplitude
        curl_gain = 1.0 if self.dim == 2 else math.sqrt(3.0)
        sup_v = k * (curl_gain + self.div_knob) * self.profile.sup_gradient
        lip = k * (curl_gain + self.div_knob) * self.profile.sup_hessian
        sup_div = k * self.div_knob * self.profile.sup_laplacian(self.dim)
        return FieldNorms(sup_v, max(1.0, lip), sup_div)

    def to_params(self) -> dict:
        return {
            "kind": "lattice",
            "seed": int(self.seed),
            "dim": int(self.dim),
            "amplitude": float(self.amplitude),
            "div_knob": float(self.div_knob),
            "radius": float(self.profile.radius),
            "smoothness": int(self.profile.smoothness),
            "refine": int(self.refine),
        }


def build_environment(seed, dim=2, amplitude=1.0, div_knob=0.0, profile=None, refine=1):
    """Construct a :class:`LatticeEnvironment`, validating the parameters."""
    if profile is None:
        profile = BumpProfile()
    return LatticeEnvironment(int(seed), int(dim), float(amplitude), float(div_knob), profile, int(refine))


def environment_from_params(params: dict) -> VectorField:
    kind = params.get("kind", "lattice")
    if kind == "constant":
        return ConstantField(params["c"])
    if kind == "linear":
        return LinearField(params["A"])
    if kind != "lattice":
        raise ValueError(f"unknown environment kind {kind!r}")
    profile = BumpProfile(params.get("radius", 0.45), params.get("smoothness", 0))
    return build_environment(params["seed"], params.get("dim", 2), params.get("amplitude", 1.0),
                             params.get("div_knob", 0.0), profile, params.get("refine", 1))


def small_div_knob(amplitude, dim=2, profile=None, refine=1, level=SMALL_DIV_LEVEL):
    """div_knob whose certified sup |div V| equals ``level``."""
    if amplitude == 0:
        return 0.0
    env = build_environment(0, dim, amplitude, 1.0, profile, refine)
    return level / env.norms().sup_div


def eval_field(env, x):
    return env.field(x)


def eval_jacobian(env, x):
    return env.jacobian(x)


def eval_div(env, x):
    return env.div(x)


def field_norms(env, region=None) -> FieldNorms:
    """Certified norms of ``env``. They hold globally; ``region`` is accepted for interface parity."""
    return env.norms()
