"""Convex positively homogeneous operators as sup (or inf) of linear controls.

An operator acts on tuples ``(M, p, u, x)`` of Hessian, gradient, value and
point. Every coefficient is a vectorized callable taking an ``(n, d)`` array
of points, so the same objects serve pointwise evaluation here and grid
assembly in :mod:`halfeig.grid`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError

Coefficient = Callable[[np.ndarray], np.ndarray]

SYMMETRY_TOL = 1e-12


# --------------------------------------------------------------------------
# coefficient helpers


def _points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.shape[1] != dim:
        raise ConfigurationError(f"points have dimension {x.shape[1]}, expected {dim}")
    return x


def constant(value) -> Coefficient:
    """Coefficient returning ``value`` at every point (scalar, vector or matrix)."""
    value = np.asarray(value, dtype=float)

    def coeff(x):
        n = np.asarray(x).shape[0]
        return np.broadcast_to(value, (n,) + value.shape).copy()

    coeff.description = {"kind": "constant", "value": value.tolist()}
    return coeff


def ou_drift(rate: float = 1.0) -> Coefficient:
    """Ornstein-Uhlenbeck drift ``b(x) = -rate * x``."""

    def coeff(x):
        return -rate * np.asarray(x, dtype=float)

    coeff.description = {"kind": "ou", "rate": rate}
    return coeff


def decaying_potential(amplitude: float, offset: float = 0.0, power: float = 1.0) -> Coefficient:
    """``c(x) = offset + amplitude / (1 + |x|^2)^power``."""

    def coeff(x):
        r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=1)
        return offset + amplitude / (1.0 + r2) ** power

    coeff.description = {"kind": "decay", "amplitude": amplitude, "offset": offset, "power": power}
    return coeff


class TabulatedCoefficient:
    """Grid-sampled coefficient table evaluated by nearest-node lookup."""

    def __init__(self, points, values):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.points.shape[0] == 1 and np.asarray(points).ndim == 1:
            self.points = self.points.T
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[0] != self.points.shape[0]:
            raise ConfigurationError("table values and points differ in length")
        self._tree = cKDTree(self.points)
        self.description = {"kind": "table", "size": int(self.points.shape[0])}

    def __call__(self, x):
        _, idx = self._tree.query(np.asarray(x, dtype=float))
        return self.values[idx]


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class LinearControl:
    """One linear operator ``trace(a D^2 u) + b . Du + c u``.

    ``a`` returns ``(n, d, d)`` (or ``(n,)`` in 1D), ``b`` returns ``(n, d)``
    (or ``(n,)`` in 1D), ``c`` returns ``(n,)``.
    """

    a: Coefficient
    b: Coefficient
    c: Coefficient

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        n, d = x.shape
        return np.asarray(self.a(x), dtype=float).reshape(n, d, d)

    def drift(self, x: np.ndarray) -> np.ndarray:
        n, d = x.shape
        return np.asarray(self.b(x), dtype=float).reshape(n, d)

    def potential(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.c(x), dtype=float).reshape(x.shape[0])


@dataclass(frozen=True, eq=False)
class EllipticityData:
    """Pointwise ellipticity bounds and the drift/potential weights of the sandwich condition."""

    lambda_lo: Coefficient
    Lambda_hi: Coefficient
    gamma: Coefficient
    delta: Coefficient

    def check(self, x: np.ndarray) -> None:
        lo = np.asarray(self.lambda_lo(x), dtype=float)
        hi = np.asarray(self.Lambda_hi(x), dtype=float)
        if np.any(lo <= 0) or np.any(hi < lo):
            raise ConfigurationError("ellipticity requires 0 < lambda_lo <= Lambda_hi")
        if np.any(np.asarray(self.gamma(x)) < 0) or np.any(np.asarray(self.delta(x)) < 0):
            raise ConfigurationError("gamma and delta must be nonnegative")


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """``F = sup_alpha (L_alpha + c_alpha)`` (``mode='sup'``) or its inf."""

    mode: str
    controls: tuple
    ellipticity: EllipticityData
    dimension: int
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("sup", "inf"):
            raise ConfigurationError(f"mode must be 'sup' or 'inf', got {self.mode!r}")
        if len(self.controls) == 0:
            raise ConfigurationError("operator needs at least one control")
        if self.dimension not in (1, 2):
            raise ConfigurationError("only dimensions 1 and 2 are supported")
        object.__setattr__(self, "controls", tuple(self.controls))

    @property
    def n_controls(self) -> int:
        return len(self.controls)


# --------------------------------------------------------------------------
# evaluation


def best_over_controls(values: np.ndarray, mode: str, tie_tol: float = 0.0):
    """Reduce ``(m, n)`` control values to the sup/inf per column.

    Returns ``(best_values, index)``; among entries within ``tie_tol`` of the
    optimum the smallest control index wins.
    """
    values = np.asarray(values)
    best = values.max(axis=0) if mode == "sup" else values.min(axis=0)
    if tie_tol == 0.0:
        idx = values.argmax(axis=0) if mode == "sup" else values.argmin(axis=0)
    else:
        slack = tie_tol * (1.0 + np.abs(best))
        near = values >= best - slack if mode == "sup" else values <= best + slack
        idx = near.argmax(axis=0)
    return best, idx


def control_values(spec: OperatorSpec, M, p, u, x) -> np.ndarray:
    """Values of every linear control on a batch: shape ``(m, n)``."""
    d = spec.dimension
    x = _points(x, d)
    n = x.shape[0]
    M = np.asarray(M, dtype=float).reshape(n, d, d)
    p = np.asarray(p, dtype=float).reshape(n, d)
    u = np.asarray(u, dtype=float).reshape(n)
    out = np.empty((spec.n_controls, n))
    for k, ctrl in enumerate(spec.controls):
        a = ctrl.diffusion(x)
        out[k] = (
            np.einsum("nij,nji->n", a, M)
            + np.einsum("ni,ni->n", ctrl.drift(x), p)
            + ctrl.potential(x) * u
        )
    return out


def evaluate_many(spec: OperatorSpec, M, p, u, x) -> np.ndarray:
    """Vectorized :func:`evaluate` over a batch of ``n`` tuples."""
    best, _ = best_over_controls(control_values(spec, M, p, u, x), spec.mode)
    return best


def evaluate(spec: OperatorSpec, M, p, u, x) -> float:
    """``F(M, p, u, x)`` for a single tuple."""
    d = spec.dimension
    M = np.asarray(M, dtype=float)
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    if M.size != d * d or p.size != d or x.size != d:
        raise ConfigurationError(f"tuple dimensions do not match operator dimension {d}")
    return float(evaluate_many(spec, M.reshape(1, d, d), p.reshape(1, d), [float(u)], x.reshape(1, d))[0])


def _symmetric_eigs(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > SYMMETRY_TOL * scale:
        raise ValueError("Pucci operators are defined on symmetric matrices only")
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def pucci_plus(lo: float, hi: float, M) -> float:
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    e = _symmetric_eigs(M)
    return float(hi * e[e > 0].sum() + lo * e[e < 0].sum())


def pucci_minus(lo: float, hi: float, M) -> float:
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    e = _symmetric_eigs(M)
    return float(lo * e[e > 0].sum() + hi * e[e < 0].sum())


def reflect(spec: OperatorSpec) -> OperatorSpec:
    """The operator ``G(M, p, u, x) = -F(-M, -p, -u, x)``: same controls, mode flipped."""
    mode = "inf" if spec.mode == "sup" else "sup"
    return replace(spec, mode=mode, name=f"reflect({spec.name})")


def zero_order_coeffs(spec: OperatorSpec, x) -> tuple[float, float]:
    """``(F(0,0,1,x), F(0,0,-1,x))``."""
    d = spec.dimension
    zM, zp = np.zeros((d, d)), np.zeros(d)
    return evaluate(spec, zM, zp, 1.0, x), evaluate(spec, zM, zp, -1.0, x)


def zero_order_fields(spec: OperatorSpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``c(x), d(x)`` over an array of points."""
    points = _points(points, spec.dimension)
    vals = np.stack([ctrl.potential(points) for ctrl in spec.controls])
    if spec.mode == "sup":
        return vals.max(axis=0), (-vals).max(axis=0)
    return vals.min(axis=0), (-vals).min(axis=0)


# --------------------------------------------------------------------------
# hypothesis checks


@dataclass
class HypothesisReport:
    n_samples: int
    homogeneity: float
    convexity: float
    sandwich: float
    ellipticity: float
    control_bounds: float
    curvature: str
    continuity: str = "not tested"

    def violations(self) -> dict:
        return {
            "homogeneity": self.homogeneity,
            "convexity": self.convexity,
            "sandwich": self.sandwich,
            "ellipticity": self.ellipticity,
            "control_bounds": self.control_bounds,
        }

    def passed(self, tol: float = 1e-9) -> bool:
        return all(v <= tol for v in self.violations().values())


def random_samples(spec: OperatorSpec, n: int, rng=None, scale: float = 3.0):
    """Random ``(M, p, u, x)`` tuples with ``|x| <= scale``."""
    rng = np.random.default_rng(rng)
    d = spec.dimension
    out = []
    for _ in range(n):
        B = rng.normal(size=(d, d))
        M = B + B.T
        p = rng.normal(size=d)
        u = float(rng.normal())
        x = rng.uniform(-scale, scale, size=d) / np.sqrt(d)
        out.append((M, p, u, x))
    return out


def check_hypotheses(spec: OperatorSpec, samples: Sequence) -> HypothesisReport:
    """Worst relative violations of homogeneity, convexity, the Pucci sandwich
    and the control-set data.

    Convexity is tested in the curvature the mode implies: convex for ``sup``,
    concave for ``inf`` (the reflection of a convex operator). Consecutive
    samples are paired at the first sample's point for the two-tuple tests.
    """
    if len(samples) == 0:
        raise ValueError("samples must be nonempty")
    d = spec.dimension
    Ms = np.array([np.asarray(s[0], dtype=float).reshape(d, d) for s in samples])
    ps = np.array([np.asarray(s[1], dtype=float).reshape(d) for s in samples])
    us = np.array([float(s[2]) for s in samples])
    xs = np.array([np.asarray(s[3], dtype=float).reshape(d) for s in samples])
    n = len(samples)

    base = evaluate_many(spec, Ms, ps, us, xs)
    hom = 0.0
    for t in (0.5, 2.0, 10.0):
        scaled = evaluate_many(spec, t * Ms, t * ps, t * us, xs)
        hom = max(hom, float(np.max(np.abs(scaled - t * base) / (t * (1.0 + np.abs(base))))))
    zero = evaluate_many(spec, np.zeros_like(Ms), np.zeros_like(ps), np.zeros(n), xs)
    hom = max(hom, float(np.abs(zero).max()))

    # pair sample k with k+1, both evaluated at x_k
    Mb, pb, ub = np.roll(Ms, -1, axis=0), np.roll(ps, -1, axis=0), np.roll(us, -1)
    other = evaluate_many(spec, Mb, pb, ub, xs)
    mid = evaluate_many(spec, 0.5 * (Ms + Mb), 0.5 * (ps + pb), 0.5 * (us + ub), xs)
    avg = 0.5 * (base + other)
    gap = mid - avg if spec.mode == "sup" else avg - mid
    convex = float(max(0.0, np.max(gap / (1.0 + np.abs(avg)))))

    ell = spec.ellipticity
    lo = np.asarray(ell.lambda_lo(xs), dtype=float).reshape(n)
    hi = np.asarray(ell.Lambda_hi(xs), dtype=float).reshape(n)
    gam = np.asarray(ell.gamma(xs), dtype=float).reshape(n)
    dlt = np.asarray(ell.delta(xs), dtype=float).reshape(n)
    diff = base - other
    sandwich = 0.0
    for k in range(n):
        D = Ms[k] - Mb[k]
        dp = float(np.linalg.norm(ps[k] - pb[k]))
        du = abs(us[k] - ub[k])
        upper = pucci_plus(lo[k], hi[k], D) + gam[k] * dp + dlt[k] * du
        lower = pucci_minus(lo[k], hi[k], D) - gam[k] * dp - dlt[k] * du
        scale = 1.0 + abs(upper) + abs(lower)
        sandwich = max(sandwich, (diff[k] - upper) / scale, (lower - diff[k]) / scale)

    ellip = 0.0
    bounds = 0.0
    c_ref = spec.controls[0].potential(xs)
    for ctrl in spec.controls:
        A = ctrl.diffusion(xs)
        if np.abs(A - np.transpose(A, (0, 2, 1))).max() > SYMMETRY_TOL * (1 + np.abs(A).max()):
            ellip = max(ellip, 1.0)
        eig = np.linalg.eigvalsh(A)
        ellip = max(ellip, float(np.max((lo - eig[:, 0]) / (1 + lo))), float(np.max((eig[:, -1] - hi) / (1 + hi))))
        bn = np.linalg.norm(ctrl.drift(xs), axis=1)
        bounds = max(bounds, float(np.max((bn - gam) / (1 + gam))))
        cv = ctrl.potential(xs)
        bounds = max(bounds, float(np.max((np.abs(cv) - np.abs(c_ref) - dlt) / (1 + dlt))))

    return HypothesisReport(
        n_samples=n,
        homogeneity=hom,
        convexity=convex,
        sandwich=float(max(0.0, sandwich)),
        ellipticity=float(max(0.0, ellip)),
        control_bounds=float(max(0.0, bounds)),
        curvature="convex" if spec.mode == "sup" else "concave",
    )


# --------------------------------------------------------------------------
# presets


def _coefficient_from_record(record, dim: int, role: str) -> Coefficient:
    """Build a drift or potential coefficient from a small parameter record."""
    if record is None:
        return constant(np.zeros(dim) if role == "drift" else 0.0)
    if callable(record):
        return record
    if isinstance(record, (int, float)):
        return constant(np.full(dim, float(record)) if role == "drift" else float(record))
    if not isinstance(record, dict) or "kind" not in record:
        raise ConfigurationError(f"{role} record must be a number or a mapping with 'kind'")
    kind = record["kind"]
    allowed = {
        "constant": {"kind", "value"},
        "zero": {"kind"},
        "ou": {"kind", "rate"},
        "decay": {"kind", "amplitude", "offset", "power"},
    }
    if kind not in allowed:
        raise ConfigurationError(f"unknown {role} kind {kind!r}")
    extra = set(record) - allowed[kind]
    if extra:
        raise ConfigurationError(f"unknown keys for {role} kind {kind!r}: {sorted(extra)}")
    if kind == "zero":
        return _coefficient_from_record(None, dim, role)
    if kind == "constant":
        value = record.get("value", 0.0)
        if role == "drift":
            value = np.broadcast_to(np.asarray(value, dtype=float), (dim,))
        return constant(value)
    if kind == "ou":
        if role != "drift":
            raise ConfigurationError("'ou' is a drift kind")
        return ou_drift(float(record.get("rate", 1.0)))
    if role != "potential":
        raise ConfigurationError("'decay' is a potential kind")
    return decaying_potential(
        float(record.get("amplitude", 1.0)), float(record.get("offset", 0.0)), float(record.get("power", 1.0))
    )


def _derived_ellipticity(controls, lo: float, hi: float) -> EllipticityData:
    def gamma(x):
        return np.max([np.linalg.norm(c.drift(x), axis=1) for c in controls], axis=0)

    def delta(x):
        return np.max([np.abs(c.potential(x)) for c in controls], axis=0)

    return EllipticityData(constant(lo), constant(hi), gamma, delta)


def linear(dimension: int = 1, diffusion=1.0, drift=None, potential=None) -> OperatorSpec:
    """Single-control linear operator; ``diffusion`` is a scalar multiple of I or a matrix."""
    d = dimension
    a = np.asarray(diffusion, dtype=float)
    A = a * np.eye(d) if a.ndim == 0 else a.reshape(d, d)
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 0:
        raise ConfigurationError("diffusion must be positive definite")
    ctrl = LinearControl(constant(A), _coefficient_from_record(drift, d, "drift"),
                         _coefficient_from_record(potential, d, "potential"))
    params = {"dimension": d, "diffusion": A.tolist() if a.ndim else float(a), "drift": drift, "potential": potential}
    return OperatorSpec("sup", (ctrl,), _derived_ellipticity((ctrl,), eig[0], eig[-1]), d, "linear", params)


def pucci_frames(lo: float, hi: float, dimension: int) -> list[np.ndarray]:
    """Extremal diffusion matrices enumerated for the Pucci presets.

    1D: ``{lo, hi}``. 2D: ``R diag(d1, d2) R^T`` with ``d_i in {lo, hi}`` and
    rotation angle 0 or 45 degrees, duplicates removed.
    """
    if dimension == 1:
        return [np.array([[lo]]), np.array([[hi]])] if hi > lo else [np.array([[lo]])]
    frames = []
    for theta in (0.0, np.pi / 4):
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        for d1 in (lo, hi):
            for d2 in (lo, hi):
                A = R @ np.diag([d1, d2]) @ R.T
                A = np.where(np.abs(A) < 1e-15, 0.0, A)
                if not any(np.allclose(A, B, atol=1e-14) for B in frames):
                    frames.append(A)
    return frames


def pucci_plus_operator(dimension: int = 1, lo: float = 1.0, hi: float = 1.0, potential=None) -> OperatorSpec:
    """``M^+(D^2 u) + c(x) u`` realized over the extremal frames."""
    if not 0 < lo <= hi:
        raise ConfigurationError("pucci presets need 0 < lo <= hi")
    c = _coefficient_from_record(potential, dimension, "potential")
    zero_b = constant(np.zeros(dimension))
    controls = tuple(LinearControl(constant(A), zero_b, c) for A in pucci_frames(lo, hi, dimension))
    params = {"dimension": dimension, "lo": lo, "hi": hi, "potential": potential}
    return OperatorSpec("sup", controls, _derived_ellipticity(controls, lo, hi), dimension, "pucci_plus", params)


def pucci_minus_operator(dimension: int = 1, lo: float = 1.0, hi: float = 1.0, potential=None) -> OperatorSpec:
    spec = reflect(pucci_plus_operator(dimension, lo, hi, potential))
    return replace(spec, name="pucci_minus")


def bellman2(dimension: int = 1, controls=None) -> OperatorSpec:
    """``Delta u + max_{alpha=1,2} {b_alpha . Du + c_alpha u}``.

    Default pair: an OU drift without potential (principal eigenvalue 0 on the
    whole space) and pure diffusion with constant killing ``c = -1/2``.
    """
    if controls is None:
        controls = [
            {"drift": {"kind": "ou", "rate": 1.0}, "potential": None},
            {"drift": None, "potential": {"kind": "constant", "value": -0.5}},
        ]
    if len(controls) != 2:
        raise ConfigurationError("bellman2 takes exactly two controls")
    eye = constant(np.eye(dimension))
    built = []
    for rec in controls:
        extra = set(rec) - {"drift", "potential"}
        if extra:
            raise ConfigurationError(f"unknown bellman2 control keys: {sorted(extra)}")
        built.append(LinearControl(eye, _coefficient_from_record(rec.get("drift"), dimension, "drift"),
                                   _coefficient_from_record(rec.get("potential"), dimension, "potential")))
    built = tuple(built)
    params = {"dimension": dimension, "controls": controls}
    return OperatorSpec("sup", built, _derived_ellipticity(built, 1.0, 1.0), dimension, "bellman2", params)


PRESETS = {
    "linear": linear,
    "pucci_plus": pucci_plus_operator,
    "pucci_minus": pucci_minus_operator,
    "bellman2": bellman2,
}


def make_preset(preset_id: str, **params) -> OperatorSpec:
    """Build a shipped operator from its string id and parameter record."""
    try:
        factory = PRESETS[preset_id]
    except KeyError:
        raise ConfigurationError(f"unknown operator preset {preset_id!r}; choose from {sorted(PRESETS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for preset {preset_id!r}: {exc}") from None


def frozen_controls(spec: OperatorSpec) -> list[OperatorSpec]:
    """Each control of ``spec`` as its own linear operator."""
    out = []
    for k, ctrl in enumerate(spec.controls):
        out.append(OperatorSpec("sup", (ctrl,), spec.ellipticity, spec.dimension, f"{spec.name}[{k}]"))
    return out
