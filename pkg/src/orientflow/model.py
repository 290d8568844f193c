"""Model functions and parameters.

The free energy is built from

* ``G`` (bulk potential of the order field) with ``g = G'``,
* ``alpha`` (weight of the misorientation term) with ``alpha'``,
* ``f_eps(W) = sqrt(eps^2 + |W|^2)`` (regularized Frobenius norm of the
  M x N gradient matrix),
* ``Pi_delta(w) = (|w|^2 - 1)^2 / (4 delta)``, the sphere penalty.

Validation failures raise :class:`ParameterError` tagged with the
assumption they violate ("A0", "A2", ...).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

# alpha is only required to be Lipschitz on the reachable range of the order field
ETA_RANGE = (-1.0, 2.0)


class ParameterError(ValueError):
    def __init__(self, tag: str, message: str):
        super().__init__(f"[{tag}] {message}")
        self.tag = tag


def f_eps(W: np.ndarray, eps: float) -> np.ndarray:
    """``sqrt(eps^2 + |W|^2)`` over the trailing two axes."""
    W = np.asarray(W, dtype=float)
    return np.sqrt(eps * eps + np.sum(W * W, axis=(-2, -1)))


def grad_f_eps(W: np.ndarray, eps: float) -> np.ndarray:
    if eps <= 0:
        raise ParameterError("A4", "grad_f_eps needs eps > 0; use sgn_selection at eps = 0")
    W = np.asarray(W, dtype=float)
    return W / f_eps(W, eps)[..., None, None]


def sgn_selection(W: np.ndarray, zero_tol: float = 0.0) -> np.ndarray:
    """Minimal-norm element of the subdifferential of ``|W|``.

    ``W / |W|`` away from zero and ``0`` where ``|W| <= zero_tol``.
    """
    W = np.asarray(W, dtype=float)
    n = np.sqrt(np.sum(W * W, axis=(-2, -1)))
    safe = np.where(n > zero_tol, n, 1.0)
    scale = np.where(n > zero_tol, 1.0 / safe, 0.0)
    return W * scale[..., None, None]


def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise ParameterError("A5", f"delta must be positive, got {delta}")


def pi_delta(w: np.ndarray, delta: float) -> np.ndarray:
    _check_delta(delta)
    w = np.asarray(w, dtype=float)
    s = np.sum(w * w, axis=-1) - 1.0
    return s * s / (4.0 * delta)


def varpi_delta(w: np.ndarray, delta: float) -> np.ndarray:
    _check_delta(delta)
    w = np.asarray(w, dtype=float)
    s = np.sum(w * w, axis=-1, keepdims=True) - 1.0
    return s * w / delta


@dataclass(frozen=True)
class ModelFunctions:
    """The scalar model functions with the sup of ``|alpha'|``.

    ``alpha_prime_sup`` is taken over :data:`ETA_RANGE`; evaluating the
    functions outside that range is refused by :meth:`check_range`.
    """

    variant: str
    G: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    alpha: Callable[[np.ndarray], np.ndarray]
    alpha_prime: Callable[[np.ndarray], np.ndarray]
    alpha_prime_sup: float
    alpha_min: float
    alpha_max_unit: float  # max of alpha on [0, 1]
    g_lipschitz: float
    alpha_pp_max: float  # max of alpha'' on [0, 1]
    coefficients: tuple[float, float] = (0.1, 1.0)

    def check_range(self, eta: np.ndarray) -> None:
        lo, hi = ETA_RANGE
        eta = np.asarray(eta)
        if eta.size and (eta.min() < lo or eta.max() > hi):
            raise ParameterError(
                "A3", f"order field left [{lo}, {hi}] (min {eta.min():.3g}, max {eta.max():.3g})"
            )


def default_model_functions(variant: str = "quadratic", c0: float = 0.1, c1: float = 1.0) -> ModelFunctions:
    """``G(s) = (1 - s)^2 / 2`` with ``alpha(s) = c0 + c1 s^2`` or ``alpha = c0``."""
    if not c0 > 0:
        raise ParameterError("A3", f"inf alpha must be positive, got c0 = {c0}")
    if variant == "quadratic":
        if c1 < 0:
            raise ParameterError("A3", f"alpha'' >= 0 needs c1 >= 0, got {c1}")

        def alpha(s):
            return c0 + c1 * np.asarray(s, dtype=float) ** 2

        def alpha_prime(s):
            return 2.0 * c1 * np.asarray(s, dtype=float)

        sup = 2.0 * c1 * max(abs(ETA_RANGE[0]), abs(ETA_RANGE[1]))
        amax, app = c0 + c1, 2.0 * c1
    elif variant == "constant-alpha":
        c1 = 0.0

        def alpha(s):
            return np.full(np.shape(s), c0)

        def alpha_prime(s):
            return np.zeros(np.shape(s))

        sup, amax, app = 0.0, c0, 0.0
    else:
        raise ParameterError("A3", f"unknown model variant {variant!r}")

    funcs = ModelFunctions(
        variant=variant,
        G=lambda s: 0.5 * (1.0 - np.asarray(s, dtype=float)) ** 2,
        g=lambda s: np.asarray(s, dtype=float) - 1.0,
        alpha=alpha,
        alpha_prime=alpha_prime,
        alpha_prime_sup=sup,
        alpha_min=c0,
        alpha_max_unit=amax,
        g_lipschitz=1.0,
        alpha_pp_max=app,
        coefficients=(c0, c1),
    )
    validate_functions(funcs)
    return funcs


def validate_functions(funcs: ModelFunctions, samples: int = 1001, fd_step: float = 1e-5) -> None:
    """Sample the structural assumptions on ``ETA_RANGE``; raise on violation."""
    s = np.linspace(*ETA_RANGE, samples)
    G, g, a, ap = funcs.G(s), funcs.g(s), funcs.alpha(s), funcs.alpha_prime(s)
    if np.any(G < 0):
        raise ParameterError("A2", "G must be nonnegative")
    dG = (funcs.G(s + fd_step) - funcs.G(s - fd_step)) / (2 * fd_step)
    if np.max(np.abs(dG - g)) > 1e-6 * (1 + np.max(np.abs(g))):
        raise ParameterError("A2", "g is not the derivative of G")
    if funcs.g(np.array(0.0)) > 0 or funcs.g(np.array(1.0)) < 0:
        raise ParameterError("A2", "need g(0) <= 0 <= g(1)")
    if np.any(a <= 0) or a.min() < funcs.alpha_min - 1e-12:
        raise ParameterError("A3", "alpha must be bounded below by a positive constant")
    if abs(float(funcs.alpha_prime(np.array(0.0)))) > 1e-12:
        raise ParameterError("A3", "alpha'(0) must vanish")
    da = (funcs.alpha(s + fd_step) - funcs.alpha(s - fd_step)) / (2 * fd_step)
    if np.max(np.abs(da - ap)) > 1e-6 * (1 + np.max(np.abs(ap))):
        raise ParameterError("A3", "alpha_prime is not the derivative of alpha")
    app = np.diff(ap) / np.diff(s)
    if np.any(app < -1e-9):
        raise ParameterError("A3", "alpha must be convex")
    if np.max(np.abs(ap)) > funcs.alpha_prime_sup + 1e-12:
        raise ParameterError("A3", "alpha_prime_sup underestimates |alpha'|")


@dataclass(frozen=True)
class ModelParams:
    """Physical and regularization parameters.

    ``dimN`` is the space dimension; the nu-term grows like ``|grad u|^(dimN+1)``.
    ``delta = 0`` is only meaningful for the constrained (sphere-valued) flows.
    """

    kappa: float
    eps: float = 0.1
    nu: float = 0.0
    delta: float = 0.1
    M: int = 4
    dimN: int = 2
    T: float = 0.5
    funcs: ModelFunctions = field(default_factory=default_model_functions, compare=False)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError("A0", f"kappa must be positive, got {self.kappa}")
        if self.M < 2:
            raise ParameterError("A0", f"target dimension M must exceed 1, got {self.M}")
        if self.dimN not in (1, 2, 3):
            raise ParameterError("A1", f"space dimension must be 1, 2 or 3, got {self.dimN}")
        if self.T <= 0:
            raise ParameterError("A0", f"final time must be positive, got {self.T}")
        for name in ("eps", "nu", "delta"):
            if getattr(self, name) < 0:
                raise ParameterError("A4" if name == "eps" else "A5", f"{name} must be >= 0")

    @property
    def nu_exponent(self) -> int:
        return self.dimN + 1

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def r_zero(params: ModelParams, funcs: ModelFunctions | None = None) -> float:
    """Semi-monotonicity shift ``1 + 2 |alpha'|_inf^2 / kappa^2``."""
    funcs = funcs or params.funcs
    return 1.0 + 2.0 * funcs.alpha_prime_sup ** 2 / params.kappa ** 2
