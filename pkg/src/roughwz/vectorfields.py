"""Vector-field models for driven systems dy = sigma(y) dw + b(y) dt.

A model carries batched evaluators for sigma, b and their y-derivatives
up to a declared order; everything downstream (solver, variational
equations, Malliavin machinery) consumes only this interface.  Presets
are registered by name so studies and the CLI can reference them from
plain config files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .rngs import stream

__all__ = [
    "VectorFieldModel",
    "model_preset",
    "check_model_derivatives",
    "MODEL_PRESETS",
]


@dataclass
class VectorFieldModel:
    """Batched model of the coefficients of a driven system.

    ``sigma_derivative(y, l)`` maps (B, e) states to the l-th derivative
    tensor of sigma, shape (B, e, d) + (e,)*l, with the derivative axes
    trailing; ``drift_derivative`` likewise without the driver axis.
    ``affine`` holds (sigma_const, A, c) when sigma is constant and
    b(y) = A y + c, which unlocks closed-form Gaussian references.
    """

    name: str
    state_dim: int
    driver_dim: int
    max_derivative_order: int
    sigma_derivative: Callable[[np.ndarray, int], np.ndarray]
    drift_derivative: Callable[[np.ndarray, int], np.ndarray]
    params: dict = field(default_factory=dict)
    affine: tuple | None = None

    def __post_init__(self):
        if self.state_dim < 1 or self.driver_dim < 1:
            raise ConfigurationError("state_dim and driver_dim must be positive")
        if self.max_derivative_order < 1:
            raise ConfigurationError("models must declare at least one derivative order")

    def sigma(self, y: np.ndarray) -> np.ndarray:
        return self.sigma_derivative(y, 0)

    def drift(self, y: np.ndarray) -> np.ndarray:
        return self.drift_derivative(y, 0)

    def require_order(self, order: int) -> None:
        if order > self.max_derivative_order:
            raise ConfigurationError(
                f"model {self.name!r} declares derivatives up to order "
                f"{self.max_derivative_order}, needed {order}"
            )


def _constant_model(name: str, sigma_const: np.ndarray, a_mat: np.ndarray,
                    c_vec: np.ndarray, params: dict) -> VectorFieldModel:
    e, d = sigma_const.shape

    def sigma_derivative(y, order):
        b = y.shape[0]
        if order == 0:
            return np.broadcast_to(sigma_const, (b, e, d)).copy()
        return np.zeros((b, e, d) + (e,) * order)

    def drift_derivative(y, order):
        b = y.shape[0]
        if order == 0:
            return y @ a_mat.T + c_vec
        if order == 1:
            return np.broadcast_to(a_mat, (b, e, e)).copy()
        return np.zeros((b, e) + (e,) * order)

    return VectorFieldModel(name, e, d, max_derivative_order=6,
                            sigma_derivative=sigma_derivative,
                            drift_derivative=drift_derivative,
                            params=params,
                            affine=(sigma_const.copy(), a_mat.copy(), c_vec.copy()))


def _identity(state_dim: int = 1, driver_dim: int | None = None) -> VectorFieldModel:
    e = int(state_dim)
    d = e if driver_dim is None else int(driver_dim)
    return _constant_model("identity", np.eye(e, d), np.zeros((e, e)), np.zeros(e),
                           {"state_dim": e, "driver_dim": d})


def _scaled_identity(state_dim: int = 1, driver_dim: int | None = None,
                     scale: float = 1.0) -> VectorFieldModel:
    e = int(state_dim)
    d = e if driver_dim is None else int(driver_dim)
    return _constant_model("scaled_identity", float(scale) * np.eye(e, d),
                           np.zeros((e, e)), np.zeros(e),
                           {"state_dim": e, "driver_dim": d, "scale": float(scale)})


def _affine(sigma=((1.0,),), a=None, c=None) -> VectorFieldModel:
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    e = s.shape[0]
    a_mat = np.zeros((e, e)) if a is None else np.asarray(a, dtype=float)
    c_vec = np.zeros(e) if c is None else np.asarray(c, dtype=float)
    if a_mat.shape != (e, e) or c_vec.shape != (e,):
        raise ConfigurationError("affine drift shapes must match sigma's state dim")
    return _constant_model("affine", s, a_mat, c_vec,
                           {"sigma": s.tolist(), "a": a_mat.tolist(), "c": c_vec.tolist()})


def _ou(state_dim: int = 1, theta: float = 1.0, sigma_scale: float = 1.0) -> VectorFieldModel:
    e = int(state_dim)
    m = _constant_model("ou", float(sigma_scale) * np.eye(e),
                        -float(theta) * np.eye(e), np.zeros(e),
                        {"state_dim": e, "theta": float(theta),
                         "sigma_scale": float(sigma_scale)})
    return m


def _bounded_trig(state_dim: int = 2, driver_dim: int = 2, amplitude: float = 0.8,
                  drift_amplitude: float = 0.3, wavenumber: float = 1.0,
                  param_seed: int = 7) -> VectorFieldModel:
    """Smooth bounded coefficients with all derivatives bounded.

    sigma^{a j}(y) = amplitude * sin(<kappa_{aj}, y> + phi_{aj}) and the
    same shape for the drift; wave vectors and phases are frozen from
    ``param_seed`` so a preset instance is a pure function of its params.
    """
    e, d = int(state_dim), int(driver_dim)
    rng = stream(param_seed, 0xB0DE)
    kappa = wavenumber * rng.uniform(-1.0, 1.0, size=(e, d, e))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(e, d))
    kappa_b = wavenumber * rng.uniform(-1.0, 1.0, size=(e, e))
    phase_b = rng.uniform(0.0, 2.0 * np.pi, size=(e,))

    def _wave_derivative(y, order, kap, phi, amp):
        # theta has shape (B,) + phi.shape; the order-th derivative is
        # amp * sin^{(order)}(theta) times the order-fold outer product
        # of the wave vector over its trailing state axis.
        theta = np.tensordot(y, kap, axes=(1, kap.ndim - 1)) + phi
        val = amp * np.sin(theta + order * np.pi / 2.0)
        kp = np.ones(phi.shape)
        for i in range(order):
            kp = kp[..., None] * kap.reshape(phi.shape + (1,) * i + (e,))
        return val.reshape(val.shape + (1,) * order) * kp[None]

    def sigma_derivative(y, order):
        return _wave_derivative(y, order, kappa, phase, amplitude)

    def drift_derivative(y, order):
        return _wave_derivative(y, order, kappa_b, phase_b, drift_amplitude)

    return VectorFieldModel("bounded_trig", e, d, max_derivative_order=8,
                            sigma_derivative=sigma_derivative,
                            drift_derivative=drift_derivative,
                            params={"state_dim": e, "driver_dim": d,
                                    "amplitude": float(amplitude),
                                    "drift_amplitude": float(drift_amplitude),
                                    "wavenumber": float(wavenumber),
                                    "param_seed": int(param_seed)})


MODEL_PRESETS = {
    "identity": _identity,
    "scaled_identity": _scaled_identity,
    "affine": _affine,
    "ou": _ou,
    "bounded_trig": _bounded_trig,
}


def model_preset(name: str, **params) -> VectorFieldModel:
    """Instantiate a registered preset by name."""
    try:
        factory = MODEL_PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model preset {name!r}; known: {sorted(MODEL_PRESETS)}"
        ) from None
    return factory(**params)


def check_model_derivatives(model: VectorFieldModel, seed: int = 0,
                            n_points: int = 100, eps: float = 1e-5) -> float:
    """Max relative error of declared derivatives vs central differences.

    Contracts each order-(l+1) tensor with a random direction and
    compares against the difference quotient of the order-l tensor at
    random states.  Used by tests to hold models to 1e-6 relative.
    """
    rng = stream(seed, 0xFD)
    worst = 0.0
    for _ in range(n_points):
        y = rng.normal(0.0, 1.5, size=(1, model.state_dim))
        u = rng.normal(size=model.state_dim)
        u /= np.linalg.norm(u)
        for fun in (model.sigma_derivative, model.drift_derivative):
            for order in range(model.max_derivative_order):
                hi = fun(y + eps * u, order)
                lo = fun(y - eps * u, order)
                fd = (hi - lo) / (2.0 * eps)
                an = np.einsum("...c,c->...", fun(y, order + 1), u)
                scale = max(1.0, float(np.max(np.abs(an))))
                worst = max(worst, float(np.max(np.abs(fd - an))) / scale)
                if order >= 4:
                    break  # higher orders repeat the same wave pattern
    return worst
