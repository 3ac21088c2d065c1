"""Discrete-time LTI plant, integrator augmentation, and steady-state maps.

The plant is

    x+ = A x + B u,    y = C x,

with as many inputs as tracked outputs.  Feeding the tracking error into a
discrete integrator state ``xi`` and applying ``u = k_xi xi + kappa(x, r)``
yields the augmented loop

    xtil+ = Atil xtil + Btil u_nn + Br r,    y = Ctil xtil,

whose block matrices are assembled by :func:`augment`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularAa, SingularGain

# Condition number beyond which a matrix is treated as numerically singular.
COND_LIMIT = 1e12

GRAVITY = 9.81


def _frozen(a, shape=None) -> np.ndarray:
    """Return a read-only float64 copy, optionally checking its shape."""
    out = np.array(a, dtype=float)
    if shape is not None and out.shape != shape:
        raise DimensionMismatch(f"expected shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("matrix entries must be finite")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Plant:
    """State-space data (A, B, C) with n_u == n_r."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch("A must be square")
        n_x = A.shape[0]
        B = _frozen(self.B)
        if B.ndim != 2 or B.shape[0] != n_x:
            raise DimensionMismatch("B must be n_x x n_u")
        C = _frozen(self.C)
        if C.ndim != 2 or C.shape[1] != n_x:
            raise DimensionMismatch("C must be n_r x n_x")
        if B.shape[1] != C.shape[0]:
            raise DimensionMismatch("input and output dimensions must agree (n_u == n_r)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_r(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class AugmentedPlant:
    """Plant plus integrator state, in block form."""

    Atil: np.ndarray
    Btil: np.ndarray
    Ctil: np.ndarray
    Br: np.ndarray
    k_xi: np.ndarray

    def __post_init__(self):
        for name in ("Atil", "Btil", "Ctil", "Br", "k_xi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_xtil(self) -> int:
        return self.Atil.shape[0]

    @property
    def n_r(self) -> int:
        return self.Br.shape[1]

    @property
    def n_x(self) -> int:
        return self.n_xtil - self.n_r


@dataclass(frozen=True)
class SteadyStateMap:
    """Linear maps r -> x_* and r -> u_* obtained from the tracking equations."""

    A_a: np.ndarray
    M: np.ndarray
    M_u: np.ndarray

    def __post_init__(self):
        for name in ("A_a", "M", "M_u"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class SteadyState:
    """Steady state of the augmented loop for one reference."""

    x_star: np.ndarray
    u_star: np.ndarray
    xi_star: np.ndarray
    xtil_star: np.ndarray

    def __post_init__(self):
        for name in ("x_star", "u_star", "xi_star", "xtil_star"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


def _cond(mat: np.ndarray) -> float:
    s = np.linalg.svd(mat, compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def augment(plant: Plant, k_xi) -> AugmentedPlant:
    """Attach the integrator with gain ``k_xi`` to the plant.

    Raises SingularGain when k_xi is numerically singular; an invertible gain
    is required for a well-defined integrator steady state.
    """
    k_xi = np.atleast_2d(np.asarray(k_xi, dtype=float))
    n_r = plant.n_r
    if k_xi.shape != (n_r, n_r):
        raise DimensionMismatch(f"k_xi must be {n_r} x {n_r}")
    if _cond(k_xi) >= COND_LIMIT:
        raise SingularGain("integrator gain is numerically singular")
    A, B, C = plant.A, plant.B, plant.C
    n_x = plant.n_x
    Atil = np.block([[A, B @ k_xi], [-C, np.eye(n_r)]])
    Btil = np.vstack([B, np.zeros((n_r, plant.n_u))])
    Ctil = np.hstack([C, np.zeros((n_r, n_r))])
    Br = np.vstack([np.zeros((n_x, n_r)), np.eye(n_r)])
    return AugmentedPlant(Atil=Atil, Btil=Btil, Ctil=Ctil, Br=Br, k_xi=k_xi)


def steady_state_map(plant: Plant) -> SteadyStateMap:
    """Solve the steady-state equations for the maps x_* = M r, u_* = M_u r."""
    n_x, n_u, n_r = plant.n_x, plant.n_u, plant.n_r
    A_a = np.block([
        [plant.A - np.eye(n_x), plant.B],
        [plant.C, np.zeros((n_r, n_u))],
    ])
    if _cond(A_a) >= COND_LIMIT:
        raise SingularAa("steady-state system matrix is rank deficient")
    rhs = np.vstack([np.zeros((n_x, n_r)), np.eye(n_r)])
    sol = np.linalg.solve(A_a, rhs)
    return SteadyStateMap(A_a=A_a, M=sol[:n_x, :], M_u=sol[n_x:, :])


def steady_state(plant: Plant, nn, k_xi, r) -> SteadyState:
    """Unique steady state of the augmented loop for reference ``r``.

    The integrator settles at xi_* = k_xi^-1 (u_* - kappa(x_*, r)), so the
    plant input equals u_* exactly and the output offset vanishes.
    """
    from .network import forward  # local import to avoid a cycle

    r = np.atleast_1d(np.asarray(r, dtype=float))
    ssmap = steady_state_map(plant)
    x_star = ssmap.M @ r
    u_star = ssmap.M_u @ r
    k_xi = np.atleast_2d(np.asarray(k_xi, dtype=float))
    if _cond(k_xi) >= COND_LIMIT:
        raise SingularGain("integrator gain is numerically singular")
    u_nn = forward(nn, x_star, r).u
    xi_star = np.linalg.solve(k_xi, u_star - u_nn)
    return SteadyState(
        x_star=x_star,
        u_star=u_star,
        xi_star=xi_star,
        xtil_star=np.concatenate([x_star, xi_star]),
    )


def build_pendulum(m: float = 0.15, L: float = 0.5, mu: float = 0.5,
                   g: float = GRAVITY, T_s: float = 0.02,
                   method: str = "exact-zoh", output: str = "angle") -> Plant:
    """Linearized inverted pendulum, discretized with sampling time ``T_s``.

    Continuous-time data:

        A_c = [[0, 1], [g/L, -mu/(m L^2)]],   B_c = [0, g/L]^T.

    ``method`` selects the discretization: "exact-zoh" (matrix exponential of
    the stacked [A_c, B_c] block) or "euler" (I + T_s A_c, T_s B_c).
    ``output`` picks the tracked quantity: "angle" -> C = [1, 0] (default) or
    "velocity" -> C = [0, 1].
    """
    for name, val in (("m", m), ("L", L), ("mu", mu), ("g", g), ("T_s", T_s)):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    if method not in ("exact-zoh", "euler"):
        raise ValueError("method must be 'exact-zoh' or 'euler'")
    if output not in ("angle", "velocity"):
        raise ValueError("output must be 'angle' or 'velocity'")
    A_c = np.array([[0.0, 1.0], [g / L, -mu / (m * L * L)]])
    B_c = np.array([[0.0], [g / L]])
    if method == "euler":
        A_d = np.eye(2) + T_s * A_c
        B_d = T_s * B_c
    else:
        from scipy.linalg import expm

        blk = np.zeros((3, 3))
        blk[:2, :2] = A_c
        blk[:2, 2:] = B_c
        E = expm(T_s * blk)
        A_d, B_d = E[:2, :2], E[:2, 2:]
    C = np.array([[1.0, 0.0]]) if output == "angle" else np.array([[0.0, 1.0]])
    return Plant(A=A_d, B=B_d, C=C)


def load_plant(path) -> Plant:
    """Read a plant from JSON: {"A": [[..]], "B": [[..]], "C": [[..]]}."""
    with open(path) as fh:
        data = json.load(fh)
    return Plant(A=np.array(data["A"], dtype=float),
                 B=np.array(data["B"], dtype=float),
                 C=np.array(data["C"], dtype=float))


def save_plant(plant: Plant, path) -> None:
    data = {"A": plant.A.tolist(), "B": plant.B.tolist(), "C": plant.C.tolist()}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
