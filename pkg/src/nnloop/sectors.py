"""Pre-activation interval propagation and local incremental sector bounds.

Given a box ``v1 in [v1_* - d, v1_* + d]`` on the first hidden layer, the box
is pushed through the network with sign-split interval arithmetic.  For every
neuron the incremental chord set anchored at its stationary input,

    { (phi(v) - phi(v_*)) / (v - v_*) : v in [v_lo, v_hi] \\ {v_*} } u {phi'(v_*)},

is then enclosed as tightly as possible:

* relu: exact closed form from the sign pattern of the box and the anchor;
* tanh: endpoint chords and phi'(v_*) are exact candidates, interior chord
  extrema are located on a 1024-point grid and polished by golden-section
  refinement, and the result is widened by 1e-12 for soundness;
* linear: the slope is identically one.

Enclosures are monotone under box growth: enlarging d never tightens a sector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveD, StarOutsideBox
from .network import Activation, FeedForwardNN, LayerTrace
from .plant import _frozen

_WIDEN = 1e-12
_GRID = 1024


@dataclass(frozen=True)
class BoundBox:
    """Per-layer elementwise intervals for pre- and post-activations."""

    v_lo: tuple
    v_hi: tuple
    w_lo: tuple
    w_hi: tuple

    def __post_init__(self):
        for name in ("v_lo", "v_hi", "w_lo", "w_hi"):
            object.__setattr__(self, name, tuple(_frozen(a) for a in getattr(self, name)))


@dataclass(frozen=True)
class SectorBounds:
    """Stacked per-neuron local slope bounds alpha_phi <= beta_phi."""

    alpha_phi: np.ndarray
    beta_phi: np.ndarray

    def __post_init__(self):
        a = _frozen(self.alpha_phi)
        b = _frozen(self.beta_phi)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("alpha_phi and beta_phi must be equal-length vectors")
        if np.any(a > b):
            raise ValueError("alpha_phi must not exceed beta_phi")
        object.__setattr__(self, "alpha_phi", a)
        object.__setattr__(self, "beta_phi", b)

    @property
    def n(self) -> int:
        return self.alpha_phi.shape[0]


def global_sectors(activation: Activation, n: int) -> SectorBounds:
    """Sector bounds equal to the activation's global slope restriction."""
    return SectorBounds(alpha_phi=np.full(n, activation.alpha),
                        beta_phi=np.full(n, activation.beta))


def propagate_box(nn: FeedForwardNN, v1_star_center, d) -> BoundBox:
    """Intervals for all layers from the layer-1 box ``v1_star_center +- d``.

    ``d`` may be a scalar (broadcast over the first hidden layer) or a vector
    of per-neuron half-widths; every entry must be strictly positive.
    """
    n_1 = nn.hidden_widths[0]
    d = np.broadcast_to(np.asarray(d, dtype=float), (n_1,)).copy()
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise NonPositiveD("box half-widths must be strictly positive")
    center = np.asarray(v1_star_center, dtype=float)
    if center.shape != (n_1,):
        raise NonPositiveD(f"v1 center must have shape ({n_1},)")

    act = nn.activation
    v_lo, v_hi = [center - d], [center + d]
    w_lo, w_hi = [act(v_lo[0])], [act(v_hi[0])]  # activations are monotone
    for W, b in nn.layers[1:]:
        Wp = np.maximum(W, 0.0)
        Wn = np.minimum(W, 0.0)
        lo = Wp @ w_lo[-1] + Wn @ w_hi[-1] + b
        hi = Wp @ w_hi[-1] + Wn @ w_lo[-1] + b
        v_lo.append(lo)
        v_hi.append(hi)
        w_lo.append(act(lo))
        w_hi.append(act(hi))
    return BoundBox(v_lo=tuple(v_lo), v_hi=tuple(v_hi),
                    w_lo=tuple(w_lo), w_hi=tuple(w_hi))


def local_sectors(nn: FeedForwardNN, box: BoundBox, v_star) -> SectorBounds:
    """Tight per-neuron sector bounds anchored at the stationary trace.

    ``v_star`` is the stationary LayerTrace (or a per-layer list of stationary
    pre-activation vectors); each entry must lie inside the box.
    """
    vs_layers = v_star.v if isinstance(v_star, LayerTrace) else tuple(v_star)
    if len(vs_layers) != len(box.v_lo):
        raise StarOutsideBox("stationary trace and box disagree on layer count")
    alphas, betas = [], []
    for layer, vs_vec in enumerate(vs_layers):
        lo_vec, hi_vec = box.v_lo[layer], box.v_hi[layer]
        for j in range(lo_vec.shape[0]):
            lo, hi, vs = float(lo_vec[j]), float(hi_vec[j]), float(vs_vec[j])
            tol = 1e-9 * (1.0 + abs(vs))
            if vs < lo - tol or vs > hi + tol:
                raise StarOutsideBox(
                    f"layer {layer + 1}, neuron {j}: v_* = {vs} outside [{lo}, {hi}]")
            vs = min(max(vs, lo), hi)
            a, b = _sector_1d(nn.activation, lo, hi, vs)
            alphas.append(a)
            betas.append(b)
    return SectorBounds(alpha_phi=np.array(alphas), beta_phi=np.array(betas))


def _sector_1d(act: Activation, lo: float, hi: float, vs: float):
    if act.kind == "linear":
        return 1.0, 1.0
    if act.kind == "relu":
        return _relu_sector(lo, hi, vs)
    return _tanh_sector(lo, hi, vs)


def _relu_sector(lo: float, hi: float, vs: float):
    # Exact case analysis on the sign crossing of the box and the anchor.
    if hi <= 0.0:
        return 0.0, 0.0
    if lo >= 0.0:
        return 1.0, 1.0
    if vs > 0.0:
        return vs / (vs - lo), 1.0
    if vs < 0.0:
        return 0.0, hi / (hi - vs)
    return 0.0, 1.0


def _tanh_chord(v, vs: float):
    """Chord slope of tanh anchored at vs, stable for v near vs.

    The raw difference quotient loses ~2e-16/|dv| digits to cancellation
    while the midpoint derivative is off by ~|dv|^2/6; switching at 1e-5
    balances the two at a worst-case evaluation error around 2e-11.
    """
    v = np.asarray(v, dtype=float)
    dv = v - vs
    near = np.abs(dv) <= 1e-5 * (1.0 + abs(vs))
    safe = np.where(near, 1.0, dv)
    ch = (np.tanh(v) - np.tanh(vs)) / safe
    mid = 0.5 * (v + vs)
    dmid = 1.0 - np.tanh(mid) ** 2
    return np.where(near, dmid, ch)


def _golden_refine(f, a: float, b: float, maximize: bool, iters: int = 90):
    """Golden-section search for a locally unimodal extremum of f on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    sign = -1.0 if maximize else 1.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = sign * f(x1), sign * f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = sign * f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = sign * f(x2)
    xm = 0.5 * (a + b)
    return float(sign * min(f1, f2)), float(f(xm))


def _tanh_sector(lo: float, hi: float, vs: float):
    dphi_vs = 1.0 - np.tanh(vs) ** 2
    cands = [float(_tanh_chord(lo, vs)), float(_tanh_chord(hi, vs)), float(dphi_vs)]
    grid = np.linspace(lo, hi, _GRID)
    chords = _tanh_chord(grid, vs)

    def chord(v):
        return float(_tanh_chord(v, vs))

    k_min = int(np.argmin(chords))
    k_max = int(np.argmax(chords))
    lo_min = grid[max(k_min - 1, 0)]
    hi_min = grid[min(k_min + 1, _GRID - 1)]
    lo_max = grid[max(k_max - 1, 0)]
    hi_max = grid[min(k_max + 1, _GRID - 1)]
    _, ref_min = _golden_refine(chord, lo_min, hi_min, maximize=False)
    _, ref_max = _golden_refine(chord, lo_max, hi_max, maximize=True)

    alpha = min(min(cands), float(chords[k_min]), ref_min) - _WIDEN
    beta = max(max(cands), float(chords[k_max]), ref_max) + _WIDEN
    return max(alpha, 0.0), min(beta, 1.0)
