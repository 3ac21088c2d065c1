"""Shipped example assets.

The pendulum controller weights were synthesized for this repository: a
stabilizing linear gain for the integrator-augmented pendulum was computed
offline and realized exactly as the small-signal gain of a two-layer tanh
network (5 neurons per layer, state feedback, zero biases).  They are
illustrative and are not taken from any externally trained controller.
"""

from __future__ import annotations

from importlib import resources

from .network import FeedForwardNN, load_nn
from .plant import Plant, build_pendulum

# Integrator gain used by the shipped pendulum scenario.
PENDULUM_K_XI = 1.0

# Layer-1 box half-width used by the shipped verification scenario.
PENDULUM_D = 0.345


def example_nn_path() -> str:
    return str(resources.files("nnloop.assets_data") / "pendulum_nn.json")


def load_example_nn() -> FeedForwardNN:
    return load_nn(example_nn_path())


def pendulum_example() -> tuple[Plant, FeedForwardNN, float]:
    """(plant, network, k_xi) for the shipped pendulum scenario."""
    plant = build_pendulum()
    return plant, load_example_nn(), PENDULUM_K_XI
