"""Built-in test problems on the unit square."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh, build_unit_square, paper_tagging


def paper_load(x, y):
    return x * np.cos(2 * np.pi * y)


def zero_load(x, y):
    return np.zeros(np.broadcast(x, y).shape)


# u = (1 - cos(pi x)) (2 + cos(pi y)): u = 0 at x = 0, du/dn = 0 on y = 0, 1
# and on x = 1, where u >= 2 keeps the contact constraint inactive.
def smooth_exact(x, y):
    return (1 - np.cos(np.pi * x)) * (2 + np.cos(np.pi * y))


def smooth_exact_grad(x, y):
    return (np.pi * np.sin(np.pi * x) * (2 + np.cos(np.pi * y)),
            -np.pi * (1 - np.cos(np.pi * x)) * np.sin(np.pi * y))


def smooth_load(x, y):
    pi2 = np.pi ** 2
    return -pi2 * np.cos(np.pi * x) * (2 + np.cos(np.pi * y)) \
        + pi2 * (1 - np.cos(np.pi * x)) * np.cos(np.pi * y)


@dataclass
class Problem:
    name: str
    load: Callable
    initial_mesh: Callable[[int], Mesh]
    exact: Optional[Callable] = None
    exact_grad: Optional[Callable] = None


def _square(n):
    return build_unit_square(n, paper_tagging)


BUILTIN = {
    "signorini-paper": Problem("signorini-paper", paper_load, _square),
    "manufactured-smooth": Problem("manufactured-smooth", smooth_load, _square,
                                   smooth_exact, smooth_exact_grad),
    "zero-load": Problem("zero-load", zero_load, _square),
}


def get_problem(name: str) -> Problem:
    try:
        return BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILTIN)}") from None


def file_problem(mesh: Mesh, load, name="external") -> Problem:
    """Problem on a fixed mesh read from file; ``n`` is ignored."""
    return Problem(name, load, lambda n: mesh)
