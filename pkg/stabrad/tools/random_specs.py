from typing import Optional

import numpy as np

from ..services.matrix_core import spectral_abscissa
from ..services.perturbation_model import ProblemSpec, spec_from_arrays


def random_stable_matrix(rng: np.random.Generator, n: int, symmetric: bool = False,
                         margin: tuple = (0.1, 1.0)) -> np.ndarray:
    """Gaussian matrix shifted so that its spectral abscissa is -U(margin)."""
    A = rng.standard_normal((n, n))
    if symmetric:
        A = 0.5 * (A + A.T)
    shift = spectral_abscissa(A) + rng.uniform(*margin)
    return A - shift * np.eye(n)


def random_stable_spec(
    rng: np.random.Generator,
    n: int,
    m: Optional[int] = None,
    p: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
    identity_structure: bool = False,
    symmetric: bool = False,
    name: str = "random",
) -> ProblemSpec:
    """
    Random stable problem. identity_structure=True gives B = C = I (m = p = n).
    mask defaults to all-ones.
    """
    A = random_stable_matrix(rng, n, symmetric=symmetric)
    if identity_structure:
        B = np.eye(n)
        C = np.eye(n)
    else:
        m = n if m is None else m
        p = n if p is None else p
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
    S = np.ones((B.shape[1], C.shape[0])) if mask is None else np.asarray(mask, dtype=float)
    return spec_from_arrays(name, A, B, C, S)
