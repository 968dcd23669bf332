"""Unbiased stochastic uniform quantization of real vectors.

``quantize`` maps a vector x to sign(x_i) * ||x|| * zeta_i, where each zeta_i
lies on the uniform grid {0, 1/s, ..., 1} and is randomly rounded between the
two grid points bracketing |x_i| / ||x||.  The rounding probabilities are
chosen so that the output is an unbiased estimate of x.  The price of
unbiasedness is extra variance, summarized by the factor q in

    E ||Q(x) - x||^2  <=  q * ||x||^2,

which grows as the number of levels s shrinks and as the dimension grows.
``estimate_variance_factor`` measures q empirically for a given (s, d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STOCHASTIC = "stochastic"
IDENTITY = "identity"


class NonFiniteInputError(ValueError):
    """Raised when a vector handed to the quantizer has NaN or infinite entries.

    This almost always signals numerical blow-up upstream (a diverging
    training run), not a quantizer problem.
    """


@dataclass(frozen=True)
class QuantizerSpec:
    """Quantizer configuration: number of levels plus a mode switch.

    ``variance_factor`` is informational: it carries a measured or assumed q
    for use by the bound calculators, and is not consulted by ``quantize``.
    ``identity`` mode passes vectors through exactly, so degenerate-case tests
    can disable quantization without touching the code path layout.
    """

    levels: int = 1
    variance_factor: float = 0.0
    mode: str = STOCHASTIC

    def __post_init__(self) -> None:
        if self.mode not in (STOCHASTIC, IDENTITY):
            raise ValueError(f"unknown quantizer mode {self.mode!r}")
        if self.levels < 1:
            raise ValueError("levels must be a positive integer")
        if self.variance_factor < 0:
            raise ValueError("variance_factor must be non-negative")
        if self.mode == IDENTITY and self.variance_factor != 0.0:
            raise ValueError("identity mode is exact; variance_factor must be 0")


def identity_spec() -> QuantizerSpec:
    """Spec for the exact pass-through quantizer."""
    return QuantizerSpec(levels=1, variance_factor=0.0, mode=IDENTITY)


def quantize(x: np.ndarray, spec: QuantizerSpec, rng: np.random.Generator) -> np.ndarray:
    """Quantize ``x`` to ``spec.levels`` stochastic levels.

    Components that sit exactly on a grid point (including zeros) are passed
    through deterministically; the rng is still advanced by one uniform draw
    per component so stream usage does not depend on the data.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        bad = int(np.count_nonzero(~np.isfinite(x)))
        raise NonFiniteInputError(
            f"quantize: {bad} non-finite component(s) in a vector of size {x.size}; "
            "upstream values have likely diverged"
        )
    if spec.mode == IDENTITY:
        return x.copy()
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.zeros_like(x)
    s = spec.levels
    scaled = np.abs(x) * (s / norm)
    lower = np.floor(scaled)
    # probability of rounding up equals the fractional position in the cell
    bump = rng.random(x.shape) < (scaled - lower)
    return np.sign(x) * (norm / s) * (lower + bump)


def estimate_variance_factor(
    levels: int | QuantizerSpec,
    d: int,
    trials: int,
    rng: np.random.Generator,
    *,
    probes: int = 32,
) -> float:
    """Empirically estimate the variance factor q for dimension ``d``.

    Draws ``probes`` standard-normal probe vectors and, for each, averages
    ||Q(x) - x||^2 / ||x||^2 over ``trials // probes`` repeated quantizations.
    Returns the maximum of the per-probe means, which is the conservative
    choice for a factor that must bound the expectation from above.

    The estimate depends on d: expect q to grow with dimension at fixed s
    and to fall roughly like 1/s^2 at fixed dimension.
    """
    spec = levels if isinstance(levels, QuantizerSpec) else QuantizerSpec(levels=int(levels))
    if spec.mode == IDENTITY:
        return 0.0
    if trials < 1:
        raise ValueError("trials must be a positive integer")
    if d < 1:
        raise ValueError("d must be a positive integer")
    if probes < 1:
        raise ValueError("probes must be a positive integer")
    reps = max(1, trials // probes)
    worst = 0.0
    for _ in range(probes):
        x = rng.standard_normal(d)
        norm_sq = float(x @ x)
        if norm_sq == 0.0:
            continue
        acc = 0.0
        for _ in range(reps):
            err = quantize(x, spec, rng) - x
            acc += float(err @ err)
        worst = max(worst, acc / (reps * norm_sq))
    return worst
