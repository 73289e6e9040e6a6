"""Forward noising of image prototypes before guided generation.

Standard variance-preserving forward step: for a strength in [0, 1] the
start timestep is ``round(strength * total_steps)`` and

    noised = sqrt(abar_t) * latent + sqrt(1 - abar_t) * eps

with ``eps`` drawn from a named deterministic stream and ``abar`` the
cumulative schedule the generation service declares. The default mock
schedule is linear in abar from 1.0 at t=0 down to ``final`` at t=T.
"""

from __future__ import annotations

import numpy as np

from edits.rng import make_rng

__all__ = ["alphabar_schedule", "add_noise"]


def alphabar_schedule(total_steps: int, final: float = 0.01) -> np.ndarray:
    """Linear cumulative schedule: abar[0] = 1, abar[total_steps] = final."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    t = np.arange(total_steps + 1, dtype=np.float64)
    return 1.0 - (1.0 - final) * (t / total_steps)


def add_noise(
    latent: np.ndarray,
    strength: float,
    total_steps: int,
    seed: int,
    *,
    alphabar: np.ndarray | None = None,
    noise: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Noise a latent to the timestep implied by ``strength``.

    Returns ``(noised_latent, t_start)``; strength 0 returns the input
    unchanged. ``noise`` injects a fixed epsilon tensor for tests.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must be in [0, 1], got {strength}")
    lat = np.asarray(latent)
    t_start = int(round(strength * total_steps))
    if t_start == 0:
        return lat, 0
    abar = alphabar if alphabar is not None else alphabar_schedule(total_steps)
    if len(abar) < total_steps + 1:
        raise ValueError(
            f"schedule holds {len(abar)} entries, needs {total_steps + 1}"
        )
    eps = (
        np.asarray(noise, dtype=np.float64)
        if noise is not None
        else make_rng(seed, "forward-noise").standard_normal(lat.shape)
    )
    if eps.shape != lat.shape:
        raise ValueError(f"noise shape {eps.shape} does not match {lat.shape}")
    ab = float(abar[t_start])
    out = np.sqrt(ab) * lat.astype(np.float64) + np.sqrt(1.0 - ab) * eps
    return out.astype(lat.dtype if lat.dtype.kind == "f" else np.float32), t_start
