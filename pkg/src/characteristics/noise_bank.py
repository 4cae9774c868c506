# src/characteristics/noise_bank.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from src.utils.validators import ensure_int

ROLE_CODES: Dict[str, int] = {"idio": 0, "theta": 1, "common": 2}
_SCENE_CODE = 7


@dataclass(frozen=True)
class NoiseBank:
    """
    Reproducible standard-normal increments addressed by
    (seed, path, particle, step, role).

    Each (path, role, step) owns its own SeedSequence; the particle index picks
    the row of that step's (count, dim) block. Values therefore depend only on
    the address, never on evaluation order or on how paths are scheduled.
    """
    seed: int

    def __post_init__(self) -> None:
        seed = ensure_int(self.seed, minimum=0)
        if seed >= 2 ** 64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        object.__setattr__(self, "seed", seed)

    def _generator(self, path: int, code: int, step: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(int(path), code, int(step)))
        return np.random.default_rng(ss)

    def normal(self, path: int, role: str, step: int, count: int, dim: int) -> np.ndarray:
        """Block of shape (count, dim) for one (path, role, step)."""
        if role not in ROLE_CODES:
            raise ValueError(f"Unknown noise role {role!r}")
        if dim == 0 or count == 0:
            return np.zeros((count, dim))
        return self._generator(path, ROLE_CODES[role], step).standard_normal((count, dim))

    def stream(self, path: int, role: str, start: int, steps: int, count: int, dim: int) -> np.ndarray:
        """Blocks for steps start..start+steps−1, shape (steps, count, dim)."""
        out = np.empty((steps, count, dim))
        for k in range(steps):
            out[k] = self.normal(path, role, start + k, count, dim)
        return out

    def scene_rng(self, path: int) -> np.random.Generator:
        """Generator for quantities sampled once per path (initial scenes)."""
        return self._generator(path, _SCENE_CODE, 0)

    def spawn(self, salt: int) -> "NoiseBank":
        """An independent bank derived from this one."""
        mixed = np.random.SeedSequence(entropy=self.seed, spawn_key=(_SCENE_CODE, int(salt))).generate_state(2, dtype=np.uint32)
        return NoiseBank(int(mixed[0]) << 32 | int(mixed[1]))
