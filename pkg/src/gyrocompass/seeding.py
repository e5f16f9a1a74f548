"""Deterministic derivation of per-purpose RNG streams from one base seed.

Every random choice in the package flows from a single ``base_seed``
through ``SeedSequence([base_seed, purpose, *indices])``.  Purpose codes:

====  ==========================================
code  stream
====  ==========================================
1     dataset split / generation
2     sensor-noise injection
3     denoiser weight init
4     denoiser batch shuffling
5     diffusion (t, eps) draws
6     heading-net weight init
7     heading batch shuffling
8     reverse-process noise injection
9     evaluation
====  ==========================================
"""

from __future__ import annotations

import numpy as np

DATASET = 1
NOISE = 2
DENOISER_INIT = 3
DENOISER_SHUFFLE = 4
DIFFUSION_DRAWS = 5
HEADING_INIT = 6
HEADING_SHUFFLE = 7
REVERSE_NOISE = 8
EVALUATION = 9


def derive_rng(base_seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """Return an independent generator for (base_seed, purpose, indices)."""
    return np.random.default_rng(np.random.SeedSequence([base_seed, purpose, *indices]))


def derive_int(base_seed: int, purpose: int, *indices: int) -> int:
    """Return a derived 63-bit integer seed (e.g. for torch.manual_seed)."""
    state = np.random.SeedSequence([base_seed, purpose, *indices]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)
