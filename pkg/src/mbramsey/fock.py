"""Number-conserving occupation bases for a chain of bosonic sites."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

DEFAULT_NMAX = 3


class SectorError(ValueError):
    """Raised for infeasible sectors or states that do not belong to one."""


def _compositions(n: int, sites: int, n_max: int) -> Iterator[tuple[int, ...]]:
    # descending lexicographic order, site 0 most significant
    if sites == 1:
        if n <= n_max:
            yield (n,)
        return
    rest_cap = (sites - 1) * n_max
    for first in range(min(n, n_max), -1, -1):
        if n - first > rest_cap:
            break
        for tail in _compositions(n - first, sites - 1, n_max):
            yield (first,) + tail


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Occupation vectors with fixed particle number ``N`` on ``V`` sites.

    States are stored in descending lexicographic order (site 0 most
    significant), so position 0 is the state with all particles packed
    onto the left end.
    """

    N: int
    V: int
    n_max: int
    states: np.ndarray = field(repr=False)
    _index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return self.dim

    def state_at(self, i: int) -> tuple[int, ...]:
        return tuple(int(x) for x in self.states[i])

    def index_of(self, state: Sequence[int]) -> int:
        return index_of(self, state)

    def __contains__(self, state) -> bool:
        return tuple(int(x) for x in state) in self._index


@lru_cache(maxsize=256)
def enumerate_basis(N: int, V: int, n_max: int = DEFAULT_NMAX) -> SectorBasis:
    """Build the canonical basis of the (N, V, n_max) sector.

    Cached: repeated calls return the same immutable object.
    """
    if N < 0 or V < 1 or n_max < 1:
        raise SectorError(f"invalid sector N={N}, V={V}, n_max={n_max}")
    if N > V * n_max:
        raise SectorError(f"infeasible sector: N={N} exceeds V*n_max={V * n_max}")
    states = list(_compositions(N, V, n_max))
    arr = np.array(states, dtype=np.int64).reshape(len(states), V)
    arr.setflags(write=False)
    index = {s: i for i, s in enumerate(states)}
    return SectorBasis(N=N, V=V, n_max=n_max, states=arr, _index=index)


def index_of(basis: SectorBasis, state: Sequence[int]) -> int:
    key = tuple(int(x) for x in state)
    try:
        return basis._index[key]
    except KeyError:
        raise SectorError(
            f"state {key} is outside sector N={basis.N}, V={basis.V}, n_max={basis.n_max}"
        ) from None


def sector_dimension(N: int, V: int, n_max: int) -> int:
    """Count compositions of N into V parts bounded by n_max (inclusion-exclusion)."""
    from math import comb

    total = 0
    for j in range(V + 1):
        m = N - j * (n_max + 1)
        if m < 0:
            break
        total += (-1) ** j * comb(V, j) * comb(m + V - 1, V - 1)
    return total
