"""Blur schedule lattices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from perfsage.errors import ParameterError
from perfsage.kernels.params import ScheduleCandidate


def powers_of_two(lo: int, hi: int) -> tuple[int, ...]:
    out, v = [], 1
    while v <= hi:
        if v >= lo:
            out.append(v)
        v *= 2
    return tuple(out)


@dataclass(frozen=True)
class ScheduleSpace:
    """Legal values per split factor plus the image sides they are used with.

    With ``chained`` set, s3 <= s2 and s4 <= s3 are enforced.
    """

    s1: tuple[int, ...]
    s2: tuple[int, ...]
    s3: tuple[int, ...]
    s4: tuple[int, ...]
    chained: bool = True
    sizes: tuple[int, ...] = (1024,)

    def contains(self, c: ScheduleCandidate) -> bool:
        if c.s1 not in self.s1 or c.s2 not in self.s2 or c.s3 not in self.s3 or c.s4 not in self.s4:
            return False
        return not self.chained or (c.s3 <= c.s2 and c.s4 <= c.s3)

    def lattice(self) -> list[ScheduleCandidate]:
        """Every legal candidate, in lexicographic order."""
        out = []
        for s1, s2, s3, s4 in itertools.product(sorted(self.s1), sorted(self.s2), sorted(self.s3), sorted(self.s4)):
            if self.chained and (s3 > s2 or s4 > s3):
                continue
            out.append(ScheduleCandidate(s1, s2, s3, s4))
        return out

    def size(self) -> int:
        if not self.chained:
            return len(self.s1) * len(self.s2) * len(self.s3) * len(self.s4)
        return len(self.lattice())

    def restricted_to(self, n: int) -> "ScheduleSpace":
        """Drop factors larger than an image side ``n``."""
        keep = lambda vals: tuple(v for v in vals if v <= n)  # noqa: E731
        space = ScheduleSpace(keep(self.s1), keep(self.s2), keep(self.s3), keep(self.s4), self.chained, (n,))
        if not space.lattice():
            raise ParameterError(f"no legal schedule for image side {n}")
        return space


CPU_BLUR_SPACE = ScheduleSpace(
    s1=powers_of_two(2, 1024),
    s2=powers_of_two(2, 1024),
    s3=powers_of_two(2, 1024),
    s4=powers_of_two(2, 1024),
    chained=True,
    sizes=powers_of_two(2**10, 2**15),
)

# three tunables only; s4 is pinned to 1
GPU_BLUR_SPACE = ScheduleSpace(
    s1=powers_of_two(2, 16),
    s2=powers_of_two(1, 64),
    s3=powers_of_two(1, 64),
    s4=(1,),
    chained=False,
    sizes=powers_of_two(2**10, 2**15),
)

DEFAULT_SCHEDULE = ScheduleCandidate(8, 256, 128, 8)
