"""Two-level label hierarchies: fine classes partitioned into coarse groups.

A hierarchy answers, for any ground-truth fine class g, three questions:
which classes are g's siblings (same coarse group, g excluded), which
classes live outside g's group, and which coarse group a fine class
belongs to.  Instances are immutable and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class HierarchyError(ValueError):
    """Malformed hierarchy file or inconsistent group structure."""


@dataclass(frozen=True)
class HierarchySlices:
    """Index partition around one ground-truth class.

    ``{g} | set(inner) | set(outer)`` is exactly ``range(num_fine)``:
    ``inner`` are g's siblings, ``outer`` is everything outside g's group.
    """

    g: int
    inner: tuple[int, ...]
    outer: tuple[int, ...]


@dataclass(frozen=True)
class LabelHierarchy:
    """Partition of ``num_fine`` leaf classes into ``num_coarse`` groups.

    ``fine_to_coarse[f]`` is the group of fine class ``f``;
    ``coarse_members[c]`` is the sorted tuple of fine classes in group ``c``.
    Groups may have unequal sizes but must be non-empty, and every fine
    index belongs to exactly one group.
    """

    num_fine: int
    num_coarse: int
    fine_to_coarse: tuple[int, ...]
    coarse_members: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.num_coarse < 1:
            raise HierarchyError("hierarchy needs at least one coarse group")
        if len(self.fine_to_coarse) != self.num_fine:
            raise HierarchyError("fine_to_coarse length does not match num_fine")
        if len(self.coarse_members) != self.num_coarse:
            raise HierarchyError("coarse_members length does not match num_coarse")
        seen: list[int] = []
        for c, members in enumerate(self.coarse_members):
            if not members:
                raise HierarchyError(f"coarse group {c} is empty")
            if tuple(sorted(members)) != tuple(members):
                raise HierarchyError(f"coarse group {c} members are not sorted")
            for f in members:
                if not 0 <= f < self.num_fine:
                    raise HierarchyError(f"fine index {f} out of range in group {c}")
                if self.fine_to_coarse[f] != c:
                    raise HierarchyError(
                        f"fine index {f} maps to group {self.fine_to_coarse[f]} "
                        f"but is listed in group {c}"
                    )
                seen.append(f)
        if sorted(seen) != list(range(self.num_fine)):
            raise HierarchyError("coarse groups do not partition the fine label set")

    @classmethod
    def from_fine_to_coarse(cls, mapping: "list[int] | tuple[int, ...] | np.ndarray") -> "LabelHierarchy":
        """Build a hierarchy from a fine-index -> coarse-index array.

        Coarse indices must be contiguous from 0.
        """
        fine_to_coarse = tuple(int(c) for c in mapping)
        if not fine_to_coarse:
            raise HierarchyError("empty fine-to-coarse mapping")
        used = sorted(set(fine_to_coarse))
        if used != list(range(len(used))):
            missing = next(c for c in range(max(used) + 1) if c not in set(used))
            raise HierarchyError(f"coarse indices not contiguous from 0: {missing} is missing")
        num_coarse = len(used)
        groups: list[list[int]] = [[] for _ in range(num_coarse)]
        for f, c in enumerate(fine_to_coarse):
            groups[c].append(f)
        return cls(
            num_fine=len(fine_to_coarse),
            num_coarse=num_coarse,
            fine_to_coarse=fine_to_coarse,
            coarse_members=tuple(tuple(g) for g in groups),
        )

    def coarse_of(self, fine: int) -> int:
        """Coarse group containing ``fine``."""
        if not 0 <= fine < self.num_fine:
            raise HierarchyError(f"fine index {fine} out of range [0, {self.num_fine})")
        return self.fine_to_coarse[fine]

    def slices_for(self, g: int) -> HierarchySlices:
        """Sibling and non-relative index lists for ground truth ``g``."""
        if not 0 <= g < self.num_fine:
            raise HierarchyError(f"fine index {g} out of range [0, {self.num_fine})")
        group = set(self.coarse_members[self.fine_to_coarse[g]])
        inner = tuple(f for f in sorted(group) if f != g)
        outer = tuple(f for f in range(self.num_fine) if f not in group)
        return HierarchySlices(g=g, inner=inner, outer=outer)

    @cached_property
    def coarse_map(self) -> np.ndarray:
        """fine -> coarse as an int array, for vectorized lookups."""
        return np.asarray(self.fine_to_coarse, dtype=np.int64)

    @cached_property
    def inner_masks(self) -> np.ndarray:
        """(num_fine, num_fine) bool; row g marks g's siblings (g excluded)."""
        masks = np.zeros((self.num_fine, self.num_fine), dtype=bool)
        for g in range(self.num_fine):
            masks[g, self.coarse_members[self.fine_to_coarse[g]]] = True
            masks[g, g] = False
        return masks

    @cached_property
    def outer_masks(self) -> np.ndarray:
        """(num_fine, num_fine) bool; row g marks classes outside g's group."""
        masks = np.ones((self.num_fine, self.num_fine), dtype=bool)
        for g in range(self.num_fine):
            masks[g, self.coarse_members[self.fine_to_coarse[g]]] = False
        return masks


def flat_hierarchy(num_fine: int) -> LabelHierarchy:
    """Single coarse group holding every fine class."""
    return LabelHierarchy.from_fine_to_coarse([0] * num_fine)


def identity_hierarchy(num_fine: int) -> LabelHierarchy:
    """One singleton coarse group per fine class."""
    return LabelHierarchy.from_fine_to_coarse(list(range(num_fine)))


def block_hierarchy(num_coarse: int, fines_per_coarse: int) -> LabelHierarchy:
    """Contiguous blocks: fine f belongs to group f // fines_per_coarse."""
    mapping = [f // fines_per_coarse for f in range(num_coarse * fines_per_coarse)]
    return LabelHierarchy.from_fine_to_coarse(mapping)


def parse_hierarchy(text: str) -> LabelHierarchy:
    """Parse the hierarchy file format into a validated LabelHierarchy.

    Format: one ``<fine_index> <coarse_index>`` pair per line, whitespace
    separated; ``#`` starts a comment line; blank lines are ignored.  Fine
    indices must cover [0, number of pairs) exactly once and coarse indices
    must be contiguous from 0.  Errors carry the offending line number.
    """
    pairs: dict[int, int] = {}
    line_of_fine: dict[int, int] = {}
    line_of_coarse_first_use: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise HierarchyError(
                f"line {lineno}: expected '<fine_index> <coarse_index>', got {line!r}"
            )
        try:
            fine, coarse = int(fields[0]), int(fields[1])
        except ValueError:
            raise HierarchyError(f"line {lineno}: non-integer index in {line!r}") from None
        if fine < 0:
            raise HierarchyError(f"line {lineno}: negative fine index {fine}")
        if coarse < 0:
            raise HierarchyError(f"line {lineno}: negative coarse index {coarse}")
        if fine in pairs:
            raise HierarchyError(
                f"line {lineno}: duplicate fine index {fine} "
                f"(first declared on line {line_of_fine[fine]})"
            )
        pairs[fine] = coarse
        line_of_fine[fine] = lineno
        line_of_coarse_first_use.setdefault(coarse, lineno)
    if not pairs:
        raise HierarchyError("empty hierarchy file: no '<fine> <coarse>' lines found")
    num_fine = len(pairs)
    for fine, lineno in line_of_fine.items():
        if fine >= num_fine:
            raise HierarchyError(
                f"line {lineno}: fine index {fine} out of range "
                f"(file declares {num_fine} fine classes, so indices must cover "
                f"0..{num_fine - 1})"
            )
    used = sorted(set(pairs.values()))
    if used != list(range(len(used))):
        missing = next(c for c in range(max(used) + 1) if c not in set(used))
        culprit = min(
            lineno for c, lineno in line_of_coarse_first_use.items() if c > missing
        )
        raise HierarchyError(
            f"line {culprit}: coarse indices not contiguous from 0 "
            f"(index {missing} is never used)"
        )
    return LabelHierarchy.from_fine_to_coarse([pairs[f] for f in range(num_fine)])


def serialize_hierarchy(h: LabelHierarchy) -> str:
    """Inverse of parse_hierarchy: one '<fine> <coarse>' line per fine class."""
    lines = [f"{f} {h.fine_to_coarse[f]}" for f in range(h.num_fine)]
    return "\n".join(lines) + "\n"


def load_hierarchy(path: str) -> LabelHierarchy:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())
