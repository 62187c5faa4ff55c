"""Segmentation lattices and the exhaustive enumeration oracle."""

from __future__ import annotations

from dataclasses import dataclass

from .core import DPEError, Segmentation, Vocabulary


class TooManySegmentations(DPEError):
    pass


@dataclass(frozen=True)
class Lattice:
    """DAG over positions ``0..T`` of a string.

    ``incoming[k]`` lists ``(j, subword_id)`` for every vocabulary entry equal
    to ``text[j:k]``, sorted by ascending ``j``. ``incoming[0]`` is empty.
    """

    text: str
    incoming: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def T(self) -> int:
        return len(self.text)

    def num_edges(self) -> int:
        return sum(len(e) for e in self.incoming)

    def edges(self):
        for k, inc in enumerate(self.incoming):
            for j, w in inc:
                yield j, k, w

    def outgoing(self) -> list[list[tuple[int, int]]]:
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.T + 1)]
        for j, k, w in self.edges():
            out[j].append((k, w))
        return out

    def reachable(self) -> list[bool]:
        reach = [False] * (self.T + 1)
        reach[0] = True
        for k in range(1, self.T + 1):
            reach[k] = any(reach[j] for j, _ in self.incoming[k])
        return reach

    def first_unreachable(self) -> int | None:
        for k, ok in enumerate(self.reachable()):
            if not ok:
                return k
        return None

    def count_paths(self) -> int:
        counts = [0] * (self.T + 1)
        counts[0] = 1
        for k in range(1, self.T + 1):
            counts[k] = sum(counts[j] for j, _ in self.incoming[k])
        return counts[self.T]

    def to_dot(self, vocab: Vocabulary | None = None) -> str:
        lines = ["digraph lattice {", "  rankdir=LR;"]
        for k in range(self.T + 1):
            lines.append(f"  n{k} [label=\"{k}\"];")
        for j, k, w in self.edges():
            label = vocab.lookup(w) if vocab is not None else self.text[j:k]
            label = label.replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f"  n{j} -> n{k} [label=\"{label}\"];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_lattice(y: str, vocab: Vocabulary) -> Lattice:
    incoming = [()]
    for k in range(1, len(y) + 1):
        incoming.append(tuple(reversed(vocab.matches_ending_at(y, k))))
    return Lattice(y, tuple(incoming))


def enumerate_segmentations(y: str, vocab: Vocabulary, limit: int = 100_000) -> list[Segmentation]:
    """All valid segmentations of ``y`` in lexicographic order of ``z``.

    Independent of :func:`build_lattice`: candidate spans are checked by
    direct dictionary membership.
    """
    T = len(y)
    m = vocab.max_len
    out: list[Segmentation] = []

    def extend(z: list[int]) -> None:
        a = z[-1]
        if a == T:
            if len(out) >= limit:
                raise TooManySegmentations(f"{y!r} has more than {limit} segmentations")
            out.append(tuple(z))
            return
        for b in range(a + 1, min(T, a + m) + 1):
            if y[a:b] in vocab:
                z.append(b)
                extend(z)
                z.pop()

    extend([0])
    return out
