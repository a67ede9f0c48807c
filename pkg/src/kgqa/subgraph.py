"""Per-hop subgraph extraction and reference activation matrices."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .catalog import Candidates
from .store import KnowledgeGraph


class Unanswerable(Exception):
    """A hop cannot produce answers; the question gets an empty answer."""


class EmptySubgraph(Unanswerable):
    pass


class NoActivation(Unanswerable):
    pass


@dataclass
class Subgraph:
    """``k`` symmetric 0/1 adjacency matrices over ``n`` local entities.

    ``adjacency[j]`` belongs to ``seed_properties[j]``; local entity ``i`` is
    global term ``local_entities[i]``.
    """

    local_entities: np.ndarray
    seed_properties: np.ndarray
    adjacency: list[sp.csr_matrix]
    triple_indices: np.ndarray

    @property
    def n(self) -> int:
        return int(self.local_entities.size)

    @property
    def k(self) -> int:
        return int(self.seed_properties.size)

    @property
    def nnz(self) -> int:
        return sum(int(m.nnz) for m in self.adjacency)

    def local_index(self, terms) -> np.ndarray:
        """Local positions of ``terms``; -1 where a term is not in the subgraph."""
        terms = np.asarray(terms, dtype=np.int64)
        if self.n == 0:
            return np.full(terms.shape, -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.local_entities, terms), self.n - 1)
        return np.where(self.local_entities[pos] == terms, pos, -1)

    def dump(self, kg: KnowledgeGraph) -> str:
        """Line-oriented debug listing of entities, properties and nonzero cells."""
        lines = [f"subgraph n={self.n} k={self.k} nnz={self.nnz}"]
        for i, term in enumerate(self.local_entities.tolist()):
            lines.append(f"entity\t{i}\t{kg.uri_of(term)}")
        for j, term in enumerate(self.seed_properties.tolist()):
            lines.append(f"property\t{j}\t{kg.uri_of(term)}")
        for j, mat in enumerate(self.adjacency):
            coo = mat.tocoo()
            for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
                if r < c:
                    lines.append(f"edge\t{j}\t{r}\t{c}\t{v:g}")
        return "\n".join(lines)


@dataclass
class ActivationInputs:
    """Entity-reference (l x n) and property-reference (m x k) confidences."""

    E: np.ndarray
    P: np.ndarray
    carried: bool = False

    @property
    def l(self) -> int:  # noqa: E743
        return int(self.E.shape[0])

    @property
    def m(self) -> int:
        return int(self.P.shape[0])


def _terms(lists: Sequence[Candidates]) -> np.ndarray:
    return np.unique(np.fromiter((c.term for cands in lists for c in cands), dtype=np.int64))


def extract(kg: KnowledgeGraph, entity_refs: Sequence[Candidates],
            property_refs: Sequence[Candidates], seeds=()) -> Subgraph:
    """Collect every triple touching a candidate (or seed) entity through a
    candidate property and materialize one symmetric matrix per property.

    Parallel and reversed edges collapse to weight 1; self loops are dropped.
    Raises :class:`EmptySubgraph` when no triple qualifies.
    """
    entities = np.union1d(_terms(entity_refs), np.asarray(list(seeds), dtype=np.int64))
    properties = _terms(property_refs)
    idx = kg.triple_indices_with(entities, properties)
    if idx.size == 0:
        raise EmptySubgraph("no triples match the hop's entities and properties")
    s, p, o = kg.subjects[idx], kg.predicates[idx], kg.objects[idx]

    local = np.union1d(s, o)
    n = local.size
    ls, lo = np.searchsorted(local, s), np.searchsorted(local, o)
    prop_of = np.searchsorted(properties, p)
    keep = ls != lo
    ls, lo, prop_of = ls[keep], lo[keep], prop_of[keep]

    adjacency = []
    for j in range(properties.size):
        sel = prop_of == j
        rows = np.concatenate([ls[sel], lo[sel]])
        cols = np.concatenate([lo[sel], ls[sel]])
        mat = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        mat.sum_duplicates()
        mat.data[:] = 1.0
        mat.sort_indices()
        adjacency.append(mat)
    return Subgraph(local, properties, adjacency, idx)


def build_activations(entity_refs: Sequence[Candidates], property_refs: Sequence[Candidates],
                      sg: Subgraph, carry: Mapping[int, float] | None = None) -> ActivationInputs:
    """One E row per entity reference (plus one for carried answers), one P row
    per property reference.  Candidates outside the subgraph contribute 0.
    """
    def fill(row: np.ndarray, positions: np.ndarray, values: np.ndarray) -> np.ndarray:
        ok = positions >= 0
        np.maximum.at(row, positions[ok], values[ok])
        return row

    rows = []
    for cands in entity_refs:
        terms = np.fromiter((c.term for c in cands), dtype=np.int64, count=len(cands))
        confs = np.fromiter((c.confidence for c in cands), dtype=np.float64, count=len(cands))
        rows.append(fill(np.zeros(sg.n), sg.local_index(terms), confs))
    carried = bool(carry)
    if carried:
        terms = np.fromiter(carry.keys(), dtype=np.int64, count=len(carry))
        vals = np.fromiter(carry.values(), dtype=np.float64, count=len(carry))
        rows.append(fill(np.zeros(sg.n), sg.local_index(terms), vals))
    E = np.vstack(rows) if rows else np.zeros((0, sg.n))

    P = np.zeros((len(property_refs), sg.k))
    for j, cands in enumerate(property_refs):
        for c in cands:
            col = np.searchsorted(sg.seed_properties, c.term)
            if col < sg.k and sg.seed_properties[col] == c.term:
                P[j, col] = max(P[j, col], c.confidence)

    if not E.any() or not P.any():
        raise NoActivation("no reference activates the subgraph")
    return ActivationInputs(E, P, carried)
