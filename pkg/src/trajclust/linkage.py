"""Agglomerative Ward linkage on a precomputed dissimilarity matrix.

Two variants of the Lance-Williams recurrence are supported:

* ``"d"``  applies the recurrence to the dissimilarities as given;
* ``"d2"`` (default) applies it to squared dissimilarities and reports
  the square roots of the merge values as heights.

Both use the same update for merging clusters a and b:

    d(ab, k) = ((s_a + s_k) * d(a, k) + (s_b + s_k) * d(b, k)
                - s_k * d(a, b)) / (s_a + s_b + s_k)

``ward_linkage`` runs the nearest-neighbor-chain algorithm in O(n^2)
time with O(n) memory beyond the matrix. ``naive_ward_oracle`` is the
reference implementation: a direct quadratic scan per step with the
documented tie rule. On tie-free input the two produce the same tree;
the chain breaks ties toward smaller slot indices, which may deviate
from the oracle's global rule when exact ties occur.

Node ids: leaves are 0..n-1, internal nodes n..2n-2 in merge order.
Merge heights are non-decreasing for Ward; a violation is recorded as a
diagnostic flag on the tree, not raised.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .distance import CondensedDistanceMatrix, pair_index_any
from .errors import SchemaError, ValidationError

VARIANTS = ("d", "d2")


@dataclass
class MergeTree:
    """Merge list of an agglomerative clustering over n leaves."""

    n: int
    left: np.ndarray  # (n-1,) node ids, left < right
    right: np.ndarray
    height: np.ndarray
    size: np.ndarray  # leaves under the merged node
    variant: str = ""
    monotone: bool = True

    def __post_init__(self):
        n = self.n
        if n < 2:
            raise ValidationError("a merge tree needs at least two leaves")
        for name in ("left", "right", "height", "size"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n - 1,):
                raise ValidationError(f"{name} must have length n-1={n - 1}")
            setattr(self, name, arr)
        if np.any(self.left >= self.right):
            raise ValidationError("merge rows must satisfy left < right")
        self.monotone = bool(np.all(np.diff(self.height) >= -1e-12))

    def merges(self):
        for t in range(self.n - 1):
            yield (
                int(self.left[t]),
                int(self.right[t]),
                float(self.height[t]),
                int(self.size[t]),
            )


@dataclass
class Partition:
    """Flat clustering: labels in 0..k-1, every cluster non-empty."""

    k: int
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        present = np.unique(self.labels)
        if present.size != self.k or present[0] != 0 or present[-1] != self.k - 1:
            raise ValidationError("labels must cover 0..k-1 with no empty cluster")

    @property
    def n(self) -> int:
        return self.labels.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def _lance_williams(d_ak, d_bk, d_ab, s_a, s_b, s_k):
    # written once so the chain and the oracle share bit-identical arithmetic
    return ((s_a + s_k) * d_ak + (s_b + s_k) * d_bk - s_k * d_ab) / (s_a + s_b + s_k)


def _working_values(matrix: CondensedDistanceMatrix, variant: str, copy: bool):
    if variant not in VARIANTS:
        raise ValidationError(f"unknown ward variant {variant!r}, expected one of {VARIANTS}")
    values = matrix.values
    if copy:
        values = values.copy()
    if variant == "d2":
        np.square(values, out=values)
    return values


def ward_linkage(
    matrix: CondensedDistanceMatrix, variant: str = "d2", copy: bool = True
) -> MergeTree:
    """Ward linkage via the nearest-neighbor chain.

    With ``copy=False`` the matrix values are destroyed in place; use it
    only when the matrix is recoverable (e.g. already written to disk).
    """
    n = matrix.n
    values = _working_values(matrix, variant, copy)

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    # discovery-order merge log over slots; a merged cluster lives on in
    # the smaller slot of the pair
    slot_a = np.empty(n - 1, dtype=np.int64)
    slot_b = np.empty(n - 1, dtype=np.int64)
    raw_height = np.empty(n - 1)
    chain: list[int] = []

    for t in range(n - 1):
        if not chain:
            chain.append(int(np.argmax(active)))
        while True:
            x = chain[-1]
            ks = np.flatnonzero(active)
            ks = ks[ks != x]
            d = values[pair_index_any(n, x, ks)]
            pos = int(np.argmin(d))
            y, dy = int(ks[pos]), float(d[pos])
            if len(chain) >= 2:
                # prefer the predecessor on ties so reciprocal pairs terminate
                p = chain[-2]
                if float(values[pair_index_any(n, x, p)]) == dy:
                    y = p
            if len(chain) >= 2 and y == chain[-2]:
                chain.pop()
                chain.pop()
                a, b = (x, y) if x < y else (y, x)
                ks = np.flatnonzero(active)
                ks = ks[(ks != a) & (ks != b)]
                if ks.size:
                    ia = pair_index_any(n, a, ks)
                    ib = pair_index_any(n, b, ks)
                    values[ia] = _lance_williams(
                        values[ia], values[ib], dy, sizes[a], sizes[b], sizes[ks]
                    )
                sizes[a] += sizes[b]
                active[b] = False
                slot_a[t], slot_b[t], raw_height[t] = a, b, dy
                break
            chain.append(y)

    return _canonical_tree(n, slot_a, slot_b, raw_height, variant)


def _canonical_tree(n, slot_a, slot_b, raw_height, variant) -> MergeTree:
    """Stable-sort discovered merges by height and relabel node ids.

    Dependent merges can never sort past each other: a merge consuming
    another's result has height >= that result's height, and the stable
    sort preserves discovery order on equal heights.
    """
    height = np.sqrt(raw_height) if variant == "d2" else raw_height.copy()
    order = np.argsort(height, kind="stable")

    node_of_slot = np.arange(n, dtype=np.int64)
    node_size = np.ones(2 * n - 1, dtype=np.int64)
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    size = np.empty(n - 1, dtype=np.int64)
    out_height = np.empty(n - 1)
    for t, src in enumerate(order):
        a, b = int(slot_a[src]), int(slot_b[src])
        la, lb = node_of_slot[a], node_of_slot[b]
        l, r = (la, lb) if la < lb else (lb, la)
        new = n + t
        node_size[new] = node_size[l] + node_size[r]
        left[t], right[t], size[t] = l, r, node_size[new]
        out_height[t] = height[src]
        node_of_slot[a] = new  # a < b is the surviving slot
    return MergeTree(
        n=n, left=left, right=right, height=out_height, size=size, variant=variant
    )


def naive_ward_oracle(matrix: CondensedDistanceMatrix, variant: str = "d2") -> MergeTree:
    """Reference O(n^3) agglomeration over the full working matrix.

    Each step scans every active pair, merges the minimum, and breaks
    exact ties by the smallest (left node id, right node id) pair.
    """
    n = matrix.n
    work = np.full((n, n), np.inf)
    i, j = np.triu_indices(n, k=1)
    vals = _working_values(matrix, variant, copy=True)
    work[i, j] = vals
    work[j, i] = vals

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    node_of_slot = np.arange(n, dtype=np.int64)
    node_size = np.ones(2 * n - 1, dtype=np.int64)
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    size = np.empty(n - 1, dtype=np.int64)
    raw_height = np.empty(n - 1)

    for t in range(n - 1):
        slots = np.flatnonzero(active)
        sub = work[np.ix_(slots, slots)]
        iu, ju = np.triu_indices(slots.size, k=1)
        dmin = float(sub[iu, ju].min())
        hits = np.flatnonzero(sub[iu, ju] == dmin)
        best = None
        for h in hits:
            a, b = int(slots[iu[h]]), int(slots[ju[h]])
            la, lb = node_of_slot[a], node_of_slot[b]
            key = (min(la, lb), max(la, lb))
            if best is None or key < best[0]:
                best = (key, a, b)
        (l, r), a, b = best[0], best[1], best[2]
        if a > b:
            a, b = b, a

        ks = np.flatnonzero(active)
        ks = ks[(ks != a) & (ks != b)]
        if ks.size:
            new_row = _lance_williams(
                work[a, ks], work[b, ks], dmin, sizes[a], sizes[b], sizes[ks]
            )
            work[a, ks] = new_row
            work[ks, a] = new_row
        sizes[a] += sizes[b]
        active[b] = False

        new = n + t
        node_size[new] = node_size[l] + node_size[r]
        left[t], right[t], raw_height[t], size[t] = l, r, dmin, node_size[new]
        node_of_slot[a] = new

    height = np.sqrt(raw_height) if variant == "d2" else raw_height
    return MergeTree(
        n=n, left=left, right=right, height=height, size=size, variant=variant
    )


def cut(tree: MergeTree, k: int) -> Partition:
    """Flat partition from undoing the last k-1 merges.

    Cluster labels are assigned by the order of each cluster's smallest
    leaf index, so the labeling is deterministic.
    """
    n = tree.n
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in [1, {n}], got {k}")
    parent = np.arange(2 * n - 1, dtype=np.int64)
    for t in range(n - k):
        node = n + t
        parent[tree.left[t]] = node
        parent[tree.right[t]] = node

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    roots = np.array([find(i) for i in range(n)], dtype=np.int64)
    label_of: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):  # first appearance = smallest leaf of the cluster
        r = int(roots[i])
        if r not in label_of:
            label_of[r] = len(label_of)
        labels[i] = label_of[r]
    if len(label_of) != k:
        raise ValidationError(f"cut produced {len(label_of)} clusters, expected {k}")
    return Partition(k=k, labels=labels)


def write_tree(tree: MergeTree, path) -> None:
    """CSV export: merge_index,left,right,height,size."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["merge_index", "left", "right", "height", "size"])
        for t, (l, r, h, s) in enumerate(tree.merges()):
            w.writerow([t, l, r, repr(h), s])


def read_tree(path, variant: str = "") -> MergeTree:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = ("merge_index", "left", "right", "height", "size")
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in need):
            raise SchemaError(f"{path}: expected columns {need}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no merge rows")
    n = len(rows) + 1
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    height = np.empty(n - 1)
    size = np.empty(n - 1, dtype=np.int64)
    try:
        for row in rows:
            t = int(row["merge_index"])
            left[t] = int(row["left"])
            right[t] = int(row["right"])
            height[t] = float(row["height"])
            size[t] = int(row["size"])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed merge row ({exc})") from None
    return MergeTree(n=n, left=left, right=right, height=height, size=size, variant=variant)
