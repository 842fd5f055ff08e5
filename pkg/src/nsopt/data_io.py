"""Dataset ingestion: LIBSVM sparse text format, splits, synthetic instances."""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import ceil_exact


class ParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Dataset:
    """Sparse feature rows with labels mapped to +/-1.

    ``features`` is CSR with strictly increasing column indices per row;
    ``label_alphabet`` records the distinct labels of the source text in
    ascending order, before mapping.
    """

    features: sp.csr_matrix
    labels: np.ndarray
    label_alphabet: tuple[float, ...]

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("row/label count mismatch")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        a, b = self.features.tocsr(), other.features.tocsr()
        return (
            self.label_alphabet == other.label_alphabet
            and a.shape == b.shape
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.label_alphabet)


def _map_labels(raw: np.ndarray, line_of_first: dict) -> tuple[np.ndarray, tuple[float, ...]]:
    alphabet = tuple(sorted(set(raw.tolist())))
    if len(alphabet) > 2:
        first_bad = min(line_of_first[lab] for lab in alphabet[2:])
        raise ParseError(first_bad, f"more than 2 distinct labels: {alphabet}")
    if len(alphabet) == 2:
        mapped = np.where(raw == alphabet[0], -1.0, 1.0)
        return mapped, alphabet
    # single label: only meaningful if it already is -1 or +1
    if alphabet and alphabet[0] in (-1.0, 1.0):
        return raw.copy(), alphabet
    if alphabet:
        raise ParseError(line_of_first[alphabet[0]], f"cannot map single label {alphabet[0]} to -1/+1")
    return raw.copy(), alphabet


def parse_libsvm(source, n_cols: int | None = None) -> Dataset:
    """Parse LIBSVM text (``label idx:value ...`` per line, 1-based indices).

    ``source`` may be a string or a text stream.  Empty lines are skipped.
    Indices must be strictly increasing within a row; rows with no features
    are all-zero vectors.  Two-symbol label alphabets map to -1/+1, the
    smaller symbol becoming -1.  Malformed input raises ParseError with the
    offending line number.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    raw_labels: list[float] = []
    line_of_first: dict[float, int] = {}
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_index = 0
    for line_no, line in enumerate(source, start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"non-numeric label {tokens[0]!r}") from None
        raw_labels.append(label)
        line_of_first.setdefault(label, line_no)
        prev = 0
        for token in tokens[1:]:
            idx_str, sep, val_str = token.partition(":")
            if not sep:
                raise ParseError(line_no, f"malformed feature token {token!r}")
            try:
                idx = int(idx_str)
            except ValueError:
                raise ParseError(line_no, f"non-integer feature index in {token!r}") from None
            try:
                val = float(val_str)
            except ValueError:
                raise ParseError(line_no, f"non-numeric feature value in {token!r}") from None
            if idx < 1:
                raise ParseError(line_no, f"feature index {idx} must be >= 1")
            if idx <= prev:
                raise ParseError(line_no, f"feature indices must be strictly increasing, got {idx} after {prev}")
            prev = idx
            indices.append(idx - 1)
            values.append(val)
            max_index = max(max_index, idx)
        indptr.append(len(indices))
    if n_cols is None:
        n_cols = max_index
    elif n_cols < max_index:
        raise ValueError(f"n_cols={n_cols} smaller than max feature index {max_index}")
    labels_arr = np.asarray(raw_labels, dtype=np.float64)
    mapped, alphabet = _map_labels(labels_arr, line_of_first)
    features = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(raw_labels), n_cols),
    )
    return Dataset(features=features, labels=mapped, label_alphabet=alphabet)


def serialize_libsvm(dataset: Dataset) -> str:
    """Render a dataset back to LIBSVM text (17 significant digits per value)."""
    csr = dataset.features.tocsr()
    lines = []
    for i in range(dataset.n_rows):
        parts = [f"{int(dataset.labels[i]):+d}"]
        start, end = csr.indptr[i], csr.indptr[i + 1]
        for j in range(start, end):
            parts.append(f"{csr.indices[j] + 1}:{format(csr.data[j], '.17g')}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_libsvm(path, n_cols: int | None = None) -> Dataset:
    """Load a plain or gzip-compressed (by ``.gz`` extension) LIBSVM file."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return parse_libsvm(fh, n_cols=n_cols)


def save_libsvm(dataset: Dataset, path) -> None:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        fh.write(serialize_libsvm(dataset))


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic seeded split; train gets ``ceil(train_fraction * N)`` rows.

    The two parts are disjoint, exhaustive, and keep their rows in original
    order.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = dataset.n_rows
    n_train = ceil_exact(train_fraction * n)
    if n_train < 1 or n - n_train < 1:
        raise ValueError(f"split of {n} rows at fraction {train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    train_rows = np.sort(perm[:n_train])
    test_rows = np.sort(perm[n_train:])
    return dataset.take(train_rows), dataset.take(test_rows)


def synthetic_blobs(
    n_rows: int,
    n_cols: int,
    seed: int,
    separation: float = 5.0,
    noise: float = 1.0,
) -> Dataset:
    """Two margin-separated Gaussian blobs along the first coordinate axis.

    Rows are drawn as ``z * separation * e1 + noise * N(0, I)`` with labels
    ``z`` split evenly between the classes.
    """
    if n_rows < 2 or n_cols < 1:
        raise ValueError("need at least 2 rows and 1 column")
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(n_rows) < 0.5, -1.0, 1.0)
    feats = noise * rng.standard_normal((n_rows, n_cols))
    feats[:, 0] += labels * separation
    return Dataset(
        features=sp.csr_matrix(feats),
        labels=labels,
        label_alphabet=(-1.0, 1.0),
    )
