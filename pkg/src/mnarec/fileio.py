"""Readers and writers for triplet files, matrices, models, configs and reports.

External rating files hold ``user item rating [timestamp]`` records with
arbitrary ids (tab or whitespace separated for ``ml100k-tsv``, comma separated
for ``csv``). They are remapped to dense 0-based indices.

Internal files start with a ``# mnarec <kind> U I`` header followed by
``user<TAB>item<TAB>value`` lines using 0-based indices. ``kind`` is
``matrix`` (every cell present) or ``observations`` (a subset).

Model files::

    pmfmodel v1 U I d
    c
    a_1 ... a_U
    b_1 ... b_I
    d lines of U values      (user factors, one line per latent dimension)
    d lines of I values      (item factors, one line per latent dimension)

Numbers are written with 17 significant digits, so a round trip is exact.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import ObservationSample
from .exceptions import FormatError, VersionMismatchError
from .factorization import FactorModel

MODEL_MAGIC = "pmfmodel"
MODEL_VERSION = "v1"


@dataclass(frozen=True)
class IdMapping:
    """Original user and item ids in dense-index order."""

    users: Tuple[str, ...]
    items: Tuple[str, ...]

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.users), len(self.items)

    def user_index(self) -> Dict[str, int]:
        return {u: k for k, u in enumerate(self.users)}

    def item_index(self) -> Dict[str, int]:
        return {i: k for k, i in enumerate(self.items)}


def _id_sort_key(value: str):
    try:
        return (0, int(value), value)
    except ValueError:
        return (1, 0, value)


def _split_record(line: str, fmt: str) -> List[str]:
    if fmt == "csv":
        return [f.strip() for f in next(csv.reader([line]))]
    if fmt == "ml100k-tsv":
        return line.split()
    raise ValueError(f"unknown triplet format {fmt!r}")


def _read_records(path, fmt):
    records = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split_record(line, fmt)
            if len(fields) not in (3, 4):
                raise FormatError(f"expected 3 or 4 fields, got {len(fields)}", line=lineno, path=path)
            user, item, rating = fields[:3]
            try:
                value = float(rating)
            except ValueError:
                raise FormatError(f"rating {rating!r} is not a number", line=lineno, path=path) from None
            if not np.isfinite(value):
                raise FormatError(f"rating {rating!r} is not finite", line=lineno, path=path)
            records.append((lineno, user, item, value))
    if not records:
        raise FormatError("no rating records found", path=path)
    return records


def ingest_triplets(path, fmt: str = "ml100k-tsv",
                    mapping: Optional[IdMapping] = None) -> Tuple[ObservationSample, IdMapping]:
    """Parse a rating file into an observation sample.

    With ``mapping`` given, ids are translated through it (unknown ids are an
    error), so a test file lines up with the training file it belongs to.
    Otherwise sorted unique ids define the dense indices.
    """
    if fmt == "tsv":
        fmt = "ml100k-tsv"
    records = _read_records(path, fmt)
    if mapping is None:
        users = tuple(sorted({r[1] for r in records}, key=_id_sort_key))
        items = tuple(sorted({r[2] for r in records}, key=_id_sort_key))
        mapping = IdMapping(users, items)
    uidx, iidx = mapping.user_index(), mapping.item_index()
    seen = {}
    u_out, i_out, r_out = [], [], []
    for lineno, user, item, value in records:
        if user not in uidx:
            raise FormatError(f"unknown user id {user!r}", line=lineno, path=path)
        if item not in iidx:
            raise FormatError(f"unknown item id {item!r}", line=lineno, path=path)
        key = (uidx[user], iidx[item])
        if key in seen:
            raise FormatError(f"duplicate (user, item) pair ({user}, {item}), first seen on line {seen[key]}",
                              line=lineno, path=path)
        seen[key] = lineno
        u_out.append(key[0])
        i_out.append(key[1])
        r_out.append(value)
    return ObservationSample(mapping.shape, u_out, i_out, r_out), mapping


def joint_mapping(paths: Sequence, fmt: str = "ml100k-tsv") -> IdMapping:
    """Id mapping covering every user and item in several rating files."""
    fmt = "ml100k-tsv" if fmt == "tsv" else fmt
    records = [r for path in paths for r in _read_records(path, fmt)]
    return IdMapping(tuple(sorted({r[1] for r in records}, key=_id_sort_key)),
                     tuple(sorted({r[2] for r in records}, key=_id_sort_key)))


def write_mapping(path, mapping: IdMapping) -> None:
    with open(path, "w") as fh:
        fh.write("# mnarec idmap\n")
        for k, u in enumerate(mapping.users):
            fh.write(f"user\t{k}\t{u}\n")
        for k, i in enumerate(mapping.items):
            fh.write(f"item\t{k}\t{i}\n")


def read_mapping(path) -> IdMapping:
    users: Dict[int, str] = {}
    items: Dict[int, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[0] not in ("user", "item"):
                raise FormatError("malformed id mapping record", line=lineno, path=path)
            try:
                idx = int(parts[1])
            except ValueError:
                raise FormatError("malformed index", line=lineno, path=path) from None
            (users if parts[0] == "user" else items)[idx] = parts[2]
    if sorted(users) != list(range(len(users))) or sorted(items) != list(range(len(items))):
        raise FormatError("id mapping indices are not contiguous", path=path)
    return IdMapping(tuple(users[k] for k in range(len(users))), tuple(items[k] for k in range(len(items))))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_observations(path, obs: ObservationSample) -> None:
    with open(path, "w") as fh:
        fh.write(f"# mnarec observations {obs.shape[0]} {obs.shape[1]}\n")
        for u, i, r in zip(obs.users.tolist(), obs.items.tolist(), obs.ratings.tolist()):
            fh.write(f"{u}\t{i}\t{_fmt(r)}\n")


def write_matrix(path, values) -> None:
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    n_users, n_items = values.shape
    with open(path, "w") as fh:
        fh.write(f"# mnarec matrix {n_users} {n_items}\n")
        for u in range(n_users):
            row = values[u]
            fh.writelines(f"{u}\t{i}\t{_fmt(row[i])}\n" for i in range(n_items))


def _read_internal(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[:2] != ["#", "mnarec"] or header[2] not in ("matrix", "observations"):
            raise FormatError("missing '# mnarec <matrix|observations> U I' header", line=1, path=path)
        try:
            shape = (int(header[3]), int(header[4]))
        except ValueError:
            raise FormatError("bad dims in header", line=1, path=path) from None
        users, items, values = [], [], []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError("expected user<TAB>item<TAB>value", line=lineno, path=path)
            try:
                users.append(int(parts[0]))
                items.append(int(parts[1]))
                values.append(float(parts[2]))
            except ValueError:
                raise FormatError("unparseable record", line=lineno, path=path) from None
    return header[2], shape, np.array(users, dtype=np.int64), np.array(items, dtype=np.int64), np.array(values)


def is_internal_file(path) -> bool:
    with open(path) as fh:
        return fh.readline().startswith("# mnarec ")


def read_observations(path) -> ObservationSample:
    """Read an internal observation (or matrix) file as an observation sample."""
    _, shape, users, items, values = _read_internal(path)
    try:
        return ObservationSample(shape, users, items, values)
    except (ValueError, IndexError) as err:
        raise FormatError(str(err), path=path) from None


def read_matrix(path) -> np.ndarray:
    kind, shape, users, items, values = _read_internal(path)
    if kind != "matrix":
        raise FormatError("expected a matrix file", line=1, path=path)
    if users.size != shape[0] * shape[1]:
        raise FormatError(f"matrix file has {users.size} cells, expected {shape[0] * shape[1]}", path=path)
    if users.min() < 0 or users.max() >= shape[0] or items.min() < 0 or items.max() >= shape[1]:
        raise FormatError("cell index out of range", path=path)
    out = np.full(shape, np.nan)
    out[users, items] = values
    if np.isnan(out).any():
        raise FormatError("matrix file has duplicate or missing cells", path=path)
    return out


def save_model(path, model: FactorModel) -> None:
    n_users, n_items = model.shape
    d = model.rank
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION} {n_users} {n_items} {d}", _fmt(model.global_offset),
             " ".join(map(_fmt, model.user_offsets)), " ".join(map(_fmt, model.item_offsets))]
    lines += [" ".join(map(_fmt, row)) for row in model.user_factors.T]
    lines += [" ".join(map(_fmt, row)) for row in model.item_factors.T]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> FactorModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty model file", path=path)
    header = lines[0].split()
    if len(header) != 5 or header[0] != MODEL_MAGIC or header[1] != MODEL_VERSION:
        raise VersionMismatchError(f"unsupported model header {lines[0]!r}", line=1, path=path)
    try:
        n_users, n_items, d = (int(x) for x in header[2:])
    except ValueError:
        raise FormatError("bad dims in model header", line=1, path=path) from None
    if d < 1:
        raise FormatError(f"rank must be >= 1, got {d}", line=1, path=path)
    if n_users < 1 or n_items < 1:
        raise FormatError("model dims must be >= 1", line=1, path=path)
    expected = 4 + 2 * d
    if len(lines) < expected:
        raise FormatError(f"truncated model file: {len(lines)} lines, expected {expected}", path=path)

    def row(k, n):
        try:
            vals = np.array([float(x) for x in lines[k].split()])
        except ValueError:
            raise FormatError("unparseable number", line=k + 1, path=path) from None
        if vals.size != n:
            raise FormatError(f"expected {n} values, got {vals.size}", line=k + 1, path=path)
        return vals

    c = row(1, 1)[0]
    a = row(2, n_users)
    b = row(3, n_items)
    V = np.stack([row(4 + k, n_users) for k in range(d)]).T.copy()
    W = np.stack([row(4 + d + k, n_items) for k in range(d)]).T.copy()
    return FactorModel(V, W, a, b, c)


def read_config(path) -> Dict[str, str]:
    """Flat ``key = value`` config; ``#`` starts a comment line."""
    out: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError("expected key=value", line=lineno, path=path)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def read_feature_file(path, mapping: IdMapping, delimiter: Optional[str] = None) -> np.ndarray:
    """Per-pair feature vectors ``user item f1 f2 ...`` into a ``(U, I, F)`` array.

    Every (user, item) cell of the mapping must be present exactly once.
    """
    uidx, iidx = mapping.user_index(), mapping.item_index()
    feats = None
    filled = np.zeros(mapping.shape, dtype=bool)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in (line.split(delimiter) if delimiter else line.replace(",", " ").split())]
            if len(parts) < 3:
                raise FormatError("expected user item feature...", line=lineno, path=path)
            if parts[0] not in uidx or parts[1] not in iidx:
                raise FormatError("unknown user or item id", line=lineno, path=path)
            try:
                vec = np.array([float(x) for x in parts[2:]])
            except ValueError:
                raise FormatError("non-numeric feature", line=lineno, path=path) from None
            if feats is None:
                feats = np.zeros(mapping.shape + (vec.size,))
            if vec.size != feats.shape[2]:
                raise FormatError("inconsistent feature length", line=lineno, path=path)
            u, i = uidx[parts[0]], iidx[parts[1]]
            if filled[u, i]:
                raise FormatError("duplicate feature record", line=lineno, path=path)
            feats[u, i] = vec
            filled[u, i] = True
    if feats is None or not filled.all():
        raise FormatError("feature file does not cover every (user, item) pair", path=path)
    return feats


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row.get(c)) for c in columns])


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if np.isnan(v) else _fmt(v)
    if isinstance(v, np.floating):
        return _csv_value(float(v))
    return v
