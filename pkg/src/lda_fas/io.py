"""CSV / JSON artifact readers and writers.

Floats are written with ``repr`` so they round-trip exactly.  Every writer
goes through a temporary file in the destination directory followed by
``os.replace``, so a reader never sees a half-written artifact.
"""

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .lda_head import PrototypeBank
from .model import MlpParams
from .synthdata import SampleSet


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise ConfigurationError(f"empty CSV file: {path}") from exc
        return header, [row for row in reader if row]


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"missing input file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

SAMPLE_TAIL = ("y", "spoof_type", "illum", "cluster")


def write_samples(path, data: SampleSet) -> Path:
    header = [f"x{i}" for i in range(data.x.shape[1])] + list(SAMPLE_TAIL)
    rows = ([*x, y, st, il, c] for x, y, st, il, c in
            zip(data.x, data.y, data.spoof_type, data.illum, data.cluster))
    return write_csv(path, header, rows)


def read_samples(path) -> SampleSet:
    header, rows = read_csv(path)
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    try:
        tail = [header.index(h) for h in SAMPLE_TAIL]
    except ValueError as exc:
        raise ConfigurationError(f"{path}: samples CSV needs columns x*, {', '.join(SAMPLE_TAIL)}") from exc
    try:
        arr = np.array([[float(r[i]) for i in xcols] for r in rows], dtype=np.float64).reshape(len(rows), len(xcols))
        ints = np.array([[int(r[i]) for i in tail] for r in rows], dtype=np.int64).reshape(len(rows), 4)
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"{path}: malformed samples CSV ({exc})") from exc
    return SampleSet(arr, ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3])


# ---------------------------------------------------------------------------
# prototype bank
# ---------------------------------------------------------------------------

CLASS_LABELS = ("live", "spoof")


def write_bank(path, bank: PrototypeBank) -> Path:
    header = ["class", "index"] + [f"c{i}" for i in range(bank.dim)]
    rows = []
    for j, name in enumerate(CLASS_LABELS):
        rows += [[name, r, *vec] for r, vec in enumerate(bank[j])]
    return write_csv(path, header, rows)


def read_bank(path) -> PrototypeBank:
    header, rows = read_csv(path)
    if header[:2] != ["class", "index"]:
        raise ConfigurationError(f"{path}: bank CSV must start with class,index")
    groups = {name: [] for name in CLASS_LABELS}
    try:
        for row in rows:
            groups[row[0]].append((int(row[1]), [float(v) for v in row[2:]]))
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed bank row ({exc})") from exc
    if not groups["live"] or not groups["spoof"]:
        raise ConfigurationError(f"{path}: bank needs at least one live and one spoof prototype")
    vecs = [np.array([v for _, v in sorted(groups[name])]) for name in CLASS_LABELS]
    return PrototypeBank(*vecs)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def write_model(path, params: MlpParams) -> Path:
    return write_json(path, params.to_dict())


def read_model(path) -> MlpParams:
    d = read_json(path)
    try:
        return MlpParams.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed model file ({exc})") from exc
