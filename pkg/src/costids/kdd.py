"""KDD Cup '99 connection records: parsing, label mapping and feature encoding.

Records are 41 feature fields followed by an attack name (optionally
dot-terminated).  Attack names are grouped into five traffic categories whose
order is fixed package-wide: it indexes cost matrices, confusion matrices and
posterior vectors alike.
"""

from __future__ import annotations

import enum
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError

N_FIELDS = 41
#: protocol_type, service, flag (0-based); everything else is numeric.
CATEGORICAL_FIELDS = (1, 2, 3)
NUMERIC_FIELDS = tuple(i for i in range(N_FIELDS) if i not in CATEGORICAL_FIELDS)

CACHE_FORMAT = "costids-encoded-dataset"
CACHE_VERSION = 1


class ClassLabel(enum.IntEnum):
    """Traffic category. Values are array positions (Normal first)."""

    NORMAL = 0
    PROBE = 1
    DOS = 2
    U2R = 3
    R2L = 4

    @property
    def display(self) -> str:
        return CLASS_NAMES[self]

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        try:
            return _BY_DISPLAY[text.strip().lower()]
        except KeyError:
            raise DataError(f"unknown category {text!r}; expected one of {', '.join(CLASS_NAMES)}") from None


CLASS_NAMES = ("Normal", "Probe", "DoS", "U2R", "R2L")
N_CLASSES = len(CLASS_NAMES)
ATTACK_CLASSES = (ClassLabel.PROBE, ClassLabel.DOS, ClassLabel.U2R, ClassLabel.R2L)
_BY_DISPLAY = {name.lower(): ClassLabel(i) for i, name in enumerate(CLASS_NAMES)}

# Attack names of the 10% training file followed by the 17 that only occur in
# the labelled test file ("corrected").
_DEFAULT_NAMES = {
    ClassLabel.NORMAL: ["normal"],
    ClassLabel.DOS: [
        "back", "land", "neptune", "pod", "smurf", "teardrop",
        "apache2", "mailbomb", "processtable", "udpstorm",
    ],
    ClassLabel.PROBE: ["ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"],
    ClassLabel.R2L: [
        "ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy", "warezclient", "warezmaster",
        "named", "sendmail", "snmpgetattack", "snmpguess", "worm", "xlock", "xsnoop",
    ],
    ClassLabel.U2R: [
        "buffer_overflow", "loadmodule", "perl", "rootkit",
        "httptunnel", "ps", "sqlattack", "xterm",
    ],
}


def normalize_name(label: str) -> str:
    name = label.strip()
    if name.endswith("."):
        name = name[:-1]
    return name.strip().lower()


@dataclass(frozen=True)
class LabelMap:
    """Attack name to :class:`ClassLabel` lookup.

    Unknown names raise :class:`DataError` rather than falling back to a
    default category.
    """

    entries: Mapping[str, ClassLabel]
    source: str = "builtin"

    def __post_init__(self):
        if self.entries.get("normal") is not ClassLabel.NORMAL:
            raise DataError("label map must map 'normal' to Normal")
        for name, label in self.entries.items():
            if name != "normal" and label is ClassLabel.NORMAL:
                raise DataError(f"attack {name!r} mapped to Normal")

    def __getitem__(self, name: str) -> ClassLabel:
        try:
            return self.entries[normalize_name(name)]
        except KeyError:
            raise DataError(f"unmapped attack name {name!r} (label map: {self.source})") from None

    def __contains__(self, name: str) -> bool:
        return normalize_name(name) in self.entries

    @classmethod
    def default(cls) -> "LabelMap":
        entries = {name: label for label, names in _DEFAULT_NAMES.items() for name in names}
        return cls(entries, "builtin")

    @classmethod
    def from_file(cls, path) -> "LabelMap":
        """Read ``attack_name,category`` lines; blank lines and ``#`` comments skipped."""
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 2 or not parts[0]:
                    raise DataError(f"{path}:{lineno}: expected 'attack_name,category'")
                try:
                    entries[normalize_name(parts[0])] = ClassLabel.parse(parts[1])
                except DataError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
        return cls(entries, str(path))


class RawRecord(NamedTuple):
    """One connection as it appears in the file."""

    values: tuple
    label: str


@dataclass(frozen=True)
class RawRecords:
    """Parsed records in column form.

    ``numeric`` holds the 38 numeric fields, ``categorical`` the three string
    fields, ``names`` the attack names (trailing dot removed) and ``labels``
    the resolved :class:`ClassLabel` values.
    """

    numeric: np.ndarray
    categorical: np.ndarray
    names: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def take(self, index) -> "RawRecords":
        index = np.asarray(index)
        return RawRecords(self.numeric[index], self.categorical[index], self.names[index], self.labels[index])

    def record(self, i: int) -> RawRecord:
        values = [None] * N_FIELDS
        for col, pos in enumerate(NUMERIC_FIELDS):
            values[pos] = repr(float(self.numeric[i, col]))
        for col, pos in enumerate(CATEGORICAL_FIELDS):
            values[pos] = self.categorical[i, col]
        return RawRecord(tuple(values), self.names[i])

    @classmethod
    def from_records(cls, records: Iterable[RawRecord], label_map: LabelMap | None = None) -> "RawRecords":
        return records_from_rows([(*r.values, r.label) for r in records], label_map)


def _to_float(text, lineno, pos):
    try:
        value = float(text)
    except ValueError:
        where = f"line {lineno}: " if lineno is not None else ""
        raise DataError(f"{where}non-numeric value {text!r} in numeric field {pos}") from None
    if not np.isfinite(value):
        where = f"line {lineno}: " if lineno is not None else ""
        raise DataError(f"{where}non-finite value {text!r} in field {pos}")
    return value


def _collect(rows, label_map, source="<records>"):
    numeric, categorical, names, labels = [], [], [], []
    intern: dict[str, str] = {}
    for lineno, fields in rows:
        if len(fields) != N_FIELDS + 1:
            raise DataError(f"{source}: line {lineno}: expected {N_FIELDS + 1} fields, found {len(fields)}")
        name = normalize_name(fields[-1])
        if not name:
            raise DataError(f"{source}: line {lineno}: empty label")
        try:
            label = label_map[name]
        except DataError:
            raise DataError(f"{source}: line {lineno}: unmapped attack name {name!r}") from None
        numeric.append([_to_float(fields[p], lineno, p) for p in NUMERIC_FIELDS])
        categorical.append([intern.setdefault(fields[p].strip(), fields[p].strip()) for p in CATEGORICAL_FIELDS])
        names.append(intern.setdefault(name, name))
        labels.append(int(label))
    n = len(labels)
    return RawRecords(
        numeric=np.asarray(numeric, dtype=np.float64).reshape(n, len(NUMERIC_FIELDS)),
        categorical=np.asarray(categorical, dtype=object).reshape(n, len(CATEGORICAL_FIELDS)),
        names=np.asarray(names, dtype=object),
        labels=np.asarray(labels, dtype=np.int64),
    )


def records_from_rows(rows: Iterable[Sequence[str]], label_map: LabelMap | None = None) -> RawRecords:
    """Build :class:`RawRecords` from in-memory rows of 42 strings."""
    label_map = label_map or LabelMap.default()
    return _collect(((i, list(r)) for i, r in enumerate(rows, 1)), label_map)


def parse_kdd_file(path, label_map: LabelMap | None = None) -> RawRecords:
    """Parse a KDD-format CSV file (no header, 42 comma-separated fields).

    Blank lines are skipped; line numbers in errors are 1-based file lines.
    ``.gz`` files are decompressed transparently.
    """
    label_map = label_map or LabelMap.default()
    path = Path(path)
    if path.suffix == ".gz":
        import gzip

        opener = lambda: gzip.open(path, "rt", encoding="utf-8")  # noqa: E731
    else:
        opener = lambda: open(path, encoding="utf-8")  # noqa: E731
    with opener() as fh:
        rows = ((i, line.rstrip("\r\n").split(",")) for i, line in enumerate(fh, 1) if line.strip())
        return _collect(rows, label_map, str(path))


def train_attack_names(raw: RawRecords) -> set:
    return set(raw.names.tolist())


def filter_novel_attacks(test: RawRecords, train_names: Iterable[str]) -> RawRecords:
    """Keep only records whose attack name was seen in training, order preserved."""
    known = {normalize_name(n) for n in train_names}
    keep = np.fromiter((n in known for n in test.names), dtype=bool, count=len(test))
    return test.take(np.flatnonzero(keep))


def class_counts(labels) -> np.ndarray:
    """Per-class record counts in :class:`ClassLabel` order."""
    if isinstance(labels, (LabeledDataset, RawRecords)):
        labels = labels.y if isinstance(labels, LabeledDataset) else labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    return np.bincount(labels, minlength=N_CLASSES)[:N_CLASSES] if labels.size else np.zeros(N_CLASSES, np.int64)


def counts_summary(labels) -> dict:
    """Counts laid out like the dataset summary table (per attack type, totals)."""
    counts = class_counts(labels)
    row = {CLASS_NAMES[c]: int(counts[c]) for c in (ClassLabel.PROBE, ClassLabel.DOS, ClassLabel.R2L, ClassLabel.U2R)}
    row["Total Attacks"] = int(counts[1:].sum())
    row["Total Normal"] = int(counts[ClassLabel.NORMAL])
    return row


@dataclass(frozen=True)
class LabeledDataset:
    """Encoded feature matrix ``X`` (n, d) with class indices ``y``."""

    X: np.ndarray
    y: np.ndarray
    tag: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or len(X) != len(y):
            raise DataError(f"inconsistent dataset shapes X{X.shape} y{y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("dataset contains non-finite features")
        if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
            raise DataError("class index out of range")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def take(self, index, tag=None) -> "LabeledDataset":
        return LabeledDataset(self.X[index], self.y[index], self.tag if tag is None else tag)


@dataclass(frozen=True)
class FeatureEncoder:
    """One-hot expansion of the string fields followed by column z-scoring.

    Fitted statistics are population (divide-by-N) moments of the expanded
    training matrix. Columns whose training std is zero are flagged and
    always encode to 0. A category absent from the vocabulary expands to an
    all-zero indicator group before scaling.
    """

    vocabularies: tuple
    mean: np.ndarray
    std: np.ndarray
    categorical_fields: tuple = CATEGORICAL_FIELDS
    _index: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        for name in ("mean", "std"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_index", tuple({v: i for i, v in enumerate(voc)} for voc in self.vocabularies))
        if len(self.mean) != self.dim or len(self.std) != self.dim:
            raise DataError("encoder statistics do not match output dimension")

    @property
    def dim(self) -> int:
        return len(NUMERIC_FIELDS) + sum(len(v) for v in self.vocabularies)

    @property
    def zero_variance(self) -> np.ndarray:
        return self.std == 0

    def expand(self, raw: RawRecords) -> np.ndarray:
        """Unscaled design matrix: numeric fields and one-hot groups in field order."""
        n = len(raw)
        blocks = []
        num_col = 0
        for pos in range(N_FIELDS):
            if pos in self.categorical_fields:
                g = self.categorical_fields.index(pos)
                index = self._index[g]
                block = np.zeros((n, len(index)))
                cols = np.fromiter((index.get(v, -1) for v in raw.categorical[:, g]), dtype=np.int64, count=n)
                seen = cols >= 0
                block[np.flatnonzero(seen), cols[seen]] = 1.0
                blocks.append(block)
            else:
                blocks.append(raw.numeric[:, num_col:num_col + 1])
                num_col += 1
        return np.hstack(blocks) if blocks else np.zeros((n, 0))

    def scale(self, expanded: np.ndarray) -> np.ndarray:
        safe = np.where(self.std > 0, self.std, 1.0)
        out = (expanded - self.mean) / safe
        out[:, self.std == 0] = 0.0
        return out

    def transform(self, raw: RawRecords) -> np.ndarray:
        return self.scale(self.expand(raw))

    def encode(self, record: RawRecord | Sequence[str]) -> np.ndarray:
        """Encode a single record given as 41 (or 42, label last) strings."""
        values = record.values if isinstance(record, RawRecord) else tuple(record)
        if len(values) not in (N_FIELDS, N_FIELDS + 1):
            raise DataError(f"expected {N_FIELDS} feature fields, found {len(values)}")
        numeric = np.array([[_to_float(values[p], None, p) for p in NUMERIC_FIELDS]])
        categorical = np.array([[str(values[p]).strip() for p in CATEGORICAL_FIELDS]], dtype=object)
        raw = RawRecords(numeric, categorical, np.array(["?"], dtype=object), np.zeros(1, np.int64))
        return self.transform(raw)[0]

    def dataset(self, raw: RawRecords, tag: str = "") -> LabeledDataset:
        return LabeledDataset(self.transform(raw), raw.labels, tag)

    def to_dict(self) -> dict:
        return {
            "categorical_fields": list(self.categorical_fields),
            "vocabularies": [list(v) for v in self.vocabularies],
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureEncoder":
        return cls(
            vocabularies=tuple(tuple(v) for v in doc["vocabularies"]),
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
            categorical_fields=tuple(doc["categorical_fields"]),
        )


def fit_encoder(train: RawRecords) -> FeatureEncoder:
    """Learn vocabularies (first-appearance order) and column moments from training records."""
    if len(train) == 0:
        raise DataError("cannot fit an encoder on an empty training set")
    vocabularies = tuple(tuple(dict.fromkeys(train.categorical[:, g].tolist())) for g in range(len(CATEGORICAL_FIELDS)))
    provisional = FeatureEncoder(vocabularies, np.zeros(_dim(vocabularies)), np.ones(_dim(vocabularies)))
    expanded = provisional.expand(train)
    mean = expanded.mean(axis=0)
    std = expanded.std(axis=0)
    # Rounding can leave a tiny positive std on a constant column.
    constant = np.all(expanded == expanded[0], axis=0)
    std[constant] = 0.0
    return FeatureEncoder(vocabularies, mean, std)


def _dim(vocabularies):
    return len(NUMERIC_FIELDS) + sum(len(v) for v in vocabularies)


def stratified_subsample(labels, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of an ``n``-record class-stratified subsample.

    Each present class keeps at least one record; the remainder is allocated
    proportionally by largest remainder.
    """
    labels = np.asarray(labels)
    if n >= len(labels):
        return np.arange(len(labels))
    classes, counts = np.unique(labels, return_counts=True)
    if n < len(classes):
        raise DataError(f"subsample of {n} cannot keep all {len(classes)} classes")
    take = np.ones(len(classes), dtype=np.int64)
    budget = n - len(classes)
    share = (counts - 1) * budget / max((counts - 1).sum(), 1)
    extra = np.floor(share).astype(np.int64)
    order = np.argsort(-(share - extra), kind="stable")
    extra[order[: budget - extra.sum()]] += 1
    take += np.minimum(extra, counts - 1)
    chosen = []
    for c, k in zip(classes, take):
        members = np.flatnonzero(labels == c)
        chosen.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(chosen))


# -- encoded-dataset cache -------------------------------------------------

def _zip_member(zf, name, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, payload)


def _npy_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_dataset(path, encoder: FeatureEncoder, ds: LabeledDataset, names=None) -> None:
    """Write a self-describing, byte-reproducible cache of an encoded dataset."""
    header = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "tag": ds.tag,
        "n": len(ds),
        "d": ds.dim,
        "classes": list(CLASS_NAMES),
        "encoder": encoder.to_dict(),
    }
    with zipfile.ZipFile(path, "w") as zf:
        _zip_member(zf, "header.json", json.dumps(header, sort_keys=True).encode("utf-8"))
        _zip_member(zf, "X.npy", _npy_bytes(ds.X))
        _zip_member(zf, "y.npy", _npy_bytes(ds.y))
        if names is not None:
            _zip_member(zf, "names.json", json.dumps(list(map(str, names))).encode("utf-8"))


def load_dataset(path) -> tuple[FeatureEncoder, LabeledDataset]:
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format") != CACHE_FORMAT:
            raise DataError(f"{path}: not an encoded-dataset cache")
        if header.get("version") != CACHE_VERSION:
            raise DataError(f"{path}: unsupported cache version {header.get('version')}")
        X = np.lib.format.read_array(io.BytesIO(zf.read("X.npy")))
        y = np.lib.format.read_array(io.BytesIO(zf.read("y.npy")))
    return FeatureEncoder.from_dict(header["encoder"]), LabeledDataset(X, y, header["tag"])
