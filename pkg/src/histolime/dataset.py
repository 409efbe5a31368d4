"""Normal/OSCC corpus ingestion, seeded stratified splitting and split manifests.

Directory convention::

    <root>/[train|test|val]/<Normal|OSCC>/*.jpg|*.png

The split-level parent directory is optional and, like the class directory names,
matched case-insensitively. Split parents are only used to find files; partitioning
is always recomputed by :func:`stratified_split`.
"""

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import BadRatios, EmptyCorpus, HistolimeError, InputError, ManifestParseError, MissingClassDirectory
from .imaging import read_image
from .prng import SplitMix64, shuffle

NORMAL, OSCC = 0, 1
CLASS_NAMES = ("Normal", "OSCC")
PARTITIONS = ("train", "test", "validation")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)  # train, test, validation
SEVENTY_THIRTY = (0.70, 0.30, 0.0)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
_SPLIT_PARENTS = ("train", "test", "val", "valid", "validation")


class CorpusWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LabeledImage:
    id: str
    label: int
    path: Path = field(repr=False, compare=False, default=None)

    def load(self):
        return read_image(self.path)

    @property
    def raster(self):
        return self.load()


@dataclass(frozen=True)
class SplitManifest:
    train: tuple
    test: tuple
    validation: tuple
    seed: int
    ratios: tuple  # (train, test, validation)

    def partition(self, name):
        if name == "val":
            name = "validation"
        if name not in PARTITIONS:
            raise KeyError(f"unknown partition {name!r}")
        return getattr(self, name)

    def class_counts(self, name):
        records = self.partition(name)
        return (sum(1 for _, lab in records if lab == NORMAL), sum(1 for _, lab in records if lab == OSCC))

    def to_dict(self):
        return {
            "seed": self.seed,
            "ratios": dict(zip(PARTITIONS, self.ratios)),
            "partitions": {
                name: [{"id": i, "label": lab} for i, lab in getattr(self, name)] for name in PARTITIONS
            },
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _find_class_dirs(root):
    found = {NORMAL: [], OSCC: []}
    wanted = {name.lower(): label for label, name in enumerate(CLASS_NAMES)}

    def scan(directory):
        for entry in sorted(os.scandir(directory), key=lambda e: e.name):
            if entry.is_dir() and entry.name.lower() in wanted:
                found[wanted[entry.name.lower()]].append(Path(entry.path))

    scan(root)
    for entry in sorted(os.scandir(root), key=lambda e: e.name):
        if entry.is_dir() and entry.name.lower() in _SPLIT_PARENTS:
            scan(entry.path)
    return found


def _check(path):
    try:
        read_image(path)
    except HistolimeError as exc:
        return str(exc)
    return None


def load_corpus(root, workers=None):
    """Return one :class:`LabeledImage` per decodable file under ``root``, sorted by id.

    Undecodable files and empty class directories are reported with
    :class:`CorpusWarning` rather than raised.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingClassDirectory(f"dataset root {root} is not a directory")
    dirs = _find_class_dirs(root)
    for label, name in enumerate(CLASS_NAMES):
        if not dirs[label]:
            raise MissingClassDirectory(f"no {name} directory under {root}")

    candidates = []
    for label, class_dirs in dirs.items():
        count = 0
        for d in class_dirs:
            for p in sorted(d.rglob("*")):
                if not p.is_file():
                    continue
                if p.suffix.lower() not in IMAGE_SUFFIXES:
                    warnings.warn(f"skipping non-image file {p.relative_to(root).as_posix()}", CorpusWarning,
                                  stacklevel=2)
                    continue
                candidates.append((p.relative_to(root).as_posix(), label, p))
                count += 1
        if count == 0:
            warnings.warn(f"{CLASS_NAMES[label]} class directory is empty", CorpusWarning, stacklevel=2)

    # decode concurrently; ordering below depends only on ids
    with ThreadPoolExecutor(max_workers=workers) as pool:
        problems = list(pool.map(_check, [p for _, _, p in candidates]))

    records = []
    for (ident, label, path), problem in zip(candidates, problems):
        if problem is not None:
            warnings.warn(f"cannot decode {ident}: {problem}", CorpusWarning, stacklevel=2)
            continue
        records.append(LabeledImage(ident, label, path))
    records.sort(key=lambda r: r.id)
    return records


def _exact(value):
    # decimal reading of the ratio, so 0.7 means exactly 7/10
    return Fraction(repr(float(value)))


def normalize_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) == 2:
        ratios = ratios + (0.0,)
    if len(ratios) != 3:
        raise BadRatios("ratios need 2 (train, test) or 3 (train, test, validation) values")
    if any(r < 0 or r != r for r in ratios):
        raise BadRatios(f"ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must sum to 1, got {sum(ratios)}")
    return ratios


def stratified_split(corpus, ratios=DEFAULT_RATIOS, seed=0):
    """Split ``(id, label)`` pairs per class with a seeded Fisher-Yates shuffle.

    Each class's ids are sorted, shuffled (Normal first, then OSCC, one shared
    splitmix64 stream), then cut at ``floor(n * cumulative_ratio + 1/2)``.
    """
    ratios = normalize_ratios(ratios)
    pairs = [(r.id, r.label) if isinstance(r, LabeledImage) else (str(r[0]), int(r[1])) for r in corpus]
    if not pairs:
        raise EmptyCorpus("cannot split an empty corpus")
    ids = [i for i, _ in pairs]
    if len(set(ids)) != len(ids):
        raise InputError("corpus ids must be unique")

    rng = SplitMix64(seed)
    cumulative = [Fraction(0)]
    for r in ratios:
        cumulative.append(cumulative[-1] + _exact(r))
    parts = {name: [] for name in PARTITIONS}
    for label in (NORMAL, OSCC):
        members = sorted(i for i, lab in pairs if lab == label)
        shuffle(members, rng)
        n = len(members)
        cuts = [int(n * c + Fraction(1, 2)) for c in cumulative]
        cuts[-1] = n
        for name, lo, hi in zip(PARTITIONS, cuts, cuts[1:]):
            parts[name].extend((i, label) for i in members[lo:hi])
    return SplitManifest(
        train=tuple(parts["train"]),
        test=tuple(parts["test"]),
        validation=tuple(parts["validation"]),
        seed=int(seed),
        ratios=ratios,
    )


def save_manifest(manifest, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest.dumps())
    os.replace(tmp, path)


def _line_of(text, needle, occurrence=1):
    seen = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            seen += 1
            if seen == occurrence:
                return lineno
    return None


def parse_manifest(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ManifestParseError("manifest must be a JSON object", line=1)
    for key in ("seed", "ratios", "partitions"):
        if key not in doc:
            raise ManifestParseError("missing required key", field=key)

    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ManifestParseError("seed must be an integer", line=_line_of(text, '"seed"'), field="seed")

    raw_ratios = doc["ratios"]
    if not isinstance(raw_ratios, dict) or set(raw_ratios) != set(PARTITIONS):
        raise ManifestParseError(f"ratios must have keys {PARTITIONS}", line=_line_of(text, '"ratios"'),
                                 field="ratios")
    try:
        ratios = normalize_ratios([raw_ratios[p] for p in PARTITIONS])
    except (BadRatios, TypeError, ValueError) as exc:
        raise ManifestParseError(str(exc), line=_line_of(text, '"ratios"'), field="ratios") from exc

    partitions = doc["partitions"]
    if not isinstance(partitions, dict) or set(partitions) != set(PARTITIONS):
        raise ManifestParseError(f"partitions must have keys {PARTITIONS}", line=_line_of(text, '"partitions"'),
                                 field="partitions")
    seen = {}
    parts = {}
    for name in PARTITIONS:
        entries = partitions[name]
        if not isinstance(entries, list):
            raise ManifestParseError("partition must be a list", line=_line_of(text, f'"{name}"'),
                                     field=f"partitions.{name}")
        records = []
        for idx, entry in enumerate(entries):
            where = f"partitions.{name}[{idx}]"
            if not isinstance(entry, dict) or set(entry) != {"id", "label"}:
                raise ManifestParseError("entry must be {id, label}", field=where)
            ident, label = entry["id"], entry["label"]
            if not isinstance(ident, str):
                raise ManifestParseError("id must be a string", field=where + ".id")
            if label not in (0, 1) or isinstance(label, bool):
                raise ManifestParseError("label must be 0 or 1", line=_line_of(text, json.dumps(ident)),
                                         field=where + ".label")
            if ident in seen:
                line = _line_of(text, json.dumps(ident), occurrence=2)
                raise ManifestParseError(f"duplicate id {ident!r} (first in {seen[ident]})", line=line,
                                         field=where + ".id")
            seen[ident] = where
            records.append((ident, label))
        parts[name] = tuple(records)
    return SplitManifest(seed=seed, ratios=ratios, **parts)


def load_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text)
