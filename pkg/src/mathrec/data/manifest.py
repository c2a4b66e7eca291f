"""Dataset records and the JSON-lines manifest format.

Line 1 is a header ``{"schema_version", "vocabulary_ref", "bucket_spec"}``;
every following line is one record with keys ``image_path``, ``latex``,
``subset`` and ``token_length``.  Paths are relative to the manifest file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from mathrec.errors import ManifestSchemaError, MissingImage
from mathrec.latex.vocab import Vocabulary

SCHEMA_VERSION = 1
SUBSETS = ("SPE", "CPE", "SCE", "HWE")
DEFAULT_BUCKETS = (0, 8, 16, 32, 64, 128, 256, 1024)
RECORD_KEYS = {"image_path", "latex", "subset", "token_length"}


@dataclass(frozen=True)
class FormulaSample:
    image_path: str
    latex: str
    subset: str
    token_length: int


def bucket_index(length: int, boundaries: Sequence[int]) -> Optional[int]:
    """Index of the bucket ``[b[i], b[i+1])`` holding ``length``; the last bucket is closed."""
    last = len(boundaries) - 2
    for i in range(last + 1):
        lo, hi = boundaries[i], boundaries[i + 1]
        if lo <= length < hi or (i == last and length == hi):
            return i
    return None


def validate_buckets(boundaries: Sequence[int]) -> tuple[int, ...]:
    bounds = tuple(int(b) for b in boundaries)
    if len(bounds) < 2 or any(b >= c for b, c in zip(bounds, bounds[1:])):
        raise ValueError(f"bucket boundaries must be strictly increasing, got {list(bounds)}")
    return bounds


@dataclass
class Manifest:
    records: list[FormulaSample]
    vocabulary_ref: str
    bucket_spec: tuple[int, ...] = DEFAULT_BUCKETS
    root: Path = field(default=Path("."), compare=False)

    def image_file(self, record: FormulaSample) -> Path:
        return self.root / record.image_path

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.load(self.root / self.vocabulary_ref)

    def subset(self, name: str) -> list[FormulaSample]:
        return [r for r in self.records if r.subset == name]

    def check_invariants(self) -> None:
        seen = set()
        for r in self.records:
            if r.latex in seen:
                raise ManifestSchemaError(f"duplicate latex in manifest: {r.latex!r}")
            seen.add(r.latex)
            if bucket_index(r.token_length, self.bucket_spec) is None:
                raise ManifestSchemaError(
                    f"token_length {r.token_length} outside buckets {list(self.bucket_spec)}")

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        header = {"schema_version": SCHEMA_VERSION, "vocabulary_ref": self.vocabulary_ref,
                  "bucket_spec": list(self.bucket_spec)}
        lines = [json.dumps(header, ensure_ascii=False)]
        lines += [json.dumps(asdict(r), ensure_ascii=False) for r in self.records]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _record(obj, lineno: int) -> FormulaSample:
    if not isinstance(obj, dict) or set(obj) != RECORD_KEYS:
        raise ManifestSchemaError(f"line {lineno}: record keys must be {sorted(RECORD_KEYS)}")
    if obj["subset"] not in SUBSETS:
        raise ManifestSchemaError(f"line {lineno}: unknown subset {obj['subset']!r}")
    length = obj["token_length"]
    if not isinstance(length, int) or isinstance(length, bool) or length < 1:
        raise ManifestSchemaError(f"line {lineno}: token_length must be an integer >= 1")
    if not isinstance(obj["latex"], str) or not isinstance(obj["image_path"], str):
        raise ManifestSchemaError(f"line {lineno}: latex and image_path must be strings")
    return FormulaSample(obj["image_path"], obj["latex"], obj["subset"], length)


def load_manifest(path: Union[str, Path], check_images: bool = True) -> Manifest:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestSchemaError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise ManifestSchemaError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
        body = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(header, dict) or header.get("schema_version") != SCHEMA_VERSION:
        raise ManifestSchemaError(f"{path}: header must carry schema_version {SCHEMA_VERSION}")
    try:
        buckets = validate_buckets(header["bucket_spec"])
        vocabulary_ref = str(header["vocabulary_ref"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestSchemaError(f"{path}: bad header ({exc})") from exc
    records = [_record(obj, n) for n, obj in enumerate(body, 2)]
    manifest = Manifest(records, vocabulary_ref, buckets, root=path.parent)
    manifest.check_invariants()
    if check_images:
        for r in records:
            if not manifest.image_file(r).is_file():
                raise MissingImage(f"image {r.image_path} listed in {path} does not exist")
        if not (manifest.root / vocabulary_ref).is_file():
            raise MissingImage(f"vocabulary {vocabulary_ref} listed in {path} does not exist")
    return manifest
