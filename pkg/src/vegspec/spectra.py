"""Labeled spectral libraries: data model, CSV ingestion, labels and splits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

FIXED_COLUMNS = ("id", "species", "health", "growth_stage")
MISSING_FIELD = "NA"


class LibraryFormatError(ValueError):
    """Raised when library-file text does not conform to the CSV layout."""


class LabelKey(str, enum.Enum):
    SPECIES = "species"
    SPECIES_HEALTH_STAGE = "composite"

    @classmethod
    def parse(cls, value: "LabelKey | str") -> "LabelKey":
        if isinstance(value, LabelKey):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown label key {value!r}; expected 'species' or 'composite'"
            ) from None


@dataclass(frozen=True)
class WavelengthGrid:
    """Shared band centres in nanometres, strictly increasing."""

    wavelengths_nm: NDArray[np.float64]

    def __post_init__(self) -> None:
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if wl.ndim != 1 or wl.size == 0:
            raise ValueError("wavelength grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(wl)) or np.any(wl <= 0):
            raise ValueError("wavelengths must be finite and positive")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("non-monotonic wavelengths")
        wl.setflags(write=False)
        object.__setattr__(self, "wavelengths_nm", wl)

    def __len__(self) -> int:
        return int(self.wavelengths_nm.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WavelengthGrid):
            return NotImplemented
        return np.array_equal(self.wavelengths_nm, other.wavelengths_nm)

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def uniform(cls, start_nm: float, stop_nm: float, n: int) -> "WavelengthGrid":
        return cls(np.linspace(start_nm, stop_nm, n))


@dataclass(frozen=True, eq=False)
class Spectrum:
    id: str
    species: str
    reflectance: NDArray[np.float64]
    health: Optional[str] = None
    growth_stage: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.species:
            raise ValueError("species must be non-empty")
        refl = np.asarray(self.reflectance, dtype=np.float64)
        if refl.ndim != 1:
            raise ValueError("reflectance must be 1-D")
        if not np.all(np.isfinite(refl)):
            raise ValueError("reflectance values must be finite")
        refl.setflags(write=False)
        object.__setattr__(self, "reflectance", refl)
        # Empty strings and None both mean "not recorded".
        object.__setattr__(self, "health", self.health or None)
        object.__setattr__(self, "growth_stage", self.growth_stage or None)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (
            (self.id, self.species, self.health, self.growth_stage)
            == (other.id, other.species, other.health, other.growth_stage)
            and np.array_equal(self.reflectance, other.reflectance)
        )

    __hash__ = None  # type: ignore[assignment]

    def label(self, key: LabelKey | str = LabelKey.SPECIES) -> str:
        key = LabelKey.parse(key)
        if key is LabelKey.SPECIES:
            return self.species
        return "_".join(
            (self.species, self.health or MISSING_FIELD, self.growth_stage or MISSING_FIELD)
        )


@dataclass(frozen=True)
class ClassIndex:
    """Sorted distinct labels; a label's position is its integer class."""

    labels: Tuple[str, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be distinct")
        if list(labels) != sorted(labels):
            raise ValueError("class labels must be sorted lexicographically")
        if len(labels) < 2:
            raise ValueError(f"need at least 2 classes, got {len(labels)}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "ClassIndex":
        return cls(tuple(sorted(set(labels))))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} is not in the class index") from None


@dataclass(frozen=True)
class SpectralLibrary:
    grid: WavelengthGrid
    spectra: Tuple[Spectrum, ...]
    label_key: LabelKey = LabelKey.SPECIES
    _matrix: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        spectra = tuple(self.spectra)
        d = len(self.grid)
        for row, spec in enumerate(spectra):
            if spec.reflectance.size != d:
                raise ValueError(
                    f"spectrum {spec.id!r} (index {row}) has {spec.reflectance.size} "
                    f"values but the grid has {d} bands"
                )
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "label_key", LabelKey.parse(self.label_key))
        matrix = (
            np.vstack([s.reflectance for s in spectra])
            if spectra
            else np.empty((0, d), dtype=np.float64)
        )
        matrix.setflags(write=False)
        object.__setattr__(self, "_matrix", matrix)

    def __len__(self) -> int:
        return len(self.spectra)

    @property
    def n_bands(self) -> int:
        return len(self.grid)

    @property
    def reflectance(self) -> NDArray[np.float64]:
        """Read-only (N, D) matrix of all spectra, in row order."""
        return self._matrix

    def labels(self) -> List[str]:
        return [s.label(self.label_key) for s in self.spectra]

    def subset(self, indices: Sequence[int]) -> "SpectralLibrary":
        return SpectralLibrary(
            self.grid, tuple(self.spectra[i] for i in indices), self.label_key
        )

    def with_label_key(self, key: LabelKey | str) -> "SpectralLibrary":
        return SpectralLibrary(self.grid, self.spectra, LabelKey.parse(key))


def _format_float(value: float) -> str:
    # repr() is the shortest string that round-trips exactly.
    return repr(float(value))


def parse_library(
    text: str, label_key: LabelKey | str = LabelKey.SPECIES
) -> SpectralLibrary:
    """Parse library CSV text.

    Rows are reported by 1-based line number in error messages.
    """
    lines = text.split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise LibraryFormatError("empty library file")

    header = [h.strip() for h in lines[0].rstrip("\r").split(",")]
    if tuple(header[:4]) != FIXED_COLUMNS:
        raise LibraryFormatError(
            f"line 1: header must start with {','.join(FIXED_COLUMNS)}"
        )
    if len(header) < 5:
        raise LibraryFormatError("line 1: header declares no wavelength columns")
    try:
        wavelengths = np.array([float(h) for h in header[4:]], dtype=np.float64)
    except ValueError as exc:
        raise LibraryFormatError(f"line 1: non-numeric wavelength ({exc})") from None
    if not np.all(np.isfinite(wavelengths)) or np.any(wavelengths <= 0):
        raise LibraryFormatError("line 1: wavelengths must be finite and positive")
    if np.any(np.diff(wavelengths) <= 0):
        raise LibraryFormatError("line 1: non-monotonic wavelengths")
    grid = WavelengthGrid(wavelengths)
    d = len(grid)

    spectra = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.rstrip("\r").split(",")
        if len(fields) != 4 + d:
            raise LibraryFormatError(
                f"line {lineno}: expected {4 + d} fields, found {len(fields)}"
            )
        sid, species, health, stage = fields[:4]
        if not species:
            raise LibraryFormatError(f"line {lineno}: empty species field")
        values = np.empty(d, dtype=np.float64)
        for j, raw in enumerate(fields[4:]):
            try:
                v = float(raw)
            except ValueError:
                raise LibraryFormatError(
                    f"line {lineno}: non-numeric reflectance {raw!r} in column {5 + j}"
                ) from None
            if not math.isfinite(v):
                raise LibraryFormatError(
                    f"line {lineno}: non-finite reflectance {raw!r} in column {5 + j}"
                )
            values[j] = v
        spectra.append(Spectrum(sid, species, values, health or None, stage or None))
    return SpectralLibrary(grid, tuple(spectra), LabelKey.parse(label_key))


def serialize_library(lib: SpectralLibrary) -> str:
    header = ",".join(FIXED_COLUMNS + tuple(_format_float(w) for w in lib.grid.wavelengths_nm))
    rows = [header]
    for s in lib.spectra:
        for name, value in (("id", s.id), ("species", s.species), ("health", s.health),
                            ("growth_stage", s.growth_stage)):
            if value and ("," in value or "\n" in value):
                raise ValueError(f"field {name} of spectrum {s.id!r} contains a comma or newline")
        meta = [s.id, s.species, s.health or "", s.growth_stage or ""]
        rows.append(",".join(meta + [_format_float(v) for v in s.reflectance]))
    return "\n".join(rows) + "\n"


def read_library(path, label_key: LabelKey | str = LabelKey.SPECIES) -> SpectralLibrary:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_library(fh.read(), label_key)


def class_counts(lib: SpectralLibrary) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for label in sorted(lib.labels()):
        counts[label] = counts.get(label, 0) + 1
    return counts


def encode_labels(lib: SpectralLibrary) -> Tuple[ClassIndex, NDArray[np.int64]]:
    labels = lib.labels()
    index = ClassIndex.from_labels(labels)
    lookup = {label: i for i, label in enumerate(index.labels)}
    return index, np.array([lookup[label] for label in labels], dtype=np.int64)


def class_means(lib: SpectralLibrary) -> Tuple[ClassIndex, NDArray[np.float64]]:
    """Mean reflectance per class, rows ordered as in the returned ClassIndex."""
    index, y = encode_labels(lib)
    x = lib.reflectance
    rows = []
    for c in range(len(index)):
        members = x[y == c]
        # Shifted mean: exact when every member is identical.
        rows.append(members[0] + (members - members[0]).mean(axis=0))
    return index, np.vstack(rows)


def stratified_split(
    lib: SpectralLibrary, train_fraction: float, seed: int
) -> Tuple[SpectralLibrary, SpectralLibrary]:
    """Seeded per-class split.

    Each class of size n contributes round_half_up(train_fraction * n) spectra
    to the training side, clamped to [1, n - 1]. Classes are visited in sorted
    label order, each consuming one permutation from a single generator, so the
    result is a pure function of (lib, train_fraction, seed). Both outputs keep
    the input row order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = lib.labels()
    members: Dict[str, List[int]] = {}
    for i, label in enumerate(labels):
        members.setdefault(label, []).append(i)
    small = sorted(label for label, idx in members.items() if len(idx) < 2)
    if small:
        raise ValueError(
            "every class needs at least 2 spectra to split; too few in: " + ", ".join(small)
        )

    rng = np.random.default_rng(seed)
    train_idx: List[int] = []
    for label in sorted(members):
        idx = members[label]
        n = len(idx)
        k = int(math.floor(train_fraction * n + 0.5))
        k = min(max(k, 1), n - 1)
        perm = rng.permutation(n)
        train_idx.extend(idx[p] for p in perm[:k])

    chosen = set(train_idx)
    train = sorted(chosen)
    test = [i for i in range(len(lib)) if i not in chosen]
    return lib.subset(train), lib.subset(test)
