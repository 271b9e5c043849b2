"""Seeded synthetic vegetation-like spectral libraries with known class templates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from vegspec.spectra import SpectralLibrary, Spectrum, WavelengthGrid

# Absorption-centre windows (nm): chlorophyll, the two leaf-water bands,
# and the ligno-cellulose region.
DEFAULT_FEATURE_REGIONS: Tuple[Tuple[float, float], ...] = (
    (430.0, 700.0),
    (1400.0, 1500.0),
    (1900.0, 2000.0),
    (2100.0, 2350.0),
)
WIDTH_RANGE_NM = (10.0, 80.0)
DEPTH_RANGE = (0.1, 0.5)
MIN_TEMPLATE_SEPARATION = 0.05
# Keeps templates well clear of the [0, 1] clip so noise stays unbiased.
MIN_TEMPLATE_REFLECTANCE = 0.05
_MAX_REDRAWS = 1000


@dataclass(frozen=True)
class Absorption:
    center_nm: float
    width_nm: float  # full width at half maximum
    depth: float
    # Optional [lo, hi] window outside which the well is exactly zero.
    support_nm: Optional[Tuple[float, float]] = None

    def profile(self, wavelengths_nm: NDArray[np.float64]) -> NDArray[np.float64]:
        sigma = self.width_nm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        well = self.depth * np.exp(-0.5 * ((wavelengths_nm - self.center_nm) / sigma) ** 2)
        if self.support_nm is not None:
            lo, hi = self.support_nm
            well = np.where((wavelengths_nm >= lo) & (wavelengths_nm <= hi), well, 0.0)
        return well


@dataclass(frozen=True, eq=False)
class ClassTemplate:
    baseline: NDArray[np.float64]
    absorptions: Tuple[Absorption, ...]

    def render(self, grid: WavelengthGrid) -> NDArray[np.float64]:
        wl = grid.wavelengths_nm
        out = np.array(self.baseline, dtype=np.float64)
        for a in self.absorptions:
            out = out - a.profile(wl)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> Dict[str, object]:
        return {
            "baseline": np.asarray(self.baseline).tolist(),
            "absorptions": [
                {"center_nm": a.center_nm, "width_nm": a.width_nm, "depth": a.depth,
                 "support_nm": list(a.support_nm) if a.support_nm else None}
                for a in self.absorptions
            ],
        }


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 18
    per_class: int = 50
    grid: WavelengthGrid = field(default_factory=lambda: WavelengthGrid.uniform(400.0, 2500.0, 2152))
    noise_sigma: float = 0.01
    features_per_class: int = 3
    seed: int = 0
    feature_regions: Tuple[Tuple[float, float], ...] = DEFAULT_FEATURE_REGIONS
    # Every class shares one baseline, so classes differ only through absorptions.
    shared_baseline: bool = False
    # Zero each absorption outside the region its centre was drawn from.
    confine_features: bool = False

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.per_class < 2:
            raise ValueError("per_class must be >= 2")
        if self.features_per_class < 1:
            raise ValueError("features_per_class must be >= 1")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise ValueError("noise_sigma must be a finite non-negative number")
        if not self.feature_regions:
            raise ValueError("at least one feature region is required")


@dataclass(frozen=True)
class SyntheticLibrary(SpectralLibrary):
    """A SpectralLibrary that remembers the template behind each class."""

    templates: Dict[str, ClassTemplate] = field(default_factory=dict, compare=False)


def _baseline(wl: NDArray[np.float64], rng: np.random.Generator) -> NDArray[np.float64]:
    # Green-vegetation shape: low visible plateau, red edge, NIR plateau, SWIR decline.
    visible = rng.uniform(0.4, 0.55)
    nir = rng.uniform(0.6, 0.8)
    swir = rng.uniform(0.45, 0.6)
    red_edge = rng.uniform(700.0, 740.0)
    swir_onset = rng.uniform(1250.0, 1450.0)
    edge = 1.0 / (1.0 + np.exp(-(wl - red_edge) / 12.0))
    decline = 1.0 / (1.0 + np.exp(-(wl - swir_onset) / 150.0))
    curve = visible + (nir - visible) * edge - (nir - swir) * edge * decline
    return np.clip(curve, 0.2, 0.8)


def _draw_absorptions(
    spec: SynthSpec, rng: np.random.Generator
) -> Tuple[Absorption, ...]:
    out = []
    for _ in range(spec.features_per_class):
        lo, hi = spec.feature_regions[int(rng.integers(len(spec.feature_regions)))]
        out.append(Absorption(
            center_nm=float(rng.uniform(lo, hi)),
            width_nm=float(rng.uniform(*WIDTH_RANGE_NM)),
            depth=float(rng.uniform(*DEPTH_RANGE)),
            support_nm=(lo, hi) if spec.confine_features else None,
        ))
    return tuple(out)


def class_labels(n_classes: int) -> List[str]:
    width = max(2, len(str(n_classes - 1)))
    return [f"synth_{c:0{width}d}" for c in range(n_classes)]


def generate_library(spec: SynthSpec) -> SyntheticLibrary:
    """Draw class templates, then per-class noisy copies clipped to [0, 1].

    Absorption draws for a class are repeated until its template sits at least
    0.05 (max-norm) from every earlier template and nowhere drops below 0.05.
    """
    rng = np.random.default_rng(spec.seed)
    wl = spec.grid.wavelengths_nm
    labels = class_labels(spec.n_classes)
    shared = _baseline(wl, rng) if spec.shared_baseline else None

    templates: Dict[str, ClassTemplate] = {}
    rendered: List[NDArray[np.float64]] = []
    for label in labels:
        baseline = shared if shared is not None else _baseline(wl, rng)
        for _ in range(_MAX_REDRAWS):
            tpl = ClassTemplate(baseline, _draw_absorptions(spec, rng))
            curve = tpl.render(spec.grid)
            if curve.min() >= MIN_TEMPLATE_REFLECTANCE and all(
                np.max(np.abs(curve - r)) >= MIN_TEMPLATE_SEPARATION for r in rendered
            ):
                break
        else:
            raise RuntimeError(
                f"could not separate template for {label} after {_MAX_REDRAWS} draws; "
                "widen the grid or feature regions"
            )
        templates[label] = tpl
        rendered.append(curve)

    spectra = []
    for label, curve in zip(labels, rendered):
        for k in range(spec.per_class):
            values = curve
            if spec.noise_sigma > 0:
                values = np.clip(curve + rng.normal(0.0, spec.noise_sigma, size=curve.shape), 0.0, 1.0)
            spectra.append(Spectrum(f"{label}_{k:04d}", label, values))
    return SyntheticLibrary(spec.grid, tuple(spectra), templates=templates)


def template_of(lib: SpectralLibrary, label: str) -> ClassTemplate:
    templates = getattr(lib, "templates", None)
    if not templates:
        raise ValueError("library was not produced by generate_library")
    try:
        return templates[label]
    except KeyError:
        raise KeyError(f"unknown synthetic class {label!r}") from None


def templates_to_json(lib: SyntheticLibrary) -> str:
    doc = {
        "wavelengths_nm": lib.grid.wavelengths_nm.tolist(),
        "templates": {label: tpl.to_dict() for label, tpl in lib.templates.items()},
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
