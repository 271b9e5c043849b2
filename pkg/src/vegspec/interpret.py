"""Inspection of a trained DenseNet's weights.

Covers active-neuron detection from layer-1 row spread, per-band activity of
the active rows, per-class reliance on hidden neurons through layer 2, and the
spectral activation curves ``W2[c, j] * W1[j, :]`` overlaid on a class mean.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vegspec import net as _net
from vegspec.net import DenseNet
from vegspec.plots import line_chart_svg, pgm_bytes
from vegspec.spectra import SpectralLibrary


@dataclass(frozen=True, eq=False)
class ActiveNeuronSet:
    indices: Tuple[int, ...]
    std_threshold: float
    row_std: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class WavelengthActivity:
    wavelengths_nm: NDArray[np.float64]
    mean_weight: NDArray[np.float64]
    std_weight: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class ClassReliance:
    label: str
    weights: NDArray[np.float64]
    reliant_indices: Tuple[int, ...]
    magnitude_threshold: float


@dataclass(frozen=True, eq=False)
class SpectralActivation:
    label: str
    class_mean: NDArray[np.float64]
    curves: Dict[int, NDArray[np.float64]]
    magnitude_threshold: float
    note: Optional[str] = None


def active_neurons(W1: ArrayLike, std_threshold: float = 0.1) -> ActiveNeuronSet:
    """Rows of W1 whose population standard deviation is strictly above the threshold."""
    W1 = np.asarray(W1, dtype=np.float64)
    if W1.ndim != 2 or W1.size == 0:
        raise ValueError("W1 must be a non-empty (H, D) matrix")
    row_std = W1.std(axis=1)
    idx = tuple(int(i) for i in np.flatnonzero(row_std > std_threshold))
    return ActiveNeuronSet(idx, float(std_threshold), row_std)


def wavelength_activity(
    W1: ArrayLike, active: ActiveNeuronSet, wavelengths_nm: Optional[ArrayLike] = None
) -> WavelengthActivity:
    W1 = np.asarray(W1, dtype=np.float64)
    if len(active) == 0:
        raise ValueError(
            f"no active neurons at std threshold {active.std_threshold}; "
            "nothing to summarise per wavelength"
        )
    rows = W1[list(active.indices)]
    wl = (np.arange(W1.shape[1], dtype=np.float64) if wavelengths_nm is None
          else np.asarray(wavelengths_nm, dtype=np.float64))
    return WavelengthActivity(wl, rows.mean(axis=0), rows.std(axis=0))


def _check_class(net: DenseNet, c: int) -> None:
    C = net.W2.shape[0]
    if not 0 <= c < C:
        raise IndexError(f"class {c} out of range [0, {C})")


def class_reliance(net: DenseNet, c: int, magnitude_threshold: float = 1.0) -> ClassReliance:
    _check_class(net, c)
    w = np.array(net.W2[c])
    idx = tuple(int(j) for j in np.flatnonzero(np.abs(w) > magnitude_threshold))
    return ClassReliance(net.class_index.labels[c], w, idx, float(magnitude_threshold))


def spectral_activation(
    net: DenseNet, c: int, class_mean: ArrayLike, magnitude_threshold: float = 1.0
) -> SpectralActivation:
    """One curve ``W2[c, j] * W1[j, :]`` per hidden neuron the class relies on."""
    rel = class_reliance(net, c, magnitude_threshold)
    mean = np.asarray(class_mean, dtype=np.float64)
    if mean.shape != (net.W1.shape[1],):
        raise _net.DimensionError(
            f"class mean has shape {mean.shape}, model expects ({net.W1.shape[1]},)"
        )
    curves = {j: net.W2[c, j] * net.W1[j, :] for j in rel.reliant_indices}
    note = None
    if not curves:
        note = (f"class {rel.label!r} has no layer-2 weight with magnitude above "
                f"{magnitude_threshold}; no activation curves")
    return SpectralActivation(rel.label, mean, curves, rel.magnitude_threshold, note)


def logit_decomposition_check(net: DenseNet, s: ArrayLike, c: int) -> float:
    """|logit_c(s) - (b2[c] + sum_j W2[c, j] * hidden_j(s))|, summed term by term."""
    _check_class(net, c)
    logit = float(_net.logits(net, s)[c])
    hidden = _net.forward_hidden(net, s)
    recomposed = float(net.b2[c]) + math.fsum(
        float(w) * float(h) for w, h in zip(net.W2[c], hidden)
    )
    return abs(logit - recomposed)


# --------------------------------------------------------------------------- report files


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label) or "_"


def _csv(header, columns) -> bytes:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def class_means_for(net: DenseNet, library: SpectralLibrary) -> NDArray[np.float64]:
    """Mean spectrum of each model class, taken from ``library`` under the model's label key."""
    if library.grid != net.grid:
        raise _net.DimensionError(
            f"library has {library.n_bands} bands, model expects {net.W1.shape[1]}"
            if library.n_bands != net.W1.shape[1]
            else "library wavelength grid differs from the model's"
        )
    lib = library.with_label_key(net.label_key)
    labels = np.array(lib.labels(), dtype=object)
    means = []
    for label in net.class_index.labels:
        mask = labels == label
        if not mask.any():
            raise ValueError(f"library has no spectra for class {label!r}")
        means.append(lib.reflectance[mask].mean(axis=0))
    return np.vstack(means)


def report_files(
    net: DenseNet,
    library: SpectralLibrary,
    std_threshold: float = 0.1,
    magnitude_threshold: float = 1.0,
) -> Dict[str, bytes]:
    """Every interpretation artefact as ``{filename: content}``.

    Pure function of its inputs, so the same model and library always give the
    same bytes.
    """
    wl = net.grid.wavelengths_nm
    files: Dict[str, bytes] = {}
    active = active_neurons(net.W1, std_threshold)
    summary = {
        "std_threshold": std_threshold,
        "n_neurons": int(net.W1.shape[0]),
        "indices": list(active.indices),
        "row_std": active.row_std.tolist(),
    }
    if not len(active):
        summary["note"] = "no active neurons; wavelength activity not written"
    files["active_neurons.json"] = (json.dumps(summary, indent=1) + "\n").encode("utf-8")
    files["layer1_weights.pgm"] = pgm_bytes(net.W1)

    if len(active):
        files["layer1_active_weights.pgm"] = pgm_bytes(net.W1[list(active.indices)])
        act = wavelength_activity(net.W1, active, wl)
        files["wavelength_activity.csv"] = _csv(
            ("wavelength_nm", "mean", "std"), (act.wavelengths_nm, act.mean_weight, act.std_weight)
        )
        files["wavelength_activity.svg"] = line_chart_svg(
            wl,
            [("mean weight", act.mean_weight), ("std of weights", act.std_weight)],
            title=f"Layer-1 weight activity over {len(active)} active neurons",
            xlabel="wavelength (nm)",
            ylabel="weight",
            band=(act.mean_weight - act.std_weight, act.mean_weight + act.std_weight),
        ).encode("utf-8")

    means = class_means_for(net, library)
    names = [safe_name(label) for label in net.class_index.labels]
    if len(set(names)) != len(names):
        raise ValueError("class labels collide after filename sanitising")
    for c, (label, name) in enumerate(zip(net.class_index.labels, names)):
        rel = class_reliance(net, c, magnitude_threshold)
        neurons = np.arange(rel.weights.size, dtype=np.float64)
        files[f"reliance_{name}.csv"] = _csv(
            ("neuron", "weight"), ([str(j) for j in range(rel.weights.size)], rel.weights)
        )
        files[f"reliance_{name}.svg"] = line_chart_svg(
            neurons,
            [("layer-2 weight", rel.weights),
             (f"+{magnitude_threshold:g}", np.full_like(neurons, magnitude_threshold)),
             (f"-{magnitude_threshold:g}", np.full_like(neurons, -magnitude_threshold))],
            title=f"Reliance of {label} on hidden neurons",
            xlabel="hidden neuron",
            ylabel="layer-2 weight",
        ).encode("utf-8")
        sa = spectral_activation(net, c, means[c], magnitude_threshold)
        keys = sorted(sa.curves)
        files[f"activation_{name}.csv"] = _csv(
            ("wavelength_nm", "class_mean") + tuple(f"curve_{j}" for j in keys),
            (wl, sa.class_mean) + tuple(sa.curves[j] for j in keys),
        )
        title = f"Spectral activation: {label}"
        if sa.note:
            title += " (no reliant neurons)"
        files[f"activation_{name}.svg"] = line_chart_svg(
            wl,
            [("class mean", sa.class_mean)] + [(f"W2[{c},{j}]*W1[{j},:]", sa.curves[j]) for j in keys],
            title=title,
            xlabel="wavelength (nm)",
            ylabel="reflectance / weighted layer-1 row",
        ).encode("utf-8")
    return files
