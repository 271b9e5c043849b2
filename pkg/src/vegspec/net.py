"""Single-hidden-layer ReLU/softmax classifier written directly in numpy.

Shapes follow the weight-matrix convention used throughout the package:
``W1`` is (H, D), ``b1`` is (H,), ``W2`` is (C, H), ``b2`` is (C,), so the
hidden activation of a spectrum ``s`` is ``relu(b1 + W1 @ s)`` and the class
logits are ``b2 + W2 @ hidden``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vegspec.spectra import (
    ClassIndex,
    LabelKey,
    SpectralLibrary,
    WavelengthGrid,
    encode_labels,
)

PROB_FLOOR = 1e-12

SeedLike = Union[int, np.random.Generator]


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


class DimensionError(ValueError):
    pass


class Optimizer(str, enum.Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: Optimizer = Optimizer.ADAM
    seed: int = 0
    hidden_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self) -> None:
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if int(self.epochs) < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.hidden_size) < 1:
            raise ValueError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d["optimizer"] = self.optimizer.value
        return d


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def loss(self) -> NDArray[np.float64]:
        return np.array([r.loss for r in self.records])

    @property
    def accuracy(self) -> NDArray[np.float64]:
        return np.array([r.accuracy for r in self.records])

    def to_csv(self) -> str:
        lines = ["epoch,loss,accuracy"]
        lines += [f"{r.epoch},{r.loss!r},{r.accuracy!r}" for r in self.records]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class DenseNet:
    W1: NDArray[np.float64]
    b1: NDArray[np.float64]
    W2: NDArray[np.float64]
    b2: NDArray[np.float64]
    class_index: ClassIndex
    grid: WavelengthGrid
    train_config: Optional[TrainConfig] = None
    label_key: LabelKey = LabelKey.SPECIES

    def __post_init__(self) -> None:
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        h, d = self.W1.shape if self.W1.ndim == 2 else (-1, -1)
        if self.W1.ndim != 2 or self.W2.ndim != 2:
            raise DimensionError("W1 and W2 must be matrices")
        c = self.W2.shape[0]
        if d != len(self.grid):
            raise DimensionError(f"W1 has {d} columns but the grid has {len(self.grid)} bands")
        if self.W2.shape[1] != h or self.b1.shape != (h,):
            raise DimensionError(f"hidden size mismatch: W1 rows {h}, W2 cols {self.W2.shape[1]}, b1 {self.b1.shape}")
        if self.b2.shape != (c,) or c != len(self.class_index):
            raise DimensionError(
                f"class count mismatch: W2 rows {c}, b2 {self.b2.shape}, labels {len(self.class_index)}"
            )
        object.__setattr__(self, "label_key", LabelKey.parse(self.label_key))

    @property
    def dims(self) -> Tuple[int, int, int]:
        """(D, H, C)."""
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def replace(self, **params: NDArray[np.float64]) -> "DenseNet":
        kw = dict(W1=self.W1, b1=self.b1, W2=self.W2, b2=self.b2)
        kw.update(params)
        return DenseNet(class_index=self.class_index, grid=self.grid,
                        train_config=self.train_config, label_key=self.label_key, **kw)


@dataclass(frozen=True)
class Gradients:
    W1: NDArray[np.float64]
    b1: NDArray[np.float64]
    W2: NDArray[np.float64]
    b2: NDArray[np.float64]

    def as_list(self) -> List[NDArray[np.float64]]:
        return [self.W1, self.b1, self.W2, self.b2]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_net(
    D: int,
    H: int,
    C: int,
    seed: SeedLike,
    class_index: Optional[ClassIndex] = None,
    grid: Optional[WavelengthGrid] = None,
) -> DenseNet:
    """Glorot-uniform weights and zero biases.

    Draws W1 first and W2 second from the generator; training relies on this
    order when it continues using the same generator for epoch shuffles.
    """
    if min(D, H, C) < 1:
        raise ValueError(f"dimensions must be positive, got D={D}, H={H}, C={C}")
    rng = _rng(seed)
    lim1 = math.sqrt(6.0 / (D + H))
    lim2 = math.sqrt(6.0 / (H + C))
    W1 = rng.uniform(-lim1, lim1, size=(H, D))
    W2 = rng.uniform(-lim2, lim2, size=(C, H))
    if class_index is None:
        class_index = _default_index(C)
    if grid is None:
        grid = WavelengthGrid(np.arange(1, D + 1, dtype=np.float64))
    return DenseNet(W1, np.zeros(H), W2, np.zeros(C), class_index, grid)


def _default_index(C: int) -> ClassIndex:
    if C < 2:
        raise ValueError("a classifier needs at least 2 classes")
    width = len(str(C - 1))
    return ClassIndex(tuple(f"class_{i:0{width}d}" for i in range(C)))


def _as_batch(net: DenseNet, x: ArrayLike) -> Tuple[NDArray[np.float64], bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    d = net.W1.shape[1]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise DimensionError(f"expected spectra with {d} bands, got shape {np.shape(x)}")
    return arr, single


def hidden_preactivation(net: DenseNet, x: ArrayLike) -> NDArray[np.float64]:
    arr, single = _as_batch(net, x)
    z = arr @ net.W1.T + net.b1
    return z[0] if single else z


def forward_hidden(net: DenseNet, x: ArrayLike) -> NDArray[np.float64]:
    """ReLU hidden activations for one spectrum (D,) or a batch (N, D)."""
    return np.maximum(hidden_preactivation(net, x), 0.0)


def logits(net: DenseNet, x: ArrayLike) -> NDArray[np.float64]:
    return forward_hidden(net, x) @ net.W2.T + net.b2


def softmax(z: NDArray[np.float64]) -> NDArray[np.float64]:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def forward_proba(net: DenseNet, x: ArrayLike) -> NDArray[np.float64]:
    return softmax(logits(net, x))


def loss_sparse_ce(probs: ArrayLike, label: Union[int, ArrayLike]) -> Union[float, NDArray[np.float64]]:
    """Negative log-probability of the true class, floored at 1e-12.

    Accepts a single probability vector with an integer label, or an (N, C)
    matrix with N labels (returns the N per-sample losses).
    """
    p = np.asarray(probs, dtype=np.float64)
    lab = np.asarray(label)
    c = p.shape[-1]
    if np.any(lab < 0) or np.any(lab >= c):
        raise ValueError(f"label out of range [0, {c})")
    if p.ndim == 1:
        return float(-math.log(max(p[int(lab)], PROB_FLOOR)))
    picked = p[np.arange(p.shape[0]), lab.astype(np.int64)]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def backward_batch(
    net: DenseNet, x: ArrayLike, labels: ArrayLike
) -> Tuple[Gradients, NDArray[np.float64], NDArray[np.float64]]:
    """Gradient of the batch-mean loss.

    Returns (gradients, per-sample losses, probabilities). ReLU'(0) is taken
    as 0. The loss floor is treated as inactive for the gradient.
    """
    X, _ = _as_batch(net, x)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = X.shape[0]
    if y.shape[0] != n:
        raise DimensionError(f"{n} spectra but {y.shape[0]} labels")
    C = net.W2.shape[0]
    if np.any(y < 0) or np.any(y >= C):
        raise ValueError(f"label out of range [0, {C})")

    z1 = X @ net.W1.T + net.b1
    h = np.maximum(z1, 0.0)
    probs = softmax(h @ net.W2.T + net.b2)
    losses = loss_sparse_ce(probs, y)

    dz2 = probs.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    gW2 = dz2.T @ h
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ net.W2) * (z1 > 0.0)
    gW1 = dz1.T @ X
    gb1 = dz1.sum(axis=0)
    return Gradients(gW1, gb1, gW2, gb2), losses, probs


def backward(net: DenseNet, s: ArrayLike, label: int) -> Gradients:
    """Analytic gradient of the single-sample loss w.r.t. every parameter."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise DimensionError("backward takes a single spectrum; use backward_batch")
    grads, _, _ = backward_batch(net, s[None, :], [label])
    return grads


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: Sequence[NDArray[np.float64]], grads: Sequence[NDArray[np.float64]]) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Adam:
    """Adam with bias correction; epsilon is added to sqrt(v_hat)."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-7):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m: Optional[List[NDArray[np.float64]]] = None
        self._v: Optional[List[NDArray[np.float64]]] = None

    def step(self, params: Sequence[NDArray[np.float64]], grads: Sequence[NDArray[np.float64]]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


def make_optimizer(cfg: TrainConfig) -> Union[Adam, SGD]:
    if cfg.optimizer is Optimizer.ADAM:
        return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    return SGD(cfg.learning_rate)


def train(train_set: SpectralLibrary, cfg: TrainConfig) -> Tuple[DenseNet, TrainHistory]:
    """Mini-batch training.

    One generator seeded with ``cfg.seed`` initialises W1, then W2, then
    supplies one permutation of the training rows per epoch. The final short
    batch of an epoch is kept; gradients are averaged over the actual batch.
    Epoch loss and accuracy are computed from the forward passes made during
    that epoch, before each batch's update.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    index, y = encode_labels(train_set)
    X = train_set.reflectance
    n, D = X.shape
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds training-set size {n}")

    rng = np.random.default_rng(cfg.seed)
    net0 = init_net(D, cfg.hidden_size, len(index), rng, index, train_set.grid)
    params = [np.array(a) for a in (net0.W1, net0.b1, net0.W2, net0.b2)]
    work = _Workspace(*params)
    opt = make_optimizer(cfg)
    history = TrainHistory()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            # Divergence is detected below; silence the overflow chatter leading up to it.
            with np.errstate(over="ignore", invalid="ignore"):
                grads, losses, probs = backward_batch(work, X[idx], y[idx])
            batch_loss = float(losses.sum())
            if not math.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            loss_sum += batch_loss
            correct += int(np.sum(np.argmax(probs, axis=1) == y[idx]))
            opt.step(params, grads.as_list())
        history.records.append(EpochRecord(epoch, loss_sum / n, correct / n))

    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingError("parameters became non-finite during training")
    net = DenseNet(*params, class_index=index, grid=train_set.grid,
                   train_config=cfg, label_key=train_set.label_key)
    return net, history


class _Workspace:
    """Mutable view of the parameters, duck-typed as a DenseNet for backward_batch."""

    def __init__(self, W1, b1, W2, b2):
        self.W1, self.b1, self.W2, self.b2 = W1, b1, W2, b2


def predict(net: DenseNet, spectra: ArrayLike) -> NDArray[np.int64]:
    """Most probable class per spectrum; ties go to the lowest index."""
    probs = forward_proba(net, spectra)
    return np.atleast_1d(np.argmax(probs, axis=-1)).astype(np.int64)


def model_to_json(net: DenseNet) -> str:
    D, H, C = net.dims
    cfg = net.train_config.to_dict() if net.train_config is not None else None
    doc = {
        "dims": {"D": D, "H": H, "C": C},
        "wavelengths_nm": net.grid.wavelengths_nm.tolist(),
        "class_labels": list(net.class_index.labels),
        "label_key": net.label_key.value,
        "W1": net.W1.ravel().tolist(),
        "b1": net.b1.tolist(),
        "W2": net.W2.ravel().tolist(),
        "b2": net.b2.tolist(),
        "train_config": cfg,
        "seed": cfg["seed"] if cfg is not None else None,
    }
    # json emits floats via repr(), which round-trips exactly.
    return json.dumps(doc, indent=1) + "\n"


def model_from_json(text: str) -> DenseNet:
    doc = json.loads(text)
    try:
        dims = doc["dims"]
        D, H, C = int(dims["D"]), int(dims["H"]), int(dims["C"])
        W1 = np.array(doc["W1"], dtype=np.float64)
        W2 = np.array(doc["W2"], dtype=np.float64)
        if W1.size != H * D or W2.size != C * H:
            raise DimensionError("weight arrays do not match declared dims")
        cfg = doc.get("train_config")
        return DenseNet(
            W1.reshape(H, D),
            np.array(doc["b1"], dtype=np.float64),
            W2.reshape(C, H),
            np.array(doc["b2"], dtype=np.float64),
            class_index=ClassIndex(tuple(doc["class_labels"])),
            grid=WavelengthGrid(np.array(doc["wavelengths_nm"], dtype=np.float64)),
            train_config=TrainConfig(**cfg) if cfg else None,
            label_key=doc.get("label_key", LabelKey.SPECIES.value),
        )
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc}") from None


def save_model(net: DenseNet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(net))


def load_model(path) -> DenseNet:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())
