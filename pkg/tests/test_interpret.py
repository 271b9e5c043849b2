import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vegspec.interpret import (
    active_neurons,
    class_reliance,
    logit_decomposition_check,
    report_files,
    spectral_activation,
    wavelength_activity,
)
from vegspec.net import DimensionError, TrainConfig, init_net, train
from vegspec.spectra import WavelengthGrid
from vegspec.synth import SynthSpec, generate_library


def _net_with(W1=None, W2=None, b1=None, b2=None, D=3, H=3, C=2):
    net = init_net(D, H, C, seed=0)
    kw = {k: np.asarray(v, float) for k, v in dict(W1=W1, W2=W2, b1=b1, b2=b2).items() if v is not None}
    return net.replace(**kw)


# ---------------------------------------------------------------- active neurons


def test_constant_row_inactive_and_alternating_row_active():
    W1 = np.vstack([np.full(8, 0.3), np.tile([0.2, -0.2], 4)])
    act = active_neurons(W1)
    assert act.indices == (1,)
    assert act.row_std[0] == 0.0
    assert act.row_std[1] == pytest.approx(0.2, abs=1e-15)


def test_infinite_threshold_gives_empty_set(rng):
    assert active_neurons(rng.normal(size=(5, 7)), math.inf).indices == ()


def test_threshold_is_strict():
    W1 = np.tile([0.5, -0.5], (2, 2))
    assert active_neurons(W1, 0.5).indices == ()
    assert active_neurons(W1, 0.4999).indices == (0, 1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), t1=st.floats(0, 2), t2=st.floats(0, 2))
def test_active_set_monotone_in_threshold(seed, t1, t2):
    W1 = np.random.default_rng(seed).normal(0, 0.5, (10, 6))
    lo, hi = sorted((t1, t2))
    assert set(active_neurons(W1, hi).indices) <= set(active_neurons(W1, lo).indices)


# ---------------------------------------------------------------- wavelength activity


def test_wavelength_activity_hand_case():
    W1 = np.array([[1.0, 0.0], [9.0, 9.0], [3.0, 2.0]])
    act = active_neurons(W1, 0.0)
    act = type(act)((0, 2), 0.0, act.row_std)  # only rows 0 and 2
    wa = wavelength_activity(W1, act, [500.0, 600.0])
    np.testing.assert_array_equal(wa.mean_weight, [2.0, 1.0])
    np.testing.assert_array_equal(wa.std_weight, [1.0, 1.0])
    np.testing.assert_array_equal(wa.wavelengths_nm, [500.0, 600.0])


def test_single_active_row():
    W1 = np.array([[0.0, 0.0, 0.0], [0.5, -0.5, 0.1]])
    act = active_neurons(W1, 0.1)
    assert act.indices == (1,)
    wa = wavelength_activity(W1, act)
    np.testing.assert_array_equal(wa.mean_weight, W1[1])
    np.testing.assert_array_equal(wa.std_weight, 0.0)


def test_duplicated_rows_have_zero_spread():
    row = np.array([0.4, -0.3, 0.2, 0.0])
    W1 = np.vstack([row, row])
    wa = wavelength_activity(W1, active_neurons(W1, 0.1))
    np.testing.assert_array_equal(wa.mean_weight, row)
    np.testing.assert_array_equal(wa.std_weight, 0.0)


def test_wavelength_activity_requires_active_rows():
    W1 = np.zeros((3, 4))
    with pytest.raises(ValueError, match="no active neurons"):
        wavelength_activity(W1, active_neurons(W1))


# ---------------------------------------------------------------- reliance / activation


def test_class_reliance_threshold():
    net = _net_with(W2=[[0.5, -2.0, 1.5], [0.0, 0.0, 0.0]])
    assert class_reliance(net, 0).reliant_indices == (1, 2)
    assert class_reliance(net, 1).reliant_indices == ()
    assert class_reliance(net, 0, 0.0).reliant_indices == (0, 1, 2)
    with pytest.raises(IndexError):
        class_reliance(net, 2)


def test_spectral_activation_curve_is_scalar_row_product():
    W1 = [[0.1, -0.3], [0.7, 0.2], [1.0, 1.0]]
    net = _net_with(W1=W1, W2=[[2.0, 0.0, -0.5], [0.0, 0.0, 0.0]], D=2, H=3)
    sa = spectral_activation(net, 0, [0.3, 0.4], magnitude_threshold=1.0)
    assert list(sa.curves) == [0]
    assert sa.curves[0].tolist() == [2.0 * 0.1, 2.0 * -0.3]
    np.testing.assert_array_equal(sa.class_mean, [0.3, 0.4])
    # zero weight is excluded even at threshold 0 (strict inequality)
    sa0 = spectral_activation(net, 0, [0.3, 0.4], magnitude_threshold=0.0)
    assert sorted(sa0.curves) == [0, 2]


def test_spectral_activation_empty_has_note():
    net = _net_with(W2=np.zeros((2, 3)))
    sa = spectral_activation(net, 1, np.zeros(3))
    assert sa.curves == {}
    assert "no layer-2 weight" in sa.note


def test_spectral_activation_checks_mean_length():
    net = _net_with()
    with pytest.raises(DimensionError):
        spectral_activation(net, 0, np.zeros(4), 0.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.1, 10.0))
def test_curves_exact_and_invariant_to_rescaling(seed, alpha):
    r = np.random.default_rng(seed)
    net = init_net(6, 4, 3, r).replace(W2=r.normal(0, 2, (3, 4)))
    j = int(r.integers(4))
    W1, W2 = np.array(net.W1), np.array(net.W2)
    W1[j] *= alpha
    W2[:, j] /= alpha
    scaled = net.replace(W1=W1, W2=W2)
    for c in range(3):
        sa = spectral_activation(net, c, np.zeros(6), 0.0)
        for k, curve in sa.curves.items():
            assert np.array_equal(curve, net.W2[c, k] * net.W1[k, :])
        if j in sa.curves:
            np.testing.assert_allclose(scaled.W2[c, j] * scaled.W1[j, :], sa.curves[j],
                                       rtol=1e-14, atol=1e-15)


# ---------------------------------------------------------------- logit decomposition


def test_logit_decomposition_zero_net():
    net = _net_with(W1=np.zeros((3, 3)), W2=np.zeros((2, 3)))
    assert logit_decomposition_check(net, np.ones(3), 0) == 0.0


def test_logit_decomposition_random_and_scaled(small_net, rng):
    for _ in range(50):
        s = rng.uniform(0, 1, 10)
        c = int(rng.integers(3))
        assert logit_decomposition_check(small_net, s, c) <= 1e-10
        assert logit_decomposition_check(small_net, 10 * s, c) <= 1e-9


# ---------------------------------------------------------------- report files


@pytest.fixture(scope="module")
def trained():
    lib = generate_library(SynthSpec(n_classes=3, per_class=10,
                                     grid=WavelengthGrid.uniform(400, 2500, 60), seed=2))
    net, _ = train(lib, TrainConfig(epochs=200, batch_size=10, hidden_size=8, seed=2, learning_rate=1e-2))
    return net, lib


def test_report_contents(trained):
    net, lib = trained
    files = report_files(net, lib, std_threshold=0.1, magnitude_threshold=1.0)
    import json
    summary = json.loads(files["active_neurons.json"])
    assert summary["indices"] == list(active_neurons(net.W1, 0.1).indices)
    assert summary["indices"], "expected some active neurons after training at lr 1e-2"
    for label in net.class_index.labels:
        for kind in ("reliance", "activation"):
            assert f"{kind}_{label}.csv" in files and f"{kind}_{label}.svg" in files
    header = files["activation_synth_00.csv"].decode().splitlines()[0]
    reliant = class_reliance(net, 0).reliant_indices
    assert header == ",".join(["wavelength_nm", "class_mean"] + [f"curve_{j}" for j in reliant])
    rows = files["wavelength_activity.csv"].decode().splitlines()
    assert rows[0] == "wavelength_nm,mean,std" and len(rows) == 61
    pgm = files["layer1_weights.pgm"]
    assert pgm.startswith(b"P5\n60 8\n255\n") and len(pgm) == len(b"P5\n60 8\n255\n") + 480
    assert files["wavelength_activity.svg"].startswith(b"<svg")


def test_report_is_deterministic(trained):
    net, lib = trained
    assert report_files(net, lib) == report_files(net, lib)


def test_report_without_active_neurons(trained):
    net, lib = trained
    files = report_files(net, lib, std_threshold=1e9)
    assert "wavelength_activity.csv" not in files
    assert "layer1_active_weights.pgm" not in files
    assert b"no active neurons" in files["active_neurons.json"]


def test_report_requires_every_class(trained):
    net, lib = trained
    only_first = lib.subset([i for i, s in enumerate(lib.spectra) if s.species == "synth_00"])
    with pytest.raises(ValueError, match="synth_01"):
        report_files(net, only_first)
