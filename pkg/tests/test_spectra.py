import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vegspec.spectra import (
    ClassIndex,
    LabelKey,
    LibraryFormatError,
    Spectrum,
    WavelengthGrid,
    class_counts,
    class_means,
    encode_labels,
    parse_library,
    serialize_library,
    stratified_split,
)
from vegspec.synth import SynthSpec, generate_library, template_of


# ---------------------------------------------------------------- parsing


def test_parse_minimal_file():
    lib = parse_library("id,species,health,growth_stage,500,600\na,X,,,0.1,0.2\n")
    assert lib.n_bands == 2
    assert len(lib) == 1
    assert lib.spectra[0].species == "X"
    assert lib.spectra[0].health is None and lib.spectra[0].growth_stage is None
    np.testing.assert_array_equal(lib.grid.wavelengths_nm, [500.0, 600.0])
    np.testing.assert_array_equal(lib.reflectance, [[0.1, 0.2]])


def test_parse_without_trailing_newline_and_crlf():
    lib = parse_library("id,species,health,growth_stage,500,600\r\na,X,h,g,0.1,0.2")
    assert lib.spectra[0].growth_stage == "g"
    np.testing.assert_array_equal(lib.reflectance, [[0.1, 0.2]])


def test_parse_rejects_non_monotonic_header():
    with pytest.raises(LibraryFormatError, match="non-monotonic wavelengths"):
        parse_library("id,species,health,growth_stage,600,500\na,X,,,0.1,0.2\n")


def test_parse_rejects_duplicate_wavelength():
    with pytest.raises(LibraryFormatError, match="non-monotonic"):
        parse_library("id,species,health,growth_stage,500,500\na,X,,,0.1,0.2\n")


def test_parse_names_row_with_wrong_length():
    text = "id,species,health,growth_stage,500,600\na,X,,,0.1,0.2\nb,X,,,0.3\n"
    with pytest.raises(LibraryFormatError, match="line 3"):
        parse_library(text)


@pytest.mark.parametrize("bad, message", [
    ("abc", "non-numeric"),
    ("nan", "non-finite"),
    ("inf", "non-finite"),
])
def test_parse_rejects_bad_reflectance(bad, message):
    text = f"id,species,health,growth_stage,500,600\na,X,,,0.1,{bad}\n"
    with pytest.raises(LibraryFormatError, match=rf"line 2: {message}"):
        parse_library(text)


def test_parse_rejects_empty_species():
    with pytest.raises(LibraryFormatError, match="line 2: empty species"):
        parse_library("id,species,health,growth_stage,500\na,,,,0.1\n")


def test_parse_rejects_bad_header():
    with pytest.raises(LibraryFormatError, match="line 1"):
        parse_library("id,name,health,growth_stage,500\na,X,,,0.1\n")
    with pytest.raises(LibraryFormatError, match="line 1"):
        parse_library("id,species,health,growth_stage\n")
    with pytest.raises(LibraryFormatError):
        parse_library("")


def test_grid_invariants():
    with pytest.raises(ValueError):
        WavelengthGrid(np.array([500.0, 400.0]))
    with pytest.raises(ValueError):
        WavelengthGrid(np.array([0.0, 400.0]))
    with pytest.raises(ValueError):
        WavelengthGrid(np.array([400.0, np.inf]))


def test_spectrum_invariants():
    with pytest.raises(ValueError):
        Spectrum("a", "", np.zeros(2))
    with pytest.raises(ValueError):
        Spectrum("a", "X", np.array([0.1, np.nan]))


def test_library_rejects_length_mismatch(library_factory):
    with pytest.raises(ValueError, match="grid has 2 bands"):
        library_factory([("X", [0.1, 0.2, 0.3])])


_label = st.text(alphabet=st.characters(blacklist_characters=",\n\r", blacklist_categories=("Cs",)),
                 min_size=1, max_size=8)
_optional = st.one_of(st.just(None), _label)


@settings(max_examples=60, deadline=None)
@given(
    rows=st.lists(
        st.tuples(_label, _label, _optional, _optional,
                  st.lists(st.floats(-10, 10, allow_nan=False, width=64), min_size=3, max_size=3)),
        min_size=1, max_size=6,
    )
)
def test_serialize_parse_round_trip(rows):
    from vegspec.spectra import SpectralLibrary
    spectra = tuple(Spectrum(i, sp, np.array(r), h, g) for i, sp, h, g, r in rows)
    lib = SpectralLibrary(WavelengthGrid(np.array([400.5, 1000.0, 2499.9999999])), spectra)
    again = parse_library(serialize_library(lib))
    assert again == lib
    for a, b in zip(again.spectra, lib.spectra):
        assert a.reflectance.tobytes() == b.reflectance.tobytes()


def test_serialize_refuses_commas(library_factory):
    lib = library_factory([("X,Y", [0.1, 0.2])])
    with pytest.raises(ValueError, match="comma"):
        serialize_library(lib)


# ---------------------------------------------------------------- labels & statistics


def test_class_counts(library_factory):
    lib = library_factory([("X", [0, 0])] * 3 + [("Y", [0, 0])] * 2)
    assert class_counts(lib) == {"X": 3, "Y": 2}


def test_composite_label_renders_missing_as_na(library_factory):
    lib = library_factory([("X", None, None, [0, 0]), ("X", "stressed", None, [0, 0])],
                          label_key="composite")
    assert class_counts(lib) == {"X_NA_NA": 1, "X_stressed_NA": 1}


def test_class_counts_sum_to_size_at_full_library_scale():
    # 902 spectra in 18 classes, as in the published library size.
    sizes = [51] * 2 + [50] * 16
    assert sum(sizes) == 902
    spec = SynthSpec(n_classes=18, per_class=2, grid=WavelengthGrid.uniform(400, 2500, 20), seed=1)
    base = generate_library(spec)
    from vegspec.spectra import SpectralLibrary
    spectra = []
    for c, n in enumerate(sizes):
        proto = base.spectra[2 * c]
        spectra += [Spectrum(f"{proto.species}_{k}", proto.species, proto.reflectance) for k in range(n)]
    lib = SpectralLibrary(base.grid, tuple(spectra))
    counts = class_counts(lib)
    assert len(counts) == 18
    assert sum(counts.values()) == 902


def test_class_means_hand_cases(library_factory):
    lib = library_factory([("A", [0.2, 0.4])] * 3 + [("B", [0.0, 0.0]), ("B", [1.0, 1.0])])
    index, means = class_means(lib)
    assert index.labels == ("A", "B")
    np.testing.assert_allclose(means[0], [0.2, 0.4], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(means[1], [0.5, 0.5])


def test_class_means_of_noiseless_synth_equal_templates():
    grid = WavelengthGrid.uniform(400, 2500, 64)
    lib = generate_library(SynthSpec(n_classes=4, per_class=5, grid=grid, noise_sigma=0.0, seed=3))
    index, means = class_means(lib)
    for c, label in enumerate(index.labels):
        np.testing.assert_array_equal(means[c], template_of(lib, label).render(grid))


def test_class_means_permutation_equivariant(rng):
    grid = WavelengthGrid.uniform(400, 2500, 16)
    lib = generate_library(SynthSpec(n_classes=3, per_class=6, grid=grid, seed=2))
    perm = rng.permutation(len(lib))
    _, a = class_means(lib)
    _, b = class_means(lib.subset(perm))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_encode_labels(library_factory):
    lib = library_factory([("B", [0, 0]), ("A", [0, 0]), ("B", [0, 0])])
    index, y = encode_labels(lib)
    assert index.labels == ("A", "B")
    assert y.tolist() == [1, 0, 1]


def test_encode_composite_label(library_factory):
    lib = library_factory([("X", "stressed", None, [0, 0]), ("X", "healthy", "seedling", [0, 0])],
                          label_key=LabelKey.SPECIES_HEALTH_STAGE)
    index, y = encode_labels(lib)
    assert index.labels == ("X_healthy_seedling", "X_stressed_NA")
    assert y.tolist() == [1, 0]


def test_encode_eighteen_classes():
    lib = generate_library(SynthSpec(n_classes=18, per_class=2,
                                     grid=WavelengthGrid.uniform(400, 2500, 30), seed=0))
    index, y = encode_labels(lib)
    assert len(index) == 18
    # bijection between labels and 0..C-1
    assert sorted(set(y.tolist())) == list(range(18))
    labels = lib.labels()
    assert all(index.labels[k] == label for k, label in zip(y, labels))


def test_class_index_invariants():
    with pytest.raises(ValueError):
        ClassIndex(("B", "A"))
    with pytest.raises(ValueError):
        ClassIndex(("A",))
    with pytest.raises(KeyError):
        ClassIndex(("A", "B")).index("C")


# ---------------------------------------------------------------- split


def _lib_with_sizes(library_factory, sizes):
    rows = []
    for label, n in sizes.items():
        rows += [(label, [float(k), 0.0]) for k in range(n)]
    return library_factory(rows)


def test_split_counts(library_factory):
    lib = _lib_with_sizes(library_factory, {"A": 10, "B": 2, "C": 5})
    train, test = stratified_split(lib, 0.8, seed=1)
    assert class_counts(train) == {"A": 8, "B": 1, "C": 4}
    assert class_counts(test) == {"A": 2, "B": 1, "C": 1}


def test_split_clamps(library_factory):
    lib = _lib_with_sizes(library_factory, {"A": 2, "B": 2})
    train, test = stratified_split(lib, 0.99, seed=0)
    assert class_counts(train) == {"A": 1, "B": 1}
    assert class_counts(test) == {"A": 1, "B": 1}
    train, test = stratified_split(lib, 0.01, seed=0)
    assert class_counts(train) == {"A": 1, "B": 1}


def test_split_rounds_half_up(library_factory):
    # 0.5 * 5 = 2.5 -> 3
    lib = _lib_with_sizes(library_factory, {"A": 5, "B": 4})
    train, _ = stratified_split(lib, 0.5, seed=0)
    assert class_counts(train) == {"A": 3, "B": 2}


def test_split_deterministic(library_factory):
    lib = _lib_with_sizes(library_factory, {"A": 30, "B": 17})
    a = stratified_split(lib, 0.8, seed=42)
    b = stratified_split(lib, 0.8, seed=42)
    assert [s.id for s in a[0].spectra] == [s.id for s in b[0].spectra]
    assert [s.id for s in a[1].spectra] == [s.id for s in b[1].spectra]
    c = stratified_split(lib, 0.8, seed=43)
    assert [s.id for s in c[0].spectra] != [s.id for s in a[0].spectra]


def test_split_rejects_singleton_class(library_factory):
    lib = _lib_with_sizes(library_factory, {"A": 5, "B": 1})
    with pytest.raises(ValueError, match="B"):
        stratified_split(lib, 0.8, seed=0)


@settings(max_examples=50, deadline=None)
@given(sizes=st.lists(st.integers(2, 25), min_size=2, max_size=5),
       frac=st.floats(0.01, 0.99), seed=st.integers(0, 2**63 - 1))
def test_split_partition_property(sizes, frac, seed):
    from vegspec.spectra import SpectralLibrary
    spectra = []
    for c, n in enumerate(sizes):
        spectra += [Spectrum(f"{c}_{k}", f"c{c}", np.array([float(k)])) for k in range(n)]
    lib = SpectralLibrary(WavelengthGrid(np.array([500.0])), tuple(spectra))
    train, test = stratified_split(lib, frac, seed)
    tr_ids = [s.id for s in train.spectra]
    te_ids = [s.id for s in test.spectra]
    assert not set(tr_ids) & set(te_ids)
    assert sorted(tr_ids + te_ids) == sorted(s.id for s in spectra)
    ctr, cte = class_counts(train), class_counts(test)
    for c, n in enumerate(sizes):
        label = f"c{c}"
        assert ctr[label] + cte[label] == n
        assert ctr[label] >= 1 and cte[label] >= 1
