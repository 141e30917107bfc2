import json

import numpy as np
import pytest

from foloc import mecf
from foloc.errors import DegenerateMotifError, InvalidInputError
from foloc.mecf import (
    MECFParams,
    MotifField,
    assemble_field,
    compute_dmax,
    corr2d,
    delay_embed,
    field_distance,
    field_distance_matrix,
    get_kernel,
    motif,
    motif_correlation_sequence,
    read_field,
    trajectory_fields,
    write_field,
)

from oracles import brute_field

BACKENDS = ["python"] + (["cython"] if mecf.BACKEND == "cython" else [])


def test_embed_example():
    x = np.arange(1, 8)
    assert delay_embed(x, 3, 2).tolist() == [[1, 3, 5], [2, 4, 6], [3, 5, 7]]


def test_embed_other():
    xh = delay_embed(np.arange(1, 11), 2, 3)
    assert xh.shape == (7, 2)
    assert xh[0].tolist() == [1, 4] and xh[-1].tolist() == [7, 10]


@pytest.mark.parametrize("x,m,tau", [(np.arange(5), 1, 1), (np.arange(5), 3, 0), (np.arange(4), 3, 2)])
def test_embed_errors(x, m, tau):
    with pytest.raises(InvalidInputError):
        delay_embed(x, m, tau)


def test_motif_last_window():
    T = 40
    xh = delay_embed(np.arange(1, T + 1), 3, 2)
    M = motif(xh, 3, 2, T - 9)  # zero-based start of the last window
    assert M.tolist() == [[T - 8, T - 6, T - 4], [T - 6, T - 4, T - 2], [T - 4, T - 2, T]]


def test_motif_first_rows_and_range():
    xh = delay_embed(np.arange(1, 11), 3, 2)
    assert np.array_equal(motif(xh, 2, 1, 0), xh[:2])
    with pytest.raises(InvalidInputError):
        motif(xh, 3, 2, len(xh) - 4)


def test_corr2d_examples():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3))
    assert corr2d(A, A) == pytest.approx(1.0)
    assert corr2d(A, 2 * A + 3) == pytest.approx(1.0)
    assert corr2d(A, -A) == pytest.approx(-1.0)
    assert corr2d([[1, 2], [3, 4]], [[1, 2], [4, 3]]) == pytest.approx(0.8, abs=1e-15)


def test_corr2d_errors():
    with pytest.raises(DegenerateMotifError, match="degenerate"):
        corr2d(np.ones((2, 2)), np.eye(2))
    with pytest.raises(InvalidInputError):
        corr2d(np.ones((2, 2)), np.ones((3, 2)))


def test_sequence_sinusoid_signatures():
    p = 40
    x = np.sin(2 * np.pi * np.arange(1000) / p)
    xh = delay_embed(x, 3, 2)
    assert motif_correlation_sequence(xh, 3, p).min() >= 0.99
    assert motif_correlation_sequence(xh, 3, p // 2).max() <= -0.99


def test_sequence_white_noise_mean():
    x = np.random.default_rng(5).normal(size=1000)
    xh = delay_embed(x, 3, 2)
    # displacements that are multiples of the delay reuse samples across
    # columns and carry a genuine negative bias, so use coprime ones
    for d in (3, 7, 11):
        assert abs(motif_correlation_sequence(xh, 3, d).mean()) < 0.1


def test_sequence_empty_when_no_pairs():
    xh = delay_embed(np.arange(15.0), 3, 2)
    assert motif_correlation_sequence(xh, 3, 4).size == 0


@pytest.mark.parametrize("T,expect", [(3000, (1497, 998, 998)), (15, (4, 3, 3)), (8, (1, 1, 1))])
def test_compute_dmax(T, expect):
    assert tuple(compute_dmax(T, 3, 2, 3)) == expect


def test_compute_dmax_ceiling_and_short():
    assert compute_dmax(3000, 3, 2, 3, 64).effective == 64
    with pytest.raises(InvalidInputError, match="too short"):
        compute_dmax(7, 3, 2, 3)


def test_params_validation():
    with pytest.raises(InvalidInputError):
        MECFParams(m=1)
    with pytest.raises(InvalidInputError):
        MECFParams(d_max=0)
    assert MECFParams().min_length() == 8
    assert MECFParams(d_max=5).resolve_dmax(3000) == 5
    assert MECFParams(d_max=5000, d_ceiling=None).resolve_dmax(3000) == 998


@pytest.mark.parametrize("backend", BACKENDS)
def test_brute_force_white_noise(backend):
    x = np.random.default_rng(20).normal(size=20)
    F = assemble_field(x, backend=backend).values
    assert F.shape == (5, 13)
    assert np.max(np.abs(F - brute_field(x))) <= 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_brute_force_other_params(backend):
    rng = np.random.default_rng(8)
    for m, tau, n in [(2, 1, 2), (4, 1, 3), (3, 3, 4)]:
        x = rng.normal(size=30)
        F = assemble_field(x, MECFParams(m, tau, n), backend=backend).values
        assert np.max(np.abs(F - brute_field(x, m, tau, n))) <= 1e-12


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    x = np.cumsum(np.random.default_rng(1).normal(size=600))
    a = assemble_field(x, backend="python")
    b = assemble_field(x, backend="cython")
    assert np.max(np.abs(a.values - b.values)) < 1e-12
    assert a.degenerate == b.degenerate


def test_single_row_field():
    # T = 9 leaves one displacement and two columns
    x = np.array([0.0, 1.0, 3.0, 2.0, 5.0, 4.0, 7.0, 9.0, 6.0])
    f = assemble_field(x)
    G, _ = get_kernel()(x, 3, 2, 3, 1)
    assert f.shape == (1, 2)
    assert f.values[0, 0] == f.values[0, 1] == pytest.approx(G[0, 0] + G[0, 1])


def test_rotation_symmetry_and_bounds():
    x = np.random.default_rng(3).normal(size=400)
    F = assemble_field(x).values
    assert np.array_equal(F, F[::-1, ::-1])
    assert np.all(np.abs(F) <= 2 + 1e-12)


def test_degenerate_counter():
    f = assemble_field(np.ones(30))
    assert not f.values.any()
    R = 30 - 4
    assert f.degenerate == sum(R - 3 * d for d in range(1, f.d_max + 1))
    step = np.r_[np.zeros(15), np.ones(15)]
    assert 0 < assemble_field(step).degenerate < f.degenerate


def test_field_input_errors():
    with pytest.raises(InvalidInputError):
        assemble_field(np.r_[np.arange(10.0), np.nan])
    with pytest.raises(InvalidInputError):
        assemble_field(np.ones((3, 10)))
    with pytest.raises(InvalidInputError, match="too short"):
        assemble_field(np.arange(7.0))


def test_field_distance_examples():
    p = MECFParams()
    a = MotifField(np.array([[0.0, 0.0]]), p, 9)
    b = MotifField(np.array([[3.0, 4.0]]), p, 9)
    assert field_distance(a, b) == 5.0
    assert field_distance(a, a) == 0.0
    x, y = (assemble_field(np.random.default_rng(s).normal(size=200)) for s in (1, 2))
    assert field_distance(x, y) == field_distance(y, x)
    with pytest.raises(InvalidInputError):
        field_distance(a, x)


def test_distance_matrix_matches_direct():
    rng = np.random.default_rng(4)
    fields = trajectory_fields(rng.normal(size=(6, 300)))
    D = field_distance_matrix(fields)
    direct = np.array([[field_distance(a, b) for b in fields] for a in fields])
    assert np.allclose(D, direct, rtol=1e-10, atol=1e-12)
    assert np.array_equal(D, D.T) and not np.diag(D).any()
    # identical fields must come out exactly zero
    D2 = field_distance_matrix([fields[0], fields[0], fields[1]])
    assert D2[0, 1] == 0.0


def test_field_csv_sidecar(tmp_path):
    f = assemble_field(np.random.default_rng(2).normal(size=100))
    side = write_field(f, tmp_path / "f.csv", {"node": 4})
    meta = json.loads(side.read_text())
    assert meta["node"] == 4 and meta["d_max"] == f.d_max and meta["params"]["m"] == 3
    assert "degenerate_pairs" in meta
    back = read_field(tmp_path / "f.csv")
    assert np.array_equal(back.values, f.values) and back.params == f.params


def test_field_is_read_only():
    f = assemble_field(np.arange(30.0) ** 2)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_periodicity_signature_rows():
    p = 20
    x = np.sin(2 * np.pi * np.arange(4000) / p)
    G, _ = get_kernel()(x, 3, 2, 3, p)
    assert G[p - 1].mean() > 0.95
    assert G[p // 2 - 1].mean() < -0.95


def test_pure_python_switch():
    import subprocess
    import sys

    code = "import foloc.mecf as m; print(m.BACKEND)"
    env = {**__import__("os").environ, "FOLOC_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
