import json

import numpy as np
import pytest

from sparsink import KernelMatrix, FrameImage, new_measure, poisson_sparsify, uniform_probabilities
from sparsink import io
from sparsink.cli import EXIT_DEGENERATE, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, main, parse_budget
from sparsink.errors import InputError
from sparsink.harness import moving_blob_sequence, s0


def test_measure_csv_roundtrip(tmp_path, rng):
    m = new_measure(rng.random(5), rng.random((5, 3)))
    p = tmp_path / "m.csv"
    io.write_measure_csv(p, m)
    assert p.read_text().splitlines()[0] == "weight,x1,x2,x3"
    back = io.read_measure_csv(p)
    np.testing.assert_array_equal(back.weights, m.weights)
    np.testing.assert_array_equal(back.support, m.support)


def test_measure_csv_bad(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("weight,x1\n0.5,0\n0.5\n")
    with pytest.raises(InputError):
        io.read_measure_csv(p)


def test_pgm_roundtrip(tmp_path):
    img = FrameImage(np.arange(12).reshape(3, 4) / 11)
    p = tmp_path / "f.pgm"
    io.write_pgm(p, img)
    back = io.read_pgm(p)
    np.testing.assert_allclose(back.pixels, img.pixels, atol=0.5 / 255)


def test_pgm_ascii_with_comment(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_text("P2\n# comment\n2 2\n4\n0 1\n2 4\n")
    np.testing.assert_array_equal(io.read_pgm(p).pixels, [[0, 0.25], [0.5, 1.0]])


def test_pgm_16bit(tmp_path):
    p = tmp_path / "w.pgm"
    io.write_pgm(p, FrameImage([[0.0, 1.0]]), maxval=1000)
    np.testing.assert_array_equal(io.read_pgm(p).pixels, [[0.0, 1.0]])


def test_matrix_roundtrip(tmp_path, rng):
    a = rng.random((3, 5))
    p = tmp_path / "m.bin"
    io.write_matrix(p, a)
    raw = p.read_bytes()
    assert raw[:8] == io.MATRIX_MAGIC and len(raw) == 24 + 8 * 15
    np.testing.assert_array_equal(io.read_matrix(p), a)
    p.write_bytes(raw[:-8])
    with pytest.raises(InputError):
        io.read_matrix(p)


def test_sketch_triplets(tmp_path, rng):
    k = np.exp(-rng.random((10, 10)))
    K = KernelMatrix(k, 1.0, 1.0)
    sk = poisson_sparsify(K, uniform_probabilities(K), s=40, seed=2)
    p = tmp_path / "sk.csv"
    io.write_sketch(p, sk)
    rows, cols, vals, meta = io.read_sketch_triplets(p)
    dense = np.zeros((10, 10))
    dense[rows, cols] = vals
    np.testing.assert_array_equal(dense, sk.toarray())
    assert meta["seed"] == 2 and meta["realized_nnz"] == sk.realized_nnz and meta["kind"] == "uniform"


def test_parse_budget():
    assert parse_budget("500", 100) == 500.0
    assert parse_budget("8s0", 100) == pytest.approx(8 * s0(100))
    with pytest.raises(InputError):
        parse_budget("lots", 10)


def _write_pair(tmp_path, rng, n=20, mass=(1.0, 1.0)):
    x = rng.random((n, 2))
    a, b = rng.random(n) + 0.1, rng.random(n) + 0.1
    io.write_measure_csv(tmp_path / "a.csv", new_measure(mass[0] * a / a.sum(), x))
    io.write_measure_csv(tmp_path / "b.csv", new_measure(mass[1] * b / b.sum(), x))
    return str(tmp_path / "a.csv"), str(tmp_path / "b.csv")


def test_cli_ot(tmp_path, rng, capsys):
    a, b = _write_pair(tmp_path, rng)
    out = tmp_path / "r.json"
    plan = tmp_path / "plan.bin"
    code = main(["ot", "--a", a, "--b", b, "--eps", "0.5", "--out", str(out), "--plan", str(plan)])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["converged"] and rep["residual_row"] < 1e-5
    assert io.read_matrix(plan).shape == (20, 20)


def test_cli_ot_spar(tmp_path, rng):
    a, b = _write_pair(tmp_path, rng)
    out = tmp_path / "r.json"
    code = main(["ot", "--a", a, "--b", b, "--eps", "0.5", "--spar", "300", "--seed", "4", "--orphans", "drop", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    assert json.loads(out.read_text())["seed"] == 4


def test_cli_uot_wfr(tmp_path, rng):
    a, b = _write_pair(tmp_path, rng, mass=(5.0, 3.0))
    out = tmp_path / "r.json"
    code = main(["uot", "--a", a, "--b", b, "--eps", "0.1", "--lambda", "0.1", "--eta", "0.5", "--out", str(out)])
    assert code == EXIT_OK
    assert "wfr_distance" in json.loads(out.read_text())


def test_cli_exit_codes(tmp_path, rng):
    a, b = _write_pair(tmp_path, rng, n=60)
    assert main(["ot", "--a", a, "--b", b, "--eps", "0.5", "--spar", "20"]) == EXIT_DEGENERATE
    assert main(["ot", "--a", a, "--b", b, "--eps", "0.01", "--max-iter", "2"]) == EXIT_NOT_CONVERGED
    assert main(["ot", "--a", a, "--b", str(tmp_path / "missing.csv"), "--eps", "0.5"]) == EXIT_INPUT
    assert main(["uot", "--a", a, "--b", b, "--eps", "0.5", "--lambda", "1"]) == EXIT_INPUT  # wfr needs --eta
    bad = tmp_path / "neg.csv"
    bad.write_text("weight,x1\n-1,0\n2,1\n")
    assert main(["ot", "--a", str(bad), "--b", str(bad), "--eps", "0.5"]) == EXIT_INPUT


def test_cli_barycenter(tmp_path, rng):
    d = tmp_path / "ms"
    d.mkdir()
    x = rng.random((15, 2))
    for k in range(3):
        w = rng.random(15) + 0.1
        io.write_measure_csv(d / f"b{k}.csv", new_measure(w / w.sum(), x))
    (tmp_path / "w.csv").write_text("0.2\n0.3\n0.5\n")
    out = tmp_path / "q.csv"
    code = main(["barycenter", "--measures", str(d), "--weights", str(tmp_path / "w.csv"), "--eps", "0.5", "--out", str(out)])
    assert code == EXIT_OK
    q = io.read_weights_csv(out)
    assert q.shape == (15,) and q.sum() == pytest.approx(1.0, abs=1e-5)
    meta = json.loads((tmp_path / "q.csv.json").read_text())
    assert meta["m"] == 3 and meta["n"] == 15 and meta["s"] is None
    code = main(["barycenter", "--measures", str(d), "--eps", "0.5", "--spar", "200", "--orphans", "drop", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    assert json.loads((tmp_path / "q.csv.json").read_text())["s"] == 200


def test_cli_bench_rmae_and_timing(tmp_path):
    out = tmp_path / "rmae.csv"
    code = main(["bench", "rmae", "--scenario", "C1", "--n", "60", "--d", "2", "--eps", "0.5", "--reps", "2",
                 "--multipliers", "2", "8", "--out", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("method,baseline") and len(lines) == 5
    out2 = tmp_path / "timing.csv"
    code = main(["bench", "timing", "--n", "50", "100", "--d", "2", "--eps", "0.5", "--max-iter", "30",
                 "--budget", "500", "--out", str(out2)])
    assert code == EXIT_OK
    assert "time_per_iteration_s" in out2.read_text().splitlines()[0]


def test_cli_cardio(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    seq = moving_blob_sequence(size=10, n_frames=5, seed=1, max_shift=3.0)
    for k, f in enumerate(seq.frames):
        io.write_pgm(d / f"{k:03d}.pgm", f)
    out = tmp_path / "dist.csv"
    code = main(["cardio", "--frames", str(d), "--eta", "2", "--lambda", "1", "--eps", "0.01", "--stride", "1",
                 "--es", "0", "--out", str(out)])
    assert code == EXIT_OK
    D = np.loadtxt(out, delimiter=",")
    assert D.shape == (5, 5)
    np.testing.assert_array_equal(D, D.T)
    meta = json.loads((tmp_path / "dist.csv.json").read_text())
    assert meta["failed_pairs"] == [] and "predicted_ed" in meta
