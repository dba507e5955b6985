"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Desk-scale synthetic experiments use the frozen operating point found by
the harness sweep: batch 4, learning rate 5e-5, model/shuffle seed 0,
dataset seed 7 (the reference defaults of 512 / 1e-5 target far larger
corpora and collapse the tiny 96-sample set).

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import json
import time

import numpy as np
import pytest

from oracles import central_diff_grad, max_rel_error
from zbcae.cae import CaeTrainConfig, init_model, train
from zbcae.cli import dispatch
from zbcae.config import resolve_config
from zbcae.dataset import SyntheticSpec, gen_synthetic, load_dataset
from zbcae.ops import flip180, tied_decoder_weights
from zbcae.svm import LbfgsConfig, lbfgs_minimize, squared_hinge_objective
from zbcae.tensorfile import load_tensors, save_tensors
from zbcae import cae

DESK_CONFIG = """\
filters = 16
epochs = 200
batch_size = 4
learning_rate = 5e-5
seed = 0
"""


def _report(criterion: str, ok: bool) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}")
    assert ok


@pytest.fixture(scope="module")
def signal_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_signal")
    spec = SyntheticSpec(n_classes=3, samples_per_class=40, channels=12,
                         height=6, width=6, mu=2.0, sigma=1.0, seed=7)
    gen_synthetic(spec, out)
    return out


@pytest.fixture(scope="module")
def control_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_control")
    spec = SyntheticSpec(n_classes=3, samples_per_class=40, channels=12,
                         height=6, width=6, mu=0.0, sigma=1.0, seed=7)
    gen_synthetic(spec, out)
    return out


@pytest.fixture(scope="module")
def desk_config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("accept_cfg") / "desk.cfg"
    path.write_text(DESK_CONFIG)
    return path


def test_criterion_1_cae_gradient_fidelity(capsys):
    """Backprop through the tied auto-encoder matches finite differences."""
    start = time.monotonic()
    assert dispatch(["gradcheck", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    elapsed = time.monotonic() - start
    ok = doc["cae_weights"] < 1e-4 and doc["cae_biases"] < 1e-4 and elapsed < 10.0
    with capsys.disabled():
        _report(
            f"criterion 1: CAE gradcheck (weights {doc['cae_weights']:.2e}, "
            f"biases {doc['cae_biases']:.2e} < 1e-4; {elapsed:.1f}s < 10s)",
            ok,
        )


def test_criterion_2_svm_objective_fidelity(capsys):
    """Squared-hinge gradient < 1e-6 against finite differences; midpoint
    convexity holds on 100 random pairs within 1e-9."""
    rng = np.random.default_rng(202)
    x = rng.normal(size=(8, 4))
    y = rng.integers(0, 3, size=8)
    w = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    _, dw, db = squared_hinge_objective(w, b, x, y, lam=1.0)

    def f():
        return squared_hinge_objective(w, b, x, y, lam=1.0)[0]

    grad_err = max(
        max_rel_error(dw, central_diff_grad(f, w)),
        max_rel_error(db, central_diff_grad(f, b)),
    )

    def value(wv, bv):
        return squared_hinge_objective(wv, bv, x, y, lam=1.0)[0]

    convex_ok = True
    for _ in range(100):
        w1, w2 = rng.normal(size=(2, 3, 4))
        b1, b2 = rng.normal(size=(2, 3))
        mid = value((w1 + w2) / 2, (b1 + b2) / 2)
        if mid > 0.5 * value(w1, b1) + 0.5 * value(w2, b2) + 1e-9:
            convex_ok = False
            break

    ok = grad_err < 1e-6 and convex_ok
    with capsys.disabled():
        _report(
            f"criterion 2: SVM objective (gradcheck {grad_err:.2e} < 1e-6; "
            f"midpoint convexity on 100 pairs)",
            ok,
        )


def test_criterion_3_lbfgs_correctness(capsys):
    """Closed-form quadratic minimum within 1e-6; Rosenbrock below 1e-8."""
    start = time.monotonic()
    rng = np.random.default_rng(303)
    m = rng.normal(size=(8, 8))
    a = m @ m.T + 8 * np.eye(8)
    b = rng.normal(size=8)
    x_star = np.linalg.solve(a, b)

    def quad(x):
        return 0.5 * float(x @ a @ x) - float(b @ x), a @ x - b

    # tight tolerances: the default rel_loss_tol can stop a hair short of
    # the 1e-6 accuracy this criterion demands
    quad_result = lbfgs_minimize(quad, np.zeros(8), LbfgsConfig(grad_tol=1e-9, rel_loss_tol=1e-15))
    quad_err = float(np.abs(quad_result.x - x_star).max())

    def rosenbrock(v):
        x, y = v
        f = (1 - x) ** 2 + 100.0 * (y - x * x) ** 2
        g = np.array([-2 * (1 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)])
        return f, g

    rosen = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
    elapsed = time.monotonic() - start
    ok = quad_err < 1e-6 and rosen.value < 1e-8 and elapsed < 5.0
    with capsys.disabled():
        _report(
            f"criterion 3: L-BFGS (quadratic error {quad_err:.2e} < 1e-6; "
            f"Rosenbrock {rosen.value:.2e} < 1e-8; {elapsed:.1f}s < 5s)",
            ok,
        )


def test_criterion_4_tied_weights_and_zero_bias(capsys):
    """flip/transpose involutions; extraction bitwise ignores biases."""
    rng = np.random.default_rng(404)
    bank = rng.normal(size=(4, 3, 3, 3))
    involutions_ok = np.array_equal(flip180(flip180(bank)), bank) and np.array_equal(
        tied_decoder_weights(tied_decoder_weights(bank)), bank
    )

    model = init_model(5, 3, 3, seed=404)
    x = rng.normal(size=(3, 6, 6))
    base = cae.extract_features(model, x)
    bias_ok = True
    for _ in range(10):
        model.b_e = rng.normal(size=5) * rng.uniform(0.1, 1000)
        model.b_d = rng.normal(size=3) * rng.uniform(0.1, 1000)
        feats = cae.extract_features(model, x)
        if not np.array_equal(feats, base):
            bias_ok = False
            break

    ok = involutions_ok and bias_ok
    with capsys.disabled():
        _report(
            "criterion 4: tied-weight involutions and bitwise zero-bias extraction",
            ok,
        )


def test_criterion_5_cae_learning_desk_scale(signal_data, capsys):
    """Reconstruction loss halves in 200 epochs; annealing fires by 600."""
    start = time.monotonic()
    from zbcae.dataset import load_manifest

    tensors, _ = load_dataset(load_manifest(signal_data / "train.json"))

    model = init_model(16, 12, 3, seed=0)
    _, short = train(model, tensors, CaeTrainConfig(
        epochs=200, batch_size=4, learning_rate=5e-5, seed=0))
    halved = short.mean_loss[-1] < 0.5 * short.mean_loss[0]

    model = init_model(16, 12, 3, seed=0)
    _, long = train(model, tensors, CaeTrainConfig(
        epochs=600, batch_size=4, learning_rate=5e-5, plateau_rel_tol=1e-3, seed=0))
    annealed = len(long.anneal_events) >= 1

    elapsed = time.monotonic() - start
    ok = halved and annealed and elapsed < 120.0
    with capsys.disabled():
        _report(
            f"criterion 5: desk-scale CAE learning (loss {short.mean_loss[0]:.1f} -> "
            f"{short.mean_loss[-1]:.1f} in 200 epochs; {len(long.anneal_events)} anneal "
            f"event(s) by epoch 600; {elapsed:.0f}s < 120s)",
            ok,
        )


def test_criterion_6_end_to_end_pipeline(signal_data, control_data, desk_config_file, tmp_path, capsys):
    """run-all reaches top-1 >= 0.90 on the signal set; the mu=0 control
    stays within 0.15 of chance; confusion rows sum to class counts."""
    start = time.monotonic()
    signal_report_path = tmp_path / "signal.json"
    code = dispatch(["run-all",
                     "--train", str(signal_data / "train.json"),
                     "--test", str(signal_data / "test.json"),
                     "--config", str(desk_config_file),
                     "--report", str(signal_report_path)])
    assert code == 0
    control_report_path = tmp_path / "control.json"
    code = dispatch(["run-all",
                     "--train", str(control_data / "train.json"),
                     "--test", str(control_data / "test.json"),
                     "--config", str(desk_config_file),
                     "--report", str(control_report_path)])
    assert code == 0
    capsys.readouterr()

    signal = json.loads(signal_report_path.read_text())["results"]
    control = json.loads(control_report_path.read_text())["results"]
    confusion = np.array(signal["confusion_matrix"])
    rows_ok = confusion.sum(axis=1).tolist() == [8, 8, 8] and confusion.sum() == signal["n_test"]
    signal_ok = signal["top1_accuracy"] >= 0.90
    control_ok = abs(control["top1_accuracy"] - 1.0 / 3.0) <= 0.15
    elapsed = time.monotonic() - start
    ok = rows_ok and signal_ok and control_ok and elapsed < 180.0
    with capsys.disabled():
        _report(
            f"criterion 6: end-to-end (signal top-1 {signal['top1_accuracy']:.2f} >= 0.90; "
            f"mu=0 control {control['top1_accuracy']:.2f} within 0.15 of 1/3; "
            f"confusion rows {confusion.sum(axis=1).tolist()}; {elapsed:.0f}s < 180s)",
            ok,
        )


def test_criterion_7_filter_size_sweep(signal_data, desk_config_file, capsys):
    """sweep --filters 4,8,16 emits three rows; the largest filter count
    does not degrade top-1 by more than 0.05 against the smallest."""
    code = dispatch(["sweep", "--filters", "4,8,16",
                     "--train", str(signal_data / "train.json"),
                     "--test", str(signal_data / "test.json"),
                     "--config", str(desk_config_file)])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    rows = doc["rows"]
    by_k = {row["filters"]: row["top1_accuracy"] for row in rows}
    structure_ok = [row["filters"] for row in rows] == [4, 8, 16]
    band_ok = by_k[16] >= by_k[4] - 0.05
    ok = structure_ok and band_ok
    with capsys.disabled():
        _report(
            f"criterion 7: sweep table (rows {sorted(by_k)}; top-1 K=16 {by_k[16]:.2f} "
            f">= K=4 {by_k[4]:.2f} - 0.05)",
            ok,
        )


def test_criterion_8_persistence_and_determinism(signal_data, desk_config_file, tmp_path, capsys):
    """Byte-identical container round trips and byte-identical repeated
    run-all reports under fixed seeds."""
    rng = np.random.default_rng(808)
    path_a, path_b = tmp_path / "a.zten", tmp_path / "b.zten"
    save_tensors(path_a, {"w": rng.normal(size=(3, 2, 3, 3)), "b": rng.normal(size=7)})
    save_tensors(path_b, load_tensors(path_a))
    roundtrip_ok = path_a.read_bytes() == path_b.read_bytes()

    reports = []
    for name in ("r1.json", "r2.json"):
        code = dispatch(["run-all",
                         "--train", str(signal_data / "train.json"),
                         "--test", str(signal_data / "test.json"),
                         "--config", str(desk_config_file),
                         "--report", str(tmp_path / name)])
        assert code == 0
        reports.append((tmp_path / name).read_bytes())
    capsys.readouterr()
    determinism_ok = reports[0] == reports[1]

    ok = roundtrip_ok and determinism_ok
    with capsys.disabled():
        _report(
            "criterion 8: byte-identical container round trip and repeated run-all reports",
            ok,
        )


def test_criterion_9_default_configuration_echo(capsys):
    """The resolved no-override configuration reproduces the reference
    operating point exactly."""
    echo = resolve_config(None, {}).echo()
    expected = {
        "kernel": 3,
        "stride": 1,
        "pad": 1,
        "pool": 2,
        "filters": 4096,
        "epochs": 100,
        "batch_size": 512,
        "learning_rate": 1e-5,
        "anneal_factor": 0.1,
        "lambda": 1.0,
        "lbfgs_initial_step": 0.1,
    }
    mismatches = {k: (echo.get(k), v) for k, v in expected.items() if echo.get(k) != v}
    ok = not mismatches
    with capsys.disabled():
        _report(
            "criterion 9: default config echo matches the reference table"
            + (f" (mismatches: {mismatches})" if mismatches else ""),
            ok,
        )
