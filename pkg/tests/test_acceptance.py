"""Acceptance battery: every release gate in one file.

Each test prints a single `criterion N: PASS/FAIL (...)` line with the
measured numbers so a plain pytest run doubles as the acceptance report.
Criteria 8 and 9 share one fixture that drives the CLI pipeline twice over
the same synthetic scene. Criterion 10 needs a real blood-stain scene on
disk and skips unless HYPERBLOOD_SCENE and HYPERBLOOD_TRUTH point at it;
its range checks are reported without gating the suite.
"""

import itertools
import json
import os
import time
from types import SimpleNamespace

import numpy as np
import pytest
import torch

import synth
from conftest import random_rbm
from hsiseg import cli, clustering, lbae, metrics, rbm, samplers
from test_clustering import naive_ahc, random_distances
from test_lbae import two_class_spectra
from test_metrics import ars_from_pairs, rand_from_pairs, random_labelings


def report(capsys, number, passed, detail):
    status = "PASS" if passed else "FAIL"
    with capsys.disabled():
        print(f"\ncriterion {number}: {status} ({detail})")
    assert passed, f"criterion {number}: {detail}"


def test_criterion_01_qubo_energy_matches_rbm_energy_exactly(capsys):
    start = time.monotonic()
    rng = np.random.default_rng(11)
    mismatches = 0
    checked = 0
    for _ in range(200):
        n_v = int(rng.integers(1, 5))
        n_h = int(rng.integers(1, 5))
        model = random_rbm(rng, n_v, n_h)
        problem = samplers.rbm_to_qubo(model)
        for bits in itertools.product((0, 1), repeat=n_v + n_h):
            x = np.array(bits, dtype=np.uint8)
            if samplers.qubo_energy(problem, x) != rbm.energy(model, x[:n_v], x[n_v:]):
                mismatches += 1
            checked += 1
    elapsed = time.monotonic() - start
    report(
        capsys,
        1,
        mismatches == 0 and elapsed < 10.0,
        f"{mismatches} mismatches over {checked} assignments from 200 models, "
        f"{elapsed:.1f}s",
    )


def test_criterion_02_gibbs_marginals_match_exact_boltzmann(capsys):
    start = time.monotonic()
    rng = np.random.default_rng(23)
    model = random_rbm(rng, 4, 3)
    reads = samplers.gibbs_sample(model, 10_000, 100_000, 5)
    empirical = reads.weights() @ reads.assignments
    exact = samplers.exact_boltzmann(samplers.rbm_to_qubo(model)).marginals()
    gap = float(np.abs(empirical - exact).max())
    elapsed = time.monotonic() - start
    report(
        capsys,
        2,
        gap < 0.02 and elapsed < 60.0,
        f"max per-variable marginal gap {gap:.4f} over 100000 reads x 10000 "
        f"sweeps on a 4x3 model, {elapsed:.1f}s",
    )


def random_qubo(rng, n):
    quadratic = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.7:
                quadratic[(i, j)] = float(rng.normal(0.0, 1.0))
    return samplers.QuboProblem(
        linear=rng.normal(0.0, 1.0, n),
        quadratic=quadratic,
        offset=float(rng.normal(0.0, 1.0)),
    )


def test_criterion_03_annealer_reaches_global_minimum(capsys):
    start = time.monotonic()
    rng = np.random.default_rng(37)
    all_states = np.array(list(itertools.product((0, 1), repeat=8)), dtype=np.uint8)
    hits = 0
    trials = 0
    for index in range(20):
        problem = random_qubo(rng, 8)
        floor = min(samplers.qubo_energy(problem, s) for s in all_states)
        for trial in range(5):
            reads = samplers.sa_sample(problem, 100, 1000 * index + trial)
            if reads.best()[1] == floor:
                hits += 1
            trials += 1
    elapsed = time.monotonic() - start
    report(
        capsys,
        3,
        hits / trials >= 0.95 and elapsed < 60.0,
        f"{hits}/{trials} hundred-read invocations found the exhaustive "
        f"minimum of an 8-variable problem, {elapsed:.1f}s",
    )


TRAIN_PATTERNS = np.array(
    [
        [1, 0, 0, 0],
        [1, 1, 0, 0],
        [1, 1, 1, 0],
        [0, 1, 1, 0],
        [1, 0, 1, 0],
        [1, 1, 0, 1],
        [0, 0, 0, 1],
        [1, 1, 1, 1],
    ],
    dtype=np.float64,
)


def test_criterion_04_exact_negative_phase_training_raises_likelihood(capsys):
    start = time.monotonic()
    data = TRAIN_PATTERNS
    model = rbm.init_rbm(4, 3, seed=3)
    trace = [rbm.exact_log_likelihood(model, data)]

    def track(epoch, current, train_loss, val_loss):
        trace.append(rbm.exact_log_likelihood(current, data))

    config = rbm.RbmTrainConfig(
        learning_rate=0.01, epochs=200, batch_size=64, sampler="exact", seed=3
    )
    rbm.train_rbm(model, data, config, sampler=samplers.ExactSampler(), on_epoch=track)
    per_pattern = np.array(trace)
    gain = float(per_pattern[-1] - per_pattern[0]) * data.shape[0]
    drops = int((np.diff(per_pattern) < 0).sum())
    elapsed = time.monotonic() - start
    report(
        capsys,
        4,
        gain >= 0.1 and drops <= 10 and elapsed < 30.0,
        f"dataset log-likelihood gain {gain:.3f} nats over 200 epochs, "
        f"{drops} non-monotone epochs (limit 10), {elapsed:.1f}s",
    )


def test_criterion_05_metric_oracles_and_identities(capsys):
    start = time.monotonic()
    pair_exact = True
    duality_exact = True
    for true_labels, pred_labels in random_labelings(500, seed=17):
        table = metrics.contingency(true_labels, pred_labels)
        pair_exact &= metrics.rand_score(table) == rand_from_pairs(
            true_labels, pred_labels
        )
        pair_exact &= metrics.adjusted_rand(table) == ars_from_pairs(
            true_labels, pred_labels
        )
        swapped = metrics.contingency(pred_labels, true_labels)
        duality_exact &= metrics.homogeneity(table) == metrics.completeness(swapped)
        duality_exact &= metrics.completeness(table) == metrics.homogeneity(swapped)
    v_dev = 0.0
    for x in np.linspace(0.0, 1.0, 101):
        for beta in (0.0, 0.25, 0.5, 1.0):
            v_dev = max(v_dev, abs(metrics.v_measure(float(x), float(x), beta) - x))
    elapsed = time.monotonic() - start
    report(
        capsys,
        5,
        pair_exact and duality_exact and v_dev <= 1e-12,
        f"500 labelings pair-count exact, duality exact, |V(x,x)-x| <= "
        f"{v_dev:.1e}, {elapsed:.1f}s",
    )


def test_criterion_06_ahc_merge_sequences_match_cubic_reference(capsys):
    start = time.monotonic()
    rng = np.random.default_rng(41)
    sequence_exact = True
    height_dev = 0.0
    for _ in range(100):
        values = random_distances(rng, 20)
        for linkage in ("complete", "average"):
            labels, dendrogram = clustering.ahc(
                clustering.DistanceMatrix(values), linkage, 1
            )
            ref_labels, ref_merges = naive_ahc(values, linkage, 1)
            sequence_exact &= np.array_equal(labels, ref_labels)
            sequence_exact &= len(dendrogram.merges) == len(ref_merges)
            for got, want in zip(dendrogram.merges, ref_merges):
                sequence_exact &= got[0] == want[0] and got[1] == want[1]
                sequence_exact &= got[3] == want[3]
                if linkage == "complete":
                    sequence_exact &= got[2] == want[2]
                else:
                    height_dev = max(
                        height_dev, abs(got[2] - want[2]) / max(abs(want[2]), 1e-30)
                    )
    # discrete matrices force genuine ties; complete linkage involves no
    # arithmetic, so the whole merge record must match the reference as-is
    tie_exact = True
    for _ in range(40):
        values = random_distances(rng, 12, discrete=True)
        _, dendrogram = clustering.ahc(clustering.DistanceMatrix(values), "complete", 1)
        _, ref_merges = naive_ahc(values, "complete", 1)
        tie_exact &= list(dendrogram.merges) == [tuple(m) for m in ref_merges]
    elapsed = time.monotonic() - start
    report(
        capsys,
        6,
        sequence_exact and tie_exact and height_dev < 1e-9,
        f"100 random 20-point matrices x both linkages sequence-exact, 40 "
        f"tied matrices record-exact, average heights within {height_dev:.1e}, "
        f"{elapsed:.1f}s",
    )


def test_criterion_07_autoencoder_gradients_and_latent_width(capsys):
    start = time.monotonic()
    encoder, decoder = lbae.build_models(input_length=32, seed=7)
    data = torch.from_numpy(two_class_spectra(np.random.default_rng(5), 6)[0])

    def loss_fn():
        recon = decoder(encoder(data, surrogate=True))
        return torch.mean((recon - data) ** 2)

    loss_fn().backward()
    eps = 1e-6
    worst_rel = 0.0
    checked = 0
    pick = np.random.default_rng(3)
    for param in list(encoder.parameters()) + list(decoder.parameters()):
        flat = param.detach().reshape(-1)
        grad = param.grad.reshape(-1)
        for idx in pick.choice(flat.shape[0], size=min(3, flat.shape[0]), replace=False):
            with torch.no_grad():
                orig = float(flat[idx])
                flat[idx] = orig + eps
                up = float(loss_fn())
                flat[idx] = orig - eps
                down = float(loss_fn())
                flat[idx] = orig
            fd = (up - down) / (2 * eps)
            analytic = float(grad[idx])
            scale = max(abs(fd), abs(analytic))
            if scale > 1e-8:
                worst_rel = max(worst_rel, abs(analytic - fd) / scale)
            checked += 1
    widths = {lbae.build_models(input_length=112, seed=s)[0].latent_dim for s in (0, 1, 2)}
    code = lbae.encode(lbae.build_models(input_length=112, seed=0)[0], np.zeros(112))
    latent_ok = widths == {28} and code.shape == (28,)
    elapsed = time.monotonic() - start
    report(
        capsys,
        7,
        worst_rel < 1e-4 and checked >= 24 and latent_ok,
        f"max gradient rel err {worst_rel:.1e} over {checked} sampled params, "
        f"latent width 28 for 112-band input, {elapsed:.1f}s",
    )


ACCEPT_CONFIG = """
[data]
cube = {cube!r}
ground_truth = {truth!r}
noisy_bands = []

[run]
seed = 2
tag = "accept"

[lbae]
epochs = 50
grid_epochs = 10
batch_size = 4
learning_rate = 0.01

[rbm]
hidden = 28
sampler = "cd1"
epochs = 200
learning_rate = 0.05
batch_size = 64
num_reads = 100
checkpoint_every = 5

[ahc]
linkage = "complete"
distance = "sad"
target_k = 7
"""


def run_pipeline(config_path, run_dir, truth):
    for extra in (
        ["preprocess"],
        ["train-lbae"],
        ["train-rbm"],
        ["segment", "--k", "7"],
        [
            "evaluate",
            "--pred",
            os.path.join(run_dir, "maps", "segmentation.segm"),
            "--truth",
            truth,
        ],
        ["baseline-kmeans"],
    ):
        argv = extra[:1] + ["--config", config_path, "--run-dir", run_dir] + extra[1:]
        assert cli.main(argv) == 0, extra
    return run_dir


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("accept")
    cube, truth = synth.write_scene(str(base))
    config = base / "config.toml"
    config.write_text(ACCEPT_CONFIG.format(cube=cube, truth=truth))
    runs = {}
    for name in ("run-a", "run-b"):
        start = time.monotonic()
        path = run_pipeline(str(config), str(base / name), truth)
        runs[name] = SimpleNamespace(path=path, elapsed=time.monotonic() - start)
    return runs


def test_criterion_08_pipeline_beats_raw_kmeans(pipeline_runs, capsys):
    run = pipeline_runs["run-a"]
    with open(os.path.join(run.path, "metrics", "evaluate.json")) as fh:
        ars = json.load(fh)["adjusted_rand"]
    with open(os.path.join(run.path, "metrics", "kmeans-raw-summary.csv")) as fh:
        rows = [line.split(",") for line in fh.read().splitlines()[1:]]
    kmeans_ars = {row[0]: float(row[1]) for row in rows}["adjusted_rand"]
    report(
        capsys,
        8,
        ars >= 0.6 and ars > kmeans_ars and run.elapsed < 600.0,
        f"pipeline ARS {ars:.3f} vs raw k-means mean ARS {kmeans_ars:.3f} on "
        f"the 32x32x112 scene, {run.elapsed:.0f}s",
    )


def test_criterion_09_reruns_are_byte_identical(pipeline_runs, capsys):
    run_a = pipeline_runs["run-a"].path
    run_b = pipeline_runs["run-b"].path
    csv_a = sorted(
        name
        for name in os.listdir(os.path.join(run_a, "metrics"))
        if name.endswith(".csv")
    )
    csv_b = sorted(
        name
        for name in os.listdir(os.path.join(run_b, "metrics"))
        if name.endswith(".csv")
    )
    targets = [
        os.path.join("maps", "segmentation.segm"),
        os.path.join("maps", "segmentation.png"),
        os.path.join("metrics", "evaluate.json"),
        "manifest.toml",
    ] + [os.path.join("metrics", name) for name in csv_a]
    differing = []
    for rel in targets:
        with open(os.path.join(run_a, rel), "rb") as fh:
            blob_a = fh.read()
        with open(os.path.join(run_b, rel), "rb") as fh:
            blob_b = fh.read()
        if blob_a != blob_b:
            differing.append(rel)
    passed = csv_a == csv_b and not differing
    detail = (
        f"{len(targets)} artifacts byte-identical across two runs"
        if passed
        else f"differs: {', '.join(differing) or 'csv name sets'}"
    )
    report(capsys, 9, passed, detail)


HYPERBLOOD_CONFIG = """
[data]
cube = {cube!r}
ground_truth = {truth!r}

[run]
seed = 2
tag = "hyperblood"
"""


def test_criterion_10_hyperblood_reference_ranges(tmp_path, capsys):
    cube = os.environ.get("HYPERBLOOD_SCENE")
    truth = os.environ.get("HYPERBLOOD_TRUTH")
    if not cube or not truth:
        with capsys.disabled():
            print(
                "\ncriterion 10: SKIP (set HYPERBLOOD_SCENE and "
                "HYPERBLOOD_TRUTH to run the reference-scene check)"
            )
        pytest.skip("reference scene not configured")
    config = tmp_path / "config.toml"
    config.write_text(HYPERBLOOD_CONFIG.format(cube=cube, truth=truth))
    run = run_pipeline(str(config), str(tmp_path / "run"), truth)
    with open(os.path.join(run, "metrics", "evaluate.json")) as fh:
        seg_h = json.load(fh)["homogeneity"]
    with open(os.path.join(run, "metrics", "kmeans-raw-summary.csv")) as fh:
        rows = [line.split(",") for line in fh.read().splitlines()[1:]]
    km_h = {row[0]: float(row[1]) for row in rows}["homogeneity"]
    in_range = abs(km_h - 0.509) <= 0.10 and abs(seg_h - 0.492) <= 0.15
    status = "PASS" if in_range else "REPORT"
    with capsys.disabled():
        print(
            f"\ncriterion 10: {status} (raw k-means homogeneity {km_h:.3f} vs "
            f"0.509+-0.10, segmentation homogeneity {seg_h:.3f} vs "
            f"0.492+-0.15; informational only)"
        )
