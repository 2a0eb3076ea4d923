"""Release gate: every criterion runs at its stated tolerance and reports a
PASS line (pytest reports failures itself). Long-running checks that need the
real datasets skip with an explicit reason when the files are absent."""

import os
import time

import numpy as np
import pytest

from alexbench import idx
from alexbench.cli import main
from alexbench.data import LabeledPool, UnlabeledPool, load_dataset
from alexbench.errors import (
    BadMagicError,
    DimensionOverflowError,
    LabelOutOfRangeError,
    TruncatedError,
)
from alexbench.explain import kld, to_distribution
from alexbench.harness import ALConfig, run_experiment
from alexbench.net import Architecture
from alexbench.strategies import (
    SelectionContext,
    select_alex,
    select_density_weighted,
    select_margin,
    select_uncertainty,
)
from helpers import (
    TableModel,
    TableSurrogate,
    finite_difference_max_error,
    make_linear_setup,
    real_data_dir,
    smooth_point,
)

pytestmark = pytest.mark.acceptance

FULL_SCALE = os.environ.get("ALEXBENCH_FULL") == "1"


def report(criterion: str):
    print(f"ACCEPTANCE {criterion}: PASS")


def oracle_rank(indices, scores, take, largest=False):
    keyed = sorted(
        zip(scores, indices), key=lambda t: (-t[0] if largest else t[0], t[1])
    )
    return [int(i) for _, i in keyed[:take]]


def test_criterion_1_bruteforce_oracle_equivalence():
    """Ranking strategies match exhaustive oracles on 1000 random pools."""
    started = time.perf_counter()
    trials = 1000
    for trial in range(trials):
        rng = np.random.default_rng(trial)
        n = int(rng.integers(5, 21))
        c = int(rng.integers(2, 7))
        dp = int(rng.integers(2, 6))
        probs = rng.dirichlet(np.ones(c), size=n)
        dists = to_distribution(rng.normal(size=(n, dp)))
        perm = rng.permutation(n)
        n_labeled = int(rng.integers(1, n - 1))
        S = perm[:n_labeled]
        U = perm[n_labeled:]
        b = int(rng.integers(1, len(U) + 1))
        k = int(rng.integers(b, len(U) + 4))

        index_feats = np.arange(n, dtype=np.float64)[:, None]
        labeled = LabeledPool(S, np.zeros(len(S), dtype=int))

        def ctx(**kw):
            return SelectionContext(
                model=TableModel(probs),
                features=kw.pop("features", index_feats),
                labeled=labeled,
                unlabeled=UnlabeledPool(U),
                batch_size=b,
                rng=np.random.default_rng(trial + 1),
                **kw,
            )

        # US-P: lowest max posterior
        s = [float(probs[i].max()) for i in U]
        assert select_uncertainty(ctx()).chosen.tolist() == oracle_rank(U, s, b)

        # US-M: smallest top1 - top2 gap
        gaps = []
        for i in U:
            top = sorted(probs[i])[-2:]
            gaps.append(float(top[1] - top[0]))
        assert select_margin(ctx()).chosen.tolist() == oracle_rank(U, gaps, b)

        # ALEX: divergence ranking over the k most uncertain candidates
        cand = oracle_rank(U, s, min(k, len(U)))
        dbar = [
            float(np.mean([kld(dists[i], dists[j]) for j in S])) for i in cand
        ]
        expected = oracle_rank(cand, dbar, b, largest=True)
        got = select_alex(ctx(candidate_size=k, surrogate=TableSurrogate(dists)))
        assert got.chosen.tolist() == expected

        # DW: farthest from any labeled-occupied centroid
        feats = rng.normal(size=(n, 3))
        centroids = rng.normal(size=(int(rng.integers(1, 5)), 3))
        occupied = sorted(
            {int(np.argmin([np.linalg.norm(feats[i] - cc) for cc in centroids]))
             for i in S}
        )
        scores = [
            min(np.linalg.norm(feats[i] - centroids[j]) for j in occupied) for i in U
        ]
        got_dw = select_density_weighted(ctx(features=feats, centroids=centroids))
        assert got_dw.chosen.tolist() == oracle_rank(U, scores, b, largest=True)

    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"
    report(f"1 brute-force oracle equivalence ({trials} trials, {elapsed:.1f}s)")


def test_criterion_2_explainer_recovery():
    """Surrogate recovers a linear-in-patch-means model exactly at ridge=0."""
    started = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        explainer, X, w, _ = make_linear_setup(seed=1000 + seed, n_instances=10, m=32)
        explainer.fit(X)  # 320 rows >= 3 * 49 patches
        worst = max(worst, float(np.max(np.abs(explainer.weights_[0] - w))))
    elapsed = time.perf_counter() - started
    assert worst < 1e-6, f"max abs recovery error {worst:.2e}"
    assert elapsed < 60.0
    report(f"2 explainer recovery (worst {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_3_gradient_correctness():
    """Central differences at step 1e-4 agree with backprop to 1e-4."""
    worst = {"dense": 0.0, "conv": 0.0}
    for kind in ("dense", "conv"):
        arch = Architecture(kind)
        for point in range(5):
            params, X, y = smooth_point(arch, seed=100 * point + 7)
            coords = np.random.default_rng(point).choice(arch.n_params, 20, replace=False)
            err = finite_difference_max_error(arch, params, X, y, coords)
            worst[kind] = max(worst[kind], err)
            assert err < 1e-4, f"{kind} point {point}: {err:.2e}"
    report(
        "3 gradient correctness "
        f"(dense {worst['dense']:.1e}, conv {worst['conv']:.1e})"
    )


def test_criterion_4_kld_properties():
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        p = rng.dirichlet(np.ones(int(rng.integers(2, 8))))
        q = rng.dirichlet(np.ones(len(p)))
        assert kld(p, q) >= 0.0
    for _ in range(100):
        p = rng.dirichlet(np.ones(6))
        assert kld(p, p) < 1e-12
    assert abs(kld([0.9, 0.1], [0.5, 0.5]) - 0.3681) < 1e-3
    assert abs(kld([0.5, 0.5], [0.9, 0.1]) - 0.5108) < 1e-3
    report("4 KLD property suite (10000 pairs)")


@pytest.mark.slow
@pytest.mark.skipif(real_data_dir() is None, reason="real MNIST files not present")
def test_criterion_5_desk_scale_trend():
    """Divergence-guided selection at least matches random sampling on a
    pool-limited MNIST run (stochastic trend, not an exact-number check)."""
    root = real_data_dir()
    train = load_dataset(root, "mnist", "train")
    test = load_dataset(root, "mnist", "test")
    curves = {}
    for strategy in ("rs", "alex"):
        cfg = ALConfig(
            strategy=strategy, q=10, p=10, arch="dense", pool_limit=6000,
            repetitions=3, master_seed=7,
        )
        rep = run_experiment(cfg, train, test, jobs=3)
        curves[strategy] = [rep.accuracies(strategy, j).mean() for j in range(11)]
    alex, rs = curves["alex"], curves["rs"]
    wins = sum(a >= r for a, r in zip(alex[1:], rs[1:]))
    assert alex[10] >= rs[10], f"final alex {alex[10]:.4f} < rs {rs[10]:.4f}"
    assert wins >= 6, f"alex above rs in only {wins}/10 iterations"
    report(
        f"5 desk-scale trend (alex {alex[10]:.4f} >= rs {rs[10]:.4f}, wins {wins}/10)"
    )


@pytest.mark.slow
@pytest.mark.skipif(
    not FULL_SCALE or real_data_dir() is None,
    reason="full-scale run gated behind ALEXBENCH_FULL=1 and real MNIST",
)
def test_criterion_6_full_scale_reference():
    """Full-pool conv runs land near the published reference accuracies."""
    root = real_data_dir()
    train = load_dataset(root, "mnist", "train")
    test = load_dataset(root, "mnist", "test")
    means = {}
    for strategy, reference in (("alex", 0.8811), ("rs", 0.8368)):
        cfg = ALConfig(
            strategy=strategy, q=10, p=10, arch="conv", repetitions=3, master_seed=7
        )
        rep = run_experiment(cfg, train, test)
        means[strategy] = float(rep.accuracies(strategy, 10).mean())
        assert abs(means[strategy] - reference) <= 0.05, (
            f"{strategy}: {means[strategy]:.4f} vs reference {reference}"
        )
    report(f"6 full-scale reference (alex {means['alex']:.4f}, rs {means['rs']:.4f})")


def test_criterion_7_run_determinism(synthetic_data_env, tmp_path):
    """Byte-identical report.csv across invocations, parallelism included."""
    args = (
        "run --dataset mnist --strategy alex --q 1 --p 2 --seed 11 "
        "--reps 2 --epochs 5"
    ).split()
    outs = []
    for name, jobs in (("r1", 2), ("r2", 2), ("r3", 1)):
        out = tmp_path / name
        assert main(args + ["--jobs", str(jobs), "--out-dir", str(out)]) == 0
        outs.append((out / "report.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    report("7 determinism (two parallel runs + serial run byte-identical)")


def test_criterion_8_parser_suite():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n, rows, cols = rng.integers(1, 9, 3)
        images = rng.integers(0, 256, size=(n, rows, cols)).astype(np.uint8)
        blob = idx.write_idx_images(images)
        assert idx.write_idx_images(idx.parse_idx_images(blob)) == blob
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        lblob = idx.write_idx_labels(labels)
        assert idx.write_idx_labels(idx.parse_idx_labels(lblob)) == lblob

    import struct

    corrupt = {
        BadMagicError: struct.pack(">IIII", 0x00000999, 1, 1, 1) + b"\x00",
        TruncatedError: struct.pack(">IIII", 0x00000803, 4, 2, 2) + b"\x00" * 3,
        DimensionOverflowError: struct.pack(">IIII", 0x00000803, 10**9, 1, 1),
    }
    for error, blob in corrupt.items():
        with pytest.raises(error):
            idx.parse_idx_images(blob)
    with pytest.raises(LabelOutOfRangeError):
        idx.parse_idx_labels(struct.pack(">II", 0x00000801, 1) + b"\x0b")
    with pytest.raises(BadMagicError):
        idx.parse_idx_labels(struct.pack(">II", 0x00000803, 0))
    report("8 parser suite (round trips + corruption fixtures)")


@pytest.mark.skipif(real_data_dir() is None, reason="real MNIST files not present")
def test_criterion_8_real_files():
    root = real_data_dir()
    train = load_dataset(root, "mnist", "train")
    test = load_dataset(root, "mnist", "test")
    assert train.n == 60000 and test.n == 10000
    report("8b real MNIST parse counts (60000/10000)")
