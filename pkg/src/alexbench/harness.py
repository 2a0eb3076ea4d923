"""The active-learning bootstrapping loop: seed, train, select, annotate, repeat.

Randomness is derived from (master_seed, repetition, role, iteration) keys
instead of threaded generator state, so every stage is reproducible in
isolation, repetitions can run concurrently, and resuming from a checkpoint
replays the exact run. The seed pools and centroids never see the strategy
id, which keeps the initial conditions identical across strategies.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import LabeledPool, LabelOracle, RawDataset, UnlabeledPool, stratified_seed
from .errors import CorruptCheckpointError, PoolExhaustedError
from .explain import PatchSurrogateExplainer
from .net import SoftmaxNetClassifier
from .strategies import STRATEGIES, SelectionContext, kmeans

# Roles for rng stream derivation; values are part of the reproducibility
# contract and must not be reordered.
ROLE_POOL_LIMIT = 0
ROLE_SEED_SET = 1
ROLE_SELECT = 2
ROLE_TRAIN_SHUFFLE = 3
ROLE_SURROGATE = 4
ROLE_KMEANS = 5
ROLE_INIT = 6


def derived_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))

def derived_seed(master_seed: int, *key: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), *map(int, key)])
    return int(seq.generate_state(1)[0])


@dataclass
class ALConfig:
    """Experiment parameters; unset batch/candidate sizes follow the seed size."""

    dataset: str = "mnist"
    strategy: str = "alex"
    q: int = 10
    p: int = 10
    arch: str = "dense"
    batch_size: int | None = None  # b; defaults to |S0| = q * n_classes
    candidate_size: int | None = None  # k; defaults to 3b
    epochs: int = 30
    minibatch: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    m_samples: int = 64
    ridge: float = 1e-3
    patch_size: int = 2
    weighting: str = "uniform"
    dist_epsilon: float = 1e-8
    kmeans_iters: int = 50
    master_seed: int = 7
    repetitions: int = 3
    pool_limit: int | None = None
    record_timings: bool = False

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.candidate_size is not None and self.batch_size is not None:
            if self.candidate_size < self.batch_size:
                raise ValueError("candidate size must be >= batch size")
        if self.pool_limit is not None and self.pool_limit < 1:
            raise ValueError("pool limit must be >= 1")

    def resolved_batch(self, n_classes: int) -> int:
        return self.batch_size if self.batch_size is not None else self.q * n_classes

    def resolved_candidates(self, n_classes: int) -> int:
        if self.candidate_size is not None:
            return self.candidate_size
        return 3 * self.resolved_batch(n_classes)


@dataclass
class RunRecord:
    repetition: int
    iteration: int
    strategy: str
    labeled_count: int
    test_accuracy: float
    wall_ms: float = 0.0
    diag: dict = field(default_factory=dict)


@dataclass
class RunReport:
    config: ALConfig
    records: list[RunRecord] = field(default_factory=list)
    # last trained model and labeled pool of repetition 0; not persisted
    final_model: object = None
    final_labeled: object = None

    def sorted_records(self) -> list[RunRecord]:
        order = {name: i for i, name in enumerate(STRATEGIES)}
        return sorted(
            self.records, key=lambda r: (order[r.strategy], r.repetition, r.iteration)
        )

    def accuracies(self, strategy: str, iteration: int) -> np.ndarray:
        return np.array(
            [
                r.test_accuracy
                for r in self.records
                if r.strategy == strategy and r.iteration == iteration
            ]
        )

    def to_csv_bytes(self) -> bytes:
        """Line-oriented CSV with a #-prefixed config echo.

        The wall_ms column is written as 0 unless record_timings is set:
        measured times would break the byte-identical determinism contract,
        so they are reported separately (see timings_csv_bytes).
        """
        lines = ["# alexbench report"]
        for f in fields(self.config):
            lines.append(f"# {f.name}={getattr(self.config, f.name)}")
        lines.append("repetition,iteration,strategy,labeled_count,test_accuracy,wall_ms")
        for r in self.sorted_records():
            wall = int(round(r.wall_ms)) if self.config.record_timings else 0
            lines.append(
                f"{r.repetition},{r.iteration},{r.strategy},"
                f"{r.labeled_count},{r.test_accuracy!r},{wall}"
            )
        return ("\n".join(lines) + "\n").encode("ascii")

    def timings_csv_bytes(self) -> bytes:
        lines = ["repetition,iteration,strategy,wall_ms"]
        for r in self.sorted_records():
            lines.append(f"{r.repetition},{r.iteration},{r.strategy},{r.wall_ms:.3f}")
        return ("\n".join(lines) + "\n").encode("ascii")


def parse_report_csv(data: bytes) -> tuple[dict[str, str], list[RunRecord]]:
    """Recover the config echo and records from a persisted report."""
    config: dict[str, str] = {}
    records: list[RunRecord] = []
    lines = data.decode("ascii").splitlines()
    for line in lines:
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                config[key] = value
            continue
        if not line or line.startswith("repetition,"):
            continue
        rep, it, strat, count, acc, wall = line.split(",")
        records.append(
            RunRecord(
                repetition=int(rep),
                iteration=int(it),
                strategy=strat,
                labeled_count=int(count),
                test_accuracy=float(acc),
                wall_ms=float(wall),
            )
        )
    return config, records


def evaluate_accuracy(model, X_test: np.ndarray, y_test: np.ndarray) -> float:
    """Fraction of test instances whose argmax posterior equals the label."""
    pred = np.asarray(model.predict_proba(X_test)).argmax(axis=1)
    return float(np.mean(pred == np.asarray(y_test)))


def _train_classifier(
    cfg: ALConfig,
    train_ds: RawDataset,
    X: np.ndarray,
    pool: LabeledPool,
    init_seed: int,
    shuffle_seed: int,
) -> SoftmaxNetClassifier:
    clf = SoftmaxNetClassifier(
        arch=cfg.arch,
        image_shape=train_ds.image_shape,
        n_classes=train_ds.n_classes,
        epochs=cfg.epochs,
        batch_size=cfg.minibatch,
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        epsilon=cfg.adam_epsilon,
        init_seed=init_seed,
        shuffle_seed=shuffle_seed,
    )
    return clf.fit(X[pool.indices], pool.labels)


def _repetition_universe(cfg: ALConfig, train_ds: RawDataset, rep: int) -> np.ndarray:
    universe = np.arange(train_ds.n, dtype=np.int64)
    if cfg.pool_limit is not None and cfg.pool_limit < train_ds.n:
        rng = derived_rng(cfg.master_seed, rep, ROLE_POOL_LIMIT)
        universe = np.sort(rng.choice(universe, size=cfg.pool_limit, replace=False))
    return universe


def _run_repetition(
    cfg: ALConfig,
    train_ds: RawDataset,
    X: np.ndarray,
    X_test: np.ndarray,
    y_test: np.ndarray,
    rep: int,
    state: dict | None = None,
    checkpoint_path: str | Path | None = None,
    records_done: list[RunRecord] | None = None,
) -> tuple[list[RunRecord], SoftmaxNetClassifier | None, LabeledPool]:
    c = train_ds.n_classes
    b = cfg.resolved_batch(c)
    k = cfg.resolved_candidates(c)
    oracle = LabelOracle(train_ds.labels)
    init_seed = derived_seed(cfg.master_seed, rep, ROLE_INIT)

    records: list[RunRecord] = []

    if state is None:
        universe = _repetition_universe(cfg, train_ds, rep)
        labeled, unlabeled = stratified_seed(
            train_ds, cfg.q, derived_rng(cfg.master_seed, rep, ROLE_SEED_SET), universe
        )
        start_iter = 0
    else:
        universe = np.asarray(state["universe"], dtype=np.int64)
        labeled = LabeledPool(state["labeled_indices"], state["labeled_labels"])
        unlabeled = UnlabeledPool(state["unlabeled_indices"])
        start_iter = int(state["next_iteration"])

    centroids = None
    if cfg.strategy == "dw":
        centroids = kmeans(
            X[universe], c, derived_rng(cfg.master_seed, rep, ROLE_KMEANS),
            iters=cfg.kmeans_iters,
        )

    clf = None
    for j in range(start_iter, cfg.p + 1):
        tick = time.perf_counter()
        diag: dict = {}
        if j == 0:
            clf = _train_classifier(
                cfg, train_ds, X, labeled, init_seed,
                derived_seed(cfg.master_seed, rep, ROLE_TRAIN_SHUFFLE, 0),
            )
        else:
            if clf is None:  # resumed mid-run: rebuild the model for S_{j-1}
                clf = _train_classifier(
                    cfg, train_ds, X, labeled, init_seed,
                    derived_seed(cfg.master_seed, rep, ROLE_TRAIN_SHUFFLE, j - 1),
                )
            if len(unlabeled) < b:
                raise PoolExhaustedError(f"|U|={len(unlabeled)} < b={b}")
            surrogate = None
            if cfg.strategy == "alex":
                surrogate = PatchSurrogateExplainer(
                    model=clf,
                    m_samples=cfg.m_samples,
                    ridge=cfg.ridge,
                    patch_size=cfg.patch_size,
                    weighting=cfg.weighting,
                    epsilon=cfg.dist_epsilon,
                    random_state=derived_seed(cfg.master_seed, rep, ROLE_SURROGATE, j),
                    image_shape=train_ds.image_shape,
                ).fit(X[labeled.indices])
            ctx = SelectionContext(
                model=clf,
                features=X,
                labeled=labeled,
                unlabeled=unlabeled,
                batch_size=b,
                candidate_size=k,
                surrogate=surrogate,
                centroids=centroids,
                rng=derived_rng(cfg.master_seed, rep, ROLE_SELECT, j),
            )
            result = STRATEGIES[cfg.strategy](ctx)
            for name, scores in result.diagnostics.items():
                diag[f"mean_{name}"] = float(np.mean(list(scores.values())))
            labeled.extend(result.chosen, oracle.reveal(result.chosen))
            unlabeled.remove(result.chosen)
            clf = _train_classifier(
                cfg, train_ds, X, labeled, init_seed,
                derived_seed(cfg.master_seed, rep, ROLE_TRAIN_SHUFFLE, j),
            )
        accuracy = evaluate_accuracy(clf, X_test, y_test)
        records.append(
            RunRecord(
                repetition=rep,
                iteration=j,
                strategy=cfg.strategy,
                labeled_count=len(labeled),
                test_accuracy=accuracy,
                wall_ms=(time.perf_counter() - tick) * 1e3,
                diag=diag,
            )
        )
        if checkpoint_path is not None:
            save_checkpoint(
                checkpoint_path,
                cfg,
                rep,
                j + 1,
                universe,
                labeled,
                unlabeled,
                (records_done or []) + records,
            )
    return records, clf, labeled


def run_experiment(
    cfg: ALConfig,
    train_ds: RawDataset,
    test_ds: RawDataset,
    jobs: int = 1,
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
) -> RunReport:
    """Run cfg.repetitions independent bootstrapping runs and collect records.

    Repetitions may run concurrently (jobs > 1); records are re-sorted by
    (strategy, repetition, iteration) so reports do not depend on scheduling.
    Checkpointing requires jobs == 1.
    """
    cfg.validate()
    if checkpoint_path is not None and jobs != 1:
        raise ValueError("checkpointing requires jobs=1")

    X = train_ds.feature_matrix()
    X_test = test_ds.feature_matrix()
    y_test = test_ds.labels

    report = RunReport(config=cfg)
    start_rep = 0
    resume_state = None
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        payload = load_checkpoint(checkpoint_path)
        if payload["config"] != _config_echo(cfg):
            raise ValueError("checkpoint config does not match the requested run")
        report.records = [RunRecord(**r) for r in payload["records"]]
        start_rep = int(payload["repetition"])
        resume_state = payload
        if payload["next_iteration"] > cfg.p:
            start_rep += 1
            resume_state = None

    def one(rep: int, state):
        done = report.records if checkpoint_path is not None else None
        return _run_repetition(
            cfg, train_ds, X, X_test, y_test, rep,
            state=state, checkpoint_path=checkpoint_path, records_done=done,
        )

    if jobs == 1:
        for rep in range(start_rep, cfg.repetitions):
            state = resume_state if rep == start_rep else None
            recs, clf, labeled = one(rep, state)
            report.records.extend(recs)
            if rep == 0 or report.final_model is None:
                report.final_model = clf
                report.final_labeled = labeled
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(one, rep, None) for rep in range(cfg.repetitions)]
            for rep, future in enumerate(futures):
                recs, clf, labeled = future.result()
                report.records.extend(recs)
                if rep == 0:
                    report.final_model = clf
                    report.final_labeled = labeled
    report.records = report.sorted_records()
    return report


def _config_echo(cfg: ALConfig) -> dict:
    return {key: value for key, value in asdict(cfg).items()}


def _digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode("ascii"), digest_size=8).hexdigest()


def save_checkpoint(
    path: str | Path,
    cfg: ALConfig,
    rep: int,
    next_iteration: int,
    universe: np.ndarray,
    labeled: LabeledPool,
    unlabeled: UnlabeledPool,
    records: list[RunRecord],
) -> None:
    """Persist resumable run state with a content digest; writes atomically."""
    if not str(path):
        raise ValueError("checkpoint path is empty")
    payload = {
        "config": _config_echo(cfg),
        "repetition": rep,
        "next_iteration": next_iteration,
        "universe": np.asarray(universe).tolist(),
        "labeled_indices": labeled.indices.tolist(),
        "labeled_labels": labeled.labels.tolist(),
        "unlabeled_indices": unlabeled.indices.tolist(),
        "records": [asdict(r) for r in records],
    }
    blob = json.dumps({"payload": payload, "digest": _digest(payload)})
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(blob)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> dict:
    """Read and verify a checkpoint; raises CorruptCheckpointError on mismatch."""
    try:
        blob = json.loads(Path(path).read_text())
        payload = blob["payload"]
        digest = blob["digest"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if _digest(payload) != digest:
        raise CorruptCheckpointError(f"digest mismatch in {path}")
    return payload
