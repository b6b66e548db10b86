"""Streaming evolution engine.

Per task: compute fresh prototypes, pre-fill the paired queues with noised
old prototypes, then per arriving test sample push the paired features,
re-fit the projector, evolve the old prototypes from their original
previous-space values, and classify by cosine nearest class mean over the
union of evolved old and fresh new prototypes. The first task has no old
classes and skips the queue/projector machinery entirely.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import RunConfig
from .core import PrototypeTable, compute_prototypes, ncm_predict
from .drift_sim import true_drift_similarity
from .errors import DivergenceError
from .projector import (
    Projector,
    evolve_prototypes,
    solve_analytic,
    solve_gradient_descent,
)
from .queues import QueuePair, init_with_pseudo_features

PHASES = ("forward", "queue", "solve", "predict")


@dataclass
class SampleLog:
    """One classified test arrival; w_index points into the task's projector
    snapshots (-1 = no projector involved)."""

    class_id: int
    predicted: int
    w_index: int
    excluded: bool = False


@dataclass
class TaskRunRecord:
    task: int
    old_table: Optional[PrototypeTable]
    fresh_table: PrototypeTable
    samples: List[SampleLog] = field(default_factory=list)
    projector_snapshots: List[np.ndarray] = field(default_factory=list)
    features_new: List[np.ndarray] = field(default_factory=list)
    drift_similarity: Optional[Dict[int, float]] = None
    phase_seconds: Dict[str, float] = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    n_stream_samples: int = 0

    @property
    def accuracy(self) -> float:
        if not self.samples:
            return 0.0
        return sum(s.predicted == s.class_id for s in self.samples) / len(self.samples)

    def per_class_accuracy(self) -> Dict[int, float]:
        hits: Dict[int, int] = {}
        totals: Dict[int, int] = {}
        for s in self.samples:
            totals[s.class_id] = totals.get(s.class_id, 0) + 1
            hits[s.class_id] = hits.get(s.class_id, 0) + (s.predicted == s.class_id)
        return {c: hits[c] / totals[c] for c in totals}


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    tasks: List[TaskRunRecord]
    oracle: bool = False

    @property
    def per_task_accuracy(self) -> List[float]:
        return [rec.accuracy for rec in self.tasks]

    @property
    def last_accuracy(self) -> float:
        """Mean over per-class accuracies at the final stage."""
        per_class = self.tasks[-1].per_class_accuracy()
        return float(np.mean(list(per_class.values())))

    def class_group_accuracy(self, classes) -> float:
        per_class = self.tasks[-1].per_class_accuracy()
        vals = [per_class[c] for c in classes if c in per_class]
        return float(np.mean(vals)) if vals else float("nan")

    def old_new_accuracy(self, source) -> Tuple[float, float]:
        """(old, new) class accuracy at the final stage, split per the
        cold/warm convention in the config."""
        t_last = len(self.tasks)
        if self.config.split_style == "warm":
            old = source.classes_of_task(1)
            new = [c for c in source.seen_classes(t_last) if c not in old]
        else:
            new = source.classes_of_task(t_last)
            new_set = set(new)
            old = [c for c in source.seen_classes(t_last) if c not in new_set]
        return self.class_group_accuracy(old), self.class_group_accuracy(new)

    def mean_phase_seconds(self) -> Dict[str, float]:
        totals = {p: 0.0 for p in PHASES}
        n = 0
        for rec in self.tasks:
            for p in PHASES:
                totals[p] += rec.phase_seconds[p]
            n += rec.n_stream_samples
        if n == 0:
            return {p: 0.0 for p in PHASES}
        return {p: totals[p] / n for p in PHASES}

    @property
    def mean_sample_seconds(self) -> float:
        return sum(self.mean_phase_seconds().values())


class _PairGD:
    """Online per-pair gradient state for the queue-free GD solver."""

    def __init__(self, dimension: int, learning_rate: float, optimizer: str):
        self.weights = np.eye(dimension)
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.t = 0
        self.m = np.zeros((dimension, dimension))
        self.v = np.zeros((dimension, dimension))

    def update(self, z_old: np.ndarray, z_new: np.ndarray, steps: int) -> None:
        for _ in range(steps):
            grad = 2.0 * np.outer(z_old, z_old @ self.weights - z_new)
            if not np.all(np.isfinite(grad)):
                raise DivergenceError(self.t)
            if self.optimizer == "sgd":
                self.weights -= self.learning_rate * grad
            else:
                self.t += 1
                self.m = 0.9 * self.m + 0.1 * grad
                self.v = 0.999 * self.v + 0.001 * grad * grad
                m_hat = self.m / (1 - 0.9 ** self.t)
                v_hat = self.v / (1 - 0.999 ** self.t)
                self.weights -= self.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)


def _stream_order(n: int, seed: int, task: int) -> np.ndarray:
    return np.random.default_rng([seed, 7919, task]).permutation(n)


def _selected_classes(source, config: RunConfig) -> Optional[frozenset]:
    """Class subset driving the unbalanced test stream (None = balanced)."""
    if config.test_balance != "unbalanced":
        return None
    all_classes = sorted(source.seen_classes(source.num_tasks))
    k = max(1, int(round(config.unbalanced_fraction * len(all_classes))))
    rng = np.random.default_rng([config.seed, 104729])
    picked = rng.choice(len(all_classes), size=k, replace=False)
    return frozenset(all_classes[i] for i in picked)


def run_engine(source, config: RunConfig, seed: Optional[int] = None) -> RunResult:
    """Run the full task sequence and collect metrics."""
    seed = config.seed if seed is None else seed
    selected = _selected_classes(source, config)
    table: Optional[PrototypeTable] = None
    records: List[TaskRunRecord] = []
    for t in range(1, source.num_tasks + 1):
        table, rec = run_task_cycle(source, config, t, table, seed, selected)
        records.append(rec)
    return RunResult(config=config, seed=seed, tasks=records)


def run_task_cycle(
    source,
    config: RunConfig,
    t: int,
    old_table: Optional[PrototypeTable],
    seed: int,
    selected: Optional[frozenset] = None,
) -> Tuple[PrototypeTable, TaskRunRecord]:
    """One task's test stage; returns (prototype table for the next task,
    metrics record)."""
    fresh = compute_prototypes(list(source.train_records(t)))
    pairs = source.test_pairs(t)
    order = _stream_order(len(pairs), seed, t)
    streamed = [pairs[i] for i in order]
    excluded: List = []
    if selected is not None:
        excluded = [p for p in streamed if p[0] not in selected]
        streamed = [p for p in streamed if p[0] in selected]

    rec = TaskRunRecord(task=t, old_table=old_table, fresh_table=fresh)
    old_classes = tuple(old_table.class_ids) if old_table is not None else ()

    if t == 1 or not old_classes or config.solver == "none":
        table = old_table.merged_with(fresh) if old_table is not None else fresh
        for class_id, _, z_new in streamed + excluded:
            start = time.perf_counter()
            pred = ncm_predict(z_new, table)
            rec.phase_seconds["predict"] += time.perf_counter() - start
            rec.samples.append(SampleLog(class_id, int(pred), -1,
                                         excluded=selected is not None and class_id not in selected))
            rec.features_new.append(np.asarray(z_new, dtype=np.float64))
        rec.n_stream_samples = len(streamed)
        return table, rec

    # test-time evolution path
    identity = Projector.identity(source.dimension)
    queue_pair: Optional[QueuePair] = None
    if config.solver in ("analytic", "gd_with_queue"):
        queue_pair = init_with_pseudo_features(
            old_table.restricted_to(old_classes), identity,
            capacity=config.queue_capacity, noise_scale=config.noise_scale,
            rng_seed=seed * 1000 + t,
        )
    pair_gd = _PairGD(source.dimension, config.gd_learning_rate, config.gd_optimizer) \
        if config.solver == "gd" else None
    gd_queue_weights = np.eye(source.dimension)
    gd_queue_state = {"t": 0, "m": np.zeros((source.dimension,) * 2),
                      "v": np.zeros((source.dimension,) * 2)}

    current = identity
    evolved = old_table  # stale until the first solve
    w_index = -1
    pending_old: List[np.ndarray] = []
    pending_new: List[np.ndarray] = []

    def predict_one(class_id: int, z_new: np.ndarray, is_excluded: bool) -> None:
        start = time.perf_counter()
        pred = ncm_predict(z_new, evolved.merged_with(fresh))
        rec.phase_seconds["predict"] += time.perf_counter() - start
        rec.samples.append(SampleLog(class_id, int(pred), w_index, excluded=is_excluded))
        rec.features_new.append(np.asarray(z_new, dtype=np.float64))

    for i, (class_id, z_old, z_new) in enumerate(streamed):
        if config.predict_before_update:
            predict_one(class_id, z_new, False)
        start = time.perf_counter()
        pending_old.append(np.asarray(z_old, dtype=np.float64))
        pending_new.append(np.asarray(z_new, dtype=np.float64))
        if queue_pair is not None and len(pending_old) >= config.update_stride:
            queue_pair.push(np.vstack(pending_old), np.vstack(pending_new))
            pending_old.clear()
            pending_new.clear()
        rec.phase_seconds["queue"] += time.perf_counter() - start

        resolve_due = (i + 1) % config.resolve_stride == 0
        start = time.perf_counter()
        if config.solver == "analytic" and resolve_due:
            current, _ = solve_analytic(
                queue_pair, config.ridge,
                singular_policy=config.singular_policy, min_ridge=config.min_ridge,
            )
        elif config.solver == "gd_with_queue" and resolve_due:
            q_old, q_new = queue_pair.matrices()
            n = q_old.shape[0]
            for _ in range(config.gd_steps):
                grad = (2.0 / n) * (q_old.T @ (q_old @ gd_queue_weights - q_new))
                if not np.all(np.isfinite(grad)):
                    raise DivergenceError(gd_queue_state["t"])
                if config.gd_optimizer == "sgd":
                    gd_queue_weights = gd_queue_weights - config.gd_learning_rate * grad
                else:
                    s = gd_queue_state
                    s["t"] += 1
                    s["m"] = 0.9 * s["m"] + 0.1 * grad
                    s["v"] = 0.999 * s["v"] + 0.001 * grad * grad
                    m_hat = s["m"] / (1 - 0.9 ** s["t"])
                    v_hat = s["v"] / (1 - 0.999 ** s["t"])
                    gd_queue_weights = gd_queue_weights - config.gd_learning_rate * m_hat / (
                        np.sqrt(v_hat) + 1e-8)
            current = Projector(gd_queue_weights)
        elif config.solver == "gd":
            pair_gd.update(np.asarray(z_old, dtype=np.float64),
                           np.asarray(z_new, dtype=np.float64), config.gd_steps)
            current = Projector(pair_gd.weights)
        if resolve_due or config.solver == "gd":
            rec.projector_snapshots.append(current.weights.copy())
            w_index = len(rec.projector_snapshots) - 1
            evolved = evolve_prototypes(old_table, current, old_classes)
        rec.phase_seconds["solve"] += time.perf_counter() - start

        if not config.predict_before_update:
            predict_one(class_id, z_new, False)
    rec.n_stream_samples = len(streamed)

    # excluded classes are evaluated against the final state without
    # contributing to queue updates
    for class_id, _, z_new in excluded:
        predict_one(class_id, z_new, True)

    _record_drift_similarity(rec, source, old_table, evolved, old_classes, t)
    return evolved.merged_with(fresh), rec


def _record_drift_similarity(rec, source, old_table, evolved, old_classes, t) -> None:
    if not hasattr(source, "reference_drifted_prototypes"):
        return
    reference = source.reference_drifted_prototypes(t, old_table.restricted_to(old_classes))
    rec.drift_similarity = true_drift_similarity(
        evolved.restricted_to(old_classes), reference, old_table.restricted_to(old_classes)
    )


def run_gd_oracle(source, config: RunConfig, seed: Optional[int] = None,
                  max_steps: int = 20000, grad_tol: float = 1e-10) -> RunResult:
    """Offline oracle: the projector is optimized by gradient descent to
    convergence on the full paired test stream before any prediction.

    Explicitly non-online; the result is labeled as an oracle."""
    seed = config.seed if seed is None else seed
    selected = _selected_classes(source, config)
    table: Optional[PrototypeTable] = None
    records: List[TaskRunRecord] = []
    for t in range(1, source.num_tasks + 1):
        fresh = compute_prototypes(list(source.train_records(t)))
        pairs = source.test_pairs(t)
        old_table = table
        old_classes = tuple(old_table.class_ids) if old_table is not None else ()
        rec = TaskRunRecord(task=t, old_table=old_table, fresh_table=fresh)
        if t == 1 or not old_classes:
            eval_table = fresh if old_table is None else old_table.merged_with(fresh)
            w_index = -1
        else:
            fit_pairs = pairs if selected is None else [p for p in pairs if p[0] in selected]
            if not fit_pairs:
                fit_pairs = pairs
            q_old = np.vstack([p[1] for p in fit_pairs])
            q_new = np.vstack([p[2] for p in fit_pairs])
            weights = _offline_gd(q_old, q_new, config.gd_learning_rate,
                                  config.gd_optimizer, max_steps, grad_tol)
            projector = Projector(weights)
            rec.projector_snapshots.append(projector.weights.copy())
            w_index = 0
            evolved = evolve_prototypes(old_table, projector, old_classes)
            eval_table = evolved.merged_with(fresh)
            _record_drift_similarity(rec, source, old_table, evolved, old_classes, t)
        for class_id, _, z_new in pairs:
            pred = ncm_predict(z_new, eval_table)
            is_excluded = selected is not None and class_id not in selected
            rec.samples.append(SampleLog(class_id, int(pred), w_index, excluded=is_excluded))
            rec.features_new.append(np.asarray(z_new, dtype=np.float64))
        rec.n_stream_samples = len(pairs)
        records.append(rec)
        table = eval_table
    return RunResult(config=config, seed=seed, tasks=records, oracle=True)


def _offline_gd(q_old: np.ndarray, q_new: np.ndarray, learning_rate: float,
                optimizer: str, max_steps: int, grad_tol: float) -> np.ndarray:
    """Full-batch descent on precomputed Gram products until the gradient
    norm falls below tolerance."""
    n, d = q_old.shape
    gram = q_old.T @ q_old / n
    rhs = q_old.T @ q_new / n
    weights = np.eye(d)
    t_step = 0
    m = np.zeros((d, d))
    v = np.zeros((d, d))
    for _ in range(max_steps):
        grad = 2.0 * (gram @ weights - rhs)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(t_step)
        if np.linalg.norm(grad) < grad_tol:
            break
        if optimizer == "sgd":
            weights = weights - learning_rate * grad
        else:
            t_step += 1
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad * grad
            m_hat = m / (1 - 0.9 ** t_step)
            v_hat = v / (1 - 0.999 ** t_step)
            weights = weights - learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
    return weights


def replay_audit(result: RunResult) -> bool:
    """Re-evaluate every logged prediction from the stored projector
    snapshots and base tables; returns True iff all match exactly."""
    for rec in result.tasks:
        old_classes = tuple(rec.old_table.class_ids) if rec.old_table is not None else ()
        cache: Dict[int, PrototypeTable] = {}
        for sample, z_new in zip(rec.samples, rec.features_new):
            if sample.w_index < 0 or rec.old_table is None:
                table = rec.fresh_table if rec.old_table is None \
                    else rec.old_table.merged_with(rec.fresh_table)
            else:
                if sample.w_index not in cache:
                    projector = Projector(rec.projector_snapshots[sample.w_index])
                    cache[sample.w_index] = evolve_prototypes(
                        rec.old_table, projector, old_classes
                    ).merged_with(rec.fresh_table)
                table = cache[sample.w_index]
            if ncm_predict(z_new, table) != sample.predicted:
                return False
    return True
