"""Greedy (width-1 beam) search over feature sets, with successive-halving
candidate evaluation on field-wise logistic regression."""

import copy
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSet, candidate_crosses
from .lr import LRHyperParams, auc, field_wise_logits, train_field_wise, train_full
from .tabular import BlockRule, BsumCache, partition_blocks, smbgd_block_bound, update_bsum

log = logging.getLogger(__name__)

STOP_MAX_FEATURES = "max_features"
STOP_RUNTIME = "max_runtime"
STOP_PERFORMANCE = "performance"
STOP_NO_CANDIDATES = "no_candidates"
STOP_INTERRUPTED = "interrupted"


class Interrupted(Exception):
    """Raised inside a halving run when the search must stop at once."""


@dataclass(frozen=True)
class TerminationConfig:
    max_runtime: float = None
    max_cross_features: int = None
    performance_guard: bool = True

    def __post_init__(self):
        if self.max_runtime is not None and self.max_runtime < 0:
            raise ValueError("max_runtime must be non-negative")
        if self.max_cross_features is not None and self.max_cross_features < 0:
            raise ValueError("max_cross_features must be non-negative")


@dataclass
class CandidateArm:
    cross: object
    train_codes: np.ndarray
    val_codes: np.ndarray
    weights: np.ndarray = None
    blocks_consumed: int = 0
    current_auc: float = math.nan

    @property
    def rank_key(self):
        return (-self.current_auc, self.cross.order, self.cross.constituents)


@dataclass(frozen=True)
class HalvingRound:
    k: int
    blocks: tuple
    arms_in: int
    arms_out: int


def smbgd(arms, partition, y_train, y_val, hyper, bucket_count, stamp=None, workers=1, should_stop=None):
    """Successive mini-batch gradient descent over candidate arms.

    Round k trains every surviving arm on 2**k fresh blocks (warm-started),
    scores it by validation AUC and keeps the top floor(half), at least one.
    Returns ``(winner, rounds)``.
    """
    if not arms:
        raise ValueError("smbgd needs at least one arm")
    arms = list(arms)
    n_rounds = max(1, math.ceil(math.log2(len(arms))))
    y_val = np.asarray(y_val)
    next_block = 0
    rounds = []

    def pull(arm, blocks):
        arm.weights = train_field_wise(arm.train_codes, y_train, partition, blocks, hyper, bucket_count,
                                       warm=arm.weights, stamp=stamp)
        arm.blocks_consumed += len(blocks)
        arm.current_auc = auc(field_wise_logits(arm.weights, arm.val_codes, partition.bsum.val), y_val)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for k in range(n_rounds):
            if should_stop is not None and should_stop():
                raise Interrupted
            want = 1 << k
            if next_block + want > partition.block_count:
                raise ValueError(f"partition has {partition.block_count} blocks, round {k} needs "
                                 f"{next_block + want}")
            blocks = list(range(next_block, next_block + want))
            next_block += want
            if pool is None:
                for arm in arms:
                    pull(arm, blocks)
            else:
                list(pool.map(lambda a: pull(a, blocks), arms))
            arms.sort(key=lambda a: a.rank_key)
            keep = max(1, len(arms) // 2)
            rounds.append(HalvingRound(k, tuple(blocks), len(arms), keep))
            arms = arms[:keep]
            if len(arms) == 1:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return arms[0], rounds


@dataclass
class IterationRecord:
    iteration: int
    elapsed: float
    n_candidates: int
    winner: str
    constituents: tuple
    field_auc: float
    auc: float
    accepted: bool

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "elapsed_seconds": round(self.elapsed, 6),
            "candidates": self.n_candidates,
            "winner": self.winner,
            "constituents": list(self.constituents),
            "field_auc": self.field_auc,
            "auc": self.auc,
            "accepted": self.accepted,
        }


@dataclass
class SearchState:
    solution: FeatureSet
    solution_model: object
    solution_auc: float
    iteration: int = 0
    elapsed: float = 0.0
    history: list = field(default_factory=list)
    stop_reason: str = None
    rejected: IterationRecord = None
    candidates_evaluated: int = 0

    def snapshot(self):
        state = copy.copy(self)
        state.history = list(self.history)
        return state


class CrossSearch:
    """Runs the beam search and owns the interrupt flag.

    ``data`` is a :class:`featcross.features.EncodedData`. ``progress`` is
    called with an :class:`IterationRecord` after every search iteration.
    """

    def __init__(self, data, hyper=None, termination=None, block_rule=None, workers=1,
                 full_epochs=1, base_names=None, progress=None):
        self.data = data
        self.hyper = hyper or LRHyperParams()
        self.termination = termination or TerminationConfig()
        self.block_rule = block_rule or BlockRule()
        self.workers = max(1, int(workers or 1))
        self.full_epochs = full_epochs
        self.base_names = base_names or [str(i) for i in range(data.n_base)]
        self.progress = progress
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self.state = None
        self.base_auc = None
        self.base_model = None
        self._bsum = BsumCache(len(data.y_train), len(data.y_val))
        self._stamp = 0

    def interrupt(self):
        """Ask the search to stop and return the last adopted solution.

        The in-flight halving round, if any, is discarded. Safe to call more
        than once and from another thread or a signal handler.
        """
        self._stop.set()
        with self._lock:
            return None if self.state is None else self.state.snapshot()

    @property
    def interrupted(self):
        return self._stop.is_set()

    def fit_full(self, feature_set):
        train, val = self.data.matrix(feature_set.members)
        return train_full(train, self.data.y_train, val, self.data.y_val, feature_set.members,
                          self.hyper, self.data.cfg.bucket_count, epochs=self.full_epochs)

    def run(self, initial=None):
        started = time.monotonic()
        term = self.termination
        if initial is None:
            root = FeatureSet(self.data.n_base)
            model, metric = self.fit_full(root)
            initial = SearchState(root, model, metric.auc)
        self.base_auc = initial.solution_auc
        self.base_model = initial.solution_model
        with self._lock:
            self.state = initial
        state = initial

        def out_of_time():
            return term.max_runtime is not None and time.monotonic() - started >= term.max_runtime

        def should_stop():
            return self._stop.is_set() or out_of_time()

        while True:
            if self._stop.is_set():
                reason = STOP_INTERRUPTED
            elif term.max_cross_features is not None and len(state.solution.crosses) >= term.max_cross_features:
                reason = STOP_MAX_FEATURES
            elif out_of_time():
                reason = STOP_RUNTIME
            else:
                reason = None
            cands = [] if reason else candidate_crosses(state.solution)
            if reason is None and not cands:
                reason = STOP_NO_CANDIDATES
            if reason:
                break
            try:
                record, new_state = self._iterate(state, cands, started, should_stop)
            except Interrupted:
                reason = STOP_INTERRUPTED if self._stop.is_set() else STOP_RUNTIME
                break
            if self.progress is not None:
                self.progress(record)
            if new_state is None:
                reason = STOP_PERFORMANCE
                with self._lock:
                    state.rejected = record
                break
            state = new_state
            with self._lock:
                self.state = state
        with self._lock:
            state.stop_reason = reason
            state.elapsed = time.monotonic() - started
            self.state = state
        log.info("search stopped: %s after %d adopted crosses", reason, len(state.solution.crosses))
        return state

    def _iterate(self, state, cands, started, should_stop):
        data = self.data
        members = state.solution.members
        partition = partition_blocks(len(data.y_train), len(cands), self.block_rule, len(data.y_val),
                                     bsum=self._bsum)
        needed = min(partition.block_count, max(1, smbgd_block_bound(len(cands))))
        train_codes, val_codes = data.matrix(members)
        update_bsum(partition, state.solution_model, train_codes, val_codes, range(needed), self._stamp)
        arms = []
        for c in cands:
            tr, va = data.column(c)
            arms.append(CandidateArm(c, tr, va))
        winner, _ = smbgd(arms, partition, data.y_train, data.y_val, self.hyper, data.cfg.bucket_count,
                          stamp=self._stamp, workers=self.workers, should_stop=should_stop)
        if should_stop():
            raise Interrupted
        new_solution = state.solution.add(winner.cross)
        model, metric = self.fit_full(new_solution)
        data.forget(new_solution.members)
        accepted = not (self.termination.performance_guard and metric.auc < state.solution_auc)
        record = IterationRecord(
            iteration=state.iteration + 1,
            elapsed=time.monotonic() - started,
            n_candidates=len(cands),
            winner=winner.cross.name(self.base_names),
            constituents=winner.cross.constituents,
            field_auc=winner.current_auc,
            auc=metric.auc,
            accepted=accepted,
        )
        evaluated = state.candidates_evaluated + len(cands)
        if not accepted:
            state.candidates_evaluated = evaluated
            return record, None
        self._stamp += 1
        new_state = SearchState(
            solution=new_solution,
            solution_model=model,
            solution_auc=metric.auc,
            iteration=state.iteration + 1,
            elapsed=record.elapsed,
            history=state.history + [record],
            candidates_evaluated=evaluated,
        )
        return record, new_state


def beam_search(data, hyper=None, termination=None, **kwargs):
    """Convenience wrapper: build a :class:`CrossSearch` and run it."""
    return CrossSearch(data, hyper, termination, **kwargs).run()
