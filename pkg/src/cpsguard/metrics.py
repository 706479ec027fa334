"""Detection metrics, time-to-detect, and compromise-resilience statistics."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .env import Label

CSV_COLUMNS = ("seed", "mode", "return", "f1", "precision", "recall", "far", "mttd", "accuracy")
NULL = None  # marker for metrics whose denominator is zero


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def add_labels(self, labels: np.ndarray) -> None:
        labels = np.asarray(labels)
        self.tp += int((labels == Label.TP).sum())
        self.fp += int((labels == Label.FP).sum())
        self.fn += int((labels == Label.FN).sum())
        self.tn += int((labels == Label.TN).sum())

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass
class MetricsReport:
    precision: float | None
    recall: float | None
    f1: float
    accuracy: float | None
    far: float | None
    mttd: float | None
    mean_return: float | None
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    n_detected: int = 0

    def row(self, seed, mode: str) -> dict:
        return {
            "seed": seed,
            "mode": mode,
            "return": self.mean_return,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "far": self.far,
            "mttd": self.mttd,
            "accuracy": self.accuracy,
        }

    def to_json(self, seed=None, mode: str | None = None) -> str:
        d = self.row(seed, mode)
        d["counts"] = asdict(self.counts)
        d["n_detected"] = self.n_detected
        return json.dumps(d, sort_keys=True)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else NULL


def compute_metrics(counts: ConfusionCounts, detection_delays: Sequence[float] = (),
                    returns: Sequence[float] = ()) -> MetricsReport:
    """Precision, recall, F1, accuracy, FAR = FP/(FP+TN), MTTD = mean detection delay.

    Zero denominators give ``None``; F1 falls back to 0 in that case.
    """
    for name in ("tp", "fp", "fn", "tn"):
        if getattr(counts, name) < 0:
            raise ValueError(f"negative count {name}")
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    delays = list(detection_delays)
    mttd = float(sum(delays)) / len(delays) if delays else NULL
    rets = list(returns)
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=_ratio(tp + tn, counts.total),
        far=_ratio(fp, fp + tn),
        mttd=mttd,
        mean_return=float(np.mean(rets)) if rets else NULL,
        counts=ConfusionCounts(tp, fp, fn, tn),
        n_detected=len(delays),
    )


class DetectionTracker:
    """Tracks compromise onsets and first true-positive per incident.

    Delay counts the steps of an incident up to and including the detecting step,
    so an incident caught on the step it began has delay 1.
    """

    def __init__(self, n: int):
        self.onset = np.full(n, -1, dtype=np.int64)
        self.detected = np.zeros(n, dtype=bool)
        self.delays: list[int] = []

    def update(self, t: int, comp_after_attack: np.ndarray, labels: np.ndarray,
               comp_end: np.ndarray) -> None:
        new = comp_after_attack & (self.onset < 0)
        self.onset[new] = t
        self.detected[new] = False
        hit = comp_after_attack & (labels == Label.TP) & ~self.detected
        for i in np.flatnonzero(hit):
            self.delays.append(int(t - self.onset[i] + 1))
        self.detected |= hit
        ended = ~comp_end
        self.onset[ended] = -1
        self.detected[ended] = False


@dataclass
class ResilienceReport:
    tau: list[list[int]]
    freq: np.ndarray
    rho: float
    horizon: int

    def to_dict(self) -> dict:
        return {"tau": self.tau, "freq": [float(f) for f in self.freq], "rho": self.rho,
                "horizon": self.horizon}


def compute_resilience(trace: Sequence[Iterable[int]] | np.ndarray, horizon: int | None = None,
                       n: int | None = None) -> ResilienceReport:
    """Compromise run lengths, per-subsystem frequency and their mean over a trace.

    ``trace`` is either a (T, n) boolean matrix or a length-T list of compromised-index sets.
    """
    if isinstance(trace, np.ndarray) and trace.ndim == 2:
        mat = trace.astype(bool)
        if n is not None and mat.shape[1] != n:
            raise ValueError(f"ragged trace: rows have {mat.shape[1]} columns, expected {n}")
    else:
        if n is None:
            raise ValueError("n is required for set-valued traces")
        mat = np.zeros((len(trace), n), dtype=bool)
        for t, comp in enumerate(trace):
            idx = list(comp)
            if any(not 0 <= i < n for i in idx):
                raise ValueError(f"ragged trace: index out of range at step {t}")
            mat[t, idx] = True
    T_ = mat.shape[0]
    if horizon is not None and horizon != T_:
        raise ValueError(f"trace length {T_} does not match horizon {horizon}")
    if T_ == 0:
        raise ValueError("empty trace")
    freq = mat.mean(axis=0)
    tau = []
    for i in range(mat.shape[1]):
        runs, cur = [], 0
        for v in mat[:, i]:
            if v:
                cur += 1
            elif cur:
                runs.append(cur)
                cur = 0
        if cur:
            runs.append(cur)
        tau.append(runs)
    return ResilienceReport(tau=tau, freq=freq, rho=float(freq.mean()), horizon=T_)


def rho_from_counts(trace_matrix: np.ndarray) -> float:
    """(1/T) sum_t |Comp(t)| / n -- the time-average form of the compromise ratio."""
    m = np.asarray(trace_matrix, dtype=bool)
    T_, n = m.shape
    return float(sum(m[t].sum() / n for t in range(T_)) / T_)


@dataclass(frozen=True)
class EpsDeltaVerdict:
    fraction: float
    required: float
    passed: bool


def check_eps_delta(rhos: Sequence[float], eps: float, delta: float) -> EpsDeltaVerdict:
    rhos = list(rhos)
    if not rhos:
        raise ValueError("need at least one episode")
    frac = sum(1 for r in rhos if r <= eps) / len(rhos)
    return EpsDeltaVerdict(fraction=frac, required=1.0 - delta, passed=frac >= 1.0 - delta)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def parse_metrics_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    out = []
    for r in reader:
        row = {}
        for k, v in r.items():
            if k == "mode":
                row[k] = v
            elif k == "seed":
                row[k] = int(v)
            else:
                row[k] = float(v) if v != "" else None
        out.append(row)
    return out
