"""Constraint-violation profiles, outcome classification, Wilson CIs.

Violation profiles mimic how a deployed chunked policy is scored: the
transport knots are grouped into windows of ``window`` commands starting
every ``stride`` knots (matching the predict-16/execute-8 cadence), and
each knot's commanded relative transform is compared against the window's
first commanded relative transform.  Errors are position (Euclidean) and
rotation (geodesic), evaluated at knot points only.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from . import bimanual as bm
from .episodes import BOX_DROP, GRASP_ATTACH, GRASP_DETACH, PLACED
from .errors import (EmptyDataset, InvalidCounts, MissingEventLog,
                     NoTransportPhase)
from .geometry import geodesic_distance

CATEGORIES = ("I", "II", "III", "IV")


@dataclass
class WindowRecord:
    window_start_t: int
    reference_rel: object
    pos_err: np.ndarray
    rot_err: np.ndarray


@dataclass
class ViolationProfile:
    windows: list
    pos_mean: float
    pos_std: float
    pos_max: float
    rot_mean: float
    rot_std: float
    rot_max: float

    def all_pos_errors(self):
        return np.concatenate([w.pos_err for w in self.windows])

    def all_rot_errors(self):
        return np.concatenate([w.rot_err for w in self.windows])


def violation_profile(model, episode, window=16, stride=None):
    """Windowed relative-transform errors over the transport knots.

    With window=1 every knot is its own reference and all errors vanish.
    """
    if stride is None:
        stride = max(1, window // 2)
    transport = episode.transport_indices()
    if not transport:
        raise NoTransportPhase("episode has no transport-phase knots")
    rels = [bm.relative_of_q14(model, episode.steps[i].act[:14])
            for i in transport]
    windows = []
    for start in range(0, len(transport), stride):
        ref = rels[start]
        chunk = rels[start:start + window]
        pos = np.array([np.linalg.norm(x.translation - ref.translation)
                        for x in chunk])
        rot = np.array([geodesic_distance(x.rotation, ref.rotation)
                        for x in chunk])
        windows.append(WindowRecord(episode.steps[transport[start]].t, ref,
                                    pos, rot))
    pos = np.concatenate([w.pos_err for w in windows])
    rot = np.concatenate([w.rot_err for w in windows])
    return ViolationProfile(windows, float(pos.mean()), float(pos.std()),
                            float(pos.max()), float(rot.mean()),
                            float(rot.std()), float(rot.max()))


@dataclass(frozen=True)
class Outcome:
    """Task outcome category I..IV; I and II count as binary success."""

    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")

    @property
    def success(self):
        return self.category in ("I", "II")


def classify_outcome(episode):
    """Category from the world event log.

    I:   placed, both grippers attached throughout transport;
    II:  placed despite a grasp detach during transport;
    III: both grippers attached but the box dropped before placement;
    IV:  anything else (the box was never carried to the shelf).
    """
    if episode.events is None:
        raise MissingEventLog("episode carries no event log")
    placed = any(e.kind == PLACED for e in episode.events)
    attaches = sum(1 for e in episode.events if e.kind == GRASP_ATTACH)
    dropped = any(e.kind == BOX_DROP for e in episode.events)
    detach_in_transport = any(
        e.kind == GRASP_DETACH
        and episode.steps[e.t].phase == "transport"
        for e in episode.events)
    if placed:
        return Outcome("II" if detach_in_transport else "I")
    if attaches == 2 and dropped:
        return Outcome("III")
    return Outcome("IV")


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise InvalidCounts(f"bad counts {successes}/{trials}")
    if not 0.0 < confidence < 1.0:
        raise InvalidCounts("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 * (1.0 + confidence))
    n = trials
    p = successes / n
    z2n = z * z / n
    center = (p + z2n / 2.0) / (1.0 + z2n)
    half = (z / (1.0 + z2n)) * np.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EvaluationReport:
    n_episodes: int
    outcome_counts: dict
    successes: int
    success_rate: float
    wilson_lo: float
    wilson_hi: float
    pos_mean_cm: float
    pos_std_cm: float
    pos_max_cm: float
    rot_mean_deg: float
    rot_std_deg: float
    rot_max_deg: float
    window: int
    stride: int
    confidence: float

    def to_dict(self):
        return {
            "schema_version": "eval_report_v1",
            "n_episodes": self.n_episodes,
            "outcome_counts": self.outcome_counts,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "violation": {
                "pos_mean_cm": self.pos_mean_cm, "pos_std_cm": self.pos_std_cm,
                "pos_max_cm": self.pos_max_cm, "rot_mean_deg": self.rot_mean_deg,
                "rot_std_deg": self.rot_std_deg, "rot_max_deg": self.rot_max_deg,
            },
            "window": self.window, "stride": self.stride,
            "confidence": self.confidence,
        }


def aggregate_report(episodes, profiles, outcomes, window=16, stride=8,
                     confidence=0.95):
    """Table-style summary: category counts, Wilson CI, pooled errors."""
    if not episodes:
        raise EmptyDataset("cannot aggregate an empty episode list")
    if not (len(episodes) == len(profiles) == len(outcomes)):
        raise InvalidCounts("episodes, profiles, outcomes length mismatch")
    counts = {c: 0 for c in CATEGORIES}
    for o in outcomes:
        counts[o.category] += 1
    successes = sum(1 for o in outcomes if o.success)
    lo, hi = wilson_interval(successes, len(outcomes), confidence)
    pos = np.concatenate([p.all_pos_errors() for p in profiles])
    rot = np.concatenate([p.all_rot_errors() for p in profiles])
    return EvaluationReport(
        n_episodes=len(episodes), outcome_counts=counts, successes=successes,
        success_rate=successes / len(outcomes), wilson_lo=lo, wilson_hi=hi,
        pos_mean_cm=float(pos.mean() * 100.0),
        pos_std_cm=float(pos.std() * 100.0),
        pos_max_cm=float(pos.max() * 100.0),
        rot_mean_deg=float(np.degrees(rot.mean())),
        rot_std_deg=float(np.degrees(rot.std())),
        rot_max_deg=float(np.degrees(rot.max())),
        window=window, stride=stride, confidence=confidence)
