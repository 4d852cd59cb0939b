"""Car-following period data model, log extraction, splitting, clustering.

A period is a fixed-step time series of (follower speed, leader speed,
gap, follower acceleration). Raw radar logs are cut into periods with
the four-rule car-following filter: same radar target throughout,
longitudinal distance under 120 m, lateral distance under 2.5 m, and
more than 15 s of continuous data.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClusteringDegenerateError,
    InsufficientDataError,
    MalformedLogError,
)

MAX_LONG_DIST = 120.0  # m, free-flow cutoff
MAX_LAT_DIST = 2.5  # m, same-lane requirement
MIN_DURATION = 15.0  # s, strict lower bound
CALIBRATION_FRACTION = 0.7

# follower speeds below this are treated as stopped when computing time gaps
TIME_GAP_V_MIN = 0.5  # m/s


@dataclass(frozen=True)
class RawLogRecord:
    t: float
    target_id: int
    v_follow: float
    v_lead: float
    long_dist: float
    lat_dist: float
    a_follow: float


@dataclass
class CFPeriod:
    """One extracted car-following event at fixed step dt."""

    dt: float
    v_follow: np.ndarray
    v_lead: np.ndarray
    gap: np.ndarray
    a_follow: np.ndarray
    driver_id: str = ""

    def __len__(self) -> int:
        return len(self.v_follow)

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt

    def validate(self) -> None:
        """Check the extraction-filter invariants (called on ingest paths;
        hand-built periods for unit simulations may be shorter)."""
        n = len(self)
        arrays = (self.v_follow, self.v_lead, self.gap, self.a_follow)
        if any(len(a) != n for a in arrays):
            raise ValueError("period arrays must share one length")
        if self.duration <= MIN_DURATION:
            raise ValueError(f"period duration {self.duration:.2f}s must exceed {MIN_DURATION}s")
        if np.any(self.gap >= MAX_LONG_DIST):
            raise ValueError("period contains gaps at or beyond 120 m")
        if np.any(self.v_follow < 0) or np.any(self.v_lead < 0):
            raise ValueError("period contains negative speeds")
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise ValueError("period contains non-finite samples")


@dataclass
class DriverDataset:
    driver_id: str
    periods: list[CFPeriod]
    style: str = "unknown"  # aggressive | conservative | unknown

    @property
    def dt(self) -> float:
        return self.periods[0].dt


@dataclass(frozen=True)
class StyleFeatures:
    """Per-driver 6-vector: (mean, std) of speed, gap and relative speed."""

    mean_speed: float
    std_speed: float
    mean_gap: float
    std_gap: float
    mean_dv: float
    std_dv: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.mean_speed,
                self.std_speed,
                self.mean_gap,
                self.std_gap,
                self.mean_dv,
                self.std_dv,
            ]
        )


def pooled_mean_gap(ds: DriverDataset) -> float:
    return float(np.mean(np.concatenate([p.gap for p in ds.periods])))


def pooled_mean_speed(ds: DriverDataset) -> float:
    return float(np.mean(np.concatenate([p.v_follow for p in ds.periods])))


def pooled_mean_time_gap(ds: DriverDataset, v_min: float = TIME_GAP_V_MIN) -> float:
    """Mean of gap/speed over samples where the follower is moving.

    Stopped samples are excluded: the ratio diverges as speed -> 0 and
    would be dominated by a handful of standstill frames.
    """
    gaps = np.concatenate([p.gap for p in ds.periods])
    speeds = np.concatenate([p.v_follow for p in ds.periods])
    moving = speeds >= v_min
    if not np.any(moving):
        raise InsufficientDataError("driver has no moving samples")
    return float(np.mean(gaps[moving] / speeds[moving]))


def style_features(ds: DriverDataset) -> StyleFeatures:
    v = np.concatenate([p.v_follow for p in ds.periods])
    gap = np.concatenate([p.gap for p in ds.periods])
    dv = np.concatenate([p.v_lead - p.v_follow for p in ds.periods])
    return StyleFeatures(
        float(v.mean()), float(v.std()),
        float(gap.mean()), float(gap.std()),
        float(dv.mean()), float(dv.std()),
    )


# ---------------------------------------------------------------------------
# extraction

def _record_run_breaks(log: list[RawLogRecord]):
    """Yield maximal index runs over which all filter predicates hold."""
    start = None
    prev_target = None
    for i, rec in enumerate(log):
        ok = rec.long_dist < MAX_LONG_DIST and rec.lat_dist < MAX_LAT_DIST
        if not ok:
            if start is not None:
                yield start, i
                start = None
            prev_target = None
            continue
        if start is None:
            start = i
        elif rec.target_id != prev_target:
            yield start, i
            start = i
        prev_target = rec.target_id
    if start is not None:
        yield start, len(log)


def extract_periods(log, dt: float, driver_id: str = "") -> list[CFPeriod]:
    """Cut a time-ordered raw log into valid car-following periods.

    Runs where the target id stays constant, the longitudinal distance is
    below 120 m and the lateral distance below 2.5 m are kept if they span
    more than 15 s; each kept run is resampled to the fixed step dt by
    nearest-sample lookup.
    """
    log = list(log)
    for a, b in zip(log, log[1:]):
        if not b.t > a.t:
            raise MalformedLogError(f"timestamps not strictly increasing at t={b.t}")

    periods = []
    for lo, hi in _record_run_breaks(log):
        run = log[lo:hi]
        t0, t1 = run[0].t, run[-1].t
        n_samples = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
        if (n_samples - 1) * dt <= MIN_DURATION:
            continue
        times = np.array([r.t for r in run])
        grid = t0 + dt * np.arange(n_samples)
        idx = np.searchsorted(times, grid)
        idx = np.clip(idx, 1, len(run) - 1)
        left_closer = (grid - times[idx - 1]) <= (times[idx] - grid)
        nearest = np.where(left_closer, idx - 1, idx)
        period = CFPeriod(
            dt=dt,
            v_follow=np.array([run[i].v_follow for i in nearest]),
            v_lead=np.array([run[i].v_lead for i in nearest]),
            gap=np.array([run[i].long_dist for i in nearest]),
            a_follow=np.array([run[i].a_follow for i in nearest]),
            driver_id=driver_id,
        )
        period.validate()
        periods.append(period)
    return periods


def period_to_log(period: CFPeriod, target_id: int = 1, lat_dist: float = 0.0):
    """Rebuild a raw log from a period (inverse of extraction, for tests
    and for round-tripping synthetic data through the filter)."""
    return [
        RawLogRecord(
            t=i * period.dt,
            target_id=target_id,
            v_follow=float(period.v_follow[i]),
            v_lead=float(period.v_lead[i]),
            long_dist=float(period.gap[i]),
            lat_dist=lat_dist,
            a_follow=float(period.a_follow[i]),
        )
        for i in range(len(period))
    ]


# ---------------------------------------------------------------------------
# splitting and clustering

def split_calibration_validation(ds: DriverDataset, seed: int):
    """Disjoint 70/30 split of a driver's periods, deterministic per seed."""
    n = len(ds.periods)
    if n < 10:
        raise InsufficientDataError(f"need at least 10 periods to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_cal = int(round(CALIBRATION_FRACTION * n))
    cal = [ds.periods[i] for i in order[:n_cal]]
    val = [ds.periods[i] for i in order[n_cal:]]
    return cal, val


def _kmeans_once(x: np.ndarray, k: int, rng) -> tuple[np.ndarray, float, list[float]]:
    """One Lloyd run from random distinct centers; returns labels, final
    within-cluster sum of squares, and the per-iteration objective trace."""
    n = x.shape[0]
    centers = x[rng.choice(n, size=k, replace=False)].copy()
    labels = np.zeros(n, dtype=int)
    trace = []
    for _ in range(100):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(n), new_labels].sum()))
        for j in range(k):
            members = x[new_labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
        if np.array_equal(new_labels, labels) and len(trace) > 1:
            break
        labels = new_labels
    wcss = float(((x - centers[labels]) ** 2).sum())
    trace.append(wcss)
    return labels, wcss, trace


def kmeans(x: np.ndarray, k: int, seed: int = 0, restarts: int = 10):
    """k-means with restarts; returns (labels, wcss, objective trace of the
    winning run). The trace is non-increasing (Lloyd monotonicity)."""
    ss = np.random.SeedSequence(seed)
    best = None
    for child in ss.spawn(restarts):
        rng = np.random.default_rng(child)
        labels, wcss, trace = _kmeans_once(x, k, rng)
        if best is None or wcss < best[1]:
            best = (labels, wcss, trace)
    return best


def cluster_driving_styles(datasets: list[DriverDataset], seed: int = 0) -> dict[str, str]:
    """Label each driver aggressive/conservative by k-means (k=2) on
    z-scored style features; the cluster with the smaller mean time gap
    is the aggressive one."""
    if len(datasets) < 2:
        raise InsufficientDataError("clustering needs at least 2 drivers")
    feats = np.array([style_features(ds).as_vector() for ds in datasets])
    std = feats.std(axis=0)
    if np.all(std < 1e-12):
        raise ClusteringDegenerateError("all drivers have identical features")
    std = np.where(std < 1e-12, 1.0, std)
    z = (feats - feats.mean(axis=0)) / std

    labels, _, _ = kmeans(z, k=2, seed=seed, restarts=10)
    if len(set(labels.tolist())) < 2:
        raise ClusteringDegenerateError("k-means collapsed to a single cluster")

    time_gaps = np.array([pooled_mean_time_gap(ds) for ds in datasets])
    mean_tg = [time_gaps[labels == j].mean() for j in (0, 1)]
    aggressive_cluster = int(np.argmin(mean_tg))
    return {
        ds.driver_id: ("aggressive" if labels[i] == aggressive_cluster else "conservative")
        for i, ds in enumerate(datasets)
    }


# ---------------------------------------------------------------------------
# file formats

PERIOD_HEADER = ["t", "v_follow", "v_lead", "gap", "a_follow"]
RAW_LOG_HEADER = ["t", "target_id", "v_follow", "v_lead", "long_dist", "lat_dist", "a_follow"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_period_csv(period: CFPeriod, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PERIOD_HEADER)
        for i in range(len(period)):
            w.writerow(
                [
                    _fmt(i * period.dt),
                    _fmt(period.v_follow[i]),
                    _fmt(period.v_lead[i]),
                    _fmt(period.gap[i]),
                    _fmt(period.a_follow[i]),
                ]
            )


def load_period_csv(path, dt: float | None = None, driver_id: str = "") -> CFPeriod:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != PERIOD_HEADER:
        raise MalformedLogError(f"{path}: expected header {PERIOD_HEADER}, got {rows[0]}")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    if dt is None:
        dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.1
    return CFPeriod(
        dt=dt,
        v_follow=data[:, 1],
        v_lead=data[:, 2],
        gap=data[:, 3],
        a_follow=data[:, 4],
        driver_id=driver_id,
    )


def load_raw_log_csv(path) -> list[RawLogRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != RAW_LOG_HEADER:
        raise MalformedLogError(f"{path}: expected header {RAW_LOG_HEADER}, got {rows[0]}")
    return [
        RawLogRecord(
            t=float(r[0]),
            target_id=int(r[1]),
            v_follow=float(r[2]),
            v_lead=float(r[3]),
            long_dist=float(r[4]),
            lat_dist=float(r[5]),
            a_follow=float(r[6]),
        )
        for r in rows[1:]
    ]


def save_raw_log_csv(log, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_LOG_HEADER)
        for r in log:
            w.writerow(
                [_fmt(r.t), r.target_id, _fmt(r.v_follow), _fmt(r.v_lead),
                 _fmt(r.long_dist), _fmt(r.lat_dist), _fmt(r.a_follow)]
            )


def save_dataset(datasets: list[DriverDataset], out_dir) -> str:
    """Write one CSV per period plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for ds in datasets:
        ddir = os.path.join(out_dir, ds.driver_id)
        os.makedirs(ddir, exist_ok=True)
        files = []
        for i, period in enumerate(ds.periods):
            rel = os.path.join(ds.driver_id, f"p{i:03d}.csv")
            save_period_csv(period, os.path.join(out_dir, rel))
            files.append(rel)
        entries.append(
            {"driver_id": ds.driver_id, "style": ds.style, "dt": ds.dt, "periods": files}
        )
    manifest = {"version": 1, "drivers": entries}
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path


def load_dataset(data_dir) -> list[DriverDataset]:
    with open(os.path.join(data_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    datasets = []
    for entry in manifest["drivers"]:
        periods = [
            load_period_csv(os.path.join(data_dir, rel), dt=entry["dt"],
                            driver_id=entry["driver_id"])
            for rel in entry["periods"]
        ]
        datasets.append(
            DriverDataset(driver_id=entry["driver_id"], periods=periods, style=entry["style"])
        )
    return datasets


def load_driver(data_dir, driver_id: str) -> DriverDataset:
    for ds in load_dataset(data_dir):
        if ds.driver_id == driver_id:
            return ds
    raise InsufficientDataError(f"driver {driver_id!r} not found in {data_dir}")
