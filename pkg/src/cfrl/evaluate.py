"""Rollout-based evaluation: pooled RMSPE, intra-/inter-driver protocol."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import env
from .data import DriverDataset, split_calibration_validation
from .metrics import pooled_rmspe


def simulate_on_period(policy, period):
    """Roll `policy` against a period; returns (sim_v, sim_gap, obs_v,
    obs_gap, collided), truncated at collision if one occurs."""
    traj = env.run_episode(policy, period)
    n = len(traj.states)
    sim_v = np.array([s.v_follow for s in traj.states])
    sim_gap = np.array([s.gap for s in traj.states])
    return sim_v, sim_gap, np.asarray(period.v_follow[:n]), np.asarray(period.gap[:n]), traj.collided


def evaluate_policy(policy, periods):
    """Pooled spacing and speed RMSPE of a policy over a period set.

    Collision-truncated rollouts contribute their simulated prefix only.
    """
    spacing_pairs = []
    speed_pairs = []
    for period in periods:
        sim_v, sim_gap, obs_v, obs_gap, _ = simulate_on_period(policy, period)
        spacing_pairs.append((sim_gap, obs_gap))
        speed_pairs.append((sim_v, obs_v))
    return pooled_rmspe(spacing_pairs), pooled_rmspe(speed_pairs)


def spacing_rmspe(policy, periods) -> float:
    return evaluate_policy(policy, periods)[0]


@dataclass
class ErrorMatrix:
    """n x n RMSPE grid: rows = calibration driver, cols = validation driver.

    The diagonal is intra-driver error on the 30% validation split; the
    off-diagonal uses all periods of the validating driver. The companion
    `periods_used` grid records evaluation-set sizes.
    """

    driver_ids: list[str]
    values: np.ndarray
    periods_used: np.ndarray

    def mean_diagonal(self) -> float:
        return float(np.mean(np.diag(self.values)))

    def mean_off_diagonal(self) -> float:
        n = len(self.driver_ids)
        mask = ~np.eye(n, dtype=bool)
        return float(np.mean(self.values[mask]))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["calib\\valid"] + self.driver_ids)
            for i, did in enumerate(self.driver_ids):
                w.writerow([did] + [format(v, ".17g") for v in self.values[i]])


def intra_driver_validate(policy, driver: DriverDataset, split_seed: int):
    """Spacing and speed RMSPE on the driver's held-out 30% periods."""
    _, validation = split_calibration_validation(driver, split_seed)
    return evaluate_policy(policy, validation)


def inter_driver_validate(policies: dict, drivers: list[DriverDataset], split_seed: int):
    """Full error grid; entry (i, j) is driver i's model evaluated on
    driver j (all periods for i != j, validation split on the diagonal).

    Returns (spacing ErrorMatrix, speed ErrorMatrix).
    """
    ids = [ds.driver_id for ds in drivers]
    missing = [d for d in ids if d not in policies]
    if missing:
        raise ValueError(f"no model supplied for drivers: {missing}")
    n = len(ids)
    spacing = np.zeros((n, n))
    speed = np.zeros((n, n))
    used = np.zeros((n, n), dtype=int)
    for i, calib_id in enumerate(ids):
        policy = policies[calib_id]
        for j, valid_ds in enumerate(drivers):
            if i == j:
                _, validation = split_calibration_validation(valid_ds, split_seed)
                eval_set = validation
            else:
                eval_set = valid_ds.periods
            sp, vp = evaluate_policy(policy, eval_set)
            spacing[i, j] = sp
            speed[i, j] = vp
            used[i, j] = len(eval_set)
    return (
        ErrorMatrix(ids, spacing, used),
        ErrorMatrix(ids, speed, used.copy()),
    )


@dataclass
class EvalReport:
    """Per (model, calib driver, valid driver) RMSPE rows plus aggregates."""

    rows: list[dict] = field(default_factory=list)

    def add(self, model, calib_driver, valid_driver, rmspe_spacing, rmspe_speed):
        self.rows.append(
            {
                "model": model,
                "calib_driver": calib_driver,
                "valid_driver": valid_driver,
                "rmspe_spacing": float(rmspe_spacing),
                "rmspe_speed": float(rmspe_speed),
            }
        )

    def aggregate(self) -> list[dict]:
        """Mean/std of intra- (calib == valid) and inter-driver errors per
        model, sorted by intra-driver spacing RMSPE ascending."""
        models = sorted({r["model"] for r in self.rows})
        out = []
        for m in models:
            intra = [r for r in self.rows if r["model"] == m and r["calib_driver"] == r["valid_driver"]]
            inter = [r for r in self.rows if r["model"] == m and r["calib_driver"] != r["valid_driver"]]
            entry = {"model": m}
            for name, rows in (("intra", intra), ("inter", inter)):
                for q in ("rmspe_spacing", "rmspe_speed"):
                    vals = np.array([r[q] for r in rows]) if rows else np.array([np.nan])
                    entry[f"{name}_{q}_mean"] = float(np.mean(vals))
                    entry[f"{name}_{q}_std"] = float(np.std(vals))
            out.append(entry)
        out.sort(key=lambda e: e["intra_rmspe_spacing_mean"])
        return out

    def save(self, csv_path, json_path=None) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "calib_driver", "valid_driver", "rmspe_spacing", "rmspe_speed"])
            for r in self.rows:
                w.writerow(
                    [r["model"], r["calib_driver"], r["valid_driver"],
                     format(r["rmspe_spacing"], ".17g"), format(r["rmspe_speed"], ".17g")]
                )
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump({"rows": self.rows, "aggregate": self.aggregate()}, fh, indent=2)


def compare_models(policies_by_model: dict, drivers: list[DriverDataset], split_seed: int) -> EvalReport:
    """Build the comparison report for {model name -> {driver -> policy}}."""
    report = EvalReport()
    for model_name, per_driver in sorted(policies_by_model.items()):
        for ds in drivers:
            if ds.driver_id not in per_driver:
                continue
            policy = per_driver[ds.driver_id]
            sp, vp = intra_driver_validate(policy, ds, split_seed)
            report.add(model_name, ds.driver_id, ds.driver_id, sp, vp)
            for other in drivers:
                if other.driver_id == ds.driver_id:
                    continue
                sp, vp = evaluate_policy(policy, other.periods)
                report.add(model_name, ds.driver_id, other.driver_id, sp, vp)
    return report
