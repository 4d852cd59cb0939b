"""Command-line entry point: data generation, extraction, training,
calibration, evaluation and simulation as batch subcommands.

Every stochastic command takes --seed and records it in a run manifest
next to its outputs, so any run can be reproduced from the manifest
alone. Single-file outputs are written to a temp name and renamed; for
multi-file datasets the manifest is written last and acts as the commit
point.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, data, ddpg, env, evaluate, ga, idm, loess, nna, rnn, synth
from .errors import CfrlError

log = logging.getLogger("cfrl")

MODEL_CHOICES = ["ddpgs", "ddpgv", "ddpgsrt", "ddpgvrt", "nna", "rnn", "loess"]


def _atomic_json(doc, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)


def _atomic_save(save_fn, path, *args, **kwargs) -> None:
    """Run a path-taking saver against a temp file, then rename."""
    tmp = f"{path}.tmp"
    save_fn(tmp, *args, **kwargs)
    os.replace(tmp, path)


def _write_manifest(out_dir, command, args_ns, outputs, t_start, inputs=()) -> None:
    doc = {
        "tool": "cfrl",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(vars(args_ns).items()) if k != "func"},
        "seed": getattr(args_ns, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.time() - t_start, 3),
    }
    _atomic_json(doc, os.path.join(out_dir, "run_manifest.json"))


def _default_data_dir(value):
    if value:
        return value
    env_dir = os.environ.get("CFRL_DATA_DIR")
    if env_dir:
        return env_dir
    raise SystemExit("no --data directory given and CFRL_DATA_DIR is not set")


# ---------------------------------------------------------------------------
# model file dispatch


def load_policy(path):
    """Load any model file and wrap it in the common policy interface.

    Returns (policy, metadata dict with kind/driver_id/split_seed).
    """
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    meta = {
        "kind": kind,
        "driver_id": doc.get("driver_id", ""),
        "split_seed": doc.get("split_seed"),
    }
    if kind == "ddpg":
        agent = ddpg.load_ddpg(path)
        meta["variant"] = _variant_name(agent.config)
        return agent.policy(), meta
    if kind == "idm":
        return idm.IDMPolicy(idm.load_idm_params(path)), meta
    if kind == "loess":
        return loess.LoessPolicy(loess.LoessModel.load(path)), meta
    if kind == "nna":
        return nna.NNaPolicy(nna.NNaModel.load(path)), meta
    if kind == "rnn":
        return rnn.RNNPolicy(rnn.RNNModel.load(path)), meta
    raise CfrlError(f"{path}: unknown model kind {kind!r}")


def _variant_name(config: ddpg.TrainConfig) -> str:
    for name, (mode, window) in ddpg.VARIANTS.items():
        if config.reward_mode == mode and config.rt_window == window:
            return name
    return "ddpg"


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    t0 = time.time()
    if args.drivers < 1:
        raise SystemExit("--drivers must be at least 1")
    if args.style == "mixed":
        n_agg = (args.drivers + 1) // 2
        drivers = synth.generate_population(
            n_agg, args.drivers - n_agg, args.periods, args.seed,
            noise_std=args.noise_std,
        )
    else:
        pop = []
        ss = np.random.SeedSequence(args.seed)
        for i, child in enumerate(ss.spawn(args.drivers), start=1):
            child_seed = int(child.generate_state(1)[0])
            pop.append(
                synth.generate_synthetic_driver(
                    args.style, args.periods, child_seed,
                    driver_id=f"d{i:02d}", noise_std=args.noise_std,
                )
            )
        drivers = pop
    manifest_path = data.save_dataset(drivers, args.out)
    data.load_dataset(args.out)  # schema check before declaring success
    log.info("wrote %d drivers x %d periods to %s", len(drivers), args.periods, args.out)
    _write_manifest(args.out, "gen-data", args, [manifest_path], t0)
    return 0


def cmd_extract(args) -> int:
    t0 = time.time()
    logrecs = data.load_raw_log_csv(args.raw)
    driver_id = os.path.splitext(os.path.basename(args.raw))[0]
    periods = data.extract_periods(logrecs, dt=args.dt, driver_id=driver_id)
    os.makedirs(args.out, exist_ok=True)
    if not periods:
        log.warning("no car-following periods satisfied the filter in %s", args.raw)
        _atomic_json({"version": 1, "drivers": []}, os.path.join(args.out, "manifest.json"))
        _write_manifest(args.out, "extract", args, [], t0, inputs=[args.raw])
        return 0
    ds = data.DriverDataset(driver_id=driver_id, periods=periods)
    manifest_path = data.save_dataset([ds], args.out)
    data.load_dataset(args.out)
    log.info("extracted %d periods from %s", len(periods), args.raw)
    _write_manifest(args.out, "extract", args, [manifest_path], t0, inputs=[args.raw])
    return 0


def cmd_cluster(args) -> int:
    t0 = time.time()
    data_dir = _default_data_dir(args.data)
    datasets = data.load_dataset(data_dir)
    labels = data.cluster_driving_styles(datasets, seed=args.seed)
    _atomic_json({"version": 1, "labels": labels}, args.out)
    with open(args.out) as fh:  # validate
        json.load(fh)
    log.info("clustered %d drivers", len(labels))
    _write_manifest(os.path.dirname(os.path.abspath(args.out)) or ".",
                    "cluster", args, [args.out], t0, inputs=[data_dir])
    return 0


def cmd_train(args) -> int:
    t0 = time.time()
    data_dir = _default_data_dir(args.data)
    driver = data.load_driver(data_dir, args.driver)
    split_seed = args.split_seed if args.split_seed is not None else args.seed
    calib, valid = data.split_calibration_validation(driver, split_seed)

    curves_path = None
    if args.model in ddpg.VARIANTS:
        overrides = {}
        if args.episodes is not None:
            overrides["episodes"] = args.episodes
        config = ddpg.variant_config(args.model, **overrides)
        agent, curves = ddpg.train(calib, valid, config, seed=args.seed)
        agent.driver_id = args.driver
        agent.split_seed = split_seed
        _atomic_save(lambda p: ddpg.save_ddpg(agent, p), args.out)
        curves_path = args.out + ".curves.csv"
        _atomic_save(curves.save_csv, curves_path)
    elif args.model == "nna":
        model, history = nna.fit_nna(calib, epochs=args.epochs or 200, seed=args.seed)
        _atomic_save(lambda p: model.save(p, driver_id=args.driver, split_seed=split_seed),
                     args.out)
    elif args.model == "rnn":
        model, history = rnn.rnn_train(calib, epochs=args.epochs or 40, seed=args.seed)
        _atomic_save(lambda p: model.save(p, driver_id=args.driver, split_seed=split_seed),
                     args.out)
    elif args.model == "loess":
        model = loess.fit_loess(calib)
        _atomic_save(lambda p: model.save(p, driver_id=args.driver, split_seed=split_seed),
                     args.out)
    else:  # pragma: no cover - argparse choices guard this
        raise SystemExit(f"unknown model {args.model!r}")

    load_policy(args.out)  # validate the written file
    outputs = [args.out] + ([curves_path] if curves_path else [])
    log.info("trained %s for driver %s -> %s", args.model, args.driver, args.out)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)) or ".",
                    "train", args, outputs, t0, inputs=[data_dir])
    return 0


def cmd_calibrate_idm(args) -> int:
    t0 = time.time()
    data_dir = _default_data_dir(args.data)
    driver = data.load_driver(data_dir, args.driver)
    split_seed = args.split_seed if args.split_seed is not None else args.seed
    calib, _ = data.split_calibration_validation(driver, split_seed)
    cfg = ga.GAConfig(
        population=args.population, max_generations=args.generations,
        runs=args.runs, seed=args.seed,
    )
    params, err, _ = ga.ga_calibrate_idm(calib, cfg)

    def _save(p):
        idm.save_idm_params(params, p)
        with open(p) as fh:
            doc = json.load(fh)
        doc.update({"driver_id": args.driver, "split_seed": split_seed,
                    "calibration_rmspe": err})
        with open(p, "w") as fh:
            json.dump(doc, fh, indent=2)

    _atomic_save(_save, args.out)
    load_policy(args.out)
    log.info("calibrated IDM for %s: spacing RMSPE %.4f", args.driver, err)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)) or ".",
                    "calibrate-idm", args, [args.out], t0, inputs=[data_dir])
    return 0


def cmd_evaluate(args) -> int:
    t0 = time.time()
    data_dir = _default_data_dir(args.data)
    datasets = data.load_dataset(data_dir)
    by_id = {ds.driver_id: ds for ds in datasets}
    os.makedirs(args.out, exist_ok=True)
    loaded = [(path,) + load_policy(path) for path in args.models]
    outputs = []

    if args.mode == "intra":
        rows = []
        for path, policy, meta in loaded:
            ds = by_id.get(meta["driver_id"])
            if ds is None:
                raise SystemExit(f"{path}: driver {meta['driver_id']!r} not in dataset")
            split_seed = meta["split_seed"]
            if split_seed is None:
                raise SystemExit(f"{path}: model file lacks split_seed for intra validation")
            sp, vp = evaluate.intra_driver_validate(policy, ds, split_seed)
            rows.append({"model": os.path.basename(path), "driver": meta["driver_id"],
                         "rmspe_spacing": sp, "rmspe_speed": vp})
        out_path = os.path.join(args.out, "intra_errors.json")
        _atomic_json({"version": 1, "rows": rows}, out_path)
        outputs.append(out_path)
    elif args.mode == "inter":
        policies = {}
        split_seed = None
        for path, policy, meta in loaded:
            policies[meta["driver_id"]] = policy
            split_seed = meta["split_seed"] if meta["split_seed"] is not None else split_seed
        if split_seed is None:
            split_seed = args.seed
        spacing, speed = evaluate.inter_driver_validate(policies, datasets, split_seed)
        for name, matrix in (("spacing", spacing), ("speed", speed)):
            out_path = os.path.join(args.out, f"inter_{name}.csv")
            _atomic_save(matrix.save_csv, out_path)
            outputs.append(out_path)
    else:  # compare
        grouped: dict[str, dict] = {}
        split_seed = None
        for path, policy, meta in loaded:
            model_name = meta.get("variant") or meta["kind"]
            grouped.setdefault(model_name, {})[meta["driver_id"]] = policy
            split_seed = meta["split_seed"] if meta["split_seed"] is not None else split_seed
        if split_seed is None:
            split_seed = args.seed
        report = evaluate.compare_models(grouped, datasets, split_seed)
        csv_path = os.path.join(args.out, "comparison.csv")
        json_path = os.path.join(args.out, "comparison.json")
        _atomic_save(lambda p: report.save(p, json_path + ".tmp2"), csv_path)
        os.replace(json_path + ".tmp2", json_path)
        outputs.extend([csv_path, json_path])

    for p in outputs:  # all declared outputs must exist and parse
        if not os.path.exists(p):
            raise SystemExit(f"declared output missing: {p}")
    _write_manifest(args.out, "evaluate", args, outputs, t0,
                    inputs=[data_dir] + list(args.models))
    return 0


def cmd_simulate(args) -> int:
    t0 = time.time()
    period = data.load_period_csv(args.period)
    if args.model == "replay":
        policy = env.ReplayPolicy(period.a_follow)
    else:
        policy, _ = load_policy(args.model)
    traj = env.run_episode(policy, period)

    def _save(path):
        import csv as _csv

        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["t", "v_follow", "v_lead", "gap", "action"])
            for i, s in enumerate(traj.states):
                action = traj.actions[i] if i < len(traj.actions) else ""
                w.writerow([
                    format(i * traj.dt, ".17g"), format(s.v_follow, ".17g"),
                    format(s.v_lead, ".17g"), format(s.gap, ".17g"),
                    format(action, ".17g") if action != "" else "",
                ])

    _atomic_save(_save, args.out)
    if traj.collided:
        log.warning("rollout collided after %d steps", len(traj.states) - 1)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)) or ".",
                    "simulate", args, [args.out], t0,
                    inputs=[args.model, args.period])
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfrl",
        description="Car-following model training, calibration and evaluation.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug diagnostics")
    parser.add_argument("--quiet", action="store_true", help="errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic driver population")
    p.add_argument("--style", choices=["aggressive", "conservative", "mixed"], required=True)
    p.add_argument("--drivers", type=int, required=True)
    p.add_argument("--periods", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("extract", help="cut a raw log into car-following periods")
    p.add_argument("--raw", required=True)
    p.add_argument("--dt", type=float, default=env.DEFAULT_DT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("cluster", help="label drivers aggressive/conservative")
    p.add_argument("--data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="train or fit a car-following model")
    p.add_argument("--model", choices=MODEL_CHOICES, required=True)
    p.add_argument("--driver", required=True)
    p.add_argument("--data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None, help="DDPG episodes")
    p.add_argument("--epochs", type=int, default=None, help="NNa/RNN epochs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate-idm", help="GA calibration of IDM parameters")
    p.add_argument("--driver", required=True)
    p.add_argument("--data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--population", type=int, default=300)
    p.add_argument("--generations", type=int, default=300)
    p.add_argument("--runs", type=int, default=12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate_idm)

    p = sub.add_parser("evaluate", help="intra/inter validation or model comparison")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--data")
    p.add_argument("--mode", choices=["intra", "inter", "compare"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="roll a model (or 'replay') on a period file")
    p.add_argument("--model", required=True)
    p.add_argument("--period", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (logging.ERROR if args.quiet else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CfrlError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s: %s", exc.__class__.__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
