"""Command-line interface: simulate, estimate, observability, montecarlo.

Configuration files are INI-style (configparser). CSV outputs start with a
``# schema=1`` comment line; JSON reports carry a ``schema`` field. All
files are written atomically (temp file + rename).

Exit codes: 0 success, 2 bad arguments/config, 3 I/O error, 4 numerical
failure.
"""

import argparse
import configparser
import dataclasses
import csv
import io
import json
import os
import sys

import numpy as np

from . import imu, observability, so3, synth
from .errors import DualPreintError
from .factor import FullState, RelativeState
from .smoother import PriorSpec, WindowConfig, run_fixed_lag

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

CSV_HEADER = "# schema=1"


class ConfigError(Exception):
    pass


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _write_csv(path, columns, rows):
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf)
    w.writerow(columns)
    for row in rows:
        w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    _atomic_write(path, buf.getvalue())


def _read_csv(path):
    with open(path) as f:
        first = f.readline().strip()
        if first != CSV_HEADER:
            raise ConfigError(f"{path}: missing '{CSV_HEADER}' header line")
        reader = csv.reader(f)
        columns = next(reader)
        rows = [row for row in reader if row]
    return columns, rows


def _parse_profile(text):
    parts = text.split()
    kind = parts[0]
    if kind == "none":
        return ("none",)
    if kind in ("constant", "stochastic"):
        return (kind, float(parts[1]))
    if kind == "harmonic":
        return (kind, float(parts[1]), float(parts[2]))
    raise ConfigError(f"unknown leader profile {text!r}")


def load_config(path):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise OSError(f"cannot read config file {path}")
    try:
        tr = cp["trajectory"] if cp.has_section("trajectory") else {}
        cfg = synth.general_motion_config(
            profile=_parse_profile(tr.get("leader_profile", "constant 3.14159265")),
            duration=float(tr.get("duration", 10.0)),
            seed=int(tr.get("seed", 0)),
            substeps=int(tr.get("substeps", 1)))
        cam_sec = cp["camera"] if cp.has_section("camera") else {}
        cam = synth.default_camera(sigma_px=float(cam_sec.get("sigma_px", 1.0)))
        est = cp["estimator"] if cp.has_section("estimator") else {}
        window = WindowConfig(lag=int(est.get("lag", 2)),
                              max_iterations=int(est.get("iterations", 1)))
        ns = cp["noise"] if cp.has_section("noise") else {}
        noise = imu.ImuNoiseModel(
            sigma_gv=float(ns.get("sigma_gv", 1.528e-3)),
            sigma_av=float(ns.get("sigma_av", 1.244e-2)),
            sigma_gu=float(ns.get("sigma_gu", 1.867e-4)),
            sigma_au=float(ns.get("sigma_au", 7.841e-3)))
        mc = cp["montecarlo"] if cp.has_section("montecarlo") else {}
        runs = int(mc.get("runs", 20))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg, cam, window, noise, runs


def _rel_row(tick, t, rel):
    r = so3.log_map(rel.R)
    return [tick, t, *map(float, r), *map(float, rel.p), *map(float, rel.v)]


_REL_COLS = ["tick", "t", "rx", "ry", "rz", "px", "py", "pz",
             "vx", "vy", "vz"]


def cmd_simulate(args):
    cfg, cam, _, noise, _ = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    gt = synth.generate_trajectory(cfg)
    imu_F, imu_L = synth.synthesize_imu(gt, noise, cfg.seed + 1)
    markers = synth.default_markers()
    frames = synth.synthesize_features(gt, markers, cam, cam.sigma_px,
                                       cfg.seed + 2)
    os.makedirs(args.out, exist_ok=True)

    for name, stream in (("imu_follower.csv", imu_F), ("imu_leader.csv", imu_L)):
        rows = [[k, k * gt.dt, *map(float, s.gyro), *map(float, s.accel),
                 float(s.dt)] for k, s in enumerate(stream)]
        _write_csv(os.path.join(args.out, name),
                   ["tick", "t", "gx", "gy", "gz", "ax", "ay", "az", "dt"],
                   rows)

    feat_rows = []
    for frame, (tick, obs) in enumerate(zip(gt.camera_ticks(), frames)):
        for o in obs:
            feat_rows.append([frame, tick, float(o.timestamp), o.marker_id,
                              float(o.pixel[0]), float(o.pixel[1])])
    _write_csv(os.path.join(args.out, "features.csv"),
               ["frame", "tick", "t", "marker_id", "u", "v"], feat_rows)

    truth_rows = [_rel_row(k, float(gt.times[k]), gt.relative_state(k))
                  for k in gt.camera_ticks()]
    _write_csv(os.path.join(args.out, "truth.csv"), _REL_COLS, truth_rows)
    return EXIT_OK


def _load_imu(path):
    _, rows = _read_csv(path)
    return [imu.ImuSample(np.array([float(r[2]), float(r[3]), float(r[4])]),
                          np.array([float(r[5]), float(r[6]), float(r[7])]),
                          float(r[8])) for r in rows]


def _load_features(path, ticks):
    from .vision import FeatureObservation
    _, rows = _read_csv(path)
    frames = {k: [] for k in ticks}
    for r in rows:
        tick = int(r[1])
        if tick in frames:
            frames[tick].append(FeatureObservation(
                int(r[3]), np.array([float(r[4]), float(r[5])]), float(r[2])))
    return [frames[k] for k in ticks]


def _load_truth(path):
    _, rows = _read_csv(path)
    out = {}
    for r in rows:
        vals = list(map(float, r[2:]))
        out[int(r[0])] = RelativeState(so3.exp_map(np.array(vals[0:3])),
                                       np.array(vals[3:6]), np.array(vals[6:9]))
    return out


def cmd_estimate(args):
    cfg, cam, window, noise, _ = load_config(args.config)
    if args.iters is not None:
        window = dataclasses.replace(window, max_iterations=args.iters)
    gt = synth.generate_trajectory(cfg)   # grid/truth for keyframe layout
    imu_F = _load_imu(os.path.join(args.data_dir, "imu_follower.csv"))
    imu_L = _load_imu(os.path.join(args.data_dir, "imu_leader.csv"))
    ticks = gt.camera_ticks()
    frames = _load_features(os.path.join(args.data_dir, "features.csv"), ticks)
    truth = _load_truth(os.path.join(args.data_dir, "truth.csv"))

    t0 = truth[0]
    prior = PriorSpec.from_state(
        FullState(t0, imu.Bias.zero(), imu.Bias.zero()))
    markers = synth.default_markers()
    ticks, estimates, diags = run_fixed_lag(
        gt, imu_F, imu_L, frames, markers, cam, noise, window, prior)

    os.makedirs(args.out, exist_ok=True)
    rows = [_rel_row(k, float(gt.times[k]), est.rel)
            for k, est in zip(ticks, estimates)]
    _write_csv(os.path.join(args.out, "estimates.csv"), _REL_COLS, rows)

    errs_th = [synth.rotation_error_deg(e.rel.R, truth[k].R)
               for k, e in zip(ticks, estimates)]
    errs_p = [float(np.linalg.norm(e.rel.p - truth[k].p))
              for k, e in zip(ticks, estimates)]
    report = {"schema": 1, "keyframes": len(ticks),
              "rmse_theta_deg": float(np.sqrt(np.mean(np.square(errs_th)))),
              "rmse_p_cm": float(100 * np.sqrt(np.mean(np.square(errs_p)))),
              "mean_update_ms": float(np.mean([d.update_ms for d in diags]))}
    _atomic_write(os.path.join(args.out, "report.json"),
                  json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def cmd_observability(args):
    case = f"case{args.case}"
    report = observability.analyze_case(case, duration=args.duration,
                                        seed=args.seed)
    _atomic_write(args.out, report.to_json() + "\n")
    return EXIT_OK


def cmd_montecarlo(args):
    cfg, cam, window, noise, runs = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.iters is not None:
        window = dataclasses.replace(window, max_iterations=args.iters)
    if args.runs:
        runs = args.runs
    result = synth.run_monte_carlo(cfg, runs, seed=cfg.seed,
                                   window_cfg=window, noise=noise,
                                   sigma_px=cam.sigma_px, cam=cam)
    report = {"schema": 1, "runs": runs,
              "mean_rmse_theta_deg": result.mean_rmse_theta_deg,
              "mean_rmse_p_cm": result.mean_rmse_p_cm,
              "rmse_theta_deg": result.rmse_theta_deg.tolist(),
              "rmse_p_cm": result.rmse_p_cm.tolist(),
              "mean_update_ms": float(np.mean(result.update_ms))
              if len(result.update_ms) else None,
              "failures": result.failures}
    _atomic_write(args.out, json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="dualpreint",
        description="Relative-state estimation between two IMU platforms")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="run the fixed-lag smoother on a dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--iters", type=int, default=None)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("observability", help="bias-observability analysis")
    s.add_argument("--case", type=int, choices=(1, 2, 3, 4), required=True)
    s.add_argument("--duration", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_observability)

    s = sub.add_parser("montecarlo", help="Monte Carlo estimation study")
    s.add_argument("--config", required=True)
    s.add_argument("--runs", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--iters", type=int, default=None)
    s.add_argument("--out", required=True, help="output JSON file")
    s.set_defaults(func=cmd_montecarlo)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DualPreintError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
