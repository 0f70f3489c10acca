"""Command-line surface: audits, privacy calibration, experiment runs.

Subcommands
-----------
channel-audit    round-trip the randomized quantizer and report error-law
                 statistics (KS, variance ratio, acceptance rate, mean H)
privacy-budget   forward (noise -> budget) or inverse (budget -> noise)
                 accounting as JSON
fl-run           run a configured experiment; per-seed CSVs plus a summary
bit-audit        replay one repetition's encoding and dump per-record bit
                 lengths as CSV
bound-check      run the convergence experiment and compare measured gaps
                 against the closed-form bound

Every run with an output directory writes a manifest (subcommand, config
path and hash, seeds, tool version) sufficient to reproduce it; outputs
are byte-identical across reruns of the same manifest.  Wall-clock timing
is deliberately kept out of the artifacts and printed to stderr.

Exit codes: 0 ok; 2 usage or config error; 3 infeasible target or failed
diagnostic.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from . import __version__, analysis, codec, flsim, privacy
from .flsim import ConfigError, FLConfig
from .lattice import LatticeSpec
from .noise import make_noise_family
from .quantizers import lrsuq_encode_batch
from .randomness import derive_keys

USAGE_EXIT = 2
INFEASIBLE_EXIT = 3


def _json_dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_manifest(out_dir: Path, subcommand: str, args_dict: dict, seeds: list,
                    config_path: str | None = None) -> None:
    config_hash = None
    if config_path is not None:
        config_hash = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    else:
        canon = json.dumps(args_dict, sort_keys=True).encode()
        config_hash = hashlib.sha256(canon).hexdigest()
    manifest = {
        "subcommand": subcommand,
        "config_path": config_path,
        "config_sha256": config_hash,
        "seeds": seeds,
        "output_dir": str(out_dir),
        "tool_version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(_json_dumps(manifest), encoding="utf-8")


def _emit(report: dict, out_dir: str | None, filename: str, subcommand: str,
          args_dict: dict, seeds: list, config_path: str | None = None) -> None:
    text = _json_dumps(report)
    sys.stdout.write(text)
    if out_dir:
        path = Path(out_dir)
        _write_manifest(path, subcommand, args_dict, seeds, config_path)
        (path / filename).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# channel-audit


def _family_from_args(args):
    if args.family == "gaussian":
        if args.sigma is None:
            raise ConfigError("--sigma is required for the gaussian family")
        return make_noise_family("gaussian", dim=args.dim, sigma=args.sigma)
    if args.scale_b is None:
        raise ConfigError("--scale-b is required for the laplace family")
    if args.dim != 1:
        raise ConfigError("laplace channel is one-dimensional (--dim 1)")
    return make_noise_family("laplace", dim=1, b=args.scale_b)


def cmd_channel_audit(args) -> int:
    if args.samples < 10**4:
        raise ConfigError("--samples must be at least 10000 for a meaningful audit")
    fam = _family_from_args(args)
    spec = LatticeSpec(dim=args.dim, alpha=args.alpha)

    keys = derive_keys(args.seed, [(0, i, 0) for i in range(args.samples)])
    rng = np.random.default_rng(args.seed)
    scale = args.clip / math.sqrt(args.dim)
    x = rng.uniform(-scale, scale, size=(args.samples, args.dim))
    res = lrsuq_encode_batch(x, fam, spec, keys)
    err = res.y - x

    dist = fam.coord_dist()
    ks = [sstats.kstest(err[:, j], dist.cdf) for j in range(args.dim)]
    var_total = float(np.sum(err * err, axis=1).mean())
    report = {
        "family": fam.kind,
        "dim": args.dim,
        "noise_param": fam.sigma if fam.kind == "gaussian" else fam.b,
        "alpha": args.alpha,
        "samples": args.samples,
        "seed": args.seed,
        "ks_statistic": [float(k.statistic) for k in ks],
        "ks_pvalue": [float(k.pvalue) for k in ks],
        "variance_ratio": var_total / fam.variance(),
        "acceptance_rate": args.samples / float(res.h.sum()),
        "acceptance_expected": fam.acceptance_prob(),
        "mean_h": float(res.h.mean()),
    }
    flags = {"family": args.family, "dim": args.dim, "sigma": args.sigma,
             "scale_b": args.scale_b, "alpha": args.alpha, "samples": args.samples,
             "seed": args.seed, "clip": args.clip}
    _emit(report, args.out, "channel_audit.json", "channel-audit", flags, [args.seed])
    return 0


# ---------------------------------------------------------------------------
# privacy-budget


def cmd_privacy_budget(args) -> int:
    p = privacy.subsampling_prob(args.dataset_size, args.local_steps)
    if args.epsilon_tilde is not None:
        # forward mode: noise level -> round budget
        eps = privacy.amplified_epsilon(args.epsilon_tilde, p)
        if args.family == "gaussian":
            if args.sigma is None:
                raise ConfigError("forward gaussian accounting requires --sigma")
            delta = privacy.gaussian_delta(
                args.epsilon_tilde, args.local_steps, args.clip, args.clients,
                args.sigma, args.dataset_size,
            )
            noise = args.sigma
        else:
            if args.scale_b is None:
                raise ConfigError("forward laplace accounting requires --scale-b")
            needed = privacy.laplace_min_budget(args.local_steps, args.clip, args.scale_b)
            if args.epsilon_tilde < needed:
                sys.stderr.write(
                    f"infeasible: base budget {args.epsilon_tilde} below the "
                    f"pure-DP requirement {needed}\n"
                )
                return INFEASIBLE_EXIT
            delta = 0.0
            noise = args.scale_b
        report = {"mode": "forward", "epsilon": eps, "delta": delta,
                  "sigma_or_b": noise, "epsilon_tilde": args.epsilon_tilde, "p": p}
    else:
        if args.epsilon is None:
            raise ConfigError("give either --epsilon-tilde (forward) or --epsilon (inverse)")
        try:
            cal = privacy.calibrate_noise(
                args.epsilon, args.delta, args.local_steps, args.clip,
                args.clients, args.dataset_size, args.family,
            )
        except privacy.CalibrationError as exc:
            sys.stderr.write(f"infeasible: {exc}\n")
            return INFEASIBLE_EXIT
        noise = cal["sigma"] if args.family == "gaussian" else cal["b"]
        report = {"mode": "inverse", "epsilon": args.epsilon, "delta": cal["delta"],
                  "sigma_or_b": noise, "epsilon_tilde": cal["epsilon_tilde"], "p": cal["p"]}

    flags = {k: getattr(args, k) for k in
             ("family", "epsilon", "epsilon_tilde", "delta", "local_steps",
              "clip", "clients", "dataset_size", "sigma", "scale_b")}
    _emit(report, args.out, "privacy_budget.json", "privacy-budget", flags, [])
    return 0


# ---------------------------------------------------------------------------
# fl-run / bit-audit / bound-check


def cmd_fl_run(args) -> int:
    config = FLConfig.from_file(args.config)
    base = config.seed if args.seed is None else args.seed
    started = time.monotonic()
    result = flsim.run_experiment(config, args.reps, base_seed=base)
    elapsed = time.monotonic() - started

    out_dir = Path(args.out)
    _write_manifest(out_dir, "fl-run", {"reps": args.reps, "seed": base},
                    result.seeds, config_path=args.config)
    for seed, records in zip(result.seeds, result.records):
        (out_dir / f"run_seed{seed}.csv").write_text(
            flsim.records_to_csv(records), encoding="utf-8"
        )
    (out_dir / "summary.json").write_text(_json_dumps(result.summary()), encoding="utf-8")
    sys.stderr.write(f"fl-run finished in {elapsed:.1f}s wall time\n")
    sys.stdout.write(_json_dumps(result.summary()))
    return 0


def cmd_bit_audit(args) -> int:
    config = FLConfig.from_file(args.config)
    if config.mechanism.kind not in ("cepam_gaussian", "cepam_laplace"):
        raise ConfigError("bit audits need an entropy-coded mechanism (cepam_*)")
    base = config.seed if args.seed is None else args.seed
    rep_seed = base + args.rep
    task = flsim.build_task(config)
    sim = flsim.Simulator(config, task, rep_seed=rep_seed)
    _, details = sim.run()

    lines = ["round,client,subvector,bits"]
    total = 0
    for det in details:
        for k, per_client in enumerate(det.record_bits):
            for j, bits in enumerate(per_client):
                lines.append(f"{det.t + config.tau},{k},{j},{bits}")
                total += bits
    csv_text = "\n".join(lines) + "\n"
    sys.stdout.write(f"total_bits,{total}\n")
    if args.out:
        out_dir = Path(args.out)
        _write_manifest(out_dir, "bit-audit", {"rep": args.rep, "seed": base},
                        [rep_seed], config_path=args.config)
        (out_dir / f"bit_audit_seed{rep_seed}.csv").write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_bound_check(args) -> int:
    config = FLConfig.from_file(args.config)
    try:
        report = analysis.bound_report(config, repetitions=args.reps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    flags = {"reps": args.reps}
    _emit(report, args.out, "bound_check.json", "bound-check", flags,
          list(range(config.seed, config.seed + args.reps)), config_path=args.config)
    return 0 if report["satisfied"] else INFEASIBLE_EXIT


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cepam",
        description="Randomized lattice quantization with exact privacy noise: "
                    "audits, accounting, and FL experiments.",
    )
    parser.add_argument("--version", action="version", version=f"cepam {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    ca = sub.add_parser("channel-audit", help="round-trip error-law audit")
    ca.add_argument("--family", choices=("gaussian", "laplace"), required=True)
    ca.add_argument("--dim", type=int, default=1)
    ca.add_argument("--sigma", type=float)
    ca.add_argument("--scale-b", type=float)
    ca.add_argument("--alpha", type=float, default=1e-3)
    ca.add_argument("--clip", type=float, default=1.0, help="input domain radius")
    ca.add_argument("--samples", type=int, default=10**5)
    ca.add_argument("--seed", type=int, default=0)
    ca.add_argument("--out", help="output directory (adds manifest + report file)")
    ca.set_defaults(func=cmd_channel_audit)

    pb = sub.add_parser("privacy-budget", help="per-round DP accounting")
    pb.add_argument("--family", choices=("gaussian", "laplace"), required=True)
    pb.add_argument("--epsilon-tilde", type=float, help="forward mode: base budget")
    pb.add_argument("--epsilon", type=float, help="inverse mode: target budget")
    pb.add_argument("--delta", type=float, default=0.0)
    pb.add_argument("--local-steps", type=int, required=True, help="tau' = tau - 1")
    pb.add_argument("--clip", type=float, required=True, help="clip radius gamma")
    pb.add_argument("--clients", type=int, default=1)
    pb.add_argument("--dataset-size", type=int, required=True)
    pb.add_argument("--sigma", type=float)
    pb.add_argument("--scale-b", type=float)
    pb.add_argument("--out")
    pb.set_defaults(func=cmd_privacy_budget)

    fr = sub.add_parser("fl-run", help="run a configured FL experiment")
    fr.add_argument("--config", required=True)
    fr.add_argument("--reps", type=int, default=1)
    fr.add_argument("--seed", type=int, help="override the config base seed")
    fr.add_argument("--out", required=True)
    fr.set_defaults(func=cmd_fl_run)

    ba = sub.add_parser("bit-audit", help="per-record bit lengths for one repetition")
    ba.add_argument("--config", required=True)
    ba.add_argument("--rep", type=int, default=0)
    ba.add_argument("--seed", type=int, help="override the config base seed")
    ba.add_argument("--out")
    ba.set_defaults(func=cmd_bit_audit)

    bc = sub.add_parser("bound-check", help="measured gap vs convergence bound")
    bc.add_argument("--config", required=True)
    bc.add_argument("--reps", type=int, default=10)
    bc.add_argument("--out")
    bc.set_defaults(func=cmd_bound_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, codec.CodecError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_EXIT
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
