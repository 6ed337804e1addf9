"""Command-line front end.

Subcommands tie the library into reproducible runs: world generation,
transform fitting, episodic evaluation, bound sweeps, closed-form
verification, and dataset diagnostics. Primary outputs (JSON/CSV) are
byte-identical across reruns with the same flags and inputs; volatile
details (timestamp, input digests) live in a manifest sidecar next to
each output.

Exit codes: 0 success, 2 input error, 3 parameter error, 4 sampling
infeasible, 5 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, streams
from .bounds import (
    margin_mean_given_pair,
    margin_mean_marginal,
    margin_variance_bound,
    mc_margin_moments,
    moment_bundle_from_class_stats,
    nway_accuracy_lower_bound,
    vc_gap,
)
from .linalg import covariance
from .datasets import (
    EmbeddingDataset,
    class_stats,
    diagnostics_report,
    load_embeddings,
    moment_summary,
    save_embeddings,
)
from .errors import (
    DegenerateWorldError,
    DimensionTooLargeError,
    InsufficientClassesError,
    InsufficientSamplesPerClassError,
    InvalidDeltaError,
    ParseError,
    ProtoshotError,
)
from .protonet import EvalConfig, evaluate
from .transforms import fit_est, fit_pca, load_transform, save_transform
from .world import (
    GaussianWorld,
    load_world,
    sample_classes,
    sample_points,
    save_world,
    world_moments,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARAMETER = 3
EXIT_SAMPLING = 4
EXIT_VERIFY = 5


class InputSpecError(ProtoshotError):
    """A command-line value (covariance spec, source file, ...) is invalid."""


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DimensionTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except (InsufficientClassesError, InsufficientSamplesPerClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except (
        InputSpecError,
        ParseError,
        DegenerateWorldError,
        InvalidDeltaError,
        ProtoshotError,
        FileNotFoundError,
        json.JSONDecodeError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoshot",
        description="Few-shot prototype classification, transforms, and accuracy bounds.",
    )
    parser.add_argument("--version", action="version", version=f"protoshot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="write a Gaussian world config, optionally with a sampled CSV")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma-spec", default="spherical:1", help="spherical:<v>, diag:<v1,..>, or file:<path>")
    p.add_argument("--sigma-c-spec", default="spherical:1", help="same forms as --sigma-spec")
    p.add_argument("--mu", default=None, help="comma-separated center, default zeros")
    p.add_argument("--classes", type=int, default=0, help="classes to sample into a CSV")
    p.add_argument("--points-per-class", type=int, default=0)
    p.add_argument("--out", default="world.json")
    p.add_argument("--csv-out", default=None, help="default: <out stem>.csv when sampling")
    p.set_defaults(handler=cmd_gen_world)

    p = sub.add_parser("fit", help="fit a linear transform on an embedding CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("est", "pca"), default="est")
    p.add_argument("--rho", type=float, default=0.001)
    p.add_argument("--dim", type=int, default=60)
    p.add_argument("--weighting", choices=("equal-class", "class-size"), default="equal-class")
    p.add_argument("--out", default="transform.json")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("eval", help="episodic evaluation of the prototype classifier")
    p.add_argument("--source", required=True, help="world config (.json) or embedding CSV")
    p.add_argument("--ways", type=int, default=5)
    p.add_argument("--shots", default="1,2,3,4,5,6,7,8,9,10", help="comma-separated shot sweep")
    p.add_argument("--queries", type=int, default=15)
    p.add_argument("--episodes", type=int, default=600)
    p.add_argument("--query-mode", choices=("per-class", "total"), default="per-class")
    p.add_argument("--transform", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="eval", help="prefix for .json/.csv reports")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bound", help="accuracy lower-bound sweep over shot counts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--world-config", default=None)
    src.add_argument("--moments-from", default=None, help="estimate moments from an embedding CSV")
    p.add_argument("--ways", type=int, default=2)
    p.add_argument("--shots", default="1,2,3,4,5,6,7,8,9,10")
    p.add_argument("--mc-episodes", type=int, default=0, help="add empirical accuracy columns")
    p.add_argument("--queries", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bound", help="prefix for .csv/.json sweep")
    p.set_defaults(handler=cmd_bound)

    p = sub.add_parser("verify", help="check closed-form margin moments against Monte Carlo")
    p.add_argument("--world-config", required=True)
    p.add_argument("--k", default="1,2,5,10", help="comma-separated shot counts")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", type=float, default=0.0,
                   help="test hook: scale closed forms by (1 + perturb) to force failures")
    p.add_argument("--out", default="verify.json")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("diagnose", help="variance ratio, intrinsic dimension, spectrum of a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--out", default=None, help="default: print to stdout")
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("vc", help="print the VC generalization gap")
    p.add_argument("--vc-dim", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.set_defaults(handler=cmd_vc)

    return parser


# --- shared plumbing ---------------------------------------------------------

def _parse_cov_spec(spec: str, dim: int) -> np.ndarray:
    kind, _, value = spec.partition(":")
    if kind == "spherical":
        v = float(value)
        if v < 0:
            raise InputSpecError(f"spherical variance must be nonnegative, got {v}")
        return v * np.eye(dim)
    if kind == "diag":
        entries = np.asarray([float(x) for x in value.split(",")], dtype=float)
        if entries.shape != (dim,):
            raise InputSpecError(f"diag spec has {entries.size} entries, expected {dim}")
        if np.any(entries < 0):
            raise InputSpecError("diag entries must be nonnegative")
        return np.diag(entries)
    if kind == "file":
        matrix = np.loadtxt(value, delimiter=",", ndmin=2)
        if matrix.shape != (dim, dim):
            raise InputSpecError(f"matrix in {value} has shape {matrix.shape}, expected ({dim}, {dim})")
        return matrix
    raise InputSpecError(f"unknown covariance spec {spec!r}")


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise InputSpecError(f"{flag} expects comma-separated integers, got {text!r}")
    if not values:
        raise InputSpecError(f"{flag} must list at least one value")
    return values


def _digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(base: str | Path, command: str, args: argparse.Namespace,
                    inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "parameters": {
            k: v for k, v in sorted(vars(args).items()) if k not in ("handler", "command")
        },
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "input_digests": {str(p): _digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(str(base) + ".manifest.json", manifest)


def _load_source(path: str):
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return load_world(path)
    if suffix == ".csv":
        return load_embeddings(path)
    raise InputSpecError(f"cannot tell world config from embeddings for {path!r}; use .json or .csv")


# --- subcommands --------------------------------------------------------------

def cmd_gen_world(args) -> int:
    if args.dim < 1:
        raise InputSpecError(f"--dim must be >= 1, got {args.dim}")
    center = (
        np.zeros(args.dim)
        if args.mu is None
        else np.asarray([float(x) for x in args.mu.split(",")], dtype=float)
    )
    if center.shape != (args.dim,):
        raise InputSpecError(f"--mu has {center.size} entries, expected {args.dim}")
    world = GaussianWorld(
        dim=args.dim,
        mean_center=center,
        mean_cov=_parse_cov_spec(args.sigma_spec, args.dim),
        class_cov=_parse_cov_spec(args.sigma_c_spec, args.dim),
    )
    save_world(world, args.out)
    outputs = [args.out]

    if args.classes > 0:
        if args.points_per_class < 1:
            raise InputSpecError("--points-per-class must be >= 1 when --classes is given")
        csv_out = args.csv_out or str(Path(args.out).with_suffix(".csv"))
        classes = sample_classes(world, args.classes, args.seed)
        labels: list[str] = []
        blocks = []
        for cls in classes:
            points = sample_points(cls, world, args.points_per_class, args.seed)
            labels.extend([f"c{cls.index:05d}"] * args.points_per_class)
            blocks.append(points)
        dataset = EmbeddingDataset(labels=labels, vectors=np.concatenate(blocks))
        save_embeddings(dataset, csv_out)
        outputs.append(csv_out)

    _write_manifest(args.out, "gen-world", args, inputs=[], outputs=outputs)
    return EXIT_OK


def cmd_fit(args) -> int:
    dataset = load_embeddings(args.input)
    if args.method == "est":
        summary = moment_summary(class_stats(dataset), weighting=args.weighting)
        transform = fit_est(summary, rho=args.rho, d=args.dim)
    else:
        transform = fit_pca(covariance(dataset.vectors), d=args.dim)
    if transform.negative_selected_count:
        print(
            f"note: {transform.negative_selected_count} of {transform.out_dim} selected "
            "eigenvalues are negative",
            file=sys.stderr,
        )
    save_transform(
        transform,
        args.out,
        source_dataset_digest=_digest(args.input),
        weighting=args.weighting if args.method == "est" else "class-size",
    )
    _write_manifest(args.out, "fit", args, inputs=[args.input], outputs=[args.out])
    return EXIT_OK


def cmd_eval(args) -> int:
    source = _load_source(args.source)
    transform = load_transform(args.transform) if args.transform else None
    config = EvalConfig(
        ways=args.ways,
        shots=_parse_int_list(args.shots, "--shots"),
        queries=args.queries,
        episodes=args.episodes,
        seed=args.seed,
        query_mode=args.query_mode,
    )
    report = evaluate(config, source, transform=transform, workers=max(args.workers, 1))
    payload = report.to_json_dict()
    payload["source"] = args.source
    json_path, csv_path = args.out + ".json", args.out + ".csv"
    _write_json(json_path, payload)
    Path(csv_path).write_text(report.to_csv(), encoding="utf-8")
    inputs = [args.source] + ([args.transform] if args.transform else [])
    _write_manifest(args.out, "eval", args, inputs=inputs, outputs=[json_path, csv_path])
    return EXIT_OK


def cmd_bound(args) -> int:
    shots = _parse_int_list(args.shots, "--shots")
    if args.world_config:
        source = load_world(args.world_config)
        moments = world_moments(source)
        source_path = args.world_config
    else:
        source = load_embeddings(args.moments_from)
        moments = moment_bundle_from_class_stats(class_stats(source))
        source_path = args.moments_from

    rows = []
    for k in shots:
        report = nway_accuracy_lower_bound(moments, k, args.ways)
        row = {
            "k": k,
            "bound_raw": report.raw,
            "bound_clamped": report.clamped,
            "mc_accuracy": None,
            "mc_ci95": None,
        }
        if args.mc_episodes > 0:
            config = EvalConfig(
                ways=args.ways, shots=(k,), queries=args.queries,
                episodes=args.mc_episodes, seed=args.seed,
            )
            result = evaluate(config, source).results[0]
            row["mc_accuracy"] = result.accuracy
            row["mc_ci95"] = result.ci95_halfwidth
        rows.append(row)

    lines = ["k,bound_raw,bound_clamped,mc_accuracy,mc_ci95"]
    for row in rows:
        mc_acc = "" if row["mc_accuracy"] is None else repr(row["mc_accuracy"])
        mc_ci = "" if row["mc_ci95"] is None else repr(row["mc_ci95"])
        lines.append(f"{row['k']},{row['bound_raw']!r},{row['bound_clamped']!r},{mc_acc},{mc_ci}")
    csv_path, json_path = args.out + ".csv", args.out + ".json"
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(json_path, {
        "source": source_path,
        "ways": args.ways,
        "moments": {
            "tr_signal": moments.tr_signal,
            "tr_noise_sq": moments.tr_noise_sq,
            "tr_signal_noise": moments.tr_signal_noise,
            "gap_fourth_moment": moments.gap_fourth_moment,
        },
        "rows": rows,
    })
    _write_manifest(args.out, "bound", args, inputs=[source_path], outputs=[csv_path, json_path])
    return EXIT_OK


def cmd_verify(args) -> int:
    world = load_world(args.world_config)
    shots = _parse_int_list(args.k, "--k")
    if args.samples < 1000:
        raise InputSpecError(f"--samples must be >= 1000, got {args.samples}")
    scale = 1.0 + args.perturb
    moments = world_moments(world)
    pair = sample_classes(world, 2, streams.child_seed(args.seed, 101))
    mean_a, mean_b = pair[0].mean, pair[1].mean

    per_k = []
    all_passed = True
    for k in shots:
        fixed = mc_margin_moments(
            world, k, args.samples, streams.child_seed(args.seed, 202, k),
            fixed_pair=(mean_a, mean_b),
        )
        marginal = mc_margin_moments(
            world, k, args.samples, streams.child_seed(args.seed, 303, k)
        )
        variance_cap = margin_variance_bound(k, world.class_cov, world.mean_cov) * scale
        checks = [
            _check(
                "margin_mean_fixed_pair",
                closed=margin_mean_given_pair(mean_a, mean_b) * scale,
                estimate=fixed.mean_conditional,
                se=fixed.se_mean_conditional,
            ),
            _check(
                "margin_mean_marginal",
                closed=margin_mean_marginal(moments.tr_signal) * scale,
                estimate=marginal.mean_marginal,
                se=marginal.se_mean_marginal,
            ),
            _check(
                "margin_variance_dominated",
                closed=variance_cap,
                estimate=marginal.var_conditional,
                se=marginal.se_var_conditional,
                one_sided=True,
            ),
        ]
        all_passed &= all(c["passed"] for c in checks)
        per_k.append({"k": k, "checks": checks})

    payload = {
        "world": args.world_config,
        "seed": args.seed,
        "samples": args.samples,
        "perturb": args.perturb,
        "tolerance": "4 standard errors",
        "per_k": per_k,
        "all_passed": bool(all_passed),
    }
    _write_json(args.out, payload)
    _write_manifest(args.out, "verify", args, inputs=[args.world_config], outputs=[args.out])
    if not all_passed:
        print("verification failed; see report for failing checks", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _check(name: str, closed: float, estimate: float, se: float, one_sided: bool = False) -> dict:
    if one_sided:
        passed = estimate <= closed + 4.0 * se
    else:
        passed = abs(estimate - closed) <= 4.0 * se
    return {
        "name": name,
        "closed_form": closed,
        "estimate": estimate,
        "se": se,
        "one_sided": one_sided,
        "passed": bool(passed),
    }


def cmd_diagnose(args) -> int:
    dataset = load_embeddings(args.input)
    payload = diagnostics_report(dataset, threshold=args.threshold)
    if args.out:
        _write_json(args.out, payload)
        _write_manifest(args.out, "diagnose", args, inputs=[args.input], outputs=[args.out])
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_vc(args) -> int:
    print(repr(vc_gap(args.vc_dim, args.k, args.delta)))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
