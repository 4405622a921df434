"""Command-line pipeline: simulate -> counts -> certify -> rate -> extract
-> report, plus spacetime checks and the rate-vs-n curve.

Exit codes: 0 success, 2 usage, 3 malformed config or input format,
4 failed validation/check, 5 computation failure (non-convergence).
Errors print one machine-parseable line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import certify, extractor, presets, rates, report, source, spacetime, trials

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CHECK = 4
EXIT_COMPUTE = 5


class ConfigError(Exception):
    """Bad configuration or malformed input file."""


class CheckFailure(Exception):
    """A requested validation did not pass."""


def _fail(code: str, message: str, exit_code: int) -> int:
    sys.stderr.write(f'diqrng: error code={code} msg="{message}"\n')
    return exit_code


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {p}: {e}") from None


def _require_file(path):
    if not Path(path).exists():
        raise ConfigError(f"input file not found: {path}")


def _source_params(args) -> source.SourceParams:
    if getattr(args, "config", None):
        params = source.SourceParams.from_json_dict(_load_json(args.config))
    elif args.preset == "paper":
        params = presets.published_source_params()
    else:
        raise ConfigError("need --config or --preset paper")
    if getattr(args, "mu", None) is not None:
        params = params.replace(mu=args.mu)
    return params


def _load_counts(args) -> trials.CountsTable:
    table = trials.CountsTable.from_json_dict(_load_json(args.counts))
    if args.relabel_rows:
        table = table.relabel_rows_swapped()
    return table


# --- subcommands --------------------------------------------------------


def cmd_simulate(args) -> int:
    params = _source_params(args)
    chunks = source.iter_simulated_trials(params, args.n, rng_seed=args.seed)
    n = trials.write_dirt1(args.out, chunks)
    config = {"command": "simulate", "params": params.to_json_dict(),
              "n": args.n, "seed": args.seed}
    report.write_sidecar_meta(args.out, config, {"trials_written": n})
    print(f"wrote {n} trials to {args.out}")
    return EXIT_OK


def cmd_counts(args) -> int:
    _require_file(args.trials)
    trials.read_dirt1_header(args.trials)
    table = trials.CountsTable(np.zeros((4, 4), dtype=np.int64))
    for chunk in trials.iter_dirt1(args.trials):
        table = table + trials.aggregate_trials(chunk)
    if args.relabel_rows:
        table = table.relabel_rows_swapped()
    table.save(args.out)
    report.write_sidecar_meta(args.out, {"command": "counts",
                                         "trials": str(args.trials),
                                         "relabel_rows": args.relabel_rows})
    print(f"aggregated {table.total()} trials into {args.out}")
    return EXIT_OK


def cmd_certify(args) -> int:
    if not args.counts and not args.trials:
        raise ConfigError("certify needs --counts and/or --trials")
    payload: dict = {"nulls": {}}
    config = {"command": "certify", "block_size": args.block_size,
              "laplace": args.laplace, "relabel_rows": args.relabel_rows}

    if args.counts:
        table = _load_counts(args)
        zres = certify.ztest_no_signaling(table)
        payload["ztest_no_signaling"] = zres.as_dict()
        payload["ztest_pvalues"] = [float(p) for p in zres.p_values]
        gv = trials.game_value_from_counts(table)
        payload["jbar"] = gv.jbar
        payload["win_prob"] = gv.win_prob
        config["counts"] = str(args.counts)

    if args.trials:
        _require_file(args.trials)
        trials.read_dirt1_header(args.trials)
        nulls = ("NS", "LR") if args.null == "both" else (args.null,)
        for null in nulls:
            stream = trials.iter_dirt1(args.trials)
            blocks = certify.blocks_from_trials(stream, args.block_size)
            result, diags = certify.pbr_pvalue_blocks(
                blocks, null, laplace=args.laplace)
            payload["nulls"][null] = {
                "p_value_log10": result.log10_p,
                "polytope": null,
                "blocks": result.n_blocks,
                "trials": result.n_trials,
                "hit_zero_ratio": result.hit_zero_ratio,
                "pbr_schedule": "trivial-first, previous-block frequencies",
                "convergence_gaps": [d.gap_bits for d in diags],
            }
        config["trials"] = str(args.trials)

    payload["provenance"] = report.provenance(config)
    report.write_json(args.out, payload)
    print(f"certification report written to {args.out}")
    return EXIT_OK


def _rate_params(args) -> rates.RateParams:
    if getattr(args, "config", None):
        obj = _load_json(args.config)
        try:
            return rates.RateParams(**obj)
        except TypeError as e:
            raise ConfigError(f"bad rate config: {e}") from None
    if args.preset == "paper":
        return presets.published_rate_params(eps=args.eps, jbar=args.jbar)
    raise ConfigError("need --config or --preset paper")


def cmd_rate(args) -> int:
    params = _rate_params(args)
    result = rates.r_opt(params)
    payload = {
        "params": {
            "n": params.n, "q": params.q, "omega_win": params.omega_win,
            "eps_s": params.eps_s, "eps_ea": params.eps_ea,
            "delta_est": params.delta_est, "t_e": params.t_e,
        },
        "rate": result.rate,
        "p_t_star": None if math.isnan(result.p_t_star) else result.p_t_star,
        "hmin_bound": result.hmin_bound,
        "extractable_bits": result.extractable_bits,
        "soundness": result.soundness,
        "asymptotic_rate": rates.asymptotic_rate(params),
        "completeness_error": rates.completeness_error(params.n, params.delta_est),
    }
    payload["provenance"] = report.provenance(payload["params"])
    report.write_json(args.out, payload)
    print(f"extractable_bits={result.extractable_bits} rate={result.rate:.6e}")
    return EXIT_OK


def cmd_spacetime(args) -> int:
    if getattr(args, "config", None):
        cfg = spacetime.TimingConfig.from_json_dict(_load_json(args.config))
    elif args.preset == "paper":
        cfg = presets.published_timing(t_m1=args.t_m1)
    else:
        raise ConfigError("need --config or --preset paper")
    rep = spacetime.separation_report(cfg)
    rep["provenance"] = report.provenance(rep["config"])
    report.write_json(args.out, rep)
    for check in rep["checks"]:
        print(f"{check['name']}: slack {check['slack_ns']:+.3f} ns "
              f"{'PASS' if check['pass'] else 'FAIL'}")
    if not rep["all_pass"]:
        raise CheckFailure("a spacelike-separation inequality has negative slack")
    return EXIT_OK


def cmd_extract(args) -> int:
    _require_file(args.raw)
    if args.bits is not None:
        n_bits = args.bits
    else:
        sidecar = Path(str(args.raw) + ".meta.json")
        if not sidecar.exists():
            raise ConfigError("raw bit length unknown: pass --bits or provide "
                              f"{sidecar.name}")
        meta = _load_json(sidecar)
        if "n_bits" not in meta:
            raise ConfigError(f"{sidecar} lacks an n_bits field")
        n_bits = int(meta["n_bits"])

    if args.m is not None:
        plan = extractor.ExtractionPlan(
            n=n_bits, m=args.m, t_e=args.t_e,
            block_count=args.blocks or extractor.auto_block_count(n_bits, args.m),
        ).validate()
    elif args.hmin is not None:
        plan = extractor.plan_extraction(args.hmin, args.t_e, n_bits,
                                         block_count=args.blocks)
    else:
        raise ConfigError("extract needs --m or --hmin")

    raw = extractor.read_bits(args.raw, n_bits)
    if args.seed_file:
        _require_file(args.seed_file)
        seed = extractor.ToeplitzSeed.from_file(args.seed_file, plan.n, plan.m)
    else:
        # testing-only path; production seeds must come from a file
        seed = extractor.insecure_test_seed(plan.n, plan.m, args.insecure_seed)
    out_bits = extractor.extract_blocked_fft(raw, seed, plan.block_count)
    extractor.write_bits(args.out, out_bits)

    config = {"command": "extract", "n": plan.n, "m": plan.m, "t_e": plan.t_e,
              "block_count": plan.block_count,
              "seed_file": str(args.seed_file) if args.seed_file else None}
    payload = {
        "n": plan.n, "m": plan.m, "t_e": plan.t_e,
        "block_count": plan.block_count,
        "hash_failure": plan.hash_failure,
        "ones_fraction": float(out_bits.mean()) if len(out_bits) else 0.0,
        "provenance": report.provenance(config),
    }
    report.write_json(str(args.out) + ".report.json", payload)
    print(f"extracted {plan.m} bits to {args.out} "
          f"(blocks={plan.block_count}, hash failure 2^-{plan.t_e})")
    return EXIT_OK


def cmd_rate_curve(args) -> int:
    params = _rate_params(args)
    n_list = np.unique(np.logspace(math.log10(args.n_min), math.log10(args.n_max),
                                   args.points).astype(np.int64))
    points = rates.rate_curve(params, [int(n) for n in n_list])
    report.write_rate_curve_csv(points, args.out_csv)
    report.write_sidecar_meta(args.out_csv, {
        "command": "rate-curve", "omega_win": params.omega_win, "q": params.q,
        "t_e": params.t_e, "n_min": args.n_min, "n_max": args.n_max,
        "points": args.points})
    if args.fig:
        report.plot_rate_curve(points, rates.asymptotic_rate(params), args.fig)
    print(f"rate curve with {len(points)} points written to {args.out_csv}")
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.counts:
        table = _load_counts(args)
    elif args.preset == "paper":
        table = presets.published_counts(relabel_rows=args.relabel_rows)
    else:
        raise ConfigError("report needs --counts or --preset paper")

    rate_params = presets.published_rate_params(eps=args.eps) \
        if args.preset == "paper" else None

    summary: dict = {}
    config = {"command": "report", "preset": args.preset,
              "relabel_rows": args.relabel_rows, "seed": args.seed}

    # game value and abort decision
    gv = trials.game_value_from_counts(table)
    summary["game_value"] = {"jbar": gv.jbar, "win_prob": gv.win_prob,
                             "n_trials": gv.n_trials}
    wins = int(sum(table.counts[i, cols].sum()
                   for i, cols in enumerate(((0, 3), (0, 3), (0, 3), (1, 2)))))
    if rate_params is not None:
        cfg = trials.SpotCheckConfig(q=rate_params.q, omega_exp=rate_params.omega_win,
                                     delta_est=rate_params.delta_est)
        summary["abort"] = {
            "aborted": trials.abort_decision(wins, table.total(), cfg),
            "threshold": cfg.abort_threshold,
            "score_fraction": wins / table.total(),
        }

    # no-signaling Z-tests
    zres = certify.ztest_no_signaling(table)
    summary["ztest_no_signaling"] = zres.as_dict()

    # rate result under both published epsilon choices
    if rate_params is not None:
        rate_section = {}
        for eps in presets.PUBLISHED_EPS_CHOICES:
            params = presets.published_rate_params(eps=eps)
            res = rates.r_opt(params)
            rate_section[f"eps={eps:g}"] = {
                "rate": res.rate,
                "extractable_bits": res.extractable_bits,
                "soundness": res.soundness,
            }
        best = min(
            presets.PUBLISHED_EPS_CHOICES,
            key=lambda e: abs(rates.r_opt(presets.published_rate_params(eps=e))
                              .extractable_bits - presets.PUBLISHED_OUTPUT_BITS))
        rate_section["matches_published_bits"] = f"eps={best:g}"
        summary["rate"] = rate_section
        summary["completeness_error"] = rates.completeness_error(
            rate_params.n, rate_params.delta_est)

        # rate curve artifacts
        n_grid = np.unique(np.logspace(8, 13, 41).astype(np.int64)).tolist()
        if rate_params.n not in n_grid:
            n_grid = sorted(n_grid + [rate_params.n])
        points = rates.rate_curve(rate_params, n_grid)
        report.write_rate_curve_csv(points, out_dir / "rate_curve.csv")
        report.plot_rate_curve(points, rates.asymptotic_rate(rate_params),
                               out_dir / "rate_curve.png")
        at_n = next(p for p in points if p.n == rate_params.n)
        summary["asymptote_fraction"] = at_n.total_bits / (
            rate_params.n * rates.asymptotic_rate(rate_params))

    # source model sweep
    if args.preset == "paper":
        src = presets.published_source_params()
        predicted = source.sweep_mu(src, presets.MU_VALUES)
        report.write_mu_sweep_csv(presets.MU_VALUES, predicted,
                                  presets.MU_VIOLATIONS, out_dir / "mu_sweep.csv")
        report.plot_mu_sweep(presets.MU_VALUES, predicted,
                             presets.MU_VIOLATIONS, out_dir / "mu_sweep.png")
        mu_star, jbar_star = source.optimize_mu(src, presets.MU_VALUES)
        summary["source_model"] = {
            "mu_star": mu_star, "jbar_at_mu_star": jbar_star,
            "jbar_at_operating_mu": source.model_jbar(src),
        }

    # spacetime
    timing = presets.published_timing() if args.preset == "paper" else None
    if timing is not None:
        st = spacetime.separation_report(timing)
        summary["spacetime"] = {
            "slacks_ns": {c["name"]: c["slack_ns"] for c in st["checks"]},
            "all_pass": st["all_pass"],
        }

    # extraction plan
    if args.preset == "paper":
        plan = presets.published_extraction_plan()
        summary["extraction_plan"] = {
            "n": plan.n, "m": plan.m, "t_e": plan.t_e,
            "block_count": plan.block_count, "hash_failure": plan.hash_failure,
        }

    # optional PBR certification on a trial stream
    if args.trials:
        _require_file(args.trials)
        trials.read_dirt1_header(args.trials)
        pbr_section = {}
        for null in ("LR", "NS"):
            stream = trials.iter_dirt1(args.trials)
            blocks = certify.blocks_from_trials(stream, args.block_size)
            result, _ = certify.pbr_pvalue_blocks(blocks, null)
            pbr_section[null] = {"p_value_log10": result.log10_p,
                                 "blocks": result.n_blocks}
        summary["pbr"] = pbr_section

    summary["provenance"] = report.provenance(config)
    report.write_json(out_dir / "report.json", summary)
    print(f"report written to {out_dir / 'report.json'}")

    if timing is not None and not summary["spacetime"]["all_pass"]:
        raise CheckFailure("spacetime separation check failed")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------


def _add_preset(p, with_eps=False):
    p.add_argument("--preset", choices=["paper"],
                   help="load the published experiment parameter values")
    p.add_argument("--config", help="JSON parameter file")
    if with_eps:
        p.add_argument("--eps", type=float, default=presets.PUBLISHED_EPS_CHOICES[0],
                       help="smoothing/accumulation error for the preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diqrng",
        description="device-independent randomness certification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a trial stream to a DIRT1 file")
    _add_preset(p)
    p.add_argument("--n", type=int, required=True, help="number of trials")
    p.add_argument("--mu", type=float, help="override the mean photon number")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("counts", help="aggregate a DIRT1 file into a counts table")
    p.add_argument("--trials", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--relabel-rows", action="store_true",
                   help="exchange the x0y1 and x1y0 rows")
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("certify", help="no-signaling and local-realism tests")
    p.add_argument("--counts")
    p.add_argument("--trials")
    p.add_argument("--relabel-rows", action="store_true")
    p.add_argument("--null", choices=["NS", "LR", "both"], default="both")
    p.add_argument("--block-size", type=int, default=certify.DEFAULT_BLOCK_TRIALS)
    p.add_argument("--laplace", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("rate", help="certified randomness rate")
    _add_preset(p, with_eps=True)
    p.add_argument("--jbar", type=float, default=presets.PUBLISHED_JBAR)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("spacetime", help="spacelike-separation slack report")
    _add_preset(p)
    p.add_argument("--t-m1", type=float, default=55.0,
                   help="detector response on Alice's side (50 or 55 ns)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spacetime)

    p = sub.add_parser("extract", help="Toeplitz-hash a raw bit file")
    p.add_argument("--raw", required=True)
    p.add_argument("--bits", type=int, help="raw length in bits")
    p.add_argument("--m", type=int, help="output length in bits")
    p.add_argument("--hmin", type=float, help="certified min-entropy bound")
    p.add_argument("--t-e", type=int, default=100)
    p.add_argument("--blocks", type=int, help="FFT block count")
    p.add_argument("--seed-file", help="packed seed bits of length n+m-1")
    p.add_argument("--insecure-seed", type=int, default=0,
                   help="TESTING ONLY: derive the seed from a PRNG")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("rate-curve", help="certified bits versus trial count")
    _add_preset(p, with_eps=True)
    p.add_argument("--jbar", type=float, default=presets.PUBLISHED_JBAR)
    p.add_argument("--n-min", type=float, default=1e8)
    p.add_argument("--n-max", type=float, default=1e13)
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--fig")
    p.set_defaults(func=cmd_rate_curve)

    p = sub.add_parser("report", help="composed summary with figures")
    _add_preset(p, with_eps=True)
    p.add_argument("--counts")
    p.add_argument("--trials")
    p.add_argument("--relabel-rows", action="store_true")
    p.add_argument("--block-size", type=int, default=certify.DEFAULT_BLOCK_TRIALS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        return _fail("config-invalid", str(e), EXIT_CONFIG)
    except CheckFailure as e:
        return _fail("check-failed", str(e), EXIT_CHECK)
    except certify.ProjectionError as e:
        return _fail("non-convergence", str(e), EXIT_COMPUTE)
    except (ValueError, extractor.ExtractionSizingError) as e:
        return _fail("validation-failed", str(e), EXIT_CHECK)


if __name__ == "__main__":
    sys.exit(main())
