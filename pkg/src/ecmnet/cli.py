"""Command-line interface.

Subcommands:
  simulate   synthesize drive cycles through the reference cell and export them
  train      fit the state estimator (and circuit parameters) to traces
  eval       score a trained checkpoint on the validation trace
  compare    train the integration-embedded and standard losses side by side
  gradcheck  verify tape gradients against finite differences

Every output file carries a `# config_hash=` provenance comment; wall
clocks appear only in the run.log sidecar, so data files and figures
are bit-reproducible across runs.

Exit codes: 0 ok, 1 configuration, 2 data, 3 numerics, 4 filesystem.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys

from . import config as cfgmod
from . import evaluation, figures, losses, profiles, rng, simulate, training
from .errors import ConfigError, DataError, NumericsError

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="ecmnet", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, epochs=True):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed; rederives all component seeds")
        if epochs:
            p.add_argument("--epochs", type=int, default=None,
                           help="override training.epochs")

    common(sub.add_parser("simulate", help="synthesize and export drive cycles"),
           epochs=False)
    common(sub.add_parser("train", help="train the state estimator"))
    p_eval = sub.add_parser("eval", help="score a checkpoint on validation data")
    common(p_eval, epochs=False)
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint JSON to load")
    common(sub.add_parser("compare", help="train both loss formulations"))
    p_grad = sub.add_parser("gradcheck", help="verify gradients vs finite differences")
    p_grad.add_argument("--seed", type=int, default=20240)
    return parser


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _logger(out_dir):
    """run.log sidecar writer — the only place timestamps are allowed."""
    fh = open(os.path.join(out_dir, "run.log"), "a", encoding="utf-8")

    def log(msg):
        stamp = datetime.datetime.now().isoformat(timespec="seconds")
        fh.write(f"[{stamp}] {msg}\n")
        fh.flush()

    return fh, log


# -- data assembly -----------------------------------------------------------

def _synth_profile(cfg, seed):
    d = cfg["data"]
    return profiles.synth_dynamic_profile(
        duration_s=float(d["duration_s"]),
        dt=float(d["dt"]),
        seed=seed,
        mean_segment_s=float(d["mean_segment_s"]),
        max_c_rate=float(d["max_c_rate"]),
        capacity_ah=float(cfg["cell"]["q"]),
        soc_drop=float(d["soc_drop"]),
    )


def _synth_trace(cfg, seed, noise_index):
    params = cfgmod.cell_params(cfg)
    coeffs = cfgmod.ocv_coeffs(cfg)
    prof = _synth_profile(cfg, seed)
    trace = simulate.simulate(
        params, coeffs, prof, z0=float(cfg["cell"]["soc0"]), vc0=float(cfg["cell"]["vc0"])
    )
    sigma = float(cfg["data"]["noise_sigma_v"])
    if sigma > 0.0:
        noise_seed = rng.derive(int(cfg["data"]["noise_seed"]), noise_index)
        trace = simulate.add_gaussian_noise(trace, sigma, noise_seed)
    return trace


def _train_traces(cfg):
    files = cfg["data"]["train_files"]
    if files is not None:
        return [simulate.load_trace_csv(f) for f in files]
    return [
        _synth_trace(cfg, seed, 100 + k)
        for k, seed in enumerate(cfg["data"]["train_seeds"])
    ]


def _valid_trace(cfg):
    vf = cfg["data"]["valid_file"]
    if vf is not None:
        return simulate.load_trace_csv(vf)
    return _synth_trace(cfg, int(cfg["data"]["valid_seed"]), 200)


def _train_setup(cfg):
    params = cfgmod.cell_params(cfg)
    coeffs = cfgmod.ocv_coeffs(cfg)
    system = losses.ecm_system(params.q, coeffs)
    loss_cfg = cfgmod.loss_config(cfg)
    tcfg = cfgmod.train_config(cfg)
    traces = _train_traces(cfg)
    dataset = training.build_windows(
        traces, tcfg.window, loss_cfg.rollout, cfgmod.norm_spec(cfg)
    )
    return params, coeffs, system, loss_cfg, tcfg, dataset


def _train_arm(cfg, out_dir, *, kind, log):
    """Train one loss formulation and write its report files."""
    params, coeffs, system, loss_cfg, tcfg, dataset = _train_setup(cfg)
    log(f"loss={kind} windows={len(dataset)} minibatch={tcfg.minibatch} "
        f"epochs={tcfg.epochs}")
    result = training.train(
        dataset, system, loss_cfg, tcfg,
        loss_kind=kind, out_dir=out_dir, config_hash=cfg.hash, log=log,
    )
    comments = {"config_hash": cfg.hash, "loss_kind": kind}
    training.write_history(os.path.join(out_dir, "history.csv"), result.history, comments)
    training.write_loss_terms(
        os.path.join(out_dir, "loss_terms.csv"), result.history, comments
    )
    r0, r1, c = training.raw_circuit_values(result.lam)
    rows = evaluation.ident_report(params, r0, r1, c)
    evaluation.export_ident_csv(os.path.join(out_dir, "ident_report.csv"), rows, comments)
    figures.save_history_figure(
        os.path.join(out_dir, "training_history.png"), result.history, params
    )
    if result.history:
        final = result.history[-1]
        log(f"final loss={final.loss:.6e}")
    for name, t, i, pct in rows:
        log(f"identified {name}: {i:.6g} (true {t:.6g}, error {pct:.3f}%)")
    return result, rows


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = cfgmod.load_config(args.config, seed=args.seed)
    out = _ensure_out(args.out)
    fh, log = _logger(out)
    with fh:
        log(f"simulate config_hash={cfg.hash}")
        named = {}
        for k, seed in enumerate(cfg["data"]["train_seeds"]):
            name = f"train_{_LETTERS[k]}" if k < len(_LETTERS) else f"train_{k:03d}"
            named[name] = (_synth_trace(cfg, seed, 100 + k), seed, False)
        named["valid"] = (_valid_trace(cfg), cfg["data"]["valid_seed"], True)
        for name, (trace, seed, hidden) in named.items():
            path = os.path.join(out, f"{name}.csv")
            comments = {"config_hash": cfg.hash, "role": name, "profile_seed": seed}
            simulate.export_trace_csv(trace, path, include_hidden=hidden,
                                      comments=comments)
            log(f"wrote {path} ({len(trace)} samples, hidden={hidden})")
        figures.save_traces_figure(
            os.path.join(out, "traces.png"), {k: v[0] for k, v in named.items()}
        )
        log("wrote traces.png")
    return 0


def cmd_train(args) -> int:
    cfg = cfgmod.load_config(args.config, seed=args.seed, epochs=args.epochs)
    out = _ensure_out(args.out)
    fh, log = _logger(out)
    with fh:
        log(f"train config_hash={cfg.hash}")
        _train_arm(cfg, out, kind=cfg["loss"]["kind"], log=log)
    return 0


def cmd_eval(args) -> int:
    cfg = cfgmod.load_config(args.config, seed=args.seed)
    out = _ensure_out(args.out)
    fh, log = _logger(out)
    with fh:
        log(f"eval config_hash={cfg.hash} checkpoint={args.checkpoint}")
        epoch, w, _adam, lam_init, ck_hash = training.load_checkpoint(args.checkpoint)
        if ck_hash and ck_hash != cfg.hash:
            log(f"note: checkpoint was trained under config_hash={ck_hash}")
        net, p = training.unflatten(w)
        lam = training.lambda_physical(p, lam_init)
        params = cfgmod.cell_params(cfg)
        coeffs = cfgmod.ocv_coeffs(cfg)
        window = int(cfg["training"]["window"])
        trace = _valid_trace(cfg)
        est = evaluation.estimate_states(
            net, lam, coeffs, trace, cfgmod.norm_spec(cfg), window
        )
        metrics = evaluation.state_errors(trace, est)
        comments = {
            "config_hash": cfg.hash,
            "checkpoint": os.path.basename(args.checkpoint),
            "checkpoint_epoch": epoch,
        }
        evaluation.export_state_errors_csv(
            os.path.join(out, "state_errors.csv"), metrics, comments
        )
        evaluation.export_validation_trace_csv(
            os.path.join(out, "validation_trace.csv"), trace, est, comments
        )
        r0, r1, c = training.raw_circuit_values(lam)
        rows = evaluation.ident_report(params, r0, r1, c)
        evaluation.export_ident_csv(
            os.path.join(out, "ident_report.csv"), rows, comments
        )
        figures.save_validation_figure(
            os.path.join(out, "validation_states.png"), trace, est
        )
        for key, val in metrics.items():
            log(f"{key}={val}")
    return 0


def cmd_compare(args) -> int:
    cfg = cfgmod.load_config(args.config, seed=args.seed, epochs=args.epochs)
    out = _ensure_out(args.out)
    fh, log = _logger(out)
    with fh:
        log(f"compare config_hash={cfg.hash}")
        histories = {}
        summaries = []
        for kind in training.LOSS_KINDS:
            sub = _ensure_out(os.path.join(out, kind))
            result, rows = _train_arm(cfg, sub, kind=kind, log=log)
            histories[kind] = result.history
            final = result.history[-1] if result.history else None
            summaries.append((
                kind,
                len(result.history[0].terms) if result.history else 0,
                final.loss if final else float("nan"),
                {name: pct for name, _t, _i, pct in rows},
            ))
        figures.save_compare_figure(
            os.path.join(out, "compare.png"), histories, cfgmod.cell_params(cfg)
        )
        with open(os.path.join(out, "compare_summary.csv"), "w", encoding="utf-8") as sf:
            sf.write(f"# config_hash={cfg.hash}\n")
            sf.write("loss_kind,weighted_terms,final_loss,r0_err_pct,r1_err_pct,c_err_pct\n")
            for kind, n_terms, loss, errs in summaries:
                sf.write(
                    f"{kind},{n_terms},{loss:.12g},{errs['r0']:.12g},"
                    f"{errs['r1']:.12g},{errs['c']:.12g}\n"
                )
        log("wrote compare.png and compare_summary.csv")
    return 0


def cmd_gradcheck(args) -> int:
    ok, ratio, n = training.gradient_check(seed=args.seed)
    print(
        f"gradient check: {n} entries, worst error at {ratio:.3e} of "
        f"tolerance (rel 1e-6, abs floor 1e-9; <= 1 passes)"
    )
    if not ok:
        raise NumericsError(f"gradient check failed: tolerance ratio {ratio:.3e} > 1")
    print("gradient check passed")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
