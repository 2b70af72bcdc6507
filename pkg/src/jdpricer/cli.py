"""Command-line interface: calibrate -> price/solve/simulate -> gen-data ->
tune -> train -> evaluate, plus an end-to-end ``repro`` pipeline.

Every command writes a JSON run manifest beside its primary output with
the resolved configuration, seeds, input/output paths, wall clock and
sha256 checksums, so a run can be reproduced and verified byte for byte.
Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, analytical, calibration, datagen, montecarlo, pide
from .core import (AMERICAN, CALL, EUROPEAN, PUT, MertonParams, ParamBounds,
                   QuoteDataset, ValidationError)
from .neuralnet import PinnModel, deserialize, serialize
from . import training as tr

DEFAULT_SEED = 42


class CliError(Exception):
    """Usage/validation problem: exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    wall_clock_s: float = 0.0
    checksums: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    def write(self, path):
        self.versions = {"jdpricer": __version__,
                         "pide_backend": pide.backend(),
                         "rng": montecarlo.RNG_NAME}
        for out in self.outputs:
            self.checksums[out] = _sha256(out)
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest_path(primary_output) -> str:
    return str(primary_output) + ".manifest.json"


def _load_params(path) -> MertonParams:
    with open(path) as fh:
        return MertonParams.from_json(fh.read())


def _spec_args(p: _Parser):
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--kind", choices=[CALL, PUT], default=CALL)
    p.add_argument("--style", choices=[EUROPEAN, AMERICAN], default=EUROPEAN)


def build_parser() -> _Parser:
    parser = _Parser(prog="jdpricer", description=__doc__)
    parser.add_argument("--config", help="JSON file with per-command defaults "
                        "(flags still win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit Merton parameters to a close-price CSV")
    p.add_argument("--prices", required=True, help="one-column CSV of close prices")
    p.add_argument("--dt", type=float, default=1 / 252)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="output params JSON")

    p = sub.add_parser("price", help="price one option")
    _spec_args(p)
    p.add_argument("--params", required=True)
    p.add_argument("--method", choices=["analytic", "pide", "mc"], default="analytic")
    p.add_argument("--variant", choices=["canonical", "paper"], default="canonical",
                   help="series variant for --method analytic")
    p.add_argument("--n-terms", type=int, default=analytical.DEFAULT_N_TERMS)
    p.add_argument("--n-paths", type=int, default=200_000)
    p.add_argument("--nx", type=int, default=600)
    p.add_argument("--nt", type=int, default=300)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("solve", help="solve the PIDE and dump the value surface")
    p.add_argument("--params", required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--kind", choices=[CALL, PUT], default=CALL)
    p.add_argument("--style", choices=[EUROPEAN, AMERICAN], default=AMERICAN)
    p.add_argument("--nx", type=int, default=600)
    p.add_argument("--nt", type=int, default=300)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="surface CSV (t,x,S,value)")

    p = sub.add_parser("simulate", help="simulate paths and a log-return histogram")
    p.add_argument("--params", required=True)
    p.add_argument("--s0", type=float, default=100.0)
    p.add_argument("--horizon", type=float, default=14.0)
    p.add_argument("--steps", type=int, default=14 * 252)
    p.add_argument("--n-paths", type=int, default=8)
    p.add_argument("--measure", choices=["real", "risk_neutral"], default="real")
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--bins", type=int, default=80)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out-paths", required=True)
    p.add_argument("--out-hist", required=True)

    p = sub.add_parser("gen-data", help="generate a PIDE-labeled synthetic dataset")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--kind", choices=[CALL, PUT], default=CALL)
    p.add_argument("--spot-range", type=float, nargs=2, default=(200.0, 500.0))
    p.add_argument("--moneyness-range", type=float, nargs=2, default=(0.5, 1.5))
    p.add_argument("--tau-range", type=float, nargs=2, default=(0.02, 2.0))
    p.add_argument("--rate-range", type=float, nargs=2, default=(0.0, 0.05))
    p.add_argument("--nx", type=int, default=600)
    p.add_argument("--nt", type=int, default=300)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)

    p = sub.add_parser("tune", help="TPE search for the loss coefficients")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--epochs-per-trial", type=int, default=100)
    p.add_argument("--coef-bounds", type=float, nargs=2, default=(0.01, 1.0))
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--max-lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="trial log CSV")

    p = sub.add_parser("train", help="train the hybrid pricing model")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--max-lr", type=float, default=1e-2)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--cycles", type=int, default=1)
    p.add_argument("--physics-mode", choices=["merton", "bs"], default="merton")
    p.add_argument("--init-model", help="start from a serialized model")
    p.add_argument("--freeze-hidden", action="store_true")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--history", help="history CSV (default <out>.history.csv)")

    p = sub.add_parser("evaluate", help="metrics of a model on a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--filter", choices=["all", "deep_otm"], default="all")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="optional metrics JSON output")

    p = sub.add_parser("repro", help="desk-scale end-to-end pipeline")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-data", type=int, default=4000)
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return parser


def _apply_config_file(parser, argv):
    """Config precedence: flags > JSON config file > built-in defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        raise CliError("--config needs a path")
    with open(path) as fh:
        overrides = json.load(fh)
    rest = argv[:i] + argv[i + 2:]
    command = next((a for a in rest if not a.startswith("-")), None)
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            sub = action.choices[command]
            for sub_action in sub._actions:
                if sub_action.dest in overrides:
                    sub_action.default = overrides[sub_action.dest]
                    sub_action.required = False
    return rest


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        handler = _HANDLERS[args.command]
        t0 = time.perf_counter()
        manifest = handler(args)
        if manifest is not None:
            manifest.wall_clock_s = time.perf_counter() - t0
            manifest.write(_manifest_path(manifest.outputs[0])
                           if manifest.outputs else "manifest.json")
        return 0
    except (CliError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def _cfg_of(args, skip=("command", "config")) -> dict:
    return {k: v for k, v in vars(args).items() if k not in skip}


def cmd_calibrate(args) -> RunManifest:
    prices = []
    with open(args.prices, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                prices.append(float(row[0]))
            except ValueError:
                continue  # header or stray text
    series = calibration.ReturnSeries.from_prices(np.array(prices), dt=args.dt)
    cfg = calibration.AnnealConfig(max_iters=args.max_iters, seed=args.seed)
    params = calibration.calibrate(series, ParamBounds(), cfg)
    with open(args.out, "w") as fh:
        fh.write(params.to_json())
    print(params.to_json())
    return RunManifest("calibrate", _cfg_of(args), args.seed,
                       inputs=[args.prices], outputs=[args.out])


def cmd_price(args) -> None:
    params = _load_params(args.params)
    from .core import OptionSpec
    spec = OptionSpec(spot=args.spot, strike=args.strike, tau=args.tau,
                      rate=args.rate, kind=args.kind, style=args.style)
    if args.method == "analytic":
        if spec.style != EUROPEAN:
            raise CliError("analytic pricing is European-only; "
                           "use --method pide for American")
        fn = (analytical.price_european_paper if args.variant == "paper"
              else analytical.price_european_canonical)
        print(f"{fn(params, spec, args.n_terms):.6f}")
    elif args.method == "mc":
        if spec.style != EUROPEAN:
            raise CliError("mc pricing is European-only")
        price, stderr = montecarlo.mc_price_european(
            params, spec, n_paths=args.n_paths, seed=args.seed)
        print(f"{price:.6f} +/- {stderr:.6f}")
    else:
        grid = pide.default_grid(params, spec.strike, spec.tau,
                                 n_x=args.nx, n_t=args.nt, cover=[spec.spot])
        surface = pide.solve(params, spec.kind, spec.style, spec.strike,
                             spec.rate, grid)
        print(f"{pide.interpolate(surface, spec.spot, 0.0):.6f}")
    return None


def cmd_solve(args) -> RunManifest:
    params = _load_params(args.params)
    grid = pide.default_grid(params, args.strike, args.tau,
                             n_x=args.nx, n_t=args.nt)
    surface = pide.solve(params, args.kind, args.style, args.strike,
                         args.rate, grid)
    xs = grid.x_nodes()
    ts = grid.t_nodes()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "S", "value"])
        for j, t in enumerate(ts):
            for i, x in enumerate(xs):
                w.writerow([repr(float(t)), repr(float(x)),
                            repr(float(math.exp(x))),
                            repr(float(surface.values[j, i]))])
    return RunManifest("solve", _cfg_of(args), args.seed,
                       inputs=[args.params], outputs=[args.out])


def cmd_simulate(args) -> RunManifest:
    params = _load_params(args.params)
    cfg = montecarlo.PathConfig(
        s0=args.s0, horizon=args.horizon, steps=args.steps,
        n_paths=args.n_paths, seed=args.seed, measure=args.measure,
        rate=args.rate)
    paths = montecarlo.simulate_paths(params, cfg)
    edges, freq = montecarlo.log_return_histogram(paths, bins=args.bins)
    with open(args.out_paths, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in paths:
            w.writerow([repr(float(v)) for v in row])
    with open(args.out_hist, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "density"])
        for i, d in enumerate(freq):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])),
                        repr(float(d))])
    return RunManifest("simulate", _cfg_of(args), args.seed,
                       inputs=[args.params],
                       outputs=[args.out_paths, args.out_hist])


def cmd_gen_data(args) -> RunManifest:
    params = _load_params(args.params)
    ranges = datagen.SamplerRanges(
        spot=tuple(args.spot_range), moneyness=tuple(args.moneyness_range),
        tau=tuple(args.tau_range), rate=tuple(args.rate_range),
        n_samples=args.n, kind=args.kind, seed=args.seed)
    dataset = datagen.generate_synthetic(params, ranges,
                                         n_x=args.nx, n_t=args.nt)
    datagen.write_quotes_csv(dataset, args.out)
    return RunManifest("gen-data", _cfg_of(args), args.seed,
                       inputs=[args.params], outputs=[args.out])


def _load_dataset(path) -> QuoteDataset:
    data = datagen.load_market_csv(path)
    if len(data) == 0:
        raise CliError(f"{path}: dataset is empty")
    return data


def _dataset_kind(data: QuoteDataset) -> str:
    kinds = set(np.unique(data.kind))
    if len(kinds) != 1:
        raise CliError("dataset mixes calls and puts; train them separately")
    return kinds.pop()


def _new_model(data, params, physics_mode, seed) -> PinnModel:
    rate0 = float(np.mean(data.rate[data.split == "train"]))
    return PinnModel.new(kind=_dataset_kind(data), physics=params, rate=rate0,
                         physics_mode=physics_mode, seed=seed)


def cmd_tune(args) -> RunManifest:
    data = _load_dataset(args.data)
    params = _load_params(args.params)
    refs = tr.compute_physics_refs(data, params)
    cfg = tr.TuneConfig(n_trials=args.trials,
                        epochs_per_trial=args.epochs_per_trial,
                        alpha_bounds=tuple(args.coef_bounds),
                        beta_bounds=tuple(args.coef_bounds), seed=args.seed)
    train_cfg = tr.TrainConfig(batch_size=args.batch_size, max_lr=args.max_lr,
                               seed=args.seed)
    alpha, beta, trials = tr.tune_coefficients(
        data, lambda: _new_model(data, params, "merton", args.seed),
        cfg, train_cfg=train_cfg, v_e_ref=refs)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "alpha", "beta", "val_loss"])
        for t in trials:
            w.writerow([t.number, repr(t.alpha), repr(t.beta), repr(t.value)])
    print(json.dumps({"alpha": alpha, "beta": beta}))
    return RunManifest("tune", _cfg_of(args), args.seed,
                       inputs=[args.data, args.params], outputs=[args.out])


def cmd_train(args) -> RunManifest:
    data = _load_dataset(args.data)
    params = _load_params(args.params)
    refs = tr.compute_physics_refs(data, params)
    if args.init_model:
        with open(args.init_model, "rb") as fh:
            model = deserialize(fh.read())
    else:
        model = _new_model(data, params, args.physics_mode, args.seed)
    cfg = tr.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         max_lr=args.max_lr, patience=args.patience,
                         alpha=args.alpha, beta=args.beta, seed=args.seed,
                         freeze_hidden=args.freeze_hidden, cycles=args.cycles)
    result = tr.train(model, data, refs, cfg)
    with open(args.out, "wb") as fh:
        fh.write(serialize(model))
    history_path = args.history or args.out + ".history.csv"
    tr.write_history_csv(result.history, history_path)
    print(json.dumps({"best_val_loss": result.best_val_loss,
                      "best_epoch": result.best_epoch,
                      "epochs_run": len(result.history) - 1}))
    inputs = [args.data, args.params] + ([args.init_model] if args.init_model else [])
    return RunManifest("train", _cfg_of(args), args.seed, inputs=inputs,
                       outputs=[args.out, history_path])


def cmd_evaluate(args) -> RunManifest | None:
    data = _load_dataset(args.data)
    with open(args.model, "rb") as fh:
        model = deserialize(fh.read())
    metrics = tr.evaluate(model, data, split=args.split, filter=args.filter)
    print(json.dumps(metrics.as_dict(), indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(metrics.as_dict(), fh, indent=2)
        return RunManifest("evaluate", _cfg_of(args), args.seed,
                           inputs=[args.data, args.model], outputs=[args.out])
    return None


def cmd_repro(args) -> RunManifest:
    """Chain the desk-scale pipeline; artifacts land in --out-dir."""
    from pathlib import Path
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed
    true_params = MertonParams(mu=0.179, sigma=0.143, lam=2.0,
                               mu_y=-0.012, sigma_y=0.042)

    # 1. calibrate on simulated returns
    cfg = montecarlo.PathConfig(s0=100.0, horizon=10_000 / 252, steps=10_000,
                                n_paths=1, seed=seed)
    path = montecarlo.simulate_paths(true_params, cfg)[0]
    series = calibration.ReturnSeries.from_prices(path, dt=1 / 252)
    fitted = calibration.calibrate(
        series, ParamBounds(), calibration.AnnealConfig(max_iters=100, seed=seed))
    (out / "params.json").write_text(fitted.to_json())
    print("calibrated:", fitted.to_json())

    # 2. synthetic dataset
    ranges = datagen.SamplerRanges(n_samples=args.n_data, kind=CALL, seed=seed)
    data = datagen.generate_synthetic(fitted, ranges)
    datagen.write_quotes_csv(data, out / "synthetic.csv")
    refs = tr.compute_physics_refs(data, fitted)
    scarce = datagen.subsample(data, ratio=0.25, seed=seed)
    datagen.write_quotes_csv(scarce, out / "scarce.csv")
    refs_scarce = tr.compute_physics_refs(scarce, fitted)

    # 3. small TPE budget for the loss coefficients
    tune_cfg = tr.TuneConfig(n_trials=args.trials, epochs_per_trial=10,
                             n_startup=min(5, args.trials), seed=seed)
    quick = tr.TrainConfig(batch_size=256, patience=10_000, seed=seed)
    alpha, beta, trials = tr.tune_coefficients(
        scarce, lambda: _new_model(scarce, fitted, "merton", seed),
        tune_cfg, train_cfg=quick, v_e_ref=refs_scarce)
    with open(out / "tuning.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "alpha", "beta", "val_loss"])
        for t in trials:
            w.writerow([t.number, repr(t.alpha), repr(t.beta), repr(t.value)])
    print(f"tuned alpha={alpha:.4f} beta={beta:.4f}")

    # 4. PINN-Merton on the scarce set
    cfg_scarce = tr.TrainConfig(epochs=args.epochs, alpha=alpha, beta=beta,
                                patience=max(20, args.epochs), seed=seed)
    merton = _new_model(scarce, fitted, "merton", seed)
    res_m = tr.train(merton, scarce, refs_scarce, cfg_scarce)
    (out / "pinn_merton.json").write_bytes(serialize(merton))
    tr.write_history_csv(res_m.history, out / "pinn_merton_history.csv")

    # 5. PINN-Merton-Transfer: pretrain on full synthetic, fine-tune on scarce
    base = _new_model(data, fitted, "merton", seed)
    cfg_pre = tr.TrainConfig(epochs=args.epochs, alpha=alpha, beta=beta,
                             patience=max(20, args.epochs), seed=seed)
    transfer, res_pre, res_fine = tr.pretrain_transfer(
        data, scarce, fitted, base, cfg_pre, cfg_scarce)
    (out / "pinn_merton_transfer.json").write_bytes(serialize(transfer))
    tr.write_history_csv(res_fine.history, out / "transfer_history.csv")
    print(f"transfer initial val loss {res_fine.initial_val_loss:.4f} vs "
          f"merton epoch-1 val loss {res_m.history[1].val_loss:.4f}")

    # 6. evaluate both on the scarce test split
    report = {
        "alpha": alpha, "beta": beta,
        "pinn_merton": tr.evaluate(merton, scarce).as_dict(),
        "pinn_merton_transfer": tr.evaluate(transfer, scarce).as_dict(),
        "transfer_initial_val_loss": res_fine.initial_val_loss,
        "merton_epoch1_val_loss": res_m.history[1].val_loss,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps(report, indent=2))
    outputs = [str(out / n) for n in
               ("params.json", "synthetic.csv", "scarce.csv", "tuning.csv",
                "pinn_merton.json", "pinn_merton_transfer.json", "report.json")]
    return RunManifest("repro", _cfg_of(args), seed, outputs=outputs)


_HANDLERS = {
    "calibrate": cmd_calibrate,
    "price": cmd_price,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "gen-data": cmd_gen_data,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "repro": cmd_repro,
}


if __name__ == "__main__":
    sys.exit(main())
