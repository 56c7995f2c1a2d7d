"""Command-line driver: data generation, training, prediction and analysis.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import bare_eff_gap, mae_mse, metrics_csv, screening_analysis, screening_csv, tanfit_csv
from .checkpoint import CheckpointError, load_checkpoint, load_ffm, load_vnet, save_ffm, save_vnet
from .energy import energy_csv, energy_report, percent_correlation
from .fcidump import ExchangeFormatError, read_exchange_file, write_exchange_file
from .ffm import FFMConfig, ffm_eval_tensor, ffm_train
from .linalg import ConvergenceError
from .netmodel import MissingKernelError, ModelConfig, Phase, eval_tensor, init_model
from .synth import KernelSpec, gen_series
from .tensors import GeometrySeries, IndexMask, Kind, SeriesEntry, Symmetry, build_zero_mask, canonical_unit
from .training import TrainConfig, TrainPhase, build_samples, finetune, grad_check, history_csv, pretrain

REFERENCE_GEOMETRIES = (1.15, 1.45, 1.95, 2.45)
GRAD_TOL = 1e-6
DATA_MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add_input(self, path):
        self.inputs[str(path)] = file_digest(path)

    def write(self, path):
        missing = [p for p in self.outputs if not os.path.exists(p)]
        if missing:
            raise DataError(f"declared outputs were not written: {missing}")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_geometries(text: str) -> list[float]:
    """Comma list ``1.1,1.2`` or inclusive linspace ``start:stop:num``."""
    if not isinstance(text, str):
        return [float(x) for x in text]
    text = text.strip()
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(x) for x in np.round(np.linspace(float(a), float(b), int(n)), 6)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse geometry list {text!r}") from exc


def _write_text(path, text: str):
    with open(path, "w") as fh:
        fh.write(text)


# data directory ------------------------------------------------------------

def _geom_tag(g: float) -> str:
    return f"R{g!r}"


def load_data_dir(data_dir):
    path = os.path.join(data_dir, DATA_MANIFEST)
    if not os.path.exists(path):
        raise DataError(f"{data_dir}: no {DATA_MANIFEST}; run gen-synthetic first")
    with open(path) as fh:
        info = json.load(fh)["extra"]
    bare, eff = [], []
    for g, fb, fe in zip(info["geometries"], info["bare_files"], info["effective_files"]):
        db = read_exchange_file(os.path.join(data_dir, fb), Kind.BARE, Symmetry.EIGHTFOLD, g)
        de = read_exchange_file(os.path.join(data_dir, fe), Kind.EFFECTIVE, Symmetry.FOURFOLD, g)
        bare.append(SeriesEntry(g, db.two_body, db.one_body, db.scalar))
        eff.append(SeriesEntry(g, de.two_body, de.one_body, de.scalar))
    files = [os.path.join(data_dir, f) for f in info["bare_files"] + info["effective_files"]]
    return GeometrySeries(tuple(bare)), GeometrySeries(tuple(eff)), info, files


def _mask_meta(mask: IndexMask) -> dict:
    return {"mask_n_act": mask.n_act, "masked": np.flatnonzero(mask.masked).tolist()}


def _mask_from_meta(meta: dict) -> IndexMask | None:
    if "masked" not in meta:
        return None
    n = int(meta["mask_n_act"])
    keys = canonical_unit(n, Symmetry.FOURFOLD)
    flags = np.zeros(len(keys), dtype=bool)
    flags[np.asarray(meta["masked"], dtype=int)] = True
    return IndexMask(n, keys, flags)


def _select(series: GeometrySeries, geoms, what: str) -> GeometrySeries:
    missing = [g for g in geoms if not any(abs(g - h) <= 1e-9 for h in series.geometries)]
    if missing:
        raise DataError(f"{what} geometries {missing} are not in the data set")
    return series.subset(geoms)


# configuration -----------------------------------------------------------------

_CONFIG_KEYS = ("data_dir", "epochs", "lr0", "batch_size", "seed", "ell", "hidden", "depth", "refs", "geometries",
                "n_freq", "sigma_f", "n_hidden")


def merged_config(args) -> dict:
    """JSON config file overlaid by explicitly given flags (flags win)."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    for k in _CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if not cfg.get("data_dir") and hasattr(args, "data_dir"):
        raise UsageError("no data directory: pass --data-dir or set data_dir in the config")
    if "reference_geometries" in cfg and "refs" not in cfg:
        cfg["refs"] = cfg["reference_geometries"]
    for k in ("refs", "geometries"):
        if isinstance(cfg.get(k), str):
            cfg[k] = parse_geometries(cfg[k])
    return cfg


def _train_config(cfg: dict, phase: TrainPhase) -> TrainConfig:
    try:
        return TrainConfig(phase, epochs=cfg.get("epochs"), lr0=cfg.get("lr0"),
                           batch_size=cfg.get("batch_size", 4096), seed=cfg.get("seed", 0))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _model_config(cfg: dict, n_act: int) -> ModelConfig:
    try:
        return ModelConfig(n_act, ell=cfg.get("ell", 300), hidden=cfg.get("hidden", 200),
                           depth=cfg.get("depth", 4))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _outputs(args, stem: str) -> tuple[str, str]:
    return (args.loss_csv or f"{stem}.loss.csv", args.manifest or f"{stem}.manifest.json")


# commands ----------------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    t0 = time.perf_counter()
    geoms = parse_geometries(args.geometries)
    if len(set(geoms)) != len(geoms):
        dup = sorted({g for g in geoms if geoms.count(g) > 1})
        raise UsageError(f"duplicate geometries {dup}")
    try:
        bk, ek = (KernelSpec.parse(s) for s in args.kernels)
    except ValueError as exc:
        raise UsageError(f"bad kernel spec: {exc}") from exc
    try:
        os.makedirs(args.out_dir, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {args.out_dir}: {exc}") from exc
    if not os.access(args.out_dir, os.W_OK):
        raise DataError(f"{args.out_dir} is not writable")
    try:
        data = gen_series(geoms, args.n_act, bk, ek, args.n_q)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    man = RunManifest("gen-synthetic", {"n_act": args.n_act, "kernels": [bk.label(), ek.label()],
                                         "n_q": args.n_q, "geometries": data.bare.geometries})
    bare_files, eff_files = [], []
    for eb, ed in zip(data.bare, data.effective):
        for e, prefix, names in ((eb, "bare", bare_files), (ed, "eff", eff_files)):
            name = f"{prefix}_{_geom_tag(e.geometry)}.fcidump"
            write_exchange_file(os.path.join(args.out_dir, name), e.scalar, e.one_body, e.two_body)
            names.append(name)
            man.outputs.append(os.path.join(args.out_dir, name))
    man.extra = {"n_act": args.n_act, "geometries": data.bare.geometries, "bare_files": bare_files,
                 "effective_files": eff_files, "bare_kernel": bk.label(), "eff_kernel": ek.label(),
                 "n_q": args.n_q}
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(os.path.join(args.out_dir, DATA_MANIFEST))
    print(f"wrote {len(man.outputs)} tensor files to {args.out_dir}")
    return 0


def _progress(every: int):
    def cb(r):
        if every and r.epoch % every == 0:
            held = "" if r.heldout_mse is None else f" heldout {r.heldout_mse:.3e}"
            print(f"epoch {r.epoch} train {r.train_mse:.3e}{held}", flush=True)
    return cb


def cmd_pretrain(args) -> int:
    t0 = time.perf_counter()
    cfg = merged_config(args)
    bare, _, info, files = load_data_dir(cfg["data_dir"])
    if cfg.get("geometries"):
        bare = _select(bare, cfg["geometries"], "training")
    mask = build_zero_mask(bare)
    state, model = None, None
    if args.resume:
        model, ck = load_vnet(args.resume)
        if ck.state is None or ck.train_config is None:
            raise DataError(f"{args.resume} carries no optimizer state to resume from")
        tc, state = ck.train_config, ck.state
        mask = _mask_from_meta(ck.meta) or mask
    else:
        tc = _train_config(cfg, TrainPhase.PRETRAIN)
        model = init_model(_model_config(cfg, bare.n_act), tc.seed)
    res = pretrain(bare, mask, tc, model=model, state=state, stop_epoch=args.stop_epoch,
                   callback=_progress(args.print_every))
    loss_csv, man_path = _outputs(args, args.out)
    meta = {"seed": tc.seed, "phase": "PRETRAIN", "samples_digest": res.samples_digest,
            "geometries": bare.geometries, **_mask_meta(mask)}
    save_vnet(args.out, res.model, res.state, tc, meta)
    _write_text(loss_csv, history_csv(res.history))
    man = RunManifest("pretrain", {**cfg, **tc.to_dict(), **asdict(res.model.config)}, tc.seed,
                      outputs=[args.out, loss_csv])
    for f in files + ([args.resume] if args.resume else []):
        man.add_input(f)
    man.extra = {"samples_digest": res.samples_digest, "epochs_done": res.state.epoch,
                 "n_masked": int(mask.masked.sum())}
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(man_path)
    print(f"pretrain: final train mse {res.history[-1].train_mse:.6e}" if res.history else "pretrain: 0 epochs")
    return 0


def _heldout(eff: GeometrySeries, refs, mask):
    held = [g for g in eff.geometries if not any(abs(g - r) <= 1e-9 for r in refs)]
    return build_samples(eff.subset(held), mask, Phase.EFFECTIVE) if held else None, held


def cmd_finetune(args) -> int:
    t0 = time.perf_counter()
    cfg = merged_config(args)
    bare, eff, info, files = load_data_dir(cfg["data_dir"])
    refs = [float(r) for r in cfg.get("refs", REFERENCE_GEOMETRIES)]
    inputs = list(files)
    state = None
    if args.resume:
        model, ck = load_vnet(args.resume)
        if ck.state is None or ck.train_config is None:
            raise DataError(f"{args.resume} carries no optimizer state to resume from")
        tc, state = ck.train_config, ck.state
        mask = _mask_from_meta(ck.meta) or build_zero_mask(bare)
        from_scratch = bool(ck.meta.get("from_scratch", False))
        refs = ck.meta.get("references", refs)
        inputs.append(args.resume)
    else:
        tc = _train_config(cfg, TrainPhase.FINETUNE)
        from_scratch = args.from_scratch
        if from_scratch:
            model = init_model(_model_config(cfg, eff.n_act), tc.seed)
            mask = build_zero_mask(bare)
        elif args.checkpoint:
            model, ck = load_vnet(args.checkpoint)
            mask = _mask_from_meta(ck.meta) or build_zero_mask(bare)
            inputs.append(args.checkpoint)
        else:
            raise UsageError("finetune needs --checkpoint from a pretrain run (or --from-scratch)")
    ref_series = _select(eff, refs, "reference")
    held, held_geoms = _heldout(eff, refs, mask)
    res = finetune(model, ref_series, mask, tc, heldout=held, state=state, stop_epoch=args.stop_epoch,
                   callback=_progress(args.print_every))
    loss_csv, man_path = _outputs(args, args.out)
    meta = {"seed": tc.seed, "phase": "FINETUNE", "references": refs, "from_scratch": from_scratch,
            "samples_digest": res.samples_digest, **_mask_meta(mask)}
    save_vnet(args.out, res.model, res.state, tc, meta)
    _write_text(loss_csv, history_csv(res.history))
    man = RunManifest("finetune", {**cfg, **tc.to_dict(), **asdict(res.model.config)}, tc.seed,
                      outputs=[args.out, loss_csv])
    for f in inputs:
        man.add_input(f)
    man.extra = {"references": refs, "heldout_geometries": held_geoms, "from_scratch": from_scratch,
                 "samples_digest": res.samples_digest, "epochs_done": res.state.epoch}
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(man_path)
    if res.history:
        print(f"finetune: final train mse {res.history[-1].train_mse:.6e}")
    return 0


def cmd_ffm_train(args) -> int:
    t0 = time.perf_counter()
    cfg = merged_config(args)
    bare, eff, info, files = load_data_dir(cfg["data_dir"])
    refs = [float(r) for r in cfg.get("refs", REFERENCE_GEOMETRIES)]
    mask = build_zero_mask(bare)
    keys = ("n_freq", "sigma_f", "hidden", "n_hidden", "seed", "epochs", "lr0", "batch_size")
    try:
        fc = FFMConfig(eff.n_act, **{k: cfg[k] for k in keys if k in cfg})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    held, held_geoms = _heldout(eff, refs, mask)
    res = ffm_train(_select(eff, refs, "reference"), mask, fc, heldout=held,
                    callback=_progress(args.print_every))
    loss_csv, man_path = _outputs(args, args.out)
    save_ffm(args.out, res.params, res.state, {"seed": fc.seed, "references": refs,
                                               "samples_digest": res.samples_digest, **_mask_meta(mask)})
    _write_text(loss_csv, history_csv(res.history))
    man = RunManifest("ffm-train", {**cfg, **fc.to_dict()}, fc.seed, outputs=[args.out, loss_csv])
    for f in files:
        man.add_input(f)
    man.extra = {"references": refs, "heldout_geometries": held_geoms, "samples_digest": res.samples_digest}
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(man_path)
    if res.history:
        print(f"ffm-train: final train mse {res.history[-1].train_mse:.6e}")
    return 0


def _predictor(path, phase: Phase):
    ck = load_checkpoint(path)
    if ck.model_kind == "ffm":
        params, ck = load_ffm(path)
        if phase is not Phase.EFFECTIVE:
            raise UsageError("an FFM checkpoint only predicts effective tensors")
        mask = _mask_from_meta(ck.meta) or IndexMask.none_masked(params.config.n_act)
        return (lambda R: ffm_eval_tensor(params, R, mask)), mask
    model, ck = load_vnet(path)
    model.kernel(phase)  # raises MissingKernelError early
    mask = _mask_from_meta(ck.meta) or IndexMask.none_masked(model.config.n_act)
    return (lambda R: eval_tensor(model, phase, R, mask)), mask


def cmd_predict(args) -> int:
    phase = Phase(args.phase.upper())
    predict, _ = _predictor(args.checkpoint, phase)
    times = []
    tensor = None
    for _ in range(args.trials):
        t = time.perf_counter()
        tensor = predict(args.geometry)
        times.append(time.perf_counter() - t)
    scalar, h = 0.0, np.zeros((tensor.n_act,) * 2)
    man = RunManifest("predict", {"geometry": args.geometry, "phase": phase.value, "trials": args.trials},
                      outputs=[args.out])
    man.add_input(args.checkpoint)
    if args.one_body_from:
        src = read_exchange_file(args.one_body_from)
        if src.one_body.n_act != tensor.n_act:
            raise DataError("one-body source has a different orbital count")
        scalar, h = src.scalar, src.one_body
        man.add_input(args.one_body_from)
    write_exchange_file(args.out, scalar, h, tensor)
    mean, std = float(np.mean(times)), float(np.std(times))
    man.timings = {"predict_mean_s": mean, "predict_std_s": std, "trials": times}
    man.write(args.manifest or f"{args.out}.manifest.json")
    print(f"prediction time {mean:.3e} +- {std:.3e} s over {args.trials} trials")
    return 0


def _read_many(paths, kind=None, symmetry=None):
    out = []
    for p in paths:
        d = read_exchange_file(p, kind=kind, symmetry=symmetry)
        if "GEOM" not in d.header:
            raise DataError(f"{p}: no GEOM in header")
        out.append(d)
    return sorted(out, key=lambda d: d.two_body.geometry)


def cmd_metrics(args) -> int:
    pred = _read_many(args.pred)
    true = _read_many(args.true)
    bare = _read_many(args.bare) if args.bare else None
    if len(pred) != len(true) or (bare is not None and len(bare) != len(true)):
        raise DataError("prediction, target and bare file counts differ")
    for a, b in zip(pred, true):
        if abs(a.two_body.geometry - b.two_body.geometry) > 1e-9:
            raise DataError(f"geometry mismatch {a.two_body.geometry} vs {b.two_body.geometry}")
        if a.two_body.n_act != b.two_body.n_act:
            raise DataError("orbital count mismatch between prediction and target")
    if args.mask_checkpoint:
        mask = _mask_from_meta(load_checkpoint(args.mask_checkpoint).meta)
    else:
        mask = build_zero_mask(GeometrySeries.from_tensors([d.two_body for d in true]))
    if mask is None or mask.n_act != true[0].two_body.n_act:
        raise DataError("mask does not match the tensors")
    rows = []
    for i, (p, t) in enumerate(zip(pred, true)):
        gap = bare_eff_gap(bare[i].two_body, t.two_body, mask) if bare else None
        rows.append((mae_mse(p.two_body, t.two_body, mask), gap))
    _write_text(args.out, metrics_csv(rows))
    print(f"wrote {len(rows)} metric rows to {args.out}")
    return 0


def cmd_kernel_analysis(args) -> int:
    model, _ = load_vnet(args.checkpoint)
    rep = screening_analysis(model.kernel(Phase.BARE), model.kernel(Phase.EFFECTIVE), eta=args.eta,
                             fit=not args.no_fit)
    _write_text(args.out, screening_csv(rep))
    if args.tanfit_out:
        _write_text(args.tanfit_out, tanfit_csv(rep.fit))
    print(f"diagonality (off-diagonal fraction) {rep.diagonality:.3e}")
    if rep.fit is not None:
        f = rep.fit
        print(f"tan fit alpha={f.alpha:.6g} beta={f.beta:.6g} i_c={f.i_c:.6g} rms={f.residual:.3e}")
    return 0


def cmd_energy(args) -> int:
    inputs = [read_exchange_file(p) for p in args.inputs]
    base = [read_exchange_file(p) for p in args.baseline] if args.baseline else None
    if base is not None and len(base) != len(inputs):
        raise DataError("baseline file count differs from input count")
    rows = []
    for i, d in enumerate(inputs):
        n_elec = args.n_elec if args.n_elec is not None else d.n_elec
        if not n_elec:
            raise UsageError(f"{args.inputs[i]}: electron count unknown; pass --n-elec")
        g = d.two_body.geometry if "GEOM" in d.header else None
        rep = energy_report(d.scalar.value, d.one_body.values, d.two_body.values, n_elec, g)
        pct = None
        if base is not None:
            b = base[i]
            brep = energy_report(b.scalar.value, b.one_body.values, b.two_body.values, n_elec)
            pct = percent_correlation(rep, brep)
        rows.append((rep, pct))
        print(f"{args.inputs[i]}: E_ref={rep.e_ref:.12f} E_total={rep.e_total:.12f} E_corr={rep.e_corr:.12f}")
    _write_text(args.out, energy_csv(rows))
    return 0


def cmd_grad_check(args) -> int:
    cfg = merged_config(args)
    mc = ModelConfig(cfg.get("n_act", 3), ell=cfg.get("ell", 8), hidden=cfg.get("hidden", 10),
                     depth=cfg.get("depth", 3))
    rep = grad_check(mc, n_batches=cfg.get("batches", 20), seed=cfg.get("seed", 0),
                     h=cfg.get("step", 1e-5), order=cfg.get("order", 2), corrupt=args.debug_corrupt_gradient)
    for name, err in sorted(rep.worst.items()):
        print(f"{name:24s} {err:.3e}")
    ok = rep.max_error <= GRAD_TOL
    print(f"max relative error {rep.max_error:.3e} ({'PASS' if ok else 'FAIL'} at {GRAD_TOL:g})")
    if not ok:
        raise NumericalFailure("gradient check failed")
    return 0


# parser --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_train_flags(p, ffm: bool = False):
    p.add_argument("--config", help="JSON config; explicit flags override its entries")
    p.add_argument("--data-dir", help="gen-synthetic output directory (or data_dir in the config)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv")
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--print-every", type=int, default=0)
    if ffm:
        p.add_argument("--n-freq", type=int)
        p.add_argument("--sigma-f", type=float)
        p.add_argument("--n-hidden", type=int)
    else:
        p.add_argument("--ell", type=int)
        p.add_argument("--depth", type=int)
        p.add_argument("--resume", help="continue from a checkpoint carrying optimizer state")
        p.add_argument("--stop-epoch", type=int, help="stop early (the schedule still spans all epochs)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vnet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="write synthetic bare/effective tensor files")
    p.add_argument("--geometries", required=True, help="comma list or start:stop:num")
    p.add_argument("--n-act", type=int, default=6)
    p.add_argument("--kernels", nargs=2, default=["soft_coulomb:0.3", "yukawa:0.5,0.3"],
                   metavar=("BARE", "EFFECTIVE"))
    p.add_argument("--n-q", type=int, default=256)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("pretrain", help="fit theta and W^B on bare tensors")
    _add_train_flags(p)
    p.add_argument("--geometries", help="restrict training to these geometries")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fit W^D (and theta) on effective tensors at references")
    _add_train_flags(p)
    p.add_argument("--checkpoint", help="pretrain checkpoint")
    p.add_argument("--from-scratch", action="store_true", help="start from random parameters (ablation)")
    p.add_argument("--refs", help="reference geometries, default 1.15,1.45,1.95,2.45")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("ffm-train", help="train the Fourier-feature baseline")
    _add_train_flags(p, ffm=True)
    p.add_argument("--refs")
    p.set_defaults(func=cmd_ffm_train)

    p = sub.add_parser("predict", help="predict a full tensor at one geometry")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--geometry", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--phase", default="effective", choices=["bare", "effective"])
    p.add_argument("--one-body-from", help="copy scalar and one-body terms from this exchange file")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("metrics", help="MAE / MSE of predicted vs target tensors")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--true", nargs="+", required=True)
    p.add_argument("--bare", nargs="+")
    p.add_argument("--mask-checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("kernel-analysis", help="screening analysis of W^B vs W^D")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tanfit-out")
    p.add_argument("--eta", type=float)
    p.add_argument("--no-fit", action="store_true")
    p.set_defaults(func=cmd_kernel_analysis)

    p = sub.add_parser("energy", help="reference / total / correlation energies")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--baseline", nargs="+")
    p.add_argument("--n-elec", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--config", help="JSON with n_act, ell, hidden, depth, batches, seed")
    p.add_argument("--debug-corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_grad_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for k in ("refs", "geometries"):
        v = getattr(args, k, None)
        if isinstance(v, str):
            try:
                setattr(args, k, parse_geometries(v))
            except UsageError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, ExchangeFormatError, CheckpointError, MissingKernelError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
