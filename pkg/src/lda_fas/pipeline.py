"""File-level steps behind the CLI subcommands.

Each function reads its inputs from disk, writes its artifacts under ``out``
and returns a small dict summary.  Nothing outside ``out`` is touched.
"""

import hashlib
from pathlib import Path

import numpy as np

from . import _kernels, metrics
from . import io as aio
from .adaptation import adapt
from .aps import select_prototypes
from .errors import ConfigurationError
from .lda_head import LdaConfig
from .model import forward
from .synthdata import MixtureSpec, default_fig1_spec, sample_mixture, shift_domain
from .trainer import TrainConfig, evaluate, grad_check, scores_for, train

SPECS = {"fig1": default_fig1_spec}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_spec(name_or_path: str) -> MixtureSpec:
    if name_or_path in SPECS:
        return SPECS[name_or_path]()
    return MixtureSpec.from_dict(aio.read_json(name_or_path))


def load_config(path=None, overrides: dict = None) -> TrainConfig:
    """Config JSON (or a run manifest containing one) with flag overrides applied."""
    raw = {}
    if path is not None:
        raw = aio.read_json(path)
        if "config" in raw and isinstance(raw["config"], dict):
            raw = raw["config"]
    raw = dict(raw)
    lda = dict(raw.get("lda", {}) or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in LdaConfig.__dataclass_fields__:
            lda[key] = value
        else:
            raw[key] = value
    raw["lda"] = lda
    return TrainConfig.from_dict(raw)


def gen_data(out, spec: str = "fig1", n: int = 2000, seed: int = 0, n_dev: int = None, n_test: int = None,
             shift=None, std_scale: float = 1.0, prefix: str = "") -> dict:
    out = Path(out)
    mix = load_spec(spec)
    if shift is not None or std_scale != 1.0:
        mix = shift_domain(mix, shift if shift is not None else np.zeros(mix.dim), std_scale)
    n_dev = n // 2 if n_dev is None else n_dev
    n_test = n // 2 if n_test is None else n_test
    ss = np.random.SeedSequence(seed).spawn(3)
    written = {}
    for name, count, s in (("train", n, ss[0]), ("dev", n_dev, ss[1]), ("test", n_test, ss[2])):
        if count > 0:
            path = out / f"{prefix}{name}.csv"
            aio.write_samples(path, sample_mixture(mix, count, s))
            written[name] = str(path)
    aio.write_json(out / f"{prefix}spec.json", mix.to_dict())
    return {"files": written, "spec": str(out / f"{prefix}spec.json")}


def train_run(out, cfg: TrainConfig, data, dev=None) -> dict:
    out = Path(out)
    train_set = aio.read_samples(data)
    dev_set = aio.read_samples(dev) if dev is not None else None
    result = train(cfg, train_set, dev_set)
    aio.write_model(out / "model.json", result.params)
    aio.write_bank(out / "bank.csv", result.bank)
    aio.write_csv(out / "history.csv", result.history.COLUMNS, result.history.rows())
    inputs = {"data": {"path": str(data), "sha256": _sha256(data)}}
    if dev is not None:
        inputs["dev"] = {"path": str(dev), "sha256": _sha256(dev)}
    manifest = {
        "command": "train",
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "backend": _kernels.BACKEND,
        "inputs": inputs,
        "metrics": result.history.final,
        "artifacts": ["model.json", "bank.csv", "history.csv"],
    }
    aio.write_json(out / "manifest.json", manifest)
    return manifest


def _run_files(run, model=None, bank=None, config=None):
    run = Path(run) if run is not None else None
    model = model or (run / "model.json" if run else None)
    bank = bank or (run / "bank.csv" if run else None)
    if config is None and run is not None and (run / "manifest.json").exists():
        config = run / "manifest.json"
    if model is None or bank is None:
        raise ConfigurationError("need --run or both --model and --bank")
    return aio.read_model(model), aio.read_bank(bank), load_config(config)


def eval_run(out, dev, test, run=None, model=None, bank=None, config=None, fpr_targets=None) -> dict:
    out = Path(out)
    params, protos, cfg = _run_files(run, model, bank, config)
    targets = tuple(fpr_targets) if fpr_targets else tuple(cfg.fpr_targets)
    report = evaluate(params, protos, aio.read_samples(dev), aio.read_samples(test), cfg.lda, targets)
    thr = report["threshold"]
    rows = [
        ["acer", "dev", thr, report["dev_acer"]],
        ["apcer", "test", thr, report["apcer"]],
        ["bpcer", "test", thr, report["bpcer"]],
        ["acer", "test", thr, report["acer"]],
        ["hter", "test", thr, report["hter"]],
    ]
    rows += [[f"tpr@fpr={f!r}", "test", "", v] for f, v in report["tpr_at_fpr"].items()]
    aio.write_csv(out / "metrics.csv", ["metric", "split", "threshold", "value"], rows)
    report_json = dict(report, tpr_at_fpr={repr(k): v for k, v in report["tpr_at_fpr"].items()})
    aio.write_json(out / "metrics.json", report_json)
    return report_json


def aps_run(out, data, run=None, model=None, bank=None, config=None, t_live=None, t_spoof=None) -> dict:
    out = Path(out)
    params, protos, cfg = _run_files(run, model, bank, config)
    samples = aio.read_samples(data)
    emb, _ = forward(params, samples.x)
    t_live = cfg.t_live if t_live is None else t_live
    t_spoof = cfg.t_spoof if t_spoof is None else t_spoof
    sel = select_prototypes(protos, emb[samples.y == 0], emb[samples.y == 1], t_live, t_spoof)
    aio.write_bank(out / "bank_aps.csv", sel.bank)
    log = sel.to_dict()
    aio.write_json(out / "aps_log.json", log)
    return log


def adapt_run(out, data, run=None, model=None, bank=None, config=None) -> dict:
    out = Path(out)
    params, protos, _ = _run_files(run, model, bank, config)
    target = aio.read_samples(data)
    adapted = adapt(protos, params, target.x, target.y)
    aio.write_bank(out / "bank_adapted.csv", adapted)
    return {"before": list(protos.counts), "after": list(adapted.counts)}


def gradcheck_run(out, cfg: LdaConfig, n_trials: int = 50, tolerance: float = 1e-5, seed: int = 0) -> dict:
    report = grad_check(cfg, n_trials, tolerance, seed)
    d = {"n_trials": report.n_trials, "tolerance": report.tolerance, "max_rel_error": report.max_rel_error,
         "per_loss": report.per_loss, "resampled": report.resampled, "passed": report.passed, "note": report.note}
    aio.write_json(Path(out) / "gradcheck.json", d)
    return d
