"""Command-line front end: ``lda-fas <subcommand> --out DIR ...``.

Exit codes: 0 on success, 2 for usage and configuration problems (unknown
flag, malformed config, missing input file), 1 for runtime failures and for
``repro`` runs where a criterion fails.  Every failure prints one JSON line
on stderr.
"""

import json
import sys
from pathlib import Path

import click

from . import _kernels, pipeline
from . import io as aio
from .errors import ConfigurationError, LdaError
from .lda_head import LdaConfig

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _error_line(kind: str, message: str, code: int) -> None:
    click.echo(json.dumps({"error": kind, "message": message, "exit_code": code}), err=True)


class JsonErrorGroup(click.Group):
    """Click group that reports every failure as a JSON line with a fixed exit code."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.exceptions.Abort:
            _error_line("Abort", "aborted", RUNTIME_EXIT)
            rv = RUNTIME_EXIT
        except click.UsageError as exc:
            _error_line(type(exc).__name__, exc.format_message(), USAGE_EXIT)
            rv = USAGE_EXIT
        except click.ClickException as exc:
            _error_line(type(exc).__name__, exc.format_message(), exc.exit_code)
            rv = exc.exit_code
        except ConfigurationError as exc:
            _error_line(type(exc).__name__, str(exc), USAGE_EXIT)
            rv = USAGE_EXIT
        except (LdaError, ValueError, OSError) as exc:
            _error_line(type(exc).__name__, str(exc), RUNTIME_EXIT)
            rv = RUNTIME_EXIT
        rv = rv if isinstance(rv, int) else 0
        if standalone_mode:
            sys.exit(rv)
        return rv


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _parse_floats(text):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from exc


out_option = click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path),
                          help="Run directory; created if missing.")
config_option = click.option("--config", type=click.Path(dir_okay=False, path_type=Path),
                             help="Config JSON, or a run manifest containing one.")
fpr_option = click.option("--fpr-targets", help="Comma-separated FPR levels, e.g. 0.01,0.005,0.001.")


def run_options(fn):
    """--run / --model / --bank selection of a trained model."""
    fn = click.option("--bank", type=click.Path(dir_okay=False, path_type=Path), help="Bank CSV.")(fn)
    fn = click.option("--model", type=click.Path(dir_okay=False, path_type=Path), help="Model JSON.")(fn)
    fn = click.option("--run", type=click.Path(file_okay=False, path_type=Path),
                      help="Directory written by `train` (model.json, bank.csv, manifest.json).")(fn)
    return fn


@click.group(cls=JsonErrorGroup)
@click.version_option(package_name="artifact")
def main():
    """Multi-prototype live/spoof classification experiments."""


@main.command("gen-data")
@click.option("--spec", default="fig1", show_default=True, help="Built-in spec name or a spec JSON path.")
@click.option("--n", default=2000, show_default=True, type=click.IntRange(min=1), help="Training samples.")
@click.option("--n-dev", type=click.IntRange(min=0), help="Dev samples (default n/2).")
@click.option("--n-test", type=click.IntRange(min=0), help="Test samples (default n/2).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--shift", help="Comma-separated translation applied to every cluster mean.")
@click.option("--std-scale", default=1.0, show_default=True, type=float)
@click.option("--prefix", default="", help="File name prefix, e.g. target_.")
@out_option
def gen_data(spec, n, n_dev, n_test, seed, shift, std_scale, prefix, out):
    """Sample train/dev/test CSVs from a Gaussian mixture spec."""
    _echo_json(pipeline.gen_data(out, spec, n, seed, n_dev, n_test, _parse_floats(shift), std_scale, prefix))


@main.command()
@config_option
@click.option("--data", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Training CSV.")
@click.option("--dev", type=click.Path(dir_okay=False, path_type=Path), help="Dev CSV for the final threshold.")
@click.option("--seed", type=int)
@click.option("--k-init", type=click.IntRange(min=1), help="Initial prototypes per class.")
@click.option("--no-pc-inter", is_flag=True, help="Drop the inter-class center loss.")
@click.option("--no-pc-intra", is_flag=True, help="Drop the intra-class center loss.")
@click.option("--aux", is_flag=True, help="Add the spoof-type and illumination heads.")
@click.option("--t-live", type=float, help="APS threshold for Live (default: median).")
@click.option("--t-spoof", type=float, help="APS threshold for Spoof (default: median).")
@click.option("--epochs", type=click.IntRange(min=1))
@click.option("--lr", type=float)
@fpr_option
@out_option
def train(config, data, dev, seed, k_init, no_pc_inter, no_pc_intra, aux, t_live, t_spoof, epochs, lr,
          fpr_targets, out):
    """Train model and prototype bank; writes model, bank, history and manifest."""
    overrides = {
        "seed": seed,
        "k_init": k_init,
        "use_pc_inter": False if no_pc_inter else None,
        "use_pc_intra": False if no_pc_intra else None,
        "use_aux": True if aux else None,
        "t_live": t_live,
        "t_spoof": t_spoof,
        "epochs": epochs,
        "lr": lr,
        "fpr_targets": _parse_floats(fpr_targets),
    }
    cfg = pipeline.load_config(config, overrides)
    manifest = pipeline.train_run(out, cfg, data, dev)
    _echo_json({"out": str(out), "metrics": manifest["metrics"]})


@main.command("eval")
@run_options
@config_option
@click.option("--dev", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--test", required=True, type=click.Path(dir_okay=False, path_type=Path))
@fpr_option
@out_option
def eval_cmd(run, model, bank, config, dev, test, fpr_targets, out):
    """Pick the ACER threshold on dev and report test metrics."""
    _echo_json(pipeline.eval_run(out, dev, test, run, model, bank, config, _parse_floats(fpr_targets)))


@main.command()
@run_options
@config_option
@click.option("--data", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Samples whose embeddings drive the selection.")
@click.option("--t-live", type=float)
@click.option("--t-spoof", type=float)
@out_option
def aps(run, model, bank, config, data, t_live, t_spoof, out):
    """Prune the bank by adaptive prototype selection."""
    log = pipeline.aps_run(out, data, run, model, bank, config, t_live, t_spoof)
    _echo_json({"counts": log["counts"], "thresholds": log["thresholds"]})


@main.command()
@run_options
@config_option
@click.option("--data", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Labelled target-domain samples.")
@out_option
def adapt(run, model, bank, config, data, out):
    """Append one class-mean prototype per class from target samples."""
    _echo_json(pipeline.adapt_run(out, data, run, model, bank, config))


@main.command()
@config_option
@click.option("--n-trials", default=50, show_default=True, type=click.IntRange(min=0))
@click.option("--tolerance", default=1e-5, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@out_option
def gradcheck(config, n_trials, tolerance, seed, out):
    """Compare analytic loss gradients with central differences."""
    lda = pipeline.load_config(config).lda if config is not None else LdaConfig()
    report = pipeline.gradcheck_run(out, lda, n_trials, tolerance, seed)
    _echo_json(report)
    if not report["passed"]:
        raise click.ClickException(f"gradient check failed: max rel error {report['max_rel_error']:.3e}")


@main.command()
@config_option
@click.option("--only", help="Comma-separated criterion numbers (default: all).")
@out_option
def repro(config, only, out):
    """Run the acceptance experiments and write a summary table."""
    from . import experiments

    if only is not None:
        try:
            criteria = [int(v) for v in only.split(",") if v.strip()]
        except ValueError as exc:
            raise click.BadParameter(f"expected comma-separated integers, got {only!r}") from exc
    elif config is not None:
        criteria = aio.read_json(config).get("criteria")
        if not isinstance(criteria, list):
            raise ConfigurationError(f"{config}: repro manifest needs a 'criteria' list")
    else:
        criteria = list(experiments.CRITERIA)
    unknown = sorted(set(criteria) - set(experiments.CRITERIA))
    if unknown:
        raise ConfigurationError(f"unknown criteria {unknown}; choose from {sorted(experiments.CRITERIA)}")

    results = experiments.run_all(only=criteria, echo=click.echo)
    aio.write_csv(out / "summary.csv", ["criterion", "name", "passed"],
                  [[r.number, r.name, "PASS" if r.passed else "FAIL"] for r in results])
    for r in results:
        if r.columns:
            aio.write_csv(out / f"criterion_{r.number}.csv", r.columns, r.rows)
    # wall-clock numbers live apart from the CSVs so those stay bitwise reproducible
    aio.write_json(out / "timings.json", {f"C{r.number}": {"seconds": r.seconds, "summary": r.summary}
                                          for r in results})
    aio.write_json(out / "manifest.json", {"command": "repro", "criteria": criteria, "backend": _kernels.BACKEND})
    failed = [r.number for r in results if not r.passed]
    if failed:
        raise click.ClickException(f"criteria failed: {failed}")


if __name__ == "__main__":
    main()
