"""Command-line entry point.

Exit-code contract: 0 success, 1 validation error, 2 runtime/deploy failure,
3 I/O failure. Data goes to stdout, diagnostics to stderr as a single
machine-parsable line ``error[<Class>]: <message>``. Every subcommand can
emit JSON instead of text via the top-level ``--json`` flag.
"""

from __future__ import annotations

import functools
import json
import math
import sys
from pathlib import Path

import click

from . import analytics
from .catalog import Catalog, ImageRecord, ProvenanceServiceRecord
from .deployer import Deployer, terminal_status
from .engine import load_engine
from .errors import (
    CorruptArchive,
    EngineError,
    IoFailure,
    MissingArtifact,
    ProvForgeError,
    RunFailed,
    SchemaViolation,
)
from .planner import build_plan
from .research_object import build_research_object, verify_research_object
from .workflow import infer_strategy, parse_spec, validate_against_catalog


def _fail(exc: BaseException, code: int) -> None:
    click.echo(f"error[{type(exc).__name__}]: {exc}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RunFailed as exc:
            if exc.record is not None:
                click.echo(exc.record.run_id)
            _fail(exc, 2)
        except EngineError as exc:
            _fail(exc, 2)
        except (IoFailure, MissingArtifact, CorruptArchive) as exc:
            _fail(exc, 3)
        except ProvForgeError as exc:
            _fail(exc, 1)
        except OSError as exc:
            _fail(exc, 3)

    return wrapper


@click.group()
@click.option(
    "--catalog",
    "catalog_path",
    envvar="PROVFORGE_CATALOG",
    type=click.Path(file_okay=False),
    help="Catalog directory (or set PROVFORGE_CATALOG).",
)
@click.option("--json", "as_json", is_flag=True, help="Emit JSON on stdout.")
@click.pass_context
def main(ctx, catalog_path, as_json):
    """Deploy containerized scientific workflows with provenance capture."""
    ctx.obj = {"catalog_path": catalog_path, "json": as_json}


def _catalog(ctx) -> Catalog:
    path = ctx.obj.get("catalog_path")
    if not path:
        raise SchemaViolation("no catalog directory given (use --catalog or PROVFORGE_CATALOG)")
    return Catalog(path)


def _read_json_file(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc}", path) from None


# --- catalog ------------------------------------------------------------------


@main.group("catalog")
def catalog_group():
    """Manage image and provenance-service records."""


@catalog_group.command("add-image")
@click.argument("descriptor", type=click.Path(exists=True, dir_okay=False))
@click.option("--bump", is_flag=True, help="Accept a new digest for an existing name:tag.")
@click.pass_context
@handle_errors
def catalog_add_image(ctx, descriptor, bump):
    doc = _read_json_file(descriptor)
    record = ImageRecord.from_json_dict(doc, Path(descriptor).name)
    if record.definition_ref and not Path(record.definition_ref).is_absolute():
        candidate = Path(descriptor).parent / record.definition_ref
        if candidate.is_file():
            from dataclasses import replace

            record = replace(record, definition_ref=str(candidate.resolve()))
    image_id = _catalog(ctx).register_image(record, bump=bump)
    click.echo(json.dumps({"image_id": image_id}) if ctx.obj["json"] else image_id)


@catalog_group.command("add-prov-service")
@click.argument("descriptor", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@handle_errors
def catalog_add_service(ctx, descriptor):
    doc = _read_json_file(descriptor)
    record = ProvenanceServiceRecord.from_json_dict(doc, Path(descriptor).name)
    service_id = _catalog(ctx).register_prov_service(record)
    click.echo(json.dumps({"service_id": service_id}) if ctx.obj["json"] else service_id)


@catalog_group.command("set-default")
@click.argument("service_name")
@click.pass_context
@handle_errors
def catalog_set_default(ctx, service_name):
    _catalog(ctx).set_default_prov_service(service_name)
    click.echo(json.dumps({"default": service_name}) if ctx.obj["json"] else f"default: {service_name}")


@catalog_group.command("list")
@click.pass_context
@handle_errors
def catalog_list(ctx):
    catalog = _catalog(ctx)
    images = catalog.list_images()
    services = catalog.list_services()
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "images": [r.to_json_dict() for r in images],
                    "services": [s.to_json_dict() for s in services],
                },
                indent=2,
                sort_keys=True,
            )
        )
        return
    for record in images:
        click.echo(f"image   {record.image_id}  {record.digest}")
    for service in services:
        marker = "  [default]" if service.is_default else ""
        click.echo(f"service {service.service_name}  image={service.image}{marker}")


@catalog_group.command("closure")
@click.argument("image")
@click.pass_context
@handle_errors
def catalog_closure(ctx, image):
    closure = _catalog(ctx).resolve_image_closure(image)
    if ctx.obj["json"]:
        click.echo(json.dumps({"closure": closure}))
    else:
        for image_id in closure:
            click.echo(image_id)


# --- deploy --------------------------------------------------------------------


@main.command("deploy")
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--engine",
    "engine_path",
    envvar="PROVFORGE_ENGINE",
    type=click.Path(exists=True, dir_okay=False),
    help="Engine config JSON (or set PROVFORGE_ENGINE).",
)
@click.option("--dry-run", is_flag=True, help="Print the plan without touching the engine.")
@click.option("--no-wrap", is_flag=True, help="Skip research-object generation on success.")
@click.option("--port-base", default=49152, show_default=True, help="Base for auto-assigned host ports.")
@click.pass_context
@handle_errors
def deploy_cmd(ctx, spec_path, engine_path, dry_run, no_wrap, port_base):
    catalog = _catalog(ctx)
    doc = _read_json_file(spec_path)
    spec = parse_spec(doc)
    infer_strategy(spec)
    validate_against_catalog(spec, catalog)
    plan = build_plan(spec, catalog, port_base=port_base)
    if dry_run:
        click.echo(plan.to_json_text(indent=2))
        return
    if not engine_path:
        raise SchemaViolation("no engine config given (use --engine or PROVFORGE_ENGINE)")
    engine = load_engine(engine_path)
    record = Deployer(catalog, engine).deploy(plan, spec_document=spec, no_wrap=no_wrap)
    if ctx.obj["json"]:
        click.echo(json.dumps({"run_id": record.run_id, "outcome": record.outcome.value}))
    else:
        click.echo(record.run_id)


# --- runs ----------------------------------------------------------------------


@main.group("runs")
def runs_group():
    """Inspect recorded runs."""


@runs_group.command("list")
@click.option("--workflow")
@click.option("--strategy")
@click.option("--env", "environment")
@click.option("--outcome")
@click.pass_context
@handle_errors
def runs_list(ctx, workflow, strategy, environment, outcome):
    runs = _catalog(ctx).query_runs(
        workflow=workflow, strategy=strategy, environment=environment, outcome=outcome
    )
    if ctx.obj["json"]:
        click.echo(json.dumps([r.to_json_dict() for r in runs], indent=2, sort_keys=True))
        return
    for run in runs:
        click.echo(
            f"{run.run_id}  {run.workflow_name}  {run.strategy.value}  "
            f"{run.outcome.value}  {run.duration_minutes:.3f}min"
        )


@runs_group.command("show")
@click.argument("run_id")
@click.pass_context
@handle_errors
def runs_show(ctx, run_id):
    record = _catalog(ctx).get_run(run_id)
    click.echo(json.dumps(record.to_json_dict(), indent=2, sort_keys=True))


@runs_group.command("status")
@click.argument("run_id")
@click.pass_context
@handle_errors
def runs_status(ctx, run_id):
    record = _catalog(ctx).get_run(run_id)
    status = terminal_status(record)
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "run_id": status.run_id,
                    "live": status.live,
                    "outcome": status.outcome.value if status.outcome else None,
                    "container_states": status.container_states,
                    "elapsed_ms": status.elapsed_ms,
                },
                sort_keys=True,
            )
        )
        return
    click.echo(f"run {status.run_id}: {status.outcome.value} after {status.elapsed_ms}ms")
    for container, state in sorted(status.container_states.items()):
        click.echo(f"  {container}: {state}")


@runs_group.command("wrap")
@click.argument("run_id")
@click.option("--output", type=click.Path(dir_okay=False), help="Archive path (default: run directory).")
@click.pass_context
@handle_errors
def runs_wrap(ctx, run_id, output):
    catalog = _catalog(ctx)
    record = catalog.get_run(run_id)
    target = Path(output) if output else catalog.run_dir(run_id) / "research_object.provro"
    manifest = build_research_object(record, target, catalog)
    if ctx.obj["json"]:
        click.echo(json.dumps({"archive": str(target), "entries": len(manifest.inventory)}))
    else:
        click.echo(str(target))


@runs_group.command("verify")
@click.argument("archive", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@handle_errors
def runs_verify(ctx, archive):
    report = verify_research_object(archive)
    if ctx.obj["json"]:
        click.echo(json.dumps({"ok": report.ok, "violations": report.violations}, indent=2))
    elif report.ok:
        click.echo("ok")
    else:
        for violation in report.violations:
            click.echo(violation)
    if not report.ok:
        sys.exit(1)


# --- analyze --------------------------------------------------------------------


def _finite(value: float):
    return "Infinity" if math.isinf(value) else value


def _fmt(value: float, places: int = 3) -> str:
    return "inf" if math.isinf(value) else f"{value:.{places}f}"


@main.command("analyze")
@click.option("--workflow", help="Workflow to analyze (recorded runs).")
@click.option("--env", "environment", help="Environment label filter.")
@click.option("--alpha", default=0.05, show_default=True)
@click.option(
    "--summaries",
    "summaries_path",
    type=click.Path(exists=True, dir_okay=False),
    help="JSON file with [{label, mean, std, n}, ...] instead of recorded runs.",
)
@click.pass_context
@handle_errors
def analyze_cmd(ctx, workflow, environment, alpha, summaries_path):
    """Summaries, one-way ANOVA, and Bonferroni post-hoc across strategies."""
    if summaries_path:
        doc = _read_json_file(summaries_path)
        if not isinstance(doc, list):
            raise SchemaViolation("expected a JSON list of group summaries", summaries_path)
        groups = [
            analytics.GroupSummary(
                label=str(g.get("label", f"group{i}")),
                mean=float(g["mean"]),
                std=float(g["std"]),
                n=int(g["n"]),
            )
            for i, g in enumerate(doc)
        ]
    else:
        runs = _catalog(ctx).query_runs(
            workflow=workflow, environment=environment, outcome="succeeded"
        )
        groups = analytics.summarize_runs(runs)

    result = analytics.anova_one_way(groups, alpha)
    p_value = analytics.anova_p_value(result)
    posthoc = analytics.bonferroni_posthoc(groups, alpha)

    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "groups": [
                        {
                            "label": label,
                            "mean": result.group_means[label],
                            "std": result.group_stds[label],
                        }
                        for label in sorted(result.group_means)
                    ],
                    "anova": {**result.to_json_dict(), "p_value": p_value},
                    "posthoc": [c.to_json_dict() for c in posthoc],
                },
                indent=2,
                sort_keys=True,
            )
        )
        return

    click.echo(f"{'Strategy':<24} {'mean(min)':>10} {'std(min)':>10} {'n':>4}")
    sizes = {(_g.strategy if isinstance(_g, analytics.StrategySample) else _g.label): _g.n for _g in groups}
    for label in sorted(result.group_means):
        click.echo(
            f"{label:<24} {result.group_means[label]:>10.3f} "
            f"{result.group_stds[label]:>10.3f} {sizes[label]:>4}"
        )
    verdict = "significant difference" if result.reject_null else "no significant difference"
    click.echo(
        f"One-way ANOVA: F={_fmt(result.f_statistic)} "
        f"df=({result.df_between},{result.df_within}) alpha={result.alpha} "
        f"critical={result.critical_value:.3f} p={p_value:.4f}"
    )
    click.echo(f"-> {verdict} between strategies")
    if posthoc:
        click.echo(
            f"Bonferroni post-hoc (family alpha {alpha}, per-test alpha "
            f"{posthoc[0].per_test_alpha:.4f}):"
        )
        for comparison in posthoc:
            mark = "significant" if comparison.significant else "not significant"
            click.echo(
                f"  {comparison.pair[0]} vs {comparison.pair[1]}: "
                f"t={_fmt(comparison.t_statistic)} p={comparison.p_value:.5f} -> {mark}"
            )


if __name__ == "__main__":
    main()
