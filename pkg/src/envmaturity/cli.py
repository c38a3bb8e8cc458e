"""Command-line entry point.

Exit codes: 0 target reached (or stage succeeded), 1 target not reached,
2 usage error, 3 invalid input document, 4 repository problem, 5 sandbox
failure, 6 decision-provider failure, 7 script failed the syntax check.
"""

from __future__ import annotations

import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import pipeline
from .bashfile import emit_dockerfile, parse, render
from .errors import (EmitError, ReasonerError, RepoIndexError, SandboxError, ScriptedSessionError,
                     ValidationError)
from .maturity import MaturityState
from .pyramid import TestPyramid, build_pyramid
from .report import load_report, summarize
from .repo_index import build_index

EXIT_OK, EXIT_BELOW_TARGET, EXIT_USAGE, EXIT_VALIDATION, EXIT_REPO, EXIT_SANDBOX, EXIT_REASONER, EXIT_EMIT = range(8)

_ERROR_CODES = [
    (ValidationError, EXIT_VALIDATION),
    (RepoIndexError, EXIT_REPO),
    (SandboxError, EXIT_SANDBOX),
    (ReasonerError, EXIT_REASONER),
    (ScriptedSessionError, EXIT_REASONER),
    (EmitError, EXIT_EMIT),
]


def _fail(exc: Exception) -> None:
    for kind, code in _ERROR_CODES:
        if isinstance(exc, kind):
            click.echo(f"error: {exc}", err=True)
            sys.exit(code)
    raise exc


def _run_options(f):
    opts = [
        click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
                     help="YAML or JSON file of run settings; flags override it."),
        click.option("-o", "--output-dir", default=None, help="Directory for setup.sh, Dockerfile and report.json."),
        click.option("--target", "target_level", default=None,
                     type=click.Choice(["installable", "testable", "runnable"]), help="Level needed for exit 0."),
        click.option("--repair-mode", default=None, type=click.Choice([m for m in ("hybrid", "whole-script",
                                                                                    "single-command")])),
        click.option("--no-feedback", "feedback", flag_value=False, default=None,
                     help="Run the script and each test once, without repairs."),
        click.option("--fresh-sandbox-on-rollback", is_flag=True, default=None),
        click.option("--execution-loop-limit", type=click.IntRange(min=1), default=None),
        click.option("--feedback-loop-limit", type=click.IntRange(min=1), default=None),
        click.option("--total-step-limit", type=click.IntRange(min=1), default=None),
        click.option("--escalation-threshold", type=click.IntRange(min=1), default=None),
        click.option("--provider", type=click.Choice(pipeline.PROVIDERS), default=None),
        click.option("--session", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Scripted-session JSON (kinds listed in it are answered from it)."),
        click.option("--model", default=None),
        click.option("--endpoint", default=None, help="Chat-completions URL for the remote provider."),
        click.option("--temperature", type=float, default=None),
        click.option("--simulation", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Simulation table JSON; replaces the container engine."),
        click.option("--engine", default=None, help="Engine endpoint (default: DOCKER_HOST or the local socket)."),
        click.option("--base-image", default=None),
        click.option("--network", type=click.Choice(["enabled", "disabled"]), default=None),
        click.option("--time-limit", type=float, default=None, help="Seconds per script run."),
        click.option("--command-time-limit", type=float, default=None, help="Seconds per test command."),
        click.option("--pyramid-max-rounds", type=click.IntRange(min=1), default=None),
        click.option("--pyramid-file", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Use this pyramid JSON instead of mining one."),
        click.option("--trace", is_flag=True, default=None, help="Print and save the numbered step trace."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _build_config(repo: str, config_file, overrides: dict) -> pipeline.RunConfig:
    data = pipeline.load_config_file(config_file) if config_file else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    data["repo"] = repo
    return pipeline.RunConfig.from_mapping(data)


def _run_one(cfg: pipeline.RunConfig, echo_trace: bool) -> int:
    result = pipeline.run(cfg)
    if echo_trace:
        click.echo(result.report.render_trace(), nl=False)
    click.echo(f"{cfg.repo}: {result.report.final_state.label} -> {cfg.output_dir}")
    return result.exit_code(cfg.target)


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
@click.version_option(package_name="envmaturity")
def main(verbose: int) -> None:
    """Bring a repository to the highest environment maturity it supports."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("repo")
@_run_options
def run(repo, config_file, **overrides):
    """Full pipeline for one repository (local path or clone URL)."""
    try:
        cfg = _build_config(repo, config_file, overrides)
        if not pipeline._URL.match(repo) and not Path(repo).is_dir():
            raise click.UsageError(f"repository path does not exist: {repo}")
        sys.exit(_run_one(cfg, bool(cfg.trace)))
    except click.UsageError:
        raise
    except Exception as exc:  # mapped to documented exit codes
        _fail(exc)


@main.command()
@click.argument("repos", nargs=-1, required=True)
@click.option("--parallel", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--attempts", type=click.IntRange(min=1), default=1, show_default=True,
              help="Independent runs per repository, for pass@k.")
@click.option("-k", "k_values", multiple=True, type=click.IntRange(min=1), help="k for pass@k (repeatable).")
@_run_options
def batch(repos, parallel, attempts, k_values, config_file, **overrides):
    """Run many repositories; writes one report per run plus summary.json."""
    try:
        base_out = Path(overrides.get("output_dir") or "envmaturity-out")
        jobs = []
        used: dict[str, int] = {}
        for repo in repos:
            if not pipeline._URL.match(repo) and not Path(repo).is_dir():
                raise click.UsageError(f"repository path does not exist: {repo}")
            name = pipeline.repo_name(repo)
            used[name] = used.get(name, 0) + 1
            if used[name] > 1:  # same basename from different parents
                name = f"{name}-{used[name]}"
            for i in range(attempts):
                sub = base_out / name
                if attempts > 1:
                    sub = sub / f"attempt-{i + 1}"
                jobs.append(_build_config(repo, config_file, {**overrides, "output_dir": str(sub)}))

        def work(cfg):
            try:
                return pipeline.run(cfg).report
            except (ValidationError, RepoIndexError, SandboxError, ReasonerError, ScriptedSessionError,
                    EmitError) as exc:
                click.echo(f"{cfg.repo}: error: {exc}", err=True)
                return None

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            reports = list(pool.map(work, jobs))
        done = [r for r in reports if r is not None]
        for cfg, r in zip(jobs, reports):
            click.echo(f"{cfg.repo}: {r.final_state.label if r else 'error'}")
        target = jobs[0].target if jobs else MaturityState.RUNNABILITY
        summary = summarize(done, k_values or (1,), target)
        base_out.mkdir(parents=True, exist_ok=True)
        (base_out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
        ok = len(done) == len(jobs) and all(r.final_state >= target for r in done)
        sys.exit(EXIT_OK if ok else EXIT_BELOW_TARGET)
    except click.UsageError:
        raise
    except Exception as exc:
        _fail(exc)


@main.command("pyramid")
@click.argument("repo", type=click.Path())
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="Write JSON here instead of stdout.")
@click.option("--max-rounds", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--provider", type=click.Choice(pipeline.PROVIDERS), default="heuristic", show_default=True)
@click.option("--session", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--endpoint", default=None)
@click.option("--model", default="gpt-4o-mini")
def pyramid_cmd(repo, output, max_rounds, provider, session, endpoint, model):
    """Mine and classify validation commands into a test pyramid."""
    if not Path(repo).is_dir():
        raise click.UsageError(f"repository path does not exist: {repo}")
    try:
        cfg = pipeline.RunConfig(repo=repo, provider=provider, session=session, endpoint=endpoint, model=model)
        build = build_pyramid(build_index(repo), pipeline.make_reasoner(cfg), max_rounds)
        text = build.pyramid.to_json()
        if output:
            Path(output).write_text(text, encoding="utf-8")
        else:
            click.echo(text, nl=False)
    except Exception as exc:
        _fail(exc)


@main.command("bashfile")
@click.argument("repo", type=click.Path())
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@click.option("--dockerfile", type=click.Path(dir_okay=False), default=None)
@click.option("--base-image", default="ubuntu:22.04", show_default=True)
def bashfile_cmd(repo, output, dockerfile, base_image):
    """Emit the initial six-section setup script for a repository."""
    if not Path(repo).is_dir():
        raise click.UsageError(f"repository path does not exist: {repo}")
    try:
        bf = pipeline.initial_bashfile(build_index(repo))
        if output:
            Path(output).write_text(render(bf), encoding="utf-8")
        else:
            click.echo(render(bf), nl=False)
        if dockerfile:
            Path(dockerfile).write_text(emit_dockerfile(bf, base_image), encoding="utf-8")
    except Exception as exc:
        _fail(exc)


@main.command("deploy")
@click.option("--script", "script_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pyramid", "pyramid_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--repo", "repo", type=click.Path(), default=None, help="Repository copied into the sandbox.")
@_run_options
def deploy_cmd(script_path, pyramid_path, repo, config_file, **overrides):
    """Deploy a serialized script and pyramid; writes artifacts and the report."""
    try:
        text = Path(pyramid_path).read_text(encoding="utf-8")
        pyramid = TestPyramid.from_json(text, pyramid_path)
        try:
            bf = parse(Path(script_path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ValidationError(script_path, str(exc)) from exc
        cfg = _build_config(repo or "", config_file, overrides)
        reasoner = pipeline.make_reasoner(cfg)
        bf, report = pipeline.deploy_stage(cfg, bf, pyramid, Path(repo) if repo else None, reasoner,
                                           pipeline.repo_name(repo or script_path))
        pipeline.write_artifacts(Path(cfg.output_dir), bf, report, pyramid, cfg.base_image, bool(cfg.trace))
        if cfg.trace:
            click.echo(report.render_trace(), nl=False)
        click.echo(f"final state: {report.final_state.label}")
        sys.exit(EXIT_OK if report.final_state >= cfg.target else EXIT_BELOW_TARGET)
    except click.UsageError:
        raise
    except Exception as exc:
        _fail(exc)


@main.command("summarize")
@click.argument("reports", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "k_values", multiple=True, type=click.IntRange(min=1))
@click.option("--target", "target_level", default="runnable",
              type=click.Choice(["installable", "testable", "runnable"]), show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def summarize_cmd(reports, k_values, target_level, output):
    """Aggregate report.json files into retention and pass@k figures."""
    try:
        loaded = [load_report(p) for p in reports]
        summary = summarize(loaded, k_values or (1,), MaturityState.from_label(target_level))
        text = summary.to_json()
        if output:
            Path(output).write_text(text, encoding="utf-8")
        click.echo(text, nl=False)
    except Exception as exc:
        _fail(exc)


if __name__ == "__main__":  # pragma: no cover
    main()
