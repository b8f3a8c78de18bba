"""Command-line entry point.

Subcommands: ``run`` executes a batch of episodes against a configured
environment and backend and persists one artifact per task plus a manifest;
``analyze`` and ``ablate`` compute reports over persisted artifacts;
``gen-sandbox`` and ``build-index`` produce the data files the environments
consume.  Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analytics, itinerary, persist, retrieval, textworld
from .core import EngineConfig, OperatorFailure, Predicate, Task, ValidationVerdict, run_episode
from .llm import LlmClient, LlmEndpoint
from .operators import tolerant_parse
from .retrieval import HopFinding, HopPlanSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

ENVIRONMENTS = ("constraint", "textworld", "multihop")
BACKENDS = ("scripted", "deterministic", "llm")

MANIFEST_FORMAT_VERSION = 1


class ConfigError(Exception):
    pass


class IoError(Exception):
    pass


CONFIG_DEFAULTS = {
    "environment": "constraint",
    "backend": "deterministic",
    "seed": 0,
    "workers": 1,
    "engine": {
        "attempt_budget": 0,   # 0 means: use the environment's defaults
        "max_replans": -1,
        "global_step_cap": 0,
        "plan_length_cap": 50,
    },
    "paths": {
        "tasks": "",
        "data": "",
        "output": "runs",
    },
    "llm": {
        "endpoint": "",
        "model": "",
        "key_env": "",
    },
}


def _flatten(prefix: str, tree: dict, out: dict) -> dict:
    for key, value in tree.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            _flatten(name, value, out)
        else:
            out[name] = value
    return out


def _assign(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def load_run_config(config_path: str | None, overrides: dict) -> dict:
    """Merge defaults, the declarative config file, and CLI flag overrides."""
    config = json.loads(json.dumps(CONFIG_DEFAULTS))
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {config_path}")
        try:
            body = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        for dotted, value in _flatten("", body, {}).items():
            _assign(config, dotted, value)
    for dotted, value in overrides.items():
        if value is not None:
            _assign(config, dotted, value)
    _validate_run_config(config)
    return config


def _validate_run_config(config: dict) -> None:
    if config["environment"] not in ENVIRONMENTS:
        raise ConfigError(f"environment must be one of {ENVIRONMENTS}")
    if config["backend"] not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}")
    if config["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    if not config["paths"]["data"]:
        raise ConfigError("paths.data is required (sandbox, world, or corpus file)")
    if not Path(config["paths"]["data"]).exists():
        raise ConfigError(f"paths.data does not exist: {config['paths']['data']}")
    if config["environment"] in ("textworld", "multihop"):
        tasks = config["paths"]["tasks"]
        if not tasks:
            raise ConfigError(f"paths.tasks is required for the {config['environment']} environment")
        if not Path(tasks).exists():
            raise ConfigError(f"paths.tasks does not exist: {tasks}")
    if config["backend"] == "llm":
        llm = config["llm"]
        if not (llm["endpoint"] and llm["model"] and llm["key_env"]):
            raise ConfigError("backend=llm requires llm.endpoint, llm.model, and llm.key_env")
        if not os.environ.get(llm["key_env"]):
            raise ConfigError(f"environment variable {llm['key_env']!r} is not set")
    elif config["environment"] == "constraint" and config["backend"] == "scripted":
        raise ConfigError("the constraint environment uses the deterministic or llm backend")


def _engine_config(config: dict, default: EngineConfig) -> EngineConfig:
    engine = config["engine"]
    return EngineConfig(
        attempt_budget=engine["attempt_budget"] or default.attempt_budget,
        max_replans=engine["max_replans"] if engine["max_replans"] >= 0 else default.max_replans,
        global_step_cap=engine["global_step_cap"] or default.global_step_cap,
        plan_length_cap=engine["plan_length_cap"] or default.plan_length_cap,
    )


def _llm_client(config: dict) -> LlmClient:
    llm = config["llm"]
    return LlmClient(LlmEndpoint(url=llm["endpoint"], model=llm["model"],
                                 api_key_env=llm["key_env"]))


def _llm_chooser(client: LlmClient):
    def chooser(options):
        listing = "\n".join(
            f"{i}: {o.id} (cost {o.cost})" for i, o in enumerate(options))
        text = client.complete([{
            "role": "user",
            "content": ("Pick exactly one option by its number.\n"
                        f"{listing}\n"
                        'Respond with JSON only: {"choice": <number>}'),
        }])
        return tolerant_parse(text, {"choice": int})["choice"]
    return chooser


# ---------------------------------------------------------------------------
# run


def _run_constraint(config: dict):
    sandbox, specs = itinerary.load_sandbox(config["paths"]["data"])
    engine = _engine_config(config, itinerary.ITINERARY_ENGINE_DEFAULTS)
    chooser = itinerary.cheapest_chooser
    if config["backend"] == "llm":
        chooser = _llm_chooser(_llm_client(config))

    def episode(spec):
        env = itinerary.ItineraryEnvironment(sandbox, spec)
        ops = itinerary.itinerary_operator_set(env, chooser=chooser)
        goal = itinerary.build_constraint_plan(spec).predicates[-1]
        return run_episode(engine, ops, env, Task(task_id=spec.spec_id, goal=goal))

    return [(spec.spec_id, episode, spec) for spec in specs]


def _load_textworld_tasks(path: str) -> list[dict]:
    body = json.loads(Path(path).read_text())
    return body["tasks"]


def _scenario_from_task(task_body: dict) -> textworld.TextWorldScenario:
    def predicate(entry: dict) -> Predicate:
        return Predicate(id=entry["id"], text=entry["text"],
                         kind=entry.get("kind", ""), is_goal=entry.get("is_goal", False))

    predicates = tuple(predicate(e) for e in task_body["predicates"])
    conditions = {e["id"]: e["condition"] for e in task_body["predicates"] if "condition" in e}
    actions = {e["id"]: e.get("action", "look") for e in task_body["predicates"]}
    replans = {}
    for stuck_id, entries in task_body.get("replans", {}).items():
        replans[stuck_id] = tuple(predicate(e) for e in entries)
        for entry in entries:
            if "condition" in entry:
                conditions[entry["id"]] = entry["condition"]
            actions[entry["id"]] = entry.get("action", "look")
    return textworld.TextWorldScenario(
        predicates=predicates, conditions=conditions, actions=actions, replans=replans)


def _run_textworld(config: dict):
    world = textworld.load_world(config["paths"]["data"])
    tasks = _load_textworld_tasks(config["paths"]["tasks"])
    engine = _engine_config(config, textworld.TEXTWORLD_ENGINE_DEFAULTS)
    llm_backend = None
    if config["backend"] == "llm":
        client = _llm_client(config)

        def llm_backend(plan_tail, observation):
            tail_text = "\n".join(f"{i + 1}. {p.text}" for i, p in enumerate(plan_tail))
            text = client.complete([{
                "role": "user",
                "content": ("Count how many of these conditions, in order from the top, "
                            f"hold after the observation.\nConditions:\n{tail_text}\n"
                            f"Observation: {observation.rendered}\n"
                            'Respond with JSON only: {"k": <count>, "reason": "<why>"}'),
            }])
            record = tolerant_parse(text, {"k": int, "reason": str})
            return ValidationVerdict(k=max(0, record["k"]), reason=record["reason"])

    def make_episode(task_body):
        scenario = _scenario_from_task(task_body)

        def episode(_):
            env = textworld.TextWorldEnvironment(world)
            ops = textworld.textworld_operator_set(env, scenario, backend=llm_backend)
            return run_episode(engine, ops, env,
                               Task(task_id=task_body["task_id"], goal=scenario.goal()))
        return episode

    return [(t["task_id"], make_episode(t), t) for t in tasks]


def scripted_verifier(finding: HopFinding, paragraph) -> bool:
    """Deterministic support test: at least half of the finding's content
    words (and the minimum of one) occur in the paragraph text."""
    words = set(retrieval._content_words(finding.finding_text))
    if not words:
        return False
    text_words = set(retrieval.tokenize(paragraph.text))
    return len(words & text_words) * 2 >= len(words)


def _run_multihop(config: dict):
    data_path = config["paths"]["data"]
    if data_path.endswith(".jsonl"):
        corpus = retrieval.load_corpus_jsonl(data_path)
        index = retrieval.build_index(corpus)
    else:
        index = retrieval.load_index(data_path)
    tasks = json.loads(Path(config["paths"]["tasks"]).read_text())["tasks"]

    llm_client = _llm_client(config) if config["backend"] == "llm" else None

    def make_episode(task_body):
        plan_spec = HopPlanSpec(
            question=task_body["question"],
            sub_questions=tuple(task_body["sub_questions"]),
            strict=task_body.get("strict", False),
            task_id=task_body["task_id"],
        )
        defaults = (retrieval.TWO_HOP_ENGINE_DEFAULTS if plan_spec.hop_count == 2
                    else retrieval.MULTI_HOP_ENGINE_DEFAULTS)
        engine = _engine_config(config, defaults)
        findings = {
            f["sub_question"]: HopFinding(
                sub_question=f["sub_question"], cited_title=f["cited_title"],
                finding_text=f["finding_text"], bridge_entity=f.get("bridge_entity"))
            for f in task_body.get("findings", [])
        }

        if llm_client is not None:
            def finding_for(sub_q, state):
                prior = "\n".join(
                    f"- {f.sub_question} -> {f.finding_text}" for f in state.findings)
                text = llm_client.complete([{
                    "role": "user",
                    "content": (f"Sub-question: {sub_q}\n"
                                f"Certified findings so far:\n{prior or '(none)'}\n"
                                "Extract the finding and name the paragraph that supports it.\n"
                                'Respond with JSON only: {"cited_title": "...", '
                                '"finding_text": "...", "bridge_entity": "..."}'),
                }])
                record = tolerant_parse(text, {"cited_title": str, "finding_text": str,
                                               "bridge_entity": str})
                return HopFinding(sub_question=sub_q, **record)

            def guesser(sub_q):
                text = llm_client.complete([{
                    "role": "user",
                    "content": (f"Guess the most likely short answer to: {sub_q}\n"
                                'Respond with JSON only: {"guess": "..."}'),
                }])
                return tolerant_parse(text, {"guess": str})["guess"]
        else:
            def finding_for(sub_q, state):
                return findings[sub_q]

            guesser = None

        answer = task_body.get("answer")

        def episode(_):
            env = retrieval.MultihopEnvironment(index=index, top_k=_top_k(config))
            ops = retrieval.multihop_operator_set(
                env, plan_spec, finding_for, scripted_verifier,
                answer_for=(lambda state: answer) if answer is not None else None,
                guesser=guesser)
            goal = retrieval.build_hop_plan(plan_spec).predicates[-1]
            return run_episode(engine, ops, env,
                               Task(task_id=plan_spec.task_id, goal=goal))
        return episode

    return [(t["task_id"], make_episode(t), t) for t in tasks]


def _top_k(config: dict) -> int:
    return int(config.get("top_k", retrieval.DEFAULT_TOP_K))


def cmd_run(args) -> int:
    overrides = {name: getattr(args, name.replace(".", "__"), None)
                 for name in _flatten("", CONFIG_DEFAULTS, {})}
    config = load_run_config(args.config, overrides)

    if config["environment"] == "constraint":
        episodes = _run_constraint(config)
    elif config["environment"] == "textworld":
        episodes = _run_textworld(config)
    else:
        episodes = _run_multihop(config)

    output_dir = Path(config["paths"]["output"])
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory: {exc}") from exc

    def run_one(entry):
        task_id, episode, payload = entry
        try:
            artifact = episode(payload)
            status = "goal_certified" if artifact.goal_certified else "failed"
            return task_id, status, artifact
        except OperatorFailure as exc:
            return task_id, "operator_failure", exc.artifact

    if config["workers"] > 1:
        with ThreadPoolExecutor(max_workers=config["workers"]) as pool:
            results = list(pool.map(run_one, episodes))
    else:
        results = [run_one(entry) for entry in episodes]

    artifacts = [artifact for _, _, artifact in results if artifact is not None]
    try:
        persist.write_artifacts(output_dir / "artifacts.jsonl", artifacts)
        manifest = {
            "format_version": MANIFEST_FORMAT_VERSION,
            "environment": config["environment"],
            "backend": config["backend"],
            "seed": config["seed"],
            "engine": config["engine"],
            "tasks": [
                {"task_id": task_id, "status": status,
                 "artifact_written": artifact is not None}
                for task_id, status, artifact in results
            ],
        }
        (output_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise IoError(f"failed writing outputs: {exc}") from exc

    produced = sum(1 for _, _, artifact in results if artifact is not None)
    print(f"ran {len(results)} task(s); {produced} artifact(s) written to {output_dir}")
    return EXIT_OK if produced == len(results) else EXIT_IO


# ---------------------------------------------------------------------------
# analyze / ablate


def _read_artifact_dir(path_text: str):
    path = Path(path_text)
    if path.is_file():
        files = [path]
    elif path.is_dir():
        files = sorted(path.glob("*.jsonl"))
    else:
        raise IoError(f"no such path: {path_text}")
    artifacts = []
    for file in files:
        try:
            artifacts.extend(persist.read_artifacts(file))
        except (OSError, json.JSONDecodeError, persist.PersistError) as exc:
            raise IoError(f"failed reading {file}: {exc}") from exc
    if not artifacts:
        raise analytics.NoArtifacts(f"no artifacts found under {path_text}")
    return artifacts


def cmd_analyze(args) -> int:
    artifacts = _read_artifact_dir(args.artifacts)
    labels = None
    if args.labels:
        try:
            labels = json.loads(Path(args.labels).read_text())
        except OSError as exc:
            raise IoError(f"cannot read labels: {exc}") from exc
    report = analytics.anatomy(artifacts, ground_truth=labels)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(analytics.report_to_jsonable(report), indent=2, sort_keys=True))
    text = analytics.report_to_text(report)
    (out_dir / "report.txt").write_text(text)
    if args.csv:
        with open(out_dir / "report.csv", "w", newline="") as handle:
            csv.writer(handle).writerows(analytics.report_to_csv_rows(report))
    print(text)
    return EXIT_OK


def cmd_ablate(args) -> int:
    artifacts = _read_artifact_dir(args.artifacts)
    try:
        scores = json.loads(Path(args.scores).read_text())
    except OSError as exc:
        raise IoError(f"cannot read scores: {exc}") from exc
    rows = []
    for artifact in artifacts:
        if artifact.task_id not in scores:
            raise analytics.ScoreMismatch(f"no score for task {artifact.task_id!r}")
        for estimate in analytics.ablation_estimates(artifact, float(scores[artifact.task_id])):
            rows.append({
                "task_id": artifact.task_id,
                "mechanism": estimate.mechanism,
                "original_score": estimate.original_score,
                "conversion_factor": estimate.conversion_factor,
                "estimated_score": estimate.estimated_score,
            })
    aggregates = {}
    for mechanism in analytics.MECHANISMS:
        subset = [r for r in rows if r["mechanism"] == mechanism]
        aggregates[mechanism] = {
            "mean_original": sum(r["original_score"] for r in subset) / len(subset),
            "mean_estimated": sum(r["estimated_score"] for r in subset) / len(subset),
        }
    body = {"rows": rows, "aggregates": aggregates,
            "caveat": analytics.REPLAY_OPTIMISM_CAVEAT}

    lines = [f"{'task':<24}{'mechanism':<12}{'orig':>8}{'factor':>8}{'est':>8}"]
    for row in rows:
        lines.append(f"{row['task_id']:<24}{row['mechanism']:<12}"
                     f"{row['original_score']:>8.2f}{row['conversion_factor']:>8.3f}"
                     f"{row['estimated_score']:>8.2f}")
    for mechanism, agg in aggregates.items():
        lines.append(f"{'MEAN':<24}{mechanism:<12}{agg['mean_original']:>8.2f}"
                     f"{'':>8}{agg['mean_estimated']:>8.2f}")
    lines.append(f"note: {analytics.REPLAY_OPTIMISM_CAVEAT}")
    text = "\n".join(lines)

    if args.output:
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.json").write_text(json.dumps(body, indent=2, sort_keys=True))
        (out_dir / "ablation.txt").write_text(text)
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen-sandbox / build-index


def cmd_gen_sandbox(args) -> int:
    params = itinerary.SandboxParams(
        cities=args.cities, options_per_table=args.options_per_table,
        spec_count=args.specs)
    try:
        sandbox, specs = itinerary.generate_sandbox(args.seed, params)
    except itinerary.GenerationInfeasible as exc:
        raise ConfigError(str(exc)) from exc
    try:
        itinerary.save_sandbox(args.output, sandbox, specs)
    except OSError as exc:
        raise IoError(f"cannot write sandbox: {exc}") from exc
    print(f"wrote sandbox with {len(specs)} solvable spec(s) to {args.output}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        raise ConfigError(f"corpus not found: {args.corpus}")
    try:
        corpus = retrieval.load_corpus_jsonl(corpus_path)
        index = retrieval.build_index(corpus)
        retrieval.save_index(index, args.output)
    except OSError as exc:
        raise IoError(f"index build failed: {exc}") from exc
    except retrieval.RetrievalError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"indexed {len(index)} paragraph(s) into {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plancert",
        description="Run certified predicate-plan episodes and analyze their artifacts.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a batch of episodes")
    run.add_argument("--config", default=None, help="declarative JSON config file")
    for dotted, default in _flatten("", CONFIG_DEFAULTS, {}).items():
        flag = f"--{dotted}"
        dest = dotted.replace(".", "__")
        if isinstance(default, int) and not isinstance(default, bool):
            run.add_argument(flag, dest=dest, type=int, default=None)
        else:
            run.add_argument(flag, dest=dest, default=None)
    run.set_defaults(func=cmd_run)

    analyze = sub.add_parser("analyze", help="anatomy report over artifacts")
    analyze.add_argument("artifacts", help="artifact file or directory of .jsonl files")
    analyze.add_argument("--labels", default=None, help="JSON file: task_id -> correct?")
    analyze.add_argument("--output", default="reports")
    analyze.add_argument("--csv", action="store_true", help="also emit plot-ready CSV")
    analyze.set_defaults(func=cmd_analyze)

    ablate = sub.add_parser("ablate", help="replay-based ablation estimates")
    ablate.add_argument("artifacts")
    ablate.add_argument("scores", help="JSON file: task_id -> score")
    ablate.add_argument("--output", default=None)
    ablate.set_defaults(func=cmd_ablate)

    gen = sub.add_parser("gen-sandbox", help="generate a synthetic itinerary sandbox")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--cities", type=int, default=4)
    gen.add_argument("--options-per-table", type=int, default=20)
    gen.add_argument("--specs", type=int, default=10)
    gen.add_argument("--output", default="sandbox.json")
    gen.set_defaults(func=cmd_gen_sandbox)

    index = sub.add_parser("build-index", help="build a retrieval index from JSONL")
    index.add_argument("--corpus", required=True)
    index.add_argument("--output", default="index.json")
    index.set_defaults(func=cmd_build_index)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (analytics.ScoreMismatch, analytics.LabelMismatch) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, analytics.NoArtifacts) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
