"""Command line: ``seqbench {gen,run,score,report,serve}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from seqbench.agents import agent_from_spec, agent_spec
from seqbench.envs import EnvKind, Mode
from seqbench.runner import RunConfig, run_testset
from seqbench.scoring import load_run, report_csv, report_text, score_csv, write_run
from seqbench.service import serve
from seqbench.testgen import generate_testset, load_testset, save_testset, testset_digest


def _kind(text: str) -> EnvKind:
    for k in EnvKind:
        if text.lower() in (k.value.lower(), k.name.lower()):
            return k
    raise argparse.ArgumentTypeError(f"unknown environment {text!r}")


def _mode(text: str) -> Mode:
    try:
        return Mode(text.upper())
    except ValueError:
        raise argparse.ArgumentTypeError("mode must be easy or hard") from None


def cmd_gen(args) -> int:
    testset = generate_testset(args.kind, args.mode, args.seed, args.count)
    save_testset(testset, args.output)
    print(f"wrote {len(testset)} {args.kind.value} {args.mode.value} cases to {args.output}")
    return 0


def cmd_run(args) -> int:
    testset = load_testset(args.testset)
    cases = testset.cases[: args.limit] if args.limit else testset.cases
    chat = {}
    if args.agent == "chat":
        if not args.endpoint or not args.model:
            raise ValueError("--agent chat needs --endpoint and --model")
        chat = dict(endpoint=args.endpoint, model=args.model, token_env=args.token_env,
                    temperature=args.temperature, max_tokens=args.max_tokens,
                    timeout=args.timeout, retries=args.retries)
    agent = agent_from_spec(args.agent, seed=args.agent_seed, p_follow=args.p_follow,
                            k=args.invalid_after, **chat)
    config = RunConfig(ice=args.ice, teacher_guided=args.teacher_guided, budget=args.budget,
                       strict_parse=args.strict_parse)
    transcripts = run_testset(agent, cases, config, args.parallelism, donors=testset.cases)
    ref = {"path": str(args.testset), "sha256": testset_digest(testset), "kind": testset.kind.value,
           "mode": testset.mode.value, "count": len(cases)}
    manifest = write_run(args.output, transcripts, ref, agent_spec(agent), config.to_dict())
    print(report_text([manifest]), end="")
    if manifest["aborted"]:
        print(f"{len(manifest['aborted'])} episode(s) aborted by transport errors", file=sys.stderr)
    return 0


def cmd_score(args) -> int:
    _, transcripts = load_run(args.run)
    text = score_csv(transcripts)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def cmd_report(args) -> int:
    manifests = [load_run(p)[0] for p in args.runs]
    print(report_text(manifests), end="")
    if args.csv:
        Path(args.csv).write_text(report_csv(manifests), encoding="utf-8")
    return 0


def cmd_serve(args) -> int:
    serve(args.host, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqbench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a test set")
    g.add_argument("--kind", type=_kind, required=True)
    g.add_argument("--mode", type=_mode, default=Mode.EASY)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=None, help="default: 400 (easy) / 1500 (hard)")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="evaluate an agent on a test set")
    r.add_argument("--testset", required=True)
    r.add_argument("--agent", default="oracle",
                   choices=["oracle", "random", "noisy", "invalid-after", "silent", "chat"])
    r.add_argument("--agent-seed", type=int, default=0)
    r.add_argument("--p-follow", type=float, default=0.8)
    r.add_argument("--invalid-after", type=int, default=0)
    r.add_argument("--endpoint")
    r.add_argument("--model")
    r.add_argument("--token-env", default="OPENAI_API_KEY",
                   help="environment variable holding the bearer token")
    r.add_argument("--temperature", type=float, default=0.0)
    r.add_argument("--max-tokens", type=int, default=256)
    r.add_argument("--timeout", type=float, default=60.0)
    r.add_argument("--retries", type=int, default=4)
    r.add_argument("--ice", type=int, default=0)
    r.add_argument("--teacher-guided", action="store_true")
    r.add_argument("--budget", type=int, default=None)
    r.add_argument("--strict-parse", action="store_true")
    r.add_argument("--parallelism", type=int, default=1)
    r.add_argument("--limit", type=int, default=None, help="only the first N cases")
    r.add_argument("-o", "--output", required=True, help="run directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="recompute per-episode metrics from transcripts")
    s.add_argument("run", help="run directory or manifest.json")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_score)

    rp = sub.add_parser("report", help="tabulate one or more runs")
    rp.add_argument("runs", nargs="+")
    rp.add_argument("--csv")
    rp.set_defaults(func=cmd_report)

    sv = sub.add_parser("serve", help="start the HTTP session service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8765)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"seqbench {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
