#!/usr/bin/env python3
"""End-to-end demo on generated data, no network required.

Builds a tiny warehouse-inventory corpus, two mock systems that each know
half of the answers, and an ensemble mock that extracts the correct answer
from whichever system produced it. Then drives the CLI through
index -> run -> ensemble -> eval -> preference and prints where the
artifacts landed.

Usage: python3 scripts/demo_mock_run.py [workdir]
"""

import json
import sys
import tempfile
from pathlib import Path

from ragweld.cli import main

METALS = ["copper", "iron", "zinc", "tin", "nickel", "cobalt"]


def write_jsonl(path: Path, rows) -> None:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def build_workspace(workdir: Path) -> Path:
    corpus = [
        {
            "id": f"d{i:02d}",
            "title": f"Bay {i:02d} inventory",
            "contents": f"bay {i:02d} holds {metal} ingots.",
        }
        for i, metal in enumerate(METALS, start=1)
    ]
    questions = [
        {
            "id": f"q{i:02d}",
            "question": f"Which metal sits in bay {i:02d}?",
            "golden_answers": [metal],
            "task_type": "single_hop",
        }
        for i, metal in enumerate(METALS, start=1)
    ]
    write_jsonl(workdir / "corpus.jsonl", corpus)
    write_jsonl(workdir / "questions.jsonl", questions)

    # system A knows the odd bays, system B the even ones
    def system_script(known: list[int]) -> list[dict]:
        rules = [
            {"pattern": f"bay {i:02d}?", "response": METALS[i - 1]}
            for i in known
        ]
        return rules + [{"default": "unknown"}]

    (workdir / "script_a.json").write_text(json.dumps(system_script([1, 3, 5]), indent=2))
    (workdir / "script_b.json").write_text(json.dumps(system_script([2, 4, 6]), indent=2))

    # the ensemble mock spots the correct answer inside the fused evidence
    ensemble_rules = [
        {"pattern": f"Answer: {metal}\n", "response": f"<answer>\\boxed{{{metal}}} </answer>"}
        for metal in METALS
    ] + [{"default": "unknown"}]
    (workdir / "script_e.json").write_text(json.dumps(ensemble_rules, indent=2))

    config = {
        "corpus_path": "corpus.jsonl",
        "dataset_path": "questions.jsonl",
        "backends": {
            "a": {"model_id": "mock-a", "mock_script": "script_a.json"},
            "b": {"model_id": "mock-b", "mock_script": "script_b.json"},
            "e": {"model_id": "mock-e", "mock_script": "script_e.json"},
        },
        "systems": [
            {"system_id": "odd_bays", "pipeline": "standard", "backend_id": "a",
             "retriever_id": "bm25", "k": 2},
            {"system_id": "even_bays", "pipeline": "standard", "backend_id": "b",
             "retriever_id": "bm25", "k": 2},
        ],
        "ensemble": {"backend_id": "e", "mode": "generation"},
        "output_dir": "runs",
    }
    config_path = workdir / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config_path


def run() -> int:
    if len(sys.argv) > 1:
        workdir = Path(sys.argv[1])
        workdir.mkdir(parents=True, exist_ok=True)
    else:
        workdir = Path(tempfile.mkdtemp(prefix="ragweld-demo-"))
    config = build_workspace(workdir)
    flags = ["--config", str(config), "--run-id", "demo"]
    # `run` insists on a fresh directory, so the index stats get their own id
    steps = [
        ("index", ["--config", str(config), "--run-id", "demo-index"]),
        ("run", flags),
        ("ensemble", flags),
        ("eval", flags),
        ("preference", flags),
    ]
    for command, args in steps:
        print(f"\n=== ragweld {command} ===")
        code = main([command, *args])
        if code != 0:
            print(f"{command} exited with {code}", file=sys.stderr)
            return code
    print(f"\nArtifacts: {workdir / 'runs' / 'demo'}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
