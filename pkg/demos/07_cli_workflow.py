# coding: utf-8

# # The command-line workflow: tune, eval, analyze
#
# Everything the library does is also scriptable from the shell.  `tune`
# runs a seed/hyperparameter grid of chains and writes one JSON record per
# chain plus a manifest with content hashes; `eval` appends metrics to
# those records; `analyze` turns a directory of records into the
# diagnostics report.  This demo drives all three through `python -m`
# inside a temporary directory.

# In[1]:

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from promptsearch.synthetic import synthetic_dataset

workdir = Path(tempfile.mkdtemp(prefix="promptsearch-demo-"))
print("working in", workdir)


def jsonl(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"text": ex.text, "label": ex.label}) + "\n")


jsonl(workdir / "train.jsonl", synthetic_dataset(40, seed=0))
jsonl(workdir / "val.jsonl", synthetic_dataset(20, seed=1))


def run(*args):
    cmd = [sys.executable, "-m", "promptsearch.cli", *args]
    print("\n$", "promptsearch", *args)
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout.rstrip())
    if proc.returncode != 0:
        print(proc.stderr.rstrip())
        raise SystemExit(proc.returncode)


# ## tune: a tiny 2-eta x 2-seed grid
#
# Four chains, each fully determined by (task, model spec, config, seed).

# In[2]:

chains = workdir / "chains"
run("tune",
    "--task", "synthetic-2label",
    "--data", str(workdir / "train.jsonl"),
    "--out-dir", str(chains),
    "--steps", "80", "--m", "6", "--batch-size", "8",
    "--eta", "0.3,0.5", "--seeds", "2",
    "--model", "reference:22")

manifest = json.loads((chains / "manifest.json").read_text())
print("\nmanifest task:", manifest["task_id"], "| model:", manifest["model"])
for entry in manifest["chains"]:
    print("  ", entry["file"], entry["sha256"][:12] + "...")


# ## eval: score every record against held-out data
#
# Accuracy and prompt perplexity land inside each record; Dist-1 is a
# set-level number over all final prompts, stored alongside.

# In[3]:

run("eval",
    "--task", "synthetic-2label",
    "--chains", str(chains),
    "--data", str(workdir / "val.jsonl"),
    "--model", "reference:22")

one = json.loads(next(iter(sorted(chains.glob("chain_*.json")))).read_text())
print("\nmetrics of first record:",
      {k: round(v, 4) for k, v in one["metrics"].items()})


# ## analyze: the diagnostics report
#
# Tuned prompts from the records, plus human/random baselines generated on
# the spot, with model continuations for the domain-word counts.

# In[4]:

(workdir / "human.txt").write_text("this movie review was\n")

run("analyze",
    "--task", "synthetic-2label",
    "--chains", str(chains),
    "--data", str(workdir / "val.jsonl"),
    "--model", "reference:22",
    "--human-prompts", str(workdir / "human.txt"),
    "--include-empty",
    "--continuations", "2", "--continuation-length", "6",
    "--report", str(workdir / "report.json"))

report = json.loads((workdir / "report.json").read_text())
print("\nreport rows:", len(report["prompts"]),
      "| spearman:", report["spearman"])
