# coding: utf-8

# # Diagnosing a population of prompts
#
# Once a grid of chains has produced candidate prompts, the analysis module
# asks: are the good ones *calibrated* (balanced label marginals)?  Does
# calibration correlate with accuracy?  Do effective prompts use domain
# words more often than random ones?  This demo builds a small population
# and walks through every diagnostic, ending with the one-call report.

# In[1]:

import numpy as np

from promptsearch.analysis import (
    LocalContinuationGenerator,
    diagnostics_report,
    domain_word_frequency,
    generate_continuations,
    label_entropy,
    paired_ttest,
    spearman,
)
from promptsearch.energies import EnergyConfig
from promptsearch.metrics import accuracy
from promptsearch.model import make_reference_model
from promptsearch.sampler import NoiseSchedule, SamplerConfig, run_chain
from promptsearch.synthetic import synthetic_dataset, synthetic_task

model = make_reference_model(seed=22)
task = synthetic_task()
train = synthetic_dataset(200, seed=100)
val = synthetic_dataset(200, seed=101)


# ## A small tuned population
#
# Six short supervised chains, each logging its validation accuracy into
# its record (the report reads stored metrics when present).

# In[2]:

records = []
for seed in range(6):
    cfg = SamplerConfig(eta=0.3, schedule=NoiseSchedule(1.0, 1e-4, 120),
                        steps=120, batch_size=16, seed=seed,
                        energy=EnergyConfig.supervised(0.003),
                        optimizer="adaptive", prompt_length=8)
    rec = run_chain(task, model, cfg, train)
    rec.metrics["accuracy"] = accuracy(rec.final_prompt_text, val, task, model)
    records.append(rec)
    print(f"  seed {seed}: acc={rec.metrics['accuracy']:.3f}  "
          f"{rec.final_prompt_text!r}")


# ## Label entropy of a single prompt
#
# Condition the model on prompt + the task's domain string and measure the
# entropy of the induced label distribution.  ln(2) = 0.693 is perfectly
# balanced; 0 is collapsed onto one label.

# In[3]:

for text in (None, records[0].final_prompt_text, "worst worst worst"):
    ent = label_entropy(text, task, model)
    print(f"  H({text!r}) = {ent:.4f}")


# ## Does calibration predict accuracy?
#
# Spearman rank correlation between per-prompt entropy and accuracy, with
# a t-approximation p-value.  Six points is thin, but it is the same
# statistic the report computes on bigger populations.

# In[4]:

entropies = [label_entropy(r.final_prompt_text, task, model) for r in records]
accs = [r.metrics["accuracy"] for r in records]
rho, p = spearman(entropies, accs)
print(f"spearman rho = {rho:+.3f}  (p = {p:.3f}, n = {len(records)})")


# ## Free-running continuations
#
# Nucleus sampling from the model, seeded and replayable, shows what text
# the model "wants" to write after a prompt.

# In[5]:

gen = LocalContinuationGenerator(model)
conts = generate_continuations(records[0].final_prompt_text, gen, k=3,
                               p=0.9, length=6, seed=4)
for text in conts:
    print("  ...", text)


# ## Domain-word usage
#
# Whole-word, case-insensitive hits of the task's domain vocabulary across
# a prompt and its continuations.

# In[6]:

print("domain words:", task.domain_words)
hits = domain_word_frequency(records[0].final_prompt_text, conts,
                             task.domain_words)
print(f"  {hits} hits in prompt #0 + its {len(conts)} continuations")

# Compare tuned prompts against random-token prompts of the same length
# with a paired t-test (prompt text only, no continuations).

rng = np.random.default_rng(0)
words = [w for w in model.token_text if not w.startswith("<")]
random_prompts = [" ".join(rng.choice(words, size=8)) for _ in records]
tuned_counts = [domain_word_frequency(r.final_prompt_text, [],
                                      task.domain_words) for r in records]
random_counts = [domain_word_frequency(t, [], task.domain_words)
                 for t in random_prompts]
print("tuned counts  :", tuned_counts)
print("random counts :", random_counts)
print("paired t-test p =", round(paired_ttest(tuned_counts, random_counts), 4))


# ## The one-call report
#
# `diagnostics_report` bundles everything: one row per prompt (tuned +
# baselines), an entropy histogram split by source, the entropy-vs-accuracy
# scatter with its Spearman rho, and the domain-frequency comparison for
# *effective* prompts (top quantile by accuracy) against random ones.
# The result is plain JSON-ready data — feed it to any plotting tool.

# In[7]:

report = diagnostics_report(
    records, task, model,
    val_data=val,
    human_prompts=["this movie review was"],
    random_prompts=random_prompts,
    include_empty=True,
    generator=LocalContinuationGenerator(model),
    continuations_per_prompt=2,
    continuation_length=6,
)
print("report keys:", sorted(report))
print("rows:", len(report["prompts"]), "| sources:",
      sorted({r["source"] for r in report["prompts"]}))
print("histogram bins:", len(report["entropy_hist"]["bins"]) - 1,
      "| by source:", sorted(report["entropy_hist"]["by_source"]))
print("scatter points:", len(report["scatter"]))
print("spearman:", report["spearman"])
print("domain_freq:", {k: (round(v, 4) if isinstance(v, float) else v)
                       for k, v in report["domain_freq"].items()})
