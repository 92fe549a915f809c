# coding: utf-8

# # Energies: what the prompt search actually minimizes
#
# A prompt is scored by differentiable energies (lower is better).  The
# supervised objective mixes a classification term with a fluency term;
# the unsupervised objective mixes a label-balance (entropy) term with a
# domain-likelihood term and can flip its sign.  This demo computes each
# term by hand on a small batch and checks a gradient against finite
# differences.

# In[1]:

import math

import numpy as np

from promptsearch.energies import (
    EnergyConfig,
    domain_nll,
    energy_and_grad,
    entropy_loss,
    fluency_nll,
    supervised_energy,
    task_nll,
    unsupervised_energy,
)
from promptsearch.model import (
    as_soft_prompt,
    label_word_distribution,
    make_reference_model,
)
from promptsearch.synthetic import synthetic_dataset, synthetic_task

model = make_reference_model(seed=0)
task = synthetic_task()
batch = synthetic_dataset(6, seed=3)

print("template:  ", task.template)
print("verbalizer:", task.verbalizer)
for ex in batch[:3]:
    print(f"  [{ex.label}] {ex.text}")


# ## Reading off label probabilities
#
# Classification is verbalizer-restricted: render the prompt + input +
# template cue, take the next-token logits at the last position, and
# normalize over the label words only.

# In[2]:

prompt = as_soft_prompt("fresh fun", model)
dist = label_word_distribution(prompt, batch[0].text, task, model)
for label in task.labels:
    print(f"  p({label} | x) = {dist[label]:.4f}")


# ## Task energy: mean negative log-likelihood of the gold labels

# In[3]:

nll = task_nll(prompt, batch, task, model)
by_hand = np.mean([
    -math.log(label_word_distribution(prompt, ex.text, task, model)[ex.label])
    for ex in batch
])
print(f"task_nll = {nll:.6f}   (hand recount {by_hand:.6f})")


# ## Fluency energy: does the prompt read like model text?
#
# Fluency is the summed next-token NLL along the prompt rows themselves.
# A prompt of common words scores far better than a random token soup.

# In[4]:

for text in ("the movie was good", "category worst boring exciting"):
    p = as_soft_prompt(text, model)
    print(f"  fluency_nll({text!r}) = {fluency_nll(p, model):.3f}")


# ## Entropy energy: label balance over a *group* of inputs
#
# Average the per-example label distributions, then take negated entropy.
# It lives in [-ln|Y|, 0]: minimized when the prompt keeps the two labels
# balanced across the batch, maximized (0) when it collapses to one label.

# In[5]:

ent = entropy_loss(prompt, batch, task, model)
print(f"entropy_loss = {ent:.4f}  (bounds: {-math.log(len(task.labels)):.4f} .. 0)")


# ## Domain energy: does the prompt fit the domain text?
#
# Two parts, one forward pass per example: the prompt's own fluency plus
# the causal NLL of the input and template cue given that prompt.  Lower
# means the prompt both reads naturally and "sets up" the inputs well.
# (On these tiny random reference weights the preferences look arbitrary;
# the structure of the score is what carries over to real models.)

# In[6]:

for text in ("this is a review", "fresh fun", "boring boring boring"):
    p = as_soft_prompt(text, model)
    print(f"  domain_nll({text!r}) = {domain_nll(p, batch, task, model):.3f}")


# ## Mixing terms
#
# Weights must sum to one.  The unsupervised config also carries a sign:
# "intent" minimizes the mixture (balanced, on-domain prompts), "literal"
# maximizes it (the same mixture negated).

# In[7]:

sup = EnergyConfig.supervised(lambda_fluency=0.1)
e_sup = supervised_energy(prompt, batch, task, model, sup)
print("supervised  total:", round(e_sup.total, 4), "terms:",
      {k: round(v, 4) for k, v in e_sup.per_term.items()})

uns = EnergyConfig.unsupervised(lambda_domain=0.25, sign="intent")
lit = EnergyConfig.unsupervised(lambda_domain=0.25, sign="literal")
e_uns = unsupervised_energy(prompt, batch, task, model, uns)
e_lit = unsupervised_energy(prompt, batch, task, model, lit)
print("unsupervised intent total:", round(e_uns.total, 4))
print("unsupervised literal total:", round(e_lit.total, 4), "(negated)")


# ## Gradients, verified
#
# Every energy exposes `grad=True`, returning d(energy)/d(prompt rows).
# Spot-check one coordinate of the supervised gradient with a central
# finite difference.

# In[8]:

from promptsearch.model import SoftPrompt

total, grad = energy_and_grad(prompt, batch, task, model, sup)
eps = 1e-6
bumped = prompt.entries.copy()
bumped[0, 5] += eps
e_plus = supervised_energy(SoftPrompt(entries=bumped.copy()), batch, task,
                           model, sup).total
bumped[0, 5] -= 2 * eps
e_minus = supervised_energy(SoftPrompt(entries=bumped.copy()), batch, task,
                            model, sup).total
print(f"analytic {grad[0, 5]:+.8f}  vs  finite difference "
      f"{(e_plus - e_minus) / (2 * eps):+.8f}")
