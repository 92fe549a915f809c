# coding: utf-8

# # From soft prompts to real tokens: nearest-neighbour projection
#
# Gradient steps move prompt vectors continuously, but a usable prompt must
# consist of actual vocabulary rows.  The bridge is Euclidean projection:
# snap every row of a soft prompt to its nearest embedding-table row.  This
# demo shows the projection operator, its tie-breaking rule, idempotence,
# and how to keep special tokens out of search.

# In[1]:

import numpy as np

from promptsearch.model import SoftPrompt, make_reference_model
from promptsearch.projection import allowed_token_ids, project, project_subset

model = make_reference_model(seed=0)
table = model.embedding_table()
rng = np.random.default_rng(7)


# Start from a random continuous prompt of four rows.  It has no token ids
# yet — it is just a (4, dim) array.

# In[2]:

soft = SoftPrompt(entries=rng.normal(size=(4, model.dim)) * 0.3)
print("token ids before projection:", soft.token_ids)


# In[3]:

hard = project(soft, table)
print("token ids after projection:", hard.token_ids)
print("as text:", " ".join(model.token_text[i] for i in hard.token_ids))
print("entries are exact table rows:",
      all(np.array_equal(hard.entries[k], table.entries[i])
          for k, i in enumerate(hard.token_ids)))


# ## Idempotence
#
# Projecting an already-projected prompt changes nothing, bit for bit.
# The sampler relies on this: a chain state is always a valid token
# sequence, and re-projecting it is a no-op.

# In[4]:

again = project(hard, table)
print("ids stable:", again.token_ids == hard.token_ids)
print("entries bitwise stable:", np.array_equal(again.entries, hard.entries))


# ## Ties go to the lowest token id
#
# If two vocabulary rows are exactly equidistant from a query row, the
# smaller id wins.  That makes projection a pure function of its inputs —
# no hidden randomness.

# In[5]:

a, b = table.entries[10], table.entries[11]
midpoint = (a + b) / 2.0
tie = project(SoftPrompt(entries=midpoint[None, :]), table)
print("distance to 10:", np.linalg.norm(midpoint - a))
print("distance to 11:", np.linalg.norm(midpoint - b))
print("chosen id:", tie.token_ids[0])


# ## Keeping `<pad>` and `<unk>` out
#
# Searching over the full table can park a row on a special token, which
# makes prompts unreadable.  `allowed_token_ids` with the default
# "no-special" policy excludes them, and `project_subset` restricts the
# scan to any id set you like.

# In[6]:

allowed = allowed_token_ids(model, "no-special")
print("rows in table:", table.rows, "| allowed:", len(allowed))
print("specials excluded:",
      not (set(model.special_token_ids) & set(allowed)))

# Nudge a row right on top of the <pad> embedding; the restricted scan
# still returns a real word.

# In[7]:

near_pad = table.entries[0] + 1e-9
restricted = project_subset(SoftPrompt(entries=near_pad[None, :]), table,
                            allowed)
print("nearest overall would be <pad> (id 0); restricted pick:",
      restricted.token_ids[0],
      repr(model.token_text[restricted.token_ids[0]]))


# ## Projection as quantization error
#
# The farther a soft row drifts from the table, the more the projection
# moves it.  A quick sweep over noise scales shows the average snap
# distance growing — useful intuition for choosing step sizes.

# In[8]:

for scale in (0.05, 0.2, 0.8, 3.0):
    soft = SoftPrompt(entries=rng.normal(size=(64, model.dim)) * scale)
    hard = project(soft, table)
    snap = np.linalg.norm(soft.entries - hard.entries, axis=1).mean()
    print(f"  noise scale {scale:4.2f} -> mean snap distance {snap:6.3f}")
