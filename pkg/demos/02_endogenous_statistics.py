"""The four relational dynamics, in identity and time-decayed form.

A hand-traced mini history shows how reciprocity pends and clears, how
triadic two-paths qualify, and how the exponential decay turns "how long
ago" into a value in [0, 1].
"""

import math

from remgof import EndoKind, EndoState, endo_advance, endo_value

state = EndoState(n_actors=4, b=1.0)  # actors 0..3, decay rate b=1

history = [
    (0, 1, 1.0),   # 0 -> 1
    (1, 0, 2.0),   # 1 answers: reciprocity now pends for (0, 1)
    (1, 2, 3.0),   # 1 -> 2
    (2, 3, 4.0),   # 2 -> 3 : two-path 1 -> 2 -> 3 pends for (1, 3)
]
for s, r, t in history:
    endo_advance(state, s, r, t)

rec_id = EndoKind("reciprocity", "identity")
rec_time = EndoKind("reciprocity", "time")
print("reciprocity for (0,1) at t=3  :", endo_value(state, rec_id, (0, 1), 3.0))
print("  decayed form, t* = 2, t = 3 :",
      endo_value(state, rec_time, (0, 1), 3.0), "= exp(-1) =",
      round(math.exp(-1), 6))
print("reciprocity for (1,0) at t=3  :",
      endo_value(state, rec_id, (1, 0), 3.0),
      "(1 already answered at t=2, so nothing pends)")

trs = EndoKind("transitive", "time")
print("\ntransitive closure for (1,3) at t=4.5:",
      round(endo_value(state, trs, (1, 3), 4.5), 6),
      "(via counterpart 2; t* = 4)")
cyc = EndoKind("cyclic", "identity")
print("cyclic closure for (3,1) at t=4.5  :",
      endo_value(state, cyc, (3, 1), 4.5),
      "(needs 1->k then k->3 beforehand)")

# Answering an event consumes its reciprocity.
endo_advance(state, 0, 1, 5.0)
print("\nafter 0 -> 1 at t=5, reciprocity for (0,1):",
      endo_value(state, rec_id, (0, 1), 6.0),
      "and for (1,0):", endo_value(state, rec_id, (1, 0), 6.0))

# Values always live in [0, 1]; never-qualifying configurations give 0.
print("repetition for the never-active dyad (3,0):",
      endo_value(state, EndoKind("repetition", "time"), (3, 0), 6.0))
