"""
Which way is the other car going?
=================================

An autonomous car approaches an intersection while another vehicle
closes in on the crossing road.  The other driver's intention is hidden:
keep going (I), yield by braking (M), or accelerate to rush through (C).
Each intention is a different feedback law, i.e. a different linear
mode, and on top of that the driver applies throttle corrections and a
sensor bias drifts — inputs we neither know nor model statistically.

This script simulates the built-in intersection scenario where the
driver's intention switches I -> M -> I, runs the switching estimator (a
bank of input-decoupled filters with interacting-multiple-model mixing),
and shows how the posterior mode probabilities follow the switches.
"""

import numpy as np

from modefilter import presets, sim

# ---------------------------------------------------------------------
# 1. Scenario: 9 seconds at 100 Hz, intention switches at 3 s and 6 s.
# ---------------------------------------------------------------------
sc = presets.intersection_scenario("I-M-I", seed=11)
truth = sim.simulate(sc)
switches = [int(s) for s in np.flatnonzero(np.diff(truth.q) != 0) + 1]
print(f"scenario {sc.name}: {sc.horizon} steps of {sc.dt} s, "
      f"true switches at steps {switches}")

# ---------------------------------------------------------------------
# 2. Estimate.  The estimator sees only the measurements and the known
#    input; intentions, states and driver corrections are all hidden.
# ---------------------------------------------------------------------
cfg = sim.EstimatorConfig(kind="dynamic",
                          transition=presets.intersection_transition())
tr = sim.run_estimator(truth, sc, cfg)
report = sim.metrics(tr)

print(f"mode accuracy (outside 50-step transients): "
      f"{report['mode_accuracy']:.1%}")
print(f"state RMSE per component: "
      f"{np.array2string(np.array(report['state_rmse']), precision=3)}")

# detection delay: how long after each switch until the MAP mode catches up
for s in switches:
    caught = np.flatnonzero(tr.q_map[s:] == tr.q_true[s])
    delay = int(caught[0]) if caught.size else None
    print(f"switch at step {s} ({'IMC'[tr.q_true[s - 1]]} -> "
          f"{'IMC'[tr.q_true[s]]}): MAP catches up after {delay} steps")

# ---------------------------------------------------------------------
# 3. A text strip chart of the posterior probability of the *true* mode.
#    Each column is 25 steps; full blocks mean the estimator is certain.
# ---------------------------------------------------------------------
mu_true = tr.mu[np.arange(sc.horizon + 1), tr.q_true]
bars = " .:-=+*#%@"
n_cells = 36
cells = [bars[min(int(np.mean(chunk) * 10), 9)]
         for chunk in np.array_split(mu_true, n_cells)]
marks = [" "] * n_cells
for s, label in zip(switches, "MI"):
    marks[s * n_cells // (sc.horizon + 1)] = "^"
print("\nP(true mode), 9 s left to right (@ = certain, ' ' = lost):")
print("  |" + "".join(cells) + "|")
print("   " + "".join(marks) + "   (^ = true switch)")

# ---------------------------------------------------------------------
# 4. The same scenario read through the static estimator, which assumes
#    the intention never changes.  The interesting difference is the
#    prior each estimator brings to the switch: the Markov transition
#    matrix hands the braking mode a fresh double-digit prior at every
#    step, while the static estimator walks in with whatever posterior
#    survived the cruising phase (its floor keeps that from being zero).
#    At this noise level the evidence is sharp enough that both flip
#    their MAP mode within a couple of steps anyway.
# ---------------------------------------------------------------------
tr_static = sim.run_estimator(truth, sc, sim.EstimatorConfig(kind="static"))
s = switches[0]
prior_dyn = presets.intersection_transition().T @ tr.mu[s - 1]
print(f"\nprior on 'braking' walking into the step-{s} switch: "
      f"{prior_dyn[1]:.3f} (dynamic) vs {tr_static.mu[s - 1, 1]:.1e} "
      f"(static)")
for name, t in (("dynamic", tr), ("static ", tr_static)):
    probs = " -> ".join(f"{t.mu[k, 1]:.3f}" for k in range(s - 1, s + 3))
    print(f"  {name} P(braking) around the switch: {probs}")
