"""Every FDR procedure is e-BH in disguise, and that enables derandomization.

The implied compound e-values of a procedure rejecting set D at level alpha
put K / (alpha * |D|) on the rejected hypotheses and 0 elsewhere. Feeding
them back into e-BH reproduces D exactly, and averaging the implied
e-values of several runs gives a combined procedure that still controls the
FDR. Here we derandomize a randomized e-BH variant that thresholds E/U for
a uniform U.
"""

import numpy as np

from compound_evalues import (
    EVector,
    derandomize,
    ebh,
    implied_compound_evalues,
    pbh,
    PVector,
)

rng = np.random.default_rng(2)

# ---------------------------------------------------------------------------
# 1. The inversion: run BH on some p-values, then rebuild it as e-BH.
K, alpha = 60, 0.1
pvals = PVector(np.concatenate([rng.uniform(0, 0.002, 6), rng.uniform(size=K - 6)]))
bh_result = pbh(pvals, alpha)
implied = implied_compound_evalues(bh_result, K, alpha)
round_trip = ebh(implied, alpha)
print(f"BH rejected {sorted(bh_result.rejected)}")
print(f"e-BH on the implied e-values rejected {sorted(round_trip.rejected)}")
assert round_trip.rejected == bh_result.rejected

# ---------------------------------------------------------------------------
# 2. Derandomization: run the same analysis under L draws of its internal
#    randomness (think cross-fitting folds), convert each run to implied
#    compound e-values, average, and re-run e-BH. The combination always
#    controls the FDR; its power depends on how much the runs agree. The
#    total implied e-value mass is K/alpha no matter what, so unanimous
#    discoveries sit exactly on the e-BH boundary and survive, while
#    discoveries that flicker across runs get diluted below it.
lam = 2.0
signal = np.zeros(K)
signal[:10] = 3.6
z = rng.standard_normal(K) + signal

L = 20
for noise in (0.05, 0.35):
    runs = []
    sizes = []
    for _ in range(L):
        jitter = noise * rng.standard_normal(K)
        evals = np.exp(lam * (z + jitter) - lam**2 * (1 + noise**2) / 2)
        randomized = ebh(EVector(evals), alpha)
        sizes.append(randomized.R)
        runs.append((implied_compound_evalues(randomized, K, alpha), 1.0 / L))
    combined = derandomize(runs)
    final = ebh(EVector(combined.values, null_mask=signal == 0), alpha)
    print(
        f"analysis noise {noise}: run sizes {min(sizes)}..{max(sizes)}, "
        f"derandomized R={final.R}, false={final.F}"
    )
# Small noise: every run rejects the same core and the combination keeps
# it. Large noise: the runs disagree, and the combination (correctly)
# refuses to certify any single run's extra discoveries.

# ---------------------------------------------------------------------------
# 3. Meta-analysis across studies that tested different hypothesis subsets:
#    pad each study's implied e-values with 1 outside its subset. Each
#    study's own FDR level enters only through the implied values
#    K_l / (alpha_l * R), so studies run at a stricter level carry more
#    evidence per discovery; here both studies used 0.05 and the combined
#    screen runs at 0.1.
signal = np.zeros(K)
signal[24:34] = 3.6  # the signals sit in the window covered by both studies
z = rng.standard_normal(K) + signal
base_evals = np.exp(lam * z - lam**2 / 2)
study_level = 0.05
study_a = ebh(EVector(base_evals[:40]), study_level)
study_b = ebh(EVector(base_evals[20:]), study_level)
merged = derandomize(
    [
        (implied_compound_evalues(study_a, 40, study_level), 0.5),
        (implied_compound_evalues(study_b, 40, study_level), 0.5),
    ],
    subsets=[list(range(1, 41)), list(range(21, 61))],
    K=K,
)
meta = ebh(EVector(merged.values, null_mask=signal == 0), alpha)
print(f"study A rejected {study_a.R}, study B rejected {study_b.R}")
print(f"meta-analysis e-BH at {alpha}: R={meta.R}, false={meta.F}")
