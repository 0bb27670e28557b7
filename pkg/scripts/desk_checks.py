#!/usr/bin/env python3
"""Internal-consistency desk checks against the published result tables.

The original cohort is private, so the headline numbers cannot be
recomputed. What CAN be checked is that the published quantities are
mutually consistent under this package's conventions:

  * AUC -> Cohen's d through the binormal relation d = sqrt(2) Phi^-1(AUC)
  * CI half-widths from the t-distribution with the back-solved run SD
  * between-model t statistics from the CI-implied SDs
  * pooled t recomputed from the published group means/SDs (rounded to two
    decimals, so a +-0.005 rounding rectangle is also reported)
  * Wald chi-square identity (beta / SE)^2 per regression row
"""

import math

from visrisk.dists import t_ppf
from visrisk.evaluation import auc_to_cohens_d

ROWS = [
    # feature label, mean_pos, sd_pos, mean_neg, sd_neg, published T
    ("sentiment (negative)", 0.42, 0.09, 0.34, 0.10, 6.99),
    ("brightness (dark)", 0.50, 0.15, 0.41, 0.18, 5.27),
    ("photographer - people (selfie)", 0.33, 0.07, 0.29, 0.08, 3.97),
    ("emotion - person (sad)", 0.47, 0.10, 0.41, 0.11, 5.00),
    ("development - person (child)", 0.56, 0.16, 0.49, 0.16, 3.99),
    ("photographer - person (selfie)", 0.66, 0.16, 0.58, 0.17, 4.45),
    ("relationships (friends)", 0.27, 0.09, 0.23, 0.08, 4.12),
    ("development - person (elderly)", 0.40, 0.12, 0.34, 0.11, 4.58),
    ("emotion - people (sad)", 0.30, 0.18, 0.41, 0.24, -5.10),
    ("relationships (family)", 0.25, 0.09, 0.29, 0.10, -3.55),
    ("content (people)", 0.25, 0.07, 0.27, 0.09, -2.95),
]
REGRESSION = [
    ("sentiment (negative)", 0.517, 0.072, 51.509),
    ("brightness (dark)", 0.353, 0.1258, 7.873),
    ("photographer - people (selfie)", 0.301, 0.0435, 47.775),
    ("emotion - person (sad)", 0.230, 0.0644, 12.748),
    ("development - person (child)", -0.161, 0.0751, 1.667),
    ("photographer - person (selfie)", -0.157, 0.0839, 3.502),
    ("relationships (friends)", 0.140, 0.0450, 9.705),
    ("development - person (elderly)", 0.130, 0.0451, 8.238),
    ("emotion - people (sad)", 0.120, 0.1280, 0.884),
    ("relationships (family)", -0.036, 0.0587, 23.115),
    ("content (people)", -0.031, 0.0498, 48.815),
]
N_POS, N_NEG = 92, 749


def pooled_t(m1, s1, n1, m2, s2, n2):
    sp2 = ((n1 - 1) * s1 * s1 + (n2 - 1) * s2 * s2) / (n1 + n2 - 2)
    return (m1 - m2) / math.sqrt(sp2 * (1 / n1 + 1 / n2))


def main() -> int:
    print("== AUC vs Cohen's d (binormal relation) ==")
    for auc, published in ((0.623, 0.44), (0.696, 0.72), (0.720, 0.82)):
        d = auc_to_cohens_d(auc)
        print(f"  AUC {auc:.3f}: implied d {d:.3f} vs published {published:.2f} "
              f"(dev {abs(d - published):.4f})")

    print("\n== CI-implied per-run SDs (m = 1000 splits) ==")
    t_crit = t_ppf(0.975, 999)
    sds = {}
    for name, mean, half in (("hybrid", 0.720, 0.004),
                             ("clip-baseline", 0.696, 0.002),
                             ("resnet-baseline", 0.623, 0.002)):
        sds[name] = half * math.sqrt(1000) / t_crit
        print(f"  {name}: mean {mean:.3f}, half-width {half:.3f} "
              f"-> run SD {sds[name]:.4f}")

    print("\n== implied between-model t statistics ==")
    for other, published in (("resnet-baseline", 44.3), ("clip-baseline", 11.4)):
        delta = 0.720 - (0.623 if "resnet" in other else 0.696)
        t = delta / math.sqrt((sds["hybrid"] ** 2 + sds[other] ** 2) / 1000)
        print(f"  hybrid vs {other}: implied t {t:.1f} vs published {published}")

    print("\n== pooled t from published group moments (+-0.005 rectangle) ==")
    bracketed = 0
    for label, m1, s1, m2, s2, t_pub in ROWS:
        center = pooled_t(m1, s1, N_POS, m2, s2, N_NEG)
        corners = [
            pooled_t(m1 + a, s1 + b, N_POS, m2 + c, s2 + d, N_NEG)
            for a in (-0.005, 0.005) for b in (-0.005, 0.005)
            for c in (-0.005, 0.005) for d in (-0.005, 0.005)
        ]
        inside = min(corners) <= t_pub <= max(corners)
        bracketed += inside
        marker = "ok" if inside else "OUTSIDE"
        print(f"  {label:32s} center {center:6.2f}  range "
              f"[{min(corners):6.2f}, {max(corners):6.2f}]  published {t_pub:6.2f}  {marker}")
    print(f"  -> {bracketed}/11 published T-scores bracketed")

    print("\n== Wald identity (beta/SE)^2 vs published chi-square ==")
    for label, beta, se, chi2 in REGRESSION:
        implied = (beta / se) ** 2
        flag = "ok" if abs(implied - chi2) <= 0.15 else "INCONSISTENT"
        print(f"  {label:32s} implied {implied:8.3f}  published {chi2:8.3f}  {flag}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
