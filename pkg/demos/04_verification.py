"""Monte Carlo checks: moments, tails and bands of f and C_s, then subsampled Jaccard."""

from lshmem.verify import (
    GridPoint,
    band_sweep,
    simulate_grid,
    theorem1_report,
    theorem2_report,
    variance_scaling,
    width_ratios,
)

grid = [GridPoint(phi, d, 10**6, 1) for d in (16, 64) for phi in (0.3, 0.7)]
samples = simulate_grid(grid, trials=3000, seed=42)
for s in samples:
    r1, r2 = theorem1_report(s), theorem2_report(s)
    print(f"phi={s.phi:.3f} d={s.point.d:<3}  f: mean {r1.empirical_mean:.4f} var {r1.empirical_var:.5f} "
          f"(Gamma {r1.analytic_mean:.4f}, {r1.analytic_var:.5f}) {r1.status}   C_s: {r2.status}")

rows = band_sweep([16, 64], [0.3, 0.7], trials=3000, samples=samples)
for r in rows:
    print(f"d={r['d']:<3} phi={r['phi']}  f in [{r['f_q025']:.3f}, {r['f_q975']:.3f}]  "
          f"C_s in [{r['cs_q025']:.3f}, {r['cs_q975']:.3f}]")
for r in width_ratios(rows):
    print(f"width ratio d={r['d']} -> {4 * r['d']}: f {r['f_ratio']:.2f}, C_s {r['cs_ratio']:.2f}")

# Jaccard of a planted pair estimated from row subsamples
ratio, small, large = variance_scaling(0.4, 0.05, 100_000, 2000, 0.15, trials=200)
for r in (small, large):
    print(f"n_s={r.point['n_s']}: mean {r.empirical_mean:.4f} (J {r.analytic_mean:.4f}) var {r.empirical_var:.2e} "
          f"failures {r.tails[0]['empirical']:.3f} <= delta {r.notes['delta']:.3f}")
print(f"variance ratio when n_s doubles: {ratio:.2f}")
