"""Train the click model on planted data under full, hash, QR and LMA embeddings.

A smaller universe than the acceptance run keeps this under a minute.
"""

from lshmem.model import ModelConfig, train
from lshmem.synthetic import PlantedCtrSpec, planted_splits

spec = PlantedCtrSpec(n_rows=50_000, n_values=4000, n_clusters=40, seed=1)
tr, te = planted_splits(spec, n_test=20_000)
print(f"train rows {tr.n_rows}, test rows {te.n_rows}, values {tr.n_values}")

print("scheme  params_memory  test AUC per epoch")
for scheme in ("full", "hash", "qr", "lma"):
    cfg = ModelConfig(scheme=scheme, alpha=None if scheme == "full" else 16, epochs=3, seed=1)
    log = train(cfg, tr, te).log
    aucs = " ".join(f"{r['auc']:.4f}" for r in log)
    print(f"{scheme:<6}  {log[-1]['params_memory']:>13}  {aucs}")
