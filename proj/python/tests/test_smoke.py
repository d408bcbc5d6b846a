"""Smoke test for the _proemb extension module.

Usage: python test_smoke.py [dir-containing-_proemb]

The optional argument lets the ctest target point at the build tree before
the package is installed.
"""

import json
import math
import sys

if len(sys.argv) > 1:
    sys.path.insert(0, sys.argv[1])

try:
    import proemb as _proemb  # installed package
except ImportError:
    import _proemb  # build tree


def tiny_config():
    cfg = _proemb.default_config()
    cfg.update(
        {
            "n": "240",
            "d": "4",
            "V": "40",
            "doc_len": "10",
            "S": "3",
            "epochs": "3",
            "batch": "64",
            "embed_dim": "4",
            "sweep_dims": "3,6",
            "methods": "oracle,naive-ols,tsls,pe-lr",
            "master_seed": "123",
        }
    )
    return cfg


def main():
    cfg = tiny_config()

    # Config digest is stable and ignores the thread count.
    digest = _proemb.config_digest(cfg)
    assert digest == _proemb.config_digest({**cfg, "threads": "4"})

    # Panel generation is deterministic per (seed, run) and carries the
    # shared-noise identity.
    panel = _proemb.make_run_panel(cfg, run=0)
    again = _proemb.make_run_panel(cfg, run=0)
    assert panel.digest == again.digest
    assert panel.n == 240
    assert panel.Ztilde.shape == (240, 80)
    assert len(panel.edges) > 0
    for yf, yc, t in zip(panel.y_fact, panel.y_cf, panel.treat):
        assert yf - yc == panel.tau * (2 * t - 1)

    # Oracle uses the counterfactuals directly; with shared noise it is
    # exactly tau.
    oracle = _proemb.estimate_method(cfg, "oracle", panel, run=0)
    assert oracle == panel.tau

    # Embedding + downstream estimate round-trip.
    emb = _proemb.embed_panel(cfg, panel, run=0, dim=4)
    assert emb.shape == (240, 4)
    est = _proemb.estimate_method(cfg, "pe-lr", panel, run=0, embedding=emb)
    assert math.isfinite(est)

    # Full harness: table JSON parses, oracle row has rmse 0.
    table = json.loads(_proemb.run_experiment(cfg))
    rows = {r["method"]: r for r in table["rows"]}
    assert rows["oracle"]["rmse"] == 0.0
    assert all(len(r["estimates"]) == 3 for r in rows.values())
    assert table["config_digest"] == digest

    # Sweep pairs its panels across dimensions.
    sweep = json.loads(_proemb.sweep_embedding_dim(cfg, [3, 6]))
    assert sweep["panel_digests"]["dim=3"] == sweep["panel_digests"]["dim=6"]

    print("python smoke test passed")


if __name__ == "__main__":
    main()
