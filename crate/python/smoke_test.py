"""Smoke test for the prunelab Python extension.

Uses an installed module when available (`maturin develop -m crates/python/Cargo.toml`),
otherwise builds the cdylib with cargo and imports it from a temporary directory.
"""

import importlib
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("prunelab")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "prunelab-py"], cwd=ROOT, check=True
    )
    lib = ROOT / "target" / "release" / "libprunelab.so"
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "prunelab.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("prunelab")


def main():
    pl = load_module()

    assert pl.rank_with_ties([3.0, 1.0, 3.0, 2.0]) == [3.5, 1.0, 3.5, 2.0]
    assert abs(pl.spearman_rho([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) < 1e-12
    assert pl.spearman_rho([1, 2, 3], [5, 5, 5]) is None

    report = pl.mc_correlation(pl.fixture("table3"), n_outcomes=200, n_rollouts=200, seed=1)
    assert abs(report.rho_mean) < 0.2
    assert sum(c for _, c in report.histogram(10)) == len(report.samples)

    img = [[[1.0], [2.0]], [[3.0], [4.0]]]
    assert pl.nn_resize(img, 4, 4)[3][3] == [4.0]

    ds = pl.generate_dataset(16, 4, 2, n_train=600, n_test=200, seed=3)
    x, y = ds.split("test")
    assert len(x) == 200 and len(x[0]) == 16 and set(y) <= {0, 1}

    net = pl.Network(16, [32, 16], seed=5)
    assert net.label == "MLP-32-16"
    assert len(net.forward(x[:3])) == 3
    net.prune(0.5)
    assert net.unmasked_count == net.weight_count // 2

    trial = pl.imp_run(ds, [32, 16], n_iterations=3, epochs=3, batch_size=32, seed=7)
    pcts = [p for p, _ in trial.levels]
    assert pcts[0] == 100.0 and all(a > b for a, b in zip(pcts, pcts[1:]))
    print(f"dense accuracy {trial.dense_accuracy:.3f}, levels {len(pcts)}, status {trial.status}")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
