"""Regenerate the golden regression files (run only when the format changes on purpose)."""

from pathlib import Path

from slowmanifolds import StableSpec, generate_path, integrate_sde
from slowmanifolds.examples import example1
from slowmanifolds.stable_noise import dump_path

HERE = Path(__file__).parent

GOLDEN_PATH_ARGS = dict(t_min=-0.5, t_max=0.5, dt=0.01, seed=20240101)
GOLDEN_SDE_ARGS = dict(seed=7, dt=1e-3, t_end=0.5)


def golden_path():
    return generate_path(StableSpec((1.8, 1.5)), **GOLDEN_PATH_ARGS)


def golden_trajectory():
    sys = example1()
    a = GOLDEN_SDE_ARGS
    path = generate_path(sys.noise, 0.0, a["t_end"], a["dt"], a["seed"])
    return integrate_sde(sys, path, [1.0, 0.0], (0.0, a["t_end"]), a["dt"])


if __name__ == "__main__":
    dump_path(golden_path(), HERE / "golden_path.bin")
    golden_trajectory().to_csv(HERE / "golden_example1_sde.csv")
