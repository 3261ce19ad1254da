import csv

import numpy as np
import pytest

from dsach_plots.cli import main_curves, main_histograms
from dsach_plots.data import (
    SchemaError,
    density_histogram,
    histogram_mass,
    load_csv_columns,
)
from dsach_plots.figures import plot_curves, plot_histograms, plot_joint

TRAJ_HEADER = [
    "step", "x", "y", "phi", "v_x", "a_x", "delta",
    "y_err", "phi_err", "reward", "cost", "event",
]


def _write_rates(path, steps, arr, col):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "arrival_rate", "collision_rate", "episodes_done"])
        for s, a, c in zip(steps, arr, col):
            w.writerow([s, a, c, s // 10])


def _write_trajectory(path, n=400, seed=0, constant_delta=None):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJ_HEADER)
        v = 8.0
        for i in range(n):
            a_x = float(np.clip(rng.normal(0.2, 0.4), -1.5, 0.8))
            v = float(np.clip(v + 0.1 * a_x, 0, 15))
            delta = (
                constant_delta
                if constant_delta is not None
                else float(rng.normal(0.0, 0.01))
            )
            w.writerow([
                i, i * 0.8, rng.normal(0, 0.2), rng.normal(0, 0.02), v, a_x,
                delta, rng.normal(0, 0.125), rng.normal(0, 0.02),
                rng.normal(10, 2), abs(rng.normal(0, 0.1)), "normal",
            ])


def test_density_histogram_integrates_to_one():
    rng = np.random.default_rng(1)
    for values in [rng.normal(0, 1, 5000), rng.uniform(-3, 9, 257), np.full(50, 2.5)]:
        density, edges = density_histogram(values)
        assert histogram_mass(density, edges) == pytest.approx(1.0, abs=1e-6)


def test_constant_column_gives_single_bin_spike():
    density, edges = density_histogram(np.full(100, 1.23), bins=61)
    assert np.count_nonzero(density) == 1
    assert histogram_mass(density, edges) == pytest.approx(1.0, abs=1e-6)


def test_gaussian_column_stats_match_annotations(tmp_path):
    _write_trajectory(tmp_path / "t.csv", n=20_000, seed=2)
    data = load_csv_columns(tmp_path / "t.csv", ["y_err"])
    assert float(np.mean(data["y_err"])) == pytest.approx(0.0, abs=0.01)
    assert float(np.std(data["y_err"])) == pytest.approx(0.125, abs=0.01)
    density, edges = density_histogram(data["y_err"])
    # bell shape: the central bin dominates the edge bins
    mid = density[len(density) // 2]
    assert mid > 3 * density[0] and mid > 3 * density[-1]


def test_missing_columns_raise_schema_error(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("step,foo\n1,2\n")
    with pytest.raises(SchemaError):
        load_csv_columns(p, ["step", "arrival_rate"])


def test_empty_csv_raises_not_writes(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("step,arrival_rate,collision_rate\n")
    with pytest.raises(SchemaError):
        plot_curves([p], ["x"], tmp_path / "out.png")
    assert not (tmp_path / "out.png").exists()


def test_matching_labels_required(tmp_path):
    _write_rates(tmp_path / "r.csv", [100], [0.1], [0.5])
    with pytest.raises(ValueError):
        plot_curves([tmp_path / "r.csv"], ["a", "b"], tmp_path / "out.png")


def test_single_run_curves_render(tmp_path):
    _write_rates(
        tmp_path / "r.csv", range(0, 5000, 500),
        np.linspace(0, 0.8, 10), np.linspace(0.5, 0.1, 10),
    )
    out = plot_curves([tmp_path / "r.csv"], ["run-a"], tmp_path / "curves.png")
    assert out.exists() and out.stat().st_size > 0


def test_two_run_overlay_renders(tmp_path):
    _write_rates(tmp_path / "a.csv", range(0, 3000, 300),
                 np.linspace(0, 0.9, 10), np.linspace(0.6, 0.05, 10))
    _write_rates(tmp_path / "b.csv", range(0, 3000, 300),
                 np.linspace(0, 0.5, 10), np.linspace(0.6, 0.3, 10))
    out = plot_curves(
        [tmp_path / "a.csv", tmp_path / "b.csv"], ["ours", "baseline"],
        tmp_path / "cmp.png",
    )
    assert out.exists() and out.stat().st_size > 0


def test_histograms_and_joints_render_all_kinds(tmp_path):
    for i in range(3):
        _write_trajectory(tmp_path / f"ep_{i}.csv", seed=i)
    files = sorted(tmp_path.glob("ep_*.csv"))
    hists = plot_histograms(files, tmp_path / "figs")
    joints = plot_joint(files, tmp_path / "figs")
    names = {p.name for p in hists + joints}
    assert names == {
        "hist_y_err.png", "hist_phi_err.png", "hist_a_x.png", "hist_delta.png",
        "joint_a_x_vs_v_x.png", "joint_delta_vs_phi_err.png",
    }
    for p in hists + joints:
        assert p.stat().st_size > 0


def test_rerunning_is_idempotent_and_readonly(tmp_path):
    _write_trajectory(tmp_path / "t.csv", seed=5)
    before = (tmp_path / "t.csv").read_bytes()
    plot_histograms([tmp_path / "t.csv"], tmp_path / "f1")
    plot_histograms([tmp_path / "t.csv"], tmp_path / "f1")
    assert (tmp_path / "t.csv").read_bytes() == before


def test_cli_entry_points(tmp_path, capsys):
    _write_rates(tmp_path / "r.csv", range(0, 2000, 200),
                 np.linspace(0, 1, 10), np.linspace(1, 0, 10))
    rc = main_curves([
        "--rates", str(tmp_path / "r.csv"), "--labels", "run",
        "--out", str(tmp_path / "c.png"),
    ])
    assert rc == 0 and (tmp_path / "c.png").exists()

    _write_trajectory(tmp_path / "t.csv", seed=7)
    rc = main_histograms([
        "--trajectories", str(tmp_path / "t.csv"),
        "--out-dir", str(tmp_path / "f"),
    ])
    assert rc == 0
    assert len(list((tmp_path / "f").glob("*.png"))) == 6

    rc = main_curves([
        "--rates", str(tmp_path / "nope.csv"), "--labels", "x",
        "--out", str(tmp_path / "no.png"),
    ])
    assert rc == 2
