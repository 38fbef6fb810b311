"""Reproduction experiments shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actuation import energy_table
from .imaging import (
    gaussian_filter,
    noisy_frames,
    radial_power_spectrum,
    running_average,
    snr_sigma,
    synthetic_scene,
)
from .scenario import World
from .search import RunResult, global_minimum_node, run

SWEEP_PARAMS = {"kEst": "k_est", "kSd": "k_sd"}


def mesh_summary(world: World) -> dict:
    return {
        "h_m": world.scenario.mesh.h_m,
        "ideal_nodes": len(world.ideal_space),
        "reduced_nodes": len(world.space),
    }


def energy_rows(world: World, tau_delays) -> list[tuple[float, float, float]]:
    s = world.scenario
    if len(tau_delays) == 0:
        raise ValueError("energy table needs at least one tau_delay")
    return energy_table(s.energy_table.p_initial_m, s.energy_table.p_final_m, world.geom_visual,
                        s.motor.params(), s.control.params(), tau_delays)


def search_run(world: World, **overrides) -> RunResult:
    return run(world.space.positions, world.environment, world.energy,
               world.scenario.search_config(**overrides))


def run_seeds(world: World, seeds, **overrides) -> list[RunResult]:
    """One run per seed; the remaining settings come from the scenario plus ``overrides``."""
    return [search_run(world, seed=int(s), **overrides) for s in seeds]


def seed_block(base: int, count: int) -> range:
    return range(base, base + count)


@dataclass(frozen=True)
class SensitivityRow:
    param: str
    value: float
    mean_iterations: float
    mean_avg_new_distance: float
    global_min_fraction: float


def sensitivity(world: World, param: str, values=None, seeds: int | None = None,
                base_seed: int | None = None) -> list[SensitivityRow]:
    """Sweep kEst or kSd with the sensitivity budget; the other parameter stays fixed."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sensitivity parameter must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    sens = world.scenario.sensitivity
    values = sens.values if values is None else values
    if len(values) == 0:
        raise ValueError("sensitivity needs at least one value")
    seeds = sens.seeds if seeds is None else seeds
    base_seed = world.scenario.search.seed if base_seed is None else base_seed
    goal = global_minimum_node(world.space.positions, world.environment.field)
    fixed = {"k_est": sens.k_est_fixed, "k_sd": sens.k_sd_fixed_per_m}
    rows = []
    for value in values:
        kw = dict(fixed, e_bound0=sens.e_bound0_ws, e_threshold=sens.e_threshold_ws)
        kw[SWEEP_PARAMS[param]] = float(value)
        results = run_seeds(world, seed_block(base_seed, seeds), **kw)
        dists = [r.avg_new_distance for r in results if not math.isnan(r.avg_new_distance)]
        rows.append(SensitivityRow(
            param=param,
            value=float(value),
            mean_iterations=float(np.mean([r.iterations for r in results])),
            mean_avg_new_distance=float(np.mean(dists)) if dists else float("nan"),
            global_min_fraction=float(np.mean([r.final_node == goal for r in results])),
        ))
    return sorted(rows, key=lambda r: r.value)


def bench_scene(world: World, seed: int) -> np.ndarray:
    b = world.scenario.bench
    return synthetic_scene(b.frame_px, [seed, 1], n_rects=b.scene_rects, rect_px=b.rect_px)


def denoise_bench(world: World, counts=None, seed: int | None = None):
    """Residual noise of N-frame averages and the radial spectra of the bench frames.

    Returns (std_rows, spectra) where std_rows are (N, residual_std, expected_std)
    averaged over the configured repetitions and spectra maps a label to
    (frequency, power) arrays.
    """
    b = world.scenario.bench
    counts = b.frame_counts if counts is None else counts
    if len(counts) == 0:
        raise ValueError("denoise bench needs at least one frame count")
    seed = world.scenario.search.seed if seed is None else seed
    clean = bench_scene(world, seed)
    sigma = snr_sigma(clean, b.snr_db)
    rows, averages = [], {}
    for n in counts:
        stds = []
        for rep in range(b.repetitions):
            avg = running_average(noisy_frames(clean, sigma, int(n), np.random.default_rng([seed, int(n), rep])))
            stds.append(float(np.std(avg - clean)))
            if rep == 0:
                averages[int(n)] = avg
        rows.append((int(n), float(np.mean(stds)), sigma / math.sqrt(n)))

    single = next(noisy_frames(clean, sigma, 1, np.random.default_rng([seed, 0, 0])))
    top = max(counts)
    freq, clean_p = radial_power_spectrum(clean)[1:]
    spectra = {
        "clean": clean_p,
        "noisy": radial_power_spectrum(single)[2],
        f"averaged_{top}": radial_power_spectrum(averages[int(top)])[2],
        "filtered": radial_power_spectrum(gaussian_filter(single, b.filter_size_px, b.filter_sigma_px))[2],
    }
    return rows, freq, spectra
