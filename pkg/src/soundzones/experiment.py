"""
Monte Carlo orchestration for centralized and diffusion pressure matching.

Every (frequency, run) pair is an independent work item. Its random streams
come from ``numpy.random.SeedSequence(seed, spawn_key=(freq_key, run, role))``
where ``freq_key`` is the frequency in millihertz and ``role`` indexes the
noise source (see ``STREAM_ROLES``). Work items can therefore run in any
order or on any number of workers; results are folded in index order.

All algorithms inside one run see the same ATF perturbations and target
noise.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .atf_io import read_atf_file
from .config import ExperimentConfig
from .diffusion import (DiffusionNetwork, Topology, contiguous_partition, dpmd_iteration,
                        NetworkState, ring_topology, system1_partition, system2_partition,
                        table_system)
from .metrics import complexity_cpm, complexity_dpmd, metric_traces
from .pm import CpmState, DivergenceError, OpCounter, cpm_step, stability_bound
from .scene import (array_geometry, circular_gaussian, freefield_atf, image_source_atf,
                    reference_geometry, planewave_target, sample_oracle_filter)

STREAM_ROLES = {"oracle_filter": 0, "atf_perturbation": 1, "target_noise": 2,
                "validation_perturbation": 3, "validation_noise": 4}
SEED_RULE = ("SeedSequence(seed, spawn_key=(round(freq_hz * 1000), run_index, role)) "
             "with roles " + ", ".join(f"{k}={v}" for k, v in STREAM_ROLES.items()))
POINT_SETS = ("control", "validation")
JOBS_ENV = "SOUNDZONES_JOBS"


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scene and systems

def build_geometry(config: ExperimentConfig):
    if config.geometry == "reference":
        return reference_geometry()
    kwargs = dict(config.geometry)
    for key in ("grid", "room_dims", "validation_offset"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return array_geometry(**kwargs)


def build_networks(config: ExperimentConfig, n_mics: int, n_speakers: int):
    """One ``DiffusionNetwork`` per configured system, in config order."""
    networks = []
    used = set()
    for i, entry in enumerate(config.systems):
        if entry == "system1":
            (top, part), name = system1_partition(), "system1"
        elif entry == "system2":
            (top, part), name = system2_partition(), "system2"
        else:
            name = entry.get("name") or ("custom" if i == 0 else f"custom{i}")
            if "ring" in entry:
                counts = entry["ring"]
                part = contiguous_partition(counts["mic_counts"], counts["speaker_counts"])
                n = part.n_nodes
                top = ring_topology(n) if n > 1 else Topology(np.ones((1, 1), bool))
            else:
                top, part = table_system(entry["nodes"], n_mics, n_speakers)
        if (part.n_mics, part.n_speakers) != (n_mics, n_speakers):
            raise ExperimentError(
                f"system {name!r} partitions {part.n_mics} mics / {part.n_speakers} speakers "
                f"but the scene has {n_mics} / {n_speakers}")
        if name in used:
            raise ExperimentError(f"duplicate system name {name!r}")
        used.add(name)
        networks.append(DiffusionNetwork.build(top, part, config.combination_rule, name))
    return networks


def algorithm_labels(config: ExperimentConfig, networks):
    labels = ["cpm"] if config.algorithm in ("cpm", "both") else []
    return labels + [f"dpmd-{net.name}" for net in networks]


_ATF_CACHE: dict = {}


def nominal_atfs(config: ExperimentConfig, freq: float):
    """Unperturbed control and validation ATFs (validation may be None)."""
    key = (config.digest(), freq)
    if key in _ATF_CACHE:
        return _ATF_CACHE[key]
    geom = build_geometry(config)
    if config.atf_backend == "file":
        table = read_atf_file(config.atf_file, geom.n_bright, geom.n_dark, geom.n_speakers)
        if freq not in table:
            raise ExperimentError(f"{config.atf_file} has no record at {freq} Hz")
        result = table[freq]
    else:
        if config.atf_backend == "freefield":
            make = lambda g: freefield_atf(g, freq)  # noqa: E731
        else:
            make = lambda g: image_source_atf(g, freq, config.t60, config.fs,  # noqa: E731
                                              config.window_len, config.max_order)
        result = (make(geom), make(geom.validation_scene()))
    if len(_ATF_CACHE) > 256:
        _ATF_CACHE.clear()
    _ATF_CACHE[key] = result
    return result


def stream(config: ExperimentConfig, freq: float, run_index: int, role: str):
    ss = np.random.SeedSequence(config.seed,
                                spawn_key=(int(round(freq * 1000)), run_index,
                                           STREAM_ROLES[role]))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------------------
# single run

@dataclass
class RunTrace:
    """Per-iteration metrics of every algorithm in one run."""

    freq: float
    run_index: int
    step_size: float
    # traces[label][point_set] = (nmse_db, ac_db), each (T,)
    traces: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)  # final filters, (N, L) per label
    diverged: dict = field(default_factory=dict)  # label -> DivergenceError


def _draw_atfs(H_bar, T, variance, rng):
    if variance == 0:
        return np.broadcast_to(H_bar, (T,) + H_bar.shape)
    return H_bar + circular_gaussian(rng, (T,) + H_bar.shape, variance)


def _draw_targets(config, H, g_o, rng, geom_target):
    T, M, _ = H.shape
    if config.target_mode == "planewave":
        return np.broadcast_to(geom_target, (T, M))
    clean = H @ g_o
    if math.isinf(config.snr_db):
        return clean
    power = (np.abs(clean) ** 2).sum(axis=1)
    if np.any(power == 0):
        raise ExperimentError("oracle target has zero power; SNR is undefined")
    noise_var = power / M / 10 ** (config.snr_db / 10)
    return clean + circular_gaussian(rng, (T, M)) * np.sqrt(noise_var)[:, None]


def run_single(config: ExperimentConfig, freq: float | None = None, run_index: int = 0,
               networks=None) -> RunTrace:
    """
    One adaptive run at one frequency.

    At iteration n every algorithm sees H(n) = H_bar + V(n) and d(n). Metrics
    are a priori: they use the filter *before* the n-th update, so iteration 0
    is the all-zero filter. Validation metrics apply the same filter to the
    validation-point ATFs, which get their own perturbation and noise draws.
    """
    freq = config.run_frequencies[0] if freq is None else freq
    geom = build_geometry(config)
    H_bar, V_bar = nominal_atfs(config, freq)
    M, L = H_bar.shape
    if networks is None:
        networks = build_networks(config, M, L)
    labels = algorithm_labels(config, networks)
    T = config.iterations

    g_o = None
    if config.target_mode == "oracle":
        g_o = sample_oracle_filter(L, stream(config, freq, run_index, "oracle_filter"))
        d_fixed = d_val_fixed = None
    else:
        pw = dict(direction=config.planewave_direction, amplitude=config.planewave_amplitude)
        d_fixed = planewave_target(geom, freq, **pw).values
        d_val_fixed = planewave_target(geom.validation_scene(), freq, **pw).values

    H = _draw_atfs(H_bar.entries, T, config.perturbation_variance,
                   stream(config, freq, run_index, "atf_perturbation"))
    d = _draw_targets(config, H, g_o, stream(config, freq, run_index, "target_noise"), d_fixed)

    if config.step_size == "auto":
        mu = 0.5 * stability_bound(H[0])
    else:
        mu = float(config.step_size)

    hist = {label: np.zeros((T, L), dtype=complex) for label in labels}
    trace = RunTrace(freq, run_index, mu)
    g = np.zeros(L, dtype=complex) if "cpm" in labels else None
    G = {net.name: np.zeros((net.n_nodes, L), dtype=complex) for net in networks}
    mus = {net.name: np.full(net.n_nodes, mu) for net in networks}
    active = set(labels)

    def diverge(label, err):
        if not config.allow_divergence:
            raise err
        trace.diverged[label] = err
        hist[label][t:] = np.nan
        active.discard(label)

    for t in range(T):
        Ht, dt = H[t], d[t]
        if "cpm" in active:
            hist["cpm"][t] = g
            with np.errstate(over="ignore", invalid="ignore"):
                g = g - mu * (Ht.conj().T @ (Ht @ g - dt))
            if not np.all(np.isfinite(g)):
                diverge("cpm", DivergenceError(t, "cpm"))
        for net in networks:
            label = f"dpmd-{net.name}"
            if label not in active:
                continue
            hist[label][t] = net.rendered_filter(G[net.name])
            try:
                G[net.name] = net.step(G[net.name], Ht, dt, mus[net.name], t)
            except DivergenceError as err:
                diverge(label, err)

    if "cpm" in labels:
        trace.estimates["cpm"] = g[None, :]
    for net in networks:
        trace.estimates[f"dpmd-{net.name}"] = G[net.name]

    n_bright = H_bar.n_bright
    point_data = {"control": (H, d)}
    if V_bar is not None:
        Hv = _draw_atfs(V_bar.entries, T, config.perturbation_variance,
                        stream(config, freq, run_index, "validation_perturbation"))
        dv = _draw_targets(config, Hv, g_o,
                           stream(config, freq, run_index, "validation_noise"), d_val_fixed)
        point_data["validation"] = (Hv, dv)
    for label in labels:
        trace.traces[label] = {ps: metric_traces(Hs, ds, hist[label], n_bright)
                               for ps, (Hs, ds) in point_data.items()}
    return trace


def _work_item(args):
    config, freq, run_index = args
    try:
        return run_single(config, freq, run_index)
    except (DivergenceError, ExperimentError) as err:
        return err


# ---------------------------------------------------------------------------
# aggregation

@dataclass
class ResultSet:
    config: ExperimentConfig
    frequencies: list = field(default_factory=list)
    # curves[(freq, label, point_set)] = {"nmse": (R, T), "ac": (R, T)}
    curves: dict = field(default_factory=dict)
    # one row per (freq, label, point_set)
    summary: list = field(default_factory=list)
    step_sizes: dict = field(default_factory=dict)  # freq -> list over runs
    diverged: dict = field(default_factory=dict)  # (freq, label) -> count
    failed_bins: dict = field(default_factory=dict)  # freq -> message
    complexity: list = field(default_factory=list)

    def curve_stats(self, freq, label, point_set="control", metric="nmse"):
        runs = self.curves[(freq, label, point_set)][metric]
        return runs.mean(axis=0), runs.std(axis=0)

    def steady(self, freq, label, point_set="control"):
        for row in self.summary:
            if (row["freq_hz"], row["label"], row["point_set"]) == (freq, label, point_set):
                return row
        raise KeyError((freq, label, point_set))

    @property
    def labels(self):
        seen = []
        for row in self.summary:
            if row["label"] not in seen:
                seen.append(row["label"])
        return seen


def _aggregate(rs: ResultSet, freq, traces, keep_curves):
    config = rs.config
    window = config.steady_state_window
    rs.step_sizes[freq] = [tr.step_size for tr in traces]
    labels = list(traces[0].traces)
    for label in labels:
        ok = [tr for tr in traces if label not in tr.diverged]
        rs.diverged[(freq, label)] = len(traces) - len(ok)
        for ps in traces[0].traces[label]:
            if ok:
                nmse = np.array([tr.traces[label][ps][0] for tr in ok])
                ac = np.array([tr.traces[label][ps][1] for tr in ok])
                with np.errstate(over="ignore", invalid="ignore"):
                    nmse_ss = nmse[:, -window:].mean(axis=1)
                    ac_ss = ac[:, -window:].mean(axis=1)
                    row = {"nmse_ss_db": float(nmse_ss.mean()),
                           "nmse_ss_std_db": float(nmse_ss.std()),
                           "ac_ss_db": float(ac_ss.mean()), "ac_ss_std_db": float(ac_ss.std())}
                if keep_curves:
                    rs.curves[(freq, label, ps)] = {"nmse": nmse, "ac": ac}
            else:
                row = dict.fromkeys(("nmse_ss_db", "nmse_ss_std_db", "ac_ss_db", "ac_ss_std_db"),
                                    math.nan)
            rs.summary.append({"freq_hz": freq, "label": label, "point_set": ps,
                               "runs": len(ok), **row})


def resolve_jobs(jobs=None) -> int:
    if jobs is None:
        jobs = int(os.environ.get(JOBS_ENV, "1"))
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    return jobs


def _execute(config, freqs, jobs):
    items = [(config, f, r) for f in freqs for r in range(config.monte_carlo_runs)]
    if jobs == 1:
        results = map(_work_item, items)
        yield from results
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(_work_item, items, chunksize=max(1, len(items) // (4 * jobs)))


def _experiment(config: ExperimentConfig, freqs, jobs, keep_curves, fail_fast) -> ResultSet:
    rs = ResultSet(config, list(freqs))
    runs = config.monte_carlo_runs
    results = _execute(config, freqs, resolve_jobs(jobs))
    for freq in freqs:
        batch = [next(results) for _ in range(runs)]
        errors = [r for r in batch if isinstance(r, Exception)]
        if errors:
            err = errors[0]
            if fail_fast:
                raise err
            rs.failed_bins[freq] = str(err)
            continue
        _aggregate(rs, freq, batch, keep_curves)
    rs.complexity = complexity_report(config)
    return rs


def run_monte_carlo(config: ExperimentConfig, freq: float | None = None, jobs=None) -> ResultSet:
    """All Monte Carlo runs at one frequency, keeping the per-run learning curves."""
    freq = config.run_frequencies[0] if freq is None else freq
    return _experiment(config, [freq], jobs, keep_curves=True, fail_fast=True)


def frequency_sweep(config: ExperimentConfig, jobs=None, keep_curves=False) -> ResultSet:
    """Steady-state summaries for every sweep frequency; failed bins are recorded, not raised."""
    return _experiment(config, list(config.sweep_frequencies), jobs, keep_curves,
                       fail_fast=False)


def iterations_to_reach(nmse_runs, level_db):
    """First iteration at which each run's NMSE is at or below ``level_db`` (nan if never)."""
    hit = np.asarray(nmse_runs) <= level_db
    first = hit.argmax(axis=1).astype(float)
    first[~hit.any(axis=1)] = np.nan
    return first


# ---------------------------------------------------------------------------
# complexity

def measured_processing_counts(network: DiffusionNetwork | None, M: int, L: int, seed=0):
    """
    Count the arithmetic of one reference filter update on random data.

    Returns ``(additions, multiplications)`` for the centralized update when
    ``network`` is None, otherwise one pair per node.
    """
    rng = np.random.default_rng(seed)
    H = circular_gaussian(rng, (M, L))
    d = circular_gaussian(rng, M)
    if network is None:
        counter = OpCounter()
        cpm_step(CpmState(np.zeros(L, complex), 0.1), H, d, counter)
        return counter.additions, counter.multiplications
    counters = [OpCounter() for _ in range(network.n_nodes)]
    state = NetworkState.zeros(network.n_nodes, L, 0.1)
    dpmd_iteration(state, H, d, network.partition, network.combination, counters=counters)
    return [(c.additions, c.multiplications) for c in counters]


def complexity_report(config: ExperimentConfig):
    geom = build_geometry(config)
    M, L, F = geom.n_mics, geom.n_speakers, config.window_len
    rows = []
    prof = complexity_cpm(M, L, F)
    adds, muls = measured_processing_counts(None, M, L)
    rows.append({"algorithm": "cpm", "system": "centralized", "node": -1, "M": M,
                 "L_k": L, "C_k": M, "N_k": 1, "L": L, "F": F,
                 "additions": prof.additions, "multiplications": prof.multiplications,
                 "processing_additions": prof.processing_additions,
                 "processing_multiplications": prof.processing_multiplications,
                 "measured_additions": adds, "measured_multiplications": muls})
    if config.algorithm == "cpm":
        return rows
    for net in build_networks(config, M, L):
        measured = measured_processing_counts(net, M, L)
        degrees = net.topology.degrees
        for k in range(net.n_nodes):
            c_k = len(net.partition.mic_sets[k])
            l_k = len(net.partition.speaker_sets[k])
            prof = complexity_dpmd(c_k, l_k, c_k, int(degrees[k]), L, F)
            rows.append({"algorithm": "dpmd", "system": net.name, "node": k, "M": c_k,
                         "L_k": l_k, "C_k": c_k, "N_k": int(degrees[k]), "L": L, "F": F,
                         "additions": prof.additions,
                         "multiplications": prof.multiplications,
                         "processing_additions": prof.processing_additions,
                         "processing_multiplications": prof.processing_multiplications,
                         "measured_additions": measured[k][0],
                         "measured_multiplications": measured[k][1]})
    return rows


# ---------------------------------------------------------------------------
# output

LEARNING_COLUMNS = ("iteration", "algorithm", "point_set", "nmse_mean_db", "nmse_std_db",
                    "ac_mean_db", "ac_std_db")
SWEEP_COLUMNS = ("freq_hz", "algorithm", "system", "nmse_ss_db", "ac_ss_db")
COMPLEXITY_COLUMNS = ("algorithm", "system", "node", "M", "L_k", "C_k", "N_k", "L", "F",
                      "additions", "multiplications", "processing_additions",
                      "processing_multiplications", "measured_additions",
                      "measured_multiplications")


def fmt(x) -> str:
    """17 significant digits, enough for an exact double round trip."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.16e}"


def split_label(label):
    if label == "cpm":
        return "cpm", "centralized"
    return "dpmd", label.split("-", 1)[1]


def _write_csv(path, columns, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_results(rs: ResultSet, directory) -> dict:
    """Write the CSV files and provenance; returns ``{name: path}``."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc

    learning = []
    for (freq, label, ps), data in rs.curves.items():
        with np.errstate(over="ignore", invalid="ignore"):
            n_mean, n_std = data["nmse"].mean(axis=0), data["nmse"].std(axis=0)
            a_mean, a_std = data["ac"].mean(axis=0), data["ac"].std(axis=0)
        for n in range(len(n_mean)):
            learning.append((n, label, ps, n_mean[n], n_std[n], a_mean[n], a_std[n]))
    sweep = []
    for row in rs.summary:
        if row["point_set"] != "control":
            continue
        alg, system = split_label(row["label"])
        sweep.append((float(row["freq_hz"]), alg, system, row["nmse_ss_db"], row["ac_ss_db"]))
    for freq in rs.failed_bins:
        sweep.append((float(freq), "failed", "-", math.nan, math.nan))
    complexity = [tuple(r[c] for c in COMPLEXITY_COLUMNS) for r in rs.complexity]

    paths = {name: out / name for name in ("learning_curves.csv", "sweep.csv",
                                           "complexity.csv", "provenance.json")}
    _write_csv(paths["learning_curves.csv"], LEARNING_COLUMNS, learning)
    _write_csv(paths["sweep.csv"], SWEEP_COLUMNS, sweep)
    _write_csv(paths["complexity.csv"], COMPLEXITY_COLUMNS, complexity)
    provenance = {
        "package_version": __version__,
        "config_sha256": rs.config.digest(),
        "config": rs.config.to_dict(),
        "seed": rs.config.seed,
        "seed_rule": SEED_RULE,
        "shared_realizations": "all algorithms in a run use identical ATF perturbations "
                               "and target noise",
        "frequencies_hz": [float(f) for f in rs.frequencies],
        "step_sizes": {fmt(float(f)): [float(m) for m in v] for f, v in rs.step_sizes.items()},
        "diverged_runs": {f"{fmt(float(f))}/{label}": n for (f, label), n in rs.diverged.items()
                          if n},
        "failed_bins": {fmt(float(f)): msg for f, msg in rs.failed_bins.items()},
        "steady_state": rs.summary,
        "created_unix": time.time(),
    }
    try:
        paths["provenance.json"].write_text(json.dumps(provenance, indent=2, default=float),
                                            encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {paths['provenance.json']}: {exc}") from exc
    return paths


def read_csv(path):
    """Parse one of the written CSVs back into a list of dicts (numbers as floats)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            rows.append(parsed)
    return rows
