"""Dataset assembly: dynamics + positional encodings + container round trip.

A dataset couples one graph with one normalized trajectory. The noisy field
`u` is what models train on; the pre-noise `u_clean` rides along so held-out
evaluation can score against the actual signal instead of the noise floor.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import container, dynamics, graphs


class DatasetError(Exception):
    pass


@dataclass
class Dataset:
    graph: graphs.Graph
    u: np.ndarray          # (N, T) in [0,1], noise applied
    u_clean: np.ndarray    # (N, T) in [0,1], pre-noise
    pe: np.ndarray         # (N, n_pe) Laplacian eigenvector encodings
    times: np.ndarray      # (T,)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n, t = self.u.shape
        if self.u_clean.shape != (n, t):
            raise DatasetError("u_clean shape mismatch")
        if self.pe.shape[0] != n or len(self.times) != t:
            raise DatasetError("pe/times shape mismatch")
        if self.graph.n != n:
            raise DatasetError("graph size != trajectory rows")
        for name, arr in (("u", self.u), ("u_clean", self.u_clean),
                          ("pe", self.pe)):
            if not np.all(np.isfinite(arr)):
                raise DatasetError(f"non-finite entries in {name}")

    @property
    def n(self):
        return self.u.shape[0]

    @property
    def t_count(self):
        return self.u.shape[1]


def _finish(graph, times, raw, n_pe, noise, noise_seed, meta):
    clean, lo, hi = dynamics.normalize_minmax(raw)
    noisy = dynamics.add_noise(clean, noise, noise_seed)
    pe, pe_vals = graphs.laplacian_pe(graph, n_pe)
    meta.update({
        "norm_lo": lo, "norm_hi": hi, "noise_std_frac": noise,
        "n_pe": n_pe, "pe_eigenvalues": [float(v) for v in pe_vals],
        "dt": float(times[1] - times[0]),
        "graph": dict(graph.meta),
    })
    return Dataset(graph, noisy, clean, pe, times, meta)


def build_kuramoto_dataset(graph, config=None, n_pe=16, noise=0.02,
                           observable="sin"):
    """Simulate phases and store a bounded observable of them.

    observable "sin" stores sin(phi); "phase" stores the raw phases (bounded
    over the finite horizon). Both are then min-max normalized to [0,1].
    The sine wraps each oscillator onto a fixed waveform; raw phases keep the
    per-step motion proportional to omega everywhere, which makes the
    persistence baseline drift-limited instead of turning-point-limited."""
    if observable not in ("sin", "phase"):
        raise DatasetError(f"unknown observable {observable!r}")
    config = config or dynamics.KuramotoConfig()
    times, phi, omega = dynamics.simulate_kuramoto(graph, config)
    raw = np.sin(phi) if observable == "sin" else phi
    meta = {
        "kind": "kuramoto",
        "config": dataclasses.asdict(config),
        "observable": f"{observable}_minmax",
    }
    ds = _finish(graph, times, raw, n_pe, noise,
                 noise_seed=config.seed + 7919, meta=meta)
    ds.meta["omega"] = [float(w) for w in omega]
    return ds


def build_burgers_dataset(graph, config=None, n_pe=16, noise=0.02):
    config = config or dynamics.BurgersConfig()
    times, u, fraction = dynamics.simulate_burgers(graph, config)
    meta = {
        "kind": "burgers",
        "config": dataclasses.asdict(config),
        "nonlinear_fraction": fraction,
    }
    return _finish(graph, times, u, n_pe, noise,
                   noise_seed=config.seed + 7919, meta=meta)


def save_dataset(path, ds):
    blocks = {
        "indptr": ds.graph.indptr,
        "indices": ds.graph.indices,
        "u": ds.u,
        "u_clean": ds.u_clean,
        "pe": ds.pe,
        "times": ds.times,
    }
    if ds.graph.weights is not None:
        blocks["graph_weights"] = ds.graph.weights
    meta = dict(ds.meta)
    meta["directed"] = ds.graph.directed
    container.write(path, "dataset", meta, blocks)


def load_dataset(path):
    _, meta, blocks = container.read(path, expect_kind="dataset")
    graph = graphs.Graph(blocks["indptr"], blocks["indices"],
                         blocks.get("graph_weights"),
                         meta.get("directed", False),
                         meta.get("graph", {}))
    return Dataset(graph, blocks["u"], blocks["u_clean"], blocks["pe"],
                   blocks["times"], meta)
