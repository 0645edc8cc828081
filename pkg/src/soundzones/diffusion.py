"""
Adapt-then-combine diffusion over a network of pressure-matching nodes.

Node k owns control mics ``C_k`` and loudspeakers ``S_k``. In the adapt phase
it takes an LMS step on its own mic rows only; in the combine phase it forms a
convex combination of its neighbours' intermediate estimates with the weights
``A[l, k]`` (columns of ``A`` sum to one).

Two execution paths exist. ``adapt``/``combine``/``dpmd_iteration`` are the
per-node reference implementation: each node is handed only its local rows and
its neighbours' messages. ``DiffusionNetwork.step`` is the vectorized
equivalent used for long Monte Carlo runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import connected_components

from .pm import DivergenceError, OpCounter, _entries, _values


class TopologyError(ValueError):
    pass


class PartitionError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """A node did not receive exactly the messages of its neighbourhood."""


@dataclass(frozen=True)
class Topology:
    adjacency: np.ndarray  # (N, N) bool, symmetric, diagonal True

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool).copy()
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise TopologyError("adjacency must be a non-empty square matrix")
        if not np.array_equal(adj, adj.T):
            raise TopologyError("adjacency must be symmetric")
        np.fill_diagonal(adj, True)
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise TopologyError(f"graph is not connected ({n_comp} components)")
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, n_nodes, edges):
        adj = np.eye(n_nodes, dtype=bool)
        for a, b in edges:
            adj[a, b] = adj[b, a] = True
        return cls(adj)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def neighborhoods(self) -> list[tuple[int, ...]]:
        """Neighbours of each node, self included, in ascending order."""
        return [tuple(np.flatnonzero(row).tolist()) for row in self.adjacency]

    @property
    def degrees(self) -> np.ndarray:
        """Neighbourhood sizes |N_k| (self included)."""
        return self.adjacency.sum(axis=1)


def ring_topology(n_nodes: int) -> Topology:
    if n_nodes < 2:
        raise TopologyError("a ring needs at least two nodes")
    return Topology.from_edges(n_nodes, [(k, (k + 1) % n_nodes) for k in range(n_nodes)])


@dataclass(frozen=True)
class Partition:
    mic_sets: tuple[tuple[int, ...], ...]
    speaker_sets: tuple[tuple[int, ...], ...]
    n_mics: int
    n_speakers: int

    def __post_init__(self):
        mic_sets = tuple(tuple(int(i) for i in s) for s in self.mic_sets)
        speaker_sets = tuple(tuple(int(i) for i in s) for s in self.speaker_sets)
        object.__setattr__(self, "mic_sets", mic_sets)
        object.__setattr__(self, "speaker_sets", speaker_sets)
        if len(mic_sets) != len(speaker_sets):
            raise PartitionError("mic_sets and speaker_sets must list the same nodes")
        for name, sets, total in (("mic", mic_sets, self.n_mics),
                                  ("speaker", speaker_sets, self.n_speakers)):
            flat = [i for s in sets for i in s]
            if len(flat) != len(set(flat)):
                raise PartitionError(f"{name} sets overlap")
            if sorted(flat) != list(range(total)):
                raise PartitionError(f"{name} sets do not cover 0..{total - 1} exactly")
        for k, s in enumerate(mic_sets):
            if not s:
                raise PartitionError(f"node {k} owns no microphones")

    @property
    def n_nodes(self) -> int:
        return len(self.mic_sets)

    def mic_mask(self) -> np.ndarray:
        """(M, N) float mask, 1 where mic m belongs to node k."""
        mask = np.zeros((self.n_mics, self.n_nodes))
        for k, s in enumerate(self.mic_sets):
            mask[list(s), k] = 1.0
        return mask

    def speaker_owner(self) -> np.ndarray:
        """Owning node of every loudspeaker."""
        owner = np.empty(self.n_speakers, dtype=int)
        for k, s in enumerate(self.speaker_sets):
            owner[list(s)] = k
        return owner


def contiguous_partition(mic_counts, speaker_counts) -> Partition:
    """Hand out mics and speakers to nodes in index order, ``counts[k]`` each."""
    if len(mic_counts) != len(speaker_counts):
        raise PartitionError("mic_counts and speaker_counts differ in length")
    mic_edges = np.concatenate([[0], np.cumsum(mic_counts)])
    spk_edges = np.concatenate([[0], np.cumsum(speaker_counts)])
    mics = [tuple(range(mic_edges[k], mic_edges[k + 1])) for k in range(len(mic_counts))]
    spks = [tuple(range(spk_edges[k], spk_edges[k + 1])) for k in range(len(speaker_counts))]
    return Partition(mics, spks, int(mic_edges[-1]), int(spk_edges[-1]))


SYSTEM1_MIC_COUNTS = (4, 4, 4, 4, 4, 4, 4, 2, 2)
SYSTEM2_SPEAKER_COUNTS = (3, 2, 2, 2)


def system1_partition(mic_counts=SYSTEM1_MIC_COUNTS):
    """
    Nine-node ring, one speaker per node.

    Bright mics 0-15 go to nodes 0-3 and dark mics 16-31 to nodes 4-8 with the
    default counts, so no node straddles the two zones.
    """
    return ring_topology(9), contiguous_partition(mic_counts, (1,) * 9)


def system2_partition(speaker_counts=SYSTEM2_SPEAKER_COUNTS):
    """Four-node ring, eight mics per node (two bright nodes, two dark nodes)."""
    return ring_topology(4), contiguous_partition((8, 8, 8, 8), speaker_counts)


def table_system(nodes, n_mics, n_speakers):
    """
    Build a system from an explicit node table.

    Each entry is a mapping with ``mics``, ``speakers`` and ``neighbors``
    (0-based indices; ``neighbors`` need not list the node itself).
    """
    edges = [(k, int(j)) for k, node in enumerate(nodes) for j in node.get("neighbors", [])]
    for k, j in edges:
        if not 0 <= j < len(nodes):
            raise TopologyError(f"node {k} lists unknown neighbour {j}")
    top = Topology.from_edges(len(nodes), edges)
    part = Partition([node["mics"] for node in nodes],
                     [node.get("speakers", []) for node in nodes], n_mics, n_speakers)
    return top, part


@dataclass(frozen=True)
class CombinationMatrix:
    weights: np.ndarray  # (N, N), weights[l, k] = a_lk
    topology: Topology

    def __post_init__(self):
        A = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", A)
        if A.shape != self.topology.adjacency.shape:
            raise ValueError("combination matrix does not match the topology")
        if np.any(A < 0):
            raise ValueError("combination weights must be non-negative")
        if np.any(A[~self.topology.adjacency] != 0):
            raise ValueError("non-zero weight between non-neighbours")
        if not np.allclose(A.sum(axis=0), 1.0, rtol=0, atol=1e-12):
            raise ValueError("columns of the combination matrix must sum to one")


def uniform_combination(top: Topology) -> CombinationMatrix:
    A = top.adjacency / top.degrees[None, :]
    return CombinationMatrix(A, top)


def metropolis_combination(top: Topology) -> CombinationMatrix:
    """a_lk = 1 / max(|N_k|, |N_l|) between neighbours, remainder on the diagonal."""
    n = top.degrees
    A = np.where(top.adjacency, 1.0 / np.maximum(n[:, None], n[None, :]), 0.0)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, 1.0 - A.sum(axis=0))
    return CombinationMatrix(A, top)


def combination_matrix(top: Topology, rule: str = "uniform") -> CombinationMatrix:
    rules = {"uniform": uniform_combination, "metropolis": metropolis_combination}
    if rule not in rules:
        raise ValueError(f"unknown combination rule {rule!r}")
    return rules[rule](top)


# ---------------------------------------------------------------------------
# per-node reference implementation

@dataclass(frozen=True)
class NetworkState:
    estimates: np.ndarray  # (N, L) complex, row k is g_k
    intermediates: np.ndarray  # (N, L) complex, row k is psi_k
    step_sizes: np.ndarray  # (N,)
    iteration: int = 0

    @classmethod
    def zeros(cls, n_nodes, L, step_size):
        mu = np.broadcast_to(np.asarray(step_size, dtype=float), (n_nodes,)).copy()
        if np.any(mu < 0):
            raise ValueError("step sizes must be non-negative")
        z = np.zeros((n_nodes, L), dtype=complex)
        return cls(z, z.copy(), mu)


def local_view(H, d, part: Partition, k: int):
    """The ATF rows and target entries node k is allowed to see."""
    rows = list(part.mic_sets[k])
    return _entries(H)[rows], _values(d)[rows]


def adapt(g_k, mu_k, H_rows, d_rows, counter: OpCounter | None = None, node=None,
          iteration=0):
    """psi_k = g_k - mu_k * sum over local mics of H(l,:)^H e_l."""
    with np.errstate(over="ignore", invalid="ignore"):
        e = H_rows @ g_k - d_rows
        psi = g_k - mu_k * (H_rows.conj().T @ e)
    if counter is not None:
        n_rows, L = H_rows.shape
        counter.gradient(n_rows, L)
        counter.scale(L)
        counter.subtract(L)
    if not np.all(np.isfinite(psi)):
        raise DivergenceError(iteration, "dpmd", node)
    return psi


def combine(k, neighbor_psis, A: CombinationMatrix, counter: OpCounter | None = None):
    """g_k as the a_lk-weighted sum of the neighbourhood's intermediates."""
    hood = A.topology.neighborhoods[k]
    if set(neighbor_psis) != set(hood):
        missing = sorted(set(hood) - set(neighbor_psis))
        extra = sorted(set(neighbor_psis) - set(hood))
        raise ProtocolError(f"node {k}: missing messages from {missing}, unexpected {extra}")
    g = A.weights[hood[0], k] * neighbor_psis[hood[0]]
    for l in hood[1:]:
        g = g + A.weights[l, k] * neighbor_psis[l]
    if counter is not None:
        counter.weighted_sum(len(hood), len(g))
    return g


def dpmd_iteration(state: NetworkState, H_n, d_n, part: Partition, A: CombinationMatrix,
                   order=None, counters=None) -> NetworkState:
    """
    One synchronous adapt-then-combine iteration.

    ``order`` permutes the node evaluation order inside each phase; the result
    does not depend on it. ``counters`` is an optional per-node list of
    ``OpCounter``.
    """
    N = part.n_nodes
    order = range(N) if order is None else order
    psis = {}
    for k in order:
        H_rows, d_rows = local_view(H_n, d_n, part, k)
        psis[k] = adapt(state.estimates[k], state.step_sizes[k], H_rows, d_rows,
                        None if counters is None else counters[k], node=k,
                        iteration=state.iteration)
    hoods = A.topology.neighborhoods
    new = {}
    for k in order:
        new[k] = combine(k, {l: psis[l] for l in hoods[k]}, A,
                         None if counters is None else counters[k])
    return replace(state,
                   estimates=np.array([new[k] for k in range(N)]),
                   intermediates=np.array([psis[k] for k in range(N)]),
                   iteration=state.iteration + 1)


def disagreement(state_or_estimates) -> float:
    """Largest pairwise distance between node estimates."""
    G = getattr(state_or_estimates, "estimates", state_or_estimates)
    G = np.asarray(G)
    if G.shape[0] < 2:
        return 0.0
    diff = G[:, None, :] - G[None, :, :]
    return float(np.sqrt((np.abs(diff) ** 2).sum(axis=-1)).max())


# ---------------------------------------------------------------------------
# vectorized path

@dataclass
class DiffusionNetwork:
    """A topology, partition and combination rule bundled for fast iteration."""

    topology: Topology
    partition: Partition
    combination: CombinationMatrix
    name: str = "custom"
    _mask: np.ndarray = field(init=False, repr=False)
    _owner: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.topology.n_nodes != self.partition.n_nodes:
            raise ValueError("topology and partition disagree on the node count")
        self._mask = self.partition.mic_mask()
        self._owner = self.partition.speaker_owner()

    @classmethod
    def build(cls, topology, partition, rule="uniform", name="custom"):
        return cls(topology, partition, combination_matrix(topology, rule), name)

    @property
    def n_nodes(self) -> int:
        return self.topology.n_nodes

    def step(self, G, H, d, mu, iteration=0):
        """Vectorized ``dpmd_iteration`` on the (N, L) estimate array ``G``."""
        with np.errstate(over="ignore", invalid="ignore"):
            E = H @ G.T - d[:, None]  # column k: node k's estimate against every mic
            psi = G - mu[:, None] * (H.conj().T @ (self._mask * E)).T
        if not np.all(np.isfinite(psi)):
            node = int(np.flatnonzero(~np.isfinite(psi).all(axis=1))[0])
            raise DivergenceError(iteration, f"dpmd-{self.name}", node)
        return self.combination.weights.T @ psi

    def rendered_filter(self, G):
        """Loudspeaker weights actually played: each node drives its own speakers."""
        return G[self._owner, np.arange(G.shape[1])]
