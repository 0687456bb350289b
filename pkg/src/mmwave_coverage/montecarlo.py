"""Snapshot Monte Carlo simulator for the downlink of a mmWave PPP network.

Every snapshot draws from its own random stream, derived from (seed,
stream_index) with ``SeedSequence.spawn_key``, so results do not depend on how
snapshots are split across worker processes. Within a snapshot the draws are
made in a fixed order: BS count, positions, LOS uniforms, shadowing, gain
atoms, fading, then the serving-cell load.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .curves import KINDS, Z99, CoverageCurve, wilson_interval
from .propagation import D_MIN

MIN_EXPECTED_BS = 500
DEFAULT_RADIUS = 2000.0


def min_radius(bs_density):
    """Disk radius holding MIN_EXPECTED_BS base stations on average."""
    return math.sqrt(MIN_EXPECTED_BS / (math.pi * bs_density))


def default_radius(bs_density):
    return max(DEFAULT_RADIUS, min_radius(bs_density))


def isd(bs_density):
    return 2.0 / math.sqrt(math.pi * bs_density)


def density_for_isd(isd_m):
    return 4.0 / (math.pi * isd_m**2)


@dataclass(frozen=True)
class Shadowing:
    sigma_los_db: float
    sigma_nlos_db: float


@dataclass(frozen=True)
class SimConfig:
    network: object
    sim_radius: float | None = None
    snapshots: int = 100_000
    seed: int = 0
    shadowing: Shadowing | None = None
    buildings: object = None  # BuildingSet switches to polygon blocking
    rate_load: str = "pmf"  # or "measured"

    def __post_init__(self):
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")
        if self.rate_load not in ("pmf", "measured"):
            raise ValueError("rate_load must be 'pmf' or 'measured'")
        if self.buildings is None:
            if self.sim_radius is None:
                object.__setattr__(self, "sim_radius", default_radius(self.network.bs_density))
            need = min_radius(self.network.bs_density)
            if self.sim_radius < need * (1 - 1e-12):
                raise ValueError(
                    f"sim_radius {self.sim_radius:.1f} m holds fewer than {MIN_EXPECTED_BS} BSs on average; need >= {need:.1f} m"
                )

    def with_(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


def stream(seed, stream_index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(stream_index),))))


@dataclass
class Snapshot:
    """One network realization seen from the typical user at the origin."""

    distance: np.ndarray
    los: np.ndarray
    gain: np.ndarray  # directivity gain, serving entry is M_BS M_MS
    fading: np.ndarray
    shadow: np.ndarray
    serving: int
    noise_power: float
    sinr: float
    inr: float
    snr: float
    resamples: int = 0
    load: int = 1
    positions: np.ndarray | None = field(default=None, repr=False)

    def received(self, pathloss):
        return _received(pathloss, self.distance, self.los, self.gain, self.fading, self.shadow)

    def recompute(self, pathloss):
        """(SINR, INR, SNR) from the stored link fields."""
        rx = self.received(pathloss)
        return _ratios(rx, self.serving, self.noise_power)

    @property
    def serving_link(self):
        s = self.serving
        return {
            "distance": float(self.distance[s]),
            "state": "LOS" if self.los[s] else "NLOS",
            "gain": float(self.gain[s]),
            "fading": float(self.fading[s]),
        }

    def interferers(self):
        keep = np.arange(len(self.distance)) != self.serving
        return {
            "distance": self.distance[keep],
            "los": self.los[keep],
            "gain": self.gain[keep],
            "fading": self.fading[keep],
        }

    def to_json(self):
        inter = self.interferers()
        return {
            "serving": self.serving_link,
            "interferers": [
                {"distance": float(d), "state": "LOS" if l else "NLOS", "gain": float(g), "fading": float(h)}
                for d, l, g, h in zip(inter["distance"], inter["los"], inter["gain"], inter["fading"])
            ],
            "sinr": self.sinr,
            "inr": self.inr,
            "snr": self.snr,
            "load": self.load,
            "resamples": self.resamples,
        }


def _received(pathloss, distance, los, gain, fading, shadow):
    return gain * fading * (pathloss.gain(distance, los) * shadow)


def _ratios(rx, serving, noise):
    signal = rx[serving]
    interference = float(rx.sum() - signal) if len(rx) > 1 else 0.0
    interference = max(interference, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = float(signal / (interference + noise)) if interference + noise > 0 else math.inf
        inr = float(interference / noise) if noise > 0 else (math.inf if interference > 0 else 0.0)
        snr = float(signal / noise) if noise > 0 else math.inf
    return sinr, inr, snr


def _place_statistical(sim, rng):
    lam = sim.network.bs_density
    mean = lam * math.pi * (sim.sim_radius**2 - D_MIN**2)
    resamples = 0
    n = rng.poisson(mean)
    while n == 0:
        resamples += 1
        n = rng.poisson(mean)
    r = np.sqrt(rng.uniform(D_MIN**2, sim.sim_radius**2, n))
    theta = rng.uniform(0.0, 2 * math.pi, n)
    los = rng.random(n) < sim.network.los_model(r)
    pos = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return r, los, pos, resamples


def _place_buildings(sim, rng):
    from .geodata import central_rectangle, sample_outdoor

    bset = sim.buildings
    user = sample_outdoor(bset, 1, rng, central_rectangle(bset))[0]
    mean = sim.network.bs_density * bset.region_area
    resamples = 0
    n = rng.poisson(mean)
    while n == 0:
        resamples += 1
        n = rng.poisson(mean)
    pos = sample_outdoor(bset, n, rng)
    close = np.hypot(*(pos - user).T) < D_MIN
    while close.any():
        pos[close] = sample_outdoor(bset, int(close.sum()), rng)
        close = np.hypot(*(pos - user).T) < D_MIN
    rel = pos - user
    r = np.hypot(rel[:, 0], rel[:, 1])
    los = ~bset.segments_blocked(np.broadcast_to(user, pos.shape), pos)
    return r, los, rel, resamples


def _shadow(sim, rng, los):
    if sim.shadowing is None:
        return np.ones(len(los))
    sigma = np.where(los, sim.shadowing.sigma_los_db, sim.shadowing.sigma_nlos_db)
    return 10.0 ** (sigma * rng.standard_normal(len(los)) / 10.0)


def _serving_index(path_gain, distance):
    # largest path gain, then the closer BS, then generation order
    order = np.lexsort((np.arange(len(distance)), distance, -path_gain))
    return int(order[0])


def sample_snapshot(sim, stream_index):
    net = sim.network
    rng = stream(sim.seed, stream_index)
    if sim.buildings is None:
        r, los, pos, resamples = _place_statistical(sim, rng)
    else:
        r, los, pos, resamples = _place_buildings(sim, rng)
    n = len(r)
    shadow = _shadow(sim, rng, los)
    gp = net.gains
    atoms = np.searchsorted(np.cumsum(gp.probs)[:-1], rng.random(n), side="right")
    gain = np.asarray(gp.gains)[atoms]
    nu = np.where(los, net.fading.nu_los, net.fading.nu_nlos).astype(float)
    fading = rng.standard_gamma(nu) / nu
    serving = _serving_index(net.pathloss.gain(r, los) * shadow, r)
    gain[serving] = gp.serving_gain
    load = 1 + int(rng.negative_binomial(4.5, 3.5 / (3.5 + net.load_ratio)))
    snap = Snapshot(r, los, gain, fading, shadow, serving, net.noise_power, 0.0, 0.0, 0.0, resamples, load, pos)
    snap.sinr, snap.inr, snap.snr = snap.recompute(net.pathloss)
    if sim.rate_load == "measured":
        snap.load = _measured_load(sim, snap, rng)
    return snap


def _measured_load(sim, snap, rng):
    """1 + users of an explicit user PPP whose best BS is the typical user's."""
    net = sim.network
    pos = snap.positions
    centre = pos[snap.serving]
    reach = 3.0 * max(isd(net.bs_density), 2.0 * float(snap.distance[snap.serving]))
    if sim.buildings is None:
        reach = min(reach, sim.sim_radius)
    n_users = rng.poisson(net.user_density * math.pi * reach**2)
    rad = reach * np.sqrt(rng.random(n_users))
    th = rng.uniform(0.0, 2 * math.pi, n_users)
    users = centre + np.column_stack([rad * np.cos(th), rad * np.sin(th)])
    count = 0
    for s in range(0, n_users, 64):
        u = users[s : s + 64]
        d = np.maximum(np.hypot(u[:, None, 0] - pos[None, :, 0], u[:, None, 1] - pos[None, :, 1]), D_MIN)
        los = rng.random(d.shape) < net.los_model(d)
        shadow = _shadow(sim, rng, los.ravel()).reshape(d.shape)
        pg = net.pathloss.gain(d, los) * shadow
        count += int(np.sum(np.argmax(pg, axis=1) == snap.serving))
    return 1 + count


@dataclass
class SnapshotBatch:
    """Per-snapshot summaries, ordered by stream index."""

    sinr: np.ndarray
    inr: np.ndarray
    snr: np.ndarray
    serving_distance: np.ndarray
    serving_los: np.ndarray
    load: np.ndarray
    n_bs: np.ndarray
    resamples: int
    bandwidth: float

    @property
    def size(self):
        return len(self.sinr)

    @property
    def sir(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.inr > 0, self.snr / self.inr, np.inf)

    @property
    def rate(self):
        return self.bandwidth / self.load * np.log2(1.0 + self.sinr)

    def metric(self, kind):
        return {"SINR": self.sinr, "SNR": self.snr, "INR": self.inr, "SIR": self.sir, "RATE": self.rate}[kind]

    @classmethod
    def concat(cls, parts):
        return cls(
            *(np.concatenate([getattr(p, k) for p in parts]) for k in ("sinr", "inr", "snr", "serving_distance", "serving_los", "load", "n_bs")),
            resamples=sum(p.resamples for p in parts),
            bandwidth=parts[0].bandwidth,
        )


def _run_chunk(sim, lo, hi):
    n = hi - lo
    out = {k: np.empty(n) for k in ("sinr", "inr", "snr", "serving_distance")}
    los = np.empty(n, bool)
    load = np.empty(n, np.int64)
    n_bs = np.empty(n, np.int64)
    resamples = 0
    for i in range(n):
        s = sample_snapshot(sim, lo + i)
        out["sinr"][i], out["inr"][i], out["snr"][i] = s.sinr, s.inr, s.snr
        out["serving_distance"][i] = s.distance[s.serving]
        los[i] = s.los[s.serving]
        load[i] = s.load
        n_bs[i] = len(s.distance)
        resamples += s.resamples
    return SnapshotBatch(out["sinr"], out["inr"], out["snr"], out["serving_distance"], los, load, n_bs, resamples, sim.network.bandwidth)


def _chunks(n, threads):
    size = max(1, math.ceil(n / (4 * threads)))
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def simulate(sim, threads=1):
    """All snapshots of ``sim``; identical output for any ``threads``."""
    n = sim.snapshots
    if threads <= 1 or n < 64:
        return _run_chunk(sim, 0, n)
    spans = _chunks(n, threads)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_run_chunk, [sim] * len(spans), [a for a, _ in spans], [b for _, b in spans]))
    return SnapshotBatch.concat(parts)


def ccdf_from_batch(batch, kind, thresholds, fingerprint="", z=Z99):
    """Fraction of snapshots whose metric exceeds each threshold, with Wilson CIs.

    Thresholds are in dB except for RATE (bps).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    t = np.asarray(thresholds, dtype=float)
    lin = t if kind == "RATE" else 10.0 ** (t / 10.0)
    values = np.sort(batch.metric(kind))
    hits = batch.size - np.searchsorted(values, lin, side="right")
    lo, hi = wilson_interval(hits, batch.size, z)
    return CoverageCurve(
        kind, t, hits / batch.size, fingerprint, lo, hi,
        meta={"source": "monte-carlo", "snapshots": batch.size, "resamples": batch.resamples},
    )


def empirical_ccdf(sim, kind, thresholds, threads=1):
    if sim.snapshots < 1000:
        raise ValueError("empirical_ccdf needs at least 10^3 snapshots")
    return ccdf_from_batch(simulate(sim, threads), kind, thresholds, sim.network.fingerprint())


@dataclass(frozen=True)
class SweepPoint:
    density: float
    isd: float
    value: float
    ci_low: float
    ci_high: float
    sim_radius: float


def density_sweep(sim, densities, metric="coverage_at_T", t_db=10.0, threads=1, sim_radius=None):
    """Coverage (SINR > T) or INR exceedance (INR > T) across BS densities.

    Each density reuses ``sim`` with the BS density replaced. The simulation
    radius is the default for that density unless ``sim_radius`` is given, in
    which case it is raised to the 500-BS minimum where needed.
    """
    if len(densities) < 3:
        raise ValueError("a sweep needs at least three densities")
    kind = {"coverage_at_T": "SINR", "inr_exceedance": "INR"}.get(metric)
    if kind is None:
        raise ValueError(f"unknown metric {metric!r}")
    out = []
    for lam in densities:
        net = sim.network.with_(bs_density=float(lam))
        radius = None
        if sim.buildings is None:
            radius = default_radius(lam) if sim_radius is None else max(sim_radius, min_radius(lam))
        sub = sim.with_(network=net, sim_radius=radius)
        curve = ccdf_from_batch(simulate(sub, threads), kind, [t_db])
        out.append(SweepPoint(float(lam), isd(lam), float(curve.probs[0]), float(curve.ci_low[0]), float(curve.ci_high[0]), radius or 0.0))
    return out


@dataclass(frozen=True)
class LoadMeasurement:
    counts: np.ndarray  # counts[n] = snapshots whose serving cell held n users
    snapshots: int

    @property
    def pmf(self):
        return self.counts / self.snapshots

    @property
    def mean(self):
        return float(np.dot(np.arange(len(self.counts)), self.counts) / self.snapshots)

    def total_variation(self, model_pmf):
        """Half the L1 distance to a model PMF given on n = 0, 1, 2, ..."""
        m = np.asarray(model_pmf, dtype=float)
        k = max(len(m), len(self.counts))
        a = np.zeros(k)
        b = np.zeros(k)
        a[: len(self.counts)] = self.pmf
        b[: len(m)] = m
        return 0.5 * float(np.abs(a - b).sum()) + 0.5 * max(0.0, 1.0 - float(m.sum()))


def _load_chunk(bs_density, user_density, seed, lo, hi, bs_count):
    radius = math.sqrt(bs_count / (math.pi * bs_density))
    user_radius = 0.5 * radius
    loads = np.empty(hi - lo, np.int64)
    for i in range(lo, hi):
        rng = stream(seed, i)
        n = rng.poisson(bs_density * math.pi * radius**2)
        while n == 0:
            n = rng.poisson(bs_density * math.pi * radius**2)
        r = radius * np.sqrt(rng.random(n))
        th = rng.uniform(0.0, 2 * math.pi, n)
        tree = cKDTree(np.column_stack([r * np.cos(th), r * np.sin(th)]))
        home = tree.query([0.0, 0.0])[1]
        m = rng.poisson(user_density * math.pi * user_radius**2)
        ru = user_radius * np.sqrt(rng.random(m))
        tu = rng.uniform(0.0, 2 * math.pi, m)
        _, near = tree.query(np.column_stack([ru * np.cos(tu), ru * np.sin(tu)]))
        loads[i - lo] = 1 + int(np.sum(near == home))
    return loads


def measure_load(bs_density, user_density, snapshots, seed=0, threads=1, bs_count=300):
    """Load of the typical user's cell (itself included) under nearest-BS association.

    With a path loss that decreases with distance and no blockage, minimum
    path loss and nearest-BS association coincide, so cells are Voronoi cells.
    """
    if bs_density <= 0 or user_density <= 0:
        raise ValueError("densities must be positive")
    if threads <= 1:
        loads = _load_chunk(bs_density, user_density, seed, 0, snapshots, bs_count)
    else:
        spans = _chunks(snapshots, threads)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(
                _load_chunk, *zip(*[(bs_density, user_density, seed, a, b, bs_count) for a, b in spans])
            )
            loads = np.concatenate(list(parts))
    return LoadMeasurement(np.bincount(loads), snapshots)


def dump_snapshots(sim, count, fh):
    """Write the first ``count`` snapshots as JSON lines."""
    for i in range(min(count, sim.snapshots)):
        fh.write(json.dumps(sample_snapshot(sim, i).to_json()) + "\n")
