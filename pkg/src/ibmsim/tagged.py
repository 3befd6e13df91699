"""Tagged-particle extraction and the environment seen from the tag.

Tracks are taken from simulation-native labels when a trajectory provides
them (exact); greedy nearest-neighbor matching covers externally supplied
configuration paths. Tracks born or dying mid-path get (a, b) intervals; no
bookkeeping beyond that is attempted for paths whose particles enter from
infinity, which has no finite-volume analog here."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configuration import Configuration, KLabeledState, iota, translate
from .dynamics import Trajectory
from .errors import AmbiguousMatching, NoSuchPoint, NotSingle


@dataclass
class Track:
    """One labeled sub-path with its maximal interval."""

    times: np.ndarray
    positions: np.ndarray  # (len(times), d)
    start_index: int
    starts_at_zero: bool

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])


def default_matching_radius(d: int, dt: float, stride: int) -> float:
    """Displacement scale between snapshots: 4 sqrt(d dt stride)."""
    return 4.0 * math.sqrt(d * dt * stride)


def _match_frame(prev: np.ndarray, cur: np.ndarray, domain, radius: float):
    """Greedy assignment of previous points to current points by distance.

    Raises AmbiguousMatching when two matched pairs could also be assigned
    crosswise within the matching radius: two complete assignments are then
    both within tolerance and the matching cannot be trusted (two particles
    swapping positions within one stride is the archetype).
    """
    n_prev, n_cur = prev.shape[0], cur.shape[0]
    if n_prev == 0 or n_cur == 0:
        return {}
    diff = domain.displacement(prev[:, None, :], cur[None, :, :])
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    assignment: dict[int, int] = {}
    cost = dist.copy()
    while len(assignment) < min(n_prev, n_cur):
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        if not cost[i, j] <= radius:
            break
        assignment[int(i)] = int(j)
        cost[i, :] = np.inf
        cost[:, j] = np.inf
    items = list(assignment.items())
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            i1, j1 = items[a]
            i2, j2 = items[b]
            if dist[i1, j2] <= radius and dist[i2, j1] <= radius:
                raise AmbiguousMatching(
                    f"assignments within tolerance at pairs {(i1, j1)} / {(i2, j2)}"
                )
    return assignment


def split_paths(configs, times=None, matching_radius: float | None = None) -> list[Track]:
    """Split a configuration path into continuous labeled tracks.

    configs is a time-ordered sequence of single configurations; matching is
    greedy nearest-neighbor between consecutive snapshots within
    matching_radius. Unmatched new points open (a, b)-interval tracks.
    """
    configs = list(configs)
    if not configs:
        return []
    domain = configs[0].domain
    if times is None:
        times = np.arange(len(configs), dtype=float)
    times = np.asarray(times, dtype=float)
    if matching_radius is None:
        dt = float(times[1] - times[0]) if times.size > 1 else 1.0
        matching_radius = default_matching_radius(domain.dimension, dt, 1)

    for i, c in enumerate(configs):
        if not c.is_single():
            raise NotSingle(f"snapshot {i} is not a single configuration")

    open_tracks: dict[int, list] = {}
    finished: list[Track] = []
    first = configs[0].points
    for idx in range(first.shape[0]):
        open_tracks[idx] = [0, [first[idx]]]
    next_id = first.shape[0]
    prev_points = first
    prev_owner = {i: i for i in range(first.shape[0])}

    for t in range(1, len(configs)):
        cur = configs[t].points
        assignment = _match_frame(prev_points, cur, domain, matching_radius)
        new_owner: dict[int, int] = {}
        matched_cur = set()
        for i_prev, j_cur in assignment.items():
            track_id = prev_owner[i_prev]
            open_tracks[track_id][1].append(cur[j_cur])
            new_owner[j_cur] = track_id
            matched_cur.add(j_cur)
        # close tracks whose particle vanished
        for i_prev, track_id in prev_owner.items():
            if i_prev not in assignment:
                start, pts = open_tracks.pop(track_id)
                finished.append(_make_track(times, start, pts))
        # open tracks for unmatched new points
        for j in range(cur.shape[0]):
            if j not in matched_cur:
                open_tracks[next_id] = [t, [cur[j]]]
                new_owner[j] = next_id
                next_id += 1
        prev_points = cur
        prev_owner = new_owner

    for start, pts in open_tracks.values():
        finished.append(_make_track(times, start, pts))
    finished.sort(key=lambda tr: (tr.start_index, tuple(tr.positions[0])))
    return finished


def _make_track(times, start, pts) -> Track:
    pts = np.asarray(pts)
    return Track(
        times=times[start : start + pts.shape[0]].copy(),
        positions=pts,
        start_index=start,
        starts_at_zero=(start == 0),
    )


def _locate_tag(traj: Trajectory, x) -> int:
    domain = traj.domain
    x = np.asarray(x, dtype=float).reshape(domain.dimension)
    start = traj.positions[0]
    dist = domain.distance(start, x)
    eps = domain.coincidence_tol
    hits = np.nonzero(dist <= eps)[0]
    if hits.size == 0:
        raise NoSuchPoint(f"no particle starts within {eps:g} of {x}")
    if hits.size > 1:
        raise NotSingle("several particles start at the tagged position")
    return int(hits[0])


def tag_particle(traj: Trajectory, x) -> Track:
    """The track of the particle starting at x (native labels, exact)."""
    idx = _locate_tag(traj, x)
    return Track(
        times=traj.times.copy(),
        positions=traj.positions[:, idx, :].copy(),
        start_index=0,
        starts_at_zero=True,
    )


def environment_process(traj: Trajectory, x) -> list[Configuration]:
    """The configuration of the other particles viewed from the tagged one:
    at each time, every other position shifted by the tag. Equivalently the
    background of the frame change applied along the 1-labeled path."""
    idx = _locate_tag(traj, x)
    keep = np.ones(traj.n_particles, dtype=bool)
    keep[idx] = False
    out = []
    for t in range(traj.n_snapshots):
        others = Configuration(traj.positions[t, keep], traj.domain, validate=False)
        out.append(translate(others, traj.positions[t, idx],
                             unbounded=traj.domain.geometry == "ball"))
    return out


def environment_via_iota(traj: Trajectory, x) -> list[Configuration]:
    """Independent route to the same object through the frame-change map of
    the 1-labeled states; used to cross-check environment_process pathwise."""
    idx = _locate_tag(traj, x)
    keep = np.ones(traj.n_particles, dtype=bool)
    keep[idx] = False
    out = []
    for t in range(traj.n_snapshots):
        background = Configuration(traj.positions[t, keep], traj.domain, validate=False)
        state = KLabeledState(traj.positions[t, idx][None, :], background, validate=False)
        out.append(iota(state).background)
    return out
