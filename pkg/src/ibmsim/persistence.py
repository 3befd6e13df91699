"""File formats and reproducibility metadata: configuration and trajectory
text formats with lossless round-trips, plain-text run configs, and
append-only run manifests."""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .configuration import BALL, TORUS, Configuration, Domain
from .dynamics import SimParams, Trajectory
from .errors import ConfigError, FormatError, VersionMismatch
from .potentials import PotentialSpec

TRAJECTORY_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# float codecs: 17 significant digits or raw IEEE-754 hex, both lossless
# ---------------------------------------------------------------------------

def _encode_float(x: float, mode: str) -> str:
    return float(x).hex() if mode == "hex" else format(float(x), ".17g")


def _decode_float(s: str, mode: str, line: int) -> float:
    try:
        return float.fromhex(s) if mode == "hex" else float(s)
    except ValueError:
        raise FormatError(f"bad coordinate {s!r}", line=line) from None


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

def write_configuration(config: Configuration, path) -> None:
    """One point per line; header `# d=<d> geometry=<torus|ball> size=<size>`."""
    dom = config.domain
    if dom.geometry not in (TORUS, BALL):
        raise FormatError("only torus and ball domains are serialized")
    with open(path, "w") as fh:
        fh.write(f"# d={dom.dimension} geometry={dom.geometry} size={_encode_float(dom.size, 'decimal')}\n")
        for p in config.points:
            fh.write(" ".join(_encode_float(v, "decimal") for v in p) + "\n")


def read_configuration(path) -> Configuration:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise FormatError("missing configuration header", line=1)
    fields = dict(item.split("=", 1) for item in lines[0][2:].split())
    try:
        dom = Domain(int(fields["d"]), fields["geometry"], float(fields["size"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header: {exc}", line=1) from None
    pts = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        vals = [_decode_float(v, "decimal", i) for v in line.split()]
        if len(vals) != dom.dimension:
            raise FormatError(f"expected {dom.dimension} coordinates", line=i)
        pts.append(vals)
    return Configuration(np.asarray(pts).reshape(len(pts), dom.dimension), dom)


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------

def write_trajectory(traj: Trajectory, path, coord_format: str = "decimal",
                     frame: str = "lab") -> None:
    """Header of key=value lines, then one block per snapshot: a time line,
    N coordinate lines and a running-max line."""
    if coord_format not in ("decimal", "hex"):
        raise ConfigError("coord_format must be 'decimal' or 'hex'")
    dom = traj.domain
    p = traj.params
    buf = io.StringIO()
    buf.write("# ibm-sim trajectory\n")
    buf.write(f"format_version={TRAJECTORY_FORMAT_VERSION}\n")
    buf.write(f"coord_format={coord_format}\n")
    buf.write(f"frame={frame}\n")
    buf.write(f"d={dom.dimension}\ngeometry={dom.geometry}\n")
    buf.write(f"size={_encode_float(dom.size, coord_format)}\n")
    buf.write(f"n_particles={traj.n_particles}\nn_tagged={traj.n_tagged}\n")
    buf.write(f"dt={_encode_float(p.dt, coord_format)}\n")
    buf.write(f"t_end={_encode_float(p.t_end, coord_format)}\n")
    buf.write(f"seed={p.seed}\nstride={p.stride}\n")
    buf.write(f"cell_size={'' if p.cell_size is None else _encode_float(p.cell_size, coord_format)}\n")
    buf.write(f"hard_core_mode={p.hard_core_mode}\nmax_retries={p.max_retries}\n")
    for key, value in sorted(traj.provenance.items()):
        buf.write(f"prov.{key}={value}\n")
    buf.write("\n")
    for i in range(traj.n_snapshots):
        buf.write(f"time={_encode_float(traj.times[i], coord_format)}\n")
        for row in traj.positions[i]:
            buf.write(" ".join(_encode_float(v, coord_format) for v in row) + "\n")
        if traj.running_max is not None:
            buf.write(
                "runmax "
                + " ".join(_encode_float(v, coord_format) for v in traj.running_max[i])
                + "\n"
            )
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "# ibm-sim trajectory":
        raise FormatError("not a trajectory file", line=1)
    header: dict[str, str] = {}
    provenance: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            body_start = i + 1
            break
        if "=" not in line:
            raise FormatError("header line without '='", line=i)
        key, value = line.split("=", 1)
        if key.startswith("prov."):
            provenance[key[5:]] = value
        else:
            header[key] = value
    if body_start is None:
        raise FormatError("missing blank line after the header", line=len(lines))

    try:
        version = int(header["format_version"])
    except (KeyError, ValueError):
        raise FormatError("missing format_version", line=2) from None
    if version != TRAJECTORY_FORMAT_VERSION:
        raise VersionMismatch(f"unknown trajectory format version {version}")
    mode = header.get("coord_format", "decimal")

    def need(key, line=2):
        if key not in header:
            raise FormatError(f"missing header key {key}", line=line)
        return header[key]

    dom = Domain(int(need("d")), need("geometry"), _decode_float(need("size"), mode, 2))
    n = int(need("n_particles"))
    params = SimParams(
        dt=_decode_float(need("dt"), mode, 2),
        t_end=_decode_float(need("t_end"), mode, 2),
        seed=int(need("seed")),
        stride=int(need("stride")),
        cell_size=None if header.get("cell_size", "") == ""
        else _decode_float(header["cell_size"], mode, 2),
        hard_core_mode=need("hard_core_mode"),
        max_retries=int(need("max_retries")),
    )

    times, snaps, runmax = [], [], []
    i = body_start - 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if not line.startswith("time="):
            raise FormatError("expected a time= line", line=i + 1)
        times.append(_decode_float(line[5:], mode, i + 1))
        block = []
        for j in range(n):
            if i + 1 + j >= len(lines):
                raise FormatError("truncated snapshot block", line=len(lines))
            row = lines[i + 1 + j].split()
            if len(row) != dom.dimension or row[0] == "runmax":
                raise FormatError(
                    f"expected {dom.dimension} coordinates for particle {j}",
                    line=i + 2 + j,
                )
            block.append([_decode_float(v, mode, i + 2 + j) for v in row])
        snaps.append(block)
        i += 1 + n
        if i < len(lines) and lines[i].startswith("runmax "):
            vals = lines[i].split()[1:]
            if len(vals) != n:
                raise FormatError("runmax length mismatch", line=i + 1)
            runmax.append([_decode_float(v, mode, i + 1) for v in vals])
            i += 1

    if runmax and len(runmax) != len(times):
        raise FormatError("runmax blocks do not match snapshots", line=len(lines))
    return Trajectory(
        times=np.asarray(times),
        positions=np.asarray(snaps).reshape(len(times), n, dom.dimension),
        domain=dom,
        params=params,
        n_tagged=int(header.get("n_tagged", "0")),
        running_max=np.asarray(runmax) if runmax else None,
        provenance=provenance,
    )


def write_environment_path(times, configs, params: SimParams, path,
                           coord_format: str = "decimal") -> None:
    """Serialize an environment path (constant point count) in the trajectory
    format, flagged frame=tagged."""
    counts = {len(c) for c in configs}
    if len(counts) != 1:
        raise ConfigError("environment path must have a constant point count")
    positions = np.stack([c.points for c in configs], axis=0)
    traj = Trajectory(
        times=np.asarray(times, dtype=float),
        positions=positions,
        domain=configs[0].domain,
        params=params,
        n_tagged=0,
        running_max=None,
    )
    write_trajectory(traj, path, coord_format=coord_format, frame="tagged")


def trajectory_equal(a: Trajectory, b: Trajectory) -> bool:
    """Bit-exact equality of the persisted content."""
    return (
        np.array_equal(a.times, b.times)
        and np.array_equal(a.positions, b.positions)
        and a.domain == b.domain
        and a.params == b.params
        and a.n_tagged == b.n_tagged
        and (
            (a.running_max is None and b.running_max is None)
            or (
                a.running_max is not None
                and b.running_max is not None
                and np.array_equal(a.running_max, b.running_max)
            )
        )
        and {str(k): str(v) for k, v in a.provenance.items()}
        == {str(k): str(v) for k, v in b.provenance.items()}
    )


# ---------------------------------------------------------------------------
# run configs
# ---------------------------------------------------------------------------

def parse_config(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config: {exc}") from None
    return parser


def load_config(path) -> configparser.ConfigParser:
    with open(path) as fh:
        return parse_config(fh.read())


def config_sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def build_domain(cfg) -> Domain:
    if "domain" not in cfg:
        raise ConfigError("config needs a [domain] section")
    sec = cfg["domain"]
    try:
        return Domain(sec.getint("dimension"), sec.get("geometry", "torus"),
                      sec.getfloat("size"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [domain]: {exc}") from None


def build_potentials(cfg) -> PotentialSpec:
    if "potentials" not in cfg:
        return PotentialSpec()
    sec = cfg["potentials"]
    kwargs = dict(
        phi=sec.get("phi", "none"),
        phi_strength=sec.getfloat("phi_strength", 1.0),
        psi=sec.get("psi", "none"),
        psi_strength=sec.getfloat("psi_strength", 1.0),
        psi_range=sec.getfloat("psi_range", 1.0),
        hard_core_diameter=sec.getfloat("hard_core_diameter", 0.0),
        r_cut=sec.getfloat("r_cut", math.inf),
    )
    try:
        return PotentialSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad [potentials]: {exc}") from None


def build_sim_params(cfg, seed: int | None = None) -> SimParams:
    sec = cfg["sim"] if "sim" in cfg else {}
    getf = sec.getfloat if hasattr(sec, "getfloat") else lambda k, v=None: v
    geti = sec.getint if hasattr(sec, "getint") else lambda k, v=None: v
    cell = getf("cell_size", 0.0)
    return SimParams(
        dt=getf("dt", 1e-3),
        t_end=getf("t_end", 1.0),
        seed=seed if seed is not None else geti("seed", 0),
        stride=geti("stride", 1),
        cell_size=None if not cell else cell,
        hard_core_mode=sec.get("hard_core_mode", "reject") if hasattr(sec, "get") else "reject",
        max_retries=geti("max_retries", 20),
    )


def build_sampler(cfg, domain: Domain, seed: int):
    """Sampler callable (draw index -> Configuration) from the [sampler] section."""
    from . import pointprocess as pp

    if "sampler" not in cfg:
        raise ConfigError("config needs a [sampler] section")
    sec = cfg["sampler"]
    kind = sec.get("kind", "poisson")
    if kind == "poisson":
        return pp.make_poisson_sampler(domain, sec.getfloat("intensity", 1.0), seed)
    if kind == "gibbs":
        spec = pp.GibbsSpec(
            potentials=build_potentials(cfg),
            beta=sec.getfloat("beta", 1.0),
            activity=sec.getfloat("activity", 1.0),
            burn_in=sec.getint("burn_in", 100_000),
            thin=sec.getint("thin", 50),
            proposal_scale=sec.getfloat("proposal_scale", 0.5),
        )
        return pp.make_gibbs_sampler(spec, domain, seed)
    if kind in ("dyson_sine", "ginibre"):
        spec = pp.DPPSpec(
            kernel="sine" if kind == "dyson_sine" else "ginibre",
            n_matrix=sec.getint("n_matrix", 500),
            window_radius=sec.getfloat("window_radius", 10.0),
        )
        draw = pp.sample_dyson_sine if kind == "dyson_sine" else pp.sample_ginibre

        def sampler(i: int) -> Configuration:
            return draw(spec, seed * 2_654_435_761 % (2**31) + i)

        return sampler
    raise ConfigError(f"unknown sampler kind {kind!r}")


# ---------------------------------------------------------------------------
# manifests and reports
# ---------------------------------------------------------------------------

@dataclass
class ManifestRecord:
    config_sha256: str
    seed: int
    toolkit_version: str
    wall_time_s: float
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def manifest(run: dict) -> ManifestRecord:
    """Reproducibility record for one run; `run` carries config_text, seed,
    started (epoch seconds) and the emitted output paths."""
    started = run.get("started", time.time())
    return ManifestRecord(
        config_sha256=config_sha256(run.get("config_text", "")),
        seed=int(run.get("seed", 0)),
        toolkit_version=__version__,
        wall_time_s=float(run.get("finished", time.time())) - float(started),
        outputs=list(run.get("outputs", [])),
        extra=dict(run.get("extra", {})),
    )


def write_manifest(record: ManifestRecord, path) -> None:
    """Manifests are append-only: writing over an existing run is refused."""
    if os.path.exists(path):
        raise FileExistsError(f"manifest {path} already exists; runs never overwrite")
    import json

    with open(path, "w") as fh:
        json.dump(asdict(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_tsv(path, comments: list[str], columns: list[str], rows) -> None:
    """TSV with comment headers; deterministic content (no timestamps)."""
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def max_workers() -> int:
    """Parallelism cap from IBM_SIM_THREADS (default 1: fully sequential)."""
    try:
        return max(1, int(os.environ.get("IBM_SIM_THREADS", "1")))
    except ValueError:
        return 1
