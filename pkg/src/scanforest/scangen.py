"""Synthetic labeled flows: benign sessions and port scans by tool and technique.

Every flow is summarized by the 14 features of :func:`feature_schema`. Benign
flows are completed TCP sessions with a low destination-port fan-out. Scan
flows are single probes whose packet, flag and timing statistics follow the
scanning technique, with the tool's rate class driving inter-probe spacing and
port fan-out.

The ``overlap`` ``o`` of a profile camouflages its flows: each scan row is,
with probability ``o``, replaced by a benign-distributed flow that keeps only
a trace of the scan, its timing shrunk by about ``3 (1 - o)`` nats and its
byte sizes by about ``1 - o`` nats (log scale). ``o = 0`` leaves the profile
untouched; ``o = 1`` makes it indistinguishable from benign traffic.
"""
from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import Dataset, FlowRecord, Technique, Tool, largest_remainder
from .errors import UnsupportedCombinationError

SCHEMA_VERSION = 1

FEATURES = (
    "duration_s",
    "fwd_packets",
    "bwd_packets",
    "fwd_bytes",
    "bwd_bytes",
    "syn_count",
    "ack_count",
    "rst_count",
    "fin_count",
    "psh_count",
    "mean_iat_ms",
    "distinct_dst_ports_in_window",
    "handshake_completed",
    "mean_pkt_size_bytes",
)
_F = {name: i for i, name in enumerate(FEATURES)}


def feature_schema() -> list[str]:
    return list(FEATURES)


class RateClass(str, Enum):
    SLOW = "slow"
    FAST = "fast"
    MASSIVE = "massive"


# median inter-probe spacing (ms) and median distinct ports per window
_RATE_IAT_MS = {RateClass.SLOW: 400.0, RateClass.FAST: 4.0, RateClass.MASSIVE: 0.05}
_RATE_PORTS = {RateClass.SLOW: (6.0, 0.5), RateClass.FAST: (150.0, 0.8),
               RateClass.MASSIVE: (4000.0, 0.7)}

_SUPPORTED = {
    Tool.NMAP: {Technique.CONNECT, Technique.SYN, Technique.FIN, Technique.NULL, Technique.XMAS},
    Tool.MASSCAN: {Technique.CONNECT, Technique.SYN},
    Tool.ZMAP: {Technique.CONNECT, Technique.SYN},
    Tool.UNICORNSCAN: {Technique.CONNECT, Technique.SYN, Technique.FIN, Technique.UDP},
    Tool.HPING: {Technique.CONNECT, Technique.SYN, Technique.FIN, Technique.NULL,
                 Technique.XMAS, Technique.UDP},
}
_DEFAULT_RATE = {Tool.NMAP: RateClass.FAST, Tool.MASSCAN: RateClass.MASSIVE,
                 Tool.ZMAP: RateClass.MASSIVE, Tool.UNICORNSCAN: RateClass.FAST,
                 Tool.HPING: RateClass.FAST}
# bytes per probe packet and probability of a retransmitted probe
_PROBE = {Tool.NMAP: (44, 0.15), Tool.MASSCAN: (40, 0.0), Tool.ZMAP: (40, 0.0),
          Tool.UNICORNSCAN: (40, 0.05), Tool.HPING: (40, 0.0)}
_FLAGS = {
    Technique.CONNECT: {"SYN": 1, "ACK": 1},
    Technique.SYN: {"SYN": 1},
    Technique.FIN: {"FIN": 1},
    Technique.NULL: {},
    Technique.XMAS: {"FIN": 1, "PSH": 1, "URG": 1},
    Technique.UDP: {},
}
_RESPONSE = {
    Technique.CONNECT: "syn-ack, handshake completed then torn down by RST or FIN",
    Technique.SYN: "syn-ack on open ports (answered by RST), RST on closed",
    Technique.FIN: "RST on closed ports, silence otherwise",
    Technique.NULL: "RST on closed ports, silence otherwise",
    Technique.XMAS: "RST on closed ports, silence otherwise",
    Technique.UDP: "rare UDP reply on open ports, silence otherwise",
}

P_OPEN = 0.15
P_CLOSED = 0.55
# log-scale shrink of timing and sizes kept by camouflaged scans at overlap 0
HEALTH_CHECK_SHARE = 0.01  # benign flows that look like single-port connect probes


@dataclass(frozen=True)
class ScanProfile:
    """How one tool runs one scanning technique."""

    tool: Tool
    technique: Technique
    rate_class: RateClass
    completes_handshake: bool
    flag_pattern: Mapping[str, int]
    response_behavior: str
    overlap: float = 0.0

    @property
    def key(self) -> str:
        return f"{self.tool.value}/{self.technique.value}"


def make_profile(tool: Tool | str, technique: Technique | str,
                 rate_class: RateClass | str | None = None, overlap: float = 0.0) -> ScanProfile:
    """Build the profile for ``tool`` running ``technique``.

    Raises
    ------
    UnsupportedCombinationError
        The tool cannot run the technique (e.g. UDP on a TCP-only tool), or
        the rate class is outside what the tool does.
    """
    tool, technique = Tool(tool), Technique(technique)
    if technique not in _SUPPORTED[tool]:
        raise UnsupportedCombinationError(f"{tool.value} does not support {technique.value} scans")
    rate = _DEFAULT_RATE[tool] if rate_class is None else RateClass(rate_class)
    if tool in (Tool.MASSCAN, Tool.ZMAP) and rate is not RateClass.MASSIVE:
        raise UnsupportedCombinationError(f"{tool.value} only scans at massive rate")
    if tool is Tool.UNICORNSCAN and rate is RateClass.MASSIVE:
        raise UnsupportedCombinationError("unicornscan rate is slow or fast")
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    return ScanProfile(tool, technique, rate, technique is Technique.CONNECT,
                       dict(_FLAGS[technique]), _RESPONSE[technique], float(overlap))


def parse_profile_key(key: str) -> tuple[Tool, Technique]:
    tool, _, technique = key.partition("/")
    try:
        return Tool(tool), Technique(technique)
    except ValueError:
        raise ValueError(f"bad profile key {key!r}; expected 'tool/technique'") from None


def _health_check_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    # monitoring probes: connect, optional tiny request, immediate close, one port
    z = rng.standard_normal((n, 2))
    u = rng.random((n, 5))
    request = u[:, 0] < 0.6
    rst_close = u[:, 1] < 0.5
    fwd = 3.0 + request + (u[:, 2] < 0.3)
    bwd = 1.0 + request + (~rst_close)
    fwd_bytes = fwd * 40.0 + request * np.round(30.0 + 90.0 * u[:, 3])
    bwd_bytes = bwd * 40.0 + request * np.round(20.0 + 200.0 * u[:, 4])
    duration = np.exp(np.log(0.02) + 0.8 * z[:, 0])
    pkts = fwd + bwd

    X = np.empty((n, len(FEATURES)))
    X[:, _F["duration_s"]] = duration
    X[:, _F["fwd_packets"]] = fwd
    X[:, _F["bwd_packets"]] = bwd
    X[:, _F["fwd_bytes"]] = fwd_bytes
    X[:, _F["bwd_bytes"]] = bwd_bytes
    X[:, _F["syn_count"]] = 2.0
    X[:, _F["ack_count"]] = pkts - 1.0
    X[:, _F["rst_count"]] = rst_close.astype(np.float64)
    X[:, _F["fin_count"]] = np.where(rst_close, 0.0, 2.0)
    X[:, _F["psh_count"]] = request.astype(np.float64) * 2.0
    X[:, _F["mean_iat_ms"]] = duration * 1000.0 / (pkts - 1.0)
    X[:, _F["distinct_dst_ports_in_window"]] = 1.0 + (z[:, 1] > 1.5)
    X[:, _F["handshake_completed"]] = 1.0
    X[:, _F["mean_pkt_size_bytes"]] = (fwd_bytes + bwd_bytes) / pkts
    return X


def _benign_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, 4))
    u = rng.random((n, 6))
    fwd = 3 + np.floor(np.exp(np.log(6.0) + 1.0 * z[:, 0]))
    bwd = 2 + np.floor(np.exp(np.log(8.0) + 1.1 * z[:, 1]))
    fwd_bytes = np.round(fwd * (60.0 + 500.0 * u[:, 0]))
    bwd_bytes = np.round(bwd * np.minimum(1500.0, np.exp(np.log(700.0) + 0.6 * z[:, 2])))
    duration = np.exp(np.log(2.0) + 1.4 * z[:, 3])
    pkts = fwd + bwd
    rst = (u[:, 2] < 0.08).astype(np.float64)
    fin = np.where(rst > 0, (u[:, 3] < 0.5).astype(np.float64), 2.0)
    psh = np.maximum(1.0, rng.binomial(pkts.astype(np.int64), 0.3).astype(np.float64))

    X = np.empty((n, len(FEATURES)))
    X[:, _F["duration_s"]] = duration
    X[:, _F["fwd_packets"]] = fwd
    X[:, _F["bwd_packets"]] = bwd
    X[:, _F["fwd_bytes"]] = fwd_bytes
    X[:, _F["bwd_bytes"]] = bwd_bytes
    X[:, _F["syn_count"]] = 2.0 + (u[:, 1] < 0.05)
    X[:, _F["ack_count"]] = pkts - 1.0
    X[:, _F["rst_count"]] = rst
    X[:, _F["fin_count"]] = fin
    X[:, _F["psh_count"]] = psh
    X[:, _F["mean_iat_ms"]] = duration * 1000.0 / (pkts - 1.0)
    X[:, _F["distinct_dst_ports_in_window"]] = 1.0 + (u[:, 4] < 0.25) + (u[:, 5] < 0.08)
    X[:, _F["handshake_completed"]] = 1.0
    X[:, _F["mean_pkt_size_bytes"]] = (fwd_bytes + bwd_bytes) / pkts
    checks = rng.random(n) < HEALTH_CHECK_SHARE
    return np.where(checks[:, None], _health_check_matrix(n, rng), X)


def _scan_matrix(profile: ScanProfile, n: int, rng: np.random.Generator) -> np.ndarray:
    # the same draws are consumed for every profile, so equal seeds give matched samples
    z = rng.standard_normal((n, 3))
    u = rng.random((n, 5))
    probe_size, p_retx = _PROBE[profile.tool]
    tech = profile.technique

    iat = _RATE_IAT_MS[profile.rate_class] * np.exp(0.5 * z[:, 0])
    med, sig = _RATE_PORTS[profile.rate_class]
    ports = np.clip(np.round(np.exp(np.log(med) + sig * z[:, 1])), 1.0, 65535.0)
    rtt = np.exp(np.log(0.03) + 0.8 * z[:, 2])
    is_open = u[:, 0] < P_OPEN
    is_closed = (~is_open) & (u[:, 0] < P_OPEN + P_CLOSED)
    retx = (u[:, 1] < p_retx).astype(np.float64)
    zero = np.zeros(n)

    if tech is Technique.CONNECT:
        fin_path = u[:, 2] < 0.3
        banner = u[:, 3] < 0.2
        fwd = np.where(fin_path, 4.0, 3.0)
        bwd = 1.0 + fin_path + banner
        fwd_bytes = fwd * probe_size
        bwd_bytes = 44.0 + 40.0 * fin_path + banner * np.round(40.0 + 160.0 * u[:, 4])
        syn = np.full(n, 2.0)
        ack = (fwd - 1.0) + bwd
        rst = (~fin_path).astype(np.float64)
        fin = 2.0 * fin_path
        psh = banner.astype(np.float64)
        duration = rtt * (2.0 + fin_path)
        handshake = np.ones(n)
    elif tech is Technique.SYN:
        fwd = 1.0 + retx + is_open
        bwd = (is_open | is_closed).astype(np.float64)
        fwd_bytes = fwd * probe_size
        bwd_bytes = np.where(is_open, 44.0, 40.0) * bwd
        syn = 1.0 + retx + is_open
        ack = bwd.copy()
        rst = is_open + is_closed.astype(np.float64)
        fin = psh = zero
        duration = np.where(bwd > 0, rtt, retx * 1.0)
        handshake = zero
    elif tech is Technique.UDP:
        reply = is_open & (u[:, 2] < 0.3)
        fwd = 1.0 + retx
        bwd = reply.astype(np.float64)
        fwd_bytes = fwd * np.round(28.0 + 40.0 * u[:, 3])
        bwd_bytes = reply * np.round(60.0 + 140.0 * u[:, 4])
        syn = ack = rst = fin = psh = zero
        duration = np.where(reply, rtt, retx * 1.0)
        handshake = zero
    else:  # FIN, NULL, XMAS probes: RST back from closed ports only
        fwd = 1.0 + retx
        bwd = is_closed.astype(np.float64)
        fwd_bytes = fwd * probe_size
        bwd_bytes = 40.0 * bwd
        flags = profile.flag_pattern
        syn = zero
        ack = bwd.copy()
        rst = bwd.copy()
        fin = fwd * flags.get("FIN", 0)
        psh = fwd * flags.get("PSH", 0)
        duration = np.where(bwd > 0, rtt, retx * 1.0)
        handshake = zero

    pkts = fwd + bwd
    X = np.empty((n, len(FEATURES)))
    X[:, _F["duration_s"]] = duration
    X[:, _F["fwd_packets"]] = fwd
    X[:, _F["bwd_packets"]] = bwd
    X[:, _F["fwd_bytes"]] = fwd_bytes
    X[:, _F["bwd_bytes"]] = bwd_bytes
    X[:, _F["syn_count"]] = syn
    X[:, _F["ack_count"]] = ack
    X[:, _F["rst_count"]] = rst
    X[:, _F["fin_count"]] = fin
    X[:, _F["psh_count"]] = psh
    X[:, _F["mean_iat_ms"]] = iat
    X[:, _F["distinct_dst_ports_in_window"]] = ports
    X[:, _F["handshake_completed"]] = handshake
    X[:, _F["mean_pkt_size_bytes"]] = (fwd_bytes + bwd_bytes) / pkts
    return X


def _camouflage(X: np.ndarray, overlap: float, rng: np.random.Generator) -> np.ndarray:
    """Replace a fraction ``overlap`` of scan rows with benign look-alikes.

    Low overlap copies health-check flows, a small benign mode that a
    class-weighted forest can still claim for the scan class; as overlap
    grows the copies come from ordinary benign traffic and become invisible.
    """
    n = X.shape[0]
    hit = rng.random(n) < overlap
    ordinary = rng.random(n) < overlap
    donor = np.where(ordinary[:, None], _benign_matrix(n, rng), _health_check_matrix(n, rng))
    return np.where(hit[:, None], donor, X)


def _scan_rows(profile: ScanProfile, n: int, rng: np.random.Generator) -> np.ndarray:
    X = _scan_matrix(profile, n, rng)
    if profile.overlap > 0.0:
        X = _camouflage(X, profile.overlap, rng)
    return X


def generate_benign(n: int, seed: int) -> list[FlowRecord]:
    """``n`` benign flows (label 0, no provenance); deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X = _benign_matrix(n, np.random.default_rng(seed))
    return [FlowRecord(tuple(row), 0) for row in X]


def generate_scan(profile: ScanProfile, n: int, seed: int) -> list[FlowRecord]:
    """``n`` scan flows (label 1) following ``profile``; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X = _scan_rows(profile, n, np.random.default_rng(seed))
    return [FlowRecord(tuple(row), 1, profile.tool, profile.technique) for row in X]


DEFAULT_MIX = {f"{tool.value}/{tech.value}": 0.1
               for tool in Tool for tech in (Technique.SYN, Technique.CONNECT)}
DEFAULT_OVERLAP = 0.05


@dataclass(frozen=True)
class GeneratorConfig:
    """What :func:`generate_corpus` produces.

    ``tool_mix`` maps ``"tool/technique"`` keys to weights summing to 1.
    ``overlap`` applies to every profile unless ``overlap_overrides`` names
    it; ``rate_overrides`` changes a profile's rate class (e.g. slow
    unicornscan).
    """

    total_flows: int = 20_000
    benign_fraction: float = 0.85
    tool_mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    overlap: float = DEFAULT_OVERLAP
    overlap_overrides: Mapping[str, float] = field(default_factory=dict)
    rate_overrides: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.total_flows < 1:
            raise ValueError("total_flows must be >= 1")
        if not 0.0 < self.benign_fraction < 1.0:
            raise ValueError("benign_fraction must lie in (0, 1)")
        if not self.tool_mix:
            raise ValueError("tool_mix is empty")
        if abs(sum(self.tool_mix.values()) - 1.0) > 1e-9:
            raise ValueError("tool_mix weights must sum to 1")
        if any(w < 0 for w in self.tool_mix.values()):
            raise ValueError("tool_mix weights must be nonnegative")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported feature schema version {self.schema_version}")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        for key in self.overlap_overrides:
            if key not in self.tool_mix:
                raise ValueError(f"overlap override for {key!r}, which is not in tool_mix")
        for key in self.rate_overrides:
            if key not in self.tool_mix:
                raise ValueError(f"rate override for {key!r}, which is not in tool_mix")
        self.profiles()  # validates keys and combinations

    def profiles(self) -> list[ScanProfile]:
        out = []
        for key in self.tool_mix:
            tool, tech = parse_profile_key(key)
            out.append(make_profile(tool, tech, self.rate_overrides.get(key),
                                    self.overlap_overrides.get(key, self.overlap)))
        return out

    def to_dict(self) -> dict:
        return {
            "total_flows": self.total_flows,
            "benign_fraction": self.benign_fraction,
            "tool_mix": dict(self.tool_mix),
            "seed": self.seed,
            "schema_version": self.schema_version,
            "overlap": self.overlap,
            "overlap_overrides": dict(self.overlap_overrides),
            "rate_overrides": dict(self.rate_overrides),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> GeneratorConfig:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path: str | Path) -> GeneratorConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def generate_corpus(config: GeneratorConfig) -> Dataset:
    """Mix benign and scan flows per ``config`` and shuffle them deterministically.

    The benign count is ``benign_fraction * total_flows`` and scan counts follow
    ``tool_mix``, both apportioned by largest remainder.
    """
    n_benign, n_scan = largest_remainder(config.total_flows,
                                         [config.benign_fraction, 1.0 - config.benign_fraction])
    profiles = config.profiles()
    shares = largest_remainder(n_scan, list(config.tool_mix.values())) if n_scan else [0] * len(profiles)

    def rng(part: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(part,)))

    blocks = [_benign_matrix(n_benign, rng(1))]
    tools: list = [None] * n_benign
    techniques: list = [None] * n_benign
    for j, (profile, m) in enumerate(zip(profiles, shares)):
        if m == 0:
            continue
        blocks.append(_scan_rows(profile, m, rng(2 + j)))
        tools += [profile.tool] * m
        techniques += [profile.technique] * m
    X = np.vstack(blocks)
    y = np.concatenate([np.zeros(n_benign, np.int64), np.ones(n_scan, np.int64)])
    perm = rng(0).permutation(X.shape[0])
    return Dataset(FEATURES, X[perm], y[perm], tuple(tools[i] for i in perm),
                   tuple(techniques[i] for i in perm))
