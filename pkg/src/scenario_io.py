#!/usr/bin/env python3
"""
Scenario files and random scenario generation.

A scenario file is UTF-8 text, one `key = value [unit]` per line, with
arrays written as bracketed comma lists:

    version = 1
    seed = 7
    K = 2
    T = 600.0 s
    N = 1224
    p_max = 30.0 dBm
    beta0 = -50.0 dB
    bandwidth = 10000000.0 Hz
    noise_psd = -160.0 dBm/Hz
    v_level = 20.0 m/s
    ...
    gt_positions = [[150.0, 0.0, 0.0], [-150.0, 50.0, 0.0]] m

Lengths are meters, powers dBm. Values are written with repr() so a
parse/format/parse cycle is exact.
"""
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.errors import OutputError, UsageError
from src.scenario_model import (ChannelParams, Horizon, KinematicLimits, Scenario, dbm_to_watt,
                                max_sampling_interval)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
# Start grid pitch in units of d_min. The margin over 1 keeps the start cluster outside the
# d_min (1 + clearance) targets of push_apart, so early slots near the starts stay separated
# without a push that could break the first flight step.
START_PITCH = 1.5

Rows = List[Tuple[float, float, float]]

# key -> (attribute, unit written, accepted units)
_SCALARS = {
    "T": ("T", "s", ("s",)),
    "p_max": ("p_max_dbm", "dBm", ("dBm", "W")),
    "beta0": ("beta0_db", "dB", ("dB", "")),
    "bandwidth": ("bandwidth", "Hz", ("Hz",)),
    "noise_psd": ("noise_psd_dbm", "dBm/Hz", ("dBm/Hz", "W/Hz")),
    "v_level": ("v_level", "m/s", ("m/s",)),
    "v_ascend": ("v_ascend", "m/s", ("m/s",)),
    "v_descend": ("v_descend", "m/s", ("m/s",)),
    "h_min": ("h_min", "m", ("m",)),
    "h_max": ("h_max", "m", ("m",)),
    "d_min": ("d_min", "m", ("m",)),
}
_INTEGERS = ("version", "seed", "K", "N")
_ARRAYS = ("gt_positions", "uav_initial", "uav_final")

_LINE = re.compile(r"^\s*(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>.+?)\s*$")


class ScenarioFile(BaseModel):
    """Every Scenario field in file units, plus the generator seed"""
    version: int = FORMAT_VERSION
    seed: int = Field(0, ge=0)
    K: int = Field(..., ge=1)
    T: float = 600.0
    N: int
    p_max_dbm: float = 30.0
    beta0_db: float = -50.0
    bandwidth: float = 1e7
    noise_psd_dbm: float = -160.0
    v_level: float = 20.0
    v_ascend: float = 5.0
    v_descend: float = 3.0
    h_min: float = 100.0
    h_max: float = 500.0
    d_min: float = 20.0
    gt_positions: Rows
    uav_initial: Rows
    uav_final: Optional[Rows] = None

    def to_scenario(self) -> Scenario:
        try:
            limits = KinematicLimits(v_level=self.v_level, v_ascend=self.v_ascend, v_descend=self.v_descend,
                                     h_min=self.h_min, h_max=self.h_max, d_min=self.d_min)
            channel = ChannelParams.from_db(self.beta0_db, self.bandwidth, self.noise_psd_dbm)
            return Scenario(K=self.K, gt_positions=self.gt_positions, uav_initial=self.uav_initial,
                            uav_final=self.uav_final, p_max=dbm_to_watt(self.p_max_dbm), channel=channel,
                            limits=limits, horizon=Horizon(T=self.T, Ts=self.T / self.N, N=self.N))
        except ValidationError as e:
            raise UsageError(f"invalid scenario: {e}") from e

    @classmethod
    def from_scenario(cls, scen: Scenario, seed: int = 0) -> "ScenarioFile":
        lim = scen.limits
        ch = scen.channel
        return cls(seed=seed, K=scen.K, T=scen.horizon.T, N=scen.horizon.N,
                   p_max_dbm=10.0 * math.log10(scen.p_max * 1e3), beta0_db=10.0 * math.log10(ch.beta0),
                   bandwidth=ch.bandwidth, noise_psd_dbm=10.0 * math.log10(ch.noise_psd * 1e3),
                   v_level=lim.v_level, v_ascend=lim.v_ascend, v_descend=lim.v_descend,
                   h_min=lim.h_min, h_max=lim.h_max, d_min=lim.d_min,
                   gt_positions=list(scen.gt_positions), uav_initial=list(scen.uav_initial),
                   uav_final=None if scen.uav_final is None else list(scen.uav_final))


def _split_unit(text: str) -> Tuple[str, str]:
    if text.startswith("["):
        end = text.rindex("]")
        return text[:end + 1], text[end + 1:].strip()
    parts = text.split(None, 1)
    return parts[0], parts[1].strip() if len(parts) > 1 else ""


def _parse_rows(text: str, key: str) -> Rows:
    inner = text.strip()
    if not (inner.startswith("[") and inner.endswith("]")):
        raise UsageError(f"{key}: expected a bracketed list")
    rows = re.findall(r"\[([^\[\]]*)\]", inner[1:-1])
    out = []
    for row in rows:
        values = [float(v) for v in row.split(",") if v.strip()]
        if len(values) != 3:
            raise UsageError(f"{key}: every entry needs three coordinates, got {row!r}")
        out.append(tuple(values))
    return out


def parse_scenario(text: str) -> ScenarioFile:
    fields: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE.match(line)
        if not match:
            raise UsageError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = match.group("key"), match.group("value")
        value, unit = _split_unit(value)
        try:
            if key in _INTEGERS:
                fields[key] = int(value)
            elif key in _ARRAYS:
                if unit not in ("m", ""):
                    raise UsageError(f"line {lineno}: positions must be in m, got {unit!r}")
                fields[key] = _parse_rows(value, key)
            elif key in _SCALARS:
                attr, _, units = _SCALARS[key]
                if unit and unit not in units:
                    raise UsageError(f"line {lineno}: unit {unit!r} not accepted for {key}, use one of {units}")
                number = float(value)
                if unit in ("W", "W/Hz"):
                    number = 10.0 * math.log10(number * 1e3)
                elif key == "beta0" and unit == "":
                    number = 10.0 * math.log10(number)
                fields[attr] = number
            else:
                raise UsageError(f"line {lineno}: unknown key {key!r}")
        except ValueError as e:
            raise UsageError(f"line {lineno}: {e}") from e

    version = fields.get("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise UsageError(f"unsupported scenario file version {version}")
    try:
        return ScenarioFile(**fields)
    except ValidationError as e:
        raise UsageError(f"incomplete scenario file: {e}") from e


def _format_rows(rows: Rows) -> str:
    return "[" + ", ".join("[" + ", ".join(repr(float(c)) for c in row) + "]" for row in rows) + "]"


def format_scenario(doc: ScenarioFile) -> str:
    lines = [f"version = {doc.version}", f"seed = {doc.seed}", f"K = {doc.K}"]
    for key, (attr, unit, _) in _SCALARS.items():
        if key == "T":
            lines.append(f"T = {doc.T!r} s")
            lines.append(f"N = {doc.N}")
            continue
        lines.append(f"{key} = {float(getattr(doc, attr))!r} {unit}")
    for key in _ARRAYS:
        rows = getattr(doc, key)
        if rows is not None:
            lines.append(f"{key} = {_format_rows(rows)} m")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> ScenarioFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot read scenario file {path}: {e}") from e
    return parse_scenario(text)


def save_scenario(doc: ScenarioFile, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_scenario(doc), encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write scenario file {path}: {e}") from e
    logger.info(f"Wrote scenario to {path}")
    return path


def start_cluster(K: int, d_min: float, altitude: float) -> np.ndarray:
    """K start positions on a square grid of pitch START_PITCH * d_min centered at the origin"""
    side = math.ceil(math.sqrt(K))
    idx = np.arange(K)
    grid = np.stack([idx % side, idx // side], axis=1).astype(float)
    grid -= (side - 1) / 2.0
    return np.column_stack([grid * START_PITCH * d_min, np.full(K, altitude)])


def generate_scenario(seed: int, K: int, area_km: float = 1.0, limits: Optional[KinematicLimits] = None,
                      channel: Optional[ChannelParams] = None, p_max: float = 1.0, T: float = 600.0) -> Scenario:
    """GTs uniform in an area_km x area_km square at z = 0, UAVs on a grid near the origin at Hmin"""
    if K < 1:
        raise UsageError(f"K must be positive, got {K}")
    limits = limits or KinematicLimits()
    channel = channel or ChannelParams()
    half = 500.0 * area_km
    starts = start_cluster(K, limits.d_min, limits.h_min)
    if np.any(np.abs(starts[:, :2]) > half):
        raise UsageError(f"start grid for K={K} at d_min={limits.d_min} m does not fit in {area_km} km")
    rng = np.random.default_rng(seed)
    gts = np.column_stack([rng.uniform(-half, half, size=(K, 2)), np.zeros(K)])
    try:
        return Scenario(K=K, gt_positions=gts, uav_initial=starts, p_max=p_max, channel=channel, limits=limits,
                        horizon=Horizon.from_duration(T, max_sampling_interval(limits)))
    except ValidationError as e:
        raise UsageError(f"invalid generated scenario: {e}") from e


def main():
    """Generate, write and re-read a scenario"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    scen = generate_scenario(seed=7, K=4)
    doc = ScenarioFile.from_scenario(scen, seed=7)
    text = format_scenario(doc)
    print(text)
    assert parse_scenario(text) == doc
    logger.info(f"round trip ok, N={doc.N}, Ts={doc.T / doc.N:.4f} s")


if __name__ == "__main__":
    main()
