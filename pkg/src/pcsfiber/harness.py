"""Experiment configuration, single runs and resumable block-length sweeps."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import AmplifierParams, FiberParams, WdmConfig, awgn_channel, modulate_wdm, propagate_ssfm, write_field
from .framing import ConstellationSpec, SymbolFrame, insert_pilots, interleave, pas_map, remove_pilots
from .metrics import SymbolTrace, link_metrics
from .rx import cd_compensate, extract_center_channel, phase_compensate
from .shaping import AmplitudeSequence, TargetDistribution, build_sequence, codebook_info, derive_composition

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "StageError",
    "PRESETS",
    "preset",
    "load_config",
    "dump_config",
    "config_hash",
    "substream",
    "run_single",
    "run_sweep",
    "read_results",
    "CSV_COLUMNS",
    "CSV_SCHEMA_VERSION",
]

CSV_SCHEMA_VERSION = 1
HIGH_RATE_LOSS_BELOW = 50


class StageError(RuntimeError):
    """An error raised inside one stage of the simulation chain."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


@dataclass(frozen=True)
class ExperimentConfig:
    distribution: tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
    block_lengths: tuple[int, ...] = (10, 20, 50, 100, 150, 200, 250, 300, 350, 400)
    pilots: str = "both"
    pilot_period: int = 32
    pilot_power: float = 1.0
    pilot_pattern: str = "random"
    num_symbols_per_pol: int = 324000
    channel_kind: str = "fiber"
    awgn_snr_db: float = 18.0
    seed: int = 1
    output_path: str = "results.csv"
    interleave: bool = False
    phase_mode: str = "per-pol"
    precision: str = "double"
    workers: int = 1
    dump_dir: str = ""
    wdm: WdmConfig = field(default_factory=WdmConfig)
    fiber: FiberParams = field(default_factory=FiberParams)
    amplifier: AmplifierParams = field(default_factory=AmplifierParams)

    def __post_init__(self):
        TargetDistribution(self.distribution)
        if not self.block_lengths:
            raise ValueError("at least one block length is required")
        if self.pilots not in ("on", "off", "both"):
            raise ValueError(f"pilots must be on, off or both, not {self.pilots!r}")
        if self.channel_kind not in ("fiber", "awgn"):
            raise ValueError(f"channel_kind must be fiber or awgn, not {self.channel_kind!r}")
        if self.phase_mode not in ("per-pol", "joint"):
            raise ValueError(f"phase_mode must be per-pol or joint, not {self.phase_mode!r}")
        if self.precision not in ("double", "single"):
            raise ValueError(f"precision must be double or single, not {self.precision!r}")
        if self.pilot_period < 2:
            raise ValueError("pilot_period must be >= 2")
        if self.num_symbols_per_pol < 2:
            raise ValueError("num_symbols_per_pol must be >= 2")
        if self.channel_kind == "fiber":
            if abs(self.amplifier.gain_db - self.fiber.span_loss_db) > 1e-9:
                raise ValueError(
                    f"amplifier gain {self.amplifier.gain_db} dB does not compensate span loss "
                    f"{self.fiber.span_loss_db} dB"
                )
            self.fiber.steps_per_span
            self.wdm.check_bandwidth()

    @property
    def pilot_settings(self) -> tuple[bool, ...]:
        return {"on": (True,), "off": (False,), "both": (False, True)}[self.pilots]

    @property
    def target(self) -> TargetDistribution:
        return TargetDistribution(self.distribution)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


PRESETS = {
    "paper": ExperimentConfig(),
    "desk": ExperimentConfig(
        block_lengths=(10, 50, 100, 400),
        num_symbols_per_pol=2**16,
        precision="single",
        wdm=WdmConfig(num_channels=3, samples_per_symbol=8),
    ),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


_SECTIONS = {"wdm": WdmConfig, "fiber": FiberParams, "amplifier": AmplifierParams}


def _parse_value(raw: str, current):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        cast = type(current[0]) if current else float
        return tuple(cast(p) for p in parts)
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw.strip()


def _apply(obj, items, where):
    known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.name not in _SECTIONS}
    changes = {}
    for key, raw in items:
        if key not in known:
            raise ValueError(f"unknown key {key!r} in [{where}]")
        changes[key] = _parse_value(raw, known[key])
    return dataclasses.replace(obj, **changes) if changes else obj


def load_config(path=None, base: str | ExperimentConfig = "paper", **overrides) -> ExperimentConfig:
    """Read an INI config on top of a preset.

    Sections are ``[experiment]``, ``[wdm]``, ``[fiber]`` and ``[amplifier]``;
    keys are the field names of the matching dataclasses. Unknown sections or
    keys are errors. Keyword ``overrides`` apply to ``[experiment]`` last.
    """
    cfg = preset(base) if isinstance(base, str) else base
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section not in ("experiment", *_SECTIONS):
                raise ValueError(f"unknown config section [{section}]")
        sub = {}
        for name in _SECTIONS:
            part = getattr(cfg, name)
            if parser.has_section(name):
                part = _apply(part, parser.items(name), name)
            sub[name] = part
        exp_items = parser.items("experiment") if parser.has_section("experiment") else []
        cfg = _apply(dataclasses.replace(cfg, **sub), exp_items, "experiment")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)

    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v)

    parser["experiment"] = {
        f.name: fmt(getattr(cfg, f.name)) for f in dataclasses.fields(cfg) if f.name not in _SECTIONS
    }
    for name in _SECTIONS:
        part = getattr(cfg, name)
        parser[name] = {f.name: fmt(getattr(part, f.name)) for f in dataclasses.fields(part)}
    from io import StringIO

    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()


# fields that do not influence numeric results
_NON_PHYSICAL = ("output_path", "workers", "dump_dir", "block_lengths", "pilots")
# bump when a code change alters results for an unchanged configuration
MODEL_REVISION = 2


def config_hash(cfg: ExperimentConfig) -> str:
    data = dataclasses.asdict(cfg)
    for key in _NON_PHYSICAL:
        data.pop(key)
    data["model_revision"] = MODEL_REVISION
    blob = json.dumps(data, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent generator for a named purpose, e.g. ``("data", channel, pol)``."""
    key = (zlib.crc32(name.encode()), *[int(i) for i in index])
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass
class ResultRow:
    n: int
    pilots_enabled: bool
    snr_db_x: float
    snr_db_y: float
    snr_db_mean: float
    bmd_rate: float
    rate_loss_2d: float
    air_n: float
    seed: int
    wall_time_s: float = 0.0

    def numeric(self) -> tuple:
        """Everything except the wall time."""
        return dataclasses.astuple(self)[:-1]


CSV_COLUMNS = tuple(f.name for f in dataclasses.fields(ResultRow))


def _num_amplitudes(num_symbols: int, n: int) -> int:
    """Amplitudes in complete blocks that fit ``num_symbols`` symbols, kept even."""
    total = (2 * num_symbols // n) * n
    if total % 2:
        total -= n
    if total <= 0:
        raise ValueError(f"{num_symbols} symbols per polarization cannot hold one block of length {n}")
    return total


def _payload_slots(cfg: ExperimentConfig, pilots: bool) -> int:
    frame = cfg.num_symbols_per_pol
    if not pilots:
        return frame
    group = cfg.pilot_period - 1
    slots = frame - frame // cfg.pilot_period
    while slots + slots // group > frame:
        slots -= 1
    return slots


def _transmit(cfg: ExperimentConfig, n: int, pilots: bool, channel: int):
    """Frames and payload labels of both polarizations of one WDM channel.

    Every frame has ``num_symbols_per_pol`` symbols whatever ``n`` is, which
    keeps the FFT length fixed. The last CCDM block is cut where the payload
    slots run out; only the complete blocks enter the metrics.
    """
    spec = ConstellationSpec(cfg.target)
    slots = _payload_slots(cfg, pilots)
    _num_amplitudes(slots, n)
    total = -(-2 * slots // n) * n
    frames = []
    for pol in range(2):
        amps = build_sequence(cfg.target, n, total, substream(cfg.seed, "data", channel, pol))
        amps = AmplitudeSequence(amps.amplitudes[: 2 * slots], n)
        if cfg.interleave:
            amps = interleave(amps, substream(cfg.seed, "interleave", channel, pol))
        signs = substream(cfg.seed, "signs", channel, pol).integers(0, 2, size=len(amps), dtype=np.uint8)
        payload, labels = pas_map(amps, signs, spec)
        frame = insert_pilots(
            payload,
            cfg.pilot_period if pilots else None,
            substream(cfg.seed, "pilots", channel, pol),
            power=cfg.pilot_power,
            pattern=cfg.pilot_pattern,
        )
        frame.payload_bits = labels
        frames.append(frame)
    return frames


def _fiber_receive(cfg: ExperimentConfig, n: int, pilots: bool, frames_center, run_tag: str):
    with _stage("pas_framing"):
        all_frames = [
            frames_center if c == cfg.wdm.center_index else _transmit(cfg, n, pilots, c)
            for c in range(cfg.wdm.num_channels)
        ]
    with _stage("channel"):
        field_in = modulate_wdm(all_frames, cfg.wdm, cfg.fiber.center_frequency)
        callback = None
        if cfg.dump_dir:
            os.makedirs(cfg.dump_dir, exist_ok=True)

            def callback(span, fld):
                write_field(os.path.join(cfg.dump_dir, f"{run_tag}_span{span:02d}.bin"), fld)

        dtype = np.complex128 if cfg.precision == "double" else np.complex64
        field_out = propagate_ssfm(
            field_in,
            cfg.fiber,
            cfg.amplifier,
            noise_seed=[cfg.seed, zlib.crc32(b"ase")],
            dtype=dtype,
            span_callback=callback,
        )
    with _stage("rx_dsp"):
        field_cd = cd_compensate(field_out, cfg.fiber)
        rx = extract_center_channel(field_cd, cfg.wdm)
        rx, _ = phase_compensate(rx, frames_center, joint=cfg.phase_mode == "joint")
    return list(rx)


def run_single(cfg: ExperimentConfig, n: int, pilots_enabled: bool) -> ResultRow:
    """Run shaping, framing, channel, receiver and metrics for one point."""
    start = time.perf_counter()
    if n < HIGH_RATE_LOSS_BELOW:
        logger.info("n=%d is below %d: high rate loss regime", n, HIGH_RATE_LOSS_BELOW)
    with _stage("shaping"):
        comp = derive_composition(cfg.target, n)
        dm = codebook_info(comp, cfg.target)
    with _stage("pas_framing"):
        frames = _transmit(cfg, n, pilots_enabled, cfg.wdm.center_index)
    if cfg.channel_kind == "awgn":
        with _stage("channel"):
            received = awgn_channel(frames, cfg.awgn_snr_db, substream(cfg.seed, "awgn"))
    else:
        received = _fiber_receive(cfg, n, pilots_enabled, frames, f"n{n}_p{int(pilots_enabled)}_s{cfg.seed}")
    with _stage("metrics"):
        # points carry the transmit scale; priors follow the realised composition
        points, labels, _ = ConstellationSpec(cfg.target).points()
        _, _, priors = ConstellationSpec(TargetDistribution(tuple(comp.probs()))).points()
        m = _num_amplitudes(_payload_slots(cfg, pilots_enabled), n) // 2
        traces = [
            SymbolTrace(f.payload[:m], remove_pilots(y, f.pilot_mask)[:m], f.payload_bits[:m], points, labels, priors)
            for f, y in zip(frames, received)
        ]
        lm = link_metrics(traces, dm, pilots_enabled, cfg.seed)
    return ResultRow(
        n=n,
        pilots_enabled=pilots_enabled,
        snr_db_x=lm.snr_db_x,
        snr_db_y=lm.snr_db_y,
        snr_db_mean=lm.snr_db_mean,
        bmd_rate=lm.bmd_rate,
        rate_loss_2d=lm.rate_loss_2d,
        air_n=lm.air_n,
        seed=cfg.seed,
        wall_time_s=time.perf_counter() - start,
    )


def _row_from_csv(rec: dict) -> ResultRow:
    return ResultRow(
        n=int(rec["n"]),
        pilots_enabled=rec["pilots_enabled"] in ("1", "True", "true"),
        snr_db_x=float(rec["snr_db_x"]),
        snr_db_y=float(rec["snr_db_y"]),
        snr_db_mean=float(rec["snr_db_mean"]),
        bmd_rate=float(rec["bmd_rate"]),
        rate_loss_2d=float(rec["rate_loss_2d"]),
        air_n=float(rec["air_n"]),
        seed=int(rec["seed"]),
        wall_time_s=float(rec["wall_time_s"]),
    )


def _row_to_line(row: ResultRow) -> str:
    values = []
    for v in dataclasses.astuple(row):
        if isinstance(v, bool):
            values.append(str(int(v)))
        elif isinstance(v, float):
            values.append(repr(v))
        else:
            values.append(str(v))
    return ",".join(values) + "\n"


def read_results(path) -> list[ResultRow]:
    """Rows of a results CSV; lines starting with ``#`` are comments."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    if not lines:
        return []
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
    return [_row_from_csv(rec) for rec in reader]


def _prepare_output(path: Path, cfg: ExperimentConfig) -> list[ResultRow]:
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar = path.with_name(path.name + ".json")
    digest = config_hash(cfg)
    if sidecar.exists():
        old = json.loads(sidecar.read_text())
        if old.get("config_hash") != digest:
            raise ValueError(f"{path} was produced with a different configuration ({old.get('config_hash')})")
    existing = read_results(path) if path.exists() and path.stat().st_size else []
    with open(path, "a") as fh:
        if not existing and fh.tell() == 0:
            fh.write(f"# pcsfiber results schema_version={CSV_SCHEMA_VERSION}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
    sidecar.write_text(
        json.dumps({"config_hash": digest, "config": dataclasses.asdict(cfg)}, indent=2, default=str) + "\n"
    )
    return existing


def _append(path: Path, row: ResultRow):
    with open(path, "a") as fh:
        fh.write(_row_to_line(row))
        fh.flush()
        os.fsync(fh.fileno())


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """Run every (block length, pilot setting) pair not already in the CSV.

    Rows are appended as runs finish, so an interrupted sweep resumes where it
    stopped. Returns the rows of this configuration sorted by (n, pilots).
    """
    path = Path(cfg.output_path)
    try:
        existing = _prepare_output(path, cfg)
    except OSError as exc:
        raise StageError("harness", exc) from exc
    done = {(r.n, r.pilots_enabled, r.seed) for r in existing}
    todo = [
        (n, p) for n in cfg.block_lengths for p in cfg.pilot_settings if (n, p, cfg.seed) not in done
    ]
    workers = workers or cfg.workers
    new = []
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_single, cfg, n, p) for n, p in todo]
            for fut in as_completed(futures):
                row = fut.result()
                _append(path, row)
                new.append(row)
    else:
        for n, p in todo:
            logger.info("running n=%d pilots=%s seed=%d", n, p, cfg.seed)
            row = run_single(cfg, n, p)
            _append(path, row)
            new.append(row)
    wanted = {(n, p) for n in cfg.block_lengths for p in cfg.pilot_settings}
    rows = [r for r in existing + new if (r.n, r.pilots_enabled) in wanted and r.seed == cfg.seed]
    return sorted(rows, key=lambda r: (r.n, r.pilots_enabled))
