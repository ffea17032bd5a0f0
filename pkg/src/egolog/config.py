"""Pipeline configuration: an INI file plus dotted command-line overrides.

Settings live under [paths], [run], [llm], [embedder], [digest], and
[refine]. Any key can be overridden on the command line by its dotted
name (for example --digest.relevance_threshold 0.4). The seed is
mandatory; nothing in the pipeline ever seeds from the clock. Paths are
resolved relative to the config file, and every configured input file
must exist at load time. Auth tokens are named here as environment
variable names, never written as values.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .digest import DEFAULT_BLOCKLIST, DigestConfig, MergeMode
from .errors import ConfigError
from .refine import RefineConfig

LLM_KINDS = ("replay", "http")
EMBEDDER_KINDS = ("mock", "http")

_KNOWN_KEYS = {
    "paths": ("captions", "queries", "transcripts", "output"),
    "run": ("seed", "runs", "in_flight_limit"),
    "llm": ("kind", "endpoint", "auth_env"),
    "embedder": ("kind", "endpoint", "auth_env", "dim"),
    "digest": (
        "blocklist",
        "relevance_threshold",
        "adjacency_threshold",
        "max_merge_group",
        "merge_mode",
    ),
    "refine": (
        "pad_alpha",
        "jitter_shift_max",
        "jitter_scale_lo",
        "jitter_scale_hi",
        "pos_iou",
        "neg_iou",
        "samples_per_gt",
    ),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved settings for one pipeline invocation."""

    captions_path: Path | None
    queries_path: Path | None
    transcripts_path: Path | None
    output_path: Path | None
    seed: int
    runs: int
    in_flight_limit: int
    llm_kind: str
    llm_endpoint: str | None
    llm_auth_env: str | None
    embedder_kind: str
    embedder_endpoint: str | None
    embedder_auth_env: str | None
    embedder_dim: int
    digest: DigestConfig
    refine: RefineConfig
    samples_per_gt: int

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.in_flight_limit < 1:
            raise ConfigError("in_flight_limit must be >= 1")
        if self.llm_kind not in LLM_KINDS:
            raise ConfigError(f"llm.kind must be one of {LLM_KINDS}")
        if self.embedder_kind not in EMBEDDER_KINDS:
            raise ConfigError(f"embedder.kind must be one of {EMBEDDER_KINDS}")
        if self.llm_kind == "http" and not self.llm_endpoint:
            raise ConfigError("llm.kind is http but llm.endpoint is not set")
        if self.embedder_kind == "http" and not self.embedder_endpoint:
            raise ConfigError("embedder.kind is http but embedder.endpoint is not set")
        if self.embedder_dim < 1:
            raise ConfigError("embedder.dim must be >= 1")
        if self.samples_per_gt < 1:
            raise ConfigError("refine.samples_per_gt must be >= 1")


def _check_known(cp: configparser.ConfigParser) -> None:
    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")


def _get(cp, section: str, key: str, default: str | None = None) -> str | None:
    if cp.has_option(section, key):
        value = cp.get(section, key).strip()
        return value if value else default
    return default


def _get_int(cp, section: str, key: str, default: int | None) -> int | None:
    raw = _get(cp, section, key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key} must be an integer, got {raw!r}") from exc


def _get_float(cp, section: str, key: str, default: float) -> float:
    raw = _get(cp, section, key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key} must be a number, got {raw!r}") from exc


def _resolve_path(base: Path, raw: str | None) -> Path | None:
    if raw is None:
        return None
    path = Path(raw)
    return path if path.is_absolute() else (base / path)


def parse_override(flag: str) -> tuple[str, str]:
    """Split a dotted override name "section.key" after validating it."""
    if flag.count(".") != 1:
        raise ConfigError(f"override {flag!r} is not of the form section.key")
    section, key = flag.split(".")
    if section not in _KNOWN_KEYS or key not in _KNOWN_KEYS[section]:
        raise ConfigError(f"unknown config key {flag!r}")
    return section, key


def load_config(
    path: str | Path, overrides: Mapping[str, str] | None = None
) -> PipelineConfig:
    """Read an INI file, apply dotted overrides, and validate everything."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as handle:
            cp.read_file(handle)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    _check_known(cp)
    for flag, value in (overrides or {}).items():
        section, key = parse_override(flag)
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value

    base = path.parent.resolve()
    captions_path = _resolve_path(base, _get(cp, "paths", "captions"))
    queries_path = _resolve_path(base, _get(cp, "paths", "queries"))
    transcripts_path = _resolve_path(base, _get(cp, "paths", "transcripts"))
    output_path = _resolve_path(base, _get(cp, "paths", "output"))
    for name, p in (
        ("paths.captions", captions_path),
        ("paths.queries", queries_path),
        ("paths.transcripts", transcripts_path),
    ):
        if p is not None and not p.is_file():
            raise ConfigError(f"{name} file {p} does not exist")

    seed = _get_int(cp, "run", "seed", None)
    if seed is None:
        raise ConfigError("run.seed is required; runs are never seeded from the clock")

    blocklist_raw = _get(cp, "digest", "blocklist")
    if blocklist_raw is None:
        blocklist = DEFAULT_BLOCKLIST
    else:
        blocklist = tuple(
            part.strip() for part in blocklist_raw.split(",") if part.strip()
        )
    merge_mode_raw = _get(cp, "digest", "merge_mode", "concat")
    try:
        merge_mode = MergeMode(merge_mode_raw)
    except ValueError as exc:
        raise ConfigError(
            f"digest.merge_mode must be one of {[m.value for m in MergeMode]}"
        ) from exc
    try:
        digest_cfg = DigestConfig(
            blocklist=blocklist,
            relevance_threshold=_get_float(cp, "digest", "relevance_threshold", 0.30),
            adjacency_threshold=_get_float(cp, "digest", "adjacency_threshold", 0.85),
            max_merge_group=_get_int(cp, "digest", "max_merge_group", 8),
            merge_mode=merge_mode,
        )
        refine_cfg = RefineConfig(
            pad_alpha=_get_float(cp, "refine", "pad_alpha", 10.0),
            jitter_shift_max=_get_float(cp, "refine", "jitter_shift_max", 30.0),
            jitter_scale_range=(
                _get_float(cp, "refine", "jitter_scale_lo", 0.5),
                _get_float(cp, "refine", "jitter_scale_hi", 2.0),
            ),
            pos_iou=_get_float(cp, "refine", "pos_iou", 0.5),
            neg_iou=_get_float(cp, "refine", "neg_iou", 0.1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return PipelineConfig(
        captions_path=captions_path,
        queries_path=queries_path,
        transcripts_path=transcripts_path,
        output_path=output_path,
        seed=seed,
        runs=_get_int(cp, "run", "runs", 5),
        in_flight_limit=_get_int(cp, "run", "in_flight_limit", 4),
        llm_kind=_get(cp, "llm", "kind", "replay"),
        llm_endpoint=_get(cp, "llm", "endpoint"),
        llm_auth_env=_get(cp, "llm", "auth_env"),
        embedder_kind=_get(cp, "embedder", "kind", "mock"),
        embedder_endpoint=_get(cp, "embedder", "endpoint"),
        embedder_auth_env=_get(cp, "embedder", "auth_env"),
        embedder_dim=_get_int(cp, "embedder", "dim", 64),
        digest=digest_cfg,
        refine=refine_cfg,
        samples_per_gt=_get_int(cp, "refine", "samples_per_gt", 10),
    )


def effective_dict(config: PipelineConfig) -> dict:
    """The resolved settings as one nested dict, for hashing and manifests."""
    return {
        "paths": {
            "captions": str(config.captions_path) if config.captions_path else None,
            "queries": str(config.queries_path) if config.queries_path else None,
            "transcripts": (
                str(config.transcripts_path) if config.transcripts_path else None
            ),
            "output": str(config.output_path) if config.output_path else None,
        },
        "run": {
            "seed": config.seed,
            "runs": config.runs,
            "in_flight_limit": config.in_flight_limit,
        },
        "llm": {
            "kind": config.llm_kind,
            "endpoint": config.llm_endpoint,
            "auth_env": config.llm_auth_env,
        },
        "embedder": {
            "kind": config.embedder_kind,
            "endpoint": config.embedder_endpoint,
            "auth_env": config.embedder_auth_env,
            "dim": config.embedder_dim,
        },
        "digest": {
            "blocklist": list(config.digest.blocklist),
            "relevance_threshold": config.digest.relevance_threshold,
            "adjacency_threshold": config.digest.adjacency_threshold,
            "max_merge_group": config.digest.max_merge_group,
            "merge_mode": config.digest.merge_mode.value,
        },
        "refine": {
            "pad_alpha": config.refine.pad_alpha,
            "jitter_shift_max": config.refine.jitter_shift_max,
            "jitter_scale_lo": config.refine.jitter_scale_range[0],
            "jitter_scale_hi": config.refine.jitter_scale_range[1],
            "pos_iou": config.refine.pos_iou,
            "neg_iou": config.refine.neg_iou,
            "samples_per_gt": config.samples_per_gt,
        },
    }


def config_sha256(config: PipelineConfig) -> str:
    canonical = json.dumps(effective_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
