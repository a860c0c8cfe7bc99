"""One flat ``key=value`` configuration shared by every pipeline.

Blank lines and lines starting with ``#`` are ignored. Unknown keys and
unparseable values are rejected with the offending line number.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Union

from .assign import DEFAULT_EPSILON, DEFAULT_ITERS, DEFAULT_TOL
from .costs import DEFAULT_GAMMA
from .errors import ParseError
from .loss import LossParams
from .metrics import IOU_THRESH
from .pseudo import MAX_OCCLUDED, MIN_AREA, MIN_CONF, MIN_MATCH_IOU, NMS_IOU, TAU_OCC
from .tracker import TrackerConfig

MATCHERS = ("sinkhorn", "hungarian")


@dataclass(frozen=True)
class Config:
    sigma: float = 0.7
    epsilon: float = DEFAULT_EPSILON
    gamma: float = DEFAULT_GAMMA
    sinkhorn_iters: int = DEFAULT_ITERS
    sinkhorn_tol: float = DEFAULT_TOL
    max_age: int = 10
    nms_iou: float = NMS_IOU
    min_conf: float = MIN_CONF
    min_area: float = MIN_AREA
    min_match_iou: float = MIN_MATCH_IOU
    tau_occ: float = TAU_OCC
    occlusion_max_ratio: float = MAX_OCCLUDED
    margin: float = 0.3
    alpha: float = 1.0
    beta: float = 0.5
    matcher: str = "sinkhorn"
    iou_thresh_eval: float = IOU_THRESH

    def __post_init__(self):
        if self.matcher not in MATCHERS:
            raise ValueError(f"matcher must be one of {MATCHERS}, got {self.matcher!r}")

    def tracker(self) -> TrackerConfig:
        return TrackerConfig(
            sigma=self.sigma,
            epsilon=self.epsilon,
            gamma=self.gamma,
            iters=self.sinkhorn_iters,
            tol=self.sinkhorn_tol,
            max_age=self.max_age,
            matcher=self.matcher,
        )

    def loss(self) -> LossParams:
        return LossParams(
            alpha=self.alpha,
            beta=self.beta,
            margin=self.margin,
            epsilon=self.epsilon,
            iters=self.sinkhorn_iters,
        )

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


_TYPES = {f.name: f.type for f in fields(Config)}


def parse_config(text: str, source: str = "<config>") -> Config:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ParseError("expected key=value", source, lineno)
        if key not in _TYPES:
            raise ParseError(f"unknown key {key!r}", source, lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", source, lineno)
        kind = _TYPES[key]
        try:
            values[key] = value if kind == "str" else (int(value) if kind == "int" else float(value))
        except ValueError:
            raise ParseError(f"bad {kind} value {value!r} for {key}", source, lineno) from None
    try:
        return replace(Config(), **values)
    except ValueError as exc:
        raise ParseError(str(exc), source, None) from None


def read_config(path: Union[str, Path, None]) -> Config:
    if path is None:
        return Config()
    return parse_config(Path(path).read_text(), str(path))


def write_config(path: Union[str, Path], config: Config) -> None:
    Path(path).write_text(config.to_text())
