"""Run configuration: JSON with exact rationals, validation and hashing."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction

from .group_model import GROUPS
from .walk_kernel import as_fraction, fraction_json


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    group: str = "f2-rel-z"
    a: Fraction = Fraction(2)
    p: Fraction = Fraction(2)
    q: Fraction = Fraction(4)
    seed: int = 1
    # ball
    ball_radius: int = 8
    ball_margin: int = 0
    budget: int = 5_000_000
    # walk sampling
    steps: int = 400
    paths: int = 10_000
    n_grid: tuple = (16, 32, 48, 64, 96, 128)
    entropy_paths: int = 2000
    # Green function
    spectral_n_max: int = 20
    green_pairs: int = 500
    cusp_depths: tuple = (3, 4, 5, 6, 7, 8)
    ancona_distances: tuple = (8, 12, 16)
    ancona_triples: int = 200
    delta_radii: tuple = (6, 8, 10)
    quadruples: int = 20_000
    critical_radius: int = 60
    # boundary
    R_horizon: int = 30
    shadow_distances: tuple = (6, 7, 8, 9, 10, 11, 12, 13, 14)
    shadow_per_distance: int = 4
    shadow_paths: int = 1000
    boundary_centers: int = 16
    boundary_paths: int = 500
    levels_X: tuple = (2, 4, 6, 8, 10, 12, 14, 16)
    levels_G: tuple = (2, 4, 6, 8, 10, 12, 14)
    ps_offset: float = 0.1
    epsilon_X: float | None = None
    epsilon_G: float | None = None
    out: str = field(default="out", compare=False)

    RATIONAL = ("a", "p", "q")
    # (minimum, maximum) for integer fields
    RANGES = {
        "seed": (0, 2**63 - 1), "ball_radius": (0, 12), "ball_margin": (0, 4),
        "budget": (1, 10**9), "steps": (0, 100_000), "paths": (1, 10**7),
        "entropy_paths": (2, 10**6), "spectral_n_max": (6, 200), "green_pairs": (2, 10**6),
        "ancona_triples": (2, 10**5), "quadruples": (1, 10**7), "critical_radius": (8, 400),
        "R_horizon": (4, 200), "shadow_per_distance": (1, 1000), "shadow_paths": (1, 10**6),
        "boundary_centers": (1, 10**4), "boundary_paths": (1, 10**6),
    }

    def validate(self) -> "RunConfig":
        if self.group not in GROUPS:
            raise ConfigError(f"unknown group {self.group!r}; choose from {sorted(GROUPS)}")
        for name in self.RATIONAL:
            try:
                setattr(self, name, as_fraction(getattr(self, name)))
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"{name}: {exc}") from None
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.a <= 1:
            raise ConfigError("a must exceed 1")
        for name, (lo, hi) in self.RANGES.items():
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not lo <= v <= hi:
                raise ConfigError(f"{name}={v!r} outside [{lo}, {hi}]")
        for name in ("n_grid", "cusp_depths", "ancona_distances", "delta_radii",
                     "shadow_distances", "levels_X", "levels_G"):
            v = tuple(getattr(self, name))
            if not v or any(not isinstance(x, int) or x < 0 for x in v):
                raise ConfigError(f"{name} must be a nonempty list of nonnegative integers")
            setattr(self, name, v)
        if max(self.n_grid) > 4096:
            raise ConfigError("n_grid entries above 4096 are not supported")
        for name in ("epsilon_X", "epsilon_G"):
            v = getattr(self, name)
            if v is not None and not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if not 0 < self.ps_offset <= 2:
            raise ConfigError("ps_offset must lie in (0, 2]")
        return self

    def to_json(self, with_out: bool = False) -> dict:
        d = {}
        for f in fields(self):
            if f.name == "out" and not with_out:
                continue
            v = getattr(self, f.name)
            if isinstance(v, Fraction):
                v = fraction_json(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = {}
        for k, v in data.items():
            if isinstance(v, dict) and set(v) == {"num", "den"}:
                v = Fraction(v["num"], v["den"])
            elif isinstance(v, list):
                v = tuple(v)
            kw[k] = v
        return cls(**kw).validate()

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_json(data)

    def replace(self, **kw) -> "RunConfig":
        d = asdict(self)
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig(**d).validate()
