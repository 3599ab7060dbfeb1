"""Flat ``key = value`` run configuration.

Values are kept as text with their origin (``file:line`` or ``--flag``)
and parsed on demand, so each subcommand only validates the keys it uses
and errors point at the offending line.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import ConfigError, GbsError
from .inputs import Family, InputModel
from .network import TransmissionMatrix, load_matrix
from .observables import BinningSpec
from .statistics import FitGrid

KNOWN_KEYS = {
    "r", "r_file", "n", "modes", "epsilon", "t", "sigma", "family", "matrix",
    "n_s", "n_r", "e_s", "seed", "threads", "d", "subsets", "out", "orders",
    "n_fake", "trials", "t_grid", "eps_grid", "patterns", "pattern_format",
    "theory", "counts", "perm_seed",
}


@dataclass(frozen=True)
class Entry:
    value: str
    where: str


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Entry]:
    entries: dict[str, Entry] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"{where}: duplicate key {key!r} (first at {entries[key].where})")
        entries[key] = Entry(value, where)
    return entries


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


class RunConfig:
    """Parsed configuration with file values overridden by flags."""

    def __init__(self, entries: dict[str, Entry] | None = None, base_dir: str | os.PathLike = "."):
        self.entries = dict(entries or {})
        self.base_dir = Path(base_dir)

    @classmethod
    def load(cls, path: str | os.PathLike | None, overrides: dict[str, str] | None = None) -> "RunConfig":
        entries: dict[str, Entry] = {}
        base = Path(".")
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            entries = parse_config_text(text, str(path))
            base = Path(path).parent
        cfg = cls(entries, base)
        for key, value in (overrides or {}).items():
            if value is not None:
                cfg.set(key, value, f"--{key.replace('_', '-')}")
        return cfg

    def set(self, key: str, value, where: str = "<override>") -> None:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        self.entries[key] = Entry(str(value), where)

    def has(self, key: str) -> bool:
        return key in self.entries

    def _get(self, key, parse, default=None, required=False):
        entry = self.entries.get(key)
        if entry is None:
            if required:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return parse(entry.value)
        except (ValueError, GbsError) as exc:
            raise ConfigError(f"{entry.where}: invalid {key}: {exc}") from None

    def where(self, key: str) -> str:
        entry = self.entries.get(key)
        return entry.where if entry else "<defaults>"

    def path(self, key: str, required: bool = True) -> Path | None:
        p = self._get(key, str, required=required)
        if p is None:
            return None
        p = Path(p)
        # file values are relative to the config file, flag values to the cwd
        if p.is_absolute() or self.entries[key].where.startswith("--"):
            return p
        return self.base_dir / p

    # -- scalars -----------------------------------------------------------

    @property
    def seed(self) -> int:
        return self._get("seed", lambda s: rng.check_seed(int(s, 0)), 0)

    @property
    def threads(self) -> int:
        n = self._get("threads", int, 1)
        if n < 1:
            raise ConfigError(f"{self.where('threads')}: threads must be at least 1")
        return n

    @property
    def out_dir(self) -> Path:
        return Path(self._get("out", str, "."))

    def int_value(self, key: str, default=None, required=False, minimum: int = 1) -> int:
        v = self._get(key, int, default, required)
        if v is not None and v < minimum:
            raise ConfigError(f"{self.where(key)}: {key} must be at least {minimum}")
        return v

    # -- model -------------------------------------------------------------

    def _squeezing(self) -> tuple[str, np.ndarray]:
        given = [k for k in ("r", "r_file", "n") if k in self.entries]
        if len(given) != 1:
            raise ConfigError("give exactly one of 'r', 'r_file' or 'n' for the input modes")
        key = given[0]
        if key == "r_file":
            path = self.path("r_file")
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"{self.where(key)}: cannot read {path}: {exc}") from exc
            lines = [ln.split("#", 1)[0] for ln in text.splitlines()]
            values = self._get(key, lambda _: _floats(" ".join(lines)))
        else:
            values = self._get(key, _floats)
        if not values:
            raise ConfigError(f"{self.where(given[0])}: no values")
        modes = self._get("modes", int)
        if modes is not None:
            if len(values) == 1:
                values = values * modes
            elif len(values) != modes:
                raise ConfigError(f"{self.where('modes')}: modes={modes} but {len(values)} values given")
        return key, np.asarray(values)

    def sigmas(self) -> list[float]:
        vals = self._get("sigma", _floats, [0.0])
        if not vals:
            raise ConfigError(f"{self.where('sigma')}: empty sigma list")
        return vals

    def model(self, sigma: float | None = None) -> InputModel:
        key, values = self._squeezing()
        family = self._get("family", Family.parse, Family.PURE_SQUEEZED)
        kw = dict(epsilon=self._get("epsilon", float, 0.0), t=self._get("t", float, 1.0),
                  family=family)
        if sigma is None:
            sig = self.sigmas()
            if len(sig) != 1:
                raise ConfigError(f"{self.where('sigma')}: a single sigma is required here")
            sigma = sig[0]
        kw["sigma"] = sigma
        try:
            if key == "n":
                return InputModel.from_photon_numbers(values, **kw)
            return InputModel(values, **kw)
        except (ValueError, GbsError) as exc:
            raise ConfigError(f"{self.where(key)}: invalid input model: {exc}") from None

    def matrix(self, n_modes: int) -> TransmissionMatrix:
        spec = self._get("matrix", str)
        if spec is None:
            if n_modes > 1:
                raise ConfigError(f"'matrix' is required for {n_modes} input modes "
                                  "(use 'matrix = identity' for no network)")
            return TransmissionMatrix.identity(1)
        if spec.strip().lower() == "identity":
            return TransmissionMatrix.identity(n_modes)
        T = load_matrix(self.path("matrix"))
        if T.n_in != n_modes:
            raise ConfigError(f"{self.where('matrix')}: matrix has {T.n_in} inputs, "
                              f"model has {n_modes} modes")
        return T

    def sizes(self) -> tuple[int, int]:
        """``(n_s, n_r)`` from any two of ``n_s``, ``n_r`` and ``e_s``."""
        n_s = self.int_value("n_s")
        n_r = self.int_value("n_r")
        e_s = self.int_value("e_s")
        if e_s is not None:
            if n_s is not None and n_r is not None:
                if n_s * n_r != e_s:
                    raise ConfigError(f"{self.where('e_s')}: e_s must equal n_s * n_r")
                return n_s, n_r
            if n_s is None:
                n_r = n_r or 16
                if e_s % n_r:
                    raise ConfigError(f"{self.where('e_s')}: e_s={e_s} is not divisible by n_r={n_r}")
                return e_s // n_r, n_r
            if e_s % n_s:
                raise ConfigError(f"{self.where('e_s')}: e_s={e_s} is not divisible by n_s={n_s}")
            return n_s, e_s // n_s
        if n_s is None:
            raise ConfigError("missing sample size: give 'n_s' or 'e_s'")
        return n_s, n_r or 16

    def binning(self, n_modes: int) -> BinningSpec:
        d = self.int_value("d", 1)
        text = self._get("subsets", str, "equal-split")
        try:
            return BinningSpec.parse(text, n_modes, d)
        except (ValueError, GbsError) as exc:
            where = self.where("subsets") if self.has("subsets") else self.where("d")
            raise ConfigError(f"{where}: invalid binning: {exc}") from None

    def orders(self) -> list[int]:
        vals = self._get("orders", lambda s: [int(v) for v in s.replace(",", " ").split()], [])
        if any(v < 1 for v in vals):
            raise ConfigError(f"{self.where('orders')}: orders must be positive")
        return vals

    def grid(self) -> FitGrid:
        def axis(key, default):
            text = self._get(key, str, default)
            parts = text.split(":")
            try:
                if len(parts) == 3:
                    return tuple(np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
                return tuple(_floats(text))
            except ValueError as exc:
                raise ConfigError(f"{self.where(key)}: invalid grid: {exc}") from None

        try:
            return FitGrid(axis("t_grid", "0.95:1.05:11"), axis("eps_grid", "0:0.1:11"))
        except GbsError as exc:
            raise ConfigError(f"invalid fit grid: {exc}") from None
