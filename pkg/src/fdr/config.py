"""Run configuration: INI files (or a previous run's manifest) to typed settings."""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .inference import SubsamplingConfig
from .solver import SolverConfig
from .sure import SureConfig

COMMANDS = ("fit", "sure", "bands", "simulate")

# keys accepted per section; anything else is a typo and rejected
SCHEMA = {
    "run": {"input", "out", "seed"},
    "grid": {"n_cells", "s_levels", "padding", "density", "winsor_q", "domain_box", "value_range"},
    "solver": {"lam", "nu", "tol", "max_iter", "check_every", "step_rule", "backend"},
    "sure": {"sigma", "delta", "r_draws", "lambda_range", "nu_range", "grid_size",
             "log_uniform", "probe", "variance"},
    "bands": {"method", "alpha", "j_reps", "block_sizes", "quantile_pairs"},
    "simulate": {"dims", "cohens_d", "n", "reps", "sigma", "n_cells", "lam", "nu"},
}


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())


def _pairs(text: str) -> tuple:
    vals = _floats(text)
    if len(vals) % 2:
        raise ValueError("expected an even number of values")
    return tuple(zip(vals[::2], vals[1::2]))


@dataclass
class RunConfig:
    """Sections of raw string values plus typed accessors."""

    sections: dict

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Read an INI file, or a JSON manifest written by a previous run."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if path.suffix == ".json":
            try:
                data = json.loads(text)
                sections = data["config"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path} is not a run manifest") from exc
        else:
            parser = configparser.ConfigParser(interpolation=None)
            try:
                parser.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise ConfigError(str(exc)) from exc
            sections = {s: dict(parser.items(s)) for s in parser.sections()}
        cfg = cls({s: {k: str(v) for k, v in kv.items()} for s, kv in sections.items()})
        cfg.validate_keys()
        return cfg

    def validate_keys(self) -> None:
        for section, values in self.sections.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            extra = set(values) - SCHEMA[section]
            if extra:
                raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = str(value)

    def raw(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def get(self, section: str, key: str, conv, default=None, required: bool = False):
        text = self.raw(section, key)
        if text is None or text.strip() == "":
            if required:
                raise ConfigError(f"missing [{section}] {key}")
            return default
        try:
            return conv(text.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {text!r} ({exc})") from exc

    def canonical(self) -> dict:
        return {s: dict(sorted(kv.items())) for s, kv in sorted(self.sections.items())}

    def sha256(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # typed views -----------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.get("run", "seed", int, 0)

    def grid_kwargs(self) -> dict:
        cells = self.get("grid", "n_cells", _ints, required=True)
        box = self.get("grid", "domain_box", _pairs)
        vrange = self.get("grid", "value_range", _floats)
        if vrange is not None and len(vrange) != 2:
            raise ConfigError("[grid] value_range needs two values")
        return {
            "n_cells": cells[0] if len(cells) == 1 else cells,
            "s_levels": self.get("grid", "s_levels", int, 32),
            "padding": self.get("grid", "padding", float, 0.05),
            "domain_box": box,
            "value_range": vrange,
        }

    def binning_kwargs(self) -> dict:
        density = self.get("grid", "density", str, "histogram")
        if density not in ("histogram", "uniform"):
            raise ConfigError("[grid] density must be histogram or uniform")
        return {"density": density, "winsor_q": self.get("grid", "winsor_q", float)}

    def solver(self, need_theta: bool = True) -> SolverConfig:
        g = lambda k, conv, default=None, req=False: self.get("solver", k, conv, default, req)
        try:
            return SolverConfig(
                lam=g("lam", float, 1.0, need_theta),
                nu=g("nu", float, 1.0, need_theta),
                tol=g("tol", float, 5e-5),
                max_iter=g("max_iter", int, 3000),
                check_every=g("check_every", int, 10),
                step_rule=g("step_rule", str, "preconditioned"),
                backend=g("backend", str),
            )
        except ValueError as exc:
            raise ConfigError(f"[solver] {exc}") from exc

    def sure(self) -> SureConfig:
        g = lambda k, conv, default=None: self.get("sure", k, conv, default)
        bools = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}

        def as_bool(text):
            if text.lower() not in bools:
                raise ValueError("expected true/false")
            return bools[text.lower()]

        try:
            return SureConfig(
                sigma=g("sigma", float),
                delta=g("delta", float),
                r_draws=g("r_draws", int, 3),
                lambda_range=g("lambda_range", _floats, (1.0, 500.0)),
                nu_range=g("nu_range", _floats, (5e-4, 0.1)),
                grid_size=g("grid_size", _ints, (20, 20)),
                log_uniform=g("log_uniform", as_bool, False),
                probe=g("probe", str, "gaussian"),
                variance=g("variance", str, "binned"),
                seed=self.seed,
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[sure] {exc}") from exc

    def subsampling(self) -> SubsamplingConfig:
        g = lambda k, conv, default=None: self.get("bands", k, conv, default)
        try:
            return SubsamplingConfig(
                j_reps=g("j_reps", int, 100),
                block_sizes=g("block_sizes", _ints),
                alpha=g("alpha", float, 0.05),
                quantile_pairs=g("quantile_pairs", _pairs, ((0.25, 0.75), (0.10, 0.90))),
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(f"[bands] {exc}") from exc
