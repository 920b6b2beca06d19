"""Experiment configuration: flat JSON files mirrored 1:1 by CLI flags."""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

EXPERIMENTS = (
    "density",
    "spacing",
    "repulsion",
    "lyapunov",
    "transfer-growth",
    "eigvec-decay",
    "mean-hamiltonian",
    "n2-oracle",
    "ipr-scan",
    "goe-crosscheck",
)

# per-experiment defaults; these are the acceptance-scale settings
DEFAULTS = {
    "density": {"beta": [1.0, 4.0], "n": 512, "realizations": 200, "bins": 60},
    "spacing": {"beta": [2.0], "n": 256, "realizations": 100, "central_fraction": 0.5, "bins": 40},
    "repulsion": {
        "beta": [1.0, 4.0],
        "n": 16,
        "realizations": 100_000,
        "central_fraction": 0.5,
        "quantile_cut": 0.002,
        "bins": 60,
    },
    "lyapunov": {"beta": [1.0], "n": 10_000, "det_n": 2000, "realizations": 200},
    "transfer-growth": {"beta": [1.0, 2.0, 4.0], "n": 1_000_000, "realizations": 200, "fit_window": [100, 1_000_000]},
    "eigvec-decay": {
        "beta": [1.0],
        "n": 4096,
        "realizations": 100,
        "growth_n": 100_000,
        "fit_window": [100, 100_000],
        "min_window_ratio": 4.0,
    },
    "mean-hamiltonian": {"beta": [1.0, 2.0, 4.0], "n": 50, "realizations": 1},
    "n2-oracle": {"beta": [1.0, 2.0, 4.0], "n": 2, "realizations": 1_000_000, "bins": 80},
    "ipr-scan": {"beta": [0.5, 1.0, 2.0, 4.0], "n": 1024, "realizations": 100},
    "goe-crosscheck": {"beta": [1.0], "n": 50, "realizations": 10_000},
}

KEYS = (
    "experiment",
    "beta",
    "n",
    "realizations",
    "seed",
    "lambda",
    "bins",
    "checkpoints",
    "fit_window",
    "central_fraction",
    "quantile_cut",
    "growth_n",
    "det_n",
    "min_window_ratio",
    "workers",
    "out",
)


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` carries a location prefix when known."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    beta: tuple = (1.0,)
    n: int = 64
    realizations: int = 1
    seed: int = 0
    lam: float = 0.0
    bins: int = 60
    checkpoints: tuple | None = None
    fit_window: tuple | None = None
    central_fraction: float = 0.5
    quantile_cut: float = 0.002
    growth_n: int = 100_000
    det_n: int = 2000
    min_window_ratio: float = 4.0
    workers: int = 1
    out: str = "betaspec-out"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        for k in ("beta", "checkpoints", "fit_window"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def _key_line(text: str | None, key: str) -> int | None:
    if text is None:
        return None
    pat = re.compile(r'"%s"\s*:' % re.escape(key))
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def _where(source: str, text: str | None, key: str) -> str:
    line = _key_line(text, key)
    return f"{source}:{line}" if line else source


def _as_int(v, key):
    if isinstance(v, bool):
        raise ConfigError(f"{key} must be an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise ConfigError(f"{key} must be an integer, got {v!r}")
        v = int(v)
    if isinstance(v, str):
        try:
            v = int(v)
        except ValueError:
            try:
                x = float(v)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {v!r}") from None
            if not (math.isfinite(x) and x.is_integer()):
                raise ConfigError(f"{key} must be an integer, got {v!r}")
            v = int(x)
    if not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return v


def _as_float(v, key):
    if isinstance(v, bool):
        raise ConfigError(f"{key} must be a number")
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {v!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"{key} must be finite, got {v!r}")
    return x


def _as_list(v):
    if isinstance(v, str):
        return [p for p in v.replace(" ", "").split(",") if p]
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _validate(raw: dict, where) -> ExperimentConfig:
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{where('experiment')}: unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    merged = dict(DEFAULTS[exp])
    merged.update({k: v for k, v in raw.items() if v is not None})

    def check(key, fn):
        try:
            return fn(merged[key])
        except ConfigError as e:
            raise ConfigError(f"{where(key)}: {e}") from None

    def positive_int(key, minimum=1):
        def f(v):
            i = _as_int(v, key)
            if i < minimum:
                raise ConfigError(f"{key} must be >= {minimum}, got {i}")
            return i

        return f

    def betas(v):
        out = tuple(_as_float(x, "beta") for x in _as_list(v))
        if not out:
            raise ConfigError("beta must not be empty")
        if any(b <= 0 for b in out):
            raise ConfigError(f"beta must be > 0, got {v!r}")
        return out

    kw = {"experiment": exp}
    kw["beta"] = check("beta", betas)
    n_min = {"spacing": 4, "repulsion": 4, "n2-oracle": 2, "goe-crosscheck": 2, "eigvec-decay": 2, "lyapunov": 2}
    kw["n"] = check("n", positive_int("n", n_min.get(exp, 1)))
    kw["realizations"] = check("realizations", positive_int("realizations"))
    if "seed" in merged:
        kw["seed"] = check("seed", lambda v: _seed(_as_int(v, "seed")))
    if "lambda" in merged:
        kw["lam"] = check("lambda", lambda v: _as_float(v, "lambda"))
    if "bins" in merged:
        kw["bins"] = check("bins", positive_int("bins"))
    if "checkpoints" in merged:
        kw["checkpoints"] = check("checkpoints", _checkpoints)
    if "fit_window" in merged:
        kw["fit_window"] = check("fit_window", _window)
    if "central_fraction" in merged:
        kw["central_fraction"] = check("central_fraction", lambda v: _unit(v, "central_fraction", closed=True))
    if "quantile_cut" in merged:
        kw["quantile_cut"] = check("quantile_cut", lambda v: _unit(v, "quantile_cut", closed=False))
    for key in ("growth_n", "det_n", "workers"):
        if key in merged:
            kw[key] = check(key, positive_int(key, 2 if key != "workers" else 1))
    if "min_window_ratio" in merged:
        kw["min_window_ratio"] = check("min_window_ratio", _ratio)
    if "out" in merged:
        kw["out"] = str(merged["out"])
    return ExperimentConfig(**kw)


def _seed(i):
    if not 0 <= i < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {i}")
    return i


def _unit(v, key, closed):
    x = _as_float(v, key)
    ok = 0 < x <= 1 if closed else 0 < x < 1
    if not ok:
        raise ConfigError(f"{key} must lie in (0, 1{']' if closed else ')'}, got {x}")
    return x


def _ratio(v):
    x = _as_float(v, "min_window_ratio")
    if x <= 1:
        raise ConfigError(f"min_window_ratio must exceed 1, got {x}")
    return x


def _checkpoints(v):
    pts = tuple(_as_int(x, "checkpoints") for x in _as_list(v))
    if len(pts) < 3 or any(p < 1 for p in pts) or any(b <= a for a, b in zip(pts, pts[1:])):
        raise ConfigError("checkpoints must be >= 3 strictly increasing positive integers")
    if pts[-1] > 10**7:
        raise ConfigError("checkpoints must not exceed 10**7")
    return pts


def _window(v):
    w = _as_list(v)
    if len(w) != 2:
        raise ConfigError(f"fit_window needs exactly two entries, got {v!r}")
    lo, hi = (_as_int(x, "fit_window") for x in w)
    if not 1 <= lo < hi:
        raise ConfigError(f"fit_window must satisfy 1 <= lo < hi, got {v!r}")
    return lo, hi


def load_config_file(path) -> tuple[dict, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: malformed JSON ({e.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    unknown = sorted(set(data) - set(KEYS))
    if unknown:
        key = unknown[0]
        line = _key_line(text, key)
        raise ConfigError(f"{path}:{line or 1}: unknown config key {key!r}")
    for key, value in data.items():
        if isinstance(value, (dict,)):
            raise ConfigError(f"{path}:{_key_line(text, key) or 1}: {key} must be a flat value")
    return data, text


def parse_config(path=None, experiment=None, **flags) -> ExperimentConfig:
    """Merge a config file (if any) with flag values; flags win.

    Flag keyword names use the file's keys with ``lambda`` spelled ``lam``.
    """
    raw: dict = {}
    text = None
    source = "<flags>"
    if path is not None:
        raw, text = load_config_file(path)
        source = str(path)
    if "lam" in flags:
        flags["lambda"] = flags.pop("lam")
    unknown = sorted(set(flags) - set(KEYS))
    if unknown:
        raise ConfigError(f"<flags>: unknown option {unknown[0]!r}")
    file_keys = {k for k in raw}
    overrides = {k: v for k, v in flags.items() if v is not None}
    if experiment is not None:
        overrides["experiment"] = experiment
    raw.update(overrides)

    def where(key):
        if key in overrides or key not in file_keys:
            return "<flags>" if key in overrides else source
        return _where(source, text, key)

    return _validate(raw, where)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)
