"""Run configuration: YAML on disk, one resolved dict in memory.

The resolved configuration is the built-in defaults overlaid with the
user's file (unknown keys are rejected with their full path, so typos
fail loudly) and any CLI overrides. Its canonical JSON form is hashed
(sha256, first 16 hex digits) and that hash is stamped into every
output file, tying artifacts to the exact configuration that made them.

A top-level `seed` (file key or --seed flag) rederives every component
seed from one master value via the same splitmix64 derivation the rest
of the package uses: noise 1, validation profile 2, weight init 3,
shuffle 4, training profiles 10, 11, ... Component seeds set explicitly
alongside `seed: null` are used as-is.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import yaml

from . import ecm, losses, network, rng, training
from .errors import ConfigError

LOSS_KINDS = ("integration", "standard")

DEFAULTS: dict = {
    "seed": None,
    "cell": {
        "r0": 0.06,  # series resistance [ohm]
        "r1": 0.03,  # RC-branch resistance [ohm]
        "c": 1000.0,  # RC-branch capacitance [F]
        "q": 2.0,  # capacity [Ah]
        "ocv_file": None,  # CSV of 8 polynomial coefficients; null = built-in
        "soc0": 0.8,  # initial state of charge [-]
        "vc0": 0.0,  # initial capacitor voltage [V]
    },
    "data": {
        "dt": 1.0,  # sample time [s]
        "duration_s": 3600.0,  # synthetic cycle length [s]
        "mean_segment_s": 10.0,  # mean constant-current segment [s]
        "max_c_rate": 2.0,  # segment amplitude bound [C]
        "soc_drop": 0.6,  # net SoC drop per synthetic cycle [-]
        "noise_sigma_v": 0.0,  # gaussian voltage noise stddev [V]
        "noise_seed": 701,
        "train_seeds": [101, 102],  # one synthetic training cycle per seed
        "valid_seed": 201,
        "train_files": None,  # list of trace CSVs; overrides train_seeds
        "valid_file": None,  # trace CSV with hidden states; overrides valid_seed
    },
    "network": {
        "hidden": 20,  # recurrent units
        "fc": 200,  # fully connected units
        "init_seed": 301,
        "i_scale": 4.0,  # current normalization divisor [A]
        "v_low": 2.5,  # voltage normalization window [V]
        "v_high": 4.2,
    },
    "loss": {
        "kind": "integration",  # integration | standard
        "rollout": 30,  # integration steps per window
        "w_out": [1.0],  # output-residual weights
        "w_state": [1.0, 1.0],  # dynamics-residual weights (standard only)
    },
    "training": {
        "epochs": 20000,
        "minibatch": 1770,
        "lr": 0.001,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1.0e-8,
        "window": 30,  # input window length l (l+1 samples)
        "shuffle_seed": 401,
        "checkpoint_every": 0,  # epochs between checkpoints; 0 = final only
        "init_percent": 150.0,  # parameter-guess scale, % of truth
        "bound_lo_percent": 50.0,  # search box on r1 and c, % of truth
        "bound_hi_percent": 200.0,
    },
}


@dataclass(frozen=True)
class ResolvedConfig:
    raw: dict
    hash: str

    def __getitem__(self, key):
        return self.raw[key]


def _merge(base: dict, user: dict, path: str = ""):
    for key, val in user.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            kind = "section" if isinstance(val, dict) else "key"
            raise ConfigError(f"unknown config {kind}: {where}")
        if isinstance(base[key], dict):
            if val is None:
                continue
            if not isinstance(val, dict):
                raise ConfigError(f"config section {where} must be a mapping")
            _merge(base[key], val, where)
        else:
            base[key] = val


def _require_number(cfg, section, key, *, low=None, high=None, integer=False):
    val = cfg[section][key]
    ok = isinstance(val, (int, float)) and not isinstance(val, bool)
    if ok and integer:
        ok = float(val).is_integer()
    if not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{section}.{key} must be {kind}, got {val!r}")
    if low is not None and not val >= low:
        raise ConfigError(f"{section}.{key} must be >= {low}, got {val}")
    if high is not None and not val <= high:
        raise ConfigError(f"{section}.{key} must be <= {high}, got {val}")
    if integer:
        cfg[section][key] = int(val)


def _validate(cfg: dict):
    for key in ("r0", "r1", "c", "q"):
        _require_number(cfg, "cell", key, low=1e-12)
    _require_number(cfg, "cell", "soc0", low=0.0, high=1.0)
    _require_number(cfg, "cell", "vc0")
    _require_number(cfg, "data", "dt", low=1e-9)
    _require_number(cfg, "data", "duration_s", low=1.0)
    _require_number(cfg, "data", "mean_segment_s", low=1e-9)
    _require_number(cfg, "data", "max_c_rate", low=1e-9)
    _require_number(cfg, "data", "soc_drop", low=0.0, high=1.0)
    _require_number(cfg, "data", "noise_sigma_v", low=0.0)
    _require_number(cfg, "data", "noise_seed", integer=True)
    _require_number(cfg, "data", "valid_seed", integer=True)
    _require_number(cfg, "network", "hidden", low=1, integer=True)
    _require_number(cfg, "network", "fc", low=1, integer=True)
    _require_number(cfg, "network", "init_seed", integer=True)
    _require_number(cfg, "network", "i_scale", low=1e-12)
    _require_number(cfg, "network", "v_low")
    _require_number(cfg, "network", "v_high")
    if not cfg["network"]["v_high"] > cfg["network"]["v_low"]:
        raise ConfigError("network.v_high must be > network.v_low")
    _require_number(cfg, "loss", "rollout", low=1, integer=True)
    _require_number(cfg, "training", "epochs", low=0, integer=True)
    _require_number(cfg, "training", "minibatch", low=1, integer=True)
    _require_number(cfg, "training", "lr", low=1e-15)
    _require_number(cfg, "training", "beta1", low=0.0)
    _require_number(cfg, "training", "beta2", low=0.0)
    for key in ("beta1", "beta2"):
        if not cfg["training"][key] < 1.0:
            raise ConfigError(f"training.{key} must be < 1")
    _require_number(cfg, "training", "eps", low=0.0)
    _require_number(cfg, "training", "window", low=1, integer=True)
    _require_number(cfg, "training", "shuffle_seed", integer=True)
    _require_number(cfg, "training", "checkpoint_every", low=0, integer=True)
    _require_number(cfg, "training", "init_percent", low=1e-9)
    _require_number(cfg, "training", "bound_lo_percent", low=1e-9, high=100.0)
    _require_number(cfg, "training", "bound_hi_percent", low=100.0)

    if cfg["loss"]["kind"] not in LOSS_KINDS:
        raise ConfigError(
            f"loss.kind must be one of {LOSS_KINDS}, got {cfg['loss']['kind']!r}"
        )
    for key in ("w_out", "w_state"):
        val = cfg["loss"][key]
        if not isinstance(val, list) or not all(
            isinstance(w, (int, float)) and not isinstance(w, bool) and w >= 0
            for w in val
        ):
            raise ConfigError(f"loss.{key} must be a list of weights >= 0")

    seeds = cfg["data"]["train_seeds"]
    if not isinstance(seeds, list) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigError("data.train_seeds must be a list of integers")
    files = cfg["data"]["train_files"]
    if files is not None and (
        not isinstance(files, list) or not all(isinstance(f, str) for f in files)
    ):
        raise ConfigError("data.train_files must be a list of paths or null")
    if files is not None and not files:
        raise ConfigError("data.train_files must not be an empty list")
    if not seeds and files is None:
        raise ConfigError("data.train_seeds must not be empty when no files are given")
    vf = cfg["data"]["valid_file"]
    if vf is not None and not isinstance(vf, str):
        raise ConfigError("data.valid_file must be a path or null")
    of = cfg["cell"]["ocv_file"]
    if of is not None and not isinstance(of, str):
        raise ConfigError("cell.ocv_file must be a path or null")
    if cfg["seed"] is not None and (
        not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool)
    ):
        raise ConfigError("seed must be an integer or null")


def _apply_master_seed(cfg: dict):
    s = cfg["seed"]
    if s is None:
        return
    cfg["data"]["noise_seed"] = int(rng.derive(s, 1))
    cfg["data"]["valid_seed"] = int(rng.derive(s, 2))
    cfg["network"]["init_seed"] = int(rng.derive(s, 3))
    cfg["training"]["shuffle_seed"] = int(rng.derive(s, 4))
    cfg["data"]["train_seeds"] = [
        int(rng.derive(s, 10 + k)) for k in range(len(cfg["data"]["train_seeds"]))
    ]


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_config(path=None, *, seed=None, epochs=None) -> ResolvedConfig:
    """Defaults <- file <- CLI overrides, validated and hashed."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if user is None:
            user = {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = seed
    if epochs is not None:
        cfg["training"]["epochs"] = epochs
    _validate(cfg)
    _apply_master_seed(cfg)
    return ResolvedConfig(raw=cfg, hash=config_hash(cfg))


# -- typed views of a resolved config ---------------------------------------

def cell_params(cfg: ResolvedConfig) -> ecm.EcmParams:
    c = cfg["cell"]
    return ecm.EcmParams(r0=float(c["r0"]), r1=float(c["r1"]), c=float(c["c"]),
                         q=float(c["q"]))


def ocv_coeffs(cfg: ResolvedConfig):
    path = cfg["cell"]["ocv_file"]
    if path is None:
        return ecm.OCV_COEFFS_DEFAULT
    return ecm.load_ocv_coeffs(path)


def norm_spec(cfg: ResolvedConfig) -> network.NormSpec:
    n = cfg["network"]
    return network.NormSpec(
        i_scale=float(n["i_scale"]), v_low=float(n["v_low"]), v_high=float(n["v_high"])
    )


def loss_config(cfg: ResolvedConfig) -> losses.LossConfig:
    lo = cfg["loss"]
    return losses.LossConfig(
        rollout=int(lo["rollout"]),
        w_out=tuple(float(w) for w in lo["w_out"]),
        w_state=tuple(float(w) for w in lo["w_state"]),
    )


def initial_guess(cfg: ResolvedConfig) -> ecm.EcmParams:
    """The (deliberately wrong) identification starting point: r0, r1, c
    scaled to init_percent of the configured truth; capacity is known."""
    p = cell_params(cfg)
    f = float(cfg["training"]["init_percent"]) / 100.0
    return ecm.EcmParams(r0=p.r0 * f, r1=p.r1 * f, c=p.c * f, q=p.q)


def lambda_bounds(cfg: ResolvedConfig) -> losses.LambdaBounds:
    t = cfg["training"]
    return losses.bounds_from_params(
        cell_params(cfg),
        lo_frac=float(t["bound_lo_percent"]) / 100.0,
        hi_frac=float(t["bound_hi_percent"]) / 100.0,
    )


def train_config(cfg: ResolvedConfig) -> training.TrainConfig:
    t = cfg["training"]
    return training.TrainConfig(
        epochs=int(t["epochs"]),
        lam_init=ecm.lambda_from_params(initial_guess(cfg)),
        minibatch=int(t["minibatch"]),
        lr=float(t["lr"]),
        beta1=float(t["beta1"]),
        beta2=float(t["beta2"]),
        eps=float(t["eps"]),
        window=int(t["window"]),
        init_seed=int(cfg["network"]["init_seed"]),
        shuffle_seed=int(t["shuffle_seed"]),
        checkpoint_every=int(t["checkpoint_every"]),
        bounds=lambda_bounds(cfg),
    )
