"""Flat ``key = value`` run configuration with typed defaults and flag overrides."""

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from specmix.eea import ALGORITHMS
from specmix.errors import ConfigError
from specmix.neighborhood import NeighborhoodSpec
from specmix.objectives import LossWeights
from specmix.trainer import TrainConfig

_SECTION = "run"


def _eea_list(text):
    names = [t.strip().lower() for t in str(text).split(",") if t.strip()]
    if not names:
        raise ConfigError("eeas: at least one algorithm is required")
    for n in names:
        if n not in ALGORITHMS:
            raise ConfigError(f"eeas: unknown algorithm {n!r}; expected some of {','.join(ALGORITHMS)}")
    return tuple(names)


@dataclass(frozen=True)
class Key:
    default: object
    parse: object
    doc: str


REQUIRED = object()

KEYS = {
    "image": Key(REQUIRED, str, "HSIF cube to unmix"),
    "endmembers": Key(REQUIRED, int, "number of endmembers M"),
    "eeas": Key("vca,nfindr,atgp", _eea_list, "comma list of extraction algorithms feeding the ensembles"),
    "out": Key("run", str, "output directory"),
    "lr": Key(1e-4, float, "Adam learning rate"),
    "batch_size": Key(400, int, "pixels per batch"),
    "epochs_an": Key(50, int, "AN training epochs"),
    "epochs_stage1": Key(300, int, "AP+SP epochs with frozen SP projections"),
    "epochs_stage2": Key(100, int, "AP+SP epochs with the min-volume term; 0 skips the stage"),
    "weight_mse": Key(1.0, float, "reconstruction MSE weight"),
    "weight_sad": Key(1.125, float, "reconstruction spectral-angle weight"),
    "weight_nonneg": Key(1e-8, float, "negative-signature penalty weight"),
    "weight_minvol": Key(0.0025, float, "min-volume weight (stage 2 only)"),
    "nbhd_shape": Key("circle", str, "circle, doughnut or random_normal"),
    "nbhd_level": Key(2, int, "neighborhood radius in pixels"),
    "nbhd_seed": Key(0, int, "seed for random_normal offsets"),
    "heads_an": Key(0, int, "AN heads, 0 = largest divisor of L up to 4"),
    "heads_ap": Key(0, int, "AP heads, 0 = auto"),
    "heads_sp": Key(0, int, "SP heads after stage 1, 0 = auto"),
    "param_seed": Key(0, int, "parameter initialization seed"),
    "shuffle_seed": Key(1, int, "batch shuffling seed"),
    "eea_seed": Key(2, int, "seed for VCA and N-FINDR"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @classmethod
    def build(cls, file_values=None, overrides=None):
        """Merge defaults, file values and overrides (later wins) and validate."""
        raw = {}
        for source in (file_values or {}, overrides or {}):
            for k, v in source.items():
                if v is None:
                    continue
                k = k.replace("-", "_")
                if k not in KEYS:
                    raise ConfigError(f"unknown config key {k!r}")
                raw[k] = v
        values = {}
        for name, key in KEYS.items():
            if name not in raw:
                if key.default is REQUIRED:
                    raise ConfigError(f"missing required config key {name!r}")
                values[name] = key.parse(key.default)
                continue
            try:
                values[name] = key.parse(raw[name])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {name!r}: {raw[name]!r} ({exc})") from None
        cfg = cls(values)
        cfg.train_config()  # surfaces range errors early
        return cfg

    def train_config(self):
        v = self.values
        return TrainConfig(
            lr=v["lr"],
            batch_size=v["batch_size"],
            epochs_an=v["epochs_an"],
            epochs_stage1=v["epochs_stage1"],
            epochs_stage2=v["epochs_stage2"],
            weights=LossWeights(v["weight_mse"], v["weight_sad"], v["weight_nonneg"], v["weight_minvol"]),
            nbhd=NeighborhoodSpec(v["nbhd_shape"], v["nbhd_level"], v["nbhd_seed"]),
            heads_an=v["heads_an"] or None,
            heads_ap=v["heads_ap"] or None,
            heads_sp=v["heads_sp"] or None,
            param_seed=v["param_seed"],
            shuffle_seed=v["shuffle_seed"],
            eea_seed=v["eea_seed"],
        )

    def dumps(self):
        lines = []
        for name, key in KEYS.items():
            value = self.values[name]
            if isinstance(value, tuple):
                value = ",".join(value)
            lines.append(f"# {key.doc}\n{name} = {value}")
        return "\n".join(lines) + "\n"


def parse_text(text, origin="<config>"):
    """Parse flat ``key = value`` text (``#`` comments) into a raw dict."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=str(origin))
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc.message.splitlines()[0]}") from None
    return dict(parser[_SECTION])


def preset_names():
    return sorted(p.stem for p in resources.files("specmix.configs").iterdir() if p.name.endswith(".cfg"))


def read_config(path_or_preset):
    """Read a config file, or a bundled preset by bare name (``samson``, ``synthetic``...)."""
    path = Path(path_or_preset)
    if path.is_file():
        return parse_text(path.read_text(), path)
    if path.suffix == "" and str(path_or_preset) in preset_names():
        res = resources.files("specmix.configs") / f"{path_or_preset}.cfg"
        return parse_text(res.read_text(), res.name)
    raise ConfigError(f"config {str(path_or_preset)!r} not found")
