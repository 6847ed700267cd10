"""Sectioned plain-text configuration.

Files look like::

    [fig1]
    k_list = 5, 20
    lr = 1e-3

Values stay strings until a typed getter asks for them; the checked-in
``defaults.cfg`` carries every experiment's paper-mode defaults, and a user
file merges on top of it key by key.
"""

import importlib.resources
from dataclasses import dataclass

__all__ = ["ExperimentConfig", "parse_config", "load_config",
           "default_config", "EXPERIMENT_IDS"]

EXPERIMENT_IDS = ("fig1", "fig2", "fig3", "ntk-regime", "thm3", "thm4-thm5")


def parse_config(text):
    """Parse sectioned ``key = value`` text into {section: {key: value}}.

    Blank lines and ``#`` comments are ignored; keys before any section
    header land in section ``""``.
    """
    sections = {}
    current = sections.setdefault("", {})
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1].strip(), {})
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        current[key.strip()] = value.strip()
    if not sections.get(""):
        sections.pop("", None)
    return sections


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def default_config():
    text = importlib.resources.files("ntklab").joinpath("defaults.cfg").read_text()
    return parse_config(text)


def _merge(base, override):
    merged = {s: dict(kv) for s, kv in base.items()}
    for section, kv in override.items():
        merged.setdefault(section, {}).update(kv)
    return merged


@dataclass
class ExperimentConfig:
    """Typed view over merged config sections for one experiment run."""

    experiment: str
    sections: dict
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    scale: float = 1.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {', '.join(EXPERIMENT_IDS)}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")

    @classmethod
    def build(cls, experiment, user_sections=None, seed=None, out=None,
              threads=None, scale=None):
        sections = _merge(default_config(), user_sections or {})
        common = sections.get("common", {})
        return cls(
            experiment=experiment,
            sections=sections,
            seed=int(common.get("seed", 0)) if seed is None else int(seed),
            out=common.get("out", "runs") if out is None else out,
            threads=int(common.get("threads", 1)) if threads is None else int(threads),
            scale=float(common.get("scale", 1.0)) if scale is None else float(scale),
        )

    # -- typed getters over this experiment's section ----------------------
    def _raw(self, key, default=None, section=None):
        sec = self.sections.get(section or self.experiment, {})
        if key in sec:
            return sec[key]
        if default is None:
            raise KeyError(f"missing config key {key!r} in section "
                           f"[{section or self.experiment}]")
        return default

    def get_str(self, key, default=None, section=None):
        return str(self._raw(key, default, section))

    def get_int(self, key, default=None, section=None):
        return int(float(self._raw(key, default, section)))

    def get_float(self, key, default=None, section=None):
        return float(self._raw(key, default, section))

    def get_int_list(self, key, default=None, section=None):
        raw = self._raw(key, default, section)
        if isinstance(raw, (list, tuple)):
            return [int(v) for v in raw]
        values = [int(float(v)) for v in str(raw).split(",") if v.strip()]
        if not values:
            raise ValueError(f"config list {key!r} must be nonempty")
        return values

    def get_str_list(self, key, default=None, section=None):
        raw = self._raw(key, default, section)
        if isinstance(raw, (list, tuple)):
            return [str(v) for v in raw]
        values = [v.strip() for v in str(raw).split(",") if v.strip()]
        if not values:
            raise ValueError(f"config list {key!r} must be nonempty")
        return values

    def get_batch(self, key="batch_size", default="full", section=None):
        raw = str(self._raw(key, default, section)).lower()
        return None if raw in ("full", "none") else int(raw)

    def scaled(self, value, minimum=1):
        """Shrink a sample count by the global --scale factor."""
        return max(minimum, int(round(value * self.scale)))

    def echo_lines(self):
        """Flattened config echo for manifests."""
        lines = [f"experiment = {self.experiment}", f"seed = {self.seed}",
                 f"scale = {self.scale}", f"threads = {self.threads}"]
        for section in sorted(self.sections):
            for key in sorted(self.sections[section]):
                lines.append(f"{section}.{key} = {self.sections[section][key]}")
        return lines
