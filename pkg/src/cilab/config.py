"""Run configuration: JSON-serializable, embedded in every output."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class RunConfig:
    flux: str = "example61"
    radius: float = 1.0
    nx: int = 512
    nt: int = 129
    t0: float = -3.0
    t1: float = 0.25
    pad_t: float = 0.05
    mode: str = "strict"
    eps_cond: float = 0.1
    eps_amp: float = 0.014
    r: float = 0.8
    c_q: float = 0.2
    beta_cut: float = 0.5
    gamma_cut: float = 0.55
    F0: float = 0.05
    K: int = 16
    lam0_k: int = 1
    lam1_k: int = 1600
    n_steps: int = 1
    phase: str = "zero"
    seed: int = 0
    outdir: str = "out"
    extras: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")
