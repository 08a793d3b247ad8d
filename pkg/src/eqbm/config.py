"""JSON experiment configuration and target ingestion.

Example::

    {
      "model": {"num_qubits": 1, "g_terms": ["Z"], "h_terms": []},
      "povm": {"type": "computational"},
      "target": {"table": {"0": 0.75, "1": 0.25}},
      "critic": {"type": "linear", "features": "one_hot", "lam": 0.0},
      "objective": {"divergence": "dv"},
      "mode": {"type": "exact"},
      "optimizer": {"algorithm": "gda", "eta_gamma": 0.02, "eta_w": 0.5, "iterations": 5000},
      "init": {"gamma": [0.0]},
      "master_seed": 0
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .critic import LinearCritic, MlpCritic, one_hot_features
from .model import Distribution, HamiltonianFamily, ModelError, Povm, computational_povm, validate_povm
from .objective import Objective, ObjectiveConfig
from .optimizers import ALGORITHMS, Schedule

SECTIONS = ("model", "povm", "target", "critic", "objective", "mode", "optimizer", "init", "master_seed")


class ConfigError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class TargetData:
    distribution: Distribution
    samples: np.ndarray | None = None

    @property
    def source(self) -> str:
        return "table" if self.samples is None else "samples"


def ingest_target(source, povm: Povm, base: Path | None = None) -> TargetData:
    """Table {label: prob} or a file of newline-delimited outcome labels."""
    keys = {str(lab): i for i, lab in enumerate(povm.labels)}
    if isinstance(source, dict) and "table" in source:
        table = source["table"]
        p = np.zeros(povm.size)
        for lab, val in table.items():
            if str(lab) not in keys:
                raise ConfigError([f"target label {lab!r} is not a POVM outcome"])
            p[keys[str(lab)]] = float(val)
        try:
            return TargetData(Distribution(p, povm.labels))
        except ModelError as exc:
            raise ConfigError([f"target table: {exc}"]) from None
    path = Path(source["samples"] if isinstance(source, dict) else source)
    if base is not None and not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigError([f"sample file {str(path)!r} does not exist"])
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError([f"sample file {str(path)!r} is empty"])
    bad = sorted({ln for ln in lines if ln not in keys})
    if bad:
        raise ConfigError([f"sample file has labels outside the POVM alphabet: {bad[:5]}"])
    idx = np.array([keys[ln] for ln in lines])
    freq = np.bincount(idx, minlength=povm.size) / idx.size
    return TargetData(Distribution(freq, povm.labels), idx)


def _complex_array(obj):
    if isinstance(obj, dict):
        return np.asarray(obj["real"], float) + 1j * np.asarray(obj.get("imag", 0.0), float)
    return np.asarray(obj, dtype=np.complex128)


@dataclass
class ExperimentConfig:
    model: dict
    povm: dict = field(default_factory=lambda: {"type": "computational"})
    target: dict = field(default_factory=dict)
    critic: dict = field(default_factory=lambda: {"type": "linear", "features": "one_hot"})
    objective: dict = field(default_factory=lambda: {"divergence": "dv"})
    mode: dict = field(default_factory=lambda: {"type": "exact"})
    optimizer: dict = field(default_factory=lambda: {"algorithm": "gda"})
    init: dict = field(default_factory=dict)
    master_seed: int = 0
    base_dir: Path | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(SECTIONS))
        problems = [f"unknown section {k!r}" for k in unknown]
        if "model" not in data:
            problems.append("missing section 'model'")
        if "target" not in data:
            problems.append("missing section 'target'")
        if problems:
            raise ConfigError(problems)
        cfg = cls(**{k: data[k] for k in SECTIONS if k in data})
        cfg.base_dir = Path(base_dir) if base_dir else None
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read {str(path)!r}: {exc}"]) from None
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "base_dir"}

    def build(self) -> "Experiment":
        """Validate everything and assemble the runtime objects."""
        problems = []

        def attempt(label, fn):
            try:
                return fn()
            except (ConfigError,) as exc:
                problems.extend(f"{label}: {p}" for p in exc.problems)
            except (ValueError, KeyError, TypeError) as exc:
                problems.append(f"{label}: {exc}")
            return None

        family = attempt("model", self._family)
        povm = attempt("povm", lambda: self._povm(family))
        target = attempt("target", lambda: ingest_target(self.target, povm, self.base_dir)) if povm else None
        critic = attempt("critic", lambda: self._critic(povm)) if povm else None
        schedule = attempt("optimizer", self._schedule)
        algorithm = self.optimizer.get("algorithm", "gda")
        if algorithm not in ALGORITHMS:
            problems.append(f"optimizer: unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}")
        seed = self.master_seed
        if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            problems.append(f"master_seed: must be an unsigned 64-bit integer, got {seed!r}")
        obj_cfg = None
        if povm is not None and target is not None:
            obj_cfg = attempt("objective", lambda: self._objective_cfg(target, povm))
        gamma0 = attempt("init", lambda: self._gamma0(family)) if family else None
        objective = None
        if not problems and family and critic is not None and obj_cfg is not None:
            objective = attempt("objective", lambda: Objective(obj_cfg, family, critic))
        if problems:
            raise ConfigError(problems)
        return Experiment(self, family, povm, target, critic, obj_cfg, objective, schedule, algorithm,
                          gamma0, critic.w.copy())

    # -- section parsers ---------------------------------------------------
    def _family(self) -> HamiltonianFamily:
        m = self.model
        fam = HamiltonianFamily.from_letters(list(m.get("g_terms", [])), list(m.get("h_terms", [])))
        n = m.get("num_qubits")
        if n is not None and n != fam.num_qubits:
            raise ConfigError([f"num_qubits is {n} but the Pauli terms act on {fam.num_qubits} qubits"])
        return fam

    def _povm(self, family) -> Povm:
        kind = self.povm.get("type", "computational")
        if kind == "computational":
            n = family.num_qubits if family else self.model.get("num_qubits")
            if n is None:
                raise ConfigError(["cannot infer the number of qubits"])
            return computational_povm(int(n))
        if kind == "explicit":
            povm = validate_povm(_complex_array(self.povm["effects"]), tuple(self.povm.get("labels", ())))
            if family and povm.dim != family.dim:
                raise ConfigError([f"effects are {povm.dim}-dimensional, model is {family.dim}-dimensional"])
            return povm
        raise ConfigError([f"unknown POVM type {kind!r}"])

    def _critic(self, povm):
        c = self.critic
        kind = c.get("type", "linear")
        size = povm.size
        if kind == "mlp":
            hidden = tuple(c.get("hidden", (16,)))
            critic = MlpCritic.default(size, hidden, seed=int(c.get("seed", 0)), scale=float(c.get("scale", 0.5)))
        elif kind == "linear":
            feats = c.get("features", "one_hot")
            feats = one_hot_features(size) if feats == "one_hot" else np.asarray(feats, float)
            if feats.shape[0] != size:
                raise ConfigError([f"feature map has {feats.shape[0]} rows, POVM has {size} outcomes"])
            critic = LinearCritic(feats, None, float(c.get("lam", 0.0)))
        else:
            raise ConfigError([f"unknown critic type {kind!r}"])
        w0 = self.init.get("w")
        return critic.with_params(w0) if w0 is not None else critic

    def _schedule(self) -> Schedule:
        keys = {f.name for f in fields(Schedule)}
        extra = sorted(set(self.optimizer) - keys - {"algorithm"})
        if extra:
            raise ConfigError([f"unknown schedule fields {extra}"])
        return Schedule(**{k: v for k, v in self.optimizer.items() if k in keys})

    def _objective_cfg(self, target: TargetData, povm) -> ObjectiveConfig:
        mode = self.mode.get("type", "exact")
        extra = {k: self.mode[k] for k in ("epsilon", "delta", "max_shots") if k in self.mode}
        return ObjectiveConfig(target.distribution, povm, self.objective.get("divergence", "dv"),
                               float(self.objective.get("alpha", 2.0)), mode,
                               seed=self.master_seed, target_source=target.source,
                               threads=int(self.mode.get("threads", 1)), **extra)

    def _gamma0(self, family) -> np.ndarray:
        g = self.init.get("gamma")
        g = np.zeros(family.M) if g is None else np.asarray(g, float)
        if g.shape != (family.M,):
            raise ConfigError([f"init gamma has {g.size} entries, family has {family.M} parameters"])
        return g


@dataclass
class Experiment:
    config: ExperimentConfig
    family: HamiltonianFamily
    povm: Povm
    target: TargetData
    critic: object
    objective_cfg: ObjectiveConfig
    objective: Objective
    schedule: Schedule
    algorithm: str
    gamma0: np.ndarray
    w0: np.ndarray
