"""Experiment configuration: a schema-versioned JSON key-value file.

A config describes one data distribution (marginal plus planted label
model), the learners to train, the evaluation pairs, the bound checks to
run, and the seeds.  An optional ``instances`` list sweeps corruption
settings on top of the base label model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import fenchel, learners, synth
from .errors import ConfigError, InvalidInputError

SCHEMA_VERSION = 1

KNOWN_ALGORITHMS = ("omnipredictor", "glmtron", "isotron", "logistic",
                    "matching_gd")
KNOWN_CHECKS = ("sim_sqrt", "bilipschitz", "general", "logistic_squared",
                "logistic_absolute", "pconcept")


@dataclass
class ExperimentConfig:
    marginal: synth.MarginalSpec
    label_model: synth.LabelModel
    n_train: int
    n_eval: int
    learners: list
    pairs: list = field(default_factory=list)
    checks: list = field(default_factory=lambda: ["sim_sqrt"])
    eps: float = 0.05
    seeds: list = field(default_factory=lambda: [0])
    instances: list = field(default_factory=list)   # (name, corruption) pairs

    def instance_models(self):
        """The label-model sweep: the base model under each instance name."""
        if not self.instances:
            return [("base", self.label_model)]
        out = []
        for name, corruption in self.instances:
            out.append((name, synth.LabelModel(
                self.label_model.planted_w, self.label_model.activation_tag,
                corruption=corruption, label_space=self.label_model.label_space,
                clip=self.label_model.clip)))
        return out


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return mapping[key]


def _marginal_from(obj):
    kind = _require(obj, "kind", "marginal")
    try:
        return synth.MarginalSpec(
            kind=kind, dim=int(_require(obj, "dim", "marginal")),
            scale=float(obj.get("scale", 1.0)), dof=int(obj.get("dof", 5)),
            augment_constant=bool(obj.get("augment_constant", False)))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad marginal spec: {exc}") from exc


def _corruption_from(obj):
    if obj is None:
        return synth.Corruption()
    return synth.Corruption(
        kind=obj.get("kind", "none"), mass=float(obj.get("mass", 0.0)),
        level=float(obj.get("level", 0.0)), value=float(obj.get("value", 0.0)))


def _label_model_from(obj, total_dim):
    tag = _require(obj, "activation", "label_model")
    try:
        fenchel.activation_from_tag(tag)
    except InvalidInputError as exc:
        raise ConfigError(f"unknown activation tag {tag!r}") from exc
    if "planted_w" in obj:
        w = np.asarray(obj["planted_w"], dtype=float)
        if w.size != total_dim:
            raise ConfigError(
                f"planted_w has dimension {w.size}, expected {total_dim}")
    else:
        norm = float(_require(obj, "norm", "label_model"))
        w = synth.planted_direction(
            total_dim, norm, int(obj.get("direction_seed", 0)),
            constant_weight=obj.get("constant_weight"))
    return synth.LabelModel(
        planted_w=tuple(float(v) for v in w),
        activation_tag=tag,
        corruption=_corruption_from(obj.get("corruption")),
        label_space=obj.get("label_space", "interval"),
        clip=bool(obj.get("clip", True)))


def _learner_entry(obj, idx):
    algo = _require(obj, "algorithm", f"learners[{idx}]")
    if algo not in KNOWN_ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    entry = dict(obj)
    entry.setdefault("name", algo)
    if algo in ("glmtron", "matching_gd"):
        tag = _require(obj, "activation", f"learners[{idx}]")
        try:
            fenchel.activation_from_tag(tag)
        except InvalidInputError as exc:
            raise ConfigError(f"unknown activation tag {tag!r}") from exc
    _require(obj, "norm_bound", f"learners[{idx}]")
    return entry


def parse_config(obj):
    """Validate a parsed JSON object into an ExperimentConfig."""
    if not isinstance(obj, dict):
        raise ConfigError("config root must be an object")
    version = _require(obj, "schema_version", "config")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    data = _require(obj, "data", "config")
    marginal = _marginal_from(_require(data, "marginal", "data"))
    label_model = _label_model_from(_require(data, "label_model", "data"),
                                    marginal.total_dim)
    learner_objs = _require(obj, "learners", "config")
    if not isinstance(learner_objs, list):
        raise ConfigError("learners must be a list")
    entries = [_learner_entry(o, i) for i, o in enumerate(learner_objs)]
    pairs = obj.get("pairs", [])
    for tag in pairs:
        try:
            fenchel.activation_from_tag(tag)
        except InvalidInputError as exc:
            raise ConfigError(f"unknown activation tag {tag!r}") from exc
    checks = obj.get("checks", ["sim_sqrt"])
    for chk in checks:
        if chk.split(":", 1)[0] not in KNOWN_CHECKS:
            raise ConfigError(f"unknown check {chk!r}")
    seeds = obj.get("seeds", [0])
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    instances = []
    for inst in obj.get("instances", []):
        name = _require(inst, "name", "instances[]")
        instances.append((name, _corruption_from(inst.get("corruption"))))
    return ExperimentConfig(
        marginal=marginal, label_model=label_model,
        n_train=int(data.get("n_train", 20000)),
        n_eval=int(data.get("n_eval", 50000)),
        learners=entries, pairs=list(pairs), checks=list(checks),
        eps=float(obj.get("eps", 0.05)), seeds=[int(s) for s in seeds],
        instances=instances)


def load_config(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(obj)


def train_learner(entry, dataset, seed):
    """Run the configured algorithm on a dataset; returns the predictor."""
    algo = entry["algorithm"]
    B = float(entry["norm_bound"])
    if algo == "omnipredictor":
        cfg = learners.OmniConfig(
            eps_ma=float(entry.get("eps_ma", 0.02)),
            eps_cal=float(entry.get("eps_cal", 0.02)),
            eps_weak=entry.get("eps_weak"),
            step=entry.get("step"),
            bucket_width=float(entry.get("bucket_width",
                                         learners.DEFAULT_BUCKET_WIDTH)),
            round_cap=int(entry.get("round_cap", learners.DEFAULT_ROUND_CAP)),
            bernoulli_reduction=bool(entry.get("bernoulli_reduction", False)))
        return learners.train_omnipredictor(dataset, B, cfg, seed=seed)
    if algo == "glmtron":
        return learners.train_glmtron(dataset, entry["activation"], B,
                                      iters=int(entry.get("iters", 500)),
                                      tol=float(entry.get("tol", 1e-8)))
    if algo == "isotron":
        return learners.train_isotron(dataset, B,
                                      iters=int(entry.get("iters", 50)))
    if algo == "logistic":
        return learners.train_logistic(dataset, B,
                                       step=float(entry.get("step", 1.0)),
                                       iters=int(entry.get("iters", 300)),
                                       tol=float(entry.get("tol", 1e-10)))
    if algo == "matching_gd":
        pair = fenchel.pair_from_tag(entry["activation"])
        return learners.train_matching_gd(dataset, pair, B,
                                          step=float(entry.get("step", 1.0)),
                                          iters=int(entry.get("iters", 300)),
                                          tol=float(entry.get("tol", 1e-10)))
    raise ConfigError(f"unknown algorithm {algo!r}")
