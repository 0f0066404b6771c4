"""Learnable few-step samplers for discrete diffusion on enumerable toys."""

import json
import os

from . import _core
from ._core import (
    ConfigError,
    DegenerateStepError,
    DivergenceError,
    DomainError,
    SchemaError,
    SingularStateError,
    check_countdown,
    countdown_support,
    gen_kl,
    gen_kl_scale_gradient,
    kernel_closed_form,
    kernel_generic,
    rate_matrix,
    tv_distance,
)

__all__ = [
    "ConfigError", "DegenerateStepError", "DivergenceError", "DomainError", "SchemaError",
    "SingularStateError", "Oracle", "check_countdown", "countdown_support", "gen_kl",
    "gen_kl_scale_gradient", "kernel_closed_form", "kernel_generic", "rate_matrix",
    "tv_distance", "oracle_from_config", "oracle_from_artifact", "train", "sample",
    "alignment_loss", "cli",
]

Oracle = _core.Oracle


def _text(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def oracle_from_config(config, base_dir="."):
    return Oracle._from_config(_text(config), os.fspath(base_dir))


def oracle_from_artifact(artifact):
    doc = json.loads(_text(artifact))
    return Oracle._from_problem(json.dumps(doc["problem"]))


def train(config, seed=None, threads=1, base_dir="."):
    """Returns {"lsd": artifact, "lsd+": artifact (method lsd+ only), "trace": csv}."""
    out = _core._train(_text(config), os.fspath(base_dir), seed, threads)
    return {k: (v if k == "trace" else json.loads(v)) for k, v in out.items()}


def sample(artifact, n, seed=None, threads=1):
    return _core._sample(_text(artifact), n, seed, threads)


def alignment_loss(artifact, teacher_steps=1024, n=256, seed=0, threads=1):
    return _core._alignment_loss(_text(artifact), teacher_steps, n, seed, threads)


def cli(command, *args, seed=None, threads=1):
    """Runs a CLI command in-process; returns (exit_code, stdout, stderr).

    cli("train", config) / cli("sample", artifact, n, out) / cli("sweep", config)
    / cli("verify", artifact)
    """
    paths = [os.fspath(a) if isinstance(a, os.PathLike) else a for a in args]
    if command == "train":
        return _core.cmd_train(paths[0], seed, threads)
    if command == "sample":
        return _core.cmd_sample(paths[0], int(paths[1]), paths[2], seed, threads)
    if command == "sweep":
        return _core.cmd_sweep(paths[0], seed, threads)
    if command == "verify":
        return _core.cmd_verify(paths[0])
    raise ValueError(f"unknown command {command!r}")
