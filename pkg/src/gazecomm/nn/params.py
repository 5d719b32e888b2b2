"""Named parameters, deterministic initialisation and JSON checkpoints."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(eq=False)
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    # "weight" gets fan-based uniform init, "bias" starts at zero
    role: str = "weight"

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


class ParameterStore:
    """Insertion-ordered collection of parameters with unique names."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, shape: tuple[int, ...], role: str = "weight") -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        param = Parameter(name, np.zeros(shape), role=role)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self:
            p.zero_grad()

    def copy_values(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for p in self:
            p.value = values[p.name].copy()

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "params": [
                {"name": p.name, "shape": list(p.value.shape), "values": p.value.ravel().tolist()}
                for p in self
            ],
        }

    def update_from_dict(self, payload: dict) -> None:
        """Overwrite values from a checkpoint payload; layout must match exactly."""
        if payload.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format_version {payload.get('format_version')!r} != {FORMAT_VERSION}"
            )
        entries = payload.get("params")
        if not isinstance(entries, list):
            raise CheckpointError("checkpoint has no parameter list")
        names = [e.get("name") for e in entries]
        if names != self.names():
            raise CheckpointError(f"parameter layout mismatch: checkpoint has {names}, model expects {self.names()}")
        for entry in entries:
            param = self._params[entry["name"]]
            shape = tuple(entry["shape"])
            if shape != param.value.shape:
                raise CheckpointError(f"{param.name}: checkpoint shape {shape} != model shape {param.value.shape}")
            values = np.asarray(entry["values"], dtype=np.float64)
            if values.size != param.value.size:
                raise CheckpointError(f"{param.name}: expected {param.value.size} values, got {values.size}")
            param.value = values.reshape(shape)
            param.zero_grad()
        self.seed = payload.get("seed", self.seed)


def init_params(store: ParameterStore, seed: int) -> ParameterStore:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    store.seed = seed
    for p in store:
        if p.role == "bias":
            p.value = np.zeros_like(p.value)
        else:
            fan_out, fan_in = p.value.shape[0], int(np.prod(p.value.shape[1:])) or 1
            a = np.sqrt(6.0 / (fan_in + fan_out))
            p.value = rng.uniform(-a, a, size=p.value.shape)
        p.zero_grad()
    return store


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_json(path: str | os.PathLike, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload) + "\n")


def load_json(path: str | os.PathLike) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupted checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict):
        raise CheckpointError(f"corrupted checkpoint {path}: top level is not an object")
    return payload
