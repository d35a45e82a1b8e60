"""Parse, validate, and serialize JSON model-specification documents.

The accepted document is a deliberately small, strict dialect: unknown keys
are rejected rather than ignored so that no model content is silently
dropped. Top-level layout::

    {
      "channels": [
        {"name": "...",
         "samples": [
           {"name": "...", "data": [<rates>],
            "modifiers": [{"name": "...", "type": "...", "data": null}]}
         ]}
      ],
      "observations": [{"name": "<channel>", "data": [<counts>]}],
      "aux": {"<parameter>": {"a": <x>, "sigma": <s>} | {"a": [<counts>]}}
    }

Modifier types: ``normfactor`` (free normalization), ``normsys_gauss``
(normalization constrained by one Gaussian auxiliary measurement), and
``shapesys_poisson`` (one multiplicative per-bin factor, each constrained by
a Poisson auxiliary count). ``normsys_gauss`` and ``shapesys_poisson``
factors multiply the sample by the parameter value itself; there is no
interpolation. All parsed objects are immutable and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import SchemaError, ValidationError


class ModifierKind(Enum):
    FREE_NORM = "normfactor"
    GAUSS_CONSTRAINED_NORM = "normsys_gauss"
    POISSON_CONSTRAINED_SHAPE = "shapesys_poisson"


@dataclass(frozen=True)
class GaussAux:
    """One Gaussian auxiliary measurement: observed value and its scale."""

    a: float
    sigma_aux: float


@dataclass(frozen=True)
class PoissonAux:
    """Per-bin Poisson auxiliary counts for a shape modifier."""

    counts: tuple[int, ...]


@dataclass(frozen=True)
class Modifier:
    kind: ModifierKind
    parameter: str
    aux: GaussAux | PoissonAux | None = None


@dataclass(frozen=True)
class Sample:
    name: str
    nominal: tuple[float, ...]
    modifiers: tuple[Modifier, ...] = ()


@dataclass(frozen=True)
class Channel:
    name: str
    samples: tuple[Sample, ...]
    n_bins: int


@dataclass(frozen=True)
class ModelSpec:
    """Channels plus the deterministic parameter ordering.

    ``parameter_order`` lists free parameters in declaration order followed
    by constrained parameters in declaration order; each per-bin factor of a
    ``shapesys_poisson`` modifier appears as its own entry ``name[b]``.
    """

    channels: tuple[Channel, ...]
    parameter_order: tuple[str, ...]


@dataclass(frozen=True)
class ObservationSet:
    main: dict[str, tuple[int, ...]]
    aux: dict[str, GaussAux | PoissonAux] = field(default_factory=dict)


@dataclass(frozen=True)
class ValidationFinding:
    severity: str
    path: str
    message: str


_MODIFIER_TYPES = {k.value: k for k in ModifierKind}
_CONSTRAINED = (ModifierKind.GAUSS_CONSTRAINED_NORM, ModifierKind.POISSON_CONSTRAINED_SHAPE)


def shape_parameter_names(base: str, n_bins: int) -> list[str]:
    """Expanded per-bin parameter names for a shape modifier."""
    return [f"{base}[{b}]" for b in range(n_bins)]


# ---------------------------------------------------------------------------
# schema walking


def _require_keys(obj, keys: dict, path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object, got {type(obj).__name__}")
    missing = [k for k, required in keys.items() if required and k not in obj]
    if missing:
        raise SchemaError(f"{path}: missing required key(s) {missing}")
    extra = [k for k in obj if k not in keys]
    if extra:
        raise SchemaError(f"{path}: unknown key(s) {extra}")


def _as_name(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{path}: expected a non-empty string")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer")
    return value


def _as_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected a list")
    return value


def _parse_modifier(obj, path: str) -> Modifier:
    _require_keys(obj, {"name": True, "type": True, "data": True}, path)
    name = _as_name(obj["name"], f"{path}/name")
    kind = _MODIFIER_TYPES.get(obj["type"])
    if kind is None:
        raise SchemaError(
            f"{path}/type: unknown modifier type {obj['type']!r}; "
            f"expected one of {sorted(_MODIFIER_TYPES)}")
    if obj["data"] is not None:
        raise SchemaError(
            f"{path}/data: must be null; auxiliary data lives in the top-level 'aux' map")
    return Modifier(kind=kind, parameter=name)


def _parse_aux_entry(obj, path: str) -> GaussAux | PoissonAux:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    if set(obj) == {"a", "sigma"}:
        return GaussAux(a=_as_number(obj["a"], f"{path}/a"),
                        sigma_aux=_as_number(obj["sigma"], f"{path}/sigma"))
    if set(obj) == {"a"}:
        counts = _as_list(obj["a"], f"{path}/a")
        return PoissonAux(counts=tuple(
            _as_int(c, f"{path}/a/{i}") for i, c in enumerate(counts)))
    raise SchemaError(
        f"{path}: expected keys {{a, sigma}} (Gaussian) or {{a}} (Poisson), got {sorted(obj)}")


def parse_workspace(text: str) -> tuple[ModelSpec, ObservationSet]:
    """Parse a JSON workspace document into a validated model and observations.

    Raises ``json.JSONDecodeError`` for malformed JSON, :class:`SchemaError`
    for structural problems (missing/extra keys, wrong types), and
    :class:`ValidationError` when a model invariant fails; the error message
    carries the JSON path of the offending element.
    """
    doc = json.loads(text)
    _require_keys(doc, {"channels": True, "observations": True, "aux": False}, "/")

    channels: list[Channel] = []
    for ci, ch in enumerate(_as_list(doc["channels"], "/channels")):
        cpath = f"/channels/{ci}"
        _require_keys(ch, {"name": True, "samples": True}, cpath)
        cname = _as_name(ch["name"], f"{cpath}/name")
        samples: list[Sample] = []
        for si, sm in enumerate(_as_list(ch["samples"], f"{cpath}/samples")):
            spath = f"{cpath}/samples/{si}"
            _require_keys(sm, {"name": True, "data": True, "modifiers": True}, spath)
            sname = _as_name(sm["name"], f"{spath}/name")
            data = _as_list(sm["data"], f"{spath}/data")
            nominal = tuple(_as_number(v, f"{spath}/data/{i}") for i, v in enumerate(data))
            modifiers = tuple(
                _parse_modifier(m, f"{spath}/modifiers/{mi}")
                for mi, m in enumerate(_as_list(sm["modifiers"], f"{spath}/modifiers")))
            samples.append(Sample(name=sname, nominal=nominal, modifiers=modifiers))
        if not samples:
            raise ValidationError([ValidationFinding(
                "error", f"{cpath}/samples", "channel has no samples")])
        channels.append(Channel(name=cname, samples=tuple(samples),
                                n_bins=len(samples[0].nominal)))

    aux_map: dict[str, GaussAux | PoissonAux] = {}
    for pname, entry in (doc.get("aux") or {}).items():
        aux_map[str(pname)] = _parse_aux_entry(entry, f"/aux/{pname}")

    main: dict[str, tuple[int, ...]] = {}
    for oi, ob in enumerate(_as_list(doc["observations"], "/observations")):
        opath = f"/observations/{oi}"
        _require_keys(ob, {"name": True, "data": True}, opath)
        oname = _as_name(ob["name"], f"{opath}/name")
        data = _as_list(ob["data"], f"{opath}/data")
        if oname in main:
            raise ValidationError([ValidationFinding(
                "error", opath, f"duplicate observations for channel '{oname}'")])
        main[oname] = tuple(_as_int(v, f"{opath}/data/{i}") for i, v in enumerate(data))

    spec = _attach_aux(ModelSpec(channels=tuple(channels), parameter_order=()), aux_map)
    spec = ModelSpec(channels=spec.channels, parameter_order=_parameter_order(spec))
    obs = ObservationSet(main=main, aux=dict(aux_map))

    findings = validate(spec, obs)
    if findings:
        raise ValidationError(findings)
    return spec, obs


def _attach_aux(spec: ModelSpec, aux_map) -> ModelSpec:
    channels = []
    for ch in spec.channels:
        samples = []
        for sm in ch.samples:
            mods = tuple(
                Modifier(m.kind, m.parameter, aux_map.get(m.parameter))
                if m.kind in _CONSTRAINED else m
                for m in sm.modifiers)
            samples.append(Sample(sm.name, sm.nominal, mods))
        channels.append(Channel(ch.name, tuple(samples), ch.n_bins))
    return ModelSpec(channels=tuple(channels), parameter_order=spec.parameter_order)


def _parameter_order(spec: ModelSpec) -> tuple[str, ...]:
    free: list[str] = []
    constrained: list[str] = []
    seen: set[str] = set()
    for ch in spec.channels:
        for sm in ch.samples:
            for m in sm.modifiers:
                if m.parameter in seen:
                    continue
                seen.add(m.parameter)
                if m.kind is ModifierKind.FREE_NORM:
                    free.append(m.parameter)
                elif m.kind is ModifierKind.GAUSS_CONSTRAINED_NORM:
                    constrained.append(m.parameter)
                else:
                    constrained.extend(shape_parameter_names(m.parameter, ch.n_bins))
    return tuple(free + constrained)


def iter_parameters(spec: ModelSpec):
    """Yield ``(expanded_name, kind, modifier, bin_index)`` in declaration order.

    For shape modifiers ``bin_index`` identifies which per-bin factor the
    entry refers to; otherwise it is ``None``.
    """
    seen: set[str] = set()
    free, constrained = [], []
    for ch in spec.channels:
        for sm in ch.samples:
            for m in sm.modifiers:
                if m.parameter in seen:
                    continue
                seen.add(m.parameter)
                if m.kind is ModifierKind.FREE_NORM:
                    free.append((m.parameter, m.kind, m, None))
                elif m.kind is ModifierKind.GAUSS_CONSTRAINED_NORM:
                    constrained.append((m.parameter, m.kind, m, None))
                else:
                    for b, name in enumerate(shape_parameter_names(m.parameter, ch.n_bins)):
                        constrained.append((name, m.kind, m, b))
    return free + constrained


# ---------------------------------------------------------------------------
# validation


def validate(spec: ModelSpec, obs: ObservationSet) -> list[ValidationFinding]:
    """Check every model invariant; an empty list means the model is sound."""
    findings: list[ValidationFinding] = []
    err = lambda path, msg: findings.append(ValidationFinding("error", path, msg))

    names = [ch.name for ch in spec.channels]
    if len(set(names)) != len(names):
        err("/channels", "channel names are not unique")

    param_kinds: dict[str, ModifierKind] = {}
    param_bins: dict[str, int] = {}
    for ci, ch in enumerate(spec.channels):
        cpath = f"/channels/{ci}"
        snames = [sm.name for sm in ch.samples]
        if len(set(snames)) != len(snames):
            err(f"{cpath}/samples", f"sample names are not unique in channel '{ch.name}'")
        if ch.n_bins < 1:
            err(cpath, f"channel '{ch.name}' must have at least one bin")
        for si, sm in enumerate(ch.samples):
            spath = f"{cpath}/samples/{si}"
            if len(sm.nominal) != ch.n_bins:
                err(f"{spath}/data",
                    f"sample '{sm.name}' has {len(sm.nominal)} bins, channel "
                    f"'{ch.name}' has {ch.n_bins}")
            for bi, v in enumerate(sm.nominal):
                if not (v >= 0.0 and math.isfinite(v)):
                    err(f"{spath}/data/{bi}", f"negative or non-finite nominal rate {v}")
            n_shape = sum(m.kind is ModifierKind.POISSON_CONSTRAINED_SHAPE
                          for m in sm.modifiers)
            if n_shape > 1:
                err(f"{spath}/modifiers",
                    f"sample '{sm.name}' has {n_shape} shape modifiers (at most one allowed)")
            mod_params = [m.parameter for m in sm.modifiers]
            if len(set(mod_params)) != len(mod_params):
                err(f"{spath}/modifiers",
                    f"sample '{sm.name}' references a parameter more than once")
            for mi, m in enumerate(sm.modifiers):
                mpath = f"{spath}/modifiers/{mi}"
                prev = param_kinds.setdefault(m.parameter, m.kind)
                if prev is not m.kind:
                    err(mpath, f"parameter '{m.parameter}' used with conflicting "
                               f"modifier types {prev.value!r} and {m.kind.value!r}")
                if m.kind is ModifierKind.POISSON_CONSTRAINED_SHAPE:
                    prev_bins = param_bins.setdefault(m.parameter, ch.n_bins)
                    if prev_bins != ch.n_bins:
                        err(mpath, f"shape parameter '{m.parameter}' spans channels "
                                   f"with different bin counts")
                findings.extend(_check_modifier_aux(m, ch, mpath))

    for ci, ch in enumerate(spec.channels):
        counts = obs.main.get(ch.name)
        if counts is None:
            err("/observations", f"no observations for channel '{ch.name}'")
            continue
        if len(counts) != ch.n_bins:
            err("/observations",
                f"channel '{ch.name}' has {ch.n_bins} bins but {len(counts)} observed counts")
        for bi, c in enumerate(counts):
            if c < 0:
                err(f"/observations/{ch.name}/data/{bi}", f"negative observed count {c}")
    for oname in obs.main:
        if oname not in names:
            err("/observations", f"observations for unknown channel '{oname}'")

    constrained = {m.parameter for ch in spec.channels for sm in ch.samples
                   for m in sm.modifiers if m.kind in _CONSTRAINED}
    for pname in obs.aux:
        if pname not in constrained:
            err(f"/aux/{pname}", f"auxiliary data for unknown constrained parameter '{pname}'")
    return findings


def _check_modifier_aux(m: Modifier, ch: Channel, mpath: str) -> list[ValidationFinding]:
    out: list[ValidationFinding] = []
    err = lambda path, msg: out.append(ValidationFinding("error", path, msg))
    if m.kind is ModifierKind.FREE_NORM:
        return out
    if m.aux is None:
        err(mpath, f"missing auxiliary data for constrained parameter '{m.parameter}'")
        return out
    if m.kind is ModifierKind.GAUSS_CONSTRAINED_NORM:
        if not isinstance(m.aux, GaussAux):
            err(mpath, f"parameter '{m.parameter}' needs Gaussian aux data {{a, sigma}}")
        elif not m.aux.sigma_aux > 0.0:
            err(f"/aux/{m.parameter}/sigma", f"sigma must be > 0, got {m.aux.sigma_aux}")
    else:
        if not isinstance(m.aux, PoissonAux):
            err(mpath, f"parameter '{m.parameter}' needs Poisson aux data {{a: [...]}}")
        else:
            if len(m.aux.counts) != ch.n_bins:
                err(f"/aux/{m.parameter}/a",
                    f"aux vector for '{m.parameter}' has {len(m.aux.counts)} entries, "
                    f"channel '{ch.name}' has {ch.n_bins} bins")
            for bi, c in enumerate(m.aux.counts):
                if c < 0:
                    err(f"/aux/{m.parameter}/a/{bi}", f"negative auxiliary count {c}")
    return out


# ---------------------------------------------------------------------------
# serialization


def serialize_workspace(spec: ModelSpec, obs: ObservationSet) -> str:
    """Inverse of :func:`parse_workspace`; parse(serialize(x)) == x."""
    doc = {
        "channels": [
            {"name": ch.name,
             "samples": [
                 {"name": sm.name,
                  "data": list(sm.nominal),
                  "modifiers": [
                      {"name": m.parameter, "type": m.kind.value, "data": None}
                      for m in sm.modifiers
                  ]}
                 for sm in ch.samples
             ]}
            for ch in spec.channels
        ],
        "observations": [
            {"name": ch.name, "data": list(obs.main[ch.name])} for ch in spec.channels
        ],
        "aux": {
            pname: ({"a": a.a, "sigma": a.sigma_aux} if isinstance(a, GaussAux)
                    else {"a": list(a.counts)})
            for pname, a in obs.aux.items()
        },
    }
    return json.dumps(doc, indent=2)
