"""Module vocabulary, type system, and mismatch-tolerant legality checks.

A registry fixes the ordered set of modules (name, per-slot accepted type
sets, output type), the known type names, and which types a program root
may produce as an answer.  Legality of a program is graded, not binary: we
count data-type mismatches between produced and accepted types and admit a
program when the count stays within a configurable tolerance.  Programs
with zero mismatches are executable; tolerated-but-mismatched ones may
still enter the search graph as connectivity bridges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Optional, Sequence

import yaml

from .programs import END_TOKEN, Program, UnknownModuleError

NONE_TYPE = "None"

_RESERVED_NAMES = {END_TOKEN, NONE_TYPE}


class RegistryError(ValueError):
    pass


class DuplicateNameError(RegistryError):
    pass


class UnknownTypeError(RegistryError):
    pass


class EmptyRegistryError(RegistryError):
    pass


@dataclass(frozen=True)
class ModuleSig:
    """A module's call signature: ordered accepted-type sets and one output."""

    name: str
    inputs: tuple[frozenset[str], ...]
    output: str

    @property
    def arity(self) -> int:
        return len(self.inputs)


@dataclass(frozen=True)
class ModuleRegistry:
    modules: tuple[ModuleSig, ...]
    types: frozenset[str]
    answer_types: frozenset[str]

    def __post_init__(self) -> None:
        if not self.modules:
            raise EmptyRegistryError("registry has no modules")
        seen: set[str] = set()
        for sig in self.modules:
            if sig.name in seen:
                raise DuplicateNameError(f"duplicate module name {sig.name!r}")
            if sig.name in _RESERVED_NAMES:
                raise DuplicateNameError(f"module name {sig.name!r} is reserved")
            seen.add(sig.name)
            for accepted in sig.inputs:
                for t in accepted:
                    if t not in self.types:
                        raise UnknownTypeError(f"module {sig.name!r} accepts unknown type {t!r}")
            if sig.output not in self.types:
                raise UnknownTypeError(f"module {sig.name!r} outputs unknown type {sig.output!r}")
        if NONE_TYPE not in self.types:
            raise UnknownTypeError(f"type set must contain {NONE_TYPE!r}")
        for t in self.answer_types:
            if t not in self.types:
                raise UnknownTypeError(f"unknown answer type {t!r}")
        # lookup tables live on the instance: hot paths must not rehash the registry
        object.__setattr__(self, "_sig_by_name", {sig.name: sig for sig in self.modules})
        object.__setattr__(self, "_arity_by_name", {sig.name: sig.arity for sig in self.modules})
        object.__setattr__(self, "_index_by_name", {sig.name: i for i, sig in enumerate(self.modules)})
        object.__setattr__(self, "_names", tuple(sig.name for sig in self.modules))

    @property
    def names(self) -> tuple[str, ...]:
        return self._names  # type: ignore[attr-defined]

    @property
    def vocab(self) -> tuple[str, ...]:
        """Decoder token universe: module names in registry order, then END."""
        return self.names + (END_TOKEN,)

    def sig_or_none(self, name: str) -> Optional[ModuleSig]:
        return self._sig_by_name.get(name)  # type: ignore[attr-defined]

    def sig(self, name: str) -> ModuleSig:
        found = self._sig_by_name.get(name)  # type: ignore[attr-defined]
        if found is None:
            raise UnknownModuleError(f"unknown module {name!r}")
        return found

    def arity(self, name: str) -> int:
        found = self._arity_by_name.get(name)  # type: ignore[attr-defined]
        if found is None:
            raise UnknownModuleError(f"unknown module {name!r}")
        return found

    def index_of(self, name: str) -> int:
        return self._index_by_name[name]  # type: ignore[attr-defined]

    def restrict(self, names: Sequence[str]) -> "ModuleRegistry":
        """Sub-registry keeping only `names`, in original document order."""
        keep = set(names)
        kept = tuple(sig for sig in self.modules if sig.name in keep)
        return ModuleRegistry(kept, self.types, self.answer_types)


# -- legality ------------------------------------------------------------------

@dataclass(frozen=True)
class LegalityReport:
    mismatch_count: int
    executable: bool
    within_tolerance: bool


DEFAULT_TOLERANCE = 1


def count_mismatches(
    program: Program, registry: ModuleRegistry, tolerance: int = DEFAULT_TOLERANCE
) -> LegalityReport:
    """Count (slot, child) type mismatches plus one for a non-answer root.

    An END leaf produces the None type; it mismatches any slot whose
    accepted set does not contain None.
    """
    tokens = program.tokens
    mismatches = 0
    # stack of accepted-type sets for slots still waiting to be filled
    pending: list[frozenset[str]] = []
    for i, tok in enumerate(tokens):
        sig = None if tok == END_TOKEN else registry.sig(tok)
        out_type = NONE_TYPE if sig is None else sig.output
        if i == 0:
            if out_type not in registry.answer_types:
                mismatches += 1
        else:
            accepted = pending.pop()
            if out_type not in accepted:
                mismatches += 1
        if sig is not None:
            for accepted in reversed(sig.inputs):
                pending.append(accepted)
    executable = mismatches == 0
    return LegalityReport(
        mismatch_count=mismatches,
        executable=executable,
        within_tolerance=mismatches <= tolerance,
    )


def legality_check(program: Program, registry: ModuleRegistry, tolerance: int) -> bool:
    """True iff the program's mismatch count does not exceed `tolerance`."""
    return count_mismatches(program, registry, tolerance).within_tolerance


# -- registry documents ----------------------------------------------------------

def registry_from_document(doc: Mapping) -> ModuleRegistry:
    """Build a registry from a structured document.

    Expected shape::

        types: [ObjectSet, Integer, ...]      # None is implied
        answer_types: [Integer, Boolean]
        modules:
          - {name: scene, inputs: [], output: ObjectSet}
          - {name: count, inputs: [[ObjectSet]], output: Integer}
    """
    try:
        type_names = list(doc["types"])
        answer = list(doc["answer_types"])
        entries = list(doc["modules"])
    except (KeyError, TypeError) as exc:
        raise RegistryError(f"malformed registry document: {exc}") from exc
    types = frozenset(type_names) | {NONE_TYPE}
    modules = []
    for entry in entries:
        try:
            name = entry["name"]
            inputs = tuple(frozenset(slot) for slot in entry.get("inputs", []))
            output = entry["output"]
        except (KeyError, TypeError) as exc:
            raise RegistryError(f"malformed module entry {entry!r}: {exc}") from exc
        modules.append(ModuleSig(name=name, inputs=inputs, output=output))
    return ModuleRegistry(tuple(modules), types, frozenset(answer))


def load_registry(source) -> ModuleRegistry:
    """Load a registry from a built-in name, a YAML/JSON path, or a dict."""
    if isinstance(source, Mapping):
        return registry_from_document(source)
    if isinstance(source, str) and not source.endswith((".yaml", ".yml", ".json")):
        from .microworld import builtin_registry_document  # deferred: avoids import cycle

        doc = builtin_registry_document(source)
        if doc is not None:
            return registry_from_document(doc)
        candidate = Path(source)
        if not candidate.exists():
            raise RegistryError(f"unknown registry {source!r} (not a built-in name or file)")
        source = candidate
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RegistryError(f"cannot read registry file {path}: {exc}") from exc
    if path.suffix == ".json":
        doc = json.loads(text)
    else:
        doc = yaml.safe_load(text)
    if not isinstance(doc, Mapping):
        raise RegistryError(f"registry file {path} does not contain a mapping")
    return registry_from_document(doc)


# -- typed random programs ----------------------------------------------------------

@lru_cache(maxsize=None)
def _min_depth_tables(registry: ModuleRegistry) -> tuple[dict[str, int], dict[str, int]]:
    """Minimal tree depth needed to produce each type / to apply each module."""
    inf = 10 ** 9
    type_depth: dict[str, int] = {t: inf for t in registry.types}
    type_depth[NONE_TYPE] = 1  # an END leaf
    mod_depth: dict[str, int] = {sig.name: inf for sig in registry.modules}
    changed = True
    while changed:
        changed = False
        for sig in registry.modules:
            worst = 0
            for accepted in sig.inputs:
                best = min((type_depth[t] for t in accepted), default=inf)
                worst = max(worst, best)
            cand = 1 + worst if worst < inf else inf
            if cand < mod_depth[sig.name]:
                mod_depth[sig.name] = cand
                changed = True
            if cand < type_depth[sig.output]:
                type_depth[sig.output] = cand
                changed = True
    return type_depth, mod_depth


class NoExecutableProgramError(RegistryError):
    pass


def typed_random_program(
    registry: ModuleRegistry,
    rng,
    max_depth: int = 6,
    stop_prob: float = 0.45,
) -> Program:
    """Random executable program: zero type mismatches, answer-typed root.

    Slots are filled by modules whose output type is accepted and whose
    minimal completion depth fits the remaining budget; with probability
    `stop_prob` the choice is restricted to minimal-depth fillers, which
    biases the size distribution toward short programs.
    """
    _, table = _min_depth_tables(registry)
    mod_depth = dict(table)
    mod_depth[END_TOKEN] = 1
    out: list[str] = []

    def choose(candidates: list[str], depth_left: int) -> str:
        viable = [name for name in candidates if mod_depth[name] <= depth_left]
        if not viable:
            raise NoExecutableProgramError("no module fits the remaining depth budget")
        if rng.random() < stop_prob:
            best = min(mod_depth[name] for name in viable)
            viable = [name for name in viable if mod_depth[name] == best]
        return viable[rng.randrange(len(viable))]

    def fill(accepted: frozenset[str], depth_left: int) -> None:
        candidates = [sig.name for sig in registry.modules if sig.output in accepted]
        if NONE_TYPE in accepted:
            candidates.append(END_TOKEN)
        name = choose(candidates, depth_left)
        out.append(name)
        if name != END_TOKEN:
            for slot in registry.sig(name).inputs:
                fill(slot, depth_left - 1)

    roots = [sig.name for sig in registry.modules if sig.output in registry.answer_types]
    if not roots:
        raise NoExecutableProgramError("no module produces an answer type")
    name = choose(roots, max_depth)
    out.append(name)
    for slot in registry.sig(name).inputs:
        fill(slot, max_depth - 1)
    return Program(tuple(out))
