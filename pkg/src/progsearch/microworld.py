"""Deterministic object-scene execution backend and dataset generator.

Scenes are small sets of attributed objects on a 16x16 grid.  Module
semantics are fixed discrete calculations (filters, counters, spatial
relations, attribute queries, integer and boolean combinators).  A
generated question pairs a random executable program with sampled scenes
and the answers obtained by running that program, plus a synthetic
question rendered inner-to-outer from per-module phrase templates so that
question words correlate with the modules used.

Execution is total over executable programs: a partial operation (e.g.
`unique` on a non-singleton set) yields a distinguished Abort value that
never equals any stored answer, so a misbehaving program simply scores
zero on that scene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional

from .programs import END_TOKEN, Program, from_sequence
from .registry import (
    NONE_TYPE,
    ModuleRegistry,
    count_mismatches,
    registry_from_document,
    typed_random_program,
)

COLORS = ("blue", "brown", "cyan", "gray", "green", "purple", "red", "yellow")
SHAPES = ("cube", "cylinder", "sphere")
SIZES = ("large", "small")
GRID = 16
MAX_OBJECTS = 10


class NotExecutableError(ValueError):
    pass


class GenerationExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneObject:
    id: int
    color: str
    shape: str
    size: str
    x: int
    y: int


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]


@dataclass(frozen=True)
class Value:
    """Tagged runtime value; tags keep e.g. Integer 1 distinct from Boolean True."""

    kind: str
    payload: object = None

    @staticmethod
    def object_set(ids) -> "Value":
        return Value("set", frozenset(ids))

    @staticmethod
    def single(obj_id: int) -> "Value":
        return Value("object", obj_id)

    @staticmethod
    def integer(n: int) -> "Value":
        return Value("int", n)

    @staticmethod
    def boolean(b: bool) -> "Value":
        return Value("bool", bool(b))

    @staticmethod
    def attribute(name: str) -> "Value":
        return Value("attr", name)


NONE_VALUE = Value("none")
ABORT = Value("abort")

# Value tag -> registry type name (variant/type correspondence)
VALUE_KIND_TO_TYPE = {
    "set": "ObjectSet",
    "object": "SingleObject",
    "int": "Integer",
    "bool": "Boolean",
    "attr": "Attribute",
    "none": "None",
}


def value_to_text(value: Value) -> str:
    if value.kind == "set":
        return "set:" + ",".join(str(i) for i in sorted(value.payload))
    if value.kind == "object":
        return f"obj:{value.payload}"
    if value.kind == "int":
        return f"int:{value.payload}"
    if value.kind == "bool":
        return "bool:true" if value.payload else "bool:false"
    if value.kind == "attr":
        return f"attr:{value.payload}"
    if value.kind == "none":
        return "none"
    raise ValueError(f"unserializable value kind {value.kind!r}")


def value_from_text(text: str) -> Value:
    if text == "none":
        return NONE_VALUE
    kind, _, body = text.partition(":")
    if kind == "set":
        ids = frozenset(int(s) for s in body.split(",") if s != "")
        return Value("set", ids)
    if kind == "obj":
        return Value("object", int(body))
    if kind == "int":
        return Value("int", int(body))
    if kind == "bool":
        return Value("bool", body == "true")
    if kind == "attr":
        return Value("attr", body)
    raise ValueError(f"unparsable value text {text!r}")


@dataclass(frozen=True)
class QuestionTriplet:
    qid: int
    question: tuple[str, ...]
    scenes: tuple[Scene, ...]
    answers: tuple[Value, ...]
    gt_program: Optional[Program] = None


# -- module semantics -------------------------------------------------------------

def _objects(scene: Scene, ids) -> list[SceneObject]:
    by_id = {o.id: o for o in scene.objects}
    return [by_id[i] for i in ids]


def _one(scene: Scene, obj_id: int) -> SceneObject:
    for o in scene.objects:
        if o.id == obj_id:
            return o
    raise KeyError(obj_id)


def _filter(attr: str, wanted: str) -> Callable:
    def run(args, scene):
        return Value.object_set(
            o.id for o in _objects(scene, args[0].payload) if getattr(o, attr) == wanted
        )

    return run


def _relate(axis: str, forward: bool) -> Callable:
    def run(args, scene):
        ref = _one(scene, args[0].payload)
        pivot = getattr(ref, axis)
        ids = [
            o.id
            for o in scene.objects
            if (getattr(o, axis) > pivot if forward else getattr(o, axis) < pivot)
        ]
        return Value.object_set(ids)

    return run


def _same(attr: str) -> Callable:
    def run(args, scene):
        ref = _one(scene, args[0].payload)
        ids = [
            o.id
            for o in scene.objects
            if o.id != ref.id and getattr(o, attr) == getattr(ref, attr)
        ]
        return Value.object_set(ids)

    return run


def _query(attr: str) -> Callable:
    def run(args, scene):
        return Value.attribute(getattr(_one(scene, args[0].payload), attr))

    return run


def _pick(reverse: bool) -> Callable:
    # deterministic extremum on the x axis; ties broken by (y, id)
    def run(args, scene):
        objs = _objects(scene, args[0].payload)
        if not objs:
            return ABORT
        chosen = (max if reverse else min)(objs, key=lambda o: (o.x, o.y, o.id))
        return Value.single(chosen.id)

    return run


def _unique(args, scene):
    ids = args[0].payload
    if len(ids) != 1:
        return ABORT
    return Value.single(next(iter(ids)))


_FIXED_SEMANTICS: dict[str, Callable] = {
    "scene": lambda args, scene: Value.object_set(o.id for o in scene.objects),
    "count": lambda args, scene: Value.integer(len(args[0].payload)),
    "exist": lambda args, scene: Value.boolean(len(args[0].payload) > 0),
    "unique": _unique,
    "relate_left": _relate("x", forward=False),
    "relate_right": _relate("x", forward=True),
    "relate_above": _relate("y", forward=True),
    "relate_below": _relate("y", forward=False),
    "equal_int": lambda args, scene: Value.boolean(args[0].payload == args[1].payload),
    "greater": lambda args, scene: Value.boolean(args[0].payload > args[1].payload),
    "less": lambda args, scene: Value.boolean(args[0].payload < args[1].payload),
    "add_int": lambda args, scene: Value.integer(args[0].payload + args[1].payload),
    "and_": lambda args, scene: Value.boolean(args[0].payload and args[1].payload),
    "or_": lambda args, scene: Value.boolean(args[0].payload or args[1].payload),
    "not_": lambda args, scene: Value.boolean(not args[0].payload),
    "equal_attr": lambda args, scene: Value.boolean(args[0].payload == args[1].payload),
    "union": lambda args, scene: Value.object_set(args[0].payload | args[1].payload),
    "intersect": lambda args, scene: Value.object_set(args[0].payload & args[1].payload),
    "leftmost": _pick(reverse=False),
    "rightmost": _pick(reverse=True),
}


@lru_cache(maxsize=None)
def _semantics(name: str) -> Callable:
    if name in _FIXED_SEMANTICS:
        return _FIXED_SEMANTICS[name]
    if name.startswith("filter_"):
        param = name[len("filter_") :]
        for attr, values in (("color", COLORS), ("shape", SHAPES), ("size", SIZES)):
            if param in values:
                return _filter(attr, param)
    if name.startswith("query_"):
        attr = name[len("query_") :]
        if attr in ("color", "shape", "size"):
            return _query(attr)
    if name.startswith("same_"):
        attr = name[len("same_") :]
        if attr in ("color", "shape", "size"):
            return _same(attr)
    raise KeyError(f"no micro-world semantics for module {name!r}")


def execute(program: Program, scene: Scene, registry: ModuleRegistry) -> Value:
    """Bottom-up evaluation of a program on one scene.

    Requires every module slot to be fed a value of an accepted type;
    a non-answer-typed root does not block evaluation (its value simply
    cannot match any stored answer).
    """
    report = count_mismatches(program, registry)
    if not report.executable:
        root = program.tokens[0]
        root_type = NONE_TYPE if root == END_TOKEN else registry.sig(root).output
        root_penalty = 0 if root_type in registry.answer_types else 1
        if report.mismatch_count - root_penalty > 0:
            raise NotExecutableError(f"program {program.key!r} has slot type mismatches")
    tokens = program.tokens

    def eval_at(i: int) -> tuple[Value, int]:
        tok = tokens[i]
        if tok == END_TOKEN:
            return NONE_VALUE, i + 1
        arity = registry.arity(tok)
        args = []
        j = i + 1
        for _ in range(arity):
            val, j = eval_at(j)
            args.append(val)
        if any(a.kind == "abort" for a in args):
            return ABORT, j
        return _semantics(tok)(args, scene), j

    result, end = eval_at(0)
    assert end == len(tokens)
    return result


def accuracy(program: Program, triplet: QuestionTriplet, registry: ModuleRegistry) -> float:
    """Fraction of the triplet's scenes where execution matches the answer."""
    hits = 0
    for scene, answer in zip(triplet.scenes, triplet.answers):
        if execute(program, scene, registry) == answer:
            hits += 1
    return hits / len(triplet.scenes)


def exact_match_oracle(program: Program, gt: Program) -> float:
    """1.0 iff the two programs have identical canonical keys."""
    return 1.0 if program.key == gt.key else 0.0


# -- built-in registries -------------------------------------------------------------

_TYPES = ["ObjectSet", "SingleObject", "Integer", "Boolean", "Attribute"]
_ANSWERS = ["Integer", "Boolean", "Attribute"]


def _module(name: str, inputs: list[list[str]], output: str) -> dict:
    return {"name": name, "inputs": inputs, "output": output}


def _microworld10_document() -> dict:
    mods = [
        _module("scene", [], "ObjectSet"),
        _module("filter_red", [["ObjectSet"]], "ObjectSet"),
        _module("filter_blue", [["ObjectSet"]], "ObjectSet"),
        _module("filter_cube", [["ObjectSet"]], "ObjectSet"),
        _module("count", [["ObjectSet"]], "Integer"),
        _module("exist", [["ObjectSet"]], "Boolean"),
        _module("unique", [["ObjectSet"]], "SingleObject"),
        _module("query_color", [["SingleObject"]], "Attribute"),
        _module("relate_left", [["SingleObject"]], "ObjectSet"),
        _module("equal_int", [["Integer"], ["Integer"]], "Boolean"),
    ]
    return {"types": _TYPES, "answer_types": _ANSWERS, "modules": mods}


def _microworld39_document() -> dict:
    mods = [_module("scene", [], "ObjectSet")]
    for color in COLORS:
        mods.append(_module(f"filter_{color}", [["ObjectSet"]], "ObjectSet"))
    for shape in SHAPES:
        mods.append(_module(f"filter_{shape}", [["ObjectSet"]], "ObjectSet"))
    for size in SIZES:
        mods.append(_module(f"filter_{size}", [["ObjectSet"]], "ObjectSet"))
    mods += [
        _module("count", [["ObjectSet"]], "Integer"),
        _module("exist", [["ObjectSet"]], "Boolean"),
        _module("unique", [["ObjectSet"]], "SingleObject"),
        _module("leftmost", [["ObjectSet"]], "SingleObject"),
        _module("rightmost", [["ObjectSet"]], "SingleObject"),
        _module("query_color", [["SingleObject"]], "Attribute"),
        _module("query_shape", [["SingleObject"]], "Attribute"),
        _module("query_size", [["SingleObject"]], "Attribute"),
        _module("relate_left", [["SingleObject"]], "ObjectSet"),
        _module("relate_right", [["SingleObject"]], "ObjectSet"),
        _module("relate_above", [["SingleObject"]], "ObjectSet"),
        _module("relate_below", [["SingleObject"]], "ObjectSet"),
        _module("same_color", [["SingleObject"]], "ObjectSet"),
        _module("same_shape", [["SingleObject"]], "ObjectSet"),
        _module("same_size", [["SingleObject"]], "ObjectSet"),
        _module("union", [["ObjectSet"], ["ObjectSet"]], "ObjectSet"),
        _module("intersect", [["ObjectSet"], ["ObjectSet"]], "ObjectSet"),
        _module("equal_int", [["Integer"], ["Integer"]], "Boolean"),
        _module("greater", [["Integer"], ["Integer"]], "Boolean"),
        _module("less", [["Integer"], ["Integer"]], "Boolean"),
        _module("add_int", [["Integer"], ["Integer"]], "Integer"),
        _module("and_", [["Boolean"], ["Boolean"]], "Boolean"),
        _module("or_", [["Boolean"], ["Boolean"]], "Boolean"),
        _module("not_", [["Boolean"]], "Boolean"),
        _module("equal_attr", [["Attribute"], ["Attribute"]], "Boolean"),
    ]
    return {"types": _TYPES, "answer_types": _ANSWERS, "modules": mods}


_BUILTIN_DOCS = {
    "microworld10": _microworld10_document,
    "microworld39": _microworld39_document,
}


def builtin_registry_document(name: str) -> Optional[dict]:
    maker = _BUILTIN_DOCS.get(name)
    return maker() if maker else None


def builtin_registry(name: str) -> ModuleRegistry:
    doc = builtin_registry_document(name)
    if doc is None:
        raise KeyError(f"no built-in registry named {name!r}")
    return registry_from_document(doc)


# -- question rendering -------------------------------------------------------------

_FIXED_PHRASES = {
    "scene": "things",
    "count": "how many {0}",
    "exist": "are there any {0}",
    "unique": "the unique {0}",
    "leftmost": "the leftmost of {0}",
    "rightmost": "the rightmost of {0}",
    "query_color": "what color is {0}",
    "query_shape": "what shape is {0}",
    "query_size": "what size is {0}",
    "relate_left": "things left of {0}",
    "relate_right": "things right of {0}",
    "relate_above": "things above {0}",
    "relate_below": "things below {0}",
    "same_color": "things colored like {0}",
    "same_shape": "things shaped like {0}",
    "same_size": "things sized like {0}",
    "union": "{0} together with {1}",
    "intersect": "{0} among {1}",
    "equal_int": "whether {0} equals {1}",
    "equal_attr": "whether {0} matches {1}",
    "greater": "whether {0} exceeds {1}",
    "less": "whether {0} is smaller than {1}",
    "add_int": "the total of {0} and {1}",
    "and_": "both {0} and {1}",
    "or_": "either {0} or {1}",
    "not_": "not {0}",
}


def _phrase(name: str) -> str:
    if name in _FIXED_PHRASES:
        return _FIXED_PHRASES[name]
    if name.startswith("filter_"):
        return name[len("filter_") :] + " {0}"
    raise KeyError(f"no question phrase for module {name!r}")


def render_question(program: Program, registry: ModuleRegistry) -> tuple[str, ...]:
    """Compose the question text from per-module phrases, inner to outer."""
    tokens = program.tokens

    def build(i: int) -> tuple[str, int]:
        tok = tokens[i]
        if tok == END_TOKEN:
            return "something", i + 1
        parts = []
        j = i + 1
        for _ in range(registry.arity(tok)):
            text, j = build(j)
            parts.append(text)
        return _phrase(tok).format(*parts), j

    text, end = build(0)
    assert end == len(tokens)
    return tuple(text.split())


# -- dataset generation -------------------------------------------------------------

def random_scene(rng, min_objects: int = 3, max_objects: int = 8) -> Scene:
    n = rng.randint(min_objects, max_objects)
    cells = rng.sample(range(GRID * GRID), n)
    objs = []
    for i, cell in enumerate(cells):
        x, y = cell % GRID, cell // GRID
        objs.append(
            SceneObject(
                id=i,
                color=COLORS[rng.randrange(len(COLORS))],
                shape=SHAPES[rng.randrange(len(SHAPES))],
                size=SIZES[rng.randrange(len(SIZES))],
                x=x,
                y=y,
            )
        )
    return Scene(tuple(objs))


_RETRY_CAP = 1000


def _has_stacked_repeat(program, registry: ModuleRegistry) -> bool:
    """True when an arity-1 module is applied directly to itself."""
    tokens = program.tokens
    for i in range(len(tokens) - 1):
        if tokens[i] == tokens[i + 1] and tokens[i] != END_TOKEN and registry.arity(tokens[i]) == 1:
            return True
    return False


def gen_dataset(
    registry: ModuleRegistry,
    count: int,
    scenes_per_question: int,
    seed: int,
    max_depth: int = 6,
    stop_prob: float = 0.45,
    max_tokens: int = 9,
) -> list[QuestionTriplet]:
    """Deterministically generate question triplets with ground-truth programs.

    A candidate question is rejected when its program exceeds `max_tokens`
    or stacks an arity-1 module on itself (redundant, e.g. a filter applied
    twice), when any scene makes the ground truth abort, or when the
    answers are constant across all scenes (degenerate).  Raises
    GenerationExhaustedError when a question exceeds the retry cap.
    """
    import random as _random

    rng = _random.Random(seed)
    out: list[QuestionTriplet] = []
    for qid in range(count):
        for attempt in range(_RETRY_CAP):
            program = typed_random_program(registry, rng, max_depth=max_depth, stop_prob=stop_prob)
            if len(program.tokens) > max_tokens or _has_stacked_repeat(program, registry):
                continue
            scenes = []
            answers = []
            ok = True
            for _ in range(scenes_per_question):
                answer = None
                for _scene_try in range(20):
                    scene = random_scene(rng)
                    answer = execute(program, scene, registry)
                    if answer.kind != "abort":
                        break
                if answer is None or answer.kind == "abort":
                    ok = False
                    break
                scenes.append(scene)
                answers.append(answer)
            if not ok:
                continue
            if len(set(answers)) <= 1:
                continue  # constant answers carry no signal
            out.append(
                QuestionTriplet(
                    qid=qid,
                    question=render_question(program, registry),
                    scenes=tuple(scenes),
                    answers=tuple(answers),
                    gt_program=program,
                )
            )
            break
        else:
            raise GenerationExhaustedError(f"question {qid}: retry cap {_RETRY_CAP} exceeded")
    return out


# -- dataset files -------------------------------------------------------------

def _scene_to_doc(scene: Scene) -> list[dict]:
    return [
        {"id": o.id, "color": o.color, "shape": o.shape, "size": o.size, "x": o.x, "y": o.y}
        for o in scene.objects
    ]


def _scene_from_doc(doc) -> Scene:
    return Scene(tuple(SceneObject(**entry) for entry in doc))


def save_dataset(path, triplets: list[QuestionTriplet]) -> None:
    lines = []
    for t in triplets:
        record = {
            "qid": t.qid,
            "question": list(t.question),
            "program": t.gt_program.key if t.gt_program is not None else None,
            "scenes": [_scene_to_doc(s) for s in t.scenes],
            "answers": [value_to_text(a) for a in t.answers],
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path, registry: ModuleRegistry) -> list[QuestionTriplet]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        gt = record.get("program")
        out.append(
            QuestionTriplet(
                qid=record["qid"],
                question=tuple(record["question"]),
                scenes=tuple(_scene_from_doc(doc) for doc in record["scenes"]),
                answers=tuple(value_from_text(a) for a in record["answers"]),
                gt_program=from_sequence(gt.split(), registry) if gt else None,
            )
        )
    return out
