import random
import time

import pytest

from progsearch.microworld import (
    ABORT,
    COLORS,
    NONE_VALUE,
    Scene,
    SceneObject,
    Value,
    accuracy,
    exact_match_oracle,
    execute,
    gen_dataset,
    load_dataset,
    render_question,
    random_scene,
    save_dataset,
    value_from_text,
    value_to_text,
    NotExecutableError,
    QuestionTriplet,
)
from progsearch.programs import Program, from_sequence
from progsearch.registry import typed_random_program


def P(*tokens):
    return Program(tuple(tokens))


def make_scene(*specs):
    """specs: (color, shape, size, x, y) tuples."""
    return Scene(
        tuple(
            SceneObject(id=i, color=c, shape=sh, size=sz, x=x, y=y)
            for i, (c, sh, sz, x, y) in enumerate(specs)
        )
    )


@pytest.fixture()
def mixed_scene():
    return make_scene(
        ("red", "cube", "small", 2, 3),
        ("red", "sphere", "large", 5, 9),
        ("blue", "cube", "large", 11, 1),
    )


# -- executor -----------------------------------------------------------


def test_count_filter_red(mw10, mixed_scene):
    assert execute(P("count", "filter_red", "scene"), mixed_scene, mw10) == Value.integer(2)


def test_exist_filter_blue_all_red(mw39):
    all_red = make_scene(("red", "cube", "small", 1, 1), ("red", "sphere", "large", 4, 4))
    assert execute(P("exist", "filter_blue", "scene"), all_red, mw39) == Value.boolean(False)


def test_scene_returns_all_ids(mw10, mixed_scene):
    assert execute(P("scene",), mixed_scene, mw10) == Value.object_set({0, 1, 2})


def test_scene_not_executable_as_root_question(mw10, mixed_scene):
    # the bare scene program is structurally fine but fails the answer-type rule
    with pytest.raises(NotExecutableError):
        execute(P("count", "count", "scene"), mixed_scene, mw10)


def test_unique_aborts_on_non_singleton(mw10, mixed_scene):
    assert execute(P("query_color", "unique", "filter_red", "scene"), mixed_scene, mw10) == ABORT
    assert execute(P("query_color", "unique", "filter_blue", "scene"), mixed_scene, mw10) == Value.attribute("blue")


def test_integer_boolean_values_distinct():
    assert Value.integer(1) != Value.boolean(True)
    assert Value.integer(0) != Value.boolean(False)


def _sees(scene, registry, direction, c1, c2):
    """True iff some c2-colored object lies strictly `direction` of the c1 one."""
    program = P(
        "exist",
        "intersect",
        f"relate_{direction}",
        "unique",
        f"filter_{c1}",
        "scene",
        f"filter_{c2}",
        "scene",
    )
    return execute(program, scene, registry).payload


def test_relate_antisymmetry(mw39):
    rng = random.Random(2)
    for _ in range(40):
        # distinct colors make every object addressable through filters
        n = rng.randint(2, len(COLORS))
        colors = rng.sample(COLORS, n)
        cells = rng.sample(range(256), n)
        scene = make_scene(
            *((c, "cube", "small", cell % 16, cell // 16) for c, cell in zip(colors, cells))
        )
        for forward, backward in (("right", "left"), ("above", "below")):
            for c1 in colors:
                for c2 in colors:
                    if c1 == c2:
                        continue
                    if _sees(scene, mw39, forward, c1, c2):
                        assert _sees(scene, mw39, backward, c2, c1)


def test_same_color_excludes_self(mw39):
    scene = make_scene(
        ("red", "cube", "small", 1, 1),
        ("red", "sphere", "large", 3, 3),
        ("blue", "cube", "small", 5, 5),
    )
    # unique blue object, then same_color -> empty; count == 0
    assert execute(P("count", "same_color", "unique", "filter_blue", "scene"), scene, mw39) == Value.integer(0)
    # unique... for red there are two, so pick via leftmost
    assert execute(P("count", "same_color", "leftmost", "filter_red", "scene"), scene, mw39) == Value.integer(1)


def test_filter_never_grows(mw39):
    rng = random.Random(8)
    for _ in range(200):
        scene = random_scene(rng)
        total = execute(P("count", "scene"), scene, mw39)
        for color in COLORS[:3]:
            filtered = execute(P("count", f"filter_{color}", "scene"), scene, mw39)
            assert filtered.payload <= total.payload


def test_execute_deterministic(mw39, mixed_scene):
    p = P("count", "filter_large", "scene")
    results = {execute(p, mixed_scene, mw39) for _ in range(5)}
    assert len(results) == 1


def test_abort_propagates(mw39, mixed_scene):
    # unique over 3 objects aborts; enclosing count returns Abort too
    assert execute(P("count", "same_color", "unique", "scene"), mixed_scene, mw39) == ABORT


# -- accuracy and the exact-match oracle -----------------------------------------------------------


def test_accuracy_of_gt_is_one(mw10):
    ds = gen_dataset(mw10, count=5, scenes_per_question=4, seed=3)
    for t in ds:
        assert accuracy(t.gt_program, t, mw10) == 1.0


def test_accuracy_hand_computed(mw10):
    scenes, answers = [], []
    # gt: count(filter_red(scene)); candidate count(scene) agrees only when all-red
    gt = P("count", "filter_red", "scene")
    all_red = make_scene(("red", "cube", "small", 1, 1), ("red", "cube", "large", 2, 2))
    some_blue = make_scene(("red", "cube", "small", 1, 1), ("blue", "cube", "large", 2, 2))
    for scene in (all_red, some_blue, some_blue, all_red):
        scenes.append(scene)
        answers.append(execute(gt, scene, mw10))
    triplet = QuestionTriplet(
        qid=0, question=("q",), scenes=tuple(scenes), answers=tuple(answers), gt_program=gt
    )
    assert accuracy(P("count", "scene"), triplet, mw10) == 0.5
    assert accuracy(gt, triplet, mw10) == 1.0


def test_abort_scores_zero(mw10):
    scene = make_scene(("red", "cube", "small", 1, 1), ("blue", "cube", "large", 2, 2))
    triplet = QuestionTriplet(
        qid=0,
        question=("q",),
        scenes=(scene,),
        answers=(Value.attribute("red"),),
        gt_program=None,
    )
    aborting = P("query_color", "unique", "scene")
    assert accuracy(aborting, triplet, mw10) == 0.0


def test_exact_match_oracle(mw10):
    p = P("count", "scene")
    assert exact_match_oracle(p, p) == 1.0
    assert exact_match_oracle(P("count", "scene"), P("exist", "scene")) == 0.0
    rebuilt = from_sequence(p.key.split(), mw10)
    assert exact_match_oracle(rebuilt, p) == 1.0


# -- generation -----------------------------------------------------------


def test_gen_dataset_deterministic(mw10, tmp_path):
    a = gen_dataset(mw10, count=12, scenes_per_question=4, seed=7)
    b = gen_dataset(mw10, count=12, scenes_per_question=4, seed=7)
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(pa, a)
    save_dataset(pb, b)
    assert pa.read_bytes() == pb.read_bytes()


def test_gen_dataset_answers_vary(mw10):
    for t in gen_dataset(mw10, count=10, scenes_per_question=4, seed=5):
        assert len(set(t.answers)) > 1


def test_gen_dataset_speed_budget(mw39):
    start = time.time()
    ds = gen_dataset(mw39, count=1000, scenes_per_question=5, seed=11)
    elapsed = time.time() - start
    assert len(ds) == 1000
    assert elapsed < 60.0


def test_dataset_roundtrip(mw39, tmp_path):
    ds = gen_dataset(mw39, count=8, scenes_per_question=3, seed=1)
    path = tmp_path / "ds.jsonl"
    save_dataset(path, ds)
    loaded = load_dataset(path, mw39)
    assert loaded == ds


def test_question_rendering(mw10):
    q = render_question(P("count", "filter_red", "scene"), mw10)
    assert q == ("how", "many", "red", "things")


def test_value_text_roundtrip():
    values = [
        Value.integer(4),
        Value.boolean(True),
        Value.boolean(False),
        Value.attribute("red"),
        Value.object_set({3, 1}),
        Value.single(2),
        NONE_VALUE,
    ]
    for v in values:
        assert value_from_text(value_to_text(v)) == v


def test_executor_type_soundness(mw39):
    # executable programs always run to completion (Abort included, errors not)
    rng = random.Random(77)
    scene = random_scene(rng)
    for _ in range(2000):
        p = typed_random_program(mw39, rng, max_depth=6)
        execute(p, scene, mw39)
