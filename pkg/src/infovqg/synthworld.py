"""Procedural desk-scale visual world.

Scenes are small sets of objects with a type, color, material, attribute and
count.  Each scene renders to a noisy multi-hot feature vector that stands in
for frozen CNN activations, and a fixed template inventory produces
question/answer pairs per answer category.  The same inventory is used in
reverse by :func:`check_relevance` as an exact answerability oracle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, SchemaError

DEFAULT_OBJECT_TYPES = (
    "cube", "sphere", "cylinder", "cone", "ball", "block", "cup", "bowl",
    "plate", "book", "lamp", "chair", "table", "bottle", "vase", "shoe",
    "hat", "bag", "pen", "clock",
)
DEFAULT_COLORS = ("red", "blue", "green", "yellow", "purple", "brown", "gray", "white")
DEFAULT_MATERIALS = ("metal", "rubber", "wood", "glass", "plastic", "stone")
DEFAULT_ATTRIBUTES = ("shiny", "matte", "small", "large", "old", "new", "striped", "dotted")
DEFAULT_CATEGORIES = ("object", "color", "material", "attribute", "counting", "binary")

# slot name -> (object field, plural?)
_SLOTS = {
    "type": ("type", False),
    "types": ("type", True),
    "color": ("color", False),
    "material": ("material", False),
    "attribute": ("attribute", False),
}
_ANSWER_KINDS = {"type", "color", "material", "attribute", "count", "presence"}
BINARY_ANSWERS = ("yes", "no")


@dataclass(frozen=True)
class WorldConfig:
    object_types: tuple = DEFAULT_OBJECT_TYPES
    colors: tuple = DEFAULT_COLORS
    materials: tuple = DEFAULT_MATERIALS
    attributes: tuple = DEFAULT_ATTRIBUTES
    max_objects_per_scene: int = 4
    max_count: int = 5
    feature_noise_std: float = 0.05
    categories: tuple = DEFAULT_CATEGORIES

    def __post_init__(self):
        for name in ("object_types", "colors", "materials", "attributes", "categories"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def concepts(self, field_name: str) -> tuple:
        return {
            "type": self.object_types,
            "color": self.colors,
            "material": self.materials,
            "attribute": self.attributes,
        }[field_name]

    @property
    def feature_dim(self) -> int:
        return (len(self.object_types) + len(self.colors) + len(self.materials)
                + len(self.attributes) + self.max_count)

    def validate(self) -> None:
        seen = {}
        for name in ("object_types", "colors", "materials", "attributes"):
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"{name} must be non-empty")
            if len(set(values)) != len(values):
                raise ConfigError(f"{name} contains duplicates")
            for v in values:
                if not isinstance(v, str) or not v or v != v.lower() or " " in v:
                    raise ConfigError(f"concept {v!r} in {name} must be a single lowercase token")
                # slot fillers are parsed by lookup, so concept names must not collide
                if v in seen:
                    raise ConfigError(f"concept {v!r} appears in both {seen[v]} and {name}")
                seen[v] = name
        plurals = {t + "s" for t in self.object_types}
        if plurals & set(seen):
            raise ConfigError("plural object type collides with a concept name")
        if self.max_objects_per_scene < 1:
            raise ConfigError("max_objects_per_scene must be >= 1")
        if self.max_objects_per_scene > len(self.object_types):
            raise ConfigError("max_objects_per_scene exceeds the number of object types")
        if self.max_count < 1:
            raise ConfigError("max_count must be >= 1")
        if not self.feature_noise_std >= 0:
            raise ConfigError("feature_noise_std must be non-negative")
        if not self.categories or len(set(self.categories)) != len(self.categories):
            raise ConfigError("categories must be non-empty and duplicate-free")
        known = {t.category for t in load_templates()}
        unknown = [c for c in self.categories if c not in known]
        if unknown:
            raise ConfigError(f"no templates for categories {unknown}")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class SceneObject:
    type: str
    color: str
    material: str
    attribute: str
    count: int


@dataclass(frozen=True)
class Scene:
    scene_id: str
    objects: tuple

    def to_dict(self) -> dict:
        return {"scene_id": self.scene_id, "objects": [asdict(o) for o in self.objects]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(d["scene_id"], tuple(SceneObject(**o) for o in d["objects"]))

    def find(self, field_name: str, value: str) -> list:
        return [o for o in self.objects if getattr(o, field_name) == value]


@dataclass(frozen=True)
class RelevanceVerdict:
    answerable: bool
    matched_category: Optional[str] = None
    oracle_answer: Optional[str] = None


@dataclass(frozen=True)
class Template:
    id: str
    category: str
    pattern: tuple
    answer: str

    @property
    def slot(self) -> str:
        for tok in self.pattern:
            if tok.startswith("{"):
                return tok[1:-1]
        raise SchemaError(f"template {self.id} has no slot")


@lru_cache(maxsize=None)
def load_templates(path: Optional[str] = None) -> tuple:
    """Load and validate the versioned template inventory."""
    if path is None:
        text = resources.files("infovqg").joinpath("data/templates.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    if raw.get("version") != 1:
        raise SchemaError(f"unsupported template version {raw.get('version')!r}")
    out = []
    for t in raw["templates"]:
        tpl = Template(t["id"], t["category"], tuple(t["pattern"].split()), t["answer"])
        slots = [tok for tok in tpl.pattern if tok.startswith("{")]
        if len(slots) != 1 or slots[0][1:-1] not in _SLOTS:
            raise SchemaError(f"template {tpl.id} must have exactly one known slot")
        if tpl.answer not in _ANSWER_KINDS:
            raise SchemaError(f"template {tpl.id} has unknown answer kind {tpl.answer!r}")
        if tpl.pattern[-1] != "?":
            raise SchemaError(f"template {tpl.id} must end with '?'")
        out.append(tpl)
    return tuple(out)


def templates_for(category: str) -> list:
    return [t for t in load_templates() if t.category == category]


def _check_config(config: WorldConfig) -> None:
    if not isinstance(config, WorldConfig):
        raise ConfigError("expected a WorldConfig")
    config.validate()


def sample_scene(config: WorldConfig, seed: int, scene_id: Optional[str] = None) -> Scene:
    _check_config(config)
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, config.max_objects_per_scene + 1))
    type_idx = rng.choice(len(config.object_types), size=n, replace=False)
    objects = []
    for ti in type_idx:
        objects.append(SceneObject(
            type=config.object_types[int(ti)],
            color=config.colors[int(rng.integers(len(config.colors)))],
            material=config.materials[int(rng.integers(len(config.materials)))],
            attribute=config.attributes[int(rng.integers(len(config.attributes)))],
            count=int(rng.integers(1, config.max_count + 1)),
        ))
    return Scene(scene_id if scene_id is not None else f"scene-{seed}", tuple(objects))


def validate_scene(scene: Scene, config: WorldConfig) -> None:
    if not 1 <= len(scene.objects) <= config.max_objects_per_scene:
        raise SchemaError(f"scene has {len(scene.objects)} objects")
    types = [o.type for o in scene.objects]
    if len(set(types)) != len(types):
        raise SchemaError("object types within a scene must be distinct")
    for o in scene.objects:
        for f in ("type", "color", "material", "attribute"):
            if getattr(o, f) not in config.concepts(f):
                raise SchemaError(f"{f} {getattr(o, f)!r} not in config")
        if not 1 <= o.count <= config.max_count:
            raise SchemaError(f"count {o.count} out of range")


def render_features(scene: Scene, config: WorldConfig, seed: int) -> np.ndarray:
    """Multi-hot concept encoding plus Gaussian noise.

    Layout: object types | colors | materials | attributes | one-hot of the
    largest per-object count.
    """
    validate_scene(scene, config)
    offsets = {}
    off = 0
    for f in ("type", "color", "material", "attribute"):
        offsets[f] = off
        off += len(config.concepts(f))
    vec = np.zeros(config.feature_dim, dtype=np.float64)
    for o in scene.objects:
        for f in ("type", "color", "material", "attribute"):
            vec[offsets[f] + config.concepts(f).index(getattr(o, f))] = 1.0
    vec[off + max(o.count for o in scene.objects) - 1] = 1.0
    if config.feature_noise_std > 0:
        rng = np.random.default_rng(seed)
        vec = vec + rng.normal(0.0, config.feature_noise_std, size=vec.shape)
    return vec


def _realize(tpl: Template, filler: str) -> list:
    return [filler if tok.startswith("{") else tok for tok in tpl.pattern]


def _slot_fillers(tpl: Template, scene: Scene, config: WorldConfig) -> list:
    """Fillers for which the template yields an unambiguous answerable question."""
    field_name, plural = _SLOTS[tpl.slot]
    if tpl.answer == "presence":
        return [c + "s" if plural else c for c in config.concepts(field_name)]
    out = []
    for value in dict.fromkeys(getattr(o, field_name) for o in scene.objects):
        if len(scene.find(field_name, value)) == 1:
            out.append(value + "s" if plural else value)
    return out


def _answer_for(tpl: Template, filler: str, scene: Scene) -> Optional[str]:
    field_name, plural = _SLOTS[tpl.slot]
    value = filler[:-1] if plural else filler
    matches = scene.find(field_name, value)
    if tpl.answer == "presence":
        return "yes" if matches else "no"
    if len(matches) != 1:
        return None
    obj = matches[0]
    return str(obj.count) if tpl.answer == "count" else getattr(obj, tpl.answer)


def generate_qa(scene: Scene, category: str, seed: int,
                config: WorldConfig = WorldConfig()) -> Optional[tuple]:
    """Instantiate one template of ``category`` against ``scene``.

    Returns ``(question_tokens, answer_tokens)`` or ``None`` when no template of
    the category can be answered unambiguously for this scene.
    """
    if category not in config.categories:
        raise ConfigError(f"unknown category {category!r}")
    rng = np.random.default_rng(seed)
    options = [(tpl, f) for tpl in templates_for(category)
               for f in _slot_fillers(tpl, scene, config)]
    if not options:
        return None
    if category == "binary":
        # balance yes/no instead of drawing uniformly over mostly-absent concepts
        want = BINARY_ANSWERS[int(rng.integers(2))]
        balanced = [(t, f) for t, f in options if _answer_for(t, f, scene) == want]
        options = balanced or options
    tpl, filler = options[int(rng.integers(len(options)))]
    return _realize(tpl, filler), [_answer_for(tpl, filler, scene)]


def _parse_filler(tpl: Template, token: str, config: WorldConfig) -> bool:
    field_name, plural = _SLOTS[tpl.slot]
    if plural:
        if not token.endswith("s"):
            return False
        token = token[:-1]
    return token in config.concepts(field_name)


def check_relevance(question: Sequence[str], scene: Scene,
                    config: WorldConfig = WorldConfig()) -> RelevanceVerdict:
    if isinstance(question, str):
        question = question.split()
    tokens = [t.lower() for t in question]
    for tpl in load_templates():
        if len(tpl.pattern) != len(tokens):
            continue
        filler = None
        for want, got in zip(tpl.pattern, tokens):
            if want.startswith("{"):
                filler = got
            elif want != got:
                break
        else:
            if not _parse_filler(tpl, filler, config):
                continue
            answer = _answer_for(tpl, filler, scene)
            if answer is not None:
                return RelevanceVerdict(True, tpl.category, answer)
    return RelevanceVerdict(False)


def template_lexicon(config: WorldConfig = WorldConfig()) -> set:
    """Every token the templates and answers can produce for ``config``."""
    words = set()
    for tpl in load_templates():
        if tpl.category not in config.categories:
            continue
        words.update(tok for tok in tpl.pattern if not tok.startswith("{"))
        field_name, plural = _SLOTS[tpl.slot]
        words.update(c + "s" if plural else c for c in config.concepts(field_name))
        if tpl.answer == "presence":
            words.update(BINARY_ANSWERS)
        elif tpl.answer == "count":
            words.update(str(k) for k in range(1, config.max_count + 1))
        else:
            words.update(config.concepts(tpl.answer))
    return words


@dataclass
class DatasetManifest:
    n: int
    seed: int
    config_hash: str
    category_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def make_record(config: WorldConfig, seed: int, index: int) -> dict:
    """Build record ``index`` of the stream identified by ``seed``.

    Scenes are resampled (with derived seeds) until the drawn category is
    applicable, so every record is a valid triple.
    """
    rng = np.random.default_rng([seed, index])
    category = config.categories[int(rng.integers(len(config.categories)))]
    for attempt in range(1000):
        sub = [seed, index, attempt]
        scene = sample_scene(config, sub, scene_id=f"s{seed}-{index:06d}")
        qa = generate_qa(scene, category, [seed, index, attempt, 1], config)
        if qa is not None:
            break
    else:  # pragma: no cover - every category is applicable to most scenes
        raise ConfigError(f"category {category!r} never applicable")
    question, answer = qa
    feats = render_features(scene, config, [seed, index, attempt, 2])
    return {
        "id": f"s{seed}-{index:06d}",
        "features": [round(float(x), 6) for x in feats],
        "question": " ".join(question),
        "answer": " ".join(answer),
        "category": category,
        "scene": scene.to_dict(),
    }


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def emit_dataset(n: int, config: WorldConfig, seed: int, path) -> DatasetManifest:
    """Write ``n`` JSONL records to ``path`` and a manifest next to it."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    _check_config(config)
    path = Path(path)
    counts = {c: 0 for c in config.categories}
    lines = []
    for i in range(n):
        rec = make_record(config, seed, i)
        counts[rec["category"]] += 1
        lines.append(json.dumps(rec, separators=(",", ":")))
    manifest = DatasetManifest(n=n, seed=seed, config_hash=config.config_hash(),
                               category_counts=counts)
    path.write_text("\n".join(lines) + "\n")
    manifest_path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest
