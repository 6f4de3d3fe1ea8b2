"""Deterministic synthetic corpus for desk-scale training runs.

Each role gets a planted OCR keyword (so a one-feature decision stump can
classify roles perfectly) and a distinct image texture, and explanations
follow the fixed grammar "{entity} {role verb phrase} {description}" so an
overfit generator can regenerate them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ROLES, MemeSample, save_dataset

ROLE_KEYWORDS = {"hero": "saluted", "villain": "schemed", "victim": "suffered"}

ROLE_VERB_PHRASES = {
    "hero": ("protects the community", "stands up for others", "leads the rescue"),
    "villain": ("spreads the hoax", "mocks the crisis", "blames the public"),
    "victim": ("bears the fallout", "loses the argument", "takes the blame"),
}

DESCRIPTIONS = (
    "in this meme",
    "according to the caption",
    "as the text claims",
    "despite the outcry",
    "for political gain",
    "during the outbreak",
)

# Role-specific image textures; the caption names the texture so the visual
# and caption signals agree.
ROLE_TEXTURES = {"hero": "stripes", "villain": "bars", "victim": "checker"}

_SYLLABLES = ("ba", "do", "ke", "lu", "mi", "na", "po", "ra", "su", "ti", "vo", "za")

_FILLER = (
    "people", "share", "online", "news", "story", "image", "post", "talks",
    "about", "today", "again", "while", "crowd", "watches", "closely",
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the generated corpus; equal specs give equal corpora."""

    seed: int
    per_role: tuple[int, int, int] = (4, 4, 4)  # hero, villain, victim
    vocab_size: int = 40  # filler-word pool size cap
    image_size: int = 32
    patch_size: int = 8
    n_verb_phrases: int = 3
    n_descriptions: int = 4
    n_references: int = 1
    val_fraction: float = 0.0
    test_fraction: float = 0.0

    def validate(self) -> None:
        if any(n < 0 for n in self.per_role):
            raise ValueError(f"negative per-role counts: {self.per_role}")
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image size {self.image_size} not divisible by patch {self.patch_size}")
        if not 0 <= self.val_fraction + self.test_fraction <= 1:
            raise ValueError("val_fraction + test_fraction must be within [0, 1]")
        if self.n_verb_phrases < 1 or self.n_descriptions < 1 or self.n_references < 1:
            raise ValueError("grammar pools must be non-empty")


def _entity_name(rng: np.random.Generator) -> str:
    return "".join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), size=3))


def _texture(role: str, size: int, rng: np.random.Generator) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    if role == "hero":
        base = ((y // 4) % 2) * 200
    elif role == "villain":
        base = ((x // 4) % 2) * 200
    else:
        base = (((x // 4) + (y // 4)) % 2) * 200
    img = np.stack([base, base, base], axis=-1).astype(np.int16)
    noise = rng.integers(0, 40, size=img.shape, dtype=np.int16)
    return np.clip(img + noise, 0, 255).astype(np.uint8)


def generate_synthetic_corpus(spec: SyntheticSpec) -> list[MemeSample]:
    """Pure function of the spec: images are attached in memory; use
    write_corpus to materialize them as files."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    filler = list(_FILLER[: max(4, min(spec.vocab_size, len(_FILLER)))])
    samples: list[MemeSample] = []
    idx = 0
    for role, n in zip(ROLES, spec.per_role):
        verbs = ROLE_VERB_PHRASES[role][: spec.n_verb_phrases]
        descs = DESCRIPTIONS[: spec.n_descriptions]
        for _ in range(n):
            entity = _entity_name(rng) + str(idx)
            words = [filler[i] for i in rng.integers(0, len(filler), size=5)]
            insert_at = int(rng.integers(0, len(words) + 1))
            words.insert(insert_at, ROLE_KEYWORDS[role])
            words.insert(int(rng.integers(0, len(words) + 1)), entity)
            ocr_text = " ".join(words)
            caption = f"a meme with {ROLE_TEXTURES[role]} background and bold text"
            explanations = []
            for k in range(spec.n_references):
                verb = verbs[int(rng.integers(0, len(verbs)))]
                desc = descs[int(rng.integers(0, len(descs)))]
                explanations.append(f"{entity} {verb} {desc}")
            samples.append(MemeSample(
                id=f"synth-{idx:04d}",
                ocr_text=ocr_text,
                caption=caption,
                entity=entity,
                role=role,
                explanations=explanations,
                split="train",
                domain="unspecified",
                image_path=None,
                _image=_texture(role, spec.image_size, rng),
            ))
            idx += 1
    # round-robin split assignment keeps every role present in each split
    n_total = len(samples)
    n_test = int(round(spec.test_fraction * n_total))
    n_val = int(round(spec.val_fraction * n_total))
    order = rng.permutation(n_total)
    for j, i in enumerate(order):
        if j < n_test:
            samples[i].split = "test"
        elif j < n_test + n_val:
            samples[i].split = "val"
    return samples


def write_corpus(samples: list[MemeSample], path: str | Path) -> Path:
    """Write the JSONL file plus one .npy image per sample next to it."""
    path = Path(path)
    img_dir = path.parent / (path.stem + "_images")
    img_dir.mkdir(parents=True, exist_ok=True)
    for s in samples:
        if s._image is not None:
            np.save(img_dir / f"{s.id}.npy", s._image)
            s.image_path = f"{img_dir.name}/{s.id}.npy"  # relative in the file
    save_dataset(path, samples)
    for s in samples:
        if s.image_path is not None:
            s.image_path = str(path.parent / s.image_path)
    return path
