"""Dataset records, tokenization, vocabulary, and the two model inputs.

Records live in UTF-8 JSON-lines files with fields id, image_path,
ocr_text, caption, entity, role, explanations[], split, domain. Images are
referenced by path and loaded lazily so text-only configurations run
without them.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROLES = ("hero", "villain", "victim")
SPLITS = ("train", "val", "test")
DOMAINS = ("us_politics", "covid19", "unspecified")

# Reserved token ids, fixed in this order.
PAD_ID, UNK_ID, BOS_ID, EOS_ID, SEP_ID, CLS_ID = range(6)
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]", "[SEP]", "[CLS]")
N_RESERVED = len(RESERVED_TOKENS)

_PUNCT = set(string.punctuation)

PROMPT_TEMPLATE = "Generate explanation for {entity} as {role}: {ocr_text} [SEP] {caption} [SEP]"
PROMPT_TEMPLATE_NO_CAPTION = "Generate explanation for {entity} as {role}: {ocr_text} [SEP]"


class DatasetError(ValueError):
    """Raised when a dataset file cannot be parsed or validated."""


def role_index(role: str) -> int:
    return ROLES.index(role)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split each punctuation character
    into its own token. Idempotent on its own space-joined output."""
    out: list[str] = []
    for chunk in text.lower().split():
        word = ""
        for ch in chunk:
            if ch in _PUNCT:
                if word:
                    out.append(word)
                    word = ""
                out.append(ch)
            else:
                word += ch
        if word:
            out.append(word)
    return out


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


@dataclass
class MemeSample:
    """One (image, OCR text, caption, entity, role, explanations) record."""

    id: str
    ocr_text: str
    caption: str
    entity: str
    role: str
    explanations: list[str]
    split: str
    domain: str = "unspecified"
    image_path: str | None = None
    _image: np.ndarray | None = field(default=None, repr=False, compare=False)

    def validate(self) -> list[str]:
        problems = []
        if self.role not in ROLES:
            problems.append(f"unknown role {self.role!r}")
        if self.split not in SPLITS:
            problems.append(f"unknown split {self.split!r}")
        if self.domain not in DOMAINS:
            problems.append(f"unknown domain {self.domain!r}")
        if not self.ocr_text:
            problems.append("empty ocr_text")
        if not self.entity:
            problems.append("empty entity")
        if not self.explanations:
            problems.append("no explanations")
        elif any(not e for e in self.explanations):
            problems.append("empty explanation")
        return problems

    @property
    def image(self) -> np.ndarray | None:
        """H x W x 3 uint8 pixels, loaded lazily from image_path."""
        if self._image is None and self.image_path is not None:
            arr = np.load(self.image_path)
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise DatasetError(f"{self.image_path}: expected HxWx3 pixels, got {arr.shape}")
            self._image = arr.astype(np.uint8)
        return self._image

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "image_path": self.image_path,
            "ocr_text": self.ocr_text,
            "caption": self.caption,
            "entity": self.entity,
            "role": self.role,
            "explanations": list(self.explanations),
            "split": self.split,
            "domain": self.domain,
        }


def _sample_from_record(rec: dict, base_dir: Path) -> MemeSample:
    required = ("id", "ocr_text", "caption", "entity", "role", "explanations", "split")
    missing = [k for k in required if k not in rec]
    if missing:
        raise DatasetError(f"missing fields: {', '.join(missing)}")
    image_path = rec.get("image_path")
    if image_path:
        p = Path(image_path)
        image_path = str(p if p.is_absolute() else base_dir / p)
    return MemeSample(
        id=str(rec["id"]),
        ocr_text=str(rec["ocr_text"]),
        caption=str(rec["caption"]),
        entity=str(rec["entity"]),
        role=str(rec["role"]),
        explanations=[str(e) for e in rec["explanations"]],
        split=str(rec["split"]),
        domain=str(rec.get("domain", "unspecified")),
        image_path=image_path,
    )


def load_dataset(path: str | Path) -> list[MemeSample]:
    """Parse a JSON-lines dataset file; collects every bad line before failing.

    Records carrying a role outside hero/villain/victim (e.g. "other") are
    rejected with their line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    samples: list[MemeSample] = []
    errors: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                sample = _sample_from_record(rec, path.parent)
            except (json.JSONDecodeError, DatasetError, TypeError) as exc:
                errors.append(f"line {lineno}: {exc}")
                continue
            problems = sample.validate()
            if problems:
                errors.append(f"line {lineno}: {'; '.join(problems)}")
            else:
                samples.append(sample)
    if errors:
        raise DatasetError(f"{path}: {len(errors)} bad record(s): " + " | ".join(errors))
    return samples


def save_dataset(path: str | Path, samples: list[MemeSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# count validation


# Published corpus cell counts: (role, domain, split) for train/val and a
# domain-pooled test column.
EXHVV_TRAINVAL = {
    ("villain", "us_politics", "train"): 1708,
    ("villain", "us_politics", "val"): 217,
    ("villain", "covid19", "train"): 654,
    ("villain", "covid19", "val"): 78,
    ("victim", "us_politics", "train"): 531,
    ("victim", "us_politics", "val"): 71,
    ("victim", "covid19", "train"): 357,
    ("victim", "covid19", "val"): 47,
    ("hero", "us_politics", "train"): 276,
    ("hero", "us_politics", "val"): 35,
    ("hero", "covid19", "train"): 185,
    ("hero", "covid19", "val"): 20,
}
EXHVV_TEST = {"villain": 347, "victim": 104, "hero": 50}
EXHVV_ROLE_TOTALS = {"villain": 3004, "victim": 1110, "hero": 566}
EXHVV_TOTAL = 4680


@dataclass
class CountTable:
    """Sample counts per (role, split, domain) with marginal helpers."""

    cells: dict[tuple[str, str, str], int]

    def cell(self, role: str, split: str, domain: str) -> int:
        return self.cells.get((role, split, domain), 0)

    def role_total(self, role: str) -> int:
        return sum(n for (r, _, _), n in self.cells.items() if r == role)

    def split_total(self, split: str) -> int:
        return sum(n for (_, s, _), n in self.cells.items() if s == split)

    def total(self) -> int:
        return sum(self.cells.values())

    def mismatches_vs_exhvv(self) -> list[str]:
        """Differences against the published count table, one per cell."""
        diffs = []
        for (role, domain, split), expected in EXHVV_TRAINVAL.items():
            got = self.cell(role, split, domain)
            if got != expected:
                diffs.append(f"{role}/{domain}/{split}: expected {expected}, got {got}")
        for role, expected in EXHVV_TEST.items():
            got = sum(self.cell(role, "test", d) for d in DOMAINS)
            if got != expected:
                diffs.append(f"{role}/test: expected {expected}, got {got}")
        for role, expected in EXHVV_ROLE_TOTALS.items():
            got = self.role_total(role)
            if got != expected:
                diffs.append(f"{role} total: expected {expected}, got {got}")
        if self.total() != EXHVV_TOTAL:
            diffs.append(f"grand total: expected {EXHVV_TOTAL}, got {self.total()}")
        return diffs


def validate_counts(samples: list[MemeSample], expect_exhvv: bool = False) -> CountTable:
    counts = Counter((s.role, s.split, s.domain) for s in samples)
    table = CountTable(dict(counts))
    if expect_exhvv:
        diffs = table.mismatches_vs_exhvv()
        if diffs:
            raise DatasetError("count table mismatch: " + "; ".join(diffs))
    return table


# ---------------------------------------------------------------------------
# vocabulary and model inputs


class Vocabulary:
    """Bijective token -> id map over ids 6.., with six fixed reserved ids."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(RESERVED_TOKENS) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            dupes = [t for t, n in Counter(self.id_to_token).items() if n > 1]
            raise ValueError(f"duplicate tokens in vocabulary: {dupes}")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def encode(self, text: str) -> list[int]:
        """Encode raw text; whitespace-delimited reserved markers such as
        "[SEP]" map to their reserved ids instead of being split up."""
        ids: list[int] = []
        for chunk in text.split():
            if chunk in RESERVED_TOKENS:
                ids.append(self.token_to_id[chunk])
            else:
                ids.extend(self.id(t) for t in tokenize(chunk))
        return ids

    def decode(self, ids: list[int], keep_markers: bool = False) -> str:
        toks = []
        for i in ids:
            t = self.id_to_token[i]
            if i < N_RESERVED and not keep_markers:
                continue
            toks.append(t)
        return " ".join(toks)

    @classmethod
    def build(cls, samples: list[MemeSample], extra_tokens: list[str] | None = None) -> "Vocabulary":
        """Collect tokens from the training split only; everything else maps
        to UNK at encode time. Prompt-template words and role names are
        always included so prompts never degrade to UNK."""
        seen: dict[str, None] = {}
        for tok in tokenize("Generate explanation for as :"):
            seen.setdefault(tok, None)
        for role in ROLES:
            seen.setdefault(role, None)
        for tok in extra_tokens or ():
            seen.setdefault(tok, None)
        for s in samples:
            if s.split != "train":
                continue
            for text in (s.ocr_text, s.caption, s.entity, *s.explanations):
                for tok in tokenize(text):
                    seen.setdefault(tok, None)
        # drop anything colliding with a reserved marker (tokenize output
        # never contains brackets-with-letters as one token, but be safe)
        tokens = [t for t in seen if t not in RESERVED_TOKENS]
        return cls(tokens)


@dataclass(frozen=True)
class SequencePairInput:
    """Token ids shaped [CLS] A [SEP] B [SEP], A = OCR text, B = entity."""

    token_ids: tuple[int, ...]
    a_length: int
    b_length: int

    def __len__(self) -> int:
        return len(self.token_ids)


def build_pair_input(ocr_text: str, entity: str, vocab: Vocabulary) -> SequencePairInput:
    a = vocab.encode_tokens(tokenize(ocr_text))
    b = vocab.encode_tokens(tokenize(entity))
    ids = [CLS_ID, *a, SEP_ID, *b, SEP_ID]
    return SequencePairInput(tuple(ids), len(a), len(b))


def truncate_pair(pair: SequencePairInput, max_len: int) -> tuple[SequencePairInput, int, int]:
    """Shrink a pair input to max_len, trimming B-side tokens first, then
    A-side. Returns (pair, dropped_a, dropped_b)."""
    over = len(pair) - max_len
    if over <= 0:
        return pair, 0, 0
    drop_b = min(pair.b_length, over)
    drop_a = min(pair.a_length, over - drop_b)
    if len(pair) - drop_a - drop_b > max_len:
        raise ValueError(f"cannot fit pair input of length {len(pair)} into {max_len}")
    a_ids = pair.token_ids[1 : 1 + pair.a_length - drop_a]
    b_start = 2 + pair.a_length
    b_ids = pair.token_ids[b_start : b_start + pair.b_length - drop_b]
    new = SequencePairInput((CLS_ID, *a_ids, SEP_ID, *b_ids, SEP_ID),
                            len(a_ids), len(b_ids))
    return new, drop_a, drop_b


@dataclass(frozen=True)
class Prompt:
    """Rendered generation prompt plus its token ids."""

    text: str
    token_ids: tuple[int, ...]


def render_prompt(entity: str, role: str, ocr_text: str, caption: str,
                  include_caption: bool = True) -> str:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    if include_caption:
        return PROMPT_TEMPLATE.format(entity=entity, role=role, ocr_text=ocr_text,
                                      caption=caption)
    return PROMPT_TEMPLATE_NO_CAPTION.format(entity=entity, role=role, ocr_text=ocr_text)


def build_prompt(entity: str, role: str, ocr_text: str, caption: str,
                 vocab: Vocabulary, include_caption: bool = True) -> Prompt:
    text = render_prompt(entity, role, ocr_text, caption, include_caption)
    return Prompt(text, tuple(vocab.encode(text)))


def parse_prompt(text: str) -> tuple[str, str, str, str]:
    """Invert render_prompt. Exact recovery holds when no field contains
    ": " or " [SEP] " as a literal substring."""
    prefix = "Generate explanation for "
    if not text.startswith(prefix) or not text.endswith(" [SEP]"):
        raise ValueError("not a rendered prompt")
    head, _, tail = text[len(prefix):].partition(": ")
    entity, _, role = head.rpartition(" as ")
    parts = tail[: -len(" [SEP]")].split(" [SEP] ")
    ocr_text = parts[0]
    caption = parts[1] if len(parts) > 1 else ""
    return entity, role, ocr_text, caption


def encode_explanation(text: str, vocab: Vocabulary) -> list[int]:
    """Explanation target ids, bracketed by BOS and EOS."""
    return [BOS_ID, *vocab.encode_tokens(tokenize(text)), EOS_ID]
