"""Synthetic tagging corpus generator for the convergence and
learning-curve harnesses.

Sentences are built from context templates with typed entity slots.
Entity surface forms are pseudo-words assembled from syllables; a slice
of them is shared between the two entity types, so the type is only
resolvable from context, and another slice is reserved for the dev/test
splits so the model must generalize to unseen mentions. Everything is
driven by a single seed; the same seed always produces byte-identical
splits.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import make_rng

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "gl", "kr", "pl", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ae", "ia", "ou"]
_CODAS = ["", "", "l", "n", "r", "s", "x", "ne", "mab", "din", "ol"]

_DISEASE_HEADS = ["syndrome", "disease", "deficiency", "carcinoma", "dystrophy", "fibrosis",
                  "variant", "complex", "factor", "deficit"]
_CHEMICAL_HEADS = ["acid", "chloride", "inhibitor", "compound", "oxide", "ester",
                   "variant", "complex", "factor", "reagent"]

_DISEASE_TEMPLATES = [
    "{R} patients with {E} were enrolled in the {R} study",
    "the diagnosis of {E} remains difficult in {R} children",
    "we report {N} {R} new cases of {E} in this {R} cohort",
    "mutations in this {R} gene cause {E} and related disorders",
    "clinical features of {E} include fever and {R} fatigue",
    "early screening for {E} reduced mortality by {N} percent",
    "the patient had a {R} family history of {E}",
    "{E} was observed in {N} of the {R} subjects",
    "symptoms of {E} appeared after the {R} second week",
    "{R} therapy improved outcomes for {R} subjects with {E}",
    "this variant is associated with {E} in {R} adults",
    "severe {E} required {R} hospital admission",
]

_CHEMICAL_TEMPLATES = [
    "{R} exposure to {E} increased the risk of {R} adverse events",
    "treatment with {E} was administered for {N} {R} days",
    "the {R} solution contained {N} mg of {E} per dose",
    "{E} inhibited cell growth in {R} culture",
    "we measured {R} serum levels of {E} in all {R} groups",
    "prolonged use of {E} caused {R} elevated enzyme levels",
    "animals received {E} by daily {R} injection",
    "the {R} binding affinity of {E} was determined in vitro",
    "{R} residues of {E} were detected in the {R} samples",
    "{E} concentrations declined after {N} {R} hours",
    "tolerance to {E} developed within {R} weeks",
    "high doses of {E} were toxic in {R} mice",
]

_MIXED_TEMPLATES = [
    "treatment of {D} with {C} showed {R} promising results",
    "{C} reduced the severity of {D} in {R} trials",
    "patients with {D} responded poorly to {R} {C}",
    "the effect of {C} on {D} progression was {R} small",
]

_FILLER_TEMPLATES = [
    "the {R} results were consistent with {R} previous reports",
    "all samples were processed within {N} hours of {R} collection",
    "{R} data were analyzed using {R} standard statistical methods",
    "the control group received {R} placebo throughout the trial",
    "no significant differences were observed between {R} groups",
    "follow up visits were scheduled every {N} {R} weeks",
    "written consent was obtained from all {R} participants",
    "the {R} committee approved the protocol before enrollment",
]


@dataclass
class SynthSpec:
    seed: int = 20240501
    n_train: int = 350
    n_dev: int = 150
    n_test: int = 150
    n_stems: int = 700             # distinct single-token pseudo-words for entities
    n_entities: int = 260          # surface forms per entity type
    shared_fraction: float = 0.6   # stems usable by both entity types
    unseen_fraction: float = 0.6   # entities reserved for dev/test sentences
    head_rate: float = 0.35        # entities closed by a (partly shared) head word
    filler_rate: float = 0.15      # sentences with no entity at all
    n_rare: int = 1000             # long-tail modifier vocabulary size
    rare_rate: float = 0.9         # chance a {R} slot emits a rare modifier


def _pseudo_word(rng, syllables: int) -> str:
    parts = []
    for _ in range(syllables):
        parts.append(_ONSETS[rng.integers(len(_ONSETS))])
        parts.append(_VOWELS[rng.integers(len(_VOWELS))])
    parts.append(_CODAS[rng.integers(len(_CODAS))])
    return "".join(parts)


def _make_entities(rng, stems, heads, count, head_rate):
    """Entity surface forms: one or two stems optionally closed by a head word."""
    entities = set()
    while len(entities) < count:
        n_stems = 1 + int(rng.random() < 0.45)
        tokens = [stems[rng.integers(len(stems))] for _ in range(n_stems)]
        if rng.random() < head_rate:
            tokens.append(heads[rng.integers(len(heads))])
        if 1 <= len(tokens) <= 3:
            entities.add(tuple(tokens))
    return sorted(entities)


def _fill(template: str, rng, slots: dict) -> tuple:
    tokens, tags = [], []
    for word in template.split():
        if word in ("{E}", "{D}", "{C}"):
            kind = {"{E}": slots["kind"], "{D}": "Disease", "{C}": "Chemical"}[word]
            entity = slots[kind][rng.integers(len(slots[kind]))]
            for j, tok in enumerate(entity):
                tokens.append(tok)
                tags.append(("B-" if j == 0 else "I-") + kind)
        elif word == "{N}":
            tokens.append(str(int(rng.integers(2, 500))))
            tags.append("O")
        elif word == "{R}":
            if rng.random() < slots["rare_rate"]:
                rare = slots["rare"]
                tokens.append(rare[rng.integers(len(rare))])
                tags.append("O")
        else:
            tokens.append(word)
            tags.append("O")
    return tokens, tags


def _render(sentences) -> str:
    blocks = []
    for tokens, tags in sentences:
        blocks.append("".join(f"{tok}\t{tag}\n" for tok, tag in zip(tokens, tags)))
    return "\n".join(blocks) + ("\n" if blocks else "")


def generate_corpus(spec: SynthSpec) -> dict:
    """Returns {'train': text, 'dev': text, 'test': text} in two-column BIO CoNLL."""
    rng = make_rng(spec.seed)
    stems = []
    seen = set()
    while len(stems) < spec.n_stems + spec.n_rare:
        word = _pseudo_word(rng, syllables=1 + int(rng.random() < 0.5))
        if word not in seen:
            seen.add(word)
            stems.append(word)
    rare = stems[spec.n_stems :]
    stems = stems[: spec.n_stems]
    n_shared = int(spec.shared_fraction * len(stems))
    shared = stems[:n_shared]
    half = (len(stems) - n_shared) // 2
    disease_stems = shared + stems[n_shared : n_shared + half]
    chemical_stems = shared + stems[n_shared + half :]

    disease = _make_entities(rng, disease_stems, _DISEASE_HEADS, spec.n_entities,
                             spec.head_rate)
    chemical = _make_entities(rng, chemical_stems, _CHEMICAL_HEADS, spec.n_entities,
                              spec.head_rate)

    def split_lexicon(entities):
        entities = list(entities)
        rng.shuffle(entities)
        n_unseen = int(spec.unseen_fraction * len(entities))
        return entities[n_unseen:], entities[:n_unseen]  # (train-visible, heldout-only)

    disease_train, disease_heldout = split_lexicon(disease)
    chemical_train, chemical_heldout = split_lexicon(chemical)

    def make_split(count, for_train: bool):
        d_lex = disease_train if for_train else disease_train + disease_heldout
        c_lex = chemical_train if for_train else chemical_train + chemical_heldout
        base = {"Disease": d_lex, "Chemical": c_lex, "rare": rare, "rare_rate": spec.rare_rate}
        sentences = []
        for _ in range(count):
            roll = rng.random()
            if roll < spec.filler_rate:
                template = _FILLER_TEMPLATES[rng.integers(len(_FILLER_TEMPLATES))]
                slots = {"kind": None, **base}
            elif roll < spec.filler_rate + 0.08:
                template = _MIXED_TEMPLATES[rng.integers(len(_MIXED_TEMPLATES))]
                slots = {"kind": None, **base}
            elif rng.random() < 0.5:
                template = _DISEASE_TEMPLATES[rng.integers(len(_DISEASE_TEMPLATES))]
                slots = {"kind": "Disease", **base}
            else:
                template = _CHEMICAL_TEMPLATES[rng.integers(len(_CHEMICAL_TEMPLATES))]
                slots = {"kind": "Chemical", **base}
            sentences.append(_fill(template, rng, slots))
        return sentences

    return {
        "train": _render(make_split(spec.n_train, for_train=True)),
        "dev": _render(make_split(spec.n_dev, for_train=False)),
        "test": _render(make_split(spec.n_test, for_train=False)),
    }


def write_corpus(spec: SynthSpec, out_dir: str) -> dict:
    """Write train/dev/test files into out_dir; returns their paths."""
    import os

    from .fileio import atomic_write_text

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for split, text in generate_corpus(spec).items():
        path = os.path.join(out_dir, f"{split}.conll")
        atomic_write_text(path, text)
        paths[split] = path
    return paths
