"""Deterministic synthetic corpora for demos, tests, and desk-scale runs.

Three generators:

* ``cycle_text``      - a fixed repeating symbol cycle; the next symbol
  is a deterministic function of the current one, so a perfectly
  trained next-step model has zero NLL.
* ``template_text``   - English-like sentences drawn from small word
  lists filled into a fixed template. Local structure (spelling) is
  highly learnable while word choices carry real entropy, which makes
  the corpus a useful stand-in for natural text. Original wordlists,
  dedicated to the public domain.
* ``chord_pianoroll`` - binary scores following a fixed chord
  progression over a small key range, with independent bit-flip noise.

All output is reproducible from the given seed.
"""

from __future__ import annotations

import string

import numpy as np

from .seeding import rng_for

# slot vocabularies with deliberate spelling overlap: a few observed
# characters rarely pin down the word, so reconstruction keeps genuine
# uncertainty even with context on both sides
_ADJ = (
    "old", "bold", "young", "quiet", "tall", "small", "grey", "green",
    "tired", "brave", "pale", "plain",
)
_NOUN = (
    "sailor", "tailor", "painter", "printer", "teacher", "preacher",
    "gardener", "carpenter", "watchman", "fiddler", "doctor", "miller",
)
_VERB = (
    "watched", "washed", "wanted", "carried", "carted", "counted",
    "painted", "planted", "parted", "repaired", "repeated", "remembered",
    "described", "designed", "followed", "founded", "finished", "borrowed",
)
_MATERIAL = (
    "wooden", "woolen", "copper", "silver", "broken", "faded", "carved",
    "painted",
)
_THING = (
    "boat", "coat", "map", "cap", "kettle", "letter", "ladder", "clock",
    "lock", "wall", "bell", "coin",
)
_PREP = ("near", "under", "behind", "beside", "along", "inside")
_LOC = (
    "harbour", "bridge", "orchard", "market", "mill", "river", "window",
    "garden", "tower", "stable",
)


def cycle_text(n_chars: int, n_symbols: int = 20) -> str:
    """The first ``n_symbols`` lowercase letters repeated to length."""
    if not 2 <= n_symbols <= 26:
        raise ValueError("n_symbols must be in [2, 26]")
    cycle = string.ascii_lowercase[:n_symbols]
    reps = n_chars // n_symbols + 1
    return (cycle * reps)[:n_chars]


def template_text(n_chars: int, seed: int = 0) -> str:
    """English-like sentences, lowercase a-z plus space and period."""
    rng = rng_for(seed, "template-text")

    def pick(words):
        return words[rng.integers(len(words))]

    parts = []
    total = 0
    while total < n_chars:
        sentence = "the {} {} {} the {} {} {} the {}. ".format(
            pick(_ADJ), pick(_NOUN), pick(_VERB), pick(_MATERIAL),
            pick(_THING), pick(_PREP), pick(_LOC),
        )
        parts.append(sentence)
        total += len(sentence)
    return "".join(parts)[:n_chars]


_CHORDS = (
    (1, 0, 0, 1, 0, 0, 0, 1),
    (1, 0, 0, 0, 1, 0, 1, 0),
    (0, 1, 0, 0, 1, 0, 0, 1),
    (0, 0, 1, 0, 0, 1, 0, 1),
)


def chord_pianoroll(
    n_scores: int, steps: int, seed: int = 0, dim: int = 8, noise: float = 0.1,
    hold: int = 2,
) -> list[np.ndarray]:
    """Binary scores: a fixed chord progression plus bit-flip noise.

    Each chord is held for ``hold`` steps; every bit is flipped
    independently with probability ``noise``. ``dim`` may exceed the
    chord width; extra channels stay silent (up to noise).
    """
    if dim < len(_CHORDS[0]):
        raise ValueError(f"dim must be >= {len(_CHORDS[0])}")
    scores = []
    for s in range(n_scores):
        rng = rng_for(seed, "chords", s)
        phase = int(rng.integers(len(_CHORDS)))
        base = np.zeros((steps, dim))
        for t in range(steps):
            chord = _CHORDS[(phase + t // hold) % len(_CHORDS)]
            base[t, : len(chord)] = chord
        flips = rng.random((steps, dim)) < noise
        scores.append(np.abs(base - flips.astype(np.float64)))
    return scores
