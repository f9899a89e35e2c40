"""Ternary event images.

A window of events is painted onto an h x w grid initialized to 0.5:
pixels hit by a positive-polarity event become 1.0, negative become 0.0,
and later events overwrite earlier ones at the same pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundsError
from .events import Event, EventWindow


@dataclass(eq=False)
class EventImage:
    """h x w grid with values in {0.0, 0.5, 1.0}."""

    pixels: np.ndarray
    h: int
    w: int
    source_window: int = -1
    fraction_used: float = 1.0


def select_fraction(window: EventWindow, fraction: float) -> list[Event]:
    """Return the most recent ceil(fraction * n) events, in ascending time order."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    events = window.events
    if fraction == 1.0:
        return list(events)
    k = math.ceil(fraction * len(events))
    return list(events[len(events) - k :])


def build_image(
    events: Sequence[Event],
    h: int,
    w: int,
    source_window: int = -1,
    fraction_used: float = 1.0,
) -> EventImage:
    """Paint events (assumed ascending by time) onto a fresh 0.5 grid."""
    pixels = np.full((h, w), 0.5, dtype=np.float64)
    for e in events:
        if not (0 <= e.x < w and 0 <= e.y < h):
            raise BoundsError(f"event at ({e.x}, {e.y}) outside {w}x{h} image")
        pixels[e.y, e.x] = 1.0 if e.rho > 0 else 0.0
    return EventImage(pixels, h, w, source_window, fraction_used)


def image_from_window(
    window: EventWindow, h: int, w: int, fraction: float = 1.0
) -> EventImage:
    """Build the event image for a window, optionally from its newest events only."""
    selected = select_fraction(window, fraction)
    return build_image(
        selected, h, w, source_window=window.sequence_index, fraction_used=fraction
    )


def to_pgm(image: EventImage) -> str:
    """Render as an ASCII PGM (P2): 0 -> 0, 0.5 -> 128, 1 -> 255."""
    levels = np.where(image.pixels == 0.5, 128, np.where(image.pixels > 0.5, 255, 0))
    rows = "\n".join(" ".join(str(v) for v in row) for row in levels.tolist())
    return f"P2\n{image.w} {image.h}\n255\n{rows}\n"


def write_pgm(image: EventImage, path) -> None:
    """Write the PGM rendering of an event image to ``path``."""
    with open(path, "w", encoding="ascii") as f:
        f.write(to_pgm(image))
