"""Scripted touch sequences used for training, reaction and baseline runs."""
from __future__ import annotations

import itertools

from .sim import TouchEvent, TouchScenario

# contact points of the training runs; the seam side is left out because a
# two-finger touch there barely rises above the noise floor
TRAINING_POSITIONS = (12, 10, 2, 3, 9, 8, 4, 6)
TRAINING_SIDES = ("front", "back", "outside")

DATASET_KINDS = ("two-finger", "four-finger", "two-hands")


def alternating(kind, total_duration=60.0, on=5.0, off=5.0, positions=(10, 2),
                sides=("front",), near_miss_every=0, **settings):
    """Touch for ``on`` seconds, release for ``off``, cycling over contact points.

    The run opens with a release period. Every ``near_miss_every``-th cycle
    (0 disables) the hands approach and hover without touching.
    """
    points = itertools.cycle(itertools.product(positions, sides))
    events = []
    t = off
    k = 0
    while t + on <= total_duration + 1e-9:
        pos, side = next(points)
        k += 1
        contact = not (near_miss_every and k % near_miss_every == 0)
        events.append(TouchEvent(kind, pos, side, round(t, 9), on, contact))
        t += on + off
    return TouchScenario(events=tuple(events), total_duration=total_duration, **settings).validate()


def training_scenarios(minutes=2.0, near_miss_every=4, **settings):
    """One recording per touch kind (two-finger, four-finger, two-hands)."""
    return [alternating(kind, total_duration=60.0 * minutes, positions=TRAINING_POSITIONS,
                        sides=TRAINING_SIDES, near_miss_every=near_miss_every, **settings)
            for kind in DATASET_KINDS]


def reaction_scenario(kind="two-finger", touches=10, on=2.0, off=2.0, **settings):
    """Repeated touches at the 10 and 2 o'clock grip points."""
    settings.setdefault("noise_sigma", 2e-15)
    total = touches * (on + off) + off
    return alternating(kind, total_duration=total, on=on, off=off, positions=(10, 2),
                       sides=("front",), **settings)


def light_touch_sequence(hover_kind="two-hands", **settings):
    """Touches that get lighter and lighter, then a hover without contact.

    Each touch peaks at 55-70% of the running average maximum of a
    threshold that starts from a firm two-hand grip, so every touch still
    crosses a 40% threshold while dragging it down, until the hover alone
    crosses it.
    """
    touches = [
        ("two-hands", 3, "back"),
        ("two-hands", 6, "front"),
        ("two-hands", 6, "back"),
        ("one-hand", 3, "front"),
        ("two-hands", 12, "inside"),
        ("one-hand", 6, "front"),
        ("one-hand", 6, "outside"),
        ("four-finger", 12, "front"),
        ("four-finger", 12, "outside"),
        ("four-finger", 3, "back"),
    ]
    events = []
    t = 2.0
    for kind, pos, side in touches:
        events.append(TouchEvent(kind, pos, side, t, 1.0))
        t += 3.0
    events.append(TouchEvent(hover_kind, 12, "front", t, 1.5, contact=False))
    total = t + 4.0
    return TouchScenario(events=tuple(events), total_duration=total, **settings).validate()
