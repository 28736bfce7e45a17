"""Template grammar behind the synthetic dataset.

Each snippet instantiates "<verb> the <object> ." with an action drawn
from a fixed cycle (object persists across the video), mirroring the
step-by-step structure of household instruction videos: a picked-up
object gets washed, put down, and so on.
"""

from __future__ import annotations

# Cycle order defines the scripted next action: pick up -> wash -> ...
ACTIONS = ("pick up", "wash", "put down", "walk to", "open", "close", "heat", "slice")
OBJECTS = (
    "mug",
    "apple",
    "knife",
    "rag",
    "plate",
    "pan",
    "lamp",
    "fridge",
    "coffee maker",
    "sink",
    "tub",
)
ROOMS = ("kitchen", "bathroom", "bedroom", "living room", "office", "garage")

_ROOM_OF = {
    "mug": "kitchen",
    "apple": "kitchen",
    "knife": "kitchen",
    "rag": "bathroom",
    "plate": "kitchen",
    "pan": "kitchen",
    "lamp": "living room",
    "fridge": "kitchen",
    "coffee maker": "kitchen",
    "sink": "bathroom",
    "tub": "bathroom",
}


def room_of(obj: str) -> str:
    return _ROOM_OF[obj]


def room_index(obj: str) -> int:
    return ROOMS.index(_ROOM_OF[obj])


def caption_text(action_idx: int, object_idx: int) -> str:
    return f"{ACTIONS[action_idx]} the {OBJECTS[object_idx]} ."


def next_action(action_idx: int) -> int:
    return (action_idx + 1) % len(ACTIONS)


def parse_caption(text: str) -> tuple[int, int] | None:
    """Recover (action_idx, object_idx) from a caption; None if off-grammar."""
    t = " ".join(text.lower().replace(".", " ").split())
    for ai, verb in enumerate(ACTIONS):
        if t.startswith(verb + " the "):
            rest = t[len(verb) + 5 :].strip()
            for oi, obj in enumerate(OBJECTS):
                if rest == obj:
                    return ai, oi
    return None


def terminals() -> set[str]:
    """Every word token the grammar can emit (verbs, objects, 'the', '.')."""
    words: set[str] = {"the", "."}
    for verb in ACTIONS:
        words.update(verb.split())
    for obj in OBJECTS:
        words.update(obj.split())
    return words
