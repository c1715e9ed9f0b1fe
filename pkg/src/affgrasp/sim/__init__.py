from .env import Action, EnvConfig, Observation, PlacementError, SceneState, TabletopEnv
from .objects import (
    DRAWER_OBJECT_ID,
    SEEN_OBJECTS,
    UNSEEN_OBJECTS,
    DrawerState,
    SimObject,
    make_object,
)
from .scripted import PlayParams, scripted_play, scripted_play_with_truth
from .teleop import PROTOCOL_VERSION, TeleopClient, TeleopServer

__all__ = [
    "Action",
    "DRAWER_OBJECT_ID",
    "DrawerState",
    "EnvConfig",
    "Observation",
    "PROTOCOL_VERSION",
    "PlacementError",
    "PlayParams",
    "SEEN_OBJECTS",
    "SceneState",
    "SimObject",
    "TabletopEnv",
    "TeleopClient",
    "TeleopServer",
    "UNSEEN_OBJECTS",
    "make_object",
    "scripted_play",
    "scripted_play_with_truth",
]
