"""Policy observation: layout, frame stacking, construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FRAME_FEATURES = (
    "v_x", "v_y", "a_x", "a_y", "psi", "psi_dot", "beta",
    "base_steer", "base_speed", "applied_steer_prev", "applied_speed_prev",
)
N_STACK = 3


@dataclass(frozen=True)
class ObservationLayout:
    """Fixed layout of the flat observation vector.

    [lidar ranges | body-frame waypoints (n_waypoints x 2, row-major) |
     vehicle feature frames, oldest first (n_stack x len(FRAME_FEATURES))]
    """

    n_beams: int = 1080
    n_waypoints: int = 20
    n_stack: int = N_STACK
    frame_features: tuple = FRAME_FEATURES

    @property
    def frame_dim(self) -> int:
        return len(self.frame_features)

    @property
    def dim(self) -> int:
        return (self.n_beams + 2 * self.n_waypoints
                + self.n_stack * self.frame_dim)

    @property
    def lidar_slice(self):
        return slice(0, self.n_beams)

    @property
    def waypoint_slice(self):
        return slice(self.n_beams, self.n_beams + 2 * self.n_waypoints)

    def describe(self) -> str:
        """Stable JSON descriptor (guards checkpoint compatibility)."""
        return json.dumps({
            "version": 1,
            "n_beams": self.n_beams,
            "n_waypoints": self.n_waypoints,
            "n_stack": self.n_stack,
            "frame_features": list(self.frame_features),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ObservationLayout":
        d = json.loads(text)
        return cls(n_beams=d["n_beams"], n_waypoints=d["n_waypoints"],
                   n_stack=d["n_stack"],
                   frame_features=tuple(d["frame_features"]))


@dataclass
class ObservationBuilder:
    """Assembles observation vectors, stacking vehicle-feature frames.

    Only the vehicle features are stacked; lidar and relative waypoints
    enter with the current frame only. On episode start the history is
    padded by repeating the first frame and the previous applied action
    defaults to the base action.
    """

    layout: ObservationLayout = field(default_factory=ObservationLayout)
    _frames: list = field(default_factory=list)

    def reset(self):
        self._frames = []

    def _frame(self, state, accels, a_base, a_applied_prev):
        v_x, v_y = state.v_body
        return np.array([
            v_x, v_y, accels[0], accels[1],
            state.psi, state.psi_dot, state.beta,
            a_base.steer, a_base.speed,
            a_applied_prev.steer, a_applied_prev.speed,
        ])

    def build(self, scan_ranges, rel_waypoints, state, accels, a_base,
              a_applied_prev) -> np.ndarray:
        """Concatenate the current inputs into the flat observation."""
        lay = self.layout
        frame = self._frame(state, accels, a_base, a_applied_prev)
        if not self._frames:
            self._frames = [frame] * lay.n_stack
        else:
            self._frames = self._frames[1:] + [frame]

        obs = np.concatenate([
            np.asarray(scan_ranges, dtype=np.float64),
            np.asarray(rel_waypoints, dtype=np.float64).reshape(-1),
            np.concatenate(self._frames),
        ])
        if obs.shape[0] != lay.dim:
            raise ValueError(
                f"observation dimension {obs.shape[0]} != layout {lay.dim}"
            )
        if not np.all(np.isfinite(obs)):
            raise ValueError("non-finite values in observation inputs")
        return obs
