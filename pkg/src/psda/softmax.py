"""Semantic likelihood models and the structured observation template.

A SoftmaxModel maps a continuous 2-D position to a categorical
distribution over dictionary labels. Labels may group several underlying
softmax classes (multimodal softmax), which is how range bands and
field-of-view polygons are represented. Spatial models are built once in
a canonical frame (origin, heading along +x) and rigidly transformed to
the reporting frame, so label probabilities are invariant when model and
query point are moved together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

MINERALS = ("calcite", "pyroxene")
MORPHOLOGIES = ("large", "round")

BEARINGS = ("ahead", "behind", "left", "right")
RANGE_BEARING_LABELS = (
    "near_ahead",
    "near_behind",
    "near_left",
    "near_right",
    "far_ahead",
    "far_behind",
    "far_left",
    "far_right",
    "next_to",
    "none_visible",
)
IN_VIEW_LABELS = ("in_view", "none_visible")
NEGATIVE_LABELS = ("in_view", "none_visible")

_BEARING_DIRS = {
    "ahead": np.array([1.0, 0.0]),
    "behind": np.array([-1.0, 0.0]),
    "left": np.array([0.0, 1.0]),
    "right": np.array([0.0, -1.0]),
}


class UnknownLabelError(KeyError):
    """Label not present in the model's dictionary."""


@dataclass(frozen=True)
class Pose:
    """Planar pose; heading in (-pi, pi], 0 along +x, left is +y."""

    position: np.ndarray
    heading: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(2)
        p.setflags(write=False)
        h = float(self.heading)
        if not (-np.pi < h <= np.pi):
            h = float(np.arctan2(np.sin(h), np.cos(h)))
            if h <= -np.pi:
                h = np.pi
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "heading", h)

    @cached_property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.heading), np.sin(self.heading)
        r = np.array([[c, -s], [s, c]])
        r.setflags(write=False)
        return r

    def to_frame(self, points: np.ndarray) -> np.ndarray:
        """World points -> frame coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.position) @ self.rotation

    def from_frame(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.rotation.T + self.position


@dataclass(frozen=True)
class SoftmaxModel:
    """Hybrid likelihood p(label | x) = sum of grouped softmax classes.

    weights: (Hc, n) class weight vectors; biases: (Hc,); labels: the H
    dictionary labels; subclass_map groups class indices under each label
    (None means one class per label in order).
    """

    weights: np.ndarray
    biases: np.ndarray
    labels: tuple[str, ...]
    subclass_map: Optional[tuple[tuple[int, ...], ...]] = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.atleast_1d(np.asarray(self.biases, dtype=float))
        labels = tuple(self.labels)
        if w.shape[0] != b.size:
            raise ValueError("weights/biases class count mismatch")
        if w.shape[0] < 2:
            raise ValueError("need at least two softmax classes")
        groups = self.subclass_map
        if groups is None:
            if len(labels) != w.shape[0]:
                raise ValueError("labels do not match class count")
            groups = tuple((i,) for i in range(len(labels)))
        else:
            groups = tuple(tuple(g) for g in groups)
            if len(groups) != len(labels):
                raise ValueError("subclass_map does not match labels")
            flat = sorted(i for g in groups for i in g)
            if flat != list(range(w.shape[0])):
                raise ValueError("subclass_map must partition all classes")
        if len(labels) < 2:
            raise ValueError("dictionary needs at least two labels")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subclass_map", groups)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @cached_property
    def group_matrix(self) -> np.ndarray:
        g = np.zeros((self.n_labels, self.n_classes))
        for li, idxs in enumerate(self.subclass_map):
            g[li, list(idxs)] = 1.0
        g.setflags(write=False)
        return g

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabelError(label) from None

    def class_logits(self, x: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return pts @ self.weights.T + self.biases

    def label_probs(self, x: np.ndarray) -> np.ndarray:
        """(P, H) label probabilities; rows sum to 1 exactly."""
        logits = self.class_logits(x)
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        per_label = shifted @ self.group_matrix.T
        return per_label / shifted.sum(axis=1, keepdims=True)

    def label_prob(self, label: str, x: np.ndarray) -> np.ndarray | float:
        idx = self.label_index(label)
        x = np.asarray(x, dtype=float)
        out = self.label_probs(x)[:, idx]
        return float(out[0]) if x.ndim == 1 else out

    def argmax_label(self, x: np.ndarray) -> str:
        probs = self.label_probs(np.asarray(x, dtype=float))
        return self.labels[int(np.argmax(probs[0]))]

    def transformed(self, pose: Pose) -> "SoftmaxModel":
        """Rigidly move the model into `pose`'s frame placement.

        w' = R w and b' = b - w'.t keep p(label | x in new frame placement)
        equal to the canonical probability at the pulled-back point.
        """
        w = self.weights @ pose.rotation.T
        b = self.biases - w @ pose.position
        return SoftmaxModel(w, b, self.labels, self.subclass_map)


def softmax_eval(model: SoftmaxModel, label: str, x: np.ndarray) -> np.ndarray | float:
    """p(label | x), summing grouped classes; max-shifted, overflow-safe."""
    return model.label_prob(label, x)


@dataclass(frozen=True)
class SpatialGeometry:
    """Gains and ranges behind the spatial dictionaries and sensor views.

    Range bands along any bearing: next_to out to `next_to_radius`, near
    to `near_radius`, far to `visible_radius`, none_visible beyond. Band
    envelopes need strictly increasing gains with range order.
    """

    next_to_radius: float = 2.0
    near_radius: float = 8.0
    visible_radius: float = 20.0
    gain_near: float = 0.3
    gain_far: float = 1.2
    gain_none: float = 2.0
    fov_sharpness: float = 5.0
    detector_depth: float = 3.0
    detector_width: float = 3.0
    camera_depth: float = 5.0
    camera_near_halfwidth: float = 0.5
    camera_far_halfwidth: float = 2.5
    drone_view_halfwidth: float = 5.0

    def detector_polygon(self) -> np.ndarray:
        d, hw = self.detector_depth, 0.5 * self.detector_width
        return np.array([[0.0, -hw], [d, -hw], [d, hw], [0.0, hw]])

    def camera_polygon(self) -> np.ndarray:
        return np.array(
            [
                [0.0, -self.camera_near_halfwidth],
                [self.camera_depth, -self.camera_far_halfwidth],
                [self.camera_depth, self.camera_far_halfwidth],
                [0.0, self.camera_near_halfwidth],
            ]
        )

    def drone_polygon(self) -> np.ndarray:
        h = self.drone_view_halfwidth
        return np.array([[-h, -h], [h, -h], [h, h], [-h, h]])


DEFAULT_GEOMETRY = SpatialGeometry()


def _canonical_range_bearing(geom: SpatialGeometry) -> SoftmaxModel:
    g_near, g_far, g_none = geom.gain_near, geom.gain_far, geom.gain_none
    if not (0.0 < g_near < g_far < g_none):
        raise ValueError("range-band gains must increase with range order")
    b_next = 0.0
    b_near = b_next - g_near * geom.next_to_radius
    b_far = b_near + geom.near_radius * (g_near - g_far)
    b_none = b_far + geom.visible_radius * (g_far - g_none)
    weights, biases = [], []
    for bearing in BEARINGS:  # classes 0..3: near
        weights.append(g_near * _BEARING_DIRS[bearing])
        biases.append(b_near)
    for bearing in BEARINGS:  # classes 4..7: far
        weights.append(g_far * _BEARING_DIRS[bearing])
        biases.append(b_far)
    weights.append(np.zeros(2))  # class 8: next_to
    biases.append(b_next)
    for bearing in BEARINGS:  # classes 9..12: grouped under none_visible
        weights.append(g_none * _BEARING_DIRS[bearing])
        biases.append(b_none)
    groups = tuple((i,) for i in range(9)) + ((9, 10, 11, 12),)
    return SoftmaxModel(
        np.stack(weights), np.array(biases), RANGE_BEARING_LABELS, groups
    )


def polygon_softmax(
    vertices: np.ndarray,
    sharpness: float,
    labels: tuple[str, str] = IN_VIEW_LABELS,
) -> SoftmaxModel:
    """Two-label region model: interior class vs one class per edge.

    `vertices` is a convex CCW polygon in canonical frame coordinates.
    The first label collects the interior class, the second all edge
    classes, so the pair always sums to 1.
    """
    verts = np.asarray(vertices, dtype=float)
    n_edges = len(verts)
    weights = [np.zeros(2)]
    biases = [0.0]
    for i in range(n_edges):
        v1, v2 = verts[i], verts[(i + 1) % n_edges]
        d = v2 - v1
        normal = np.array([d[1], -d[0]])
        normal /= np.linalg.norm(normal)
        weights.append(sharpness * normal)
        biases.append(-sharpness * float(normal @ v1))
    groups = ((0,), tuple(range(1, n_edges + 1)))
    return SoftmaxModel(np.stack(weights), np.array(biases), labels, groups)


def build_spatial_model(
    frame_pose: Pose,
    observation_type: str,
    geom: SpatialGeometry = DEFAULT_GEOMETRY,
    fov_polygon: Optional[np.ndarray] = None,
) -> SoftmaxModel:
    """Dictionary likelihood anchored at a frame of reference.

    range_bearing: the 10-label near/far x bearing dictionary, rotated and
    shifted to the frame pose. in_view: 2-label polygon model over the
    frame's field of view (defaults to the rover camera footprint).
    """
    if observation_type == "range_bearing":
        return _canonical_range_bearing(geom).transformed(frame_pose)
    if observation_type == "in_view":
        poly = geom.camera_polygon() if fov_polygon is None else np.asarray(fov_polygon)
        return polygon_softmax(poly, geom.fov_sharpness).transformed(frame_pose)
    raise ValueError(f"unknown observation type: {observation_type}")


def detector_likelihood(
    rover_pose: Pose, geom: SpatialGeometry = DEFAULT_GEOMETRY
) -> SoftmaxModel:
    """Detection / no-detection likelihood over the onboard detector footprint."""
    model = polygon_softmax(
        geom.detector_polygon(), geom.fov_sharpness, labels=("detection", "no_detection")
    )
    return model.transformed(rover_pose)


def point_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Containment test for a convex CCW polygon; boundary counts as inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    verts = np.asarray(vertices, dtype=float)
    inside = np.ones(len(pts), dtype=bool)
    for i in range(len(verts)):
        v1, v2 = verts[i], verts[(i + 1) % len(verts)]
        d = v2 - v1
        cross = d[0] * (pts[:, 1] - v1[1]) - d[1] * (pts[:, 0] - v1[0])
        inside &= cross >= -1e-12
    return inside


@dataclass(frozen=True)
class Frame:
    """Frame of reference anchoring a spatial label."""

    kind: str  # rover | landmark | drone_fov
    id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("rover", "landmark", "drone_fov"):
            raise ValueError(f"unknown frame kind: {self.kind}")
        if self.kind == "landmark" and not self.id:
            raise ValueError("landmark frame needs an id")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.id is not None:
            d["id"] = self.id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Frame":
        return cls(kind=d["kind"], id=d.get("id"))


def dictionary_for_frame(kind: str) -> tuple[str, ...]:
    return IN_VIEW_LABELS if kind == "drone_fov" else RANGE_BEARING_LABELS


@dataclass(frozen=True)
class SemanticObservation:
    """One structured report: (existence) (mineral) is (label) (frame)."""

    polarity: str
    mineral: str
    spatial_label: str
    frame: Frame
    time_index: int = 0

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"bad polarity: {self.polarity}")
        if self.mineral not in MINERALS:
            raise ValueError(f"unknown mineral: {self.mineral}")
        labels = dictionary_for_frame(self.frame.kind)
        if self.spatial_label not in labels:
            raise ValueError(
                f"label {self.spatial_label!r} not in the {self.frame.kind} dictionary"
            )
        if self.polarity == "negative" and self.spatial_label not in NEGATIVE_LABELS:
            raise ValueError("negative reports pair only with view labels")

    def to_dict(self) -> dict:
        return {
            "polarity": self.polarity,
            "mineral": self.mineral,
            "label": self.spatial_label,
            "frame": self.frame.to_dict(),
            "k": self.time_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticObservation":
        return cls(
            polarity=d["polarity"],
            mineral=d["mineral"],
            spatial_label=d["label"],
            frame=Frame.from_dict(d["frame"]),
            time_index=int(d.get("k", 0)),
        )


@dataclass(frozen=True)
class TargetMeta:
    """Per-target bookkeeping used for candidate resolution."""

    id: str
    mineral: str
    detected: bool = False


def resolve_candidates(
    obs: SemanticObservation, targets: Sequence[TargetMeta]
) -> list[str]:
    """Undetected targets a positive report could refer to.

    Reports omit morphology, so a mineral sighting is ambiguous between
    both specimens of that mineral; an empty result means the datum can
    only be clutter.
    """
    if obs.polarity != "positive":
        raise ValueError("candidate resolution applies to positive reports")
    return [t.id for t in targets if not t.detected and t.mineral == obs.mineral]
