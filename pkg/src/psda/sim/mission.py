"""Survey mission loop: kinematics, observation generation, fusion, metrics.

One mission is a deterministic function of (scenario, seed). The driver
exposes two primitives so the offline loop and the interactive bridge
share identical code paths:

* advance(): one time step (move, detector fuse, replan triggers, metrics).
* observe(obs): fuse one human report at the current step and replan.

Live missions generate astronaut reports between advances; replay
missions inject a recorded observation log instead. Fusion randomness is
keyed off (seed, step, stage) rather than a shared stream, so both modes
produce bitwise-identical records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..association import (
    AssociationConfig,
    AssociationResult,
    greedy_psda,
    naive_da,
    no_da,
    psda_multi,
)
from ..fusion import AllZeroLikelihoodError, FusionConfig, lwis
from ..gaussmix import Gaussian, GaussianMixture, gm_map, gm_pdf, gm_to_dict, mix, runnalls_compress
from ..softmax import (
    MINERALS,
    RANGE_BEARING_LABELS,
    Frame,
    Pose,
    SemanticObservation,
    TargetMeta,
    build_spatial_model,
    detector_likelihood,
    point_in_polygon,
    resolve_candidates,
)
from .planner import astar_grid
from .world import HumanModel, MissionConfig, ScenarioConfig, WorldConfig, initial_beliefs

POSITIVE_RB_LABELS = tuple(l for l in RANGE_BEARING_LABELS if l != "none_visible")


class MissionEnded(RuntimeError):
    """Attempt to act on a finished mission."""


class AllDetectedError(RuntimeError):
    """No undetected target left to average over."""


# ---------------------------------------------------------------------------
# Kinematics helpers.
# ---------------------------------------------------------------------------


def lawnmower_path(extent: float, lane_spacing: float) -> np.ndarray:
    """Serpentine scan polyline covering the site, closed into a loop."""
    lanes = np.arange(lane_spacing / 2.0, extent, lane_spacing)
    pts = []
    for i, y in enumerate(lanes):
        xs = (0.0, extent) if i % 2 == 0 else (extent, 0.0)
        pts.append((xs[0], y))
        pts.append((xs[1], y))
    pts.append(pts[0])
    return np.asarray(pts)


def _point_along(polyline: np.ndarray, arc: float) -> tuple[np.ndarray, float]:
    segs = np.diff(polyline, axis=0)
    lens = np.linalg.norm(segs, axis=1)
    total = float(lens.sum())
    arc = float(arc) % total
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    i = min(int(np.searchsorted(cum, arc, side="right")) - 1, len(segs) - 1)
    frac = 0.0 if lens[i] == 0.0 else (arc - cum[i]) / lens[i]
    heading = float(np.arctan2(segs[i][1], segs[i][0]))
    return polyline[i] + frac * segs[i], heading


# ---------------------------------------------------------------------------
# Mission state and record.
# ---------------------------------------------------------------------------


@dataclass
class MissionState:
    k: int
    rover: Pose
    drone: Pose
    beliefs: dict[str, GaussianMixture]
    detected: dict[str, bool]
    goal: Optional[np.ndarray] = None
    path: list[np.ndarray] = field(default_factory=list)
    distance: float = 0.0
    ended: bool = False
    success: bool = False
    end_reason: str = ""
    delta: dict[str, list[float]] = field(default_factory=dict)
    detected_at: dict[str, int] = field(default_factory=dict)
    gamma0_events: list[dict] = field(default_factory=list)
    observations: list[dict] = field(default_factory=list)
    replans: list[dict] = field(default_factory=list)
    fusion_errors: int = 0

    def undetected_ids(self) -> list[str]:
        return [tid for tid, d in self.detected.items() if not d]


@dataclass(frozen=True)
class MissionRecord:
    """Everything a finished run produced, JSON-stable for reports."""

    seed: int
    modality: str
    success: bool
    end_reason: str
    steps: int
    distance: float
    detected: dict[str, bool]
    detected_at: dict[str, int]
    delta: dict[str, list[float]]
    gamma0_events: list[dict]
    observations: list[dict]
    replans: list[dict]
    fusion_errors: int
    target_truth: dict[str, list[float]]
    final_beliefs: dict[str, dict]
    snapshots: Optional[dict[str, list[dict]]] = None

    @property
    def detected_count(self) -> int:
        return sum(self.detected.values())

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "modality": self.modality,
            "success": self.success,
            "end_reason": self.end_reason,
            "steps": self.steps,
            "distance": self.distance,
            "detected": self.detected,
            "detected_at": self.detected_at,
            "delta": self.delta,
            "gamma0_events": self.gamma0_events,
            "observations": self.observations,
            "replans": self.replans,
            "fusion_errors": self.fusion_errors,
            "target_truth": self.target_truth,
            "final_beliefs": self.final_beliefs,
        }
        if self.snapshots is not None:
            out["snapshots"] = self.snapshots
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MissionRecord":
        return cls(**{**d, "snapshots": d.get("snapshots")})


# ---------------------------------------------------------------------------
# Observation generation (simulated astronaut) and ground-truth grading.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ViewObject:
    mineral: str
    xy: np.ndarray
    is_target: bool
    id: str


def _imager_polygon(state: MissionState, scenario: ScenarioConfig, imager: str):
    geom = scenario.geometry
    if imager == "rover":
        pose = state.rover
        poly = geom.camera_polygon()
    else:
        pose = Pose(state.drone.position, 0.0)
        poly = geom.drone_polygon()
    world_poly = pose.from_frame(poly)
    return pose, world_poly


def objects_in_view(
    state: MissionState, scenario: ScenarioConfig, imager: str
) -> list[_ViewObject]:
    """Undetected targets and distractor rocks inside the imager footprint,
    closest first."""
    pose, world_poly = _imager_polygon(state, scenario, imager)
    objs: list[_ViewObject] = []
    for t in scenario.world.targets:
        if not state.detected[t.id]:
            objs.append(_ViewObject(t.mineral, t.xy, True, t.id))
    for i, d in enumerate(scenario.world.distractors):
        objs.append(_ViewObject(d.mineral, d.xy, False, f"rock_{i}"))
    if not objs:
        return []
    pts = np.stack([o.xy for o in objs])
    inside = point_in_polygon(pts, world_poly)
    origin = pose.position
    visible = [o for o, ok in zip(objs, inside) if ok]
    visible.sort(key=lambda o: float(np.linalg.norm(o.xy - origin)))
    return visible


def _nearest_landmark(world: WorldConfig, xy: np.ndarray, radius: float):
    best, best_d = None, radius
    for lm in world.landmarks:
        d = float(np.linalg.norm(lm.xy - xy))
        if d < best_d:
            best, best_d = lm, d
    return best


def correct_description(
    obj: _ViewObject, imager: str, state: MissionState, scenario: ScenarioConfig
) -> tuple[str, str, Frame]:
    """The report a careful astronaut would file about this object."""
    if imager == "rover":
        model = build_spatial_model(state.rover, "range_bearing", scenario.geometry)
        return obj.mineral, model.argmax_label(obj.xy), Frame("rover")
    lm = _nearest_landmark(
        scenario.world, obj.xy, scenario.mission.landmark_use_radius
    )
    if lm is None:
        return obj.mineral, "in_view", Frame("drone_fov")
    model = build_spatial_model(
        Pose(lm.xy, 0.0), "range_bearing", scenario.geometry
    )
    return obj.mineral, model.argmax_label(obj.xy), Frame("landmark", lm.id)


def _correct_set(state, scenario, imager, visible) -> set:
    return {correct_description(o, imager, state, scenario) for o in visible}


def simulate_human(
    state: MissionState,
    scenario: ScenarioConfig,
    hm: HumanModel,
    rng: np.random.Generator,
    imager: str,
) -> Optional[SemanticObservation]:
    """One (possibly erroneous) astronaut report for the given imager.

    Fires on cadence steps with the configured probability. The correct
    channel describes the closest visible rock of interest, or files a
    negative nothing-visible report; the error channel corrupts the label
    or invents a phantom sighting, never a false negative.
    """
    if state.k == 0 or state.k % hm.cadence != 0:
        return None
    if rng.random() >= hm.fire_probability:
        return None
    visible = objects_in_view(state, scenario, imager)
    if not visible:
        mineral = MINERALS[int(rng.integers(2))]
        neg_frame = Frame("rover") if imager == "rover" else Frame("drone_fov")
        return SemanticObservation(
            "negative", mineral, "none_visible", neg_frame, state.k
        )
    mineral, label, frame = correct_description(visible[0], imager, state, scenario)
    if rng.random() >= hm.true_fp(imager):
        return SemanticObservation("positive", mineral, label, frame, state.k)
    correct = _correct_set(state, scenario, imager, visible)
    for _ in range(20):
        phantom = rng.random() < hm.phantom_fraction
        if phantom or frame.kind == "drone_fov":
            bad_mineral = MINERALS[1 - MINERALS.index(mineral)]
            bad_label = label
        else:
            others = [l for l in POSITIVE_RB_LABELS if l != label]
            bad_mineral = mineral
            bad_label = others[int(rng.integers(len(others)))]
        if (bad_mineral, bad_label, frame) not in correct:
            return SemanticObservation(
                "positive", bad_mineral, bad_label, frame, state.k
            )
    return None


def grade_observation(
    obs: SemanticObservation, state: MissionState, scenario: ScenarioConfig
) -> bool:
    """True when the report is erroneous given ground truth at this step."""
    imager = "rover" if obs.frame.kind == "rover" else "drone"
    visible = objects_in_view(state, scenario, imager)
    if obs.polarity == "negative":
        return len(visible) > 0
    return (obs.mineral, obs.spatial_label, obs.frame) not in _correct_set(
        state, scenario, imager, visible
    )


# ---------------------------------------------------------------------------
# Detector and fusion.
# ---------------------------------------------------------------------------


def simulate_detector(state: MissionState, scenario: ScenarioConfig) -> np.ndarray:
    """Binary containment vector over targets for the forward detector box."""
    poly = state.rover.from_frame(scenario.geometry.detector_polygon())
    pts = np.stack([t.xy for t in scenario.world.targets])
    return point_in_polygon(pts, poly).astype(int)


def _fusion_seed(seed: int, k: int, stage: int, idx: int) -> int:
    ss = np.random.SeedSequence((int(seed), 33, int(k), int(stage), int(idx)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _compress_to(gm: GaussianMixture, cap: int) -> GaussianMixture:
    return runnalls_compress(gm, cap) if gm.n_components > cap else gm


def _carve(
    state: MissionState,
    scenario: ScenarioConfig,
    target_id: str,
    model,
    label: str,
    seed: int,
) -> None:
    try:
        res = lwis(
            state.beliefs[target_id],
            model,
            label,
            scenario.mission.carve_samples,
            seed,
        )
    except AllZeroLikelihoodError:
        state.fusion_errors += 1
        return
    state.beliefs[target_id] = _compress_to(
        res.posterior, scenario.mission.max_components
    )


def fuse_detector(
    state: MissionState, scenario: ScenarioConfig, zeta: np.ndarray, seed: int
) -> list[str]:
    """Collapse newly detected targets; carve the box for the rest."""
    newly = []
    det_model = detector_likelihood(state.rover, scenario.geometry)
    for i, tgt in enumerate(scenario.world.targets):
        if state.detected[tgt.id]:
            continue
        if zeta[i]:
            sig = scenario.mission.collapse_sigma
            state.beliefs[tgt.id] = GaussianMixture.single(
                Gaussian(tgt.xy, sig**2 * np.eye(2))
            )
            state.detected[tgt.id] = True
            state.detected_at[tgt.id] = state.k
            newly.append(tgt.id)
        else:
            _carve(
                state,
                scenario,
                tgt.id,
                det_model,
                "no_detection",
                _fusion_seed(seed, state.k, 0, i),
            )
    return newly


def _observation_model(state: MissionState, scenario: ScenarioConfig, obs):
    """Likelihood model, fused label, and dictionary size for one report."""
    geom = scenario.geometry
    kind = obs.frame.kind
    if obs.polarity == "negative":
        pose, _ = _imager_polygon(
            state, scenario, "rover" if kind == "rover" else "drone"
        )
        poly = geom.camera_polygon() if kind == "rover" else geom.drone_polygon()
        model = build_spatial_model(pose, "in_view", geom, fov_polygon=poly)
        return model, "none_visible", 2
    if kind == "rover":
        return (
            build_spatial_model(state.rover, "range_bearing", geom),
            obs.spatial_label,
            len(RANGE_BEARING_LABELS),
        )
    if kind == "landmark":
        lm = next(
            (l for l in scenario.world.landmarks if l.id == obs.frame.id), None
        )
        if lm is None:
            raise ValueError(f"unknown landmark {obs.frame.id!r}")
        return (
            build_spatial_model(Pose(lm.xy, 0.0), "range_bearing", geom),
            obs.spatial_label,
            len(RANGE_BEARING_LABELS),
        )
    pose = Pose(state.drone.position, 0.0)
    model = build_spatial_model(
        pose, "in_view", geom, fov_polygon=geom.drone_polygon()
    )
    return model, obs.spatial_label, 2


def fuse_human(
    state: MissionState,
    scenario: ScenarioConfig,
    obs: SemanticObservation,
    modality: str,
    seed: int,
) -> Optional[AssociationResult]:
    """Fuse one astronaut report under the given association modality.

    Negative reports carve the imager footprint out of every matching
    undetected belief, with no association ambiguity. Positive reports go
    through the modality's association rule over the mineral's candidates.
    """
    if modality == "detector_only":
        return None
    imager = "rover" if obs.frame.kind == "rover" else "drone"
    model, label, h = _observation_model(state, scenario, obs)
    if obs.polarity == "negative":
        for i, tid in enumerate(state.undetected_ids()):
            mineral = next(
                t.mineral for t in scenario.world.targets if t.id == tid
            )
            if mineral == obs.mineral:
                _carve(state, scenario, tid, model, label, _fusion_seed(seed, state.k, 1, i))
        return None
    metas = [
        TargetMeta(t.id, t.mineral, state.detected[t.id])
        for t in scenario.world.targets
    ]
    cand_ids = resolve_candidates(obs, metas)
    if not cand_ids:
        return AssociationResult(
            gamma=np.array([1.0]), per_target_posteriors=(), candidate_ids=()
        )
    fp = scenario.human.assumed_fp(imager)
    acfg = AssociationConfig(
        false_positive_rate=fp,
        dictionary_size=h,
        max_components=scenario.mission.max_components,
    )
    priors = [state.beliefs[c] for c in cand_ids]
    fseed = _fusion_seed(seed, state.k, 2, 0 if imager == "rover" else 1)
    result: Optional[AssociationResult] = None
    try:
        if modality == "psda":
            result = psda_multi(
                priors, model, label, acfg, scenario.fusion, fseed, cand_ids
            )
            posts = result.per_target_posteriors
        elif modality == "greedy":
            result = greedy_psda(
                priors, model, label, acfg, scenario.fusion, fseed, cand_ids
            )
            posts = result.per_target_posteriors
        elif modality == "naive_da":
            posts = naive_da(priors, model, label, acfg, scenario.fusion, fseed)
        elif modality == "no_da":
            posts = no_da(priors, model, label, scenario.fusion, fseed, cfg=acfg)
        else:
            raise ValueError(f"unknown modality {modality}")
    except AllZeroLikelihoodError:
        state.fusion_errors += 1
        return None
    for cid, post in zip(cand_ids, posts):
        state.beliefs[cid] = post
    return result


def fuse_step(
    state: MissionState,
    scenario: ScenarioConfig,
    zeta: np.ndarray,
    observations: Sequence[SemanticObservation],
    modality: str,
    seed: int,
) -> MissionState:
    """Detector plus human reports for one step, beliefs compressed back."""
    fuse_detector(state, scenario, zeta, seed)
    for obs in observations:
        fuse_human(state, scenario, obs, modality, seed)
    return state


# ---------------------------------------------------------------------------
# Planning and aggregate belief.
# ---------------------------------------------------------------------------


def average_belief(state: MissionState) -> GaussianMixture:
    """Equal-weight average of undetected targets' beliefs."""
    ids = state.undetected_ids()
    if not ids:
        raise AllDetectedError("every target already found")
    share = 1.0 / len(ids)
    return mix([(share, state.beliefs[tid]) for tid in ids])


def plan_goal_and_path(
    state: MissionState, scenario: ScenarioConfig
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Goal at the average-belief peak; A* waypoints on the unit grid."""
    goal = gm_map(average_belief(state))
    res = scenario.mission.grid_resolution
    n = int(round(scenario.world.extent / res)) + 1
    to_cell = lambda p: (
        int(np.clip(round(p[0] / res), 0, n - 1)),
        int(np.clip(round(p[1] / res), 0, n - 1)),
    )
    cells = astar_grid(to_cell(state.rover.position), to_cell(goal), (n, n))
    if cells is None:
        return goal, []
    return goal, [np.array(c, dtype=float) * res for c in cells]


def belief_raster(
    state: MissionState, extent: float, n: int = 64
) -> np.ndarray:
    """Row-major average-belief density over the site on an n x n grid."""
    cell = extent / n
    centers = (np.arange(n) + 0.5) * cell
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return gm_pdf(average_belief(state), pts).reshape(n, n)


# ---------------------------------------------------------------------------
# The driver.
# ---------------------------------------------------------------------------


class MissionDriver:
    """Stepwise mission executor shared by offline runs and the bridge."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        seed: int,
        modality: Optional[str] = None,
        collect_snapshots: bool = False,
        event_sink: Optional[Callable[[dict], None]] = None,
    ):
        self.scenario = scenario
        self.seed = int(seed)
        self.modality = modality or scenario.mission.modality
        if self.modality not in ("detector_only", "no_da", "naive_da", "greedy", "psda"):
            raise ValueError(f"unknown modality {self.modality}")
        self.collect_snapshots = collect_snapshots
        self.event_sink = event_sink
        self._snapshots: dict[str, list[dict]] = {}

        world = scenario.world
        init = np.random.default_rng(np.random.SeedSequence((self.seed, 11)))
        lo, hi = 0.2 * world.extent, 0.8 * world.extent
        rover = Pose(init.uniform(lo, hi, 2), init.uniform(-np.pi, np.pi))
        self._mower = lawnmower_path(world.extent, scenario.mission.drone_lane_spacing)
        seg_len = np.linalg.norm(np.diff(self._mower, axis=0), axis=1).sum()
        self._drone_phase = float(init.uniform(0.0, seg_len))
        drone_xy, drone_h = _point_along(self._mower, self._drone_phase)
        beliefs = initial_beliefs(world, scenario.mission)
        self.state = MissionState(
            k=0,
            rover=rover,
            drone=Pose(drone_xy, drone_h),
            beliefs=beliefs,
            detected={t.id: False for t in world.targets},
            delta={t.id: [] for t in world.targets},
        )
        self.rng_human = np.random.default_rng(np.random.SeedSequence((self.seed, 22)))
        if not world.targets:
            self._end(True, "all_found")
        else:
            self._plan("initial")
            if not self.state.path and not self.state.ended:
                self._end(False, "no_goal")

    # -- internals ---------------------------------------------------------

    def _emit(self, event: dict) -> None:
        if self.event_sink is not None:
            self.event_sink(event)

    def _end(self, success: bool, reason: str) -> None:
        st = self.state
        st.ended = True
        st.success = success
        st.end_reason = reason
        self._emit({"type": "mission_end", "k": st.k, "success": success, "reason": reason})

    def _plan(self, trigger: str) -> None:
        st = self.state
        if not st.undetected_ids():
            return
        st.goal, st.path = plan_goal_and_path(st, self.scenario)
        st.replans.append({"k": st.k, "trigger": trigger})
        if not st.path and trigger != "initial":
            self._end(False, "no_goal")

    def _metrics(self) -> None:
        st = self.state
        for t in self.scenario.world.targets:
            est = gm_map(st.beliefs[t.id])
            st.delta[t.id].append(float(np.linalg.norm(t.xy - est)))
            if self.collect_snapshots:
                self._snapshots.setdefault(t.id, []).append(
                    {"k": st.k, "gm": gm_to_dict(st.beliefs[t.id])}
                )

    # -- primitives ---------------------------------------------------------

    def advance(self) -> dict:
        """One mission step; raises MissionEnded afterwards."""
        st = self.state
        if st.ended:
            raise MissionEnded(st.end_reason)
        st.k += 1
        if st.path:
            wp = st.path.pop(0)
            step_vec = wp - st.rover.position
            dist = float(np.linalg.norm(step_vec))
            heading = (
                float(np.arctan2(step_vec[1], step_vec[0])) if dist > 1e-9 else st.rover.heading
            )
            st.rover = Pose(wp, heading)
            st.distance += dist
            arrived = not st.path
        else:
            arrived = False
        arc = self._drone_phase + st.k * self.scenario.mission.drone_speed
        drone_xy, drone_h = _point_along(self._mower, arc)
        st.drone = Pose(drone_xy, drone_h)

        zeta = simulate_detector(st, self.scenario)
        newly = fuse_detector(st, self.scenario, zeta, self.seed)
        for tid in newly:
            self._emit({"type": "detection", "k": st.k, "target": tid})
        self._metrics()
        if all(st.detected.values()):
            self._end(True, "all_found")
        elif newly or arrived:
            self._plan("detection" if newly else "arrived")
        if not st.ended and st.k >= self.scenario.mission.max_steps:
            self._end(False, "timeout")
        self._emit({"type": "step_complete", "k": st.k})
        return {
            "k": st.k,
            "zeta": zeta.tolist(),
            "newly_detected": newly,
            "ended": st.ended,
        }

    def observe(self, obs: SemanticObservation) -> Optional[AssociationResult]:
        """Fuse a human report at the current step and replan."""
        st = self.state
        if st.ended:
            raise MissionEnded(st.end_reason)
        erroneous = grade_observation(obs, st, self.scenario)
        imager = "rover" if obs.frame.kind == "rover" else "drone"
        result = fuse_human(st, self.scenario, obs, self.modality, self.seed)
        st.observations.append(
            {
                "k": st.k,
                "imager": imager,
                "erroneous": bool(erroneous),
                "obs": obs.to_dict(),
            }
        )
        if result is not None and len(result.gamma) > 1:
            evidence = float(
                np.sum(
                    np.asarray(result.normalizers)
                    * (1.0 - self.scenario.human.assumed_fp(imager))
                    / len(result.normalizers)
                )
            )
            st.gamma0_events.append(
                {
                    "k": st.k,
                    "imager": imager,
                    "gamma0": result.gamma0,
                    "evidence": evidence,
                    "erroneous": bool(erroneous),
                }
            )
            self._emit(
                {
                    "type": "association",
                    "k": st.k,
                    "gamma": result.gamma.tolist(),
                    "candidates": list(result.candidate_ids),
                }
            )
        if self.modality != "detector_only" and not st.ended:
            self._plan("semantic")
        return result

    # -- record --------------------------------------------------------------

    def record(self) -> MissionRecord:
        st = self.state
        return MissionRecord(
            seed=self.seed,
            modality=self.modality,
            success=st.success,
            end_reason=st.end_reason,
            steps=st.k,
            distance=round(st.distance, 9),
            detected=dict(st.detected),
            detected_at=dict(st.detected_at),
            delta=dict(st.delta),
            gamma0_events=list(st.gamma0_events),
            observations=list(st.observations),
            replans=list(st.replans),
            fusion_errors=st.fusion_errors,
            target_truth={
                t.id: [float(t.position[0]), float(t.position[1])]
                for t in self.scenario.world.targets
            },
            final_beliefs={tid: gm_to_dict(gm) for tid, gm in st.beliefs.items()},
            snapshots=self._snapshots if self.collect_snapshots else None,
        )


def run_mission(
    scenario: ScenarioConfig,
    seed: int,
    modality: Optional[str] = None,
    observation_log: Optional[Sequence[dict]] = None,
    collect_snapshots: bool = False,
) -> MissionRecord:
    """Execute one survey mission to termination.

    With an observation_log (entries {"k", "obs"}), recorded reports are
    injected at their original steps instead of sampling the astronaut;
    everything else replays identically.
    """
    driver = MissionDriver(scenario, seed, modality, collect_snapshots)
    live = observation_log is None
    by_k: dict[int, list[dict]] = {}
    if not live:
        for entry in observation_log:
            by_k.setdefault(int(entry["k"]), []).append(entry)
    while not driver.state.ended:
        driver.advance()
        if driver.state.ended:
            break
        k = driver.state.k
        if live:
            if driver.modality != "detector_only":
                for imager in ("rover", "drone"):
                    obs = simulate_human(
                        driver.state, driver.scenario, driver.scenario.human,
                        driver.rng_human, imager,
                    )
                    if obs is not None:
                        driver.observe(obs)
                        if driver.state.ended:
                            break
        else:
            for entry in by_k.get(k, []):
                driver.observe(SemanticObservation.from_dict(entry["obs"]))
                if driver.state.ended:
                    break
    return driver.record()
