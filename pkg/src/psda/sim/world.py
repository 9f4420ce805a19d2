"""Survey-site ground truth and scenario configuration.

A scenario bundles the world (targets, distractors, landmarks), the
simulated-astronaut error model, fusion knobs, and mission parameters.
Scenarios load from TOML files or built-in presets; everything downstream
is a pure function of (scenario, run seed).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..fusion import FusionConfig
from ..gaussmix import GaussianMixture
from ..softmax import MINERALS, MORPHOLOGIES, SpatialGeometry


@dataclass(frozen=True)
class TargetSpec:
    id: str
    mineral: str
    morphology: str
    position: tuple[float, float]

    def __post_init__(self):
        if self.mineral not in MINERALS:
            raise ValueError(f"unknown mineral {self.mineral}")
        if self.morphology not in MORPHOLOGIES:
            raise ValueError(f"unknown morphology {self.morphology}")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.position)


@dataclass(frozen=True)
class Distractor:
    mineral: str
    position: tuple[float, float]

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.position)


@dataclass(frozen=True)
class Landmark:
    id: str
    position: tuple[float, float]

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.position)


@dataclass(frozen=True)
class WorldConfig:
    """Square search site with ground-truth specimen layout."""

    extent: float = 50.0
    targets: tuple[TargetSpec, ...] = ()
    distractors: tuple[Distractor, ...] = ()
    landmarks: tuple[Landmark, ...] = ()
    seed: int = 0
    n_distractors: int = 6
    sites_per_target: int = 4

    def __post_init__(self):
        for t in self.targets:
            if not all(0.0 <= c <= self.extent for c in t.position):
                raise ValueError(f"target {t.id} outside the site")
        combos = [(t.mineral, t.morphology) for t in self.targets]
        if len(set(combos)) != len(combos):
            raise ValueError("duplicate mineral/morphology combination")
        if len(self.targets) == 4 and set(combos) != {
            (m, s) for m in MINERALS for s in MORPHOLOGIES
        }:
            raise ValueError("a full survey needs one target per type combination")
        if not self.distractors and self.n_distractors > 0:
            object.__setattr__(
                self, "distractors", _seed_distractors(self)
            )

    def target_ids(self) -> list[str]:
        return [t.id for t in self.targets]


def candidate_sites(
    world: WorldConfig, sites_per_target: int, seed: int
) -> dict[str, np.ndarray]:
    """Plausible specimen sites per target: the true spot plus decoys.

    Decoys stand in for an overhead survey's false leads and are drawn
    from a site-wide pool shared between targets, so different specimens
    can be suspected in the same rocky area.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7001)))
    n_decoys = max(len(world.targets), 2) + 2
    taken = [t.xy for t in world.targets]
    pool: list[np.ndarray] = []
    tries = 0
    while len(pool) < n_decoys and tries < 2000:
        tries += 1
        cand = rng.uniform(5.0, world.extent - 5.0, 2)
        if all(np.linalg.norm(cand - p) >= 8.0 for p in taken):
            pool.append(cand)
            taken.append(cand)
    out: dict[str, np.ndarray] = {}
    for tgt in world.targets:
        picks = rng.choice(len(pool), size=sites_per_target - 1, replace=False)
        out[tgt.id] = np.stack([tgt.xy] + [pool[i] for i in picks])
    return out


def _seed_distractors(world: WorldConfig) -> tuple[Distractor, ...]:
    """Non-target rocks scattered across the site, clear of the targets.

    Scattered uninteresting rocks give the astronaut real but misleading
    reference material.
    """
    rng = np.random.default_rng(np.random.SeedSequence((world.seed, 7002)))
    out: list[Distractor] = []
    if not world.targets:
        return ()
    target_xy = [t.xy for t in world.targets]
    tries = 0
    while len(out) < world.n_distractors and tries < 2000:
        tries += 1
        pos = rng.uniform(3.0, world.extent - 3.0, 2)
        if min(np.linalg.norm(p - pos) for p in target_xy) < 6.0:
            continue
        mineral = MINERALS[len(out) % 2]
        out.append(Distractor(mineral, (float(pos[0]), float(pos[1]))))
    return tuple(out)


@dataclass(frozen=True)
class MissionConfig:
    """Kinematics, belief caps, and prior layout for a survey run."""

    modality: str = "psda"
    max_steps: int = 250
    max_components: int = 25
    drone_speed: float = 2.0
    drone_lane_spacing: float = 5.0
    grid_resolution: float = 1.0
    collapse_sigma: float = 0.1
    landmark_use_radius: float = 18.0
    carve_samples: int = 128
    prior_components: int = 25
    prior_anchor_sigma: float = 2.0
    prior_anchor_share: float = 0.0  # 0 -> split components evenly
    prior_cluster_sigma: float = 2.5
    prior_comp_sigma: float = 2.5
    prior_seed: int = 7
    prior_style: str = "consistent"  # consistent | challenging

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality}")
        if self.prior_style not in ("consistent", "challenging"):
            raise ValueError(f"unknown prior style {self.prior_style}")


MODALITIES = ("detector_only", "no_da", "naive_da", "greedy", "psda")


@dataclass(frozen=True)
class HumanModel:
    """Simulated astronaut: report cadence and false-positive channel."""

    rover_fp: float = 0.10
    drone_fp: float = 0.20
    cadence: int = 8
    fire_probability: float = 0.80
    assumed_rover_fp: Optional[float] = None
    assumed_drone_fp: Optional[float] = None
    phantom_fraction: float = 0.5

    def __post_init__(self):
        for name in ("rover_fp", "drone_fp", "fire_probability", "phantom_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability")

    def true_fp(self, imager: str) -> float:
        return self.rover_fp if imager == "rover" else self.drone_fp

    def assumed_fp(self, imager: str) -> float:
        if imager == "rover":
            return self.rover_fp if self.assumed_rover_fp is None else self.assumed_rover_fp
        return self.drone_fp if self.assumed_drone_fp is None else self.assumed_drone_fp


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldConfig
    human: HumanModel = HumanModel()
    fusion: FusionConfig = FusionConfig()
    mission: MissionConfig = MissionConfig()
    geometry: SpatialGeometry = SpatialGeometry()


def initial_beliefs(
    world: WorldConfig, cfg: MissionConfig
) -> dict[str, GaussianMixture]:
    """Seeded clustered priors per target, components split across lumps.

    One lump sits near the true location (consistent style) or at the
    site mirror point (challenging style: the prior is wrong about every
    target); the rest are decoys spread over the site. This mirrors an
    overhead-survey prior: a few plausible regions per specimen.
    """
    sites = candidate_sites(world, world.sites_per_target, world.seed)
    beliefs = {}
    for ti, tgt in enumerate(world.targets):
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.prior_seed, 211, ti))
        )
        m = cfg.prior_components
        centers = sites[tgt.id].copy()
        centers[0] = np.clip(
            centers[0] + rng.normal(0.0, cfg.prior_anchor_sigma, 2),
            2.0,
            world.extent - 2.0,
        )
        if cfg.prior_style == "challenging":
            centers[0] = np.clip(
                world.extent - tgt.xy + rng.normal(0.0, cfg.prior_anchor_sigma, 2),
                2.0,
                world.extent - 2.0,
            )
        if cfg.prior_anchor_share > 0.0 and len(centers) > 1:
            n_anchor = max(1, int(round(cfg.prior_anchor_share * m)))
            rest = len(centers) - 1
            sizes = np.full(len(centers), (m - n_anchor) // rest)
            sizes[0] = n_anchor
            sizes[1 : 1 + (m - n_anchor) % rest] += 1
        else:
            sizes = np.full(len(centers), m // len(centers))
            sizes[: m % len(centers)] += 1
        means = np.vstack(
            [
                c + rng.normal(0.0, cfg.prior_cluster_sigma, (s, 2))
                for c, s in zip(centers, sizes)
            ]
        )
        means = np.clip(means, 1.0, world.extent - 1.0)
        covs = np.broadcast_to(
            cfg.prior_comp_sigma**2 * np.eye(2), (m, 2, 2)
        ).copy()
        beliefs[tgt.id] = GaussianMixture(np.full(m, 1.0 / m), means, covs)
    return beliefs


# ---------------------------------------------------------------------------
# Scenario construction: presets, dicts, TOML files.
# ---------------------------------------------------------------------------

_DEFAULT_TARGETS = (
    TargetSpec("calcite_large", "calcite", "large", (38.0, 41.0)),
    TargetSpec("calcite_round", "calcite", "round", (11.0, 36.0)),
    TargetSpec("pyroxene_large", "pyroxene", "large", (42.0, 13.0)),
    TargetSpec("pyroxene_round", "pyroxene", "round", (9.0, 9.0)),
)

_DEFAULT_LANDMARKS = (
    Landmark("crater_rim", (25.0, 25.0)),
    Landmark("boulder_west", (10.0, 22.0)),
    Landmark("boulder_east", (40.0, 28.0)),
    Landmark("dune_south", (27.0, 8.0)),
    Landmark("ridge_north", (22.0, 43.0)),
)


def builtin_scenario(name: str = "default") -> ScenarioConfig:
    world = WorldConfig(
        extent=50.0,
        targets=_DEFAULT_TARGETS,
        landmarks=_DEFAULT_LANDMARKS,
        seed=42,
        n_distractors=6,
    )
    base = ScenarioConfig(
        world=world,
        human=HumanModel(),
        fusion=FusionConfig(n_samples=1000, presample_count=250),
        mission=MissionConfig(drone_speed=2.5),
    )
    if name == "default":
        return base
    if name == "challenging":
        return replace(base, mission=replace(base.mission, prior_style="challenging"))
    raise ValueError(f"unknown scenario preset {name!r}")


def _build(dc_type, data: dict):
    allowed = {f.name for f in fields(dc_type)}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown {dc_type.__name__} keys: {sorted(unknown)}")
    return dc_type(**data)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    world_d = dict(data.pop("world", {}))
    targets = tuple(_build(TargetSpec, t) for t in world_d.pop("targets", []))
    distractors = tuple(
        _build(Distractor, d) for d in world_d.pop("distractors", [])
    )
    landmarks = tuple(_build(Landmark, l) for l in world_d.pop("landmarks", []))
    world = WorldConfig(
        targets=targets, distractors=distractors, landmarks=landmarks, **world_d
    )
    scenario = ScenarioConfig(
        world=world,
        human=_build(HumanModel, data.pop("human", {})),
        fusion=_build(FusionConfig, data.pop("fusion", {})),
        mission=_build(MissionConfig, data.pop("mission", {})),
        geometry=_build(SpatialGeometry, data.pop("geometry", {})),
    )
    if data:
        raise ValueError(f"unknown scenario sections: {sorted(data)}")
    return scenario


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse a TOML scenario file; raises ValueError on malformed input."""
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ValueError(f"bad scenario file {path}: {err}") from err
    return scenario_from_dict(data)
