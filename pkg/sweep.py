"""Ad-hoc tuning harness (not part of the package)."""
import sys, time, json
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from psda.sim import builtin_scenario, run_mission


def one(args):
    sc, m, seed = args
    r = run_mission(sc, seed=seed, modality=m)
    return m, seed, int(r.success), r.detected_count, round(r.distance, 1), r.end_reason


def sweep(sc, modalities, seeds, tag=""):
    jobs = [(sc, m, s) for m in modalities for s in seeds]
    out = {}
    with ProcessPoolExecutor(max_workers=2) as ex:
        for m, seed, succ, found, dist, reason in ex.map(one, jobs):
            out.setdefault(m, []).append((seed, succ, found, dist, reason))
    print(f"=== {tag}")
    for m in modalities:
        rows = sorted(out[m])
        succ = sum(r[1] for r in rows)
        found = sum(r[2] for r in rows) / len(rows)
        sdist = [r[3] for r in rows if r[1]]
        mdist = sum(sdist) / len(sdist) if sdist else float("nan")
        print(f"{m:14s} succ={succ}/{len(rows)} found={found:.2f} "
              f"dist_ok={mdist:.0f} {[ (r[1], r[2]) for r in rows ]}", flush=True)
    return out


if __name__ == "__main__":
    base = builtin_scenario("default")
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 12
    mods = ("psda", "naive_da", "greedy", "no_da", "detector_only")

    t0 = time.time()
    from psda.sim.world import HumanModel
    for tag, gains, clsig in [("A", (1.2, 3.0, 5.0), 8.0), ("B", (1.2, 2.4, 4.0), 7.0), ("C", (0.9, 2.4, 4.0), 8.0)]:
        geom = replace(base.geometry, drone_view_halfwidth=7.0,
                       gain_near=gains[0], gain_far=gains[1], gain_none=gains[2])
        sc = replace(
            base,
            world=replace(base.world, distractors=(), sites_per_target=1, n_distractors=4,
                          seed=43),
            geometry=geom,
            human=HumanModel(phantom_fraction=0.5),
            mission=replace(base.mission, prior_anchor_sigma=3.0,
                            prior_cluster_sigma=clsig, prior_comp_sigma=3.0,
                            drone_speed=3.5, landmark_use_radius=30.0),
        )
        sweep(sc, mods, range(n), tag=f"{tag} gains={gains} clsig={clsig}")
    print(f"total {time.time()-t0:.0f}s")
