"""
affdim Demo Script
Walks the toolkit end to end on a similarity system and a self-affine carpet.
"""
import math

import numpy as np

from affdim.attractor import ProjectionConfig, falconer_weights, generate_cloud
from affdim.dimension import affinity_dimension, sk_sequence
from affdim.estimators import box_count, energy_estimate, occupancy, transversality_check
from affdim.ifs import IFSSpec, validate
from affdim.observability.logger import setup_logger
from affdim.observability.tracer import Tracer
from affdim.randomness import PerturbationField, borel_cantelli_check, make_distribution
from affdim.storage import ReportStore

# Setup logger
logger = setup_logger("affdim")
tracer = Tracer()
store = ReportStore("out/demo", provenance={"schema_version": 1})

SIERPINSKI = [
    (np.eye(2) * 0.5, (0.0, 0.0)),
    (np.eye(2) * 0.5, (0.5, 0.0)),
    (np.eye(2) * 0.5, (0.25, 0.5)),
]

CARPET = [
    (np.diag([0.5, 1 / 3]), (x, y))
    for x, y in [(0.0, 0.0), (0.5, 0.0), (0.0, 1 / 3), (0.5, 2 / 3), (0.25, 1 / 3)]
]


def print_section(title: str):
    """Print a formatted section header."""
    print("\n" + "=" * 80)
    print(f"  {title}")
    print("=" * 80 + "\n")


def demo_dimension():
    print_section("Demo 1: Affinity Dimension")
    for name, maps, closed_form in [
        ("similarity m=3, r=1/2", SIERPINSKI, math.log(3) / math.log(2)),
        ("carpet m=5, diag(1/2, 1/3)", CARPET, 1 + math.log(5 / 2) / math.log(3)),
    ]:
        spec = validate(IFSSpec.from_maps(maps))
        with tracer.trace("affinity_dimension", {"system": name}):
            result = affinity_dimension(spec, tol=1e-6)
        print(f"{name}: {result.value:.6f} (closed form {closed_form:.6f}), "
              f"bracket {result.bracket[0]:.6f}..{result.bracket[1]:.6f}, level {result.n_used}")
        store.save_report(f"dim_m{spec.m}", {**result.to_dict(), "system": name})
    spec = validate(IFSSpec.from_maps(SIERPINSKI))
    thetas = [0.9, 0.99, 0.999]
    print(f"s_k for theta = {thetas}: {[round(s, 6) for s in sk_sequence(spec, thetas, tol=1e-9)]}")


def demo_perturbed_cloud():
    print_section("Demo 2: Perturbed Attractor and Estimators")
    spec = validate(IFSSpec.from_maps(SIERPINSKI))
    field = PerturbationField(seed=7, dist=make_distribution("gaussian", 2, sigma=0.05))
    with tracer.trace("generate_cloud"):
        cloud = generate_cloud(spec, field, ProjectionConfig(), 50000, seed=1)
    boxes = box_count(cloud)
    occ = occupancy(cloud)
    print(f"{len(cloud)} points, max truncation bound {cloud.truncation_bounds.max():.2e}")
    print(f"box-counting estimate {boxes.estimate:.4f} (r^2 {boxes.r2:.5f}), "
          f"occupancy plateau: {occ.plateau}")


def demo_bounds():
    print_section("Demo 3: Tail, Transversality and Energy Checks")
    spec = validate(IFSSpec.from_maps(SIERPINSKI))
    gaussian = PerturbationField(seed=3, dist=make_distribution("gaussian", 2, sigma=1.0))
    tail = borel_cantelli_check(gaussian, spec, 0.8, range(1, 41), 2000)
    print(f"gaussian tail series converges: {tail.series_converges} (ratio {tail.ratio:.3g})")
    student = PerturbationField(seed=3, dist=make_distribution("student-t", 2, nu=3.0))
    control = borel_cantelli_check(student, spec, 0.8, range(1, 21), 500)
    print(f"student-t admissible: {control.admissible}, series converges: {control.series_converges}")

    field = PerturbationField(seed=5, dist=make_distribution("gaussian", 2, sigma=0.05))
    report = transversality_check(spec, field, (0,), (1,), np.geomspace(1e-3, 1, 8), 2000)
    print(f"transversality (1 vs 2): passed={report.passed}")
    measure = falconer_weights(spec, 1.45, 4)
    energy = energy_estimate(spec, field, measure, 1.3, 4000, seed=9)
    print(f"1.3-energy {energy.mean_inverse_power:.4f} +/- {energy.stderr:.4f}, "
          f"analytic bound {energy.bound:.4g}")


def demo_observability():
    print_section("Demo 4: Observability and Stored Reports")
    for op, stats in tracer.get_operation_stats().items():
        print(f"{op}: {stats['count']} call(s), avg {stats['avg_duration']:.3f}s")
    print(f"\nReports in {store.storage_path}:")
    for command in store.list_reports():
        saved = store.load_report(command)
        print(f"  {command}: {saved['system']} -> {saved['value']:.6f}")


def main():
    demo_dimension()
    demo_perturbed_cloud()
    demo_bounds()
    demo_observability()
    print_section("Demo Complete")


if __name__ == "__main__":
    main()
