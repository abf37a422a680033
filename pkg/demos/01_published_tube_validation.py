"""Check the published case-study tube tables against the dense oracle.

Loads the four-robot and four-drone coefficient tables shipped with the
package and reports, family by family, how well they satisfy the tube
constraint system: endpoint containment, arena confinement, minimum
width, obstacle separation, and pairwise separation.

The tables are rounded to four decimals, so the endpoint and arena
families drift by up to 0.035 at the end of the horizon (the rounding
amplifies with powers of t); everything passes at the rounding bound.
"""

from sttube import data_path, load_scenario, load_tubes
from sttube.synth import validate_tubes

for name, tol in (("robots", 0.056), ("drones", 0.021)):
    spec = load_scenario(data_path(f"{name}.scenario"))
    tubes = load_tubes(data_path(f"{name}_table.tubes"))
    report = validate_tubes(tubes, spec, resolution=0.001, tolerance=tol)
    print(f"== {name} (tolerance {tol}, resolution 0.001) ==")
    print(report.summary())
    print(f"  endpoint equality residual: {report.endpoint_equality_residual:.4f}")
    print(f"  overall: {'PASS' if report.all_pass else 'FAIL'}")
    print()
