"""Detect relation conflicts before optimization and repair them.

The conflict_pair scene ships with three planted problems: a desk chair
required too close to its desk, a coffee table overlapping the sofa it is
tied to, and two unconstrained lamps defaulting onto the same spot.  The
revision loop imagines the scene at its ideal geometry, reports what
overlaps, and relaxes or adds relations until the imagined layout is clean.
"""

import sys

from layoutopt import OptimizerConfig, eval_physical, imagine_and_revise, load_fixture, solve


def main() -> int:
    spec = load_fixture("conflict_pair")
    revised, report = imagine_and_revise(spec, budget=10)
    print(report.to_text())

    # Show what changed, relation by relation.
    before = {(r.kind, r.source, r.target): r.params for r in spec.relations}
    for r in revised.relations:
        key = (r.kind, r.source, r.target)
        if key not in before:
            print(f"added    {r.kind} {r.source}->{r.target} {r.params}")
        elif before[key] != r.params:
            print(f"adjusted {r.kind} {r.source}->{r.target} {before[key]} -> {r.params}")

    layout, _ = solve(revised, OptimizerConfig(seed=0))
    print()
    print("solved revised scene:")
    print("  " + eval_physical(revised, layout).to_text().replace("\n", "\n  ").rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
