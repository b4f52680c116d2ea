"""Relation-graph reports for the bundled scenes.

For each scene: how many constraint hops the solver has to propagate through
(cost), and how much of that the unit grouping removes (delta).  Units whose
anchor is not a cut vertex between root and members get flagged rather than
credited.
"""

import sys

from layoutopt import (
    FIXTURE_NAMES,
    UnreachableNodeError,
    build_graph,
    decomposition_savings,
    load_fixture,
)


def main() -> int:
    for name in FIXTURE_NAMES:
        spec = load_fixture(name)
        graph = build_graph(spec)
        print(f"{name}: {len(graph.nodes) - 1} assets, {len(graph.edges)} relation edges")
        try:
            report = decomposition_savings(graph, spec.units)
        except UnreachableNodeError as exc:
            # Assets with no relations at all have no path cost to measure.
            print(f"  skipped: {exc}")
            continue
        print("  " + report.to_text().replace("\n", "\n  ").rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
