"""Compare naive schema exposure with routed exposure on the bundled suites.

    python3 demos/token_exposure.py [--detail]

Prints the results and exposure tables for the lite, realistic and
adversarial suites.  ``--detail`` adds per-case false positives and misses
for the adversarial probe.
"""

import sys

from capsule_router.bench import adversarial_detail, builtin_suite, emit_report, run_router_suite

reports = []
for name in ("lite", "l2_realistic", "l3_adversarial"):
    suite = builtin_suite(name)
    reports.append(run_router_suite(suite, suite.build_catalog()))

print(emit_report(reports, "table_text", "results"))
print(emit_report(reports, "table_text", "exposure"))

lite, realistic, _ = reports
print(f"A {realistic.tool_count}-tool catalog costs {realistic.naive_tokens} tokens when every schema is shown;")
print(f"a routed task sees {realistic.avg_flow_tokens:.0f} on average, of which {realistic.router_tokens} "
      "is the fixed meta-tool surface.")

if "--detail" in sys.argv[1:]:
    print()
    print("\n".join(adversarial_detail(reports[2])))
