"""
Full benchmark
==============

Three master seeds with 16 scenes each, both models trained for 80 epochs,
then top-k accuracy against the observation interval.  Roughly 20 minutes
on one core.  Writes the report files to ./benchmark_report.
"""
import logging
import sys

from radarbeam.benchmark import BenchmarkConfig, run_benchmark

logging.basicConfig(level=logging.INFO, stream=sys.stdout, format="%(message)s")
res = run_benchmark(BenchmarkConfig())
print("timings (s):", {k: round(v, 1) for k, v in res.timings_s.items()})
for name, per_t in res.report.accuracy.items():
    for k in (1, 3, 5):
        print(f"{name:5s} top-{k}:", " ".join(f"{per_t[t][k]:.3f}" for t in range(1, 11)))
res.report.write("benchmark_report")
