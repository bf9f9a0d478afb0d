"""Profile the simulator and the reference solvers.

Profiles are saved to Benchmarks/profiles/version_<version>/ and can be
inspected with snakeviz (``pip install snakeviz``; ``snakeviz Simulation.prof``).
"""
import os
import subprocess
import sys
from pathlib import Path

import blockpd as bp

BENCHMARKS = {
    "1": ("Simulation", "Benchmark_Simulation.py"),
    "2": ("Scalar_blocks", "Benchmark_Scalar_blocks.py"),
    "3": ("Reference", "Benchmark_Reference.py"),
}

bench_dir = Path(os.path.dirname(os.path.dirname(bp.__file__))) / "Benchmarks"
saving_path = bench_dir / "profiles" / f"version_{bp.__version__}"
saving_path.mkdir(parents=True, exist_ok=True)

menu = "".join(f"\n {key} - {name.replace('_', ' ')}" for key, (name, _) in BENCHMARKS.items())
bench_type = input(
    f"\nRunning blockpd benchmarks in version: {bp.__version__}\n\n"
    f"What kind of Benchmarks do you want to run?{menu}\n"
)

if bench_type not in BENCHMARKS:
    sys.exit(f"unknown benchmark {bench_type!r}")

name, script = BENCHMARKS[bench_type]
output = saving_path / f"{name}.prof"
subprocess.run(
    [sys.executable, "-m", "cProfile", "-o", str(output), str(bench_dir / "cProfile" / script)], check=True
)
print(f"profile saved to {output}")
