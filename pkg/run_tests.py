#!/usr/bin/env python3
"""
Test runner script for Redynis
"""

import os
import subprocess
import sys

SUITES = [
    ("Core model", "tests/test_core/"),
    ("Stores", "tests/test_store/"),
    ("Node service", "tests/test_service/"),
    ("Placement daemon", "tests/test_daemon/"),
    ("Simulator and workload", "tests/test_sim/"),
    ("Benchmarks", "tests/test_bench/"),
    ("HTTP layer", "tests/test_servers/ tests/test_client/"),
    ("CLI and config", "tests/test_cli/"),
    ("Integration", "tests/test_integration/"),
]


def run_tests(include_slow: bool) -> bool:
    """Run each suite, then everything together"""

    print("🧪 Running Redynis Tests")
    print("=" * 50)

    os.environ["PYTHONPATH"] = "."
    marker = [] if include_slow else ["-m", "not slow"]

    for i, (name, paths) in enumerate(SUITES, 1):
        cmd = [sys.executable, "-m", "pytest", *paths.split(), "-v", "--tb=short", *marker]
        print(f"\n📋 Running Test Suite {i}/{len(SUITES)}: {name}")
        print(f"Command: {' '.join(cmd)}")
        print("-" * 30)

        result = subprocess.run(cmd)
        if result.returncode not in (0, 5):
            print(f"❌ Test suite {i} failed with return code {result.returncode}")
            return False
        print(f"✅ Test suite {i} passed")

    print("\n🎯 Running Comprehensive Test Suite")
    print("-" * 40)
    result = subprocess.run([sys.executable, "-m", "pytest", "tests/", "--tb=short", "--maxfail=5", *marker])
    if result.returncode == 0:
        print("\n🎉 All tests passed successfully!")
        return True
    print(f"\n❌ Some tests failed (return code: {result.returncode})")
    return False


if __name__ == "__main__":
    print("Redynis - Test Suite")
    print("=" * 60)

    success = run_tests(include_slow="--slow" in sys.argv)

    print("\n" + "=" * 60)
    if success:
        print("🎊 Test run completed successfully!")
        sys.exit(0)
    else:
        print("💥 Test run failed!")
        sys.exit(1)
