"""Smoke test for the Python extension.

Build and install first:

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import json
import math

import mixgrid_py as mg


def main():
    names = mg.sample_names()
    assert "square" in names and "bat" in names, names

    square = mg.sample_geometry("square")
    errors, warnings = mg.check(square)
    assert errors == [], errors

    sol = json.loads(mg.solve(square, initial="folded"))
    assert sol["report"]["converged"], sol["report"]
    assert sol["quality"]["fold_count"] == 0
    assert math.isclose(sol["quality"]["winslow"], 2.0, abs_tol=1e-9)

    text = json.dumps(sol)
    assert mg.residual_norm(text) < 1e-8
    assert "folds: 0" in mg.quality(text)

    (csv,) = mg.sample(text, format="csv", resolution=2)
    rows = csv.strip().splitlines()
    n = 2 * 4 + 1
    assert len(rows) == 1 + n * n, len(rows)

    errors, _ = mg.check('{"format_version": 1, "patches": []}')
    assert errors, "empty patch list should be rejected"
    try:
        mg.solve("{}")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid geometry should raise ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
