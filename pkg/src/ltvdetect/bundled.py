"""Example systems shipped with the package, stored as system-file text.

``SUITE`` holds the six systems with a known verdict; ``EXTRAS`` holds further
oracle systems used by the tests and the Gramian examples.
"""

from __future__ import annotations

from pathlib import Path

from .config import parse_system

SUITE = {
    "diag_observed": '''
name = "diag_observed"
expected = "detectable"

[A]
kind = "constant"
value = [[1.0, 0.0], [0.0, -1.0]]

[C]
kind = "constant"
value = [[1.0, 0.0]]
''',
    "triangular_periodic": '''
name = "triangular_periodic"
expected = "detectable"

[partition]
k = 1

[blocks.B11]
kind = "periodic"
offset = [[1.0]]
terms = [{row = 0, col = 0, amplitude = 0.5, frequency = 1.0, func = "sin"}]

[blocks.B12]
kind = "periodic"
offset = [[0.0]]
terms = [{row = 0, col = 0, amplitude = 1.0, frequency = 1.0, func = "cos"}]

[blocks.B22]
kind = "periodic"
offset = [[-1.0]]
terms = [{row = 0, col = 0, amplitude = 0.3, frequency = 2.0, func = "cos"}]

[blocks.C1]
kind = "constant"
value = [[1.0]]

[blocks.C2]
kind = "constant"
value = [[0.0]]
''',
    "hyperbolic": '''
name = "hyperbolic"
expected = "detectable"

[A]
kind = "constant"
value = [[0.0, 1.0], [1.0, 0.0]]

[C]
kind = "constant"
value = [[1.0, 0.0]]
''',
    "diag_unobserved": '''
name = "diag_unobserved"
expected = "not-detectable"

[A]
kind = "constant"
value = [[1.0, 0.0], [0.0, -1.0]]

[C]
kind = "constant"
value = [[0.0, 1.0]]
''',
    "triangular_unobserved": '''
name = "triangular_unobserved"
expected = "not-detectable"

[partition]
k = 1

[blocks.B11]
kind = "constant"
value = [[1.0]]

[blocks.B12]
kind = "constant"
value = [[1.0]]

[blocks.B22]
kind = "constant"
value = [[-1.0]]

[blocks.C1]
kind = "constant"
value = [[0.0]]

[blocks.C2]
kind = "constant"
value = [[1.0]]
''',
    "rotation": '''
name = "rotation"
expected = "inconclusive"

[A]
kind = "constant"
value = [[0.0, 1.0], [-1.0, 0.0]]

[C]
kind = "constant"
value = [[1.0, 0.0]]
''',
}

EXTRAS = {
    "stable": '''
name = "stable"
expected = "detectable"

[A]
kind = "constant"
value = [[-1.0, 0.0], [0.0, -1.0]]

[C]
kind = "constant"
value = [[1.0, 0.0]]
''',
    "scalar_antistable": '''
name = "scalar_antistable"
expected = "detectable"

[A]
kind = "constant"
value = [[1.0]]

[C]
kind = "constant"
value = [[1.0]]
''',
    "triangular_constant": '''
name = "triangular_constant"
expected = "detectable"

[partition]
k = 1

[blocks.B11]
kind = "constant"
value = [[1.0]]

[blocks.B12]
kind = "constant"
value = [[1.0]]

[blocks.B22]
kind = "constant"
value = [[-1.0]]

[blocks.C1]
kind = "constant"
value = [[1.0]]

[blocks.C2]
kind = "constant"
value = [[0.0]]
''',
    "periodic_output": '''
name = "periodic_output"

[A]
kind = "constant"
value = [[0.0, 0.0], [0.0, 0.0]]

[C]
kind = "periodic"
offset = [[0.0, 0.0]]
terms = [
    {row = 0, col = 0, amplitude = 1.0, frequency = 1.0, func = "cos"},
    {row = 0, col = 1, amplitude = 1.0, frequency = 1.0, func = "sin"},
]
''',
    "zero_output": '''
name = "zero_output"
expected = "not-detectable"

[A]
kind = "constant"
value = [[1.0, 0.0], [0.0, -1.0]]

[C]
kind = "constant"
value = [[0.0, 0.0]]
''',
    "switching": '''
name = "switching"
expected = "detectable"

[A]
kind = "piecewise"
starts = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0]
values = [
    [[1.0, 0.5], [0.0, -1.0]], [[1.5, 0.0], [0.0, -0.5]],
    [[1.0, 0.5], [0.0, -1.0]], [[1.5, 0.0], [0.0, -0.5]],
    [[1.0, 0.5], [0.0, -1.0]], [[1.5, 0.0], [0.0, -0.5]],
    [[1.0, 0.5], [0.0, -1.0]], [[1.5, 0.0], [0.0, -0.5]],
    [[1.0, 0.5], [0.0, -1.0]], [[1.5, 0.0], [0.0, -0.5]],
]

[C]
kind = "constant"
value = [[1.0, 1.0]]
''',
}

ALL = {**SUITE, **EXTRAS}


def example_text(name: str) -> str:
    try:
        return ALL[name].lstrip()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(sorted(ALL))}") from None


def load_example(name: str):
    """``(system, metadata)`` of a bundled example."""
    return parse_system(example_text(name), f"{name}.toml")


def expected_verdict(name: str) -> str | None:
    return load_example(name)[1].get("expected")


def write_examples(directory) -> list[Path]:
    """Write every example as ``<name>.toml`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(ALL):
        p = d / f"{name}.toml"
        p.write_text(example_text(name))
        paths.append(p)
    return paths
