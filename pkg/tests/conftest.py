from __future__ import annotations

import numpy as np
import pytest

FLC_SCHEMA_TOML = """\
[[columns]]
name = "sex"
kind = "nominal"
levels = ["F", "M"]

[[columns]]
name = "flc"
kind = "ordinal"
levels = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]

[[columns]]
name = "creatinine"
kind = "numeric"
"""


def flc_like_rows(n=600, seed=3):
    """Age-scale cohort: entry age 50-90, Gompertz mortality, top FLC decile
    multiplies the hazard by six; administrative censoring 15 years after entry."""
    rng = np.random.default_rng(seed)
    entry = rng.uniform(50.0, 90.0, n)
    sex = rng.choice(["F", "M"], n)
    flc = rng.integers(1, 11, n)
    creat = np.round(rng.lognormal(0.0, 0.25, n), 2)
    mult = np.where(flc == 10, 6.0, 1.0)
    rate, shape = 1e-4, 0.09
    # conditional on survival to entry: H(T) = H(entry) - log(u) / mult
    h_entry = rate / shape * np.expm1(shape * entry)
    h = h_entry - np.log(rng.random(n)) / mult
    death = np.log1p(shape * h / rate) / shape
    cens = entry + rng.uniform(2.0, 15.0, n)
    right = np.maximum(np.minimum(death, cens), entry + 0.05)
    event = (death <= cens).astype(int)
    rows = []
    for i in range(n):
        rows.append(f"p{i},{entry[i]:.2f},{right[i]:.2f},{event[i]},{sex[i]},{flc[i]},{creat[i]:.2f}")
    return rows


@pytest.fixture
def flc_files(tmp_path):
    schema = tmp_path / "flc.toml"
    schema.write_text(FLC_SCHEMA_TOML)
    data = tmp_path / "flc.csv"
    data.write_text("id,left,right,event,sex,flc,creatinine\n" + "\n".join(flc_like_rows()) + "\n")
    return data, schema


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: list[str] = []


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
