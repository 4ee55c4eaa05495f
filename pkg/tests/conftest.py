import pytest

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid:>4} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_data():
    from eegmark.data import SyntheticSpec, generate_synthetic, split

    ds = generate_synthetic(SyntheticSpec(n_samples=400, seed=3))
    return split(ds, (0.7, 0.15, 0.15), 0)
