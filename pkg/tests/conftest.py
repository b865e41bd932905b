import pytest

from gpide.uncertainty import validate_box

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def full_box():
    return validate_box(dict(lambda_lo=0.15, lambda_hi=0.25, gamma_lo=-0.5, gamma_hi=0.5,
                             sigma2_lo=0.5, sigma2_hi=1.0, alpha=1.5))


def make_box(**over):
    base = dict(lambda_lo=0.15, lambda_hi=0.25, gamma_lo=-0.5, gamma_hi=0.5,
                sigma2_lo=0.5, sigma2_hi=1.0, alpha=1.5)
    base.update(over)
    return validate_box(base)
