import math

import pytest

from vulnfwd import ForwardContract, FundingPolicy, MarketParams, derive_rates

# filled by test_acceptance; one entry per criterion
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def base():
    return MarketParams()


@pytest.fixture
def policy():
    return FundingPolicy.linearizing(0.5, 0.0)


@pytest.fixture
def tatm(base, policy):
    rates = derive_rates(base, policy)
    return ForwardContract(math.exp(rates.mu_hat * 5.0), 5.0)


@pytest.fixture
def atmrf(base):
    return ForwardContract(base.s * math.exp(base.r * 5.0), 5.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split()[0].rstrip("abcdefghij")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
