from __future__ import annotations

import logging

import pytest


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    # warnings stay capturable but do not flood test output
    caplog.set_level(logging.WARNING)
