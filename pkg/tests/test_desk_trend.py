import importlib.util
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
TOY = Path(__file__).parent / "data" / "toy"


@pytest.fixture(scope="module")
def desk_trend():
    spec = importlib.util.spec_from_file_location("desk_trend", ROOT / "scripts" / "desk_trend.py")
    module = importlib.util.module_from_spec(spec)
    # registered so worker processes can unpickle its functions
    sys.modules["desk_trend"] = module
    spec.loader.exec_module(module)
    return module


def strip_time(rows):
    return [{k: v for k, v in r.items() if k != "seconds"} for r in rows]


def test_protocol_is_independent_of_worker_count(desk_trend):
    args = (TOY, None, ["dim=4", "max_epochs=4", "batch_size=4", "negatives=2", "lambda0=auto", "t_grow=2"], (0, 1))
    serial = desk_trend.run_protocol(*args, workers=1, log=lambda _: None)
    parallel = desk_trend.run_protocol(*args, workers=2, log=lambda _: None)
    assert strip_time(serial["rows"]) == strip_time(parallel["rows"])
    assert [r["arm"] for r in serial["rows"]] == ["curriculum"] * 2 + ["baseline"] * 2
    assert serial["means"] == parallel["means"]
    assert serial["diagnosis"].n_top10 + serial["diagnosis"].n_bottom10 == 3
