import json
import re
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def tile_bundles():
    from heightqa.pipeline import load_tiles

    return load_tiles(FIXTURES / "tiles")


@pytest.fixture(scope="session")
def bundles_by_id(tile_bundles):
    return {b.tile_id: b for b in tile_bundles}


def make_config(bench: str):
    """Pipeline config pointing at the committed fixture tiles/replay store."""
    from heightqa.config import PipelineConfig
    from heightqa.vlm import EndpointConfig

    cfg_json = json.loads((FIXTURES / f"config_{bench}.json").read_text())
    cfg = PipelineConfig()
    cfg.tile_dir = str(FIXTURES / "tiles")
    cfg.bench = bench
    cfg.seed = cfg_json["seed"]
    cfg.counts = dict(cfg_json["counts"])
    cfg.vlm = EndpointConfig(mode="replay",
                             replay_path=str(FIXTURES / "vlm_replay.jsonl"))
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def base_config():
    return make_config("base")


@pytest.fixture(scope="session")
def plus_config():
    return make_config("plus")


@pytest.fixture(scope="session")
def plus_records(plus_config):
    from heightqa import pipeline, taskgen

    payload, _, _ = pipeline.generate(plus_config)
    return taskgen.records_from_jsonl(payload.decode("utf-8"))


class IdealJudge:
    """Test-double judge: grades by normalized equality of reference and
    candidate parsed out of the fixed judging prompt."""

    _RE = re.compile(r"Reference answer:\n(.*?)\n\nCandidate answer:\n(.*?)\n\nGrade",
                     re.S)

    def complete(self, system, user, image_b64=None):
        m = self._RE.search(user)
        ref, cand = m.group(1).strip().lower(), m.group(2).strip().lower()
        ok = ref == cand
        return json.dumps({"correct": ok, "score": 100 if ok else 0})


@pytest.fixture
def ideal_judge():
    return IdealJudge()
