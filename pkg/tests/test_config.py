import os

import pytest

from hashlab.config import load_experiment, parse_experiment
from hashlab.errors import ConfigError

MINIMAL = """
[experiment]
seed = 3
"""

FULL = """
[experiment]
seed = 11
out = runs/exp1
precision = f32

[network]
config = nets/tiny.ini

[head]
bits = 12, 24,48
mode = matrix
beta = 2.5
threshold = no

[train]
lr = 0.02
iterations = 500
sharing = query-independent
batch_triplets = 7

[data]
train = data/train.hlt
query = /abs/query.hlt

[metrics]
relevance = share-any
truncate = 100
topk = 1,5
ap_denominator = total
empty_retrieval = skip
"""


def test_defaults():
    cfg = parse_experiment(MINIMAL)
    assert cfg.seed == 3 and cfg.precision == "f64" and cfg.out == "runs/out"
    assert cfg.bits == (12,) and cfg.head_mode == "slice" and cfg.head_threshold
    assert cfg.train.lr == 0.01 and cfg.train.seed == 3 and cfg.train.sharing == "shared"
    assert cfg.data == {} and cfg.metrics.relevance == "equal" and cfg.metrics.topk == ()


def test_full_parse():
    cfg = parse_experiment(FULL, base_dir="/base")
    assert cfg.precision == "f32" and cfg.out == "runs/exp1"
    assert cfg.bits == (12, 24, 48) and cfg.head_mode == "matrix"
    assert cfg.head_beta == 2.5 and cfg.head_threshold is False
    assert cfg.network_path == os.path.join("/base", "nets/tiny.ini")
    assert cfg.train.lr == 0.02 and cfg.train.iterations == 500
    assert cfg.train.sharing == "query-independent" and cfg.train.batch_triplets == 7
    assert cfg.train.seed == 11  # experiment seed feeds training
    # relative data paths resolve against the config's directory; absolute stay put
    assert cfg.data["train"] == os.path.join("/base", "data/train.hlt")
    assert cfg.data["query"] == "/abs/query.hlt"
    m = cfg.metrics
    assert (m.relevance, m.truncate, m.topk) == ("share-any", 100, (1, 5))
    assert (m.ap_denominator, m.empty_retrieval) == ("total", "skip")
    assert cfg.source_text == FULL


@pytest.mark.parametrize(
    "snippet",
    [
        "[experiment]\nprecision = f16\n",
        "[experiment]\nseed = soon\n",
        "[head]\nbits = 0\n",
        "[head]\nbits =\n",
        "[head]\nmode = dense\n",
        "[train]\nsharing = tied\n",
        "[train]\nlr = fast\n",
        "[data]\nvalidation = x.hlt\n",
        "[metrics]\nrelevance = same\n",
        "[metrics]\nap_denominator = found\n",
        "[metrics]\nempty_retrieval = nan\n",
        "[metrics]\nradius = -1\n",
        "not ini at all [",
    ],
)
def test_parse_rejects(snippet):
    with pytest.raises(ConfigError):
        parse_experiment(snippet)


def test_load_experiment_requires(tmp_path):
    (tmp_path / "exp.ini").write_text(
        "[network]\nconfig = net.ini\n\n[data]\ntrain = train.hlt\n"
    )
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "exp.ini", require=("network",))
    (tmp_path / "net.ini").write_text("[network]\ninput = 3x8x8\n[layer.0]\nkind = relu\n")
    cfg = load_experiment(tmp_path / "exp.ini", require=("network",))
    assert cfg.network_path == str(tmp_path / "net.ini")
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "exp.ini", require=("train",))
    (tmp_path / "train.hlt").write_bytes(b"")
    cfg = load_experiment(tmp_path / "exp.ini", require=("train",))
    assert cfg.data["train"] == str(tmp_path / "train.hlt")
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "exp.ini", require=("query",))
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "nowhere.ini")


def test_shipped_experiment_config_parses():
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cfg = load_experiment(os.path.join(here, "configs", "toy-experiment.ini"), require=("network",))
    assert cfg.bits == (12,) and cfg.precision == "f64"
    assert cfg.train.iterations == 2000 and cfg.train.lr == 0.01
    assert set(cfg.data) == {"train", "query", "database"}