import json

import pytest
from hypothesis import given, settings, strategies as st

from gtmean.config import CliConfig, ConfigError, dump_config, parse_config
from gtmean.losses import LambdaMode


def test_empty_object_gives_defaults():
    cfg = parse_config("{}")
    assert cfg == CliConfig()
    assert cfg.train.iterations == 2000 and cfg.train.learning_rate == 5e-3
    assert cfg.sweep.sigma_list == ("0.05", "0.1", "0.2")


def test_dump_round_trip():
    text = dump_config(CliConfig())
    assert parse_config(text) == CliConfig()
    assert dump_config(parse_config(text)) == text
    data = json.loads(text)
    assert set(data) == {"degradation", "gt_mean", "sweep", "train"}
    assert "gt_cfg" not in data["train"] and "degradation" not in data["train"]


def test_nested_values():
    cfg = parse_config(
        json.dumps(
            {
                "gt_mean": {"sigma_coeff": 0.2, "lambda_mode": "detached"},
                "train": {"strategy": {"name": "hybrid"}, "kind": {"name": "charbonnier", "eps": 0.01}},
                "degradation": {"gamma": 2.0},
            }
        )
    )
    assert cfg.gt_mean.lambda_mode is LambdaMode.DETACHED
    tc = cfg.train_config()
    assert tc.gt_cfg.sigma_coeff == 0.2 and tc.degradation.gamma == 2.0
    assert tc.strategy.name == "hybrid" and tc.kind.eps == 0.01


def test_sigma_text_is_preserved():
    cfg = parse_config('{"sweep": {"sigma_list": [0.10, 0, "0.4"]}}')
    assert cfg.sweep.sigma_list == ("0.10", "0", "0.4")
    assert json.loads(dump_config(cfg))["sweep"]["sigma_list"] == ["0.10", "0", "0.4"]


@pytest.mark.parametrize(
    "text, where",
    [
        ('{"train": {"bogus": 1}}', "train.bogus"),
        ('{"nope": {}}', "nope"),
        ('{"train": {"iterations": 1.5}}', "train.iterations"),
        ('{"train": {"iterations": true}}', "train.iterations"),
        ('{"train": {"iterations": 0}}', "train"),
        ('{"gt_mean": {"lambda_mode": "frozen"}}', "gt_mean.lambda_mode"),
        ('{"sweep": {"sigma_list": [-0.1]}}', "sweep.sigma_list[0]"),
        ('{"sweep": {"sigma_list": []}}', "sweep.sigma_list"),
        ('{"train": {"kind": {"name": "huber"}}}', "train.kind"),
        ('{"train": 3}', "train"),
        ("[1]", "object"),
        ("{", "JSON"),
    ],
)
def test_rejections_name_the_field(text, where):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert where in str(info.value)


@settings(max_examples=30)
@given(
    st.floats(0, 2, allow_nan=False),
    st.integers(1, 10_000),
    st.sampled_from(["baseline", "hybrid", "full_alignment", "gtmean"]),
    st.lists(st.decimals(0, 5, places=3).map(str), min_size=1, max_size=4),
)
def test_round_trip_property(sigma, iterations, strategy, sigmas):
    data = {
        "gt_mean": {"sigma_coeff": sigma},
        "train": {"iterations": iterations, "strategy": {"name": strategy}},
        "sweep": {"sigma_list": sigmas},
    }
    cfg = parse_config(json.dumps(data))
    assert parse_config(dump_config(cfg)) == cfg
    assert cfg.sweep.sigma_list == tuple(sigmas)
