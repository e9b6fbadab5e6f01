import numpy as np

from specsar.autodiff.nn import Conv2d, Linear
from specsar.counting import (
    FLOP_TOLERANCE,
    PAPER_FLOPS,
    PAPER_PARAMS,
    PARAM_TOLERANCE,
    count_flops,
    count_params,
    format_report,
    measured_flops,
    param_breakdown,
)
from specsar.model import NetConfig, build_network


def test_layer_param_counts():
    assert Linear(10, 5).num_parameters() == 55
    assert Conv2d(12, 48, 7).num_parameters() == 28_272


def test_breakdown_sums_to_total():
    net = build_network(NetConfig.desk(), init=False)
    assert sum(param_breakdown(net).values()) == count_params(net)


def test_analytic_flops_match_instrumented_forward():
    net = build_network(NetConfig.desk(), seed=0)
    assert count_flops(net, (2, 12, 32, 32)) == measured_flops(net, 32, 32, batch=2)


def test_full_size_within_tolerance():
    net = build_network(NetConfig.full_size(), init=False)
    assert abs(count_params(net) / PAPER_PARAMS - 1) <= PARAM_TOLERANCE
    assert abs(count_flops(net, (510, 510)) / PAPER_FLOPS - 1) <= FLOP_TOLERANCE


def test_report_lines():
    net = build_network(NetConfig.desk(), init=False)
    text = format_report(net, 32, 32)
    assert f"params={count_params(net)}" in text.splitlines()
    assert f"flops={count_flops(net, (32, 32))}" in text.splitlines()
