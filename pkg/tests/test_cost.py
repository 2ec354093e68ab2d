from fractions import Fraction

import pytest

from olfuse.cost import (CycleParams, Design, cycles_baseline, cycles_ds1, cycles_ds2,
                         dram_traffic, fused_ops, num_ops, operational_intensity, performance)
from olfuse.errors import ContractError
from olfuse.network import bundled_network
from olfuse.planner import FusionPlan, all_plans, plan_network


@pytest.fixture
def lenet():
    net = bundled_network("lenet5")
    return net, plan_network(net, 2, 1)


def test_lenet_ds1(lenet):
    net, plan = lenet
    r = cycles_ds1(plan, net)
    assert r.total_cycles == 1375
    assert r.duration_us == Fraction(55, 4)
    assert r.design is Design.DS1


def test_lenet_ds2(lenet):
    net, plan = lenet
    r = cycles_ds2(plan, net)
    assert r.total_cycles == 13025
    assert abs(r.total_cycles - 12825) / 12825 <= 0.02


def test_breakdown_sums(lenet):
    net, plan = lenet
    r = cycles_ds1(plan, net)
    per_pass = sum(sum(t.values()) for t in r.per_level) + 8
    assert per_pass * 25 == r.total_cycles
    assert r.per_level[1]["channel_tree_delay"] == 6


def test_performance():
    assert round(performance(1183880, 1375, 10 ** 8) / 10 ** 9, 1) == Fraction(861, 10)
    with pytest.raises(ContractError):
        performance(1, 0, 1)


def test_num_ops():
    net = bundled_network("lenet5")
    assert num_ops(net.layers[0]) == 2 * 6 * 1 * 28 * 28 * 25
    assert fused_ops(net, 2) == 235200 + 2 * 16 * 6 * 100 * 25
    with pytest.raises(ContractError):
        num_ops(net.layers[1])


def test_trivial_params():
    # one K=1 level: delta_olm only, no trees
    from conftest import small_net
    net = small_net(1, 1, 1)
    plan = plan_network(net, 1)
    p = CycleParams(n=1, mp=0)
    assert cycles_ds1(plan, net, p).total_cycles == plan.alpha ** 2 * (2 + 1)


@pytest.mark.parametrize("field,lo,hi", [("delta_olm", 2, 3), ("delta_ola", 2, 4),
                                         ("n", 8, 12), ("mp", 0, 2), ("acc", 1, 3)])
def test_monotonic(lenet, field, lo, hi):
    net, plan = lenet
    for f in (cycles_ds1, cycles_ds2):
        a = f(plan, net, CycleParams(**{field: lo})).total_cycles
        b = f(plan, net, CycleParams(**{field: hi})).total_cycles
        assert a <= b


def test_baseline_hook(lenet):
    net, plan = lenet
    r = cycles_baseline(plan, net, level_terms=lambda lv, p: {"x": 1})
    assert r.total_cycles == 25 * (2 + 8)
    assert cycles_baseline(plan, net).total_cycles > cycles_ds1(plan, net).total_cycles


def test_invalid_plan_rejected(lenet):
    net, _ = lenet
    with pytest.raises(ContractError):
        cycles_ds1(FusionPlan("lenet5", 2, 1, 5, (16, 6), (12, 2)), net)


def test_traffic_lenet(lenet):
    net, plan = lenet
    lw = dram_traffic(net, 2)
    # conv1 1*32*32 + pool1 6*28*28 + conv2 6*14*14 + pool2 16*10*10 reads
    assert lw.bytes_in == 1024 + 4704 + 1176 + 1600
    assert lw.bytes_out == 4704 + 1176 + 1600 + 400
    assert lw.bytes_weights == 150 + 2400
    fu = dram_traffic(net, 2, plan)
    assert fu.bytes_in == 25 * 256 and fu.bytes_out == 400
    assert operational_intensity(fused_ops(net, 2), fu) > operational_intensity(
        fused_ops(net, 2), lw)
    with pytest.raises(ContractError):
        dram_traffic(net, 1, plan)


def test_traffic_scales_with_precision(lenet):
    net, plan = lenet
    assert dram_traffic(net, 2, plan, 16).bytes_total == 2 * dram_traffic(net, 2, plan).bytes_total


def test_single_level_fusion_matches_layerwise_conv_traffic():
    # with alpha = 1 a one-level plan reads exactly the input map once
    net = bundled_network("lenet5")
    whole = all_plans(net, 1)[-1]
    assert whole.alpha == 1
    fu = dram_traffic(net, 1, whole)
    assert fu.bytes_in == 32 * 32 and fu.bytes_out == 6 * 14 * 14
