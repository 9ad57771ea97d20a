"""Smoke test for the ulsched Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/ulsched-*.whl
"""

import json
import math
import os
import tempfile

import ulsched_py as us


def main():
    cfg = us.WlanConfig(6, 2, n_rus=9, n_slots=4, seed=7)
    chan = us.Channels.generate(cfg)
    gains = chan.gains(0)
    assert len(gains) == 6 and len(gains[0]) == 9

    eta = us.impact_factors(gains)
    assert all(abs(sum(row) - 9) < 1e-9 for row in eta)

    h = chan.h(0, 0, 0)
    assert len(h) == 2 and isinstance(h[0], complex)
    single = us.compute_sinr([h], 0.01)[0]
    expect = sum(abs(z) ** 2 for z in h) / 0.01
    assert math.isclose(single, expect, rel_tol=1e-10)

    assert us.mcs_rate(0.0) == 0.0
    assert us.mcs_rate(1e9) == us.mcs_rate(1e12)

    fixed, revoked = us.self_correct([[True, True], [True, False], [True, False]], 2)
    assert revoked == [0] and fixed == [[False, True], [False, False], [False, False]]

    bcq = us.bcq_assign(gains, 2, 2)
    assert sum(all(row) for row in bcq) == 2

    small = us.Channels.generate(us.WlanConfig(2, 1, n_rus=3, n_slots=1, seed=1))
    best, rate = us.oracle_assign(small, 0)
    assert rate >= small.rate_sum(0, us.bcq_assign(small.gains(0), 1, 1)) * (1 - 1e-12)

    row, status, _ = us.parse_intent(
        'ok: {"agent_id": 2, "assigned_rus": [1, 3], "reasoning": "x"}', 1, 9
    )
    assert status == "parse_success" and row[:3] == [True, False, True]
    row, status, detail = us.parse_intent("nope", 1, 9)
    assert status == "parse_error" and not any(row) and detail

    prompts = us.build_prompts(chan, 0, template="pt2")
    assert len(prompts) == 6 and "Agent_3" in prompts[2]

    base = us.run_episode(chan, "bcq:2")
    mock = us.run_episode(chan, "llm", mock="bcq:2")
    assert base.rate_sums == mock.rate_sums
    fp, fn, err = us.assignment_error(mock.proposed, base.assignments)
    assert err == 0.0
    assert us.performance_gain(base.rate_sums, base.rate_sums) == 0.0
    assert us.performance_gain([130.0], [100.0]) == 30.0
    assert us.rate_cdf(base.rate_sums)[-1][1] == 1.0
    assert json.loads(mock.to_json())["policy"]["kind"] == "llm"

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "t.wisr")
        chan.save(path)
        again = us.Channels.load(path)
        assert again.gains(3) == chan.gains(3)

    try:
        us.WlanConfig(0, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
