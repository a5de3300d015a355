"""Smoke test for the stcnet Python extension.

Build and copy the module first:

    cargo build --release -p stcnet-py
    cp target/release/libstcnet_py.so python/stcnet_py.so
    python3 python/smoke.py
"""
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import stcnet_py as st

ROOM = """
format_version = 1
[lipschitz]
inner_count = 100
outer_count = 20
[[class]]
id = "room"
benchmark = "room"
state_counts = [31]
input_counts = [31]
"""


def main():
    m = st.margins(-956.86, 0.0, 8990.0, 4250.0, 0.1)
    assert abs(m["m1"] + 57.86) < 1e-9 and abs(m["m2"] + 531.86) < 1e-9, m
    assert m["holds"] is False  # default sigma = phi = 0 gives no gap

    t = st.Template.full_degree(1, 2)
    assert len(t) == 3
    assert t.eval([1.0, 2.0, 3.0], [2.0]) == sum(c * 2.0**a[0] for c, a in zip([1.0, 2.0, 3.0], t.terms))

    x = st.room_step(11.0, 12.0)
    assert math.isfinite(x)
    assert len(st.platoon_step([0.5, 0.5], [0.0, 0.0])) == 2
    assert abs(st.grid_dispersion([0.0], [1.0], [11]) - 0.05) < 1e-12

    cert = st.synthesize(ROOM)
    assert cert.certified, cert
    (row,) = cert.summary()
    print("room: eta=%.4f l1=%.2f l2=%.2f m1=%.4f m2=%.4f" % (row["eta"], row["l1"], row["l2"], row["m1"], row["m2"]))
    assert row["m1"] <= 0 and row["m2"] <= 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "certificate.json")
        cert.save(path)
        again = st.Certificate.load(path)
        assert again.to_json() == cert.to_json()
        assert again.eval("room", [11.0]) == cert.eval("room", [11.0])
        assert cert.eval_network([[11.0], [11.5]], [0, 0]) == cert.eval("room", [11.0]) + cert.eval("room", [11.5])

    value, maxima = st.estimate_lipschitz(lambda v: math.sin(v[0]), [-3.0], [3.0], inner=100, outer=20, seed=7)
    assert len(maxima) == 20 and abs(value - 1.0) < 1e-3, value

    try:
        st.synthesize(ROOM.replace("format_version = 1", "format_version = 9"))
    except ValueError as e:
        assert "version" in str(e)
    else:
        raise AssertionError("bad version accepted")

    print("smoke ok")


if __name__ == "__main__":
    main()
