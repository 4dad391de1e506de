import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from remest.channel import ForwardSymbol, forward_transport
from remest.decoder import decoder_init, decoder_update
from remest.harness import AlwaysPolicy, NeverPolicy, simulate
from remest.model import scalar_example
from remest.source import draw_noise

A = np.array([[0.9]])


def test_examples():
    s0 = decoder_init([0.0])
    assert s0.xhat[0] == 0.0 and s0.staleness == 0
    s = decoder_update(s0, forward_transport(1, [2.0], 1), A)
    assert s.xhat[0] == 1.8 and s.staleness == 0
    s = decoder_update(decoder_init([1.0]), ForwardSymbol.idle(), A)
    assert s.xhat[0] == 0.9 and s.staleness == 1
    s = decoder_update(s, forward_transport(1, [5.0], 0), A)
    assert abs(s.xhat[0] - 0.81) < 1e-15 and s.staleness == 2


@given(x=st.floats(-10, 10), p=st.floats(-10, 10), a=st.floats(-2, 2), b=st.floats(-2, 2), kind=st.sampled_from(["payload", "lost", "idle"]))
def test_affine_in_state_and_payload(x, p, a, b, kind):
    def run(xh, pay):
        d, g = {"payload": (1, 1), "lost": (1, 0), "idle": (0, 0)}[kind]
        return decoder_update(decoder_init([xh]), forward_transport(d, [pay], g), A).xhat[0]

    lhs = run(a * x + b * p, a * p + b * x)
    rhs = a * run(x, p) + b * run(p, x)
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


def test_mismatch_recursion_matches_decoder(scalar, scalar_gains):
    p = scalar.with_channel(0.3, 0.4)
    rec = simulate(p, scalar_gains, AlwaysPolicy(), draw_noise(p, 3, 50))
    sigma = rec.sigma
    K = scalar_gains.K[:, 0, 0]
    e = rec.etilde[:, 0, 0].copy()
    for k in range(1, p.N + 1):
        e = (1 - sigma[:, k - 1]) * 0.9 * e + K[k] * rec.nu[:, k, 0]
        np.testing.assert_allclose(rec.etilde[:, k, 0], e, rtol=1e-10, atol=1e-10)


def test_unbiased_under_never(scalar, scalar_gains):
    rec = simulate(scalar, scalar_gains, NeverPolicy(), draw_noise(scalar, 6, 20000))
    m = rec.etilde[:, :, 0].mean(axis=0)
    se = rec.etilde[:, :, 0].std(axis=0, ddof=1) / np.sqrt(20000)
    assert np.max(np.abs(m / se)) < 4.5
