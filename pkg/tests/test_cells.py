import numpy as np
import pytest

from fraudseq import cells
from fraudseq.cells import (
    CellState,
    GruParams,
    LstmParams,
    PhasedGateParams,
    TimeLstmParams,
    bi_encode_sequence,
    encode_sequence,
    gru_step,
    lstm_step,
    phased_gate,
    phased_lstm_step,
    time_lstm_step,
)
from fraudseq.numeric import ParamStore, finite_diff_check


def zero_lstm(d, k):
    z = lambda *s: np.zeros(s)
    return LstmParams(W_i=z(d, k), W_f=z(d, k), W_c=z(d, k), W_g=z(d, k),
                      U_i=z(k, k), U_f=z(k, k), U_o=z(k, k), U_g=z(k, k),
                      b_i=z(k), b_f=z(k), b_c=z(k), b_g=z(k))


def ones_lstm_scalar():
    o = lambda *s: np.ones(s)
    return LstmParams(W_i=o(1, 1), W_f=o(1, 1), W_c=o(1, 1), W_g=o(1, 1),
                      U_i=o(1, 1), U_f=o(1, 1), U_o=o(1, 1), U_g=o(1, 1),
                      b_i=np.zeros(1), b_f=np.zeros(1), b_c=np.zeros(1), b_g=np.zeros(1))


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def scalar_lstm_oracle(x, h, m, p):
    """Straight-line evaluation of the six cell equations for d=k=1."""
    i = sig(x * p.W_i[0, 0] + h * p.U_i[0, 0] + p.b_i[0])
    f = sig(x * p.W_f[0, 0] + h * p.U_f[0, 0] + p.b_f[0])
    o = sig(x * p.W_c[0, 0] + h * p.U_o[0, 0] + p.b_c[0])
    g = np.tanh(x * p.W_g[0, 0] + h * p.U_g[0, 0] + p.b_g[0])
    m_t = f * m + i * g
    h_t = o * np.tanh(m_t)
    return h_t, m_t


class TestLstmStep:
    def test_all_zero(self):
        p = zero_lstm(2, 3)
        out = lstm_step(np.zeros(2), CellState.zeros(3), p)
        np.testing.assert_array_equal(out.h, np.zeros(3))
        np.testing.assert_array_equal(out.m, np.zeros(3))

    def test_hand_forced_scalars(self):
        p = ones_lstm_scalar()
        out = lstm_step(np.zeros(1), CellState.zeros(1), p)
        # i = f = o = 0.5, g = 0 -> m = 0, h = 0
        assert out.m[0] == 0.0
        assert out.h[0] == 0.0

    def test_random_scalar_vs_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            p = LstmParams.create(1, 1, rng)
            x, h, m = rng.normal(size=3)
            got = lstm_step(np.array([x]), CellState(np.array([h]), np.array([m])), p)
            h_t, m_t = scalar_lstm_oracle(x, h, m, p)
            assert abs(got.h[0] - h_t) < 1e-12
            assert abs(got.m[0] - m_t) < 1e-12

    def test_shape_mismatch(self):
        p = zero_lstm(2, 3)
        with pytest.raises(Exception, match="shape"):
            lstm_step(np.zeros(5), CellState.zeros(3), p)

    def test_gate_ranges(self):
        rng = np.random.default_rng(6)
        p = LstmParams.create(3, 4, rng)
        state = CellState.zeros(4)
        for _ in range(20):
            state = lstm_step(rng.normal(size=3) * 3, state, p)
            assert np.all(np.abs(state.h) < 1.0)


class TestGruStep:
    def test_zero(self):
        z = lambda *s: np.zeros(s)
        p = GruParams(W_z=z(2, 3), W_r=z(2, 3), W_h=z(2, 3),
                      U_z=z(3, 3), U_r=z(3, 3), U_h=z(3, 3),
                      b_z=z(3), b_r=z(3), b_h=z(3))
        np.testing.assert_array_equal(gru_step(np.zeros(2), np.zeros(3), p), np.zeros(3))

    def test_saturated_update_gate_keeps_state(self):
        rng = np.random.default_rng(7)
        p = GruParams.create(2, 3, rng)
        p.b_z[...] = 40.0  # update gate ~1 -> h_t ~ prev_h
        prev = rng.uniform(-0.9, 0.9, size=3)
        out = gru_step(rng.normal(size=2), prev, p)
        np.testing.assert_allclose(out, prev, atol=1e-6)

    def test_random_scalar_vs_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            p = GruParams.create(1, 1, rng)
            x, h = rng.normal(size=2)
            z = sig(x * p.W_z[0, 0] + h * p.U_z[0, 0] + p.b_z[0])
            r = sig(x * p.W_r[0, 0] + h * p.U_r[0, 0] + p.b_r[0])
            cand = np.tanh(x * p.W_h[0, 0] + (r * h) * p.U_h[0, 0] + p.b_h[0])
            want = z * h + (1 - z) * cand
            got = gru_step(np.array([x]), np.array([h]), p)
            assert abs(got[0] - want) < 1e-12

    def test_output_range(self):
        rng = np.random.default_rng(9)
        p = GruParams.create(2, 4, rng)
        h = np.zeros(4)
        for _ in range(30):
            h = gru_step(rng.normal(size=2) * 2, h, p)
            assert np.all(np.abs(h) < 1.0)


class TestPhasedGate:
    def gate(self, **kw):
        args = dict(tau=1.0, s=0.0, r_on=0.5, alpha=0.001)
        args.update(kw)
        return PhasedGateParams.from_tau(**args)

    def test_opening_boundary(self):
        assert phased_gate(0.0, self.gate()) == 0.0

    def test_peak(self):
        assert abs(phased_gate(0.25, self.gate()) - 1.0) <= 1e-12

    def test_closing_boundary(self):
        # phi = r_on falls in the leak branch
        g = self.gate()
        assert abs(phased_gate(0.5, g) - 0.001 * 0.5) <= 1e-12

    def test_leak_branch(self):
        assert abs(phased_gate(0.75, self.gate()) - 0.00075) <= 1e-12

    def test_periodicity(self):
        g = self.gate(tau=3.7, s=0.4)
        for t in (0.1, 1.3, 2.9, 3.6):
            assert abs(phased_gate(t, g) - phased_gate(t + 3.7, g)) <= 1e-12

    def test_range(self):
        g = self.gate(tau=2.0, s=0.3)
        ts = np.linspace(0, 6, 500)
        ks = np.array([phased_gate(t, g) for t in ts])
        assert np.all((ks >= 0.0) & (ks <= 1.0))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            PhasedGateParams.from_tau(tau=-1.0, s=0.0)
        with pytest.raises(ValueError):
            PhasedGateParams.from_tau(tau=1.0, s=0.0, r_on=0.0)


class TestPhasedLstmStep:
    def setup_method(self):
        rng = np.random.default_rng(10)
        self.p = LstmParams.create(2, 3, rng)
        self.x = rng.normal(size=2)
        self.prev = CellState(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3))

    def test_gate_fully_open_equals_plain_step(self):
        # t = s + tau * r_on/2 -> phi = r_on/2 -> k = 1
        g = PhasedGateParams.from_tau(tau=4.0, s=0.0, r_on=0.5)
        out = phased_lstm_step(self.x, 4.0 * 0.25, self.prev, self.p, g)
        plain = lstm_step(self.x, self.prev, self.p)
        np.testing.assert_allclose(out.h, plain.h, atol=1e-15)
        np.testing.assert_allclose(out.m, plain.m, atol=1e-15)

    def test_gate_closed_is_noop(self):
        g = PhasedGateParams.from_tau(tau=4.0, s=0.0, r_on=0.5, alpha=0.0)
        out = phased_lstm_step(self.x, 4.0 * 0.9, self.prev, self.p, g)
        np.testing.assert_array_equal(out.h, self.prev.h)
        np.testing.assert_array_equal(out.m, self.prev.m)

    def test_half_open_is_midpoint(self):
        # phi = r_on/4 -> k = 0.5
        g = PhasedGateParams.from_tau(tau=4.0, s=0.0, r_on=0.5)
        out = phased_lstm_step(self.x, 4.0 * 0.125, self.prev, self.p, g)
        plain = lstm_step(self.x, self.prev, self.p)
        np.testing.assert_allclose(out.h, 0.5 * (plain.h + self.prev.h), atol=1e-12)
        np.testing.assert_allclose(out.m, 0.5 * (plain.m + self.prev.m), atol=1e-12)


class TestTimeLstmStep:
    def test_zero_param_trace(self):
        z = lambda *s: np.zeros(s)
        base = zero_lstm(2, 3)
        import dataclasses
        p = TimeLstmParams(**dataclasses.asdict(base), W_xt=z(2, 3), W_tt=z(1, 3),
                           b_t=z(3), W_to=z(1, 3), w_co=z(3))
        out = time_lstm_step(np.zeros(2), 0.0, CellState.zeros(3), p)
        # T_m = sigmoid(tanh(0)) = 0.5 but the candidate is 0 -> state stays 0
        np.testing.assert_array_equal(out.m, np.zeros(3))
        np.testing.assert_array_equal(out.h, np.zeros(3))

    def test_saturated_interval_gate_reduces_to_lstm(self):
        rng = np.random.default_rng(11)
        base = LstmParams.create(2, 3, rng)
        import dataclasses
        p = TimeLstmParams(**dataclasses.asdict(base),
                           W_xt=np.zeros((2, 3)), W_tt=np.zeros((1, 3)),
                           b_t=np.full(3, 40.0), W_to=np.zeros((1, 3)),
                           w_co=np.zeros(3))
        prev = CellState(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3))
        x = rng.normal(size=2)
        out = time_lstm_step(x, 2.5, prev, p)
        plain = lstm_step(x, prev, base)
        np.testing.assert_allclose(out.h, plain.h, atol=1e-6)
        np.testing.assert_allclose(out.m, plain.m, atol=1e-6)

    def test_random_scalar_vs_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            p = TimeLstmParams.create(1, 1, rng)
            x, h, m = rng.normal(size=3)
            dt = float(rng.uniform(0, 5))
            i = sig(x * p.W_i[0, 0] + h * p.U_i[0, 0] + p.b_i[0])
            f = sig(x * p.W_f[0, 0] + h * p.U_f[0, 0] + p.b_f[0])
            T = sig(x * p.W_xt[0, 0] + np.tanh(dt * p.W_tt[0, 0]) + p.b_t[0])
            cand = np.tanh(x * p.W_g[0, 0] + h * p.U_g[0, 0] + p.b_g[0])
            m_t = f * m + i * T * cand
            o = sig(x * p.W_c[0, 0] + dt * p.W_to[0, 0] + h * p.U_o[0, 0]
                    + p.w_co[0] * m_t + p.b_c[0])
            h_t = o * np.tanh(m_t)
            got = time_lstm_step(np.array([x]),
                                 dt, CellState(np.array([h]), np.array([m])), p)
            assert abs(got.h[0] - h_t) < 1e-12
            assert abs(got.m[0] - m_t) < 1e-12

    def test_negative_dt(self):
        p = TimeLstmParams.create(2, 3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            time_lstm_step(np.zeros(2), -1.0, CellState.zeros(3), p)


class TestEncodeSequence:
    def test_single_step(self):
        rng = np.random.default_rng(13)
        p = LstmParams.create(2, 3, rng)
        x = rng.normal(size=(1, 2))
        H = encode_sequence(x, "lstm", p)
        want = lstm_step(x[0], CellState.zeros(3), p).h
        np.testing.assert_array_equal(H[0], want)

    def test_zero_everything(self):
        p = zero_lstm(2, 3)
        H = encode_sequence(np.zeros((4, 2)), "lstm", p)
        np.testing.assert_array_equal(H, np.zeros((4, 3)))

    def test_chained_scalar_oracle(self):
        rng = np.random.default_rng(14)
        p = LstmParams.create(1, 1, rng)
        xs = rng.normal(size=(3, 1))
        H = encode_sequence(xs, "lstm", p)
        h = m = 0.0
        for t in range(3):
            h, m = scalar_lstm_oracle(xs[t, 0], h, m, p)
            assert abs(H[t, 0] - h) < 1e-12

    def test_prefix_causality(self):
        rng = np.random.default_rng(15)
        p = LstmParams.create(2, 3, rng)
        xs = rng.normal(size=(6, 2))
        H = encode_sequence(xs, "lstm", p)
        for j in (1, 3, 5):
            np.testing.assert_array_equal(encode_sequence(xs[:j], "lstm", p), H[:j])

    def test_empty(self):
        p = zero_lstm(2, 3)
        with pytest.raises(ValueError):
            encode_sequence(np.zeros((0, 2)), "lstm", p)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="cell kind"):
            encode_sequence(np.zeros((1, 2)), "wavenet", zero_lstm(2, 3))


class TestBiEncode:
    def test_single_row_is_concat(self):
        rng = np.random.default_rng(16)
        pf = LstmParams.create(2, 3, rng)
        pb = LstmParams.create(2, 3, rng)
        x = rng.normal(size=(1, 2))
        H = bi_encode_sequence(x, pf, pb)
        np.testing.assert_array_equal(H[0, :3], lstm_step(x[0], CellState.zeros(3), pf).h)
        np.testing.assert_array_equal(H[0, 3:], lstm_step(x[0], CellState.zeros(3), pb).h)

    def test_palindrome_symmetry(self):
        rng = np.random.default_rng(17)
        p = LstmParams.create(2, 3, rng)
        half = rng.normal(size=(3, 2))
        xs = np.vstack([half, half[::-1]])  # palindrome
        H = bi_encode_sequence(xs, p, p)
        n = xs.shape[0]
        for i in range(n):
            np.testing.assert_allclose(H[i, :3], H[n - 1 - i, 3:], atol=1e-12)

    def test_compositional_oracle(self):
        rng = np.random.default_rng(18)
        pf = LstmParams.create(2, 4, rng)
        pb = LstmParams.create(2, 4, rng)
        xs = rng.normal(size=(5, 2))
        H = bi_encode_sequence(xs, pf, pb)
        np.testing.assert_allclose(H[:, :4], encode_sequence(xs, "lstm", pf), atol=1e-15)
        np.testing.assert_allclose(H[:, 4:],
                                   encode_sequence(xs[::-1], "lstm", pb)[::-1], atol=1e-15)


class TestBatchedEncoders:
    """The padded-batch paths must reproduce the reference semantics."""

    def setup_method(self):
        rng = np.random.default_rng(19)
        self.rng = rng
        self.B, self.T, self.d, self.k = 4, 6, 3, 4
        self.lengths = np.array([6, 1, 4, 3])
        X = rng.normal(size=(self.B, self.T, self.d))
        for b, n in enumerate(self.lengths):
            X[b, n:] = 0.0
        self.X = X

    def test_lstm(self):
        p = LstmParams.create(self.d, self.k, self.rng)
        H, _ = cells.lstm_forward(self.X, p)
        for b, n in enumerate(self.lengths):
            np.testing.assert_allclose(H[b, :n], encode_sequence(self.X[b, :n], "lstm", p),
                                       atol=1e-12)

    def test_gru(self):
        p = GruParams.create(self.d, self.k, self.rng)
        H, _ = cells.gru_forward(self.X, p)
        for b, n in enumerate(self.lengths):
            np.testing.assert_allclose(H[b, :n], encode_sequence(self.X[b, :n], "gru", p),
                                       atol=1e-12)

    def test_plstm(self):
        p = LstmParams.create(self.d, self.k, self.rng)
        g = PhasedGateParams.create(self.k, self.rng, tau_min=10, tau_max=500)
        times = np.cumsum(self.rng.uniform(1, 40, size=(self.B, self.T)), axis=1)
        H, _ = cells.plstm_forward(self.X, times, p, g)
        for b, n in enumerate(self.lengths):
            ref = encode_sequence(self.X[b, :n], "plstm", (p, g), times=times[b, :n])
            np.testing.assert_allclose(H[b, :n], ref, atol=1e-12)

    def test_tlstm(self):
        p = TimeLstmParams.create(self.d, self.k, self.rng)
        dts = self.rng.uniform(0, 4, size=(self.B, self.T))
        H, _ = cells.tlstm_forward(self.X, dts, p)
        for b, n in enumerate(self.lengths):
            ref = encode_sequence(self.X[b, :n], "tlstm", p, dts=dts[b, :n])
            np.testing.assert_allclose(H[b, :n], ref, atol=1e-12)

    def test_bilstm(self):
        pf = LstmParams.create(self.d, self.k, self.rng)
        pb = LstmParams.create(self.d, self.k, self.rng)
        H, _ = cells.bilstm_forward(self.X, self.lengths, pf, pb)
        for b, n in enumerate(self.lengths):
            np.testing.assert_allclose(H[b, :n], bi_encode_sequence(self.X[b, :n], pf, pb),
                                       atol=1e-12)


def _masked_weights(rng, lengths, B, T, k):
    C = rng.normal(size=(B, T, k))
    for b, n in enumerate(lengths):
        C[b, n:] = 0.0
    return C


class TestCellGradients:
    """Finite-difference checks of every batched backward pass,
    including gradients w.r.t. the inputs."""

    def check(self, kind, seed=21):
        rng = np.random.default_rng(seed)
        B, T, d, k = 3, 5, 2, 3
        lengths = np.array([5, 2, 4])
        store = ParamStore()
        X0 = rng.normal(size=(B, T, d)) * 0.6
        Xv, Xg = store.register("X", X0)
        C = _masked_weights(rng, lengths, B, T, 2 * k if kind == "bilstm" else k)

        if kind == "bilstm":
            pf = LstmParams.create(d, k, rng)
            gf = pf.register(store, "fwd")
            pb = LstmParams.create(d, k, rng)
            gb = pb.register(store, "bwd")

            def loss():
                H, cache = cells.bilstm_forward(Xv, lengths, pf, pb)
                Xg[...] += cells.bilstm_backward(C, cache, pf, pb, gf, gb)
                return float((H * C).sum())
        elif kind == "gru":
            p = GruParams.create(d, k, rng)
            g = p.register(store, "cell")

            def loss():
                H, cache = cells.gru_forward(Xv, p)
                Xg[...] += cells.gru_backward(C, cache, p, g)
                return float((H * C).sum())
        elif kind == "plstm":
            p = LstmParams.create(d, k, rng)
            g = p.register(store, "cell")
            gate = PhasedGateParams.create(k, rng, tau_min=50, tau_max=400)
            gate_g = gate.register(store, "gate")
            times = np.cumsum(rng.uniform(1, 20, size=(B, T)), axis=1)

            def loss():
                H, cache = cells.plstm_forward(Xv, times, p, gate)
                Xg[...] += cells.plstm_backward(C, cache, p, g, gate, gate_g)
                return float((H * C).sum())
        elif kind == "tlstm":
            p = TimeLstmParams.create(d, k, rng)
            g = p.register(store, "cell")
            dts = rng.uniform(0, 3, size=(B, T))

            def loss():
                H, cache = cells.tlstm_forward(Xv, dts, p)
                Xg[...] += cells.tlstm_backward(C, cache, p, g)
                return float((H * C).sum())
        else:
            p = LstmParams.create(d, k, rng)
            g = p.register(store, "cell")

            def loss():
                H, cache = cells.lstm_forward(Xv, p)
                Xg[...] += cells.lstm_backward(C, cache, p, g)
                return float((H * C).sum())

        report = finite_diff_check(loss, store, eps=1e-4, tol=1e-4)
        assert report.passed, (kind, report.worst_param, report.worst_err)

    @pytest.mark.parametrize("kind", ["lstm", "gru", "bilstm", "plstm", "tlstm"])
    def test_gradients(self, kind):
        self.check(kind)
