import math

import numpy as np
import pytest

from tncode.channels import (
    KrausChannel,
    ZeroProbabilityError,
    choi_from_ptm,
    select_correction,
)
from tncode.decoder import DecoderConfig, build_code_network, impose_syndrome, logical_choi
from tncode.lattice import PauliFrame, Syndrome, build_lattice
from tncode.noise import (
    CapacityError,
    IsingParams,
    amplitude_damping,
    cbf_exact_distribution,
    cbf_network_factors,
    iid_network_factors,
)
from tncode.oracles import (
    DefectGraph,
    DenseChannelOracle,
    DenseSyndromeSampler,
    build_defect_graph,
    dense_logical_channel,
    ml_decode_cbf_exact,
    mwpm_decode,
    mwpm_frame,
    optimal_decode_dense,
    sample_syndrome_general,
    _min_weight_pairing,
)

EXACT = DecoderConfig(chi=None, norm="trace", tol=1e-14)


def identity_channel():
    return KrausChannel([np.eye(2)])


def network_table(lat, noise, s):
    net = impose_syndrome(
        build_code_network(lat, noise), s, lat.recovery_frame(s)
    )
    return logical_choi(net, lat, EXACT)


def side_minimum(lat, s, kind):
    """Exhaustive minimum frame weight for one matching side."""
    n = lat.n_qubits
    best = None
    for mask in range(1 << n):
        frame = PauliFrame(mask, 0) if kind == "z" else PauliFrame(0, mask)
        got = lat.syndrome_of(frame)
        match = all(
            got.bits[i] == s.bits[i]
            for i, f in enumerate(lat.checks)
            if f.kind == kind
        )
        if match and (best is None or mask.bit_count() < best):
            best = mask.bit_count()
    return best


class TestDefectGraph:
    def test_trivial_syndrome_has_no_defects(self):
        lat = build_lattice(3, 3)
        for kind in ("x", "z"):
            g = build_defect_graph(Syndrome.from_int(0, 8), lat, kind)
            assert g.defects == ()
            assert g.boundary_weights == ()

    def test_single_defect_reaches_nearest_open_slot(self):
        lat = build_lattice(3, 3)
        flagged = next(
            i for i, f in enumerate(lat.checks) if f.kind == "z" and (f.row, f.col) == (1, 0)
        )
        s = Syndrome(tuple(1 if i == flagged else 0 for i in range(8)))
        g = build_defect_graph(s, lat, "z")
        assert g.defects == ((1, 0),)
        assert g.boundary_weights == (1,)
        assert g.exits == ((0, -1),)

    def test_adjacent_interior_pair_weight_is_one(self):
        lat = build_lattice(3, 3)
        bits = [0] * 8
        for i, f in enumerate(lat.checks):
            if f.kind == "z" and (f.row, f.col) in ((0, 1), (1, 0)):
                bits[i] = 1
        g = build_defect_graph(Syndrome(tuple(bits)), lat, "z")
        assert len(g.defects) == 2
        assert g.pair_weights[0][1] == 1

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            DefectGraph("z", ((0, 1),), ((0,),), (-1,), ((0, -1),))


class TestPairing:
    def test_prefers_cheap_pair_over_boundaries(self):
        g = DefectGraph("z", ((0, 1), (1, 0)), ((0, 1), (1, 0)), (5, 5), ((0, -1), (0, -1)))
        total, pairs, singles = _min_weight_pairing(g)
        assert total == 1
        assert pairs == [(0, 1)]
        assert singles == []

    def test_prefers_boundaries_over_costly_pair(self):
        g = DefectGraph("z", ((0, 1), (1, 0)), ((0, 9), (9, 0)), (1, 2), ((0, -1), (0, -1)))
        total, pairs, singles = _min_weight_pairing(g)
        assert total == 3
        assert pairs == []
        assert sorted(singles) == [0, 1]

    def test_tie_goes_to_boundary(self):
        g = DefectGraph("z", ((0, 1), (1, 0)), ((0, 2), (2, 0)), (1, 1), ((0, -1), (0, -1)))
        total, pairs, singles = _min_weight_pairing(g)
        assert total == 2
        assert pairs == []
        assert sorted(singles) == [0, 1]

    def test_capacity_guard(self):
        k = 17
        pair = tuple(tuple(1 for _ in range(k)) for _ in range(k))
        g = DefectGraph("z", tuple((0, i) for i in range(k)), pair, (1,) * k, ((0, -1),) * k)
        with pytest.raises(CapacityError):
            _min_weight_pairing(g)

    def test_fully_flagged_sector_is_within_capacity(self):
        # every z check of the distance-five lattice can flag at once, so
        # twelve defects must stay under the subset cap
        lat = build_lattice(5, 5)
        bits = [1 if f.kind == "z" else 0 for f in lat.checks]
        frame = mwpm_frame(Syndrome(tuple(bits)), lat)
        assert lat.syndrome_of(frame) == Syndrome(tuple(bits))


class TestMwpm:
    def test_trivial_syndrome(self):
        lat = build_lattice(3, 3)
        assert mwpm_decode(Syndrome.from_int(0, 8), lat) == "I"

    def test_adjacent_defects_use_the_shared_qubit(self):
        lat = build_lattice(3, 3)
        bits = [0] * 8
        for i, f in enumerate(lat.checks):
            if f.kind == "z" and (f.row, f.col) in ((0, 1), (1, 0)):
                bits[i] = 1
        s = Syndrome(tuple(bits))
        frame = mwpm_frame(s, lat)
        assert frame.weight == 1
        assert frame.x_mask == 1 << lat.qubit_index(1, 1)
        assert frame.weight == side_minimum(lat, s, "z")

    @pytest.mark.parametrize("code", range(0, 256, 7))
    def test_frame_reproduces_syndrome(self, code):
        lat = build_lattice(3, 3)
        s = Syndrome.from_int(code, 8)
        frame = mwpm_frame(s, lat)
        assert lat.syndrome_of(frame) == s
        assert mwpm_decode(s, lat) in ("I", "X", "Y", "Z")

    def test_weight_matches_exhaustive_minimum(self):
        lat = build_lattice(3, 3)
        for code in range(256):
            s = Syndrome.from_int(code, 8)
            frame = mwpm_frame(s, lat)
            assert frame.x_mask.bit_count() == side_minimum(lat, s, "z"), code
            assert frame.z_mask.bit_count() == side_minimum(lat, s, "x"), code

    def test_larger_lattice_round_trip(self):
        lat = build_lattice(5, 5)
        rng = np.random.default_rng(11)
        for _ in range(25):
            s = Syndrome(tuple(rng.integers(0, 2, size=lat.n_checks).tolist()))
            frame = mwpm_frame(s, lat)
            assert lat.syndrome_of(frame) == s
            assert frame.weight <= lat.recovery_frame(s).weight


class TestDenseChannel:
    def test_identity_noise_trivial_syndrome(self):
        lat = build_lattice(3, 3)
        lc, p_s = dense_logical_channel(
            Syndrome.from_int(0, 8), identity_channel(), lat
        )
        assert p_s == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(lc.c, 2.0 * np.eye(4), atol=1e-12)

    def test_identity_noise_other_syndromes_vanish(self):
        lat = build_lattice(3, 3)
        oracle = DenseChannelOracle(identity_channel(), lat)
        for code in (1, 40, 255):
            _, p_s = oracle.channel(Syndrome.from_int(code, 8))
            assert abs(p_s) < 1e-14

    def test_damping_probabilities_sum_to_one(self):
        lat = build_lattice(3, 3)
        oracle = DenseChannelOracle(amplitude_damping(0.2), lat)
        total = sum(
            oracle.channel(Syndrome.from_int(code, 8))[1] for code in range(256)
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_damping_channels_are_physical(self):
        lat = build_lattice(3, 3)
        oracle = DenseChannelOracle(amplitude_damping(0.2), lat)
        rng = np.random.default_rng(5)
        for code in rng.integers(0, 256, size=8):
            lc, p_s = oracle.channel(Syndrome.from_int(int(code), 8))
            assert p_s > 0.0
            eigs = np.linalg.eigvalsh(choi_from_ptm(lc.normalized_ptm()))
            assert eigs.min() > -1e-10

    def test_pure_dephasing_cannot_flag_z_checks(self):
        lat = build_lattice(3, 3)
        noise = KrausChannel([math.sqrt(0.8) * np.eye(2), math.sqrt(0.2) * np.diag([1, -1])])
        flagged = next(i for i, f in enumerate(lat.checks) if f.kind == "z")
        s = Syndrome(tuple(1 if i == flagged else 0 for i in range(8)))
        lc, p_s = dense_logical_channel(s, noise, lat)
        assert abs(p_s) < 1e-12
        assert np.max(np.abs(lc.c)) < 1e-12

    def test_network_matches_dense_for_damping(self):
        lat = build_lattice(3, 3)
        gamma = 0.2
        oracle = DenseChannelOracle(amplitude_damping(gamma), lat)
        noise = iid_network_factors(amplitude_damping(gamma), lat)
        net = build_code_network(lat, noise)
        rng = np.random.default_rng(17)
        for code in rng.integers(0, 256, size=6):
            s = Syndrome.from_int(int(code), 8)
            dense_lc, _ = oracle.channel(s)
            tn = logical_choi(
                impose_syndrome(net, s, lat.recovery_frame(s)), lat, EXACT
            )
            scaled = tn.c * math.exp(tn.log_magnitude)
            scale = np.max(np.abs(dense_lc.c))
            assert np.max(np.abs(scaled - dense_lc.c)) < 1e-10 * scale

    def test_network_matches_dense_for_flip_mixture(self):
        lat = build_lattice(3, 3)
        params = IsingParams(1.0, 0.01, 1.0, 0.0)
        dist = cbf_exact_distribution(params, lat)
        mixture = [
            (float(p), sigma_frame)
            for p, sigma_frame in zip(
                dist.probabilities,
                (
                    PauliFrame(int(sum(1 << i for i in range(lat.n_qubits) if row[i] < 0)), 0)
                    for row in dist.spins
                ),
            )
        ]
        oracle = DenseChannelOracle(mixture, lat)
        net = build_code_network(lat, cbf_network_factors(params, lat))
        z0 = dist.partition_function
        s = Syndrome.from_int(96, 8)
        dense_lc, dense_p = oracle.channel(s)
        tn = network_table(lat, cbf_network_factors(params, lat), s)
        assert tn.syndrome_probability() / dense_p == pytest.approx(z0, rel=1e-9)
        assert np.allclose(
            tn.normalized_ptm(), dense_lc.normalized_ptm(), atol=1e-9
        )

    def test_trivial_syndrome_decodes_to_identity(self):
        lat = build_lattice(3, 3)
        label = optimal_decode_dense(
            Syndrome.from_int(0, 8), amplitude_damping(0.09), lat, norm="trace"
        )
        assert label == "I"

    def test_matching_disagrees_with_optimal_somewhere(self):
        lat = build_lattice(3, 3)
        oracle = DenseChannelOracle(amplitude_damping(0.2), lat)
        found = False
        for code in range(256):
            s = Syndrome.from_int(code, 8)
            lc, p_s = oracle.channel(s)
            if p_s < 1e-12:
                continue
            if select_correction(lc, norm="trace") != mwpm_decode(s, lat):
                found = True
                break
        assert found

    def test_capacity_guard(self):
        lat = build_lattice(4, 4)
        with pytest.raises(CapacityError):
            dense_logical_channel(
                Syndrome.from_int(0, lat.n_checks), identity_channel(), lat
            )


class TestMlCbf:
    def test_trivial_syndrome_cold(self):
        lat = build_lattice(3, 3)
        p = IsingParams(3.0, 0.01, 1.0, -1.5)
        assert ml_decode_cbf_exact(Syndrome.from_int(0, 8), p, lat) == "I"

    def test_infinite_temperature_ties_to_identity(self):
        lat = build_lattice(3, 3)
        p = IsingParams(0.0, 0.01, 1.0, -1.5)
        assert ml_decode_cbf_exact(Syndrome.from_int(0, 8), p, lat) == "I"

    def test_flagged_x_check_is_unreachable(self):
        lat = build_lattice(3, 3)
        flagged = next(i for i, f in enumerate(lat.checks) if f.kind == "x")
        s = Syndrome(tuple(1 if i == flagged else 0 for i in range(8)))
        with pytest.raises(ZeroProbabilityError):
            ml_decode_cbf_exact(s, IsingParams(1.0, 0.01, 1.0, -1.5), lat)

    def test_coupling_to_checks_never_changes_the_answer(self):
        lat = build_lattice(3, 3)
        with_term = IsingParams(1.0, 0.01, 1.0, -1.5)
        without = IsingParams(1.0, 0.01, 1.0, 0.0)
        for code in range(256):
            s = Syndrome.from_int(code, 8)
            try:
                a = ml_decode_cbf_exact(s, with_term, lat)
            except ZeroProbabilityError:
                with pytest.raises(ZeroProbabilityError):
                    ml_decode_cbf_exact(s, without, lat)
                continue
            assert a == ml_decode_cbf_exact(s, without, lat)

    def test_agrees_with_network_on_reachable_syndromes(self):
        lat = build_lattice(3, 3)
        params = IsingParams(1.0, 0.01, 1.0, -1.5)
        noise = cbf_network_factors(params, lat)
        cfg = DecoderConfig(chi=8, norm="trace", tol=1e-12)
        net = build_code_network(lat, noise)
        for code in (0, 16, 48, 96, 160, 240):
            s = Syndrome.from_int(code, 8)
            imposed = impose_syndrome(net, s, lat.recovery_frame(s))
            lc = logical_choi(imposed, lat, cfg)
            assert select_correction(lc, norm="trace") == ml_decode_cbf_exact(
                s, params, lat
            )


class TestSampler:
    def test_identity_noise_always_trivial(self):
        lat = build_lattice(3, 3)
        sampler = DenseSyndromeSampler(identity_channel(), lat)
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert sampler.sample(rng).as_int() == 0

    def test_deterministic_flip_gives_its_syndrome(self):
        lat = build_lattice(3, 3)
        flip = KrausChannel([np.array([[0, 1], [1, 0]])])
        site_channels = [
            flip if (r, c) == (1, 1) else identity_channel()
            for r in range(3)
            for c in range(3)
        ]
        expected = lat.syndrome_of(
            PauliFrame(1 << lat.qubit_index(1, 1), 0)
        )
        sampler = DenseSyndromeSampler(site_channels, lat)
        rng = np.random.default_rng(1)
        for _ in range(20):
            assert sampler.sample(rng) == expected

    def test_chain_rule_matches_dense_probabilities_small(self):
        lat = build_lattice(2, 2)
        sampler = DenseSyndromeSampler(amplitude_damping(0.3), lat)
        oracle = DenseChannelOracle(amplitude_damping(0.3), lat)
        total = 0.0
        for code in range(1 << lat.n_checks):
            s = Syndrome.from_int(code, lat.n_checks)
            p_chain = sampler.syndrome_probability(s)
            _, p_dense = oracle.channel(s)
            assert p_chain == pytest.approx(p_dense, abs=1e-13)
            total += p_chain
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_chain_rule_matches_dense_probabilities_spot(self):
        lat = build_lattice(3, 3)
        sampler = DenseSyndromeSampler(amplitude_damping(0.2), lat)
        oracle = DenseChannelOracle(amplitude_damping(0.2), lat)
        rng = np.random.default_rng(3)
        for code in rng.integers(0, 256, size=20):
            s = Syndrome.from_int(int(code), 8)
            assert sampler.syndrome_probability(s) == pytest.approx(
                oracle.channel(s)[1], abs=1e-13
            )

    def test_flip_mixture_matches_direct_enumeration(self):
        lat = build_lattice(3, 3)
        params = IsingParams(1.0, 0.01, 1.0, -1.5)
        dist = cbf_exact_distribution(params, lat)
        masks = [
            int(sum(1 << i for i in range(lat.n_qubits) if row[i] < 0))
            for row in dist.spins
        ]
        mixture = [
            (float(p), PauliFrame(m, 0)) for p, m in zip(dist.probabilities, masks)
        ]
        sampler = DenseSyndromeSampler(mixture, lat)
        by_syndrome = {}
        for p, m in zip(dist.probabilities, masks):
            key = lat.syndrome_of(PauliFrame(m, 0)).as_int()
            by_syndrome[key] = by_syndrome.get(key, 0.0) + float(p)
        for code in range(256):
            want = by_syndrome.get(code, 0.0)
            got = sampler.syndrome_probability(Syndrome.from_int(code, 8))
            assert got == pytest.approx(want, abs=1e-10)

    def test_histogram_tracks_exact_distribution(self):
        lat = build_lattice(3, 3)
        noise = amplitude_damping(0.3)
        sampler = DenseSyndromeSampler(noise, lat)
        rng = np.random.default_rng(7)
        draws = 4000
        counts = np.zeros(256)
        for _ in range(draws):
            counts[sampler.sample(rng).as_int()] += 1
        for code in range(256):
            p = sampler.syndrome_probability(Syndrome.from_int(code, 8))
            bound = 5.0 * math.sqrt(draws * p * (1.0 - p)) + 3.0
            assert abs(counts[code] - draws * p) <= bound, code

    def test_seeded_entry_point(self):
        lat = build_lattice(2, 2)
        a = sample_syndrome_general(amplitude_damping(0.3), lat, 123)
        b = sample_syndrome_general(amplitude_damping(0.3), lat, 123)
        assert a == b
