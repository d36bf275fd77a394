import json
import socket

import numpy as np
import pytest

from schoolpulse.federation import (
    Coordinator,
    EmptyCatalog,
    FederationConfig,
    FederationMessage,
    ItemFactors,
    MessageType,
    SchoolNode,
    UnknownStudent,
    cold_start_recommend,
    recommend,
    run_federation,
)
from schoolpulse.federation.codec import (
    SCALE,
    EncodingOverflow,
    decode_array,
    encode_array,
    encode_value,
)
from schoolpulse.federation.node import MU, pair_mask
from schoolpulse.federation.recommend import enrollment_popularity, recommend_or_cold_start

TOK = [c * 64 for c in "abcdefghij"]


def make_nodes(n_schools=2, catalog_size=6, seed=7, dim=3):
    """Block-structured toy enrollments: school s's students favor the
    items in block s, plus one shared item so schools overlap."""
    catalog = tuple(f"el-{i:02d}" for i in range(catalog_size))
    schools = tuple(f"sch-{s}" for s in range(n_schools))
    nodes = {}
    for s, school in enumerate(schools):
        block = [catalog[(s * 2) % catalog_size], catalog[(s * 2 + 1) % catalog_size], catalog[0]]
        enrollments = {
            TOK[s * 3 + j]: tuple(sorted(set(block[: 2 + j % 2])))
            for j in range(3)
        }
        nodes[school] = SchoolNode(
            school=school, index=s, enrollments=enrollments,
            offered=tuple(sorted(set(block))), catalog=catalog, dim=dim, seed=seed,
        )
    return schools, catalog, nodes


class TestCodec:
    def test_round_trip_integers(self):
        for v in [0.0, 1.5, -2.25, 123.456789]:
            assert decode_array([encode_value(v)])[0] == pytest.approx(v, abs=1.0 / SCALE)

    def test_exact_round_trip_for_representable(self):
        ints = [0, 1, -5, 10**12]
        assert encode_array(decode_array(ints)) == ints

    def test_overflow(self):
        with pytest.raises(EncodingOverflow):
            encode_value(1e13)


class TestLocalTrain:
    def test_zero_learning_rate_zero_delta(self):
        _, catalog, nodes = make_nodes()
        node = nodes["sch-0"]
        shared = ItemFactors.init(catalog, dim=3, seed=7)
        dq, db, n = node.local_train(shared, epochs=1, lr=0.0, lam=0.01, round_idx=1)
        assert np.all(dq == 0.0)
        assert np.all(db == 0.0)
        assert n == len(node.training_rows(1))

    def test_delta_matches_finite_difference_gradient(self):
        lr, lam = 0.1, 0.05
        _, catalog, nodes = make_nodes()
        shared = ItemFactors.init(catalog, dim=3, seed=7)

        def loss_at(q, b, node):
            rows = node.training_rows(1)
            total = 0.0
            for token, item, r in rows:
                i = catalog.index(item)
                o = node.offsets.get(item, np.zeros(3))
                e = r - (MU + node.user_biases[token] + b[i]
                         + node.user_factors[token] @ (q[i] + o))
                total += e * e
            total /= len(rows)
            total += lam * float(np.sum(q * q))
            total += lam * sum(float(p @ p) for p in node.user_factors.values())
            total += lam * sum(float(o @ o) for o in node.offsets.values())
            return total

        # Fresh node for the oracle: local_train mutates private state.
        _, _, nodes2 = make_nodes()
        oracle_node = nodes2["sch-0"]
        h = 1e-6
        q0, b0 = shared.factors.copy(), shared.biases.copy()
        fd_grad_q = np.zeros_like(q0)
        for i in range(q0.shape[0]):
            for j in range(q0.shape[1]):
                qp, qm = q0.copy(), q0.copy()
                qp[i, j] += h
                qm[i, j] -= h
                fd_grad_q[i, j] = (loss_at(qp, b0, oracle_node) - loss_at(qm, b0, oracle_node)) / (2 * h)

        dq, _, _ = nodes["sch-0"].local_train(shared, epochs=1, lr=lr, lam=lam, round_idx=1)
        assert np.allclose(dq, -lr * fd_grad_q, atol=1e-7)

    def test_same_seed_same_delta(self):
        _, catalog, n1 = make_nodes()
        _, _, n2 = make_nodes()
        shared = ItemFactors.init(catalog, dim=3, seed=7)
        d1 = n1["sch-0"].local_train(shared, 1, 0.05, 0.01, round_idx=2)
        d2 = n2["sch-0"].local_train(shared.copy(), 1, 0.05, 0.01, round_idx=2)
        assert np.array_equal(d1[0], d2[0])
        assert d1[2] == d2[2]


class TestMasking:
    def test_two_school_masks_cancel_exactly(self):
        _, catalog, nodes = make_nodes(n_schools=2)
        shared = ItemFactors.init(catalog, dim=3, seed=7)
        payloads = {}
        true_sums = None
        for school, node in nodes.items():
            dq, db, n = node.local_train(shared.copy(), 1, 0.05, 0.01, 1)
            payloads[school] = node.build_update_payload(dq, db, n, 1.0, 1, [0, 1], (0, 0))
            enc = node.last_true_encoded
            true_sums = enc if true_sums is None else [a + b for a, b in zip(true_sums, enc)]
        masked_sum = [a + b for a, b in zip(payloads["sch-0"]["masked"], payloads["sch-1"]["masked"])]
        assert masked_sum == true_sums

    def test_literal_two_school_example(self):
        # deltas encoding to [1_000_000] and [3_000_000]: masked sum is
        # 4_000_000 exactly, whatever the mask values are.
        enc_a, enc_b = [1_000_000], [3_000_000]
        mask = pair_mask(123, 0, 1, round_idx=7, length=1)
        masked_a = [enc_a[0] + mask[0]]
        masked_b = [enc_b[0] - mask[0]]
        assert masked_a[0] + masked_b[0] == 4_000_000

    def test_masked_payload_differs_from_true(self):
        _, catalog, nodes = make_nodes(n_schools=2)
        shared = ItemFactors.init(catalog, dim=3, seed=7)
        node = nodes["sch-0"]
        dq, db, n = node.local_train(shared, 1, 0.05, 0.01, 1)
        payload = node.build_update_payload(dq, db, n, 1.0, 1, [0, 1], (0, 0))
        assert payload["masked"] != node.last_true_encoded

    @pytest.mark.parametrize("n_schools", [2, 3, 4, 5, 6])
    def test_sum_exactness_any_school_count(self, n_schools):
        # Secure-sum invariant over 20 rounds per school count.
        rng = np.random.default_rng(n_schools)
        length = 12
        for round_idx in range(1, 21):
            encoded = [[int(v) for v in rng.integers(-10**9, 10**9, size=length)]
                       for _ in range(n_schools)]
            masked = []
            for idx in range(n_schools):
                vec = list(encoded[idx])
                for peer in range(n_schools):
                    if peer == idx:
                        continue
                    mask = pair_mask(99, idx, peer, round_idx, length)
                    sign = 1 if idx < peer else -1
                    vec = [m + sign * k for m, k in zip(vec, mask)]
                masked.append(vec)
            total_masked = [sum(col) for col in zip(*masked)]
            total_true = [sum(col) for col in zip(*encoded)]
            assert total_masked == total_true


class TestAggregate:
    def hand_payloads(self, alpha):
        # Two schools, one item, dim=1: deltas 1.0 (n=1) and 3.0 (n=3).
        cfg = FederationConfig(schools=("sch-0", "sch-1"), dim=1, alpha=alpha, seed=5)
        coord = Coordinator(cfg, items=("el-00",))
        coord.registered = ["sch-0", "sch-1"]
        payloads = {}
        for idx, (school, delta, n) in enumerate([("sch-0", 1.0, 1), ("sch-1", 3.0, 3)]):
            weighted = np.array([delta, 0.0]) * (n ** alpha)  # factor coord + bias coord
            enc = encode_array(weighted)
            for peer in (0, 1):
                if peer == idx:
                    continue
                mask = pair_mask(5, idx, peer, 1, 2)
                sign = 1 if idx < peer else -1
                enc = [m + sign * k for m, k in zip(enc, mask)]
            payloads[school] = {"masked": enc, "n": n, "eval_hits": 0, "eval_total": 0}
        return coord, payloads

    def test_count_weighted(self):
        coord, payloads = self.hand_payloads(alpha=1.0)
        q_before = coord.factors.factors[0, 0]
        coord.aggregate(payloads)
        assert coord.factors.factors[0, 0] - q_before == pytest.approx(2.5, abs=2 / SCALE)

    def test_uniform_weighted(self):
        coord, payloads = self.hand_payloads(alpha=0.0)
        q_before = coord.factors.factors[0, 0]
        coord.aggregate(payloads)
        assert coord.factors.factors[0, 0] - q_before == pytest.approx(2.0, abs=2 / SCALE)

    def test_missing_school(self):
        from schoolpulse.federation import MissingSchool
        coord, payloads = self.hand_payloads(alpha=1.0)
        del payloads["sch-1"]
        coord.channels = {}
        with pytest.raises(MissingSchool):
            coord.collect_updates(1)


class TestRunFederation:
    def test_zero_rounds(self):
        schools, _, nodes = make_nodes()
        cfg = FederationConfig(schools=schools, rounds=0, dim=3, seed=7)
        result = run_federation(cfg, nodes)
        assert result.history == []
        assert result.factors.version == 0

    def test_deterministic_history(self):
        schools, _, n1 = make_nodes()
        _, _, n2 = make_nodes()
        cfg = FederationConfig(schools=schools, rounds=5, dim=3, seed=7)
        r1 = run_federation(cfg, n1)
        r2 = run_federation(cfg, n2)
        assert json.dumps(r1.history) == json.dumps(r2.history)
        assert np.array_equal(r1.factors.factors, r2.factors.factors)

    def test_history_length(self):
        schools, _, nodes = make_nodes()
        cfg = FederationConfig(schools=schools, rounds=4, dim=3, seed=7)
        assert len(run_federation(cfg, nodes).history) == 4

    def test_dropout_aborts_with_partial_history(self):
        schools, _, nodes = make_nodes(n_schools=3)
        cfg = FederationConfig(schools=schools, rounds=5, dim=3, seed=7)
        result = run_federation(cfg, nodes, drop_school_at=("sch-1", 3))
        assert result.aborted
        assert len(result.history) == 2

    def test_federated_round_equals_centralized_pooled_step(self):
        # Pooled-gradient oracle: with E=1, full batch, alpha=1, round-1
        # shared parameters must match a centralized gradient step on the
        # pooled rows within fixed-point quantization.
        schools, catalog, nodes = make_nodes(n_schools=3)
        cfg = FederationConfig(schools=schools, rounds=1, dim=3, epochs=1,
                               lr=0.05, lam=0.02, alpha=1.0, seed=7)
        shared0 = ItemFactors.init(catalog, cfg.dim, cfg.seed)
        _, _, oracle_nodes = make_nodes(n_schools=3)

        all_rows = []
        for school in sorted(schools):
            node = oracle_nodes[school]
            for token, item, r in node.training_rows(1):
                all_rows.append((node, token, item, r))
        N = len(all_rows)
        grad_q = 2.0 * cfg.lam * shared0.factors
        grad_b = np.zeros(len(catalog))
        for node, token, item, r in all_rows:
            i = catalog.index(item)
            o = node.offsets.get(item, np.zeros(3))
            p = node.user_factors[token]
            e = r - (MU + node.user_biases[token] + shared0.biases[i] + p @ (shared0.factors[i] + o))
            grad_q[i] += (-2.0 * e / N) * p
            grad_b[i] += -2.0 * e / N
        expected_q = shared0.factors - cfg.lr * grad_q
        expected_b = shared0.biases - cfg.lr * grad_b

        result = run_federation(cfg, nodes)
        assert np.max(np.abs(result.factors.factors - expected_q)) <= 2e-6
        assert np.max(np.abs(result.factors.biases - expected_b)) <= 2e-6

    def test_transcript_contains_no_secrets(self):
        schools, _, nodes = make_nodes(n_schools=3)
        cfg = FederationConfig(schools=schools, rounds=3, dim=3, seed=7)
        items = tuple(sorted({i for n in nodes.values() for i in n.catalog}))
        coordinator = Coordinator(cfg, items)
        # run manually to keep the coordinator (and transcript) in hand
        indices = {school: i for i, school in enumerate(sorted(schools))}
        for school in sorted(schools):
            coordinator.register(school)
        true_payloads = []
        for round_idx in range(1, cfg.rounds + 1):
            coordinator.start_round(round_idx)
            for school in sorted(schools):
                node = nodes[school]
                msg = coordinator.channels[school].recv_at_school()
                shared = ItemFactors.from_payload(msg.payload["factors"])
                dq, db, n = node.local_train(shared, 1, cfg.lr, cfg.lam, round_idx)
                payload = node.build_update_payload(
                    dq, db, n, cfg.alpha, round_idx, list(indices.values()), (0, 1))
                true_payloads.append(list(node.last_true_encoded))
                coordinator.channels[school].send_to_coordinator(
                    FederationMessage(MessageType.UPDATE, round_idx, school, payload))
            coordinator.aggregate(coordinator.collect_updates(round_idx))

        blob = coordinator.transcript.as_bytes().decode("utf-8")
        for token in TOK:
            assert token not in blob
        assert '"rating"' not in blob
        for true in true_payloads:
            assert json.dumps(true) not in blob


class TestRecommend:
    def trained(self):
        schools, catalog, nodes = make_nodes(n_schools=2)
        cfg = FederationConfig(schools=schools, rounds=10, dim=3, seed=7)
        result = run_federation(cfg, nodes)
        return nodes, result.factors, catalog

    def test_taken_items_never_appear(self):
        nodes, factors, catalog = self.trained()
        node = nodes["sch-0"]
        token = sorted(node.enrollments)[0]
        recs = recommend(node, factors, token, k=len(catalog))
        taken = set(node.enrollments[token])
        assert taken.isdisjoint({r.elective_id for r in recs})

    def test_k_larger_than_catalog(self):
        nodes, factors, catalog = self.trained()
        node = nodes["sch-0"]
        token = sorted(node.enrollments)[0]
        recs = recommend(node, factors, token, k=100)
        assert len(recs) == len(catalog) - len(set(node.enrollments[token]))

    def test_cross_school_flag(self):
        nodes, factors, _ = self.trained()
        node = nodes["sch-0"]
        token = sorted(node.enrollments)[0]
        offered = set(node.offered)
        for rec in recommend(node, factors, token, k=100):
            assert rec.cross_school == (rec.elective_id not in offered)

    def test_unknown_student_raises(self):
        nodes, factors, _ = self.trained()
        with pytest.raises(UnknownStudent):
            recommend(nodes["sch-0"], factors, "z" * 64, k=3)

    def test_unknown_student_routes_to_cold_start(self):
        nodes, factors, _ = self.trained()
        recs = recommend_or_cold_start(nodes, factors, "z" * 64, "sch-0", k=3)
        assert all(r.cold_start for r in recs)

    def test_cold_start_popularity_dominates(self):
        factors = ItemFactors(items=("el-a", "el-b"), factors=np.zeros((2, 2)),
                              biases=np.zeros(2), version=1)
        recs = cold_start_recommend({"el-a": 0.9, "el-b": 0.05}, factors, ("el-a",), k=2)
        assert recs[0].elective_id == "el-a"

    def test_cold_start_empty_catalog(self):
        factors = ItemFactors(items=(), factors=np.zeros((0, 2)), biases=np.zeros(0), version=0)
        with pytest.raises(EmptyCatalog):
            cold_start_recommend({}, factors, (), k=3)

    def test_popularity_is_aggregate_fraction(self):
        _, _, nodes = make_nodes(n_schools=2)
        pop = enrollment_popularity(nodes)
        total = sum(len(n.enrollments) for n in nodes.values())
        for item, frac in pop.items():
            count = sum(1 for n in nodes.values() for items in n.enrollments.values() if item in items)
            assert frac == pytest.approx(count / total)


def test_centralized_reference_loss_monotone():
    # Centralized full-batch trainer on the pooled rows, lr=0.01, 50 rounds:
    # training loss never increases.
    schools, catalog, nodes = make_nodes(n_schools=3)
    dim, lam, lr = 3, 0.01, 0.01
    shared = ItemFactors.init(catalog, dim, seed=7)
    q, b = shared.factors.copy(), shared.biases.copy()

    def pooled_loss():
        total, count = 0.0, 0
        for school in sorted(schools):
            node = nodes[school]
            for token, item, r in node.training_rows(1):
                i = catalog.index(item)
                o = node.offsets.get(item, np.zeros(dim))
                e = r - (MU + node.user_biases[token] + b[i] + node.user_factors[token] @ (q[i] + o))
                total += e * e
                count += 1
        total /= count
        total += lam * float(np.sum(q * q))
        for school in sorted(schools):
            node = nodes[school]
            total += lam * sum(float(p @ p) for p in node.user_factors.values())
            total += lam * sum(float(o @ o) for o in node.offsets.values())
        return total

    losses = [pooled_loss()]
    for _ in range(50):
        rows = [(nodes[s], *row) for s in sorted(schools) for row in nodes[s].training_rows(1)]
        N = len(rows)
        grad_q = 2 * lam * q
        grad_b = np.zeros(len(catalog))
        grads_p = {}
        grads_bu = {}
        for node, token, item, r in rows:
            i = catalog.index(item)
            o = node.offsets.get(item, np.zeros(dim))
            p = node.user_factors[token]
            e = r - (MU + node.user_biases[token] + b[i] + p @ (q[i] + o))
            grad_q[i] += (-2 * e / N) * p
            grad_b[i] += -2 * e / N
            key = (node.school, token)
            grads_p[key] = grads_p.get(key, 2 * lam * p) + (-2 * e / N) * (q[i] + o)
            grads_bu[key] = grads_bu.get(key, 0.0) + (-2 * e / N)
        q = q - lr * grad_q
        b = b - lr * grad_b
        for (school, token), g in grads_p.items():
            nodes[school].user_factors[token] = nodes[school].user_factors[token] - lr * g
        for (school, token), g in grads_bu.items():
            nodes[school].user_biases[token] -= lr * g
        losses.append(pooled_loss())
    assert all(b2 <= a + 1e-12 for a, b2 in zip(losses, losses[1:]))


def test_wire_bytes_identical_over_tcp_socketpair():
    # The NDJSON envelope bytes are transport-independent.
    msg = FederationMessage(MessageType.UPDATE, 3, "sch-1",
                            {"masked": [1, -2, 3], "n": 4, "eval_hits": 1, "eval_total": 2})
    data = msg.to_bytes()
    a, b = socket.socketpair()
    try:
        a.sendall(data)
        received = b.recv(65536)
    finally:
        a.close()
        b.close()
    assert received == data
    assert FederationMessage.from_bytes(received) == msg


def test_update_for_wrong_round_raises_version_mismatch():
    from schoolpulse.federation import VersionMismatch

    cfg = FederationConfig(schools=("sch-0", "sch-1"), dim=1, seed=5)
    coord = Coordinator(cfg, items=("el-00",))
    channel = coord.register("sch-0")
    coord.register("sch-1")
    channel.send_to_coordinator(FederationMessage(
        MessageType.UPDATE, 3, "sch-0",
        {"masked": [0, 0], "n": 1, "eval_hits": 0, "eval_total": 0}))
    with pytest.raises(VersionMismatch):
        coord.collect_updates(round_idx=1)
