import math

import numpy as np
import pytest

from builders import triangle_mvc
from lnsilp.exceptions import ConfigurationError, SchemaError, TrainingError
from lnsilp.ilp import Assignment, build_instance
from lnsilp.instances import initial_solution, make_instance
from lnsilp.learning import (
    DecompositionPolicy,
    DemoSet,
    Episode,
    ModelConfig,
    PolicySource,
    RlConfig,
    TrainConfig,
    Trajectory,
    bc_dataset,
    collect_demonstrations,
    forward_training,
    load_policies,
    new_policy,
    preset,
    reinforce_gradient,
    reinforce_train,
    replay_demonstration,
    reward,
    rollout,
    save_policies,
    train_behavior_cloning,
)
from lnsilp.lns import Decomposition, RandomSource, SolverParams, run_decomposition_lns, run_lns_iterations

SMALL = ModelConfig(pca_dim=8, hidden=(6,), k=2)
QUICK = TrainConfig(learning_rate=1e-2, batch_size=32, epochs=3, seed=0)
NODES = SolverParams(time_limit=math.inf, node_limit=3)


@pytest.fixture(scope="module")
def graphs():
    insts = [make_instance("mvc", s, n=30, name=f"g{s}") for s in range(4)]
    return insts, [initial_solution(i) for i in insts]


# rewards and trajectories ---------------------------------------------------------


def test_reward_examples():
    two = build_instance("r", [10.0, 7.0], [])
    assert reward(two, Assignment([1, 0]), Assignment([0, 1])) == 3.0
    assert reward(two, Assignment([1, 0]), Assignment([1, 0])) == 0.0
    cut = build_instance("c", [-3500.0, -3580.0], [])
    assert reward(cut, Assignment([1, 0]), Assignment([0, 1])) == 80.0


def test_trajectory_rewards_telescope(graphs):
    insts, inits = graphs
    from lnsilp.learning.demos import trajectory_from_trace

    _, trace = run_lns_iterations(insts[0], inits[0], RandomSource(2, np.random.default_rng(0)), 5, NODES,
                                  keep_states=True)
    traj = trajectory_from_trace(insts[0], inits[0], trace)
    assert traj.horizon == 5
    assert traj.check_rewards(insts[0])
    assert sum(traj.rewards) == pytest.approx(inits[0].objective - trace.iteration_objectives[-1], abs=1e-12)
    assert traj.returns_to_go()[0] == pytest.approx(sum(traj.rewards))
    with pytest.raises(ValueError):
        Trajectory("x", [inits[0]], [None], [])


# demonstrations -------------------------------------------------------------------


def test_single_rollout_is_returned(graphs):
    insts, inits = graphs
    demos = collect_demonstrations(insts[:1], inits[:1], 3, 1, 2, NODES, np.random.default_rng(5))
    _, trace = run_lns_iterations(insts[0], inits[0], RandomSource(2, np.random.default_rng(5)), 3, NODES)
    d = demos.demos[0]
    assert d.rollout == 0
    assert d.decompositions == trace.decompositions
    assert d.objectives == trace.iteration_objectives


def test_best_of_m_keeps_lowest_first_found(graphs):
    insts, inits = graphs
    seen = set()
    for seed in range(8):
        rng = np.random.default_rng(seed)
        finals = [run_lns_iterations(insts[1], inits[1], RandomSource(2, rng), 1, NODES)[1]
                  .iteration_objectives[-1] for _ in range(2)]
        demo = collect_demonstrations(insts[1:2], inits[1:2], 1, 2, 2, NODES, np.random.default_rng(seed)).demos[0]
        assert demo.final_objective == min(finals)
        assert demo.rollout == int(np.argmin(finals))
        seen.add(demo.rollout)
    assert seen == {0, 1}


def test_default_demo_length(graphs):
    insts, inits = graphs
    demos = collect_demonstrations(insts[:2], inits[:2], 10, 5, 2, NODES, np.random.default_rng(0))
    assert all(len(d.decompositions) == 10 for d in demos.demos)
    assert demos.n_pairs() == 2 * 10


def test_demo_replay_and_file_round_trip(graphs, tmp_path):
    insts, inits = graphs
    params = SolverParams(time_limit=0.02)
    demos = collect_demonstrations(insts, inits, 3, 2, 3, params, np.random.default_rng(1))
    demos.save(tmp_path / "demos.json")
    back = DemoSet.load(tmp_path / "demos.json")
    for inst, d in zip(insts, back.demos):
        assert replay_demonstration(inst, d) == d.final_objective
    assert back.demos[0].decompositions == demos.demos[0].decompositions
    with pytest.raises(SchemaError):
        DemoSet.from_dict({"demos": []})


def test_infeasible_initial_is_skipped(graphs, caplog):
    insts, inits = graphs
    bad = Assignment(np.zeros(30))
    demos = collect_demonstrations(insts[:2], [bad, inits[1]], 1, 1, 2, NODES)
    assert [d.instance for d in demos.demos] == ["g1"]
    assert "infeasible" in caplog.text


def test_demo_arguments():
    inst = triangle_mvc()
    with pytest.raises(ValueError):
        collect_demonstrations([inst], [initial_solution(inst)], 0, 1, 2)


# behavior cloning ----------------------------------------------------------------


def test_dataset_has_one_row_per_variable_per_step(graphs):
    insts, inits = graphs
    demos = collect_demonstrations(insts, inits, 2, 1, 2, NODES, np.random.default_rng(0))
    policy = new_policy(insts, SMALL)
    X, y = bc_dataset(demos, insts, policy)
    assert demos.n_pairs() == 4 * 2
    assert X.shape == (4 * 2 * 30, SMALL.pca_dim + 1)
    assert y.shape == (4 * 2 * 30,)
    # the last feature column is the incumbent of the demonstrated state
    assert np.array_equal(X[:30, -1], demos.demos[0].states[0].values)


def test_behavior_cloning_records_training(graphs):
    insts, inits = graphs
    demos = collect_demonstrations(insts, inits, 2, 1, 2, NODES, np.random.default_rng(0))
    policy = train_behavior_cloning(demos, insts, SMALL, QUICK)
    meta = policy.training_meta
    assert meta["method"] == "bc" and meta["pairs"] == 8
    assert len(policy.mlp.loss_curve_) == 3
    assert 0 <= meta["train_accuracy"] <= 1


def test_behavior_cloning_rejects_mixed_k(graphs):
    insts, inits = graphs
    demos = collect_demonstrations(insts[:2], inits[:2], 1, 1, 2, NODES, np.random.default_rng(0))
    demos.demos[1].decompositions[0] = Decomposition(np.zeros(30, dtype=int), 3)
    with pytest.raises(ValueError):
        train_behavior_cloning(demos, insts, SMALL, QUICK)


def test_mvc_preset_layer_sizes():
    insts = [make_instance("mvc", s, n=120, name=f"m{s}") for s in range(2)]
    policy = new_policy(insts, preset("mvc"))
    assert policy.mlp.layer_sizes == [100, 300, 2]
    assert preset("maxcut").hidden == (100,) and preset("maxcut").k == 5
    with pytest.raises(ConfigurationError):
        preset("tsp")


def test_projection_width_is_clamped_to_raw_width(graphs):
    insts, _ = graphs
    policy = new_policy(insts, preset("mvc"))
    assert policy.mlp.layer_sizes == [31, 300, 2]


# forward training -------------------------------------------------------------------


def test_single_step_forward_training_is_behavior_cloning(graphs):
    insts, inits = graphs
    ft = forward_training(insts, inits, 1, 2, 2, NODES, SMALL, QUICK, np.random.default_rng(9))
    demos = collect_demonstrations(insts, inits, 1, 2, 2, NODES, np.random.default_rng(9))
    base = new_policy(insts, SMALL, seed=QUICK.seed)
    bc = train_behavior_cloning(demos, insts, SMALL, QUICK, base=base)
    assert len(ft) == 1
    assert np.array_equal(ft[0].mlp.get_flat(), bc.mlp.get_flat())


def test_forward_training_lineage(graphs):
    insts, inits = graphs
    log = []
    policies = forward_training(insts, inits, 3, 2, 2, NODES, SMALL, QUICK, np.random.default_rng(2),
                                on_step=lambda t, states, demos, policy: log.append((t, states, demos, policy)))
    assert len(policies) == 3
    assert [p.training_meta["step"] for p in policies] == [0, 1, 2]
    for (t, states, demos, policy), (_, nxt, nxt_demos, _) in zip(log, log[1:]):
        for inst in insts:
            dec = policy.predict(inst, states[inst.name], "argmax")
            expected = run_decomposition_lns(inst, states[inst.name], dec, NODES, iteration=t)
            assert nxt[inst.name].values.tolist() == expected.values.tolist()
        # the next round's demonstrations start from those states
        for d in nxt_demos.demos:
            assert d.initial.values.tolist() == nxt[d.instance].values.tolist()


# policies ------------------------------------------------------------------------


def policy_with_logits(insts, bias):
    p = new_policy(insts, SMALL)
    for w in p.mlp.coefs_:
        w[...] = 0.0
    for b in p.mlp.intercepts_:
        b[...] = 0.0
    p.mlp.intercepts_[-1][...] = bias
    return p


def test_uniform_logits_argmax_labels_zero(graphs):
    insts, inits = graphs
    p = policy_with_logits(insts, [0.0, 0.0])
    d = p.predict(insts[0], inits[0], "argmax")
    assert d.labels.tolist() == [0] * 30
    assert d.origin == "policy"


def test_strong_logits_put_everything_in_one_subset(graphs):
    insts, inits = graphs
    p = policy_with_logits(insts, [-20.0, 20.0])
    d = p.predict(insts[0], inits[0], "argmax")
    subsets = d.subsets(insts[0])
    assert subsets[0].size == 0 and subsets[1].size == 30


def test_sampling_is_seeded(graphs):
    insts, inits = graphs
    p = new_policy(insts, SMALL, seed=4)
    a = p.predict(insts[0], inits[0], "sample", np.random.default_rng(3))
    b = p.predict(insts[0], inits[0], "sample", np.random.default_rng(3))
    assert a == b
    with pytest.raises(ValueError):
        p.predict(insts[0], inits[0], "sample")


def test_argmax_invariant_to_logit_shift(graphs):
    insts, inits = graphs
    p = new_policy(insts, SMALL, seed=1)
    before = p.predict(insts[1], inits[1])
    p.mlp.intercepts_[-1] += 123.0
    assert p.predict(insts[1], inits[1]) == before


def test_policy_rejects_other_feature_routes(graphs):
    insts, inits = graphs
    p = new_policy(insts, SMALL)
    auction = make_instance("auction", 0, items=10, bids=30)
    with pytest.raises(ValueError):
        p.predict(auction, initial_solution(auction))
    with pytest.raises(ValueError):
        p.predict(make_instance("mvc", 0, n=20), np.ones(20))


def test_policy_file_round_trip(graphs, tmp_path):
    insts, inits = graphs
    p = new_policy(insts, SMALL, seed=2)
    p.save(tmp_path / "p.json")
    back = DecompositionPolicy.load(tmp_path / "p.json")
    assert np.array_equal(back.predict_proba(insts[2], inits[2]), p.predict_proba(insts[2], inits[2]))
    d = p.to_dict()
    assert set(d) >= {"schema_version", "kind", "k", "pca", "layers", "activations", "temperature", "training_meta"}
    assert set(d["pca"]) >= {"mean", "components", "d_in", "d_out"}
    assert d["activations"] == ["relu", "softmax"]


def test_stepwise_policy_files(graphs, tmp_path):
    insts, inits = graphs
    ps = [new_policy(insts, SMALL, seed=s) for s in range(3)]
    save_policies(ps, tmp_path / "ft.json")
    back = load_policies(tmp_path / "ft.json")
    assert len(back) == 3
    source = PolicySource(back, "argmax")
    assert source.decompose(insts[0], inits[0], 7) == ps[2].predict(insts[0], inits[0])


def test_policy_file_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_policies(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text('{"schema_version": 1}')
    with pytest.raises(SchemaError):
        load_policies(tmp_path / "bad.json")


def test_label_partition_round_trip(graphs):
    insts, _ = graphs
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = Decomposition(rng.integers(0, 3, 30), 3, "policy")
        assert Decomposition.from_subsets(insts[0], d.subsets(insts[0])).labels.tolist() == d.labels.tolist()


# policy gradient ------------------------------------------------------------------


def test_discount_is_fixed():
    with pytest.raises(ValueError):
        RlConfig(gamma=0.9)
    assert RlConfig().trajectories == 5


def test_gradient_matches_closed_form_for_linear_softmax():
    from lnsilp.learning.mlp import SoftmaxMLP, softmax

    rng = np.random.default_rng(0)
    mlp = SoftmaxMLP(hidden_layer_sizes=(), n_classes=3).initialize(4, rng)
    mlp.set_flat(rng.normal(size=mlp.get_flat().size))
    episodes = []
    for _ in range(3):
        ep = Episode()
        for _t in range(2):
            X = rng.normal(size=(5, 4))
            ep.features.append(X)
            ep.actions.append(rng.integers(0, 3, 5))
            ep.rewards.append(float(rng.normal()))
        episodes.append(ep)
    (gW, gb), = reinforce_gradient(mlp, episodes)
    W, b = mlp.coefs_[0], mlp.intercepts_[0]
    eW, eb = np.zeros_like(W), np.zeros_like(b)
    for ep in episodes:
        G = ep.returns_to_go()
        for X, a, g in zip(ep.features, ep.actions, G):
            resid = np.eye(3)[a] - softmax(X @ W + b)
            eW += g * X.T @ resid / len(episodes)
            eb += g * resid.sum(axis=0) / len(episodes)
    assert np.allclose(gW, eW, atol=1e-12)
    assert np.allclose(gb, eb, atol=1e-12)


def test_zero_rewards_give_zero_update():
    inst = triangle_mvc()
    optimum = Assignment([0.0, 1.0, 1.0])
    policy = new_policy([inst], ModelConfig(2, (4,), 2), seed=0)
    before = policy.mlp.get_flat().copy()
    reinforce_train([inst], [optimum], 3, RlConfig(trajectories=2, updates=3, learning_rate=0.5), params=NODES,
                    policy=policy, rng=np.random.default_rng(0))
    assert np.array_equal(policy.mlp.get_flat(), before)
    assert policy.training_meta["mean_returns"] == [0.0, 0.0, 0.0]


def test_baseline_removes_common_return():
    from lnsilp.learning.mlp import SoftmaxMLP

    mlp = SoftmaxMLP(hidden_layer_sizes=(), n_classes=2).initialize(2, np.random.default_rng(0))
    X = np.ones((3, 2))
    a = np.array([0, 1, 0])
    eps = [Episode([X], [a], [5.0]), Episode([X], [a], [5.0])]
    grads = reinforce_gradient(mlp, eps, baseline=True)
    assert all(not gw.any() and not gb.any() for gw, gb in grads)


def test_reinforce_moves_parameters(graphs):
    insts, inits = graphs
    policy = reinforce_train(insts[:2], inits[:2], 2, RlConfig(trajectories=2, updates=2, learning_rate=1e-2),
                             SMALL, NODES, rng=np.random.default_rng(0))
    assert policy.training_meta["method"] == "rl"
    assert len(policy.training_meta["mean_returns"]) == 2
    assert all(r > 0 for r in policy.training_meta["mean_returns"])


def test_nan_policy_raises_with_diagnostics(graphs):
    insts, inits = graphs
    policy = new_policy(insts, SMALL)
    policy.mlp.coefs_[1][0, 0] = np.nan
    with pytest.raises(TrainingError, match="layers \\[1\\]"):
        rollout(policy, insts[0], inits[0], 1, NODES, np.random.default_rng(0))
