import json
from dataclasses import replace

import numpy as np
import pytest

from app.errors import ConfigError, TrainingDivergedError
from app.events import step_completed, training_aborted
from app.models import TrainConfig
from app.nn.transformer import EncoderState
from app.storage import load_checkpoint
from app.tensor import Tensor, backward, get_default_dtype, set_default_dtype
from app.training.diagnostics import detach_contract, random_batch, run_gradcheck
from app.training.diagnostics import tiny_run_config as shrink_run_config
from app.training.heads import DomainClassifierHead, WordWeightHead, baseline_head_loss
from app.training.loop import Trainer
from app.training.model import build_model, compute_loss
from app.training.optim import Adam, OptimizerState, adam_step, lr_schedule


def test_lr_schedule_peak_and_decay():
    config = TrainConfig()
    assert lr_schedule(4000, config) == pytest.approx(5e-4, abs=1e-18)
    assert lr_schedule(16000, config) == pytest.approx(2.5e-4, abs=1e-18)


def test_lr_schedule_warmup_is_linear():
    config = TrainConfig(warmup_steps=10, warmup_init_lr=0.0, lr_peak=1.0)
    assert [lr_schedule(step, config) for step in (1, 5, 10)] == pytest.approx([0.1, 0.5, 1.0])


def reference_adam(w, steps, lr, beta1, beta2, eps):
    m = v = 0.0
    trace = []
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        w = w - lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        trace.append(w)
    return trace


def test_adam_matches_scalar_reference():
    expected = reference_adam(1.0, 100, 0.01, 0.9, 0.98, 1e-8)
    params = {"w": np.array([1.0])}
    state = OptimizerState()
    trace = []
    for _ in range(100):
        adam_step(params, {"w": 2.0 * params["w"]}, state, 0.01, 0.9, 0.98, 1e-8)
        trace.append(float(params["w"][0]))
    assert np.allclose(trace, expected, rtol=0.0, atol=1e-12)
    assert all(b < a for a, b in zip([1.0] + trace, trace))
    assert state.step == 100


def test_optimizer_state_round_trip():
    state = OptimizerState()
    adam_step({"w": np.ones(3)}, {"w": np.full(3, 0.5)}, state, 0.1)
    restored = OptimizerState()
    restored.load_state_dict(state.state_dict(), state.step)
    assert restored.step == 1
    assert np.array_equal(restored.first_moment["w"], state.first_moment["w"])
    assert np.array_equal(restored.second_moment["w"], state.second_moment["w"])


def test_adam_per_parameter_decay():
    params = {"a": np.ones(2), "b": np.ones(2)}
    adam_step(params, {"a": np.zeros(2), "b": np.zeros(2)}, OptimizerState(), 0.1, weight_decay={"a": 0.5})
    assert np.allclose(params["a"], 0.9)
    assert np.array_equal(params["b"], np.ones(2))


def test_router_matrices_skip_transformer_decay(tiny_run_config):
    train = replace(tiny_run_config.train, weight_decay=0.1, warmup_steps=1, lr_peak=0.01)
    model = build_model(replace(tiny_run_config, train=train))
    before = {name: value.copy() for name, value in model.state_dict().items()}
    optimizer = Adam(model, train)
    optimizer.zero_grad()
    optimizer.step()

    routers = model.router_parameters()
    assert len(routers) == 14
    after = model.state_dict()
    for name in routers:
        assert optimizer.weight_decay[name] == 0.0
        assert np.array_equal(after[name], before[name])
    weight = "transformer.encoder.0.self_attn.q.weight"
    assert optimizer.weight_decay[weight] == 0.1
    assert np.allclose(after[weight], before[weight] - 0.01 * np.sign(before[weight]), rtol=0.0, atol=1e-5)


def test_router_weight_decay_is_configurable(tiny_run_config):
    train = replace(tiny_run_config.train, router_weight_decay=0.01)
    model = build_model(replace(tiny_run_config, train=train))
    optimizer = Adam(model, train)
    assert {optimizer.weight_decay[name] for name in model.router_parameters()} == {0.01}


def test_loss_decomposition(tiny_run_config, rng):
    for use_mix_loss in (True, False):
        train = replace(tiny_run_config.train, use_mix_loss=use_mix_loss)
        model = build_model(replace(tiny_run_config, train=train))
        batch = random_batch(rng, 10, 2)
        total, breakdown, context = compute_loss(model, batch, train)
        assert breakdown.L_mix > 0.0
        assert len(context.records) == 14
        expected = breakdown.L_gen + (breakdown.L_mix if use_mix_loss else 0.0)
        assert breakdown.L_total == pytest.approx(expected)
        assert float(total.data) == pytest.approx(expected)


def test_vanilla_model_has_no_mix_loss(tiny_run_config, rng):
    run_config = replace(tiny_run_config, mixing=replace(tiny_run_config.mixing, scope="none"))
    _, breakdown, _ = compute_loss(build_model(run_config), random_batch(rng, 10, 2), run_config.train)
    assert breakdown.L_mix == 0.0
    assert breakdown.L_total == pytest.approx(breakdown.L_gen)


def test_detach_contract_holds(tiny_run_config, rng):
    model = build_model(tiny_run_config)
    contract = detach_contract(model, random_batch(rng, 10, 2), tiny_run_config.train)
    assert contract.applicable
    assert contract.gen_router_grad == 0.0
    assert contract.mix_transformer_grad == 0.0


def test_contract_not_applicable_to_mtl(tiny_run_config, rng):
    train = replace(tiny_run_config.train, detach_mode="mtl")
    contract = detach_contract(build_model(replace(tiny_run_config, train=train)), random_batch(rng, 10, 2), train)
    assert not contract.applicable and contract.passed


def test_domain_head_reverses_encoder_gradient(rng):
    hidden = rng.normal(size=(2, 3, 4))
    mask = np.array([[True, True, False], [True, True, True]])
    grads = {}
    for mode in ("mtl", "advl", "padvl"):
        head = DomainClassifierHead(4, 2, mode, np.random.default_rng(0))
        leaf = Tensor(hidden, requires_grad=True)
        backward(baseline_head_loss(head, EncoderState(leaf, mask), [0, 1]))
        grads[mode] = leaf.grad
    assert np.allclose(grads["advl"], -grads["mtl"])
    assert np.allclose(grads["padvl"][..., :2], grads["mtl"][..., :2])
    assert np.allclose(grads["padvl"][..., 2:], -grads["mtl"][..., 2:])
    assert not np.any(grads["mtl"][0, 2])


def test_domain_head_rejects_unknown_mode(rng):
    with pytest.raises(ConfigError):
        DomainClassifierHead(4, 2, "detached", rng)


def test_word_weights_are_probabilities_and_frozen(rng):
    head = WordWeightHead(4, 3, rng)
    hidden = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    mask = np.array([[True, True, True], [True, False, False]])
    loss, beta = head.loss_and_beta(hidden, [0, 2], mask)
    assert beta.shape == (2, 3)
    assert ((beta > 0) & (beta < 1))[mask].all()
    assert not beta[~mask].any()
    backward(loss)
    assert not np.any(hidden.grad)
    assert np.any(head.classifier.weight.grad)


@pytest.fixture
def trainer_factory(synthetic_task):
    run_config, vocab, splits = synthetic_task

    def make(output_dir=None, max_steps=4):
        config = replace(run_config, train=replace(run_config.train, max_steps=max_steps))
        return Trainer(build_model(config), config, splits["train"], vocab, valid_examples=splits["valid"],
                       output_dir=output_dir)
    return make


def test_training_is_deterministic(trainer_factory):
    first, second = trainer_factory(), trainer_factory()
    first.train()
    second.train()
    a, b = first.model.state_dict(), second.model.state_dict()
    assert all(np.array_equal(a[name], b[name]) for name in a)


def test_resume_matches_uninterrupted_run(trainer_factory, tmp_path):
    uninterrupted = trainer_factory(tmp_path / "full")
    uninterrupted.train(4)

    interrupted = trainer_factory(tmp_path / "split")
    interrupted.train(2)
    resumed = trainer_factory(tmp_path / "split")
    resumed.resume(load_checkpoint(interrupted.checkpoint_path))
    assert resumed.step == 2
    resumed.train(4)

    a, b = uninterrupted.model.state_dict(), resumed.model.state_dict()
    assert all(np.array_equal(a[name], b[name]) for name in a)
    full = (tmp_path / "full" / "metrics.jsonl").read_text().splitlines()
    split = (tmp_path / "split" / "metrics.jsonl").read_text().splitlines()
    assert full == split


def test_metrics_lines(trainer_factory, tmp_path):
    trainer = trainer_factory(tmp_path, max_steps=3)
    trainer.train()
    lines = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [line["step"] for line in lines] == [1, 2, 3]
    assert set(lines[0]) == {"step", "lr", "L_gen", "L_mix", "L_total", "elapsed_ms"}
    assert lines[0]["elapsed_ms"] == 0
    assert (tmp_path / "checkpoint.bin").exists()


def test_step_signal_carries_the_breakdown(trainer_factory):
    seen = []

    def listener(trainer, step, lr, breakdown, elapsed_ms):
        seen.append((step, breakdown.L_total))

    trainer = trainer_factory()
    with step_completed.connected_to(listener):
        trainer.train(2)
    assert [step for step, _ in seen] == [1, 2]


def test_non_finite_loss_aborts(trainer_factory):
    trainer = trainer_factory()
    trainer.model.transformer.output.weight.data[...] = np.nan
    aborted = []
    with training_aborted.connected_to(lambda sender, step, breakdown: aborted.append(step)):
        with pytest.raises(TrainingDivergedError):
            trainer.train_step()
    assert aborted == [1]
    assert trainer.step == 0


def test_validation_perplexity(trainer_factory):
    trainer = trainer_factory()
    ppl = trainer.validate()
    assert 1.0 < ppl < 10 * trainer.vocab.size


def test_tiny_run_config_shrinks_model(tiny_run_config):
    big = replace(tiny_run_config, model=replace(tiny_run_config.model, d=64, heads=8, d_ff=256, enc_layers=6))
    small = shrink_run_config(big)
    assert small.model.d == 8 and small.model.d % small.model.heads == 0
    assert small.model.enc_layers == 2
    assert small.precision == "f64"


def test_gradcheck_passes_on_detached_model(tiny_run_config):
    report, contract = run_gradcheck(tiny_run_config, seed=1)
    assert report.passed, report.to_dict()
    assert contract.passed


@pytest.mark.slow
@pytest.mark.parametrize("train", [
    {"detach_mode": "mtl"},
    {"detach_mode": "advl", "baseline": "advl"},
    {"detach_mode": "padvl", "baseline": "padvl"},
    {"wl_enabled": True},
    {"baseline": "mtl", "use_mix_loss": False},
])
def test_gradcheck_passes_in_every_mode(tiny_run_config, train):
    run_config = replace(tiny_run_config, train=replace(tiny_run_config.train, **train))
    report, contract = run_gradcheck(run_config, seed=2)
    assert report.passed, report.to_dict()
    assert contract.passed


@pytest.mark.parametrize("layer_norm", [
    "pre",
    pytest.param("post", marks=pytest.mark.slow),
])
@pytest.mark.parametrize("train", [
    {"detach_mode": "detached"},
    pytest.param({"detach_mode": "padvl", "baseline": "padvl"}, marks=pytest.mark.slow),
    pytest.param({"detach_mode": "padvl", "baseline": "padvl", "wl_enabled": True}, marks=pytest.mark.slow),
])
def test_gradcheck_two_layers_three_domains(tiny_run_config, layer_norm, train):
    model = replace(tiny_run_config.model, d=8, heads=2, enc_layers=2, dec_layers=2, layer_norm=layer_norm)
    run_config = replace(
        tiny_run_config,
        model=model,
        mixing=replace(tiny_run_config.mixing, k=3),
        train=replace(tiny_run_config.train, **train),
    )
    report, contract = run_gradcheck(run_config, seed=3)
    assert report.passed, report.to_dict()
    assert report.max_rel_error < 1e-5
    assert contract.passed


def test_gradcheck_restores_default_precision(tiny_run_config):
    set_default_dtype("f32")
    run_gradcheck(tiny_run_config, seed=1)
    assert get_default_dtype() is np.float32
