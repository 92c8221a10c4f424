"""
Tests for the phased attack: query accounting per phase, loop scheduling, label modes,
budget failures, checkpoints and resume.
"""

import pandas as pd
import pytest
import torch

from dfms.attack import LATEST, PHASES, AttackRunner, StepRecord, TrainingHistory, run_attack
from dfms.core.errors import InvariantError, PhaseError
from dfms.nets.builder import sample_latent
from dfms.victim.ledger import QueryLedger
from dfms.victim.oracle import VictimOracle

from conftest import INPUT_SHAPE


class SoftCountingOracle(VictimOracle):
    """Counts soft-label calls so hard-label runs can be checked for purity."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.soft_calls = 0

    def soft_label_query(self, batch, phase):
        self.soft_calls += 1
        return super().soft_label_query(batch, phase)


class CrashingOracle(VictimOracle):
    """Fails like a dropped connection once the alternating phase has used ``crash_at`` queries."""

    def __init__(self, *args, crash_at: int, **kwargs):
        super().__init__(*args, **kwargs)
        self.crash_at = crash_at

    def hard_label_query(self, batch, phase):
        if phase == "alternating" and self.ledger.phase_breakdown.get(phase, 0) >= self.crash_at:
            raise RuntimeError("connection reset")
        return super().hard_label_query(batch, phase)


def _run(config, oracle, proxy, test_set=None, **kwargs):
    return run_attack(config, oracle, proxy, test_set=test_set, device="cpu", **kwargs)


# ---- query accounting -------------------------------------------------------------


def test_total_queries_are_exact(tiny_config, make_oracle, proxy_images, test_set):
    oracle = make_oracle(budget=tiny_config.total_budget)
    result = _run(tiny_config, oracle, proxy_images, test_set)
    assert oracle.queries_used == 180
    assert result.ledger.phase_breakdown == {"init_clone": 40, "retrain_clone": 40, "alternating": 100}
    assert result.completed_phases == list(PHASES)
    assert result.history.records[-1].queries_used == 180
    assert result.history.final_accuracy() is not None


def test_gan_phases_issue_no_queries(tiny_config, make_oracle, proxy_images):
    oracle = make_oracle()
    runner = AttackRunner(tiny_config, oracle, proxy_images, device="cpu")
    runner.run(stop_after="pretrain_gan")
    assert oracle.queries_used == 0
    runner.run(stop_after="init_clone")
    assert oracle.queries_used == 40
    runner.run(stop_after="refine_generator")
    assert oracle.queries_used == 40
    assert runner.completed_phases == ["pretrain_gan", "init_clone", "refine_generator"]


def test_zero_alternating_budget(tiny_overrides, make_oracle, proxy_images):
    oracle = make_oracle()
    result = _run(tiny_overrides(N_Q=0), oracle, proxy_images)
    assert oracle.queries_used == 80
    assert not result.history.phase_records("alternating")


def test_zero_clone_samples(tiny_overrides, make_oracle, proxy_images):
    oracle = make_oracle()
    result = _run(tiny_overrides(n_C=0), oracle, proxy_images)
    assert result.ledger.phase_breakdown == {"alternating": 100}


def test_history_queries_never_decrease(tiny_config, oracle, proxy_images):
    result = _run(tiny_config, oracle, proxy_images)
    used = [r.queries_used for r in result.history]
    assert used == sorted(used)


# ---- loop scheduling --------------------------------------------------------------


def test_generator_gap(tiny_overrides, oracle, proxy_images):
    config = tiny_overrides(iteration_gap_G=1, N_Q=64)
    result = _run(config, oracle, proxy_images)
    records = result.history.phase_records("alternating")
    assert len([r for r in records if r.loss_g is not None]) == 2
    assert len([r for r in records if r.loss_c is not None]) == 4


def test_clone_gap(tiny_overrides, oracle, proxy_images):
    config = tiny_overrides(iteration_gap_C=2, N_Q=64)
    runner = AttackRunner(config, oracle, proxy_images, device="cpu")
    runner.run()
    assert runner.loop_iteration == 10
    assert runner.alternating_spent == 64
    records = runner.history.phase_records("alternating")
    assert len([r for r in records if r.loss_c is not None]) == 4
    assert len([r for r in records if r.loss_g is not None]) == 10


def test_discriminator_can_be_disabled(tiny_overrides, oracle, proxy_images):
    result = _run(tiny_overrides(discriminator_enabled="false"), oracle, proxy_images)
    pretrain = result.history.phase_records("pretrain_gan")
    assert all(r.loss_d is not None for r in pretrain)
    for phase in ("refine_generator", "alternating"):
        assert all(r.loss_d is None for r in result.history.phase_records(phase))


def test_eval_every(tiny_overrides, oracle, proxy_images, test_set):
    result = _run(tiny_overrides(eval_every=2), oracle, proxy_images, test_set)
    checkpoints = [r for r in result.history.phase_records("alternating") if r.clone_accuracy is not None]
    # iterations 2, 4 and 6 of 7, then the closing evaluation
    assert len(checkpoints) == 4
    assert all(0.0 <= r.clone_accuracy <= 1.0 for r in checkpoints)


def test_early_stop_rule(tiny_config, oracle, proxy_images):
    runner = AttackRunner(tiny_config, oracle, proxy_images, device="cpu")
    runner.history = TrainingHistory(
        [
            StepRecord(step=0, phase="alternating", queries_used=10, clone_accuracy=0.5),
            StepRecord(step=1, phase="alternating", queries_used=20, clone_accuracy=0.6),
            StepRecord(step=2, phase="alternating", queries_used=40, clone_accuracy=0.55),
            StepRecord(step=3, phase="alternating", queries_used=50, clone_accuracy=0.6),
        ]
    )
    runner.alternating_spent = 10
    assert not runner._should_stop_early(alt_base=0)
    runner.alternating_spent = 50
    assert runner._should_stop_early(alt_base=0)
    runner.history.append(StepRecord(step=4, phase="alternating", queries_used=50, clone_accuracy=0.7))
    assert not runner._should_stop_early(alt_base=0)


# ---- label modes ------------------------------------------------------------------


def test_hard_mode_never_reads_probabilities(tiny_config, victim_model, proxy_images):
    oracle = SoftCountingOracle(victim_model, QueryLedger())
    _run(tiny_config, oracle, proxy_images)
    assert oracle.soft_calls == 0
    assert oracle.queries_used == 180


@pytest.mark.parametrize("mode", ["soft-l1", "soft-kl"])
def test_soft_modes(mode, tiny_overrides, victim_model, proxy_images):
    oracle = SoftCountingOracle(victim_model, QueryLedger())
    result = _run(tiny_overrides(mode=mode), oracle, proxy_images)
    assert oracle.soft_calls > 0
    assert oracle.queries_used == 180
    losses = [r.loss_c for r in result.history if r.loss_c is not None]
    assert all(torch.isfinite(torch.tensor(losses)))


# ---- failures ---------------------------------------------------------------------


def test_short_budget_fails_the_clone_phase(tiny_config, make_oracle, proxy_images):
    oracle = make_oracle(budget=60)
    with pytest.raises(PhaseError) as exc:
        _run(tiny_config, oracle, proxy_images)
    assert exc.value.phase == "retrain_clone"
    assert oracle.queries_used == 40


def test_short_budget_ends_alternation_cleanly(tiny_config, make_oracle, proxy_images):
    oracle = make_oracle(budget=100)
    result = _run(tiny_config, oracle, proxy_images)
    assert "alternating" in result.completed_phases
    assert oracle.queries_used == 96
    assert result.history.records[-1].class_histogram is not None


def test_empty_proxy_fails_pretraining(tiny_config, oracle):
    with pytest.raises(PhaseError) as exc:
        _run(tiny_config, oracle, torch.zeros((0, *INPUT_SHAPE)))
    assert exc.value.phase == "pretrain_gan"
    assert isinstance(exc.value.__cause__, InvariantError)


def test_mismatched_victim_rejected(tiny_overrides, oracle, proxy_images):
    with pytest.raises(InvariantError):
        AttackRunner(tiny_overrides(nets__num_classes=5), oracle, proxy_images, device="cpu")
    with pytest.raises(InvariantError):
        AttackRunner(tiny_overrides(nets__channels=3), oracle, proxy_images, device="cpu")
    with pytest.raises(InvariantError):
        AttackRunner(tiny_overrides(), oracle, torch.zeros((4, 3, 8, 8)), device="cpu")


def test_unknown_stop_phase(tiny_config, oracle, proxy_images):
    with pytest.raises(InvariantError):
        AttackRunner(tiny_config, oracle, proxy_images, device="cpu").run(stop_after="distill")


# ---- checkpoints and resume -------------------------------------------------------


def test_run_dir_outputs(tmp_path, tiny_config, oracle, proxy_images):
    _run(tiny_config, oracle, proxy_images, run_dir=tmp_path)
    for phase in PHASES:
        assert (tmp_path / f"ckpt_{phase}.pt").exists()
    assert (tmp_path / LATEST).exists()
    assert (tmp_path / "history.csv").exists()
    assert (tmp_path / "metrics.csv").exists()
    assert (tmp_path / "plots" / "samples" / "samples_alternating.png").exists()


def test_resume_matches_uninterrupted_run(tmp_path, tiny_config, make_oracle, proxy_images, test_set):
    full = _run(tiny_config, make_oracle(), proxy_images, test_set, run_dir=tmp_path / "full")

    _run(tiny_config, make_oracle(), proxy_images, test_set, run_dir=tmp_path / "staged", stop_after="init_clone")
    fresh = make_oracle()
    resumed = _run(
        tiny_config,
        fresh,
        proxy_images,
        test_set,
        run_dir=tmp_path / "staged",
        resume=tmp_path / "staged" / LATEST,
    )
    assert fresh.queries_used == 180
    assert resumed.ledger == full.ledger
    pd.testing.assert_frame_equal(resumed.history.to_frame(), full.history.to_frame(), rtol=1e-4)
    for a, b in zip(resumed.clone.parameters(), full.clone.parameters()):
        assert torch.allclose(a, b, atol=1e-5)


def test_resume_from_in_loop_checkpoint(tmp_path, tiny_overrides, make_oracle, victim_model, proxy_images, test_set):
    config = tiny_overrides(checkpoint_every=2)
    full = _run(config, make_oracle(), proxy_images, test_set, run_dir=tmp_path / "full")

    crashing = CrashingOracle(victim_model, QueryLedger(), crash_at=48)
    with pytest.raises(PhaseError) as exc:
        _run(config, crashing, proxy_images, test_set, run_dir=tmp_path / "crashed")
    assert exc.value.phase == "alternating"

    fresh = make_oracle()
    resumed = _run(
        config,
        fresh,
        proxy_images,
        test_set,
        run_dir=tmp_path / "crashed",
        resume=tmp_path / "crashed" / LATEST,
    )
    assert fresh.queries_used == 180
    assert resumed.ledger == full.ledger
    pd.testing.assert_frame_equal(resumed.history.to_frame(), full.history.to_frame(), rtol=1e-4)
    for a, b in zip(resumed.clone.parameters(), full.clone.parameters()):
        assert torch.allclose(a, b, atol=1e-5)


# ---- generation and history limits ------------------------------------------------


def test_query_batches_use_training_batchnorm(tiny_config, oracle, proxy_images):
    runner = AttackRunner(tiny_config, oracle, proxy_images, device="cpu")
    for module in runner.generator.modules():
        if isinstance(module, torch.nn.BatchNorm2d):
            module.running_mean.fill_(3.0)
            module.running_var.fill_(0.01)
    runner.generator.eval()

    drawn = runner._generate(4, torch.Generator().manual_seed(7))
    assert not runner.generator.training

    z = sample_latent(4, tiny_config.nets.latent_dim, torch.Generator().manual_seed(7), "cpu")
    runner.generator.train()
    with torch.no_grad():
        expected = runner.generator(z)
    assert torch.allclose(drawn, expected, atol=1e-6)

    runner.generator.eval()
    previewed = runner._generate(4, torch.Generator().manual_seed(7), eval_mode=True)
    assert not torch.allclose(previewed, expected, atol=1e-3)


def test_history_limit_is_the_run_budget(tiny_config, make_oracle, proxy_images):
    runner = AttackRunner(tiny_config, make_oracle(), proxy_images, device="cpu")
    assert runner.history.query_limit == 180
    with pytest.raises(InvariantError):
        runner.history.append(StepRecord(step=0, phase="alternating", queries_used=181))

    used = make_oracle()
    used.ledger.charge(25, "earlier")
    assert AttackRunner(tiny_config, used, proxy_images, device="cpu").history.query_limit == 205
