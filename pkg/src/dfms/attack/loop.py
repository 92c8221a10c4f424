"""
The attack: GAN pretraining on proxy data, clone initialization, generator refinement
with the class-diversity term, clone retraining, then alternating generator/clone
training until the query budget is spent.

Only the two clone phases and the alternating loop query the victim. All randomness
(latents, proxy sampling, new networks) flows from one seeded ``torch.Generator``, so
a run is reproducible and resumable from any checkpoint.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import torch
import torch.nn.functional as F
from loguru import logger
from torch.utils.data import TensorDataset
from tqdm import tqdm

from dfms.analysis.metrics import class_histogram, clone_accuracy
from dfms.analysis.visualizer import RunVisualizer
from dfms.attack.checkpoint import LATEST, capture_rng_states, load_checkpoint, restore_rng_states, save_checkpoint
from dfms.attack.config import AttackConfig
from dfms.attack.history import HISTORY_CSV, METRICS_CSV, MetricsWriter, StepRecord, TrainingHistory
from dfms.core.config import settings
from dfms.core.errors import BudgetExhaustedError, CheckpointError, InvariantError, PhaseError
from dfms.losses import (
    LossReport,
    adv_fake_loss,
    adv_losses,
    class_diversity_loss,
    clone_ce_loss,
    discriminator_loss,
    generator_loss,
    kl_distill_loss,
    l1_logit_loss,
)
from dfms.nets.builder import PlanNetwork, build_network, sample_latent
from dfms.nets.zoo import classifier_spec, discriminator_spec, generator_spec
from dfms.victim.ledger import PHASE_ALTERNATING, PHASE_INIT_CLONE, PHASE_RETRAIN_CLONE, LedgerSnapshot
from dfms.victim.oracle import VictimEndpoint

PHASES = ("pretrain_gan", "init_clone", "refine_generator", "retrain_clone", "alternating")

# Share of the alternating budget the early-stop rule looks back over, and the
# minimum accuracy gain (as a fraction) that counts as improvement.
EARLY_STOP_WINDOW = 0.2
EARLY_STOP_MIN_GAIN = 0.001


@dataclass
class AttackResult:
    clone: PlanNetwork
    generator: PlanNetwork
    discriminator: PlanNetwork
    history: TrainingHistory
    ledger: LedgerSnapshot
    completed_phases: List[str]


class AttackRunner:
    """Holds the networks, optimizers and bookkeeping of one attack run."""

    def __init__(
        self,
        config: AttackConfig,
        victim: VictimEndpoint,
        proxy: torch.Tensor,
        test_set: Optional[TensorDataset] = None,
        run_dir: Optional[Path] = None,
        device: Optional[Union[str, torch.device]] = None,
    ):
        """Build fresh networks for a run.

        Args:
            config: Attack settings
            victim: Local oracle or remote client; the only source of labels
            proxy: Proxy images ``(N, C, H, W)`` in [-1, 1]
            test_set: Labeled held-out set for accuracy checkpoints (optional)
            run_dir: Where checkpoints, CSVs and plots go; nothing is written when None
            device: Training device, ``settings.DEVICE`` by default
        """
        nets = config.nets
        image_shape = (nets.channels, nets.image_size, nets.image_size)
        if tuple(victim.input_shape) != image_shape:
            raise InvariantError(f"victim expects {tuple(victim.input_shape)}, config gives {image_shape}")
        if victim.num_classes != nets.num_classes:
            raise InvariantError(
                f"nets.num_classes = {nets.num_classes} but the victim has {victim.num_classes} classes"
            )
        if proxy.dim() != 4 or tuple(proxy.shape[1:]) != image_shape:
            raise InvariantError(f"proxy images must be (N, {image_shape}), got {tuple(proxy.shape)}")

        self.config = config
        self.victim = victim
        self.proxy = proxy.float()
        self.test_set = test_set
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.device = torch.device(device) if device is not None else settings.torch_device()

        self.rng = torch.Generator().manual_seed(config.seed)
        self.generator_spec = generator_spec(nets.latent_dim, nets.channels, nets.image_size, nets.gen_width)
        self.discriminator_spec = discriminator_spec(nets.channels, nets.image_size, nets.disc_width)
        self.clone_spec = classifier_spec(nets.clone_arch, nets.channels, nets.num_classes, nets.image_size)
        self.generator = build_network(self.generator_spec, self.rng).to(self.device)
        self.discriminator = build_network(self.discriminator_spec, self.rng).to(self.device)
        self.clone = build_network(self.clone_spec, self.rng).to(self.device)

        betas = (config.gan.beta1, config.gan.beta2)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.gan.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.gan.lr, betas=betas)
        self.opt_c: Optional[torch.optim.Optimizer] = None
        self.sched_c: Optional[torch.optim.lr_scheduler.LRScheduler] = None

        # final queries_used <= starting total + 2 * n_C + N_Q
        self.history = TrainingHistory(query_limit=victim.queries_used + config.total_budget)
        self.completed_phases: List[str] = []
        self.step = 0
        self.loop_iteration = 0
        self.alternating_spent = 0
        self.metrics = MetricsWriter(self.run_dir / METRICS_CSV) if self.run_dir else None

    # ---- sampling -------------------------------------------------------

    def _latent(self, batch: int) -> torch.Tensor:
        return sample_latent(batch, self.config.nets.latent_dim, self.rng, self.device)

    def _proxy_batch(self, batch: int) -> torch.Tensor:
        idx = torch.randint(len(self.proxy), (batch,), generator=self.rng)
        return self.proxy[idx].to(self.device)

    def _generate(self, n: int, rng: Optional[torch.Generator] = None, eval_mode: bool = False) -> torch.Tensor:
        """``n`` generator samples on the CPU without gradients.

        Query batches use training-mode batch normalization, the mode the generator is
        optimized in; ``eval_mode`` is for reported statistics and previews.
        """
        rng = rng or self.rng
        was_training = self.generator.training
        self.generator.train(not eval_mode)
        chunks = []
        with torch.no_grad():
            for start in range(0, n, self.config.batch_size):
                b = min(self.config.batch_size, n - start)
                z = sample_latent(b, self.config.nets.latent_dim, rng, self.device)
                chunks.append(self.generator(z).cpu())
        self.generator.train(was_training)
        return torch.cat(chunks) if chunks else torch.zeros((0, *self.proxy.shape[1:]))

    def batch_stat_gap(self, n: int = 256) -> float:
        """Mean absolute gap between per-channel mean/std of generated and proxy images."""
        rng = torch.Generator().manual_seed(self.config.seed + 1)
        fake = self._generate(n, rng, eval_mode=True)
        idx = torch.randint(len(self.proxy), (n,), generator=rng)
        real = self.proxy[idx]
        gap = (fake.mean(dim=(0, 2, 3)) - real.mean(dim=(0, 2, 3))).abs().mean()
        gap += (fake.std(dim=(0, 2, 3)) - real.std(dim=(0, 2, 3))).abs().mean()
        return float(gap)

    # ---- single steps ---------------------------------------------------

    def _gan_step(self, real: torch.Tensor, use_clone: bool, update_d: bool) -> Tuple[LossReport, Optional[LossReport]]:
        """One discriminator step (if enabled) then one generator step."""
        cfg = self.config
        z = None
        d_report = None
        if update_d:
            z = self._latent(real.shape[0])
            fake = self.generator(z).detach()
            l_real, l_fake = adv_losses(self.discriminator(real), self.discriminator(fake))
            d_report = discriminator_loss(l_real, l_fake)
            self.opt_d.zero_grad()
            (-d_report.value).backward()
            self.opt_d.step()

        if z is None or not cfg.gan.shared_latent:
            z = self._latent(real.shape[0])
        fake = self.generator(z)
        l_adv = adv_fake_loss(self.discriminator(fake))
        if use_clone:
            l_div = class_diversity_loss(F.softmax(self.clone(fake), dim=1))
            g_report = generator_loss(l_adv, l_div, cfg.lambda_div)
        else:
            g_report = generator_loss(l_adv, 0.0, 0.0)
        self.opt_g.zero_grad()
        g_report.value.backward()
        self.opt_g.step()
        return g_report, d_report

    def _clone_loss(self, scores: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        mode = self.config.mode
        if mode == "hard":
            return clone_ce_loss(scores, targets)
        targets = targets.to(scores.dtype)
        if mode == "soft-l1":
            return l1_logit_loss(targets, scores)
        return kl_distill_loss(targets, F.softmax(scores, dim=1))

    def _label(self, images: torch.Tensor, phase: str) -> torch.Tensor:
        if self.config.mode == "hard":
            labels = self.victim.hard_label_query(images.cpu(), phase)
        else:
            labels = self.victim.soft_label_query(images.cpu(), phase)
        return labels.to(self.device)

    def _query_set(self, images: torch.Tensor, phase: str) -> torch.Tensor:
        """Label a whole set batch by batch; any budget shortfall aborts the phase."""
        n = images.shape[0]
        remaining = self.victim.remaining
        if remaining is not None and remaining < n:
            raise PhaseError(phase, f"budget admits {remaining} more queries, phase needs {n}")
        targets = []
        for start in range(0, n, self.config.batch_size):
            try:
                targets.append(self._label(images[start:start + self.config.batch_size], phase))
            except BudgetExhaustedError as e:
                raise PhaseError(phase, f"budget exhausted after {start} of {n} queries") from e
        return torch.cat(targets)

    # ---- bookkeeping ----------------------------------------------------

    def _record(
        self,
        phase: str,
        loss_g: Optional[float] = None,
        loss_d: Optional[float] = None,
        loss_c: Optional[float] = None,
        evaluate: bool = False,
    ) -> StepRecord:
        accuracy = entropy = hist = None
        if evaluate:
            histogram = class_histogram(
                self.generator, self.clone, self.config.hist_samples, torch.Generator().manual_seed(self.config.seed)
            )
            hist, entropy = histogram.counts, histogram.normalized_entropy
            if self.test_set is not None:
                accuracy = clone_accuracy(self.clone, self.test_set)
        record = StepRecord(
            step=self.step,
            phase=phase,
            queries_used=self.victim.queries_used,
            loss_g=loss_g,
            loss_d=loss_d,
            loss_c=loss_c,
            clone_accuracy=accuracy,
            hist_entropy=entropy,
            class_histogram=hist,
        )
        self.history.append(record)
        if evaluate:
            acc_text = f"{accuracy:.4f}" if accuracy is not None else "n/a"
            logger.info(
                f"[{phase}] step {self.step}: queries {record.queries_used}, "
                f"clone accuracy {acc_text}, histogram entropy {entropy:.3f}"
            )
        return record

    def _log_metrics(self, *reports: Optional[LossReport]) -> None:
        if self.metrics is None:
            return
        for report in reports:
            if report is not None:
                self.metrics.add(self.step, report)

    def _fit_clone(self, clone: PlanNetwork, images: torch.Tensor, targets: torch.Tensor, epochs: int, phase: str) -> None:
        """Train ``clone`` on a labeled set with SGD and cosine annealing from the peak rate."""
        cfg = self.config.clone
        optimizer = torch.optim.SGD(clone.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
        steps_per_epoch = math.ceil(len(images) / self.config.batch_size)
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=epochs * steps_per_epoch)
        clone.train()
        pbar = tqdm(range(epochs), ncols=80, desc=phase, postfix="loss_C: *.****")
        for _ in pbar:
            perm = torch.randperm(len(images), generator=self.rng)
            losses = []
            for start in range(0, len(images), self.config.batch_size):
                idx = perm[start:start + self.config.batch_size]
                loss = self._clone_loss(clone(images[idx].to(self.device)), targets[idx])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                scheduler.step()
                losses.append(loss.item())
            self.step += 1
            mean_loss = sum(losses) / len(losses)
            pbar.postfix = f"loss_C: {mean_loss:.4f}"
            self._log_metrics(LossReport(name="clone", value=mean_loss, components={"epoch_mean": mean_loss}))
            self._record(phase, loss_c=mean_loss)

    # ---- phases ---------------------------------------------------------

    def pretrain_gan(self, epochs: Optional[int] = None) -> Tuple[PlanNetwork, PlanNetwork]:
        """Train generator and discriminator on proxy images only. Issues no victim queries."""
        if len(self.proxy) == 0:
            raise InvariantError("proxy corpus is empty")
        epochs = self.config.gan.pretrain_epochs if epochs is None else epochs
        batch = self.config.batch_size
        start_gap = self.batch_stat_gap()
        self.generator.train()
        self.discriminator.train()

        pbar = tqdm(range(epochs), ncols=80, desc="pretrain_gan", postfix="loss_G: *.****; loss_D: *.****")
        for _ in pbar:
            perm = torch.randperm(len(self.proxy), generator=self.rng)
            loss_g, loss_d = [], []
            for start in range(0, len(self.proxy), batch):
                real = self.proxy[perm[start:start + batch]].to(self.device)
                g_report, d_report = self._gan_step(real, use_clone=False, update_d=True)
                self._log_metrics(g_report, d_report)
                loss_g.append(g_report.scalar())
                loss_d.append(d_report.scalar())
            self.step += 1
            mean_g, mean_d = sum(loss_g) / len(loss_g), sum(loss_d) / len(loss_d)
            pbar.postfix = f"loss_G: {mean_g:.4f}; loss_D: {mean_d:.4f}"
            self._record("pretrain_gan", loss_g=mean_g, loss_d=mean_d)

        logger.info(f"Generator/proxy statistic gap: {start_gap:.4f} -> {self.batch_stat_gap():.4f}")
        return self.generator, self.discriminator

    def init_clone(self, n_c: Optional[int] = None) -> PlanNetwork:
        """Train the clone on ``n_C`` victim-labelled images mixed from generator samples and proxy images."""
        n_c = self.config.n_C if n_c is None else n_c
        if n_c == 0:
            logger.info("n_C = 0: clone left untouched")
            return self.clone
        n_proxy = int(round(n_c * self.config.init_mix_fraction))
        if n_proxy and len(self.proxy) == 0:
            raise InvariantError("proxy corpus is empty")
        if n_proxy <= len(self.proxy):
            proxy_idx = torch.randperm(len(self.proxy), generator=self.rng)[:n_proxy]
        else:
            proxy_idx = torch.randint(len(self.proxy), (n_proxy,), generator=self.rng)
        images = torch.cat([self._generate(n_c - n_proxy), self.proxy[proxy_idx]])
        targets = self._query_set(images, PHASE_INIT_CLONE)
        self._fit_clone(self.clone, images, targets, self.config.clone.init_epochs, "init_clone")
        self._record("init_clone", evaluate=True)
        return self.clone

    def refine_generator(self, n_g: Optional[int] = None) -> Tuple[PlanNetwork, PlanNetwork]:
        """``n_G`` generator/discriminator steps with the frozen clone scoring class diversity."""
        n_g = self.config.n_G if n_g is None else n_g
        if len(self.proxy) == 0:
            raise InvariantError("proxy corpus is empty")
        self.clone.eval()
        self.clone.requires_grad_(False)
        self.generator.train()
        self.discriminator.train()
        try:
            for _ in tqdm(range(n_g), ncols=80, desc="refine_generator"):
                g_report, d_report = self._gan_step(
                    self._proxy_batch(self.config.batch_size),
                    use_clone=True,
                    update_d=self.config.discriminator_enabled,
                )
                self.step += 1
                self._log_metrics(g_report, d_report)
                self._record(
                    "refine_generator",
                    loss_g=g_report.scalar(),
                    loss_d=d_report.scalar() if d_report else None,
                )
        finally:
            self.clone.requires_grad_(True)
        self._record("refine_generator", evaluate=True)
        return self.generator, self.discriminator

    def retrain_clone(self, n_c: Optional[int] = None) -> PlanNetwork:
        """Train a fresh clone from scratch on ``n_C`` victim-labelled generator samples."""
        n_c = self.config.n_C if n_c is None else n_c
        if n_c == 0:
            logger.info("n_C = 0: keeping the current clone")
            return self.clone
        fresh = build_network(self.clone_spec, self.rng).to(self.device)
        images = self._generate(n_c)
        targets = self._query_set(images, PHASE_RETRAIN_CLONE)
        self._fit_clone(fresh, images, targets, self.config.clone.retrain_epochs, "retrain_clone")
        self.clone = fresh
        self._record("retrain_clone", evaluate=True)
        return self.clone

    def _start_alternating_optimizer(self) -> None:
        cfg = self.config.clone
        self.opt_c = torch.optim.SGD(
            self.clone.parameters(), lr=cfg.alternating_lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
        )
        clone_steps = max(1, math.ceil(self.config.N_Q / self.config.batch_size))
        self.sched_c = torch.optim.lr_scheduler.CosineAnnealingLR(self.opt_c, T_max=clone_steps)

    def _should_stop_early(self, alt_base: int) -> bool:
        n_q = self.config.N_Q
        spent = self.alternating_spent
        if spent < EARLY_STOP_WINDOW * n_q:
            return False
        window_start = spent - EARLY_STOP_WINDOW * n_q
        before, recent = [], []
        for record in self.history.phase_records("alternating"):
            if record.clone_accuracy is None:
                continue
            (before if record.queries_used - alt_base <= window_start else recent).append(record.clone_accuracy)
        if not before or not recent:
            return False
        return max(recent) < max(before) + EARLY_STOP_MIN_GAIN

    def alternating_loop(self) -> Tuple[PlanNetwork, TrainingHistory]:
        """Alternate generator/discriminator and clone steps until ``N_Q`` queries are spent.

        A model with gap ``t`` updates on iterations where ``iteration % (t + 1) == 0``.
        The last clone batch is truncated to the remaining budget. A budget rejection
        from the victim ends the loop cleanly.
        """
        cfg = self.config
        if cfg.N_Q - self.alternating_spent <= 0:
            logger.info("N_Q exhausted or zero: alternating loop skipped")
            return self.clone, self.history
        if self.opt_c is None:
            self._start_alternating_optimizer()
        alt_base = self.victim.queries_used - self.alternating_spent
        gap_g, gap_c = cfg.iteration_gap_G + 1, cfg.iteration_gap_C + 1
        self.generator.train()
        self.discriminator.train()

        pbar = tqdm(total=cfg.N_Q, initial=self.alternating_spent, ncols=80, desc="alternating")
        while self.alternating_spent < cfg.N_Q:
            it = self.loop_iteration
            g_report = d_report = None
            loss_c = None
            if it % gap_g == 0:
                self.clone.eval()
                g_report, d_report = self._gan_step(
                    self._proxy_batch(cfg.batch_size), use_clone=True, update_d=cfg.discriminator_enabled
                )
            if it % gap_c == 0:
                b = min(cfg.batch_size, cfg.N_Q - self.alternating_spent)
                images = self._generate(b)
                try:
                    targets = self._label(images, PHASE_ALTERNATING)
                except BudgetExhaustedError as e:
                    logger.warning(f"Victim budget exhausted during alternation, stopping: {e}")
                    break
                self.clone.train()
                loss = self._clone_loss(self.clone(images.to(self.device)), targets)
                self.opt_c.zero_grad()
                loss.backward()
                self.opt_c.step()
                self.sched_c.step()
                loss_c = loss.item()
                self.alternating_spent += b
                pbar.update(b)
                self._log_metrics(LossReport(name="clone", value=loss_c, components={"batch": float(b)}))
            self._log_metrics(g_report, d_report)

            self.loop_iteration += 1
            self.step += 1
            evaluate = bool(cfg.eval_every) and self.loop_iteration % cfg.eval_every == 0
            self._record(
                "alternating",
                loss_g=g_report.scalar() if g_report else None,
                loss_d=d_report.scalar() if d_report else None,
                loss_c=loss_c,
                evaluate=evaluate,
            )
            if cfg.checkpoint_every and self.loop_iteration % cfg.checkpoint_every == 0 and self.run_dir:
                self.save_checkpoint(self.run_dir / LATEST)
            if evaluate and cfg.early_stop and self.test_set is not None and self._should_stop_early(alt_base):
                logger.info(f"Clone accuracy saturated after {self.alternating_spent} alternating queries; stopping")
                break
        pbar.close()

        last = self.history.records[-1] if len(self.history) else None
        if last is None or last.phase != "alternating" or last.class_histogram is None:
            self._record("alternating", evaluate=True)
        return self.clone, self.history

    # ---- persistence ----------------------------------------------------

    def state_dict(self) -> Dict:
        return {
            "config": self.config.model_dump(),
            "completed_phases": list(self.completed_phases),
            "step": self.step,
            "loop_iteration": self.loop_iteration,
            "alternating_spent": self.alternating_spent,
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "clone": self.clone.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "opt_c": self.opt_c.state_dict() if self.opt_c is not None else None,
            "sched_c": self.sched_c.state_dict() if self.sched_c is not None else None,
            "rng": capture_rng_states(self.rng),
            "ledger": self.victim.ledger_snapshot().model_dump(),
            "history": [r.model_dump() for r in self.history],
        }

    def save_checkpoint(self, path: Path) -> Path:
        self._flush_outputs()
        return save_checkpoint(path, self.state_dict())

    def load_state(self, state: Dict) -> None:
        """Restore a checkpoint into this runner; a local victim's ledger is rolled back too."""
        if state["config"] != self.config.model_dump():
            logger.warning("Resuming with a config that differs from the checkpoint's")
        try:
            self.generator.load_state_dict(state["generator"])
            self.discriminator.load_state_dict(state["discriminator"])
            self.clone.load_state_dict(state["clone"])
            self.opt_g.load_state_dict(state["opt_g"])
            self.opt_d.load_state_dict(state["opt_d"])
        except (KeyError, RuntimeError) as e:
            raise CheckpointError(f"checkpoint does not match the configured networks: {e}") from e
        if state["opt_c"] is not None:
            self._start_alternating_optimizer()
            self.opt_c.load_state_dict(state["opt_c"])
            self.sched_c.load_state_dict(state["sched_c"])
        restore_rng_states(state["rng"], self.rng)

        self.completed_phases = list(state["completed_phases"])
        self.step = state["step"]
        self.loop_iteration = state["loop_iteration"]
        self.alternating_spent = state["alternating_spent"]
        self.history = TrainingHistory(
            [StepRecord(**r) for r in state["history"]], query_limit=self.history.query_limit
        )

        snapshot = LedgerSnapshot(**state["ledger"])
        if hasattr(self.victim, "restore_ledger"):
            self.victim.restore_ledger(snapshot)
        elif self.victim.queries_used != snapshot.used:
            logger.warning(
                f"Remote ledger shows {self.victim.queries_used} queries, checkpoint recorded {snapshot.used}; "
                "a served ledger cannot be rolled back"
            )

    def _flush_outputs(self) -> None:
        if self.run_dir is None:
            return
        self.history.write_csv(self.run_dir / HISTORY_CSV)
        if self.metrics is not None:
            self.metrics.flush()

    def _render_samples(self, phase: str) -> None:
        if self.run_dir is None:
            return
        try:
            preview = self._generate(64, torch.Generator().manual_seed(self.config.seed + 2), eval_mode=True)
            RunVisualizer(self.run_dir / "plots").create_sample_grid(preview, name=f"samples_{phase}")
        except Exception as e:
            logger.error(f"Error rendering sample grid: {e}")

    # ---- orchestration --------------------------------------------------

    def _run_phase(self, phase: str) -> None:
        if phase == "pretrain_gan":
            self.pretrain_gan()
        elif phase == "init_clone":
            self.init_clone()
        elif phase == "refine_generator":
            self.refine_generator()
        elif phase == "retrain_clone":
            self.retrain_clone()
        else:
            self.alternating_loop()

    def run(self, stop_after: Optional[str] = None) -> AttackResult:
        """Run the remaining phases in order, checkpointing after each.

        Args:
            stop_after: Stop once this phase has completed (for staged runs)

        Raises:
            PhaseError: a phase failed; ``phase`` names it
        """
        if stop_after is not None and stop_after not in PHASES:
            raise InvariantError(f"unknown phase '{stop_after}', expected one of {PHASES}")
        for phase in PHASES:
            if phase in self.completed_phases:
                continue
            logger.info(f"Phase {phase} started ({self.victim.queries_used} queries used)")
            try:
                self._run_phase(phase)
            except PhaseError:
                raise
            except Exception as e:
                logger.error(f"Phase {phase} failed: {e}")
                raise PhaseError(phase, str(e)) from e
            self.completed_phases.append(phase)
            logger.info(f"Phase {phase} finished ({self.victim.queries_used} queries used)")
            if self.run_dir is not None:
                self.save_checkpoint(self.run_dir / f"ckpt_{phase}.pt")
                self.save_checkpoint(self.run_dir / LATEST)
                self._render_samples(phase)
            if phase == stop_after:
                break
        return AttackResult(
            clone=self.clone,
            generator=self.generator,
            discriminator=self.discriminator,
            history=self.history,
            ledger=self.victim.ledger_snapshot(),
            completed_phases=list(self.completed_phases),
        )


def run_attack(
    config: AttackConfig,
    victim: VictimEndpoint,
    proxy: torch.Tensor,
    test_set: Optional[TensorDataset] = None,
    run_dir: Optional[Path] = None,
    resume: Optional[Path] = None,
    device: Optional[Union[str, torch.device]] = None,
    stop_after: Optional[str] = None,
) -> AttackResult:
    """Run (or resume) a complete attack.

    Args:
        config: Attack settings
        victim: Local oracle or remote client
        proxy: Proxy images
        test_set: Labeled held-out set for accuracy checkpoints
        run_dir: Output directory
        resume: Checkpoint to continue from
        device: Training device
        stop_after: Stop once this phase has completed

    Returns:
        Final clone, generator, discriminator, history and ledger snapshot
    """
    runner = AttackRunner(config, victim, proxy, test_set=test_set, run_dir=run_dir, device=device)
    if resume is not None:
        runner.load_state(load_checkpoint(resume))
        logger.info(f"Resuming after phases: {', '.join(runner.completed_phases) or 'none'}")
    return runner.run(stop_after=stop_after)
