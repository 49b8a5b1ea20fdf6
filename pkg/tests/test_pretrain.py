import json
import math

import numpy as np
import pytest
import torch

from mrifoundry.checkpoint import (
    Checkpoint,
    load_checkpoint,
    model_tensors,
    restore_training,
    save_checkpoint,
    snapshot_training,
)
from mrifoundry.errors import (
    BatchSizeError,
    CompatibilityError,
    ConfigError,
    DivergenceError,
    IntegrityError,
    ScheduleError,
    ShapeError,
)
from mrifoundry.models import EncoderConfig
from mrifoundry.phantom import PhantomSpec, gen_phantom
from mrifoundry.pretrain import (
    PretrainConfig,
    VolumeSource,
    init_train_state,
    l1_loss,
    log_ratio_loss,
    lr_schedule,
    pretrain_loop,
    total_loss,
    train_step,
)
from mrifoundry.text import HashingTextEncoder, build_description

TINY_ENC = EncoderConfig(arch="conv", feature_size=2)


def triple_loop_oracle(f_rows, y_rows, eps=1e-6):
    """Independent brute-force triplet-loop evaluation of the ratio loss."""

    def dist(u, v):
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v))) + eps

    b = len(f_rows)
    terms = []
    for a in range(b):
        others = [k for k in range(b) if k != a]
        for x in range(len(others)):
            for y in range(x + 1, len(others)):
                i, j = others[x], others[y]
                t = math.log(dist(f_rows[a], f_rows[i]) / dist(f_rows[a], f_rows[j])) - math.log(
                    dist(y_rows[a], y_rows[i]) / dist(y_rows[a], y_rows[j])
                )
                terms.append(t * t)
    return sum(terms) / len(terms)


def tiny_source(n=6, seed0=0):
    enc = HashingTextEncoder(dim=16)
    vols, embs = [], []
    for i in range(n):
        spec = PhantomSpec(
            size=(32, 32, 32), n_objects=2, modality=("T1w", "T2w")[i % 2], seed=seed0 + i
        )
        vol, _, meta = gen_phantom(spec)
        vols.append(vol)
        embs.append(enc.embed(build_description(meta)).vector)
    return VolumeSource(vols, np.stack(embs))


class TestL1Loss:
    def test_identical(self):
        x = torch.rand(2, 1, 4, 4, 4)
        assert float(l1_loss(x, x)) == 0.0

    def test_constant_offset(self):
        x = torch.rand(2, 1, 4, 4, 4)
        assert float(l1_loss(x + 0.5, x)) == pytest.approx(0.5, abs=1e-7)

    def test_matches_nested_loop(self, rng):
        a = rng.normal(size=(3, 2, 2))
        b = rng.normal(size=(3, 2, 2))
        got = float(l1_loss(torch.tensor(a), torch.tensor(b)))
        expect = np.mean([abs(x - y) for x, y in zip(a.ravel(), b.ravel())])
        assert abs(got - expect) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_loss(torch.zeros(2, 2), torch.zeros(2, 3))


class TestLogRatioLoss:
    def test_identical_spaces_zero(self, rng):
        y = torch.tensor(rng.normal(size=(8, 5)))
        assert float(log_ratio_loss(y, y)) < 1e-10

    def test_scale_invariance(self, rng):
        y = torch.tensor(rng.normal(size=(8, 5)))
        assert float(log_ratio_loss(3.7 * y, y)) < 1e-10

    def test_frozen_b3_case(self):
        f = torch.tensor([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], dtype=torch.float64)
        y = torch.tensor([[0.0], [1.0], [3.0]], dtype=torch.float64)
        # frozen value computed by the triple-loop oracle before the
        # implementation existed
        assert float(log_ratio_loss(f, y)) == pytest.approx(0.14805899344191256, abs=1e-12)

    def test_matches_oracle_random_batches(self, rng):
        for _ in range(10):
            b = int(rng.integers(3, 9))
            f = rng.normal(size=(b, 4))
            y = rng.normal(size=(b, 3))
            got = float(log_ratio_loss(torch.tensor(f), torch.tensor(y)))
            expect = triple_loop_oracle(f.tolist(), y.tolist())
            assert abs(got - expect) < 1e-12

    def test_isometry_invariance(self, rng):
        f = rng.normal(size=(6, 4))
        y = rng.normal(size=(6, 3))
        base = float(log_ratio_loss(torch.tensor(f), torch.tensor(y), eps=1e-12))
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        f_iso = f @ q + rng.normal(size=(1, 4))
        rotated = float(log_ratio_loss(torch.tensor(f_iso), torch.tensor(y), eps=1e-12))
        assert abs(base - rotated) < 1e-8
        q2, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        y_iso = y @ q2 + rng.normal(size=(1, 3))
        rotated = float(log_ratio_loss(torch.tensor(f), torch.tensor(y_iso), eps=1e-12))
        assert abs(base - rotated) < 1e-8

    def test_batch_permutation_invariance(self, rng):
        f = rng.normal(size=(6, 4))
        y = rng.normal(size=(6, 3))
        perm = rng.permutation(6)
        a = float(log_ratio_loss(torch.tensor(f), torch.tensor(y)))
        b = float(log_ratio_loss(torch.tensor(f[perm]), torch.tensor(y[perm])))
        assert abs(a - b) < 1e-12

    def test_duplicates_finite(self):
        f = torch.tensor([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        y = torch.tensor([[0.0], [0.5], [1.0], [2.0]], dtype=torch.float64)
        f = f.requires_grad_(True)
        loss = log_ratio_loss(f, y)
        assert math.isfinite(float(loss))
        loss.backward()
        assert torch.isfinite(f.grad).all()

    def test_small_batch_rejected(self):
        with pytest.raises(BatchSizeError):
            log_ratio_loss(torch.zeros(2, 3), torch.zeros(2, 3))

    def test_gradient_matches_fd(self, rng):
        f = torch.tensor(rng.normal(size=(5, 4)), requires_grad=True)
        y = torch.tensor(rng.normal(size=(5, 3)))
        loss = log_ratio_loss(f, y)
        (grad,) = torch.autograd.grad(loss, f)
        eps = 1e-6
        fd = np.zeros_like(grad.numpy())
        with torch.no_grad():
            flat = f.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                lp = float(log_ratio_loss(f, y))
                flat[i] = orig - eps
                lm = float(log_ratio_loss(f, y))
                flat[i] = orig
                fd.ravel()[i] = (lp - lm) / (2 * eps)
        rel = np.linalg.norm(fd - grad.numpy()) / np.linalg.norm(fd)
        assert rel < 1e-4


class TestTotalLoss:
    def test_zero_weight_equals_l1(self, rng):
        recon = torch.tensor(rng.normal(size=(2, 1, 4, 4, 4)))
        target = torch.tensor(rng.normal(size=(2, 1, 4, 4, 4)))
        out = total_loss(recon, target, torch.zeros(2, 3), torch.zeros(2, 3), weight=0.0)
        assert float(out["total"]) == float(out["l1"])
        assert float(out["log_ratio"]) == 0.0

    def test_stated_weight_arithmetic(self):
        # the published weighting: l1 0.2 with ratio loss 1.0 totals 0.21
        assert 0.2 + 0.01 * 1.0 == pytest.approx(0.21, abs=1e-12)
        recon = torch.zeros(1, 1, 2, 2, 2, dtype=torch.float64)
        target = torch.full((1, 1, 2, 2, 2), 0.2, dtype=torch.float64)
        f = torch.tensor([[0.0], [1.0], [3.0]], dtype=torch.float64)
        y = torch.tensor([[0.0], [1.0], [2.0]], dtype=torch.float64)
        ratio = float(log_ratio_loss(f, y))
        out = total_loss(recon, target, f, y, weight=0.01)
        assert float(out["l1"]) == pytest.approx(0.2, abs=1e-12)
        assert float(out["total"]) == pytest.approx(0.2 + 0.01 * ratio, abs=1e-12)

    def test_components_sum(self, rng):
        recon = torch.tensor(rng.normal(size=(1, 1, 4, 4, 4)))
        target = torch.tensor(rng.normal(size=(1, 1, 4, 4, 4)))
        f = torch.tensor(rng.normal(size=(4, 3)))
        y = torch.tensor(rng.normal(size=(4, 2)))
        out = total_loss(recon, target, f, y, weight=0.01)
        assert float(out["total"]) == pytest.approx(
            float(out["l1"]) + 0.01 * float(out["log_ratio"]), abs=1e-12
        )


class TestLrSchedule:
    def test_warmup_endpoint(self):
        assert lr_schedule(1000, 200_000, 1000, 1e-6) == pytest.approx(1e-6, abs=0)

    def test_final_zero(self):
        assert lr_schedule(200_000, 200_000, 1000, 1e-6) == pytest.approx(0.0, abs=1e-22)

    def test_cosine_midpoint(self):
        mid = 1000 + (200_000 - 1000) // 2
        # odd span: evaluate continuous formula at the exact midpoint instead
        steps, warmup = 200_000, 1000
        t = (mid - warmup) / (steps - warmup)
        expect = 1e-6 * 0.5 * (1 + math.cos(math.pi * t))
        assert lr_schedule(mid, steps, warmup, 1e-6) == pytest.approx(expect, rel=1e-12)

    def test_continuity_at_warmup(self):
        base = 3e-4
        below = lr_schedule(999, 200_000, 1000, base) + base / 1000
        at = lr_schedule(1000, 200_000, 1000, base)
        assert at == pytest.approx(base, abs=1e-12)
        assert below == pytest.approx(base, abs=1e-12)

    def test_linear_warmup_from_zero(self):
        assert lr_schedule(0, 100, 10, 1.0) == 0.0
        assert lr_schedule(5, 100, 10, 1.0) == pytest.approx(0.5)

    def test_non_increasing_after_warmup(self):
        vals = [lr_schedule(s, 1000, 100, 1.0) for s in range(100, 1001, 7)]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_out_of_range(self):
        with pytest.raises(ScheduleError):
            lr_schedule(-1, 100, 10, 1.0)
        with pytest.raises(ScheduleError):
            lr_schedule(101, 100, 10, 1.0)


class TestPretrainConfig:
    def test_invariants(self):
        with pytest.raises(ConfigError):
            PretrainConfig(steps=100, warmup=100)
        with pytest.raises(ConfigError):
            PretrainConfig(loss_weight=-0.1)
        with pytest.raises(ConfigError):
            PretrainConfig(batch=2, loss_weight=0.01)
        PretrainConfig(batch=2, loss_weight=0.0)  # fine without the ratio loss

    def test_arch_default_lr(self):
        cfg = PretrainConfig()
        assert cfg.resolve_base_lr("swin") == 1e-6
        assert cfg.resolve_base_lr("conv") == 1e-4
        assert PretrainConfig(base_lr=0.5).resolve_base_lr("swin") == 0.5


class TestTrainStep:
    def cfg(self, **kw):
        base = dict(steps=50, warmup=0, batch=3, roi=32, base_lr=1e-3, checkpoint_every=10, seed=1)
        base.update(kw)
        return PretrainConfig(**base)

    def test_two_runs_bit_identical(self):
        src = tiny_source()
        cfg = self.cfg()

        def run():
            state = init_train_state(cfg, TINY_ENC)
            for step in range(3):
                x, y = src.batch(cfg.seed, step, cfg.batch, cfg.roi)
                train_step(state, x, y)
            return state.model.state_dict()

        a, b = run(), run()
        assert all(torch.equal(a[k], b[k]) for k in a)

    def test_weight_zero_ignores_text(self, rng):
        src = tiny_source()
        cfg = self.cfg(loss_weight=0.0)

        def run(randomize):
            state = init_train_state(cfg, TINY_ENC)
            for step in range(2):
                x, y = src.batch(cfg.seed, step, cfg.batch, cfg.roi)
                if randomize:
                    y = torch.tensor(rng.normal(size=tuple(y.shape)).astype(np.float32))
                train_step(state, x, y)
            return state.model.state_dict()

        a, b = run(False), run(True)
        assert all(torch.equal(a[k], b[k]) for k in a)

    def test_descent_majority(self):
        src = tiny_source()
        wins = 0
        for seed in range(20):
            cfg = self.cfg(seed=seed)
            state = init_train_state(cfg, TINY_ENC)
            x, y = src.batch(cfg.seed, 0, cfg.batch, cfg.roi)
            with torch.no_grad():
                recon, pooled = state.model(x)
                before = float(total_loss(recon, x, pooled, y, cfg.loss_weight)["total"])
            train_step(state, x, y)
            with torch.no_grad():
                recon, pooled = state.model(x)
                after = float(total_loss(recon, x, pooled, y, cfg.loss_weight)["total"])
            wins += after < before
        assert wins >= 18

    def test_divergence_detected(self):
        src = tiny_source()
        cfg = self.cfg()
        state = init_train_state(cfg, TINY_ENC)
        with torch.no_grad():
            next(state.model.parameters()).fill_(float("inf"))
        x, y = src.batch(cfg.seed, 0, cfg.batch, cfg.roi)
        with pytest.raises(DivergenceError):
            train_step(state, x, y)

    def test_metrics_record(self):
        src = tiny_source()
        cfg = self.cfg()
        state = init_train_state(cfg, TINY_ENC)
        x, y = src.batch(cfg.seed, 0, cfg.batch, cfg.roi)
        rec = train_step(state, x, y)
        assert set(rec) == {"step", "l1", "log_ratio", "total", "lr"}
        assert rec["step"] == 1
        assert rec["lr"] == lr_schedule(0, cfg.steps, cfg.warmup, 1e-3)


class TestVolumeSource:
    def test_cyclic_reshuffled_epochs(self):
        src = tiny_source(n=4)
        seen = [src._index(seed=3, position=p) for p in range(8)]
        assert sorted(seen[:4]) == [0, 1, 2, 3]
        assert sorted(seen[4:]) == [0, 1, 2, 3]
        assert seen[:4] != seen[4:]  # reshuffled between epochs (seeded)

    def test_batch_determinism(self):
        src = tiny_source()
        x1, y1 = src.batch(5, 7, 3, 16)
        x2, y2 = src.batch(5, 7, 3, 16)
        assert torch.equal(x1, x2) and torch.equal(y1, y2)
        x3, _ = src.batch(5, 8, 3, 16)
        assert not torch.equal(x1, x3)

    def test_embedding_shape_checked(self):
        vol, _, _ = gen_phantom(PhantomSpec(seed=0))
        with pytest.raises(ShapeError):
            VolumeSource([vol], np.zeros((2, 8), np.float32))


class TestCheckpointFormat:
    def make(self, rng, step=17):
        tensors = {
            "model.encoder.w": rng.normal(size=(3, 4)).astype(np.float32),
            "model.head.b": rng.normal(size=(5,)).astype(np.float32),
            "optim.head.b.exp_avg": rng.normal(size=(5,)).astype(np.float32),
        }
        return Checkpoint(tensors=tensors, step=step, config_hash="abc123", rng={"seed": 1})

    def test_roundtrip_bit_exact(self, rng, tmp_path):
        ck = self.make(rng)
        path = tmp_path / "c.ckpt"
        save_checkpoint(ck, path)
        back = load_checkpoint(path)
        assert back.step == 17 and back.config_hash == "abc123"
        assert set(back.tensors) == set(ck.tensors)
        for k in ck.tensors:
            assert np.array_equal(back.tensors[k], ck.tensors[k])

    def test_truncated_by_one_byte(self, rng, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(self.make(rng), path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_corrupted_payload(self, rng, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(self.make(rng), path)
        raw = bytearray(path.read_bytes())
        raw[-10] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_config_hash_mismatch(self, rng, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(self.make(rng), path)
        with pytest.raises(CompatibilityError):
            load_checkpoint(path, expected_config_hash="zzz")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(Exception):
            load_checkpoint(path)

    def test_magic_bytes(self, rng, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(self.make(rng), path)
        assert path.read_bytes()[:8] == b"TRIADCK1"


class TestPretrainLoop:
    def test_checkpoint_cadence(self, tmp_path):
        src = tiny_source()
        cfg = PretrainConfig(steps=5, warmup=0, batch=3, roi=32, base_lr=1e-4,
                             checkpoint_every=2, seed=0)
        result = pretrain_loop(cfg, TINY_ENC, src, tmp_path)
        names = [p.split("_")[-1].split(".")[0] for p in result["checkpoints"]]
        assert [int(n) for n in names] == [2, 4, 5]
        lines = open(result["metrics_path"], encoding="utf-8").read().splitlines()
        assert len(lines) == 5
        assert set(json.loads(lines[0])) == {"step", "l1", "log_ratio", "total", "lr"}

    def test_resume_bit_identical(self, tmp_path):
        src = tiny_source()
        cfg = PretrainConfig(steps=5, warmup=0, batch=3, roi=32, base_lr=1e-4,
                             checkpoint_every=2, seed=0)
        full = pretrain_loop(cfg, TINY_ENC, src, tmp_path / "full")
        part = pretrain_loop(cfg, TINY_ENC, src, tmp_path / "part")  # same stream
        resumed = pretrain_loop(
            cfg, TINY_ENC, src, tmp_path / "part",
            resume_from=(tmp_path / "part" / "checkpoint_00000002.ckpt"),
        )
        a = load_checkpoint(full["checkpoints"][-1])
        b = load_checkpoint(resumed["checkpoints"][-1])
        assert set(a.tensors) == set(b.tensors)
        for k in a.tensors:
            assert np.array_equal(a.tensors[k], b.tensors[k]), k

    def test_resume_config_mismatch(self, tmp_path):
        src = tiny_source()
        cfg = PretrainConfig(steps=4, warmup=0, batch=3, roi=32, base_lr=1e-4,
                             checkpoint_every=2, seed=0)
        result = pretrain_loop(cfg, TINY_ENC, src, tmp_path)
        other = PretrainConfig(steps=6, warmup=0, batch=3, roi=32, base_lr=1e-4,
                               checkpoint_every=2, seed=0)
        with pytest.raises(CompatibilityError):
            pretrain_loop(other, TINY_ENC, src, tmp_path / "x",
                          resume_from=result["checkpoints"][0])

    def test_snapshot_restore_roundtrip(self, tmp_path):
        src = tiny_source()
        cfg = PretrainConfig(steps=10, warmup=0, batch=3, roi=32, base_lr=1e-4,
                             checkpoint_every=5, seed=0)
        state = init_train_state(cfg, TINY_ENC)
        for step in range(2):
            x, y = src.batch(cfg.seed, step, cfg.batch, cfg.roi)
            train_step(state, x, y)
        ck = snapshot_training(state.model, state.optimizer, state.step, "h", cfg.seed)
        fresh = init_train_state(cfg, TINY_ENC)
        restore_training(fresh.model, fresh.optimizer, ck)
        a = state.model.state_dict()
        b = fresh.model.state_dict()
        assert all(torch.equal(a[k], b[k]) for k in a)
        assert set(model_tensors(ck)) == {k for k in a}
