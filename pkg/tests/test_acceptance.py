"""Acceptance criteria. Each test prints one PASS/FAIL line (run with -s).

Trained-model criteria use the cached toy bundle (see conftest); delete
.cache/test_bundle to rebuild it from scratch.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from sketchmotion import nn
from sketchmotion.autodiff import Tensor, no_grad
from sketchmotion.codec import StickmanCodec, batch_candidate_loss, best_candidate_rmse, candidate_loss, sketch_to_array
from sketchmotion.dataset import VOCABULARY
from sketchmotion.diffusion import (MixtureWeights, build_schedule, ddim_ladder,
                                    ddim_step, forward_sample, mix_noise,
                                    mixture_weights)
from sketchmotion.evaluation import (collect_fusion_rows, eval_condition, evaluate,
                                     perturbation_experiment)
from sketchmotion.guidance import (FeatureStats, GuidanceConfig, guidance_loss,
                                   mahalanobis, md_clip, trajectory_target)
from sketchmotion.metrics import (counted_fusion_madds, fid_like,
                                  masked_attention_baseline_flops, pca_intrinsic_dim,
                                  perturb_features)
from sketchmotion.model import (MOTION_DIM, ConditionSet, DrawCondition, DrawDecoder,
                                ModelConfig, MotionModel, TextDecoder)
from sketchmotion.motion import Trajectory2D
from sketchmotion.sga import NOISELESS_STYLE, generate_stickman
from sketchmotion.skeleton import PoseAngles, limb_offsets, pose_from_angles, t_pose
from sketchmotion.sampler import ifg_sample, sample_motion
from sketchmotion.training import predict_x0_graph, spatial_loss_terms, training_losses


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
          + (f"  ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


EXACT = 1e-9


class TestFormulaUnitSuite:
    """Every closed-form example at 1e-9 unless stated otherwise."""

    def test_candidate_loss_formula(self):
        gt = np.zeros((16, 3))
        same = np.tile(gt, (3, 1, 1))
        ok = candidate_loss(same, gt).item() == 0.0
        c1 = np.zeros((1, 16, 3)); c1[0, 0, 0] = np.sqrt(3.0)
        ok &= abs(candidate_loss(c1, gt).item() - 3.3) <= EXACT
        c2 = np.zeros((2, 16, 3)); c2[0, 0, 0] = np.sqrt(2.0); c2[1, 0, 0] = np.sqrt(5.0)
        ok &= abs(candidate_loss(c2, gt).item() - 2.7) <= EXACT
        report("formula: best-of-N pose loss", ok)

    def test_forward_noising_formula(self):
        sched = build_schedule()
        x0 = np.full(4, 2.0)
        ok = np.allclose(forward_sample(x0, 500, np.zeros(4), sched),
                         np.sqrt(sched.abar(500)) * x0, atol=EXACT)
        scalar = np.sqrt(0.25) * 2.0 + np.sqrt(0.75) * 1.0
        ok &= abs(scalar - 1.8660254037844386) <= EXACT
        report("formula: forward noising", ok)

    def test_reverse_mean_formula(self):
        val = (1.0 - (1 - 0.98) / np.sqrt(1 - 0.5) * 0.2) / np.sqrt(0.98)
        sched = build_schedule()
        xt = np.full(3, 5.0)
        ok = np.allclose(ddpm_mean_ref(xt, 100, np.zeros(3), sched),
                         xt / np.sqrt(sched.a(100)), atol=EXACT)
        ok &= abs(val - 1.00444) <= 1e-5   # quoted to five decimals
        report("formula: reverse posterior mean", ok)

    def test_deterministic_step_formula(self):
        x0h = (1.0 - np.sqrt(1 - 0.64) * 0.5) / np.sqrt(0.64)
        xprev = np.sqrt(0.81) * x0h + np.sqrt(1 - 0.81) * 0.5
        ok = abs(x0h - 0.875) <= EXACT
        ok &= abs(xprev - (0.9 * 0.875 + np.sqrt(0.19) * 0.5)) <= EXACT
        sched = build_schedule()
        rng = np.random.default_rng(0)
        xt, eps = rng.normal(size=5), rng.normal(size=5)
        ok &= np.abs(ddim_step(xt, 300, 300, eps, sched) - xt).max() <= 1e-12
        report("formula: deterministic reverse step", ok)

    def test_mixture_weight_formulas(self):
        rng = np.random.default_rng(0)
        kept = mixture_weights(1000, 1000, 2.5, 1.0, rng)
        dropped = mixture_weights(1000, 1000, 2.5, 0.0, rng)
        late = mixture_weights(50, 1000, 2.5, 0.5, rng)
        ok = kept.as_tuple() == (2.5, 2.5, 0.0, -4.0)
        ok &= abs(sum(kept.as_tuple()) - 1.0) <= 1e-12
        ok &= dropped.as_tuple() == (2.5, 0.0, 2.5, -4.0)
        ok &= late.as_tuple() == (1.0, 0.0, 0.0, 0.0)
        x = np.random.default_rng(1).normal(size=(3, 4))
        ok &= np.array_equal(
            mix_noise(x, 0 * x, 0 * x, 0 * x, MixtureWeights(1, 0, 0, 0, "late")), x)
        ok &= np.abs(mix_noise(x, x, x, x, kept) - x).max() <= 1e-12
        report("formula: condition mixture weights", ok)

    def test_supervision_formulas(self):
        gt = np.zeros((1, MOTION_DIM))
        pred = np.zeros((1, MOTION_DIM)); pred[0, 0], pred[0, 1] = 0.3, 0.4
        terms = spatial_loss_terms({(False, True): pred}, gt, np.ones(1))
        ok = abs(terms["traj"].item() - 0.25) <= EXACT
        ok &= terms["stick"].item() == 0.0
        exact = training_losses({(True, True): gt.copy()}, gt, np.zeros(1))
        ok &= exact.item() == 0.0
        total = training_losses({(False, True): pred}, gt, np.ones(1))
        ok &= abs(total.item() - (terms["traj"].item() + terms["stick"].item()
                                  + terms["motion"].item())) <= EXACT
        report("formula: spatial supervision terms", ok)

    def test_batch_shuffle_formula(self):
        F = np.array([[0.0, 0.0], [2.0, 2.0]])
        swap = np.array([1, 0])
        ok = np.array_equal(perturb_features(F, 0.0, 0), F)
        ok &= np.allclose(perturb_features(F, 0.5, 0, permutation=swap),
                          [[1.0, 1.0], [1.0, 1.0]], atol=EXACT)
        out1 = perturb_features(F, 1.0, 0, permutation=swap)
        ok &= np.array_equal(out1, F[swap])
        report("formula: batch-shuffle interpolation", ok)

    def test_mahalanobis_formulas(self):
        eye = np.eye(2)
        stats = FeatureStats(mean=np.zeros(2), covariance=eye,
                             covariance_inverse=eye, sample_count=10, ridge=0.0)
        ok = mahalanobis(np.zeros(2), stats) == 0.0
        ok &= abs(mahalanobis(np.array([3.0, 4.0]), stats) - 5.0) <= EXACT
        cov = np.diag([4.0, 1.0])
        stats_d = FeatureStats(mean=np.zeros(2), covariance=cov,
                               covariance_inverse=np.linalg.inv(cov),
                               sample_count=10, ridge=0.0)
        ok &= abs(mahalanobis(np.array([2.0, 1.0]), stats_d) - np.sqrt(2)) <= EXACT
        report("formula: mahalanobis distance", ok)

    def test_md_clip_formulas(self):
        eye = np.eye(2)
        stats = FeatureStats(mean=np.zeros(2), covariance=eye,
                             covariance_inverse=eye, sample_count=10, ridge=0.0)
        # distance grows by 0.5 with a budget of 1: untouched
        out, fired = md_clip(np.zeros(2), np.array([0.5, 0.0]), stats, 1.0, 0.5)
        ok = not fired and np.array_equal(out, [0.5, 0.0])
        out, fired = md_clip(np.zeros(2), np.array([10.0, 0.0]), stats, 1.0, 0.01)
        ok &= fired and np.abs(out - np.array([0.1, 0.0])).max() <= EXACT
        orig = np.array([0.3, -0.7])
        out, fired = md_clip(orig, orig + 50.0, stats, 0.0, 0.0)
        ok &= fired and np.array_equal(out, orig)
        report("formula: distance-budget clipping", ok)

    def test_guidance_loss_formulas(self):
        x = np.zeros((2, 2)); c = np.zeros((2, 2)); m = np.zeros((2, 2))
        ok = guidance_loss(x, c, np.ones((2, 2))) == 0.0
        ok &= guidance_loss(x + 5.0, c, m) == 0.0
        x[0, 0] = 0.3; m[0, 0] = 1.0
        ok &= abs(guidance_loss(x, c, m) - 0.09) <= EXACT
        report("formula: masked spatial loss", ok)


def ddpm_mean_ref(x_t, t, eps, sched):
    from sketchmotion.diffusion import ddpm_mean
    return ddpm_mean(x_t, t, eps, sched)


class TestGradientIntegrity:
    def test_gradients_match_finite_differences(self):
        t_start = time.time()
        sched = build_schedule()
        rng = np.random.default_rng(0)

        # (a) candidate loss -> encoder parameters, 3-sample batch
        poses = [pose_from_angles(PoseAngles(l_hip_swing=float(a)))
                 for a in rng.uniform(-0.5, 0.5, 3)]
        xs = np.stack([sketch_to_array(generate_stickman(p, NOISELESS_STYLE, seed=i))
                       for i, p in enumerate(poses)])
        ys = np.stack([limb_offsets(p) for p in poses])
        codec = StickmanCodec(seed=9, dim=16, n_candidates=3)
        worst_a = nn.fd_check_params(
            lambda: batch_candidate_loss(codec.decoder(codec.encoder(Tensor(xs))), ys),
            codec.encoder.named_params(), entries_per_param=3)

        # shared small model for (b) and (c)
        codec_m = StickmanCodec(seed=0, dim=24)
        codec_m.freeze_encoder()
        model = MotionModel(ModelConfig(layers=3, dim=24, vocab=tuple(VOCABULARY)),
                            codec_m, seed=5)
        T = 4
        sketch = generate_stickman(t_pose(), NOISELESS_STYLE, seed=0)
        draw = DrawCondition(trajectory=Trajectory2D(points=np.zeros((T, 2))),
                             stickmen=[(1, sketch)])
        conds = [ConditionSet(text=["a", "person", "walks"], draw=draw),
                 ConditionSet()]
        x = rng.normal(size=(2, T, MOTION_DIM))
        eps_gt = rng.normal(size=(2, T, MOTION_DIM))

        # (b) masked spatial loss -> layer-3 fused features through the tail
        enc1 = model.encode_batch(x[:1], np.array([120]), conds[:1])
        with no_grad():
            f0 = model.forward_until(enc1, 3).data
        leaf = Tensor(f0.copy(), requires_grad=True)
        target, mask = trajectory_target(rng.normal(size=(T, 2)), MOTION_DIM)

        def loss_b():
            eps = model.forward_from(leaf, enc1, 3)
            x0h = predict_x0_graph(x[0], 120, eps[0], sched)
            return guidance_loss(x0h, target, mask)

        worst_b = nn.fd_check_tensor(loss_b, leaf, entries=20, seed=1)

        # (c) denoising objective -> all trainable parameters, 2-sample batch
        def loss_c():
            enc = model.encode_batch(x, np.array([500, 40]), conds)
            eps, _ = model.forward_encoded(enc)
            d = eps - eps_gt
            return (d * d).mean()

        worst_c = nn.fd_check_params(loss_c, model.named_params(),
                                     entries_per_param=2, seed=2)
        elapsed = time.time() - t_start
        ok = worst_a <= 1e-4 and worst_b <= 1e-4 and worst_c <= 1e-4 and elapsed <= 120
        report("gradient integrity (finite differences)", ok,
               f"a={worst_a:.2e} b={worst_b:.2e} c={worst_c:.2e} t={elapsed:.0f}s")


class TestDdimClosedLoop:
    def test_oracle_noise_recovers_data(self):
        sched = build_schedule()
        rng = np.random.default_rng(3)
        x0 = rng.normal(size=(8, 6))
        eps = rng.normal(size=(8, 6))
        x = forward_sample(x0, sched.T_steps, eps, sched)
        for t in ddim_ladder(sched.T_steps, 20):
            x = ddim_step(x, t, max(t - 20, 0), eps, sched)
        err = np.abs(x - x0).max()
        report("ddim closed loop (50 steps)", err <= 1e-6, f"max err {err:.2e}")


class TestAttentionOracles:
    def test_draw_decoder_bruteforce(self):
        E, T = 32, 12
        rng = np.random.default_rng(4)
        dec = DrawDecoder(rng, E)
        e_m, e_j, e_s = (rng.normal(size=(T, E)) for _ in range(3))
        got = dec(Tensor(e_m), Tensor(e_j), Tensor(e_s)).data
        e_kv = np.concatenate([e_m + e_j, e_s], axis=0)
        q = e_m @ dec.q.w.data + dec.q.b.data
        k = e_kv @ dec.k.w.data + dec.k.b.data
        v = e_kv @ dec.v.w.data + dec.v.b.data
        out = np.zeros((T, E))
        for i in range(T):
            logits = np.array([q[i] @ k[j] / np.sqrt(E) for j in range(2 * T)])
            w = np.exp(logits - logits.max()); w /= w.sum()
            ctx = sum(w[j] * v[j] for j in range(2 * T))
            out[i] = ctx @ dec.out.w.data + dec.out.b.data
        err = np.abs(got - out).max()
        report("attention oracle: dot-product decoder", err <= 1e-10,
               f"max err {err:.2e}")

    def test_text_decoder_linear_cost(self):
        from sketchmotion.autodiff import flop_meter
        E, L = 32, 8
        rng = np.random.default_rng(5)
        dec = TextDecoder(rng, E)
        lengths = [32, 64, 128, 256]
        counts = []
        for n in lengths:
            with no_grad(), flop_meter() as fm:
                dec(Tensor(rng.normal(size=(n, E))), Tensor(rng.normal(size=(L, E))))
            counts.append(fm["madds"])
        x, y = np.asarray(lengths, float), np.asarray(counts, float)
        coef = np.polyfit(x, y, 1)
        r2 = 1.0 - (y - np.polyval(coef, x)).var() / y.var()
        report("attention oracle: efficient decoder linear cost", r2 >= 0.999,
               f"R^2 {r2:.6f}")


class TestMcmRouting:
    def test_routing_isolation(self, tiny_model):
        T = 24
        rng = np.random.default_rng(6)
        x = rng.normal(size=(T, MOTION_DIM))
        sketch = generate_stickman(t_pose(), NOISELESS_STYLE, seed=0)
        draw = DrawCondition(
            trajectory=Trajectory2D(points=rng.normal(size=(T, 2))),
            stickmen=[(3, sketch)])
        tokens = ["a", "person", "walks"]
        uncond = tiny_model.forward(x, 400, segment=(False, False))
        payload = tiny_model.forward(x, 400, draw=draw, text=tokens,
                                     segment=(False, False))
        ok = np.array_equal(uncond, payload)
        b3_a = tiny_model.forward(x, 400, draw=draw, text=None, segment=(False, True))
        b3_b = tiny_model.forward(x, 400, draw=draw, text=tokens, segment=(False, True))
        ok &= np.array_equal(b3_a, b3_b)
        b2_a = tiny_model.forward(x, 400, draw=None, text=tokens, segment=(True, False))
        b2_b = tiny_model.forward(x, 400, draw=draw, text=tokens, segment=(True, False))
        ok &= np.array_equal(b2_a, b2_b)
        report("segment routing isolation (bit-exact)", ok)


class TestFlopOrdering:
    def test_analytic_and_counted(self):
        mcm, masked = masked_attention_baseline_flops(60, 16, 64)
        counts = (10, 4, 4, 2)
        fracs = tuple(c / sum(counts) for c in counts)
        mcm_a, masked_a = masked_attention_baseline_flops(60, 16, 64, fracs)
        mcm_c, masked_c = counted_fusion_madds(60, 16, 64, segment_counts=counts)
        agree = (abs(mcm_c - mcm_a) / mcm_a <= 0.05
                 and abs(masked_c - masked_a) / masked_a <= 0.05)
        report("flop ordering: routed fusion < masked baseline",
               mcm < masked and agree,
               f"mcm {mcm:.3e} masked {masked:.3e} counter agree {agree}")


class TestTrainedModelCriteria:
    def test_perturbation_site_ordering(self, toy_bundle):
        b = toy_bundle
        conds = [eval_condition(c) for c, _ in b.test_ds[:36]]
        deg_fusion, deg_final = [], []
        for seed in range(5):
            base = perturbation_experiment(b.model, [0.0], "final_layer", conds, 60,
                                           b.contrastive, b.real_feats, b.sched,
                                           seed=500 + seed)[0.0]
            fus = perturbation_experiment(b.model, [0.1], "mcm_fusion", conds, 60,
                                          b.contrastive, b.real_feats, b.sched,
                                          seed=500 + seed)[0.1]
            fin = perturbation_experiment(b.model, [0.1], "final_layer", conds, 60,
                                          b.contrastive, b.real_feats, b.sched,
                                          seed=500 + seed)[0.1]
            deg_fusion.append(fus - base)
            deg_final.append(fin - base)
        mf, ml = float(np.mean(deg_fusion)), float(np.mean(deg_final))
        report("perturbation ordering: fusion site degrades less", mf < ml,
               f"fusion {mf:.4f} final {ml:.4f} over 5 seeds")

    def test_pca_intrinsic_dimension_ordering(self, toy_bundle):
        b = toy_bundle
        conds = [eval_condition(c) for c, _ in b.test_ds[:6]]
        rows = collect_fusion_rows(b.model, conds, 60, b.stats_layer, b.sched,
                                   seed=600)
        dims = {seg: pca_intrinsic_dim(mat, 0.999) for seg, mat in rows.items()}
        td = dims[(True, True)]
        singles = [dims[(True, False)], dims[(False, True)]]
        none = dims[(False, False)]
        ok = td > max(singles) and min(singles) > none
        report("pca ordering: conditions raise intrinsic dimension", ok,
               f"td={td} text={singles[0]} draw={singles[1]} none={none}")

    def test_ifg_efficacy_and_clipping_ablation(self, toy_bundle):
        b = toy_bundle
        sub = b.test_ds[:36]
        from sketchmotion.metrics import traj_err
        errs_u, errs_g = [], []
        gens_u, gens_g, gens_nc = [], [], []
        for i, (clip, _) in enumerate(sub):
            cond = eval_condition(clip)
            target, mask = trajectory_target(clip.root_xz, b.model.config.motion_dim)
            cfg = GuidanceConfig(target=target, target_mask=mask,
                                 layer_index=b.stats_layer)
            cfg_nc = GuidanceConfig(target=target, target_mask=mask, eps_md=None,
                                    layer_index=b.stats_layer)
            mu = sample_motion(b.model, cond, clip.frames, b.sched, seed=700 + i)
            mg, _ = ifg_sample(b.model, cond, cfg, b.stats, b.sched, seed=700 + i)
            mnc, _ = ifg_sample(b.model, cond, cfg_nc, b.stats, b.sched, seed=700 + i)
            errs_u.append(traj_err(mu, cond.draw.trajectory))
            errs_g.append(traj_err(mg, cond.draw.trajectory))
            gens_u.append(mu); gens_g.append(mg); gens_nc.append(mnc)
        fid_u = fid_like(b.real_feats, b.contrastive.motion_features(gens_u))
        fid_g = fid_like(b.real_feats, b.contrastive.motion_features(gens_g))
        fid_nc = fid_like(b.real_feats, b.contrastive.motion_features(gens_nc))
        ratio = np.mean(errs_g) / np.mean(errs_u)
        rel_fid = (fid_g - fid_u) / fid_u
        ok = ratio <= 0.5 and rel_fid <= 0.15 and fid_nc > fid_g
        report("guidance efficacy at best-practice config", ok,
               f"traj ratio {ratio:.3f} fid delta {rel_fid:+.3f} "
               f"no-clip fid {fid_nc:.4f} vs clipped {fid_g:.4f}")

    def test_codec_roundtrip_criteria(self, toy_bundle):
        b = toy_bundle
        rmses, rmses_n1 = [], []
        best8, best1 = [], []
        perm_err = 0.0
        from sketchmotion.sga import StickmanSketch
        for ci, (clip, _) in enumerate(b.test_ds[:24]):
            for f in (0, clip.frames // 2, clip.frames - 1):
                pose = clip.local_pose[f]
                sk = generate_stickman(pose, NOISELESS_STYLE, seed=ci * 100 + f)
                rmses.append(best_candidate_rmse(b.codec, pose, sk))
                rmses_n1.append(best_candidate_rmse(b.codec_n1, pose, sk))
                gt = limb_offsets(pose)
                for codec, store in ((b.codec, best8), (b.codec_n1, best1)):
                    cands = codec.decode(codec.encode(sk))
                    per = 0.1 * ((cands - gt) ** 2).sum(axis=(1, 2))
                    store.append(11.0 * per.min())
                shuffled = StickmanSketch([sk.strokes[i] for i in (3, 1, 5, 0, 2, 4)])
                perm_err = max(perm_err, np.abs(b.codec.encode(sk)
                                                - b.codec.encode(shuffled)).max())
        mean_rmse = float(np.mean(rmses))
        ok = (mean_rmse <= 0.08 and perm_err <= 1e-6
              and np.mean(best8) < np.mean(best1))
        report("codec round-trip quality", ok,
               f"rmse {mean_rmse:.4f} perm {perm_err:.1e} "
               f"best-candidate loss N=8 {np.mean(best8):.4f} vs N=1 {np.mean(best1):.4f}")
