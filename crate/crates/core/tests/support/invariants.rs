//! Properties that must hold on every input, checked over random instances.

use hte_core::bench::{run_benchmark, BenchOptions, ModelKind, ModelSpec};
use hte_core::data::{mean_sd, select_rows, standardize_matrix};
use hte_core::dgp::{
    gen_ihdp_surface_b, noise_sd, synth_covariates, CovariateSource, DgpKind, DgpSpec, Schema, TreatmentSource,
};
use hte_core::learners::{
    fit_boosting, fit_knn, fit_linear, gp_log_marginal_likelihood, BoostingParams, Fitted, ForestParams, GpParams,
    LearnerSpec, Penalty, RbfKernel,
};
use hte_core::meta::{
    fit_multitask_gp, fit_s_learner, fit_t_learner, fit_tau_learner, fit_x_learner,
    Components, Coregionalization, MtGpParams, RLearnerLossParts, TauOptions, XWeight,
};
use hte_core::metrics::{mu_risk, mu_risk_iptw, pehe, tau_risk_plugin};
use hte_core::propensity::{estimate_propensity, PropensityOptions};
use hte_core::split::split_train_test;
use hte_core::{CausalDataset, ColumnKind, SeedTree, Stream};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{close, ensure, Check};

fn rng(seed: u64) -> Stream {
    SeedTree::new(seed).stream()
}

fn normal(r: &mut Stream) -> f64 {
    r.sample(StandardNormal)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("standardization round trip", standardization_round_trip),
        ("sim truth consistency", sim_truth_consistency),
        ("split test frequency", split_frequency),
        ("seed paths give distinct streams", seed_paths),
        ("hyperparameter validation", hyperparameter_validation),
        ("predict checks dimension and finiteness", predict_dimension),
        ("ols residuals orthogonal to design", ols_orthogonality),
        ("lasso path shrinks in l1", lasso_path),
        ("boosting training rss non-increasing", boosting_rss),
        ("gp likelihood gradient", gp_gradient),
        ("knn and boosting permutation invariance", permutation_invariance),
        ("forest fixed-order determinism", forest_determinism),
        ("propensity strictly inside (0, 1)", propensity_bounds),
        ("propensity ignores outcomes", propensity_ignores_y),
        ("x-learner convex combination", x_convexity),
        ("r-loss identity on random instances", r_loss_identity),
        ("tau-learner objective non-increasing", tau_objective),
        ("every family unbiased under randomization", families_unbiased),
        ("multitask gp variance shrinks with n", mt_variance_shrinks),
        ("ihdp att pin", ihdp_att_pin),
        ("actg shared noise", actg_shared_noise),
        ("noise scale band", noise_band),
        ("parallel and sequential reports identical", parallel_bytes),
        ("pehe translation invariance", pehe_translation),
        ("iptw risk dominates plain risk", iptw_dominates),
        ("plug-in risk zero iff agreement", plugin_zero_iff_agree),
        ("mu risk ranking disagrees with pehe", mu_risk_ranking),
    ]
}

pub fn standardization_round_trip() -> Result<(), String> {
    let mut r = rng(100);
    for _ in 0..20 {
        let n = r.random_range(5..60);
        let scale = 10f64.powf(r.random_range(-3.0..4.0));
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 1 { f64::from(u8::from(r.random::<bool>())) } else { scale * normal(&mut r) + 7.0 });
        let kinds = [ColumnKind::Continuous, ColumnKind::Binary, ColumnKind::Continuous];
        let (s, t) = standardize_matrix(&x, &kinds, &[]).map_err(err)?;
        let back = t.invert(&s).map_err(err)?;
        ensure!((back - &x).amax() <= 1e-10 * scale.max(1.0), "round trip off at scale {scale}");
    }
    Ok(())
}

pub fn sim_truth_consistency() -> Result<(), String> {
    for kind in [DgpKind::IhdpB, DgpKind::Actg1, DgpKind::Actg2, DgpKind::Synthetic { effect: 0.5 }] {
        let tree = SeedTree::new(101);
        let dgp = DgpSpec::synthetic(kind).prepare(&tree).map_err(err)?;
        for rep in 0..5 {
            let truth = dgp.simulate(&mut tree.derive_stream("rep", rep)).map_err(err)?;
            let data = dgp.dataset(&truth).map_err(err)?;
            for i in 0..dgp.n() {
                ensure!(truth.tau[i] == truth.mu1[i] - truth.mu0[i], "{}: τ ≠ μ1 − μ0 at {i}", kind.name());
                let z = data.treatment()[i];
                let want = if z == 1 { truth.y1[i] } else { truth.y0[i] };
                ensure!(data.outcome()[i] == want, "{}: observed outcome at {i}", kind.name());
            }
        }
    }
    Ok(())
}

pub fn split_frequency() -> Result<(), String> {
    let n = 50;
    let mut hits = vec![0usize; n];
    // 1,000 seeds make ±0.03 a two-sd band that some of 50 indices leave by chance.
    let seeds = 10_000;
    for seed in 0..seeds {
        let s = split_train_test(n, 0.7, &mut rng(seed)).map_err(err)?;
        let mut seen = vec![false; n];
        for &i in s.train.iter().chain(&s.test) {
            ensure!(!seen[i], "index {i} twice");
            seen[i] = true;
        }
        ensure!(seen.iter().all(|&b| b) && s.train.len() == 35, "split does not partition");
        s.test.iter().for_each(|&i| hits[i] += 1);
    }
    for (i, &h) in hits.iter().enumerate() {
        let f = h as f64 / seeds as f64;
        ensure!((f - 0.3).abs() <= 0.03, "index {i} in test with frequency {f}");
    }
    Ok(())
}

pub fn seed_paths() -> Result<(), String> {
    let tree = SeedTree::new(7);
    let draw = |mut s: Stream| (0..4).map(|_| s.random::<u64>()).collect::<Vec<_>>();
    let a = draw(tree.derive_stream("rep", 0));
    ensure!(a == draw(tree.derive_stream("rep", 0)), "same path, different stream");
    for other in [tree.derive_stream("rep", 1), tree.derive_stream("split", 0), SeedTree::new(8).derive_stream("rep", 0)] {
        ensure!(a != draw(other), "distinct paths share a stream");
    }
    Ok(())
}

pub fn hyperparameter_validation() -> Result<(), String> {
    let bad = [
        LearnerSpec::knn(0),
        LearnerSpec::tree(0, 5),
        LearnerSpec::tree(3, 0),
        LearnerSpec::linear(Penalty::Ridge(-1.0)),
        LearnerSpec::linear(Penalty::Lasso(-0.1)),
        LearnerSpec::Boosting(BoostingParams { rate: 0.0, ..Default::default() }),
        LearnerSpec::Boosting(BoostingParams { rate: 1.5, ..Default::default() }),
        LearnerSpec::Boosting(BoostingParams { max_depth: 0, ..Default::default() }),
        LearnerSpec::Forest(ForestParams { max_depth: 0, ..Default::default() }),
        LearnerSpec::Forest(ForestParams { trees: 0, ..Default::default() }),
        LearnerSpec::Gp(GpParams { kernel: RbfKernel { lengthscale: 1.0, variance: 0.0 }, ..Default::default() }),
        LearnerSpec::Gp(GpParams { kernel: RbfKernel { lengthscale: -1.0, variance: 1.0 }, ..Default::default() }),
    ];
    for spec in bad {
        ensure!(spec.validate().is_err(), "{spec:?} accepted");
    }
    let good = [LearnerSpec::ols(), LearnerSpec::knn(1), LearnerSpec::tree(1, 1), LearnerSpec::boosting(), LearnerSpec::forest(), LearnerSpec::gp()];
    for spec in good {
        ensure!(spec.validate().is_ok(), "{spec:?} rejected");
    }
    Ok(())
}

pub fn predict_dimension() -> Result<(), String> {
    let mut r = rng(102);
    let x = DMatrix::from_fn(40, 3, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..40).map(|i| x[(i, 0)] + normal(&mut r)).collect();
    let specs = [
        LearnerSpec::ols(),
        LearnerSpec::linear(Penalty::LassoCv),
        LearnerSpec::knn(3),
        LearnerSpec::Knn { k: None },
        LearnerSpec::tree(3, 2),
        LearnerSpec::Forest(ForestParams { trees: 10, ..Default::default() }),
        LearnerSpec::Boosting(BoostingParams { rounds: 20, ..Default::default() }),
        LearnerSpec::gp(),
    ];
    for spec in specs {
        let m = spec.fit(&x, &y, None, &mut r).map_err(err)?;
        ensure!(m.predict(&DMatrix::zeros(2, 2)).is_err(), "{spec:?} accepted 2 columns");
        let p = m.predict(&DMatrix::from_fn(5, 3, |_, _| 5.0 * normal(&mut r))).map_err(err)?;
        ensure!(p.iter().all(|v| v.is_finite()), "{spec:?} non-finite prediction");
    }
    Ok(())
}

pub fn ols_orthogonality() -> Result<(), String> {
    let mut r = rng(103);
    for _ in 0..10 {
        let x = DMatrix::from_fn(50, 4, |_, _| normal(&mut r));
        let y: Vec<f64> = (0..50).map(|i| x[(i, 0)] * x[(i, 1)] + normal(&mut r)).collect();
        let m = fit_linear(&x, &y, Penalty::None).map_err(err)?;
        let p = m.predict(&x).map_err(err)?;
        let res: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        ensure!(res.iter().sum::<f64>().abs() <= 1e-8, "residuals not orthogonal to intercept");
        for j in 0..4 {
            let dot: f64 = (0..50).map(|i| res[i] * x[(i, j)]).sum();
            ensure!(dot.abs() <= 1e-8, "column {j}: {dot}");
        }
    }
    Ok(())
}

pub fn lasso_path() -> Result<(), String> {
    let mut r = rng(104);
    let x = DMatrix::from_fn(80, 5, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..80).map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)] + normal(&mut r)).collect();
    let lmax = hte_core::learners::lasso_lambda_max(&x, &y);
    let mut prev = f64::INFINITY;
    // Increasing λ.
    for lambda in hte_core::learners::lasso_lambda_grid(lmax, 10).into_iter().rev() {
        let m = fit_linear(&x, &y, Penalty::Lasso(lambda)).map_err(err)?;
        let Fitted::Linear(fit) = m.state() else { return Err("not linear".into()) };
        let l1: f64 = fit.coef.iter().map(|c| c.abs()).sum();
        ensure!(l1 <= prev + 1e-9, "ℓ1 grew to {l1} at λ = {lambda}");
        prev = l1;
    }
    Ok(())
}

pub fn boosting_rss() -> Result<(), String> {
    let mut r = rng(105);
    let x = DMatrix::from_fn(60, 2, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..60).map(|i| x[(i, 0)].sin() * 3.0 + x[(i, 1)] + normal(&mut r)).collect();
    let m = fit_boosting(&x, &y, None, BoostingParams { rounds: 40, ..Default::default() }).map_err(err)?;
    let Fitted::Boosting(b) = m.state() else { return Err("not boosting".into()) };
    let rss = |k: usize| b.predict_staged(&x, k).iter().zip(&y).map(|(p, v)| (p - v).powi(2)).sum::<f64>();
    for k in 1..=40 {
        ensure!(rss(k) <= rss(k - 1) + 1e-9, "rss rose at round {k}");
    }
    Ok(())
}

pub fn gp_gradient() -> Result<(), String> {
    let mut r = rng(106);
    let x = DMatrix::from_fn(25, 2, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..25).map(|i| x[(i, 0)].cos() + 0.1 * normal(&mut r)).collect();
    let lml = |t: [f64; 3]| {
        gp_log_marginal_likelihood(&x, &y, RbfKernel { lengthscale: t[0].exp(), variance: t[1].exp() }, t[2].exp())
    };
    for _ in 0..20 {
        let theta = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-3.0..0.0)];
        let (_, grad) = lml(theta).map_err(err)?;
        for k in 0..3 {
            let h = 1e-5;
            let (mut up, mut dn) = (theta, theta);
            up[k] += h;
            dn[k] -= h;
            let fd = (lml(up).map_err(err)?.0 - lml(dn).map_err(err)?.0) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / fd.abs().max(1e-3);
            ensure!(rel <= 1e-4, "θ = {theta:?}, component {k}: analytic {} vs fd {fd}", grad[k]);
        }
    }
    Ok(())
}

pub fn permutation_invariance() -> Result<(), String> {
    let mut r = rng(107);
    let x = DMatrix::from_fn(50, 3, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..50).map(|i| x[(i, 0)] - x[(i, 2)].abs() + normal(&mut r)).collect();
    let q = DMatrix::from_fn(20, 3, |_, _| normal(&mut r));
    let mut perm: Vec<usize> = (0..50).collect();
    perm.shuffle(&mut r);
    let xp = select_rows(&x, &perm);
    let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let params = BoostingParams { rounds: 30, ..Default::default() };
    let pairs = [
        (fit_knn(&x, &y, 4).map_err(err)?, fit_knn(&xp, &yp, 4).map_err(err)?),
        (fit_boosting(&x, &y, None, params).map_err(err)?, fit_boosting(&xp, &yp, None, params).map_err(err)?),
    ];
    for (a, b) in pairs {
        let (pa, pb) = (a.predict(&q).map_err(err)?, b.predict(&q).map_err(err)?);
        for i in 0..20 {
            ensure!(close(pa[i], pb[i], 1e-9), "{:?}: query {i}", a.spec().family());
        }
    }
    Ok(())
}

pub fn forest_determinism() -> Result<(), String> {
    let mut r = rng(108);
    let x = DMatrix::from_fn(60, 3, |_, _| normal(&mut r));
    let y: Vec<f64> = (0..60).map(|i| x[(i, 1)] + normal(&mut r)).collect();
    let spec = LearnerSpec::Forest(ForestParams { trees: 25, ..Default::default() });
    let run = || -> Result<Vec<u64>, String> {
        let m = spec.fit(&x, &y, None, &mut rng(5)).map_err(err)?;
        Ok(m.predict(&x).map_err(err)?.iter().map(|v| v.to_bits()).collect())
    };
    ensure!(run()? == run()?, "forest predictions changed between runs");
    Ok(())
}

pub fn propensity_bounds() -> Result<(), String> {
    let mut r = rng(109);
    let x = DMatrix::from_fn(300, 2, |_, _| normal(&mut r));
    // Nearly separated arms push raw probabilities to the edges.
    let z: Vec<u8> = (0..300).map(|i| u8::from(x[(i, 0)] + 0.05 * normal(&mut r) > 0.0)).collect();
    let data = CausalDataset::from_parts(x.clone(), z, vec![0.0; 300]).map_err(err)?;
    let opts = PropensityOptions::default();
    let est = estimate_propensity(&data, opts, &mut r).map_err(err)?;
    let fresh = est.model.predict(&DMatrix::from_fn(100, 2, |_, _| 10.0 * normal(&mut r))).map_err(err)?;
    for p in est.pi_hat.iter().chain(&fresh) {
        ensure!(*p > 0.0 && *p < 1.0 && *p >= opts.clip.0 && *p <= opts.clip.1, "π̂ = {p}");
    }
    Ok(())
}

pub fn propensity_ignores_y() -> Result<(), String> {
    let mut r = rng(110);
    let x = DMatrix::from_fn(200, 3, |_, _| normal(&mut r));
    let z: Vec<u8> = (0..200).map(|i| u8::from(r.random::<f64>() < 1.0 / (1.0 + (-x[(i, 0)]).exp()))).collect();
    let y: Vec<f64> = (0..200).map(|_| normal(&mut r)).collect();
    let data = CausalDataset::from_parts(x, z, y.clone()).map_err(err)?;
    let base = estimate_propensity(&data, PropensityOptions::default(), &mut rng(3)).map_err(err)?;
    for i in [0, 57, 199] {
        let mut y2 = y.clone();
        y2[i] += 1e6;
        let other = estimate_propensity(&data.with_outcome(y2).map_err(err)?, PropensityOptions::default(), &mut rng(3)).map_err(err)?;
        ensure!(other.pi_hat == base.pi_hat, "π̂ moved after perturbing y[{i}]");
    }
    Ok(())
}

pub fn x_convexity() -> Result<(), String> {
    let mut r = rng(111);
    let x = DMatrix::from_fn(300, 2, |_, _| normal(&mut r));
    let z: Vec<u8> = (0..300).map(|i| u8::from(r.random::<f64>() < 1.0 / (1.0 + (-x[(i, 1)]).exp()))).collect();
    let y: Vec<f64> = (0..300).map(|i| x[(i, 0)].powi(2) + f64::from(z[i]) * x[(i, 1)] + normal(&mut r)).collect();
    let data = CausalDataset::from_parts(x, z, y).map_err(err)?;
    let ps = estimate_propensity(&data, PropensityOptions::default(), &mut r).map_err(err)?;
    let q = DMatrix::from_fn(100, 2, |_, _| 2.0 * normal(&mut r));
    for (base, w) in [
        (LearnerSpec::tree(3, 5), XWeight::Propensity),
        (LearnerSpec::ols(), XWeight::Propensity),
        (LearnerSpec::knn(7), XWeight::Constant(0.35)),
    ] {
        let m = fit_x_learner(&data, base, Some(&ps), w, &mut r).map_err(err)?;
        let Components::X { tau0, tau1, .. } = m.components() else { return Err("not X".into()) };
        let (t0, t1) = (tau0.predict(&q).map_err(err)?, tau1.predict(&q).map_err(err)?);
        let t = m.predict_cate(&q).map_err(err)?;
        for i in 0..100 {
            let (lo, hi) = (t0[i].min(t1[i]), t0[i].max(t1[i]));
            ensure!(t[i] >= lo - 1e-12 && t[i] <= hi + 1e-12, "{base:?}: τ̂ = {} outside [{lo}, {hi}]", t[i]);
        }
    }
    Ok(())
}

pub fn r_loss_identity() -> Result<(), String> {
    let mut r = rng(112);
    for _ in 0..200 {
        let n = r.random_range(1..30);
        let v = |r: &mut Stream, s: f64| (0..n).map(|_| s * normal(r)).collect::<Vec<f64>>();
        let (y, m, tau) = (v(&mut r, 10.0), v(&mut r, 10.0), v(&mut r, 3.0));
        let z: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
        let pi: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        let parts = RLearnerLossParts::new(&y, &m, &z, &pi).map_err(err)?;
        let (a, b) = (parts.loss_direct(&tau), parts.loss_weighted(&tau));
        ensure!(close(a, b, 1e-10), "direct {a} vs weighted {b}");
    }
    Ok(())
}

pub fn tau_objective() -> Result<(), String> {
    let mut r = rng(113);
    for seed in 0..5 {
        let x = DMatrix::from_fn(200, 3, |_, _| normal(&mut r));
        let z: Vec<u8> = (0..200).map(|i| u8::from(r.random::<f64>() < 1.0 / (1.0 + (-x[(i, 0)]).exp()))).collect();
        let y: Vec<f64> = (0..200).map(|i| x[(i, 0)] + x[(i, 1)] * (1.0 + f64::from(z[i])) + normal(&mut r)).collect();
        let data = CausalDataset::from_parts(x, z, y).map_err(err)?;
        let opts = TauOptions { sweeps: 30, tol: 0.0 };
        let m = fit_tau_learner(&data, LearnerSpec::ols(), Some(LearnerSpec::ols()), None, opts, &mut rng(seed)).map_err(err)?;
        let Components::Tau { objective, .. } = m.components() else { return Err("not τ".into()) };
        for w in objective.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "objective rose from {} to {}", w[0], w[1]);
        }
    }
    Ok(())
}

pub fn families_unbiased() -> Result<(), String> {
    let delta = 1.0;
    let n = 2000;
    let families: Vec<(&str, ModelKind)> = vec![
        ("S", ModelKind::S { base: LearnerSpec::ols(), use_ps: false }),
        ("T", ModelKind::T { base: LearnerSpec::ols(), use_ps: false }),
        ("X", ModelKind::X { base: LearnerSpec::ols(), weight: XWeight::Propensity }),
        ("R", ModelKind::R { base_tau: LearnerSpec::ols(), m: LearnerSpec::ols(), folds: 5 }),
        (
            "MT",
            ModelKind::Mt(MtGpParams {
                lengthscale: 2.0,
                noise: 1.0,
                coregionalization: Coregionalization::Fixed([[4.0, 3.5], [3.5, 4.0]]),
                optimize: false,
                restarts: 0,
            }),
        ),
        ("tau", ModelKind::Tau { mu: LearnerSpec::ols(), tau: None, options: TauOptions::default(), use_ps: false }),
        ("CF", ModelKind::Cf(ForestParams { trees: 50, ..Default::default() })),
    ];
    let mut means = vec![Vec::new(); families.len()];
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let x = DMatrix::from_fn(n, 2, |_, _| normal(&mut r));
        let z: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + x[(i, 0)] - 0.5 * x[(i, 1)] + delta * f64::from(z[i]) + normal(&mut r)).collect();
        let data = CausalDataset::from_parts(x, z, y).map_err(err)?;
        let ps = estimate_propensity(&data, PropensityOptions::default(), &mut r).map_err(err)?;
        for (k, (name, kind)) in families.iter().enumerate() {
            let spec = ModelSpec::new(*name, *kind);
            let fitted = spec.fit(&data, Some(&ps), &mut r).map_err(|e| format!("{name}: {e}"))?;
            let tau = fitted.predict(data.covariates(), None).map_err(err)?;
            means[k].push(tau.iter().sum::<f64>() / n as f64);
        }
    }
    for (k, (name, _)) in families.iter().enumerate() {
        let (m, sd) = mean_sd(means[k].iter().copied());
        let se = sd / 20f64.sqrt();
        ensure!((m - delta).abs() <= 3.0 * se, "{name}: mean τ̂ {m}, MC se {se}");
    }
    Ok(())
}

pub fn mt_variance_shrinks() -> Result<(), String> {
    let mut r = rng(114);
    let n = 60;
    let x = DMatrix::from_fn(n, 1, |_, _| r.random_range(-3.0..3.0f64));
    let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let y: Vec<f64> = (0..n).map(|i| x[(i, 0)].sin() + 0.5 * f64::from(z[i])).collect();
    let params = MtGpParams {
        lengthscale: 1.0,
        noise: 0.01,
        coregionalization: Coregionalization::Fixed([[1.0, 0.5], [0.5, 1.0]]),
        optimize: false,
        restarts: 0,
    };
    let q = DMatrix::from_fn(30, 1, |i, _| -4.0 + 8.0 * i as f64 / 29.0);
    let var = |rows: usize| -> Result<Vec<f64>, String> {
        let idx: Vec<usize> = (0..rows).collect();
        let d = CausalDataset::from_parts(select_rows(&x, &idx), z[..rows].to_vec(), y[..rows].to_vec()).map_err(err)?;
        let m = fit_multitask_gp(&d, params, &mut rng(0)).map_err(err)?;
        m.predict_cate_variance(&q).map_err(err)?.ok_or_else(|| "no variance".to_string())
    };
    let (small, large) = (var(n / 2)?, var(n)?);
    for i in 0..30 {
        ensure!(small[i] >= 0.0 && large[i] >= 0.0, "negative variance at {i}");
        ensure!(large[i] <= small[i] + 1e-9, "variance grew at {i}: {} → {}", small[i], large[i]);
    }
    Ok(())
}

pub fn ihdp_att_pin() -> Result<(), String> {
    let mut r = rng(115);
    let kinds = Schema::Ihdp.kinds();
    for _ in 0..50 {
        let x = synth_covariates(&kinds, 100, &mut r, &[]).map_err(err)?;
        let z: Vec<u8> = (0..100).map(|_| u8::from(r.random::<f64>() < 0.2)).collect();
        if !z.contains(&1) {
            continue;
        }
        let t = gen_ihdp_surface_b(&x, &z, &mut r).map_err(err)?;
        let treated: Vec<f64> = (0..100).filter(|&i| z[i] == 1).map(|i| t.tau[i]).collect();
        let att = treated.iter().sum::<f64>() / treated.len() as f64;
        ensure!((att - 4.0).abs() <= 1e-10, "ATT {att}");
    }
    Ok(())
}

pub fn actg_shared_noise() -> Result<(), String> {
    for kind in [DgpKind::Actg1, DgpKind::Actg2] {
        let tree = SeedTree::new(116);
        let dgp = DgpSpec::synthetic(kind).prepare(&tree).map_err(err)?;
        for rep in 0..10 {
            let t = dgp.simulate(&mut tree.derive_stream("rep", rep)).map_err(err)?;
            for i in 0..dgp.n() {
                // Both arms carry the same ε, so only rounding separates the two sides.
                ensure!(close(t.y1[i] - t.y0[i], t.tau[i], 1e-12), "{}: unit {i}", kind.name());
                ensure!(close(t.y0[i] - t.mu0[i], t.y1[i] - t.mu1[i], 1e-12), "{}: unit {i} noise differs", kind.name());
            }
        }
    }
    Ok(())
}

pub fn noise_band() -> Result<(), String> {
    for kind in [DgpKind::IhdpB, DgpKind::Actg1, DgpKind::Actg2] {
        let tree = SeedTree::new(117);
        let dgp = DgpSpec::synthetic(kind).prepare(&tree).map_err(err)?;
        ensure!(dgp.n() >= 500, "n = {}", dgp.n());
        for rep in 0..10 {
            let t = dgp.simulate(&mut tree.derive_stream("rep", rep)).map_err(err)?;
            let sigma = noise_sd(&t.mu0, kind.default_noise());
            let (_, sd) = mean_sd((0..dgp.n()).map(|i| t.y0[i] - t.mu0[i]));
            ensure!(sd >= 0.9 * sigma && sd <= 1.1 * sigma, "{}: sd {sd} vs σ {sigma}", kind.name());
        }
    }
    Ok(())
}

fn bench_bytes(jobs: usize) -> Result<Vec<u8>, String> {
    let mut spec = DgpSpec::synthetic(DgpKind::Actg2);
    spec.covariates = CovariateSource::Synthetic { n: 200, bernoulli_p: None };
    let tree = SeedTree::new(118);
    let dgp = spec.prepare(&tree).map_err(err)?;
    let models = [
        ModelSpec::new("S-OLS", ModelKind::S { base: LearnerSpec::ols(), use_ps: true }),
        ModelSpec::new("T-tree", ModelKind::T { base: LearnerSpec::tree(4, 10), use_ps: false }),
        ModelSpec::new("X-forest", ModelKind::X { base: LearnerSpec::Forest(ForestParams { trees: 10, ..Default::default() }), weight: XWeight::Propensity }),
        ModelSpec::new("knn-fails", ModelKind::T { base: LearnerSpec::knn(500), use_ps: false }),
    ];
    let report = run_benchmark(&dgp, &models, 12, &tree, jobs, &BenchOptions::default()).map_err(err)?;
    let header = vec!["seed 118".to_string()];
    let mut out = Vec::new();
    report.write_summary_csv(&mut out, &header).map_err(err)?;
    report.write_replications_csv(&mut out, &header).map_err(err)?;
    report.write_markdown(&mut out, &header).map_err(err)?;
    Ok(out)
}

pub fn parallel_bytes() -> Result<(), String> {
    let one = bench_bytes(1)?;
    ensure!(one == bench_bytes(1)?, "rerun changed the report");
    ensure!(one == bench_bytes(8)?, "jobs = 8 differs from jobs = 1");
    Ok(())
}

pub fn pehe_translation() -> Result<(), String> {
    let mut r = rng(119);
    for _ in 0..100 {
        let n = r.random_range(1..40);
        let a: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let b: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let c = r.random_range(-100.0..100.0);
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let (p, q) = (pehe(&a, &b).map_err(err)?, pehe(&shift(&a), &shift(&b)).map_err(err)?);
        ensure!((p - q).abs() <= 1e-9 * (1.0 + c.abs()), "{p} vs {q} at c = {c}");
    }
    Ok(())
}

pub fn iptw_dominates() -> Result<(), String> {
    let mut r = rng(120);
    for _ in 0..100 {
        let n = r.random_range(1..40);
        let mu: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let z: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
        let pi: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        let (w, p) = (mu_risk_iptw(&mu, &y, &z, &pi).map_err(err)?, mu_risk(&mu, &y).map_err(err)?);
        ensure!(w >= p, "{w} < {p}");
    }
    Ok(())
}

pub fn plugin_zero_iff_agree() -> Result<(), String> {
    let mut r = rng(121);
    let x = DMatrix::from_fn(100, 2, |_, _| normal(&mut r));
    let z: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
    let y: Vec<f64> = (0..100).map(|i| x[(i, 0)] * (1.0 + f64::from(z[i])) + normal(&mut r)).collect();
    let data = CausalDataset::from_parts(x, z, y).map_err(err)?;
    let reference = fit_t_learner(&data, LearnerSpec::ols(), LearnerSpec::ols(), None, &mut r).map_err(err)?;
    let xv = DMatrix::from_fn(30, 2, |_, _| normal(&mut r));
    let same = reference.predict_cate(&xv).map_err(err)?;
    ensure!(tau_risk_plugin(&same, &reference, &xv).map_err(err)? <= 1e-12, "identical estimates scored above zero");
    let mut off = same.clone();
    off[17] += 1e-4;
    ensure!(tau_risk_plugin(&off, &reference, &xv).map_err(err)? > 1e-12, "disagreement scored zero");
    Ok(())
}

pub fn mu_risk_ranking() -> Result<(), String> {
    let mut spec = DgpSpec::synthetic(DgpKind::Actg1);
    spec.treatment = TreatmentSource::Targeted { a: 1.0, b: 0.0 };
    let tree = SeedTree::new(122);
    let dgp = spec.prepare(&tree).map_err(err)?;
    let truth = dgp.simulate(&mut tree.derive_stream("simulate", 0)).map_err(err)?;
    let data = dgp.dataset(&truth).map_err(err)?;
    let split = split_train_test(data.n(), 0.7, &mut tree.derive_stream("split", 0)).map_err(err)?;
    let train = data.subset(&split.train).map_err(err)?;
    let test = data.subset(&split.test).map_err(err)?;
    let tau_test: Vec<f64> = split.test.iter().map(|&i| truth.tau[i]).collect();
    let mut scores = Vec::new();
    let fits = [
        fit_s_learner(&train, LearnerSpec::ols(), None, &mut rng(1)),
        fit_t_learner(&train, LearnerSpec::ols(), LearnerSpec::ols(), None, &mut rng(2)),
        fit_s_learner(&train, LearnerSpec::tree(4, 10), None, &mut rng(3)),
        fit_t_learner(&train, LearnerSpec::tree(4, 10), LearnerSpec::tree(4, 10), None, &mut rng(4)),
        fit_t_learner(&train, LearnerSpec::knn(10), LearnerSpec::knn(10), None, &mut rng(5)),
        fit_s_learner(&train, LearnerSpec::Boosting(BoostingParams { rounds: 100, ..Default::default() }), None, &mut rng(6)),
    ];
    for fit in fits {
        let m = fit.map_err(err)?;
        let (m0, m1) = m.predict_potential_outcomes(test.covariates()).map_err(err)?.ok_or("no surfaces")?;
        let factual: Vec<f64> = (0..test.n()).map(|i| if test.treatment()[i] == 1 { m1[i] } else { m0[i] }).collect();
        let tau = m.predict_cate(test.covariates()).map_err(err)?;
        scores.push((mu_risk(&factual, test.outcome()).map_err(err)?, pehe(&tau, &tau_test).map_err(err)?));
    }
    let discordant = (0..scores.len())
        .flat_map(|a| (a + 1..scores.len()).map(move |b| (a, b)))
        .any(|(a, b)| (scores[a].0 - scores[b].0) * (scores[a].1 - scores[b].1) < 0.0);
    ensure!(discordant, "μ-risk and PEHE rank all pairs the same: {scores:?}");
    Ok(())
}
