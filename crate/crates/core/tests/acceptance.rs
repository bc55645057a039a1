//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use featproto::eval::{c_index, km_curve, logrank_test, CohortSample};
use featproto::library::{ema_merge, ema_update, init_library, ClassFeatureSet, Feature};
use featproto::losses::{center_loss, contrastive_loss, nll_surv_loss};
use featproto::matching::{mpmatch, risk_score};
use featproto::trainer::{
    ablation_run, ablation_table, batch_loss, cohort, predict_dataset, train, AblationVariant, CentroidOracle,
    TrainConfig, TrainOutcome,
};
use featproto::{dissimilarity, generate_synthetic, pmdsim, Dataset64, EngineConfig, Library64, SynthSpec};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_library(classes: usize, k: usize, m: usize, dim: usize, seed: u64) -> (Library64, EngineConfig) {
    let cfg = EngineConfig {
        feature_dim: dim,
        classes,
        k_time: classes,
        k_proto: k,
        m_wander: m,
        ..EngineConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets: Vec<ClassFeatureSet<f64>> = (0..classes)
        .map(|c| ClassFeatureSet {
            class_index: c,
            features: (0..k + m + 10)
                .map(|i| {
                    let mut v = random_vec(&mut rng, dim, -1.0, 1.0);
                    v[c % dim] += 2.0;
                    Feature::new(format!("c{c}-{i}"), v)
                })
                .collect(),
        })
        .collect();
    (init_library(&sets, &cfg).expect("library").0, cfg)
}

fn c01_pmdsim() -> Check {
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    ensure((pmdsim(&[0.0, 0.0], &[2.0, 2.0], 2.0).unwrap() - 0.2f64).abs() < tol, "(0,0),(2,2) != 0.2")?;
    ensure(
        (pmdsim(&[1.0, 1.0, 1.0, 1.0], &[0.0, 2.0, 1.0, 1.0], 1.0).unwrap() - 2.0f64 / 3.0).abs() < tol,
        "m=1 example != 2/3",
    )?;
    ensure((dissimilarity(&[0.0, 0.0], &[2.0, 2.0], 2.0).unwrap() - 5.0f64).abs() < tol, "dissimilarity != 5")?;
    let mut probes = 0;
    for _ in 0..2000 {
        let d = rng.random_range(1..10);
        let m = rng.random_range(0.5..4.0);
        let a = random_vec(&mut rng, d, -3.0, 3.0);
        let b = random_vec(&mut rng, d, -3.0, 3.0);
        let s = pmdsim(&a, &b, m).unwrap();
        ensure(pmdsim(&a, &a, m).unwrap() == 1.0, "identity")?;
        ensure((s - pmdsim(&b, &a, m).unwrap()).abs() < tol, "symmetry")?;
        ensure(s > 0.0 && s <= 1.0, "range")?;
        ensure((dissimilarity(&a, &b, m).unwrap() - 1.0 / s).abs() < tol / s, "reciprocal")?;
        // scaling a - b by t > 1 lowers the similarity
        let t = rng.random_range(1.01..3.0);
        let far: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect();
        ensure(a == b || pmdsim(&a, &far, m).unwrap() < s, "scaling monotonicity")?;
        probes += 1;
    }
    Ok(format!("3 worked examples, {probes} random probes"))
}

fn c02_ema() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = rng.random_range(1..17);
        let p = random_vec(&mut rng, d, -2.0, 2.0);
        let f = random_vec(&mut rng, d, -2.0, 2.0);
        let new = ema_merge(&p, &f, 0.1);
        let lhs = dist(&new, &f);
        let rhs = 0.1 * dist(&p, &f);
        worst = worst.max((lhs - rhs).abs());
    }
    ensure(worst <= 1e-12, format!("max |Δ| {worst:e}"))?;

    let (lib, mut cfg) = random_library(2, 1, 0, 3, 3);
    cfg.top_f_sources = 32;
    let origin = lib.typical(0)[0].sources.entries[0].sample_id.clone();
    let mut cur = lib;
    let mut worst_w = 0.0f64;
    for k in 1..=20u64 {
        let set = ClassFeatureSet {
            class_index: 0,
            features: vec![Feature::new(format!("m{k}"), random_vec(&mut rng, 3, 1.0, 3.0))],
        };
        cur = ema_update(&cur, &[set], &cfg, k).map_err(|e| e.to_string())?.0;
        let w = cur.typical(0)[0].sources.weight_of(&origin).ok_or("origin source dropped")?;
        worst_w = worst_w.max((w - 0.1f64.powi(k as i32)).abs());
    }
    ensure(worst_w <= 1e-9, format!("λ^k weight error {worst_w:e}"))?;
    Ok(format!("1000 triples max err {worst:.1e}; 20 merges weight err {worst_w:.1e}"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn brute_logits(f: &[f64], lib: &Library64, m: f64) -> Vec<f64> {
    (0..lib.classes())
        .map(|c| {
            let mut row = Vec::new();
            for p in lib.typical(c).iter().chain(lib.wandering(c)) {
                let s: f64 = f.iter().zip(&p.vector).map(|(x, y)| (x - y).abs().powf(m)).sum::<f64>() / f.len() as f64;
                row.push(1.0 / (1.0 + s));
            }
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            let cs: f64 = f.iter().zip(lib.center(c)).map(|(x, y)| (x - y).abs().powf(m)).sum::<f64>() / f.len() as f64;
            0.4 * mean + 0.4 * max + 0.2 / (1.0 + cs)
        })
        .collect()
}

fn c03_mpmatch() -> Check {
    let (lib, cfg) = random_library(4, 8, 3, 6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = random_vec(&mut rng, 6, -1.0, 3.0);
        let (logits, _) = mpmatch(&f, &lib, &cfg).map_err(|e| e.to_string())?;
        for (a, b) in logits.iter().zip(brute_logits(&f, &lib, cfg.power)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max |Δ| {worst:e}"))?;
    Ok(format!("100 queries, max |Δ| {worst:.1e}"))
}

fn c04_risk() -> Check {
    let p = risk_score(&[0.0f64; 4]).map_err(|e| e.to_string())?;
    ensure(p.risk == -0.9375, format!("uniform-hazard risk {}", p.risk))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..9);
        let logits = random_vec(&mut rng, k, -8.0, 8.0);
        let p = risk_score(&logits).unwrap();
        if !p.survival.windows(2).all(|w| w[1] <= w[0]) || p.risk < -(k as f64) || p.risk > 0.0 {
            violations += 1;
        }
        let mut up = logits.clone();
        up[rng.random_range(0..k)] += rng.random_range(0.0..4.0);
        if risk_score(&up).unwrap().risk < p.risk {
            violations += 1;
        }
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok("10000 probes, 0 violations; uniform risk -0.9375".into())
}

fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

fn c05_gradients(ctx: &Context) -> Check {
    let (lib, cfg) = random_library(4, 6, 2, 5, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut probes = 0;
    let mut worst = 0.0f64;
    let mut record = |analytic: f64, numeric: f64| {
        probes += 1;
        worst = worst.max(rel_err(analytic, numeric));
    };
    for _ in 0..15 {
        let f = random_vec(&mut rng, 5, -1.0, 3.0);
        let c = rng.random_range(0..4);
        let i = rng.random_range(0..5);
        let g = contrastive_loss(&f, &lib, c, 2.0).unwrap().grad[i];
        record(g, central_diff(|x| contrastive_loss(x, &lib, c, 2.0).unwrap().value, &f, i, 1e-5));
        let g = center_loss(&f, lib.center(c), 1.0, 2.0).unwrap().grad[i];
        record(g, central_diff(|x| center_loss(x, lib.center(c), 1.0, 2.0).unwrap().value, &f, i, 1e-5));
        let z = random_vec(&mut rng, 4, -3.0, 3.0);
        let cens = rng.random_bool(0.4);
        let nll = nll_surv_loss(&z, c, cens, 0.4).unwrap();
        for j in 0..4 {
            record(nll.grad[j], central_diff(|x| nll_surv_loss(x, c, cens, 0.4).unwrap().loss, &z, j, 1e-5));
        }
    }
    // end to end through the encoder on the synthetic training set
    let state = &ctx.full.state;
    let batch: Vec<_> = ctx.train.records.iter().step_by(37).take(8).collect();
    let (_, grad) = batch_loss(&state.encoder, &state.library, &ctx.cfg, &batch).map_err(|e| e.to_string())?;
    let loss_at = |i: usize, v: f64| {
        let mut enc = state.encoder.clone();
        enc.set_param(i, v);
        batch_loss(&enc, &state.library, &ctx.cfg, &batch).unwrap().0.total
    };
    let n = state.encoder.param_count();
    for _ in 0..40 {
        let i = rng.random_range(0..n);
        let p = state.encoder.param(i);
        let h = 1e-5;
        let numeric = (loss_at(i, p + h) - loss_at(i, p - h)) / (2.0 * h);
        record(grad.get(i), numeric);
    }
    let _ = &cfg;
    ensure(probes >= 100, format!("only {probes} probes"))?;
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!("{probes} probes, max relative error {worst:.1e}"))
}

fn c06_nll() -> Check {
    let ln4 = 2.0 * std::f64::consts::LN_2;
    let u = nll_surv_loss(&[0.0f64; 4], 1, false, 0.0).map_err(|e| e.to_string())?;
    let c = nll_surv_loss(&[0.0f64; 4], 1, true, 0.0).map_err(|e| e.to_string())?;
    ensure((u.loss - ln4).abs() <= 1e-9, format!("uncensored {}", u.loss))?;
    ensure((c.loss - ln4).abs() <= 1e-9, format!("censored {}", c.loss))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let k = rng.random_range(2..9);
        let z = random_vec(&mut rng, k, -6.0, 6.0);
        let y = rng.random_range(0..k);
        let g = nll_surv_loss(&z, y, true, rng.random_range(0.0..1.0)).unwrap().grad;
        ensure(g[y + 1..].iter().all(|&x| x == 0.0), "censored gradient leaks past Y")?;
    }
    Ok(format!("both cases {ln4:.10}; 1000 censored gradients zero past Y"))
}

fn samples(times: &[f64], cens: &[bool], risks: &[f64]) -> Vec<CohortSample<f64>> {
    (0..times.len())
        .map(|i| CohortSample {
            sample_id: format!("s{i}"),
            risk: risks[i],
            event_time: times[i],
            censored: cens[i],
        })
        .collect()
}

fn c07_cindex() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let times: Vec<f64> = (0..50).map(|_| rng.random_range(0..25) as f64).collect();
        let cens: Vec<bool> = (0..50).map(|_| rng.random_bool(0.3)).collect();
        let risks: Vec<f64> = (0..50).map(|_| rng.random_range(0..12) as f64 * 0.5).collect();
        let (mut num, mut den) = (0u64, 0u64);
        for i in 0..50 {
            for j in 0..50 {
                if times[i] < times[j] && !cens[i] {
                    den += 2;
                    num += if risks[i] > risks[j] { 2 } else if risks[i] == risks[j] { 1 } else { 0 };
                }
            }
        }
        let engine = c_index(&samples(&times, &cens, &risks)).map_err(|e| e.to_string())?;
        ensure(engine == num as f64 / den as f64, format!("engine {engine} vs {num}/{den}"))?;
        let moved: Vec<f64> = risks.iter().map(|r| (r * 0.7).exp() + 3.0).collect();
        let again = c_index(&samples(&times, &cens, &moved)).unwrap();
        ensure(again.to_bits() == engine.to_bits(), "monotone transform changed the value")?;
    }
    Ok("200 cohorts exact; transform invariance bit-identical".into())
}

fn c08_km_logrank() -> Check {
    let a = samples(&[2.0, 3.0, 3.0, 5.0, 8.0], &[false, false, true, false, true], &[0.0; 5]);
    let same = logrank_test(&a, &a).map_err(|e| e.to_string())?;
    ensure(same.chi_square == 0.0 && same.p_value == 1.0, format!("identical groups {same:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut exp_group = |rate: f64| {
        let t: Vec<f64> = (0..100).map(|_| -(1.0 - rng.random::<f64>()).ln() / rate).collect();
        samples(&t, &[false; 100], &[0.0; 100])
    };
    let slow = exp_group(0.05);
    let fast = exp_group(0.2);
    let hr4 = logrank_test(&slow, &fast).map_err(|e| e.to_string())?;
    ensure(hr4.p_value < 0.05, format!("HR 4 p = {}", hr4.p_value))?;

    let six = samples(
        &[1.0, 2.0, 3.0, 3.0, 5.0, 6.0],
        &[false, true, false, false, true, false],
        &[0.0; 6],
    );
    let km = km_curve(&six).map_err(|e| e.to_string())?;
    let s1 = 1.0 - 1.0 / 6.0;
    let s3 = s1 * (1.0 - 2.0 / 4.0);
    let table = [(1.0, 6, 1, s1), (3.0, 4, 2, s3), (6.0, 1, 1, 0.0)];
    ensure(km.steps.len() == table.len(), "step count")?;
    for (s, &(t, n, d, v)) in km.steps.iter().zip(&table) {
        ensure((s.time, s.at_risk, s.events, s.survival) == (t, n, d, v), format!("step at {t}: {s:?}"))?;
    }
    Ok(format!("identical p=1; HR 4 p={:.2e}; n=6 table exact", hr4.p_value))
}

struct Context {
    train: Dataset64,
    val: Dataset64,
    cfg: EngineConfig,
    tcfg: TrainConfig,
    full: TrainOutcome<f64>,
    full_time: Duration,
}

fn context() -> featproto::Result<Context> {
    let spec = SynthSpec::default();
    let out = generate_synthetic::<f64>(&spec)?;
    let (tr, va) = out.split_per_class(150);
    let mut train_ds = out.dataset.subset(&tr);
    train_ds.assign_bins(4)?;
    let mut val = out.dataset.subset(&va);
    val.apply_bins(train_ds.bin_edges.as_ref().expect("binned"));
    let cfg = EngineConfig::default();
    let tcfg = TrainConfig::default();
    let t = Instant::now();
    let full = train(&train_ds, Some(&val), &cfg, &tcfg)?;
    Ok(Context {
        train: train_ds,
        val,
        cfg,
        tcfg,
        full,
        full_time: t.elapsed(),
    })
}

fn c09_end_to_end(ctx: &Context) -> Check {
    let oracle = CentroidOracle::fit(&ctx.train, 4).map_err(|e| e.to_string())?;
    let report = oracle.evaluate(&ctx.val).map_err(|e| e.to_string())?;
    let threshold = 0.85;
    ensure(
        report.contrast_c_index - 0.05 >= threshold,
        format!("oracle {:.4} does not support the threshold", report.contrast_c_index),
    )?;
    let last = ctx.full.state.history.last().ok_or("no history")?;
    let val_c = last.val_c_index.ok_or("no validation C-index")?;
    ensure(ctx.full.state.epoch == 30, "did not run 30 epochs")?;
    ensure(val_c > threshold, format!("val C-index {val_c:.4}"))?;
    ensure(ctx.full_time < Duration::from_secs(300), "over 5 min")?;
    Ok(format!(
        "val C-index {val_c:.4} (oracle {:.4}, threshold {threshold}), trained in {:.1?}",
        report.contrast_c_index, ctx.full_time
    ))
}

fn c10_determinism(ctx: &Context) -> Check {
    let again = train(&ctx.train, Some(&ctx.val), &ctx.cfg, &ctx.tcfg).map_err(|e| e.to_string())?;
    let a = &ctx.full.state;
    let b = &again.state;
    ensure(a.history_jsonl() == b.history_jsonl(), "metrics differ")?;
    ensure(ctx.full.loss_log == again.loss_log, "loss logs differ")?;
    ensure(a.library.to_canonical_text() == b.library.to_canonical_text(), "library files differ")?;
    ensure(a.encoder.to_text() == b.encoder.to_text(), "encoder files differ")?;
    let text = a.library.to_canonical_text();
    let back = Library64::from_canonical_text(&text).map_err(|e| e.to_string())?;
    ensure(back == a.library && back.to_canonical_text() == text, "library round trip is lossy")?;
    Ok(format!("rerun byte-identical ({} metric bytes, {} library bytes)", a.history_jsonl().len(), text.len()))
}

fn c11_ablations(ctx: &Context) -> Check {
    let mut rows = Vec::new();
    for v in AblationVariant::ALL {
        let (row, _) = ablation_run(&ctx.train, &ctx.val, &ctx.cfg, &ctx.tcfg, v).map_err(|e| format!("{v}: {e}"))?;
        rows.push(row);
    }
    let table = ablation_table(&rows);
    ensure(table.lines().count() == 7, "table rows")?;
    for line in table.lines() {
        println!("    | {line}");
    }
    Ok("6 variants completed".into())
}

fn c12_explanations(ctx: &Context) -> Check {
    let state = &ctx.full.state;
    let preds = predict_dataset(&state.encoder, &state.library, &ctx.cfg, &ctx.val).map_err(|e| e.to_string())?;
    let train_ids: std::collections::HashSet<&str> = ctx.train.records.iter().map(|r| r.sample_id.as_str()).collect();
    let mut cited = 0;
    for ((pred, trace), rec) in preds.iter().zip(&ctx.val.records) {
        let eval_logits: Vec<u64> = pred.logits.iter().map(|x| x.to_bits()).collect();
        let trace_logits: Vec<u64> = trace.logits().iter().map(|x| x.to_bits()).collect();
        ensure(eval_logits == trace_logits, format!("{}: logits differ", rec.sample_id))?;
        for m in &trace.classes {
            let rowmax = m.row.iter().cloned().fold(f64::MIN, f64::max);
            ensure(m.row[m.nearest_index] == rowmax && m.max == rowmax, format!("{}: nearest is not the row max", rec.sample_id))?;
            for s in &m.sources {
                ensure(train_ids.contains(s.sample_id.as_str()), format!("unknown source {}", s.sample_id))?;
                cited += 1;
            }
        }
    }
    let risks: Vec<f64> = preds.iter().map(|(p, _)| p.risk).collect();
    let _ = c_index(&cohort(&ctx.val, &risks)).map_err(|e| e.to_string())?;
    Ok(format!("{} samples, {cited} cited sources", preds.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, budget: Duration, f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let result = f();
        let took = t.elapsed();
        let result = result.and_then(|m| {
            if took <= budget {
                Ok(m)
            } else {
                Err(format!("{m}; took {took:.1?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(msg) => println!("PASS  criterion {id:>2} {name}: {msg} [{took:.2?}]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {id:>2} {name}: {msg} [{took:.2?}]");
            }
        }
    };
    let s = Duration::from_secs;
    report(1, "pmdsim suite", s(1), &c01_pmdsim);
    report(2, "ema geometry", s(1), &c02_ema);
    report(3, "mpmatch oracle", s(5), &c03_mpmatch);
    report(4, "risk-score law", s(5), &c04_risk);
    report(6, "nll worked values", s(1), &c06_nll);
    report(7, "c-index oracle", s(10), &c07_cindex);
    report(8, "km and log-rank", s(5), &c08_km_logrank);
    let t = Instant::now();
    let ctx = match context() {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL  criteria 5, 9-12: synthetic run failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let setup = t.elapsed();
    report(5, "loss gradients", s(30), &|| c05_gradients(&ctx));
    report(9, "synthetic end-to-end", s(300), &|| c09_end_to_end(&ctx).map(|m| format!("{m}; setup {setup:.1?}")));
    report(10, "determinism and persistence", s(360), &|| c10_determinism(&ctx));
    report(11, "ablation harness", s(900), &|| c11_ablations(&ctx));
    report(12, "explanation fidelity", s(60), &|| c12_explanations(&ctx));
    if failed == 0 {
        println!("acceptance: 12/12 passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} failed");
        ExitCode::FAILURE
    }
}
