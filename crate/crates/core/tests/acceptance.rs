//! Runs the ten acceptance criteria and prints one line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{oracle_max_error, random_case, HEADS, HIDDEN};
use fitprobe::cli::cmd_timing;
use fitprobe::debugger::phase1::pre_check_initial_loss;
use fitprobe::debugger::phase2::{loss_curve_conditions, update_verdict, UpdateVerdict};
use fitprobe::debugger::{run_session, single_batch, CheckContext, CheckId, Forbearance, Monitor, Phase};
use fitprobe::faults::{base_program, catalog, inject_fault, run_benchmark, BaseProgramId, FaultId};
use fitprobe::metrics::{linear_cka, saturation_rho, shannon_equitability};
use fitprobe::nn::{forward_pass, ActivationKind, ForwardMode};
use fitprobe::tensor::{Distribution, RngStream, Tensor};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn quiet_ctx() -> CheckContext {
    CheckContext::default()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let mut cases = 0;
    for (i, &hidden) in HIDDEN.iter().enumerate() {
        for (j, &head) in HEADS.iter().enumerate() {
            for variant in 0..4u64 {
                let seed = 1000 + 100 * i as u64 + 10 * j as u64 + variant;
                let mut rng = RngStream::new(seed);
                let depth = 1 + rng.index(3);
                let width = 1 + rng.index(64);
                let case = random_case(seed, hidden, head, depth, width, variant & 1 == 1, variant & 2 == 2);
                let (err, n) = oracle_max_error(&case, 1e-5, 24);
                if err > 1e-2 {
                    return Err(format!("{hidden:?} {head:?} depth {depth} width {width} variant {variant}: error {err:.2e}"));
                }
                worst = worst.max(err);
                compared += n;
                cases += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    let target = if worst <= 1e-4 { "met" } else { "missed" };
    Ok(format!("{cases} nets, {compared} coordinates, max error {worst:.2e} (engine target 1e-4 {target}), {secs:.1}s"))
}

fn clean_runs() -> Outcome {
    let start = Instant::now();
    let ctx = quiet_ctx();
    for id in BaseProgramId::ALL {
        let setup = base_program(id, 7).map_err(|e| e.to_string())?;
        let a = run_session(&setup.program, &setup.train, &ctx, &Phase::ALL).map_err(|e| e.to_string())?;
        let b = run_session(&setup.program, &setup.train, &ctx, &Phase::ALL).map_err(|e| e.to_string())?;
        ensure(a.phases.len() == 3 && a.aborted.is_none(), format!("{id}: did not complete all phases"))?;
        let fired: Vec<_> = a.findings.iter().map(|f| f.check.name()).collect();
        ensure(fired.is_empty(), format!("{id}: {fired:?}"))?;
        ensure(a.findings == b.findings, format!("{id}: runs differ"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 600.0, format!("took {secs:.1}s"))?;
    Ok(format!("three bases silent and repeatable, {secs:.1}s"))
}

fn fault_matrix() -> Outcome {
    let start = Instant::now();
    let suite = catalog();
    let m = run_benchmark(&suite, 7, &quiet_ctx()).map_err(|e| e.to_string())?;
    let mut faults: Vec<FaultId> = suite.iter().map(|e| e.fault).collect();
    faults.sort();
    faults.dedup();
    ensure(faults.len() >= 22, format!("only {} distinct faults", faults.len()))?;
    let broadcast = m
        .pair(&format!("{}/{}", FaultId::MseWrongBroadcast, BaseProgramId::RegrFnn))
        .ok_or("mse-wrong-broadcast row missing")?;
    ensure(broadcast.a == 0 && !broadcast.detected, "mse-wrong-broadcast was caught by a designated check")?;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "{} faults, {} pairs, recall {:.3} (coding {:.3}, misconfiguration {:.3}), mse-wrong-broadcast missed, {secs:.1}s",
        faults.len(),
        m.pairs.len(),
        m.overall.recall,
        m.coding.recall,
        m.misconfiguration.recall
    );
    ensure(m.overall.recall >= 0.8, summary.clone())?;
    ensure(secs < 1800.0, format!("took {secs:.1}s"))?;
    Ok(summary)
}

fn initial_loss() -> Outcome {
    let ctx = quiet_ctx();
    let setup = base_program(BaseProgramId::ShallowFnn, 7).map_err(|e| e.to_string())?;
    let prep = setup.program.prepare(&setup.train).map_err(|e| e.to_string())?;
    let (x, y) = single_batch(&prep.dataset, &ctx, 7).map_err(|e| e.to_string())?;
    let net = setup.program.initialized_network(7);
    let trace = forward_pass(&net, &x, ForwardMode::Inference).map_err(|e| e.to_string())?;
    let p = trace.prediction();
    let ce: f64 = (0..p.rows())
        .map(|r| {
            let t = y.row(r).iter().position(|&v| v == 1.0).unwrap();
            -p.get(r, t).max(1e-300).ln()
        })
        .sum::<f64>()
        / p.rows() as f64;
    let ln10 = 10f64.ln();
    let rel = (ce - ln10).abs() / ln10;
    ensure(rel <= 0.1, format!("initial CE {ce:.4} is {:.1}% from ln 10", 100.0 * rel))?;
    let clean = pre_check_initial_loss(&setup.program, &net, &x, &y, true, &ctx).map_err(|e| e.to_string())?;
    ensure(clean.is_empty(), "clean program flagged")?;

    let faulty = inject_fault(&setup, FaultId::InvertedMeanSum).map_err(|e| e.to_string())?;
    let net = faulty.program.initialized_network(7);
    let found = pre_check_initial_loss(&faulty.program, &net, &x, &y, true, &ctx).map_err(|e| e.to_string())?;
    let ratio = found
        .iter()
        .filter(|f| f.check == CheckId::PiLoss && f.message.contains("doubled batch"))
        .map(|f| f.metric)
        .next()
        .ok_or("sum reduction not detected")?;
    ensure((1.8..=2.2).contains(&ratio), format!("ratio {ratio}"))?;
    Ok(format!("initial CE {ce:.4} vs ln 10 {ln10:.4}, doubled-batch ratio {ratio:.3}"))
}

fn orthonormal_columns(n: usize, rng: &mut RngStream) -> Tensor {
    let a = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[n, n]).unwrap();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for c in 0..n {
        let mut v = a.column(c);
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|a| a / norm).collect());
    }
    let mut q = Tensor::zeros(&[n, n]);
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            q.set(r, c, v);
        }
    }
    q
}

fn metric_anchors() -> Outcome {
    let e = |c: &[f64]| shannon_equitability(c).map_err(|e| e.to_string());
    let uniform = e(&[25.0; 10])?;
    ensure((uniform - 1.0).abs() <= 1e-9, format!("uniform equitability {uniform}"))?;
    let single = e(&[40.0, 0.0, 0.0, 0.0])?;
    ensure(single == 0.0, format!("single-class equitability {single}"))?;

    let mut rng = RngStream::new(5);
    let spread = rng.sample(Distribution::Uniform { lo: -1.0, hi: 1.0 }, &[20_000]).unwrap();
    let rho_u = saturation_rho(spread.data(), ActivationKind::Tanh, 10).map_err(|e| e.to_string())?;
    ensure((rho_u - 0.5).abs() <= 0.05, format!("uniform rho {rho_u}"))?;
    let pinned: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.999 } else { -0.998 }).collect();
    let rho_p = saturation_rho(&pinned, ActivationKind::Tanh, 10).map_err(|e| e.to_string())?;
    ensure(rho_p >= 0.95, format!("pinned rho {rho_p}"))?;

    let x = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[60, 8]).unwrap();
    let self_cka = linear_cka(&x, &x).map_err(|e| e.to_string())?;
    ensure((self_cka - 1.0).abs() <= 1e-9, format!("CKA(X,X) {self_cka}"))?;
    let y = x.map(|v| v.tanh() + 0.3 * v);
    let q = orthonormal_columns(8, &mut rng);
    let base = linear_cka(&x, &y).map_err(|e| e.to_string())?;
    let rotated = linear_cka(&x.matmul(&q).unwrap(), &y).map_err(|e| e.to_string())?;
    ensure((base - rotated).abs() <= 1e-6, format!("rotation moved CKA {base} -> {rotated}"))?;
    Ok(format!("equitability 1/0, rho {rho_u:.3}/{rho_p:.3}, CKA self {self_cka:.12}, rotated diff {:.1e}", (base - rotated).abs()))
}

/// Index (1-based hook evaluation) of the first Div-Loss finding on a
/// geometric loss series, if any within `evals` evaluations.
fn div_loss_after(ratio: f64, evals: usize, ctx: &CheckContext) -> Result<Option<usize>, String> {
    let mut forbear = Forbearance::new(ctx.forbearance_periods);
    let mut losses = Vec::new();
    for k in 0..evals {
        losses.push(0.3 * ratio.powi(k as i32));
        let conds = loss_curve_conditions(&losses, ctx).map_err(|e| e.to_string())?;
        let found = forbear.update(conds, (k as u64 + 1) * ctx.period as u64, Phase::OnTraining);
        if found.iter().any(|f| f.check == CheckId::DivLoss) {
            return Ok(Some(k + 1));
        }
    }
    Ok(None)
}

fn behavioral_detectors() -> Outcome {
    let ctx = quiet_ctx();
    let budget = ctx.window + ctx.forbearance_periods;
    for ratio in [2.05, 2.5, 4.0, 10.0] {
        let at = div_loss_after(ratio, budget, &ctx)?;
        ensure(at.is_some(), format!("ratio {ratio} not flagged within {budget} evaluations"))?;
    }
    for ratio in [0.5, 0.9, 1.0, 1.2, 1.5] {
        let at = div_loss_after(ratio, 40, &ctx)?;
        ensure(at.is_none(), format!("ratio {ratio} flagged at evaluation {at:?}"))?;
    }
    let cases = [
        (-1.0, UpdateVerdict::Fast),
        (-1.0 - 1e-12, UpdateVerdict::Healthy),
        (-4.0, UpdateVerdict::Slow),
        (-4.0 + 1e-12, UpdateVerdict::Healthy),
        (-2.5, UpdateVerdict::Healthy),
    ];
    for (r, want) in cases {
        let got = update_verdict(r, &ctx);
        ensure(got == want, format!("log ratio {r}: {got:?}"))?;
    }
    Ok(format!("Div-Loss within {budget} evaluations above 2, silent at 1.5 and below; update bounds -4/-1 exclusive"))
}

fn corrupted_labels() -> Outcome {
    let ctx = quiet_ctx();
    let setup = base_program(BaseProgramId::ShallowFnn, 7).map_err(|e| e.to_string())?;
    let faulty = inject_fault(&setup, FaultId::ShuffleFeaturesOnly).map_err(|e| e.to_string())?;
    let r = run_session(&faulty.program, &faulty.train, &ctx, &[Phase::PostTraining]).map_err(|e| e.to_string())?;
    let hit = r
        .findings
        .iter()
        .find(|f| f.check == CheckId::CorruptedLabels && f.phase == Phase::PostTraining)
        .ok_or("features-only shuffler not detected")?;
    for seed in 1..=5 {
        let clean = base_program(BaseProgramId::ShallowFnn, seed).map_err(|e| e.to_string())?;
        let r = run_session(&clean.program, &clean.train, &ctx, &[Phase::PostTraining]).map_err(|e| e.to_string())?;
        ensure(
            !r.findings.iter().any(|f| f.check == CheckId::CorruptedLabels),
            format!("correct shuffler flagged at seed {seed}"),
        )?;
    }
    Ok(format!("detected ({}), seeds 1-5 clean", hit.message))
}

fn mode_transfer() -> Outcome {
    let ctx = quiet_ctx();
    let setup = base_program(BaseProgramId::DeepFnn, 7).map_err(|e| e.to_string())?;
    let faulty = inject_fault(&setup, FaultId::NoBatchNormUpdate).map_err(|e| e.to_string())?;
    let r = run_session(&faulty.program, &faulty.train, &ctx, &Phase::ALL).map_err(|e| e.to_string())?;
    let hit = r.findings.iter().find(|f| f.check == CheckId::UnsModeTr).ok_or("frozen statistics not detected")?;
    for seed in 1..=5 {
        let clean = base_program(BaseProgramId::DeepFnn, seed).map_err(|e| e.to_string())?;
        let r = run_session(&clean.program, &clean.train, &ctx, &Phase::ALL).map_err(|e| e.to_string())?;
        ensure(
            !r.findings.iter().any(|f| f.check == CheckId::UnsModeTr),
            format!("clean DeepFNN flagged at seed {seed}"),
        )?;
    }
    Ok(format!("detected (metric {:.3}, threshold {}), seeds 1-5 clean", hit.metric, hit.threshold))
}

fn overhead() -> Outcome {
    let ctx = quiet_ctx();
    let mut parts = Vec::new();
    for id in BaseProgramId::ALL {
        let t = cmd_timing(id, 7, &ctx, &[Phase::PreTraining]).map_err(|e| e.to_string())?;
        ensure(t.ratio <= 15.0, format!("{id}: ratio {:.2}", t.ratio))?;
        parts.push(format!("{} {:.2}x", id.short(), t.ratio));
    }
    Ok(parts.join(", "))
}

fn non_interference() -> Outcome {
    let ctx = quiet_ctx();
    let setup = base_program(BaseProgramId::DeepFnn, 7).map_err(|e| e.to_string())?;
    let prep = setup.program.prepare(&setup.train).map_err(|e| e.to_string())?;
    let (x, y) = single_batch(&prep.dataset, &ctx, 7).map_err(|e| e.to_string())?;
    let mut plain = setup.program.fresh_trainer(7);
    let mut watched = setup.program.fresh_trainer(7);
    let mut monitor = Monitor::new(&watched.net, &y, &ctx, 7);
    for it in 0..100 {
        plain.step(&x, &y).map_err(|e| e.to_string())?;
        let step = watched.step(&x, &y).map_err(|e| e.to_string())?;
        monitor.record(&step, &watched.net, setup.program.metric.evaluate(step.trace.prediction(), &y));
        if (it + 1) % ctx.period == 0 {
            monitor.evaluate().map_err(|e| e.to_string())?;
        }
    }
    let a: Vec<u64> = plain.net.flat_params().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = watched.net.flat_params().iter().map(|v| v.to_bits()).collect();
    ensure(a == b, "parameters diverged")?;
    Ok(format!("{} parameters bitwise equal after 100 iterations", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient oracle", gradient_oracle),
        ("clean runs", clean_runs),
        ("fault matrix", fault_matrix),
        ("initial loss", initial_loss),
        ("metric anchors", metric_anchors),
        ("behavioral detectors", behavioral_detectors),
        ("corrupted labels", corrupted_labels),
        ("mode transfer", mode_transfer),
        ("overhead", overhead),
        ("non-interference", non_interference),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{took:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{took:.1?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
