//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit when any
//! criterion fails. Every criterion runs even after an earlier failure.

#[path = "../../core/tests/common/mod.rs"]
mod invariants;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use invariants::*;
use neural_retarget::dataio::{
    make_dataset, synth_demo, Dataset, DatasetOptions, DemoFrame, DemoSequence, HumanSkeleton, SynthOptions,
    SynthStyle,
};
use neural_retarget::gradsuite::{run_suite, SuiteOptions};
use neural_retarget::graphnet::{NetConfig, Networks};
use neural_retarget::kinematics::{bundled_model, Capsule, RobotModel, Vec3};
use neural_retarget::metrics::{discrete_frechet, tracking_error};
use neural_retarget::objective::{colliding_pairs, demo_from_robot_pose, ObjectiveWeights};
use neural_retarget::retarget::{
    baseline_joint_optimize, compare_init, evaluate_motions, init_variants, latent_statistics, random_init,
    replay_stopping, train, Init, LatentOptions, Mode, MotionReport, OptimRun, Retargeter, StopReason,
    TrainOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROBOT: &str = "arm7x2_hand";
/// Every `k`-th frame of the default training split (about 430 frames).
const TRAIN_STRIDE: usize = 25;
/// Every `k`-th frame of the default test split (about 440 frames).
const TEST_STRIDE: usize = 10;
const EPOCHS: usize = 40;
const TRAIN_LR: f64 = 1e-3;

type Outcome = Result<String, String>;

fn subsample(seq: &DemoSequence, k: usize) -> DemoSequence {
    DemoSequence {
        frames: seq.frames.iter().step_by(k).cloned().collect(),
        dt: seq.dt * k as f64,
        ..seq.clone()
    }
}

/// Trained model and every optimization run logged along the way.
struct Context {
    model: RobotModel,
    nets: Networks,
    train_frames: Vec<DemoFrame>,
    test: Vec<DemoSequence>,
    runs: Vec<OptimRun>,
    decoded: Vec<Vec<f64>>,
}

impl Context {
    fn build() -> Context {
        let model = bundled_model(ROBOT).unwrap();
        let Dataset { train: tr, test } = make_dataset(&DatasetOptions::default(), &HumanSkeleton::default()).unwrap();
        let train_frames: Vec<DemoFrame> = tr.iter().flat_map(|s| subsample(s, TRAIN_STRIDE).frames).collect();
        let test: Vec<DemoSequence> = test.iter().map(|s| subsample(s, TEST_STRIDE)).collect();
        let mut nets = Networks::new(&model, NetConfig::default(), 0).unwrap();
        let opts = TrainOptions {
            epochs: EPOCHS,
            lr: TRAIN_LR,
            ..TrainOptions::default()
        };
        let t = Instant::now();
        let rep = train(&mut nets, &model, &train_frames, &ObjectiveWeights::default(), &opts, |_, _| {}).unwrap();
        println!(
            "trained on {} frames for {} epochs in {:.0?}, final loss {:.4}",
            train_frames.len(),
            rep.epoch_losses.len(),
            t.elapsed(),
            rep.epoch_losses.last().unwrap()
        );
        Context {
            model,
            nets,
            train_frames,
            test,
            runs: Vec::new(),
            decoded: Vec::new(),
        }
    }

    fn retargeter(&self, weights: ObjectiveWeights) -> Retargeter<'_> {
        Retargeter::new(&self.nets, &self.model, weights, LatentOptions::default()).unwrap()
    }

    fn log(&mut self, runs: impl IntoIterator<Item = OptimRun>) {
        for r in runs {
            self.decoded.push(r.angles.clone());
            self.runs.push(r);
        }
    }
}

fn timed(limit: Duration, t: Instant, detail: String) -> Outcome {
    let e = t.elapsed();
    if e <= limit {
        Ok(format!("{detail}; {e:.1?}"))
    } else {
        Err(format!("{detail}; took {e:.1?}, over {limit:?}"))
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let opts = SuiteOptions::default();
    let reports = run_suite(&opts, &[]).map_err(|e| e.to_string())?;
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.component.as_str()).collect();
    if !failed.is_empty() {
        return Err(format!("failed components {failed:?}"));
    }
    let few: Vec<&str> = reports
        .iter()
        .filter(|r| r.configs < 100)
        .map(|r| r.component.as_str())
        .collect();
    if !few.is_empty() {
        return Err(format!("fewer than 100 configurations for {few:?}"));
    }
    timed(
        Duration::from_secs(120),
        t,
        format!("{} components x {} configs, max rel error {worst:.2e}", reports.len(), opts.configs),
    )
}

/// A target pose past the upper limit on every joint.
fn out_of_limits_demo(model: &RobotModel) -> DemoFrame {
    let beyond: Vec<f64> = model.joints.iter().map(|j| j.upper + 0.4).collect();
    demo_from_robot_pose(model, &beyond, &template_frame()).unwrap()
}

fn criterion_2(ctx: &mut Context) -> Outcome {
    let (r, c) = ctx.nets.latent_shape();
    let mut outside = 0;
    let mut checked = 0;
    for i in 0..10_000u64 {
        // Latents far outside the training distribution included.
        let sigma = [1.0, 10.0, 100.0, 1e4][(i % 4) as usize];
        let a = ctx.nets.decode(&random_init(r, c, sigma, i)).map_err(|e| e.to_string())?;
        outside += usize::from(!ctx.model.within_limits(&a));
        checked += 1;
    }
    let from_runs = ctx.decoded.iter().filter(|a| !ctx.model.within_limits(a)).count();
    if outside + from_runs > 0 {
        return Err(format!("{outside} random and {from_runs} retargeted decodes outside limits"));
    }
    let demo = out_of_limits_demo(&ctx.model);
    let mid: Vec<f64> = ctx.model.joints.iter().map(|j| 0.5 * (j.lower + j.upper)).collect();
    let w = ObjectiveWeights {
        lim: 1e-3,
        ..ObjectiveWeights::default()
    };
    let base = baseline_joint_optimize(&ctx.model, &demo, &mid, &w, &LatentOptions::default()).map_err(|e| e.to_string())?;
    let violations = ctx.model.limit_violations(&base.angles);
    let rt = ctx.retargeter(ObjectiveWeights::default());
    let neural = rt.retarget_frame(&demo, Mode::LatentOpt, Init::Neural, 0).map_err(|e| e.to_string())?;
    let neural_ok = ctx.model.within_limits(&neural.angles);
    ctx.log([neural]);
    if violations == 0 || !neural_ok {
        return Err(format!(
            "baseline violations {violations} (need >= 1), neural within limits {neural_ok}"
        ));
    }
    Ok(format!(
        "{checked} random latents and {} retargeted frames within limits; baseline violates {violations} joints",
        ctx.decoded.len()
    ))
}

/// Minimum over all monotone couplings of the maximum pair distance.
fn brute_frechet(a: &[Vec3], b: &[Vec3]) -> f64 {
    fn walk(a: &[Vec3], b: &[Vec3], i: usize, j: usize, worst: f64, best: &mut f64) {
        let worst = worst.max((a[i] - b[j]).norm());
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(worst);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, worst, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, worst, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, worst, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let track = |rng: &mut ChaCha8Rng| -> Vec<Vec3> {
        let n = rng.gen_range(1..=8);
        (0..n)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    for k in 0..500 {
        let (a, b) = (track(&mut rng), track(&mut rng));
        let f = discrete_frechet(&a, &b).map_err(|e| e.to_string())?;
        let g = brute_frechet(&a, &b);
        if f != g {
            return Err(format!("pair {k}: recurrence {f} vs enumeration {g}"));
        }
    }
    timed(Duration::from_secs(30), t, "500 pairs equal to enumeration".into())
}

fn mean_tracking(ctx: &Context, rows: &[(MotionReport, Vec<OptimRun>)]) -> Result<f64, String> {
    let mut sum = 0.0;
    for (seq, (_, runs)) in ctx.test.iter().zip(rows) {
        let angles: Vec<Vec<f64>> = runs.iter().map(|r| r.angles.clone()).collect();
        sum += tracking_error(seq, &angles, &ctx.model).map_err(|e| e.to_string())?;
    }
    Ok(sum / rows.len() as f64)
}

fn criterion_4(ctx: &mut Context) -> Outcome {
    let t = Instant::now();
    let rt = ctx.retargeter(ObjectiveWeights::default());
    let ff = evaluate_motions(&rt, &ctx.test, Mode::Feedforward, Init::Neural, 0, 1).map_err(|e| e.to_string())?;
    let lo = evaluate_motions(&rt, &ctx.test, Mode::LatentOpt, Init::Neural, 0, 1).map_err(|e| e.to_string())?;
    let (e_ff, e_lo) = (mean_tracking(ctx, &ff)?, mean_tracking(ctx, &lo)?);
    let frames: usize = lo.iter().map(|(r, _)| r.frames).sum();
    let worse = lo
        .iter()
        .flat_map(|(_, runs)| runs)
        .filter(|r| r.best().total > r.initial().total)
        .count();
    let motions = ctx.test.len();
    drop(rt);
    ctx.log(ff.into_iter().chain(lo).flat_map(|(_, r)| r));
    let detail = format!(
        "{motions} motions, {frames} frames: tracking latent_opt {e_lo:.4} vs feedforward {e_ff:.4}, {worse} frames final > initial"
    );
    if motions < 25 || e_lo >= e_ff || worse > 0 {
        return Err(detail);
    }
    timed(Duration::from_secs(15 * 60), t, detail)
}

fn criterion_5(ctx: &mut Context) -> Outcome {
    let (mean, std) = latent_statistics(&ctx.nets, &ctx.train_frames).map_err(|e| e.to_string())?;
    let frames: Vec<&DemoFrame> = ctx.test.iter().flat_map(|s| &s.frames).collect();
    let rt = ctx.retargeter(ObjectiveWeights::default());
    let cmp = compare_init(&rt, &frames, &init_variants(mean, std), 0, 1).map_err(|e| e.to_string())?;
    let last = rt.opts.max_iters;
    let neural = cmp.curve("neural").ok_or("no neural curve")?;
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for c in cmp.curves.iter().filter(|c| c.label != "neural") {
        for k in [0, last] {
            if neural.mean_best[k] > c.mean_best[k] {
                bad.push(format!("{} at iteration {k}", c.label));
            }
        }
        summary.push(format!("{} {:.3}->{:.3}", c.label, c.mean_best[0], c.mean_best[last]));
    }
    for r in &cmp.reach {
        if r.neural >= r.random {
            bad.push(format!("reach {}: neural {} vs random {}", r.label, r.neural, r.random));
        }
        summary.push(format!("reach {} {:.1} vs {:.1}", r.label, r.neural, r.random));
    }
    let detail = format!(
        "neural {:.3}->{:.3}; {}",
        neural.mean_best[0],
        neural.mean_best[last],
        summary.join(", ")
    );
    if bad.is_empty() && cmp.reach.len() == 3 {
        Ok(format!("{} frames; {detail}", frames.len()))
    } else {
        Err(format!("{detail}; violations: {}", bad.join(", ")))
    }
}

/// Loss sequences logged by the CLI, keyed by (motion, frame).
fn logged_totals(losses_csv: &Path) -> Result<BTreeMap<(String, usize), Vec<f64>>, String> {
    let mut r = csv::Reader::from_path(losses_csv).map_err(|e| e.to_string())?;
    let h = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |n: &str| h.iter().position(|x| x == n).unwrap();
    let (m, f, it, tot) = (col("motion"), col("frame"), col("iteration"), col("total"));
    let mut out: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(|e| e.to_string())?;
        let seq = out.entry((row[m].to_string(), row[f].parse().unwrap())).or_default();
        if row[it].parse::<usize>().unwrap() != seq.len() {
            return Err("iterations out of order in losses.csv".into());
        }
        seq.push(row[tot].parse().unwrap());
    }
    Ok(out)
}

fn criterion_6(ctx: &Context, cli_log: Option<&Path>) -> Outcome {
    let opts = LatentOptions::default();
    let mut optimized = 0;
    for (i, r) in ctx.runs.iter().enumerate() {
        if r.iterations_used > 100 {
            return Err(format!("run {i} used {} iterations", r.iterations_used));
        }
        if r.stop_reason == StopReason::Feedforward {
            if r.iterations_used != 0 || r.losses.len() != 1 {
                return Err(format!("feedforward run {i} iterated"));
            }
            continue;
        }
        optimized += 1;
        let want = replay_stopping(&r.totals(), &opts);
        if want != Some((r.iterations_used, r.stop_reason)) {
            return Err(format!(
                "run {i}: stopped at {} ({:?}) but replay gives {want:?}",
                r.iterations_used, r.stop_reason
            ));
        }
    }
    let mut replayed = 0;
    if let Some(p) = cli_log {
        let cli_opts = LatentOptions {
            max_iters: 10,
            ..LatentOptions::default()
        };
        for ((m, f), totals) in logged_totals(p)? {
            if replay_stopping(&totals, &cli_opts).is_none() {
                return Err(format!("logged run {m}/{f} does not end where the rule stops"));
            }
            replayed += 1;
        }
    }
    Ok(format!(
        "{optimized} optimized runs replay to their stop; {replayed} runs replayed from losses.csv"
    ))
}

/// Sequences around robot poses whose arm capsules overlap, so that exact
/// tracking collides.
fn colliding_sequences(model: &RobotModel, n: usize) -> Vec<DemoSequence> {
    let template = synth_demo(0, 1, 1.0 / 30.0, &HumanSkeleton::default(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = Vec::new();
    while out.len() < n {
        let a0 = angles_in_limits(model, &mut rng);
        if colliding_pairs(model, &a0).unwrap().is_empty() {
            continue;
        }
        let frames = (0..15)
            .map(|t| {
                let a: Vec<f64> = a0
                    .iter()
                    .zip(&model.joints)
                    .enumerate()
                    .map(|(j, (x, jt))| (x + 0.05 * (t as f64 * 0.3 + j as f64).sin()).clamp(jt.lower, jt.upper))
                    .collect();
                demo_from_robot_pose(model, &a, &template.frames[0]).unwrap()
            })
            .collect();
        out.push(DemoSequence {
            label: format!("crossing-{}", out.len()),
            frames,
            ..template.clone()
        });
    }
    out
}

fn criterion_7(ctx: &mut Context) -> Outcome {
    let seqs = colliding_sequences(&ctx.model, 8);
    let mut counts = Vec::new();
    for col in [0.0, ObjectiveWeights::default().col] {
        let rt = ctx.retargeter(ObjectiveWeights { col, ..ObjectiveWeights::default() });
        let rows = evaluate_motions(&rt, &seqs, Mode::LatentOpt, Init::Neural, 0, 1).map_err(|e| e.to_string())?;
        counts.push(rows.iter().map(|(r, _)| r.collisions).sum::<usize>());
        drop(rt);
        ctx.log(rows.into_iter().flat_map(|(_, r)| r));
    }
    let detail = format!(
        "{} motions: {} colliding pairs without the term, {} with it",
        seqs.len(),
        counts[0],
        counts[1]
    );
    if counts[0] >= 1 && counts[1] == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let models: Vec<RobotModel> = ["arm7x2_hand", "arm5x2"].iter().map(|n| bundled_model(n).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let point = |rng: &mut ChaCha8Rng, r: f64| Vec3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r));
    let dyadic = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            rng.gen_range(-32..=32) as f64 / 8.0,
            rng.gen_range(-32..=32) as f64 / 8.0,
            rng.gen_range(-32..=32) as f64 / 8.0,
        )
    };
    let template = template_frame();
    let mut cases = 0;
    for k in 0..10_000 {
        let m = &models[k % 2];
        let a = angles_in_limits(m, &mut rng);
        fk_orthonormal(m, &a).map_err(|e| format!("fk: {e}"))?;
        cases += 1;
        if k % 10 == 0 {
            let root = rng.gen_range(0..m.dof());
            fk_subtree_composition(m, root, &a).map_err(|e| format!("subtree: {e}"))?;
            let b = angles_in_limits(m, &mut rng);
            loss_zero_iff_match(m, &a, &b).map_err(|e| format!("zero iff match: {e}"))?;
            loss_scale_invariant(m, &template, &a, rng.gen_range(0.3..3.0)).map_err(|e| format!("scale: {e}"))?;
            cases += 3;
        }
        if k % 20 == 0 {
            graph_conv_equivariant(m, k as u64).map_err(|e| format!("graph conv: {e}"))?;
            let (na, nb) = (rng.gen_range(1..12), rng.gen_range(1..12));
            let ta: Vec<Vec3> = (0..na).map(|_| point(&mut rng, 2.0)).collect();
            let tb: Vec<Vec3> = (0..nb).map(|_| point(&mut rng, 2.0)).collect();
            frechet_bounds(&ta, &tb).map_err(|e| format!("frechet: {e}"))?;
            let da: Vec<Vec3> = (0..na).map(|_| dyadic(&mut rng)).collect();
            let db: Vec<Vec3> = (0..nb).map(|_| dyadic(&mut rng)).collect();
            frechet_translation(&da, &db, &dyadic(&mut rng)).map_err(|e| format!("translation: {e}"))?;
            let cap = |rng: &mut ChaCha8Rng| Capsule {
                a: point(rng, 1.0),
                b: point(rng, 1.0),
                radius: rng.gen_range(0.0..0.2),
            };
            capsule_symmetric(&cap(&mut rng), &cap(&mut rng)).map_err(|e| format!("capsule: {e}"))?;
            let style = if k % 40 == 0 { SynthStyle::Crossing } else { SynthStyle::Signing };
            generator_smooth(&SynthOptions {
                seed: k as u64,
                n_frames: 60,
                dt: 1.0 / 30.0,
                difficulty: rng.gen_range(0.0..=1.0),
                style,
            })
            .map_err(|e| format!("generator: {e}"))?;
            let x: Vec<f64> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            backward_linear(&x, rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))
                .map_err(|e| format!("backward: {e}"))?;
            cases += 6;
        }
    }
    timed(Duration::from_secs(300), t, format!("{cases} seeded cases"))
}

const CLI_CONFIG: &str = r#"
robot = "arm5x2"
[data.synth]
train = 3
test = 2
min_frames = 10
max_frames = 12
[train]
epochs = 3
lr = 1e-3
[latent]
max_iters = 10
[gradcheck]
configs = 4
[ablate]
archs = ["graph", "dense"]
activations = ["tanh", "relu"]
"#;

fn nretarget(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nretarget"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "nretarget {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

/// Every command once into `root`; returns the retarget loss log.
fn cli_session(root: &Path, jobs: usize) -> Result<PathBuf, String> {
    let cfg = root.join("run.toml");
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    std::fs::write(&cfg, CLI_CONFIG).map_err(|e| e.to_string())?;
    let dir = |n: &str| root.join(n).display().to_string();
    let c = cfg.display().to_string();
    let j = jobs.to_string();
    let base = ["-c", &c, "--jobs", &j];
    let with = |cmd: &str, out: &str, extra: &[&str]| -> Result<(), String> {
        let mut a = vec![cmd];
        a.extend(base);
        let o = dir(out);
        a.extend(["--out", &o]);
        a.extend(extra);
        nretarget(&a)
    };
    with("synth", "synth", &[])?;
    let data = dir("synth");
    with("train", "train", &["--data", &data])?;
    let ck = root.join("train/checkpoint.nrck").display().to_string();
    let common = ["--data", &data, "--checkpoint", &ck];
    with("retarget", "retarget", &common)?;
    with("retarget", "feedforward", &[&common[..], &["--mode", "feedforward"]].concat())?;
    with("eval", "eval", &common)?;
    with("compare-init", "compare", &common)?;
    with("ablate", "ablate", &["--data", &data])?;
    with("gradcheck", "gradcheck", &[])?;
    Ok(root.join("retarget/losses.csv"))
}

/// Relative paths of every output except wall-clock timings.
fn outputs(root: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(base, &p, out);
            } else if p.file_name().is_some_and(|n| n != "timing.csv" && n != "run.toml") {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut v = Vec::new();
    walk(root, root, &mut v);
    v.sort();
    v
}

fn criterion_9(scratch: &Path) -> (Outcome, Option<PathBuf>) {
    let t = Instant::now();
    let (a, b) = (scratch.join("first"), scratch.join("second"));
    let run = || -> Result<(PathBuf, usize, usize), String> {
        let log = cli_session(&a, 1)?;
        cli_session(&b, 2)?;
        let (fa, fb) = (outputs(&a), outputs(&b));
        if fa != fb {
            return Err(format!("output sets differ: {fa:?} vs {fb:?}"));
        }
        let mut csvs = 0;
        for f in &fa {
            let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
            // Manifest and resolved config record paths naming the run directory.
            if f.ends_with("manifest.toml") || f.ends_with("config.toml") {
                continue;
            }
            if x != y {
                return Err(format!("{} differs between runs", f.display()));
            }
            csvs += usize::from(f.extension().is_some_and(|e| e == "csv"));
        }
        Ok((log, fa.len(), csvs))
    };
    match run() {
        Ok((log, files, csvs)) => (
            timed(
                Duration::from_secs(600),
                t,
                format!("7 commands, jobs 1 vs 2: {files} files identical ({csvs} CSVs)"),
            ),
            Some(log),
        ),
        Err(e) => (Err(e), None),
    }
}

fn report(n: usize, outcome: &Outcome) -> bool {
    match outcome {
        Ok(d) => println!("criterion {n}: PASS ({d})"),
        Err(d) => println!("criterion {n}: FAIL ({d})"),
    }
    outcome.is_ok()
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut results = Vec::new();
    results.push((1, criterion_1()));
    results.push((3, criterion_3()));
    results.push((8, criterion_8()));
    let (c9, cli_log) = criterion_9(scratch.path());
    results.push((9, c9));
    let mut ctx = Context::build();
    results.push((4, criterion_4(&mut ctx)));
    results.push((5, criterion_5(&mut ctx)));
    results.push((7, criterion_7(&mut ctx)));
    results.push((2, criterion_2(&mut ctx)));
    results.push((6, criterion_6(&ctx, cli_log.as_deref())));
    results.sort_by_key(|r| r.0);
    let mut all = true;
    for (n, o) in &results {
        all &= report(*n, o);
    }
    if !all {
        std::process::exit(1);
    }
}
