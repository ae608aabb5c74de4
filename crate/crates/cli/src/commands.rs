use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use neural_retarget::dataio::{load_demo, load_robot, make_dataset, save_demo, DemoFrame, DemoSequence};
use neural_retarget::gradsuite::{run_suite, SuiteOptions};
use neural_retarget::graphnet::{load_checkpoint, save_checkpoint, Architecture, NetConfig, Networks};
use neural_retarget::kinematics::{bundled_model, RobotModel, BUNDLED_MODELS};
use neural_retarget::retarget::{
    compare_init, init_variants, latent_statistics, motion_report, parallel_map, train, Init, Mode, MotionReport,
    OptimRun, Retargeter,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Output directory bookkeeping shared by every command.
pub struct Run {
    pub cfg: RunConfig,
    command: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    timing: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
}

impl Run {
    pub fn new(command: &'static str, cfg: RunConfig) -> Result<Run, CliError> {
        std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(format!("{}: {e}", cfg.out.display())))?;
        Ok(Run {
            cfg,
            command,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timing: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn writer(&mut self, name: &str) -> Result<csv::Writer<std::fs::File>, CliError> {
        let p = self.path(name);
        self.outputs.push(name.to_string());
        csv::Writer::from_path(&p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))
    }

    fn time(&mut self, stage: impl Into<String>, since: Instant) {
        self.timing.push((stage.into(), since.elapsed().as_secs_f64()));
    }

    /// Write the manifest, the resolved config and the wall-clock timings.
    pub fn finish(mut self) -> Result<(), CliError> {
        let cfg_path = self.path("config.toml");
        write_file(&cfg_path, self.cfg.to_toml().as_bytes())?;
        // Timings vary run to run, so they live apart from the result CSVs.
        let mut w = csv::Writer::from_path(self.path("timing.csv")).map_err(io_err)?;
        w.write_record(["stage", "seconds"]).map_err(io_err)?;
        for (s, t) in &self.timing {
            w.write_record([s.as_str(), &t.to_string()]).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        self.outputs.sort();
        let m = Manifest {
            command: self.command,
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            versions: BTreeMap::from([
                ("nretarget", env!("CARGO_PKG_VERSION")),
                ("neural-retarget", neural_retarget::VERSION),
            ]),
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let text = toml::to_string(&m).map_err(|e| CliError::io(e.to_string()))?;
        write_file(&self.path("manifest.toml"), text.as_bytes())
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::io(e.to_string())
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(p, bytes).map_err(|e| CliError::io(format!("{}: {e}", p.display())))
}

fn load_model(run: &mut Run) -> Result<RobotModel, CliError> {
    let r = run.cfg.robot.clone();
    if BUNDLED_MODELS.contains(&r.as_str()) {
        return Ok(bundled_model(&r)?);
    }
    let p = PathBuf::from(&r);
    run.record_input(&p)?;
    Ok(load_robot(&p)?)
}

fn load_nets(run: &mut Run, model: &RobotModel) -> Result<Networks, CliError> {
    let p = run
        .cfg
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::config("checkpoint: required for this command"))?;
    run.record_input(&p)?;
    Ok(load_checkpoint(&p, model)?)
}

/// Every `k`-th frame; the step between kept frames becomes `k * dt`.
pub fn subsample(seq: &DemoSequence, k: usize) -> DemoSequence {
    DemoSequence {
        frames: seq.frames.iter().step_by(k).cloned().collect(),
        dt: seq.dt * k as f64,
        ..seq.clone()
    }
}

fn read_split(run: &mut Run, split: &str) -> Result<Vec<DemoSequence>, CliError> {
    match run.cfg.data.dir.clone() {
        Some(dir) => {
            let d = dir.join(split);
            let mut files: Vec<PathBuf> = std::fs::read_dir(&d)
                .map_err(|e| CliError::io(format!("{}: {e}", d.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "demo"))
                .collect();
            files.sort();
            let mut out = Vec::with_capacity(files.len());
            for f in files {
                run.record_input(&f)?;
                out.push(load_demo(&f)?);
            }
            Ok(out)
        }
        None => {
            let ds = make_dataset(&run.cfg.data.synth, &run.cfg.data.skeleton)?;
            Ok(if split == "train" { ds.train } else { ds.test })
        }
    }
}

fn train_frames(run: &mut Run) -> Result<Vec<DemoFrame>, CliError> {
    let k = run.cfg.data.train_stride;
    let frames: Vec<DemoFrame> = read_split(run, "train")?
        .iter()
        .flat_map(|s| subsample(s, k).frames)
        .collect();
    if frames.is_empty() {
        return Err(CliError::config("data: training split is empty"));
    }
    Ok(frames)
}

fn test_sequences(run: &mut Run) -> Result<Vec<DemoSequence>, CliError> {
    let k = run.cfg.data.test_stride;
    let mut seqs = read_split(run, "test")?;
    if let Some(n) = run.cfg.data.max_test {
        seqs.truncate(n);
    }
    Ok(seqs.iter().map(|s| subsample(s, k)).collect())
}

fn retargeter<'a>(run: &Run, nets: &'a Networks, model: &'a RobotModel) -> Result<Retargeter<'a>, CliError> {
    Ok(Retargeter::new(nets, model, run.cfg.weights, run.cfg.latent.clone())?)
}

pub fn cmd_synth(mut run: Run) -> Result<(), CliError> {
    let t = Instant::now();
    let ds = make_dataset(&run.cfg.data.synth, &run.cfg.data.skeleton)?;
    for (split, seqs) in [("train", &ds.train), ("test", &ds.test)] {
        let dir = run.path(split);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        for (i, s) in seqs.iter().enumerate() {
            let name = format!("{split}/{split}_{i:03}.demo");
            save_demo(s, run.path(&name))?;
            run.outputs.push(name);
        }
    }
    let mut w = run.writer("sequences.csv")?;
    w.write_record(["split", "index", "label", "frames", "dt"]).map_err(io_err)?;
    for (split, seqs) in [("train", &ds.train), ("test", &ds.test)] {
        for (i, s) in seqs.iter().enumerate() {
            w.write_record([split, &i.to_string(), &s.label, &s.len().to_string(), &s.dt.to_string()])
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    eprintln!("wrote {} train and {} test sequences", ds.train.len(), ds.test.len());
    run.time("synth", t);
    run.finish()
}

pub fn cmd_train(mut run: Run) -> Result<(), CliError> {
    let model = load_model(&mut run)?;
    let t = Instant::now();
    let frames = train_frames(&mut run)?;
    run.time("load", t);
    let t = Instant::now();
    let mut nets = Networks::new(&model, run.cfg.net, run.cfg.seed)?;
    let opts = neural_retarget::retarget::TrainOptions {
        seed: run.cfg.seed,
        ..run.cfg.train.clone()
    };
    eprintln!("training on {} frames", frames.len());
    let report = train(&mut nets, &model, &frames, &run.cfg.weights, &opts, |e, l| {
        eprintln!("epoch {e} loss {l}");
    })?;
    run.time("train", t);
    let ck = "checkpoint.nrck";
    save_checkpoint(&nets, run.path(ck))?;
    run.outputs.push(ck.into());
    let mut w = run.writer("loss_curve.csv")?;
    w.write_record(["epoch", "loss"]).map_err(io_err)?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()]).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    eprintln!(
        "trained {} epochs ({} steps){}",
        report.epoch_losses.len(),
        report.steps,
        if report.early_exit { ", loss plateaued" } else { "" }
    );
    run.finish()
}

fn loss_row(motion: &str, frame: usize, it: usize, b: &neural_retarget::objective::LossBreakdown) -> Vec<String> {
    let mut r = vec![motion.to_string(), frame.to_string(), it.to_string()];
    r.extend([b.ee, b.ori, b.elb, b.fin, b.col, b.reg, b.total].iter().map(|x| x.to_string()));
    r
}

const LOSS_HEADER: [&str; 10] = ["motion", "frame", "iteration", "ee", "ori", "elb", "fin", "col", "reg", "total"];

/// Retarget every motion, timing each, in motion order.
fn retarget_all(
    rt: &Retargeter,
    seqs: &[DemoSequence],
    mode: Mode,
    init: Init,
    seed: u64,
    warm: bool,
    jobs: usize,
) -> Result<Vec<(Vec<OptimRun>, f64)>, CliError> {
    Ok(parallel_map(seqs.len(), jobs, |i| {
        let t = Instant::now();
        let runs = rt.retarget_sequence(&seqs[i], mode, init, neural_retarget::retarget::frame_seed(seed, i), warm, 1)?;
        Ok((runs, t.elapsed().as_secs_f64()))
    })?)
}

pub fn cmd_retarget(mut run: Run, demo: Option<PathBuf>) -> Result<(), CliError> {
    let model = load_model(&mut run)?;
    let nets = load_nets(&mut run, &model)?;
    let seqs = match demo {
        Some(p) => {
            run.record_input(&p)?;
            vec![load_demo(&p)?]
        }
        None => test_sequences(&mut run)?,
    };
    let rt = retargeter(&run, &nets, &model)?;
    let (mode, init) = (run.cfg.infer.mode, run.cfg.infer.init());
    let all = retarget_all(&rt, &seqs, mode, init, run.cfg.seed, run.cfg.infer.warm_start, run.cfg.jobs)?;

    let mut traj = run.writer("trajectory.csv")?;
    let mut header = vec!["motion".to_string(), "frame".to_string()];
    header.extend(model.joints.iter().map(|j| j.name.clone()));
    traj.write_record(&header).map_err(io_err)?;
    let mut losses = run.writer("losses.csv")?;
    losses.write_record(LOSS_HEADER).map_err(io_err)?;
    let mut frames = run.writer("frames.csv")?;
    frames
        .write_record([
            "motion",
            "frame",
            "iterations_used",
            "best_iteration",
            "stop_reason",
            "initial_total",
            "final_total",
            "within_limits",
        ])
        .map_err(io_err)?;
    let mut outside = 0;
    for (seq, (runs, secs)) in seqs.iter().zip(&all) {
        for (f, r) in runs.iter().enumerate() {
            let mut row = vec![seq.label.clone(), f.to_string()];
            row.extend(r.angles.iter().map(|a| a.to_string()));
            traj.write_record(&row).map_err(io_err)?;
            for (it, b) in r.losses.iter().enumerate() {
                losses.write_record(loss_row(&seq.label, f, it, b)).map_err(io_err)?;
            }
            let ok = model.within_limits(&r.angles);
            outside += usize::from(!ok);
            frames
                .write_record([
                    seq.label.clone(),
                    f.to_string(),
                    r.iterations_used.to_string(),
                    r.best_iteration.to_string(),
                    r.stop_reason.name().to_string(),
                    r.initial().total.to_string(),
                    r.best().total.to_string(),
                    ok.to_string(),
                ])
                .map_err(io_err)?;
        }
        run.timing.push((format!("retarget:{}", seq.label), *secs));
    }
    for w in [&mut traj, &mut losses, &mut frames] {
        w.flush().map_err(io_err)?;
    }
    eprintln!(
        "retargeted {} motions, {} frames outside limits",
        seqs.len(),
        outside
    );
    run.finish()
}

/// Per-motion evaluation rows plus their wall times.
fn evaluate(
    run: &Run,
    rt: &Retargeter,
    seqs: &[DemoSequence],
    mode: Mode,
    init: Init,
) -> Result<Vec<(MotionReport, f64)>, CliError> {
    let all = retarget_all(rt, seqs, mode, init, run.cfg.seed, run.cfg.infer.warm_start, run.cfg.jobs)?;
    seqs.iter()
        .zip(all)
        .map(|(s, (runs, secs))| Ok((motion_report(rt, s, &runs)?, secs)))
        .collect()
}

pub fn cmd_eval(mut run: Run) -> Result<(), CliError> {
    let model = load_model(&mut run)?;
    let nets = load_nets(&mut run, &model)?;
    let seqs = test_sequences(&mut run)?;
    let rt = retargeter(&run, &nets, &model)?;
    let rows = evaluate(&run, &rt, &seqs, run.cfg.infer.mode, run.cfg.infer.init())?;
    let mut w = run.writer("report.csv")?;
    for (r, _) in &rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    for (r, secs) in &rows {
        run.timing.push((format!("eval:{}", r.label), *secs));
    }
    let n = rows.len().max(1) as f64;
    eprintln!(
        "{} motions: mean frechet {}, velocity {}, acceleration {}",
        rows.len(),
        rows.iter().map(|r| r.0.frechet).sum::<f64>() / n,
        rows.iter().map(|r| r.0.velocity).sum::<f64>() / n,
        rows.iter().map(|r| r.0.acceleration).sum::<f64>() / n,
    );
    run.finish()
}

pub fn cmd_compare_init(mut run: Run) -> Result<(), CliError> {
    let model = load_model(&mut run)?;
    let nets = load_nets(&mut run, &model)?;
    let train = train_frames(&mut run)?;
    let (mean, std) = latent_statistics(&nets, &train)?;
    let seqs = test_sequences(&mut run)?;
    let frames: Vec<&DemoFrame> = seqs.iter().flat_map(|s| &s.frames).collect();
    let rt = retargeter(&run, &nets, &model)?;
    let inits = init_variants(mean, std);
    let t = Instant::now();
    let cmp = compare_init(&rt, &frames, &inits, run.cfg.seed, run.cfg.jobs)?;
    run.time("compare_init", t);

    let mut w = run.writer("curves.csv")?;
    let mut header = vec!["iteration".to_string()];
    header.extend(cmp.curves.iter().map(|c| c.label.clone()));
    w.write_record(&header).map_err(io_err)?;
    for k in 0..=run.cfg.latent.max_iters {
        let mut row = vec![k.to_string()];
        row.extend(cmp.curves.iter().map(|c| c.mean_best[k].to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    let mut w = run.writer("summary.csv")?;
    w.write_record(["label", "initial", "final", "mean_iterations", "mean_best_iteration"])
        .map_err(io_err)?;
    for c in &cmp.curves {
        w.write_record([
            c.label.clone(),
            c.mean_best[0].to_string(),
            c.mean_best[c.mean_best.len() - 1].to_string(),
            c.mean_iterations.to_string(),
            c.mean_best_iteration.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    let mut w = run.writer("reach.csv")?;
    for r in &cmp.reach {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    let mut w = run.writer("latent_stats.csv")?;
    w.write_record(["mean", "std"]).map_err(io_err)?;
    w.write_record([mean.to_string(), std.to_string()]).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    eprintln!("compared {} starts on {} frames", inits.len(), frames.len());
    run.finish()
}

#[derive(Serialize)]
struct AblationRow {
    arch: &'static str,
    activation: &'static str,
    mode: &'static str,
    motions: usize,
    frechet: f64,
    velocity: f64,
    acceleration: f64,
    mean_final: f64,
    mean_iterations: f64,
    train_loss: f64,
}

pub fn cmd_ablate(mut run: Run) -> Result<(), CliError> {
    let model = load_model(&mut run)?;
    let frames = train_frames(&mut run)?;
    let seqs = test_sequences(&mut run)?;
    let ab = run.cfg.ablate.clone();
    if ab.archs.is_empty() || ab.activations.is_empty() || ab.modes.is_empty() {
        return Err(CliError::config("ablate: archs, activations and modes must be non-empty"));
    }
    let opts = neural_retarget::retarget::TrainOptions {
        seed: run.cfg.seed,
        ..run.cfg.train.clone()
    };
    let mut rows = Vec::new();
    for &arch in &ab.archs {
        for &act in &ab.activations {
            let config = match arch {
                Architecture::Graph => NetConfig {
                    arch,
                    activation: act,
                    ..run.cfg.net
                },
                Architecture::Dense => NetConfig {
                    activation: act,
                    bound: run.cfg.net.bound,
                    ..NetConfig::dense()
                },
            };
            let t = Instant::now();
            let mut nets = Networks::new(&model, config, run.cfg.seed)?;
            eprintln!("training {} / {}", arch.name(), act.name());
            let rep = train(&mut nets, &model, &frames, &run.cfg.weights, &opts, |_, _| {})?;
            run.time(format!("train:{}:{}", arch.name(), act.name()), t);
            let rt = retargeter(&run, &nets, &model)?;
            for &mode in &ab.modes {
                let t = Instant::now();
                let ev = evaluate(&run, &rt, &seqs, mode, Init::Neural)?;
                run.time(format!("eval:{}:{}:{}", arch.name(), act.name(), mode.name()), t);
                let reports: Vec<MotionReport> = ev.into_iter().map(|(r, _)| r).collect();
                let mean = |f: fn(&MotionReport) -> f64| neural_retarget::retarget::mean_of(&reports, f);
                rows.push(AblationRow {
                    arch: arch.name(),
                    activation: act.name(),
                    mode: mode.name(),
                    motions: reports.len(),
                    frechet: mean(|r| r.frechet),
                    velocity: mean(|r| r.velocity),
                    acceleration: mean(|r| r.acceleration),
                    mean_final: mean(|r| r.mean_final),
                    mean_iterations: mean(|r| r.mean_iterations),
                    train_loss: rep.epoch_losses.last().copied().unwrap_or(f64::NAN),
                });
            }
        }
    }
    let mut w = run.writer("ablation.csv")?;
    for r in &rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    eprintln!("{} ablation rows", rows.len());
    run.finish()
}

pub fn cmd_gradcheck(mut run: Run, components: &[String], fault: Option<(neural_retarget::autodiff::OpKind, f64)>) -> Result<(), CliError> {
    let opts = SuiteOptions {
        fault,
        ..run.cfg.gradcheck.clone()
    };
    let t = Instant::now();
    let reports = run_suite(&opts, components)?;
    run.time("gradcheck", t);
    let mut w = run.writer("gradcheck.csv")?;
    for r in &reports {
        w.serialize(r).map_err(io_err)?;
        println!(
            "{:<12} {}  max_rel_error {:.3e}  checked {}  skipped {}",
            r.component,
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_error,
            r.checked,
            r.skipped
        );
    }
    w.flush().map_err(io_err)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.component.as_str()).collect();
    run.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}
