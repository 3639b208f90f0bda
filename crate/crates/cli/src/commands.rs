use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use motionflow::camera::{camera_flow, plucker_embed, PluckerConvention};
use motionflow::codec::{decode, encode, read_latent, write_latent};
use motionflow::diffusion::{curve_endpoints, mode_purity, sample_many, train, two_mode_latents, AdamConfig, TrainConfig};
use motionflow::flow::add_flow_noise;
use motionflow::formats::{read_flow_dir, read_flow_files, write_flow_dir, AnnotationFile, BundleFile, TrajectoryFile};
use motionflow::metrics::{rotation_error, sample_trajectory, translation_error, PoseTrajectory, TrajectoryMode};
use motionflow::nn::{load_checkpoint, save_checkpoint, DenoiserDims};
use motionflow::spectral::{flow_flicker, SpectralWeights};
use motionflow::unify::{conflict_report, unify, CompositionMode, ControlBundle};
use motionflow::{FlowSequence, ToyDenoiser};
use serde::Serialize;

use crate::args::{
    CameraFlowArgs, Cli, CodecCommand, Command, DragFlowArgs, EvalTrajArgs, FilterArg, ServeArgs, StabilizeArgs,
    ToySampleArgs, ToyTrainArgs, UnifyArgs, VizArgs,
};
use crate::config::{Config, DatasetSpec, DEFAULT_PORT};
use crate::error::CliError;
use crate::pipeline;

type Outcome = Result<(), CliError>;

pub fn dispatch(cli: Cli) -> Outcome {
    let cfg = Config::load_or_default(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::CameraFlow(a) => camera_flow_cmd(a, seed),
        Command::DragFlow(a) => drag_flow_cmd(a, &cfg),
        Command::Unify(a) => unify_cmd(a, &cfg),
        Command::Stabilize(a) => stabilize_cmd(a),
        Command::Codec(c) => codec_cmd(c),
        Command::ToyTrain(a) => toy_train_cmd(a, &cfg, seed),
        Command::ToySample(a) => toy_sample_cmd(a, &cfg, seed),
        Command::EvalTraj(a) => eval_traj_cmd(a),
        Command::Viz(a) => viz_cmd(a),
        Command::Serve(a) => serve_cmd(a, cfg),
    }
}

fn write_frames(seq: &FlowSequence, out: &Path) -> Outcome {
    let paths = write_flow_dir(seq, out)?;
    println!("wrote {} frames ({}x{}) to {}", paths.len(), seq.width(), seq.height(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct PluckerFile<'a> {
    convention: &'a str,
    frames: usize,
    height: usize,
    width: usize,
    /// Layout `6 × frames × height × width`, moment first.
    data: &'a [f64],
}

fn camera_flow_cmd(a: CameraFlowArgs, seed: u64) -> Outcome {
    let traj = TrajectoryFile::load(&a.trajectory)?.to_trajectory::<f64>()?;
    let depth = a.depth.resolve(a.width, a.height, None)?;
    let flow = camera_flow(&traj, &depth, a.width, a.height)?;
    let flow = add_flow_noise(&flow, a.noise_sigma, seed)?;
    if let Some(path) = &a.plucker {
        let vol = plucker_embed(&traj, a.width, a.height, a.plucker_convention)?;
        let doc = PluckerFile {
            convention: match a.plucker_convention {
                PluckerConvention::Literal => "literal",
                PluckerConvention::Conventional => "conventional",
            },
            frames: vol.frames,
            height: vol.height,
            width: vol.width,
            data: &vol.data,
        };
        fs::write(path, serde_json::to_vec(&doc).map_err(motionflow::Error::from)?)?;
    }
    write_frames(&flow, &a.out)
}

fn drag_flow_cmd(a: DragFlowArgs, cfg: &Config) -> Outcome {
    let ann = AnnotationFile::load(&a.annotation)?.to_annotation::<f64>()?;
    let mut bundle = ControlBundle::new(ann.width, ann.height, ann.num_frames);
    bundle.drags = Some(ann);
    bundle.densify_sigma = a.sigma.or(cfg.sigma);
    write_frames(&unify(&bundle, CompositionMode::Add)?, &a.out)
}

fn unify_cmd(a: UnifyArgs, cfg: &Config) -> Outcome {
    let (file, base) = BundleFile::load(&a.bundle)?;
    let mut bundle = file.to_bundle::<f64>(&base)?;
    if bundle.densify_sigma.is_none() {
        bundle.densify_sigma = cfg.sigma;
    }
    let mode = a.mode.or(file.mode).unwrap_or_default();
    let flow = unify(&bundle, mode)?;
    if let Some(path) = &a.report {
        let report = conflict_report(&bundle)?;
        let mut csv = String::from("frame,cosine\n");
        for (i, c) in report.iter().enumerate() {
            writeln!(csv, "{},{c}", i + 1).expect("string write");
        }
        fs::write(path, csv)?;
    }
    write_frames(&flow, &a.out)
}

fn read_input(paths: &[PathBuf]) -> Result<FlowSequence, CliError> {
    Ok(match paths {
        [dir] if dir.is_dir() => read_flow_dir(dir)?,
        files => read_flow_files(files)?,
    })
}

fn stabilize_cmd(a: StabilizeArgs) -> Outcome {
    let seq = read_input(&a.input)?;
    let weights = match &a.filter {
        FilterArg::Named(f) => f.weights(seq.len())?,
        FilterArg::File(p) => {
            let values: Vec<f64> = motionflow::formats::read_json(p)?;
            SpectralWeights::new(values)?
        }
    };
    let out = pipeline::stabilize(&seq, &weights)?;
    let flicker = |s: &FlowSequence| flow_flicker(s).map_or_else(|_| "n/a".to_string(), |v| v.to_string());
    println!("flicker before: {}", flicker(&seq));
    println!("flicker after: {}", flicker(&out));
    write_frames(&out, &a.out)
}

fn codec_cmd(c: CodecCommand) -> Outcome {
    match c {
        CodecCommand::Encode { input, out } => {
            let seq = read_flow_dir::<f64>(&input)?;
            let lat = encode(&seq)?;
            write_latent(&lat, &out)?;
            let s = lat.shape();
            println!(
                "encoded {} frames of {}x{} into {}x{}x{} cells",
                s.frames, s.width, s.height, s.t_blocks, s.h_blocks, s.w_blocks
            );
            Ok(())
        }
        CodecCommand::Decode { latent, out } => write_frames(&decode(&read_latent::<f64>(&latent)?)?, &out),
    }
}

fn dataset(cfg: &Config) -> Result<Vec<Vec<f64>>, CliError> {
    let toy = &cfg.toy;
    Ok(match &toy.dataset {
        DatasetSpec::TwoMode => two_mode_latents(toy.frames, toy.width, toy.height)?.to_vec(),
        DatasetSpec::Flows(dirs) => dirs
            .iter()
            .map(|d| Ok(encode(&read_flow_dir::<f64>(cfg.resolve(d))?)?.into_values()))
            .collect::<Result<Vec<_>, CliError>>()?,
    })
}

fn toy_train_cmd(a: ToyTrainArgs, cfg: &Config, seed: u64) -> Outcome {
    let data = dataset(cfg)?;
    let dim = data.first().map_or(0, Vec::len);
    if data.iter().any(|x| x.len() != dim) {
        return Err(motionflow::Error::Dimension("dataset latents differ in size".into()).into());
    }
    let toy = &cfg.toy;
    let dims = DenoiserDims::new(dim, toy.hidden, toy.time_dim);
    let train_cfg = TrainConfig {
        steps: a.steps.unwrap_or(toy.steps),
        batch_size: toy.batch_size,
        seed,
        adam: AdamConfig {
            lr: toy.lr,
            ..AdamConfig::default()
        },
    };
    let mut model = ToyDenoiser::init(dims, seed)?;
    let curve = train(&mut model, &data, None, &cfg.schedule.build()?, &train_cfg)?;
    save_checkpoint(&model, seed, train_cfg.steps, &a.out)?;
    if let Some(path) = &a.curve {
        let mut csv = String::from("step,loss\n");
        for (i, l) in curve.iter().enumerate() {
            writeln!(csv, "{i},{l}").expect("string write");
        }
        fs::write(path, csv)?;
    }
    if let (Some(&first), Some((_, last))) = (curve.first(), curve_endpoints(&curve, 100)) {
        println!("initial loss: {first}");
        println!("final loss (mean of last {}): {last}", curve.len().min(100));
        println!("ratio: {}", last / first);
    }
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

fn toy_sample_cmd(a: ToySampleArgs, cfg: &Config, seed: u64) -> Outcome {
    let (model, _) = load_checkpoint::<f64>(&a.checkpoint)?;
    let samples = sample_many(&model, &cfg.schedule.build()?, a.count, seed, None)?;
    let mut csv = String::new();
    for s in &samples {
        let row: Vec<String> = s.iter().map(f64::to_string).collect();
        writeln!(csv, "{}", row.join(",")).expect("string write");
    }
    fs::write(&a.out, csv)?;
    let modes = dataset(cfg)?;
    if modes.first().is_some_and(|m| m.len() == model.dims().data_dim) {
        println!("mode purity (L2 < 0.5): {}", mode_purity(&samples, &modes, 0.5));
    }
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn eval_traj_cmd(a: EvalTrajArgs) -> Outcome {
    let load = |p: &Path| -> Result<PoseTrajectory<f64>, CliError> {
        Ok(PoseTrajectory::from_camera(&TrajectoryFile::load(p)?.to_trajectory()?))
    };
    let gt = load(&a.gt)?;
    let modes: Vec<TrajectoryMode> = match a.mode {
        Some(m) => vec![m],
        None => vec![TrajectoryMode::Basic, TrajectoryMode::Difficult],
    };
    let mut csv = String::from("method");
    for m in &modes {
        let tag = format!("{m:?}").to_lowercase();
        write!(csv, ",{tag}_t_err,{tag}_r_err").expect("string write");
    }
    csv.push('\n');
    for path in &a.pred {
        let pred = load(path)?;
        if pred.len() != gt.len() {
            return Err(motionflow::Error::Dimension(format!(
                "{} has {} poses, ground truth has {}",
                path.display(),
                pred.len(),
                gt.len()
            ))
            .into());
        }
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        csv.push_str(&name);
        let mut line = name.clone();
        for &m in &modes {
            let (p, g) = (sample_trajectory(&pred, m, a.clip_len)?, sample_trajectory(&gt, m, a.clip_len)?);
            let (t, r) = (translation_error(&p, &g)?, rotation_error(&p, &g)?);
            write!(csv, ",{t},{r}").expect("string write");
            write!(line, "  {m:?} T-Err {t:.4} R-Err {r:.4}").expect("string write");
        }
        csv.push('\n');
        println!("{line}");
    }
    fs::write(&a.out, csv)?;
    Ok(())
}

fn viz_cmd(a: VizArgs) -> Outcome {
    let seq = read_flow_dir::<f64>(&a.input)?;
    fs::create_dir_all(&a.out)?;
    for (i, png) in pipeline::flow_pngs(&seq, a.max_magnitude)?.iter().enumerate() {
        fs::write(a.out.join(format!("flow_{:04}.png", i + 1)), png)?;
    }
    println!("wrote {} images to {}", seq.len(), a.out.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs, cfg: Config) -> Outcome {
    let port = a.port.or(cfg.port).unwrap_or(DEFAULT_PORT);
    let addr = format!("{}:{port}", a.host);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, crate::service::router(crate::service::AppState::from_config(&cfg))).await
    })?;
    Ok(())
}
