use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{ensure, Context};
use clap::ValueEnum;
use lps_core::agm::back_projection;
use lps_core::fewshot::{OutputMode, StreamMethod, StreamProcessor};
use lps_core::harness::{
    exp1_json, exp2_json, generate_slow_stream, generate_three_level_truth, incoherence_mu, run_exp1, run_exp2,
    run_stream_experiment, stream_json, write_curves_csv, write_exp1_csv, write_json, write_stream_csv,
    write_trials_csv, BurstSpec, Exp1Config, Exp2Config, Sensing, SlowStreamSpec, StreamExperimentConfig, ThreeLevelSpec,
};
use lps_core::hierarchical::{reconstruct_lps_batch, reconstruct_lr_batch};
use lps_core::operators::{make_pseudo_radial_masks, CoilMaps, SamplingMask};
use lps_core::rng::stream_rng;
use lps_core::solvers::{estimate_rank, leading_svd, rank_cap, top_r_svd};
use lps_core::{scale_invariant_error, ComplexMatrix, RankCapRule, ReconConfig};
use rand::seq::index::sample;
use serde_json::json;

use crate::args::*;
use crate::config::parse_config;
use crate::container::{matrix_from_bytes, matrix_to_bytes, Dataset, Layout};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        ensure!(t > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate { which } => match which {
            Simulate::Exp1(a) => simulate_exp1(&a),
            Simulate::Exp2(a) => simulate_exp2(&a),
            Simulate::Stream(a) => simulate_stream(&a),
            Simulate::Dataset(a) => simulate_dataset(&a),
        },
        Command::Reconstruct(a) => reconstruct(&a),
        Command::Inspect(a) => inspect(&a),
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn out_dir(p: &Path) -> anyhow::Result<&Path> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    Ok(p)
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ReconConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text).with_context(|| format!("in config {}", p.display()))
        }
        None => Ok(ReconConfig::default()),
    }
}

fn simulate_exp1(a: &Exp1Args) -> anyhow::Result<()> {
    let dir = out_dir(&a.out.out)?;
    let c = Exp1Config { n: a.n, m: a.m, magnitudes: a.magnitudes.clone(), trials: a.trials, seed: a.out.seed, ..Exp1Config::default() };
    let rows = run_exp1(&c)?;
    write_exp1_csv(create(dir, "exp1.csv")?, &rows, a.out.timings)?;
    write_json(create(dir, "exp1.json")?, &exp1_json(&rows, a.out.timings)?)?;
    for row in &rows {
        for s in [&row.lps, &row.lr] {
            write_trials_csv(create(dir, &format!("exp1_trials_{}_a{}.csv", s.solver, row.magnitude))?, s, a.out.timings)?;
        }
        println!("|S|_inf = {}: lps init nrmse {:.4e}, lr init nrmse {:.4e}", row.magnitude, row.lps.mean_nrmse, row.lr.mean_nrmse);
    }
    Ok(())
}

fn simulate_exp2(a: &Exp2Args) -> anyhow::Result<()> {
    let dir = out_dir(&a.out.out)?;
    let c = Exp2Config {
        n: a.n,
        m_values: a.m_values.clone(),
        lr_m_values: a.lr_m_values.clone(),
        trials: a.trials,
        tau: a.tau,
        seed: a.out.seed,
        ..Exp2Config::default()
    };
    let curves = run_exp2(&c)?;
    write_curves_csv(create(dir, "exp2_curves.csv")?, &curves)?;
    write_json(create(dir, "exp2.json")?, &exp2_json(&curves, a.out.timings)?)?;
    for curve in &curves {
        write_trials_csv(create(dir, &format!("exp2_trials_{}.csv", curve.label))?, &curve.summary, a.out.timings)?;
        println!("{}: mean final nrmse {:.3e} after {:.1} iterations", curve.label, curve.summary.mean_nrmse, curve.summary.mean_iterations);
    }
    Ok(())
}

fn bursts(fraction: f64) -> anyhow::Result<Option<BurstSpec>> {
    ensure!((0.0..=1.0).contains(&fraction), "--burst-fraction must lie in [0, 1]");
    Ok((fraction > 0.0).then(|| BurstSpec { frame_fraction: fraction, ..BurstSpec::default() }))
}

fn simulate_stream(a: &StreamArgs) -> anyhow::Result<()> {
    let dir = out_dir(&a.out.out)?;
    let g = &a.grid;
    let mut stream = SlowStreamSpec::new(g.nx * g.ny, a.frames, g.rank, a.alpha, a.out.seed);
    stream.bursts = bursts(a.burst_fraction)?;
    let recon = ReconConfig { alpha: a.alpha, ..load_config(a.config.as_deref())? };
    let c = StreamExperimentConfig {
        stream,
        sensing: Sensing::Radial { nx: g.nx, ny: g.ny, coils: g.coils, lines: g.lines },
        recon,
        methods: vec![StreamMethod::FsLps, StreamMethod::FsLr],
        concurrent_updates: true,
    };
    let exp = run_stream_experiment(&c)?;
    write_stream_csv(create(dir, "stream_frames.csv")?, &exp, a.out.timings)?;
    write_json(create(dir, "stream.json")?, &stream_json(&exp, a.out.timings)?)?;
    for r in &exp.results {
        println!(
            "{:?}: mean low-latency error {:.4e}, burst frames {:.4e}",
            r.method,
            r.mean_low_latency_error().unwrap_or(f64::NAN),
            r.mean_burst_error().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

/// `lines` full readout rows per frame: the center row plus random others.
pub fn cartesian_masks(nx: usize, ny: usize, q: usize, lines: usize, seed: u64) -> anyhow::Result<Vec<SamplingMask>> {
    ensure!(lines >= 1, "at least one line per frame");
    let lines = lines.min(nx);
    (0..q)
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let center = nx / 2;
            let mut rows: Vec<usize> = sample(&mut rng, nx - 1, lines - 1).into_iter().map(|i| if i >= center { i + 1 } else { i }).collect();
            rows.push(center);
            rows.sort_unstable();
            let idx = rows.iter().flat_map(|&x| (0..ny).map(move |y| (x as u32, y as u32))).collect();
            Ok(SamplingMask::new(k, idx, (nx, ny))?)
        })
        .collect()
}

fn simulate_dataset(a: &DatasetArgs) -> anyhow::Result<()> {
    let dir = out_dir(&a.out.out)?;
    let g = &a.grid;
    let (n, q, seed) = (g.nx * g.ny, a.frames, a.out.seed);
    let truth = match a.kind {
        DatasetKind::ThreeLevel => {
            ensure!(a.burst_fraction == 0.0, "--burst-fraction applies to --kind stream");
            generate_three_level_truth(&ThreeLevelSpec::new(n, q, g.rank, seed))?.z
        }
        DatasetKind::Stream => {
            let mut spec = SlowStreamSpec::new(n, q, g.rank, a.alpha, seed);
            spec.bursts = bursts(a.burst_fraction)?;
            generate_slow_stream(&spec)?.z
        }
    };
    let (layout, masks) = match a.layout {
        LayoutArg::PseudoRadial => (Layout::PseudoRadial, make_pseudo_radial_masks(g.nx, g.ny, q, g.lines, seed)?),
        LayoutArg::Cartesian => (Layout::Cartesian, cartesian_masks(g.nx, g.ny, q, g.lines, seed)?),
    };
    let coils = Arc::new(CoilMaps::synthetic(g.nx, g.ny, g.coils));
    let data = Dataset::simulate((g.nx, g.ny), layout, masks, &coils, &truth)?;
    fs::write(dir.join("dataset.lpsk"), data.to_bytes())?;
    fs::write(dir.join("truth.lpsm"), matrix_to_bytes(&truth))?;
    println!("wrote {} frames of {}x{} with {} coils", q, g.nx, g.ny, g.coils);
    Ok(())
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Dataset::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn read_truth(path: &Path, n: usize, q: usize) -> anyhow::Result<ComplexMatrix> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let m = matrix_from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(m.shape() == (n, q), "truth is {}x{}, dataset is {n}x{q}", m.nrows(), m.ncols());
    Ok(m)
}

fn reconstruct(a: &ReconstructArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(r) = a.rank {
        cfg.rank_override = Some(r);
    }
    if let Some(tau) = a.tau {
        cfg.tau_init = tau;
    }
    cfg.validate()?;
    let data = read_dataset(&a.input)?;
    let frames = data.frame_set()?;
    let (n, q) = (frames.n(), frames.q());
    let truth = a.truth.as_deref().map(|p| read_truth(p, n, q)).transpose()?;
    let dir = out_dir(&a.out)?;
    let t0 = Instant::now();

    let method = match a.mode {
        Mode::BatchLps | Mode::BatchLr => {
            let (est, trace) = if a.mode == Mode::BatchLps {
                reconstruct_lps_batch(&frames, &cfg)?
            } else {
                reconstruct_lr_batch(&frames, &cfg)?
            };
            let z = est.reconstruct();
            fs::write(dir.join("reconstruction.lpsm"), matrix_to_bytes(&z))?;
            let mut metrics = json!({
                "mode": a.mode.to_possible_value().map(|v| v.get_name().to_string()),
                "n": n,
                "q": q,
                "rank": est.subspace.rank(),
                "iterations": trace.iterations(),
                "exit": trace.exit,
                "flagged_frames": trace.flagged_frames,
            });
            if let Some(t) = &truth {
                metrics["scale_invariant_error"] = json!(scale_invariant_error(&z, t)?);
            }
            if a.timings {
                metrics["elapsed_secs"] = json!(t0.elapsed().as_secs_f64());
            }
            write_json(create(dir, "metrics.json")?, &metrics)?;
            println!("reconstructed {q} frames, rank {}", est.subspace.rank());
            return Ok(());
        }
        Mode::FsLps => StreamMethod::FsLps,
        Mode::FsLr => StreamMethod::FsLr,
    };

    let mut proc = StreamProcessor::new(method, cfg.clone(), true)?;
    let mut csv = create(dir, "frames.csv")?;
    writeln!(csv, "frame,mode{}", if a.timings { ",latency_secs" } else { "" })?;
    let mut low = ComplexMatrix::zeros(n, q);
    let mut delayed = ComplexMatrix::zeros(n, q);
    let mut low_idx = Vec::new();
    let mut latency_sum = 0.0;
    let mut emit = |outs: Vec<lps_core::fewshot::StreamOutput>, csv: &mut BufWriter<File>| -> anyhow::Result<()> {
        for o in outs {
            let mode = match o.mode {
                OutputMode::LowLatency => {
                    low.set_column(o.frame_index, &o.image);
                    low_idx.push(o.frame_index);
                    latency_sum += o.latency_secs;
                    "low-latency"
                }
                OutputMode::Delayed => {
                    delayed.set_column(o.frame_index, &o.image);
                    "delayed"
                }
            };
            if a.timings {
                writeln!(csv, "{},{mode},{}", o.frame_index, o.latency_secs)?;
            } else {
                writeln!(csv, "{},{mode}", o.frame_index)?;
            }
            csv.flush()?;
        }
        Ok(())
    };
    for f in frames.frames() {
        emit(proc.push(f.clone())?, &mut csv)?;
    }
    emit(proc.finish()?, &mut csv)?;
    fs::write(dir.join("reconstruction.lpsm"), matrix_to_bytes(&delayed))?;
    fs::write(dir.join("low_latency.lpsm"), matrix_to_bytes(&low))?;
    let mut metrics = json!({
        "mode": a.mode.to_possible_value().map(|v| v.get_name().to_string()),
        "n": n,
        "q": q,
        "alpha": cfg.alpha,
        "batches": proc.batches().len(),
        "low_latency_frames": low_idx.len(),
        "first_low_latency_frame": low_idx.first(),
    });
    if let Some(t) = &truth {
        metrics["delayed_error"] = json!(scale_invariant_error(&delayed, t)?);
        if !low_idx.is_empty() {
            metrics["low_latency_error"] = json!(scale_invariant_error(&low.select_columns(&low_idx), &t.select_columns(&low_idx))?);
        }
    }
    if a.timings {
        metrics["elapsed_secs"] = json!(t0.elapsed().as_secs_f64());
        if !low_idx.is_empty() {
            metrics["mean_latency_secs"] = json!(latency_sum / low_idx.len() as f64);
        }
    }
    write_json(create(dir, "metrics.json")?, &metrics)?;
    println!("streamed {q} frames, {} low-latency outputs", low_idx.len());
    Ok(())
}

fn inspect(a: &InspectArgs) -> anyhow::Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let data = read_dataset(&a.input)?;
    println!("magic LPSK1");
    println!("version {}", crate::container::VERSION);
    println!("n_x {}", data.nx);
    println!("n_y {}", data.ny);
    println!("q {}", data.q());
    println!("c {}", data.coil_count());
    println!("layout {}", data.layout.name());
    let rows = data.frame_rows();
    println!("frame m_k");
    for (k, m) in rows.iter().enumerate() {
        println!("{k} {m}");
    }
    let frames = data.frame_set()?;
    let (n, q, m_min) = (frames.n(), frames.q(), frames.m_min());
    let x0 = back_projection(&frames);
    let r_big = rank_cap(n, q, m_min, cfg.rank_cap_divisor, RankCapRule::WithMeasurements);
    let (_, s) = leading_svd(&x0, r_big)?;
    let r = estimate_rank(&s, m_min, n, q, cfg.rank_energy_frac, cfg.rank_cap_divisor);
    println!("rank_cap {r_big}");
    println!("singular_values {}", s.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" "));
    println!("estimated_rank {r}");
    let (u, _) = top_r_svd(&x0, r)?;
    let b = u.basis().ad_mul(&x0);
    let (mu_l, mu_r) = incoherence_mu(&u, &b, s[0])?;
    println!("mu_left {mu_l:.6}");
    println!("mu_right {mu_r:.6}");
    Ok(())
}
