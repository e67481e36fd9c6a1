use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use scatter_core::bench::{
    memory_records, oracle_speedup, random_batch, time_forward, BenchRecord,
};
use scatter_core::classify::{
    accuracy, accuracy_pixels, angular_spectrum, fgsm_attack_with, sparsify_angular,
    spectral_flatness, train_linear, train_linear_pixels, AttackGoal, LinearModel, TrainConfig,
};
use scatter_core::filterbank::{angle, littlewood_paley, spectrum_summary, FilterBank};
use scatter_core::format::{read_sct1, read_slm1, write_sct1, write_slm1};
use scatter_core::io::{read_dataset, read_image, write_dataset, write_image};
use scatter_core::recon::{err_metrics_with, reconstruct, ReconConfig};
use scatter_core::scattering::{forward_batch, plan_for};
use scatter_core::synth::{reference_image, texture_dataset, TEXTURE_CLASSES};
use scatter_core::verify::{run_selftest, SelftestOptions};
use scatter_core::{
    ColorSpace, Error, ImageGrid, Precision, ScatteringCoeffs, ScatteringConfig, Transform,
};

use crate::output::{sig9, write_csv};
use crate::{
    AnalyzeArgs, AttackArgs, BenchArgs, Cli, Command, DatasetArgs, FiltersArgs, ForwardArgs,
    PrecisionArg, ReconstructArgs, SelftestArgs, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable inputs, malformed files.
    Usage(String),
    /// A checked property did not hold.
    Invariant(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 1,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    pub fn csv(e: csv::Error) -> Self {
        CliError::Usage(format!("cannot write CSV: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UndefinedMetric(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn at<T>(path: &Path, r: scatter_core::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::io(path, e))
}

fn load_image(path: &Path) -> Result<ImageGrid> {
    at(path, read_image(path))
}

fn load_dataset(dir: &Path) -> Result<(Vec<String>, Vec<(ImageGrid, usize)>)> {
    let (names, samples) = at(dir, read_dataset(dir))?;
    if samples.is_empty() {
        return Err(usage(format!("{}: no images found", dir.display())));
    }
    Ok((names, samples))
}

fn square_side(img: &ImageGrid, what: &Path) -> Result<usize> {
    if img.height() != img.width() {
        return Err(usage(format!(
            "{}: images must be square, got {}",
            what.display(),
            img.shape_string()
        )));
    }
    Ok(img.height())
}

pub fn run(cli: &Cli, workers: usize) -> Result<()> {
    match &cli.command {
        Command::Forward(a) => forward(a, workers),
        Command::Reconstruct(a) => reconstruct_cmd(a, cli.seed),
        Command::Filters(a) => filters(a),
        Command::Train(a) => train(a, cli.seed, workers),
        Command::Attack(a) => attack(a),
        Command::Analyze(a) => analyze(a, workers),
        Command::Bench(a) => bench(a, cli.seed, workers),
        Command::Selftest(a) => selftest(a, cli.seed),
        Command::Dataset(a) => dataset(a, cli.seed),
    }
}

fn forward(a: &ForwardArgs, workers: usize) -> Result<()> {
    let cfg = a.transform.config();
    cfg.validate()?;
    let imgs = a
        .inputs
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<PathBuf> = if a.inputs.len() == 1 && !a.out.is_dir() {
        vec![a.out.clone()]
    } else {
        fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
        a.inputs
            .iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .map_or("image".into(), |s| s.to_string_lossy().into_owned());
                a.out.join(format!("{stem}.sct1"))
            })
            .collect()
    };

    // one bank and batch per image size
    let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, (img, p)) in imgs.iter().zip(&a.inputs).enumerate() {
        groups
            .entry((square_side(img, p)?, img.channels()))
            .or_default()
            .push(i);
    }
    let mut out: Vec<Option<ScatteringCoeffs>> = vec![None; imgs.len()];
    for ((n, _), idx) in groups {
        let fb = FilterBank::build(plan_for(n, &cfg)?.padded, cfg.j, cfg.l, cfg.params)?;
        let batch: Vec<ImageGrid> = idx.iter().map(|&i| imgs[i].clone()).collect();
        for (i, c) in idx.iter().zip(forward_batch(&batch, &fb, &cfg, workers)?) {
            out[*i] = Some(c);
        }
    }
    for ((c, input), target) in out.into_iter().flatten().zip(&a.inputs).zip(&targets) {
        at(target, write_sct1(target, &c, Some(&cfg.params)))?;
        println!(
            "{}: paths {} channels {} spatial {}x{} -> {}",
            input.display(),
            c.paths().len(),
            c.channel_count(),
            c.spatial(),
            c.spatial(),
            target.display()
        );
    }
    Ok(())
}

fn reconstruct_cmd(a: &ReconstructArgs, seed: u64) -> Result<()> {
    let is_sct1 = a
        .target
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("sct1"));
    let (cfg, target, original) = if is_sct1 {
        let (coeffs, params) = at(&a.target, read_sct1(&a.target))?;
        let mut cfg = ScatteringConfig::new(coeffs.scales(), coeffs.angles())
            .with_boundary(coeffs.boundary())
            .with_precision(a.transform.precision.into());
        if let Some(p) = params {
            cfg.params = p;
        }
        (cfg, coeffs, None)
    } else {
        let cfg = a.transform.config();
        cfg.validate()?;
        let x = load_image(&a.target)?;
        let n = square_side(&x, &a.target)?;
        let (t, _) = Transform::for_input(&cfg, n)?;
        (cfg, t.forward(&x)?, Some(x))
    };
    let rc = ReconConfig {
        iterations: a.iters,
        step_size: a.step,
        init_noise_variance: a.noise,
        work_color_space: if a.rgb {
            ColorSpace::Rgb
        } else {
            ColorSpace::Yuv
        },
        ..Default::default()
    };
    let n = target.input_size();
    let (t, fb) = Transform::for_input(&cfg, n)?;
    let rec = reconstruct(&target, &fb, &cfg, &rc, seed)?;
    at(&a.out, write_image(&rec.image, &a.out))?;
    if let Some(path) = &a.history {
        let rows: Vec<Vec<String>> = rec
            .history
            .iter()
            .map(|h| vec![h.iteration.to_string(), sig9(h.loss), sig9(h.err_s)])
            .collect();
        write_csv(Some(path), &["iteration", "loss", "err_s"], &rows)?;
    }
    let last = rec.history.last().expect("history has a final entry");
    match original {
        Some(x) => {
            let (err_x, err_s) = err_metrics_with(&t, &rec.image, &x)?;
            println!(
                "iterations {} err_s {} err_x {} -> {}",
                a.iters,
                sig9(err_s),
                sig9(err_x),
                a.out.display()
            );
        }
        None => println!(
            "iterations {} err_s {} -> {}",
            a.iters,
            sig9(last.err_s),
            a.out.display()
        ),
    }
    Ok(())
}

/// Frequency-domain magnitude with the zero frequency moved to the centre,
/// scaled to a peak of 1.
fn spectrum_image(values: &[f64], m: usize) -> Result<ImageGrid> {
    let peak = values
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let h = m / 2;
    Ok(ImageGrid::from_fn(m, m, ColorSpace::Gray, |_, y, x| {
        values[((y + h) % m) * m + (x + h) % m] / peak
    }))
}

fn filters(a: &FiltersArgs) -> Result<()> {
    let cfg = ScatteringConfig::new(a.j, a.l);
    cfg.validate()?;
    let fb = FilterBank::build(a.size, a.j, a.l, cfg.params)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut rows = Vec::new();
    for (j, l, r, s) in fb.iter_psi() {
        if r != 0 {
            continue;
        }
        let (peak, norm) = spectrum_summary(s);
        rows.push(vec![
            j.to_string(),
            l.to_string(),
            sig9(angle(l, a.l)),
            sig9(peak),
            sig9(norm),
        ]);
        let mag: Vec<f64> = s.data().iter().map(|z| z.norm()).collect();
        let path = a.out.join(format!("psi_j{j}_l{l}.png"));
        at(&path, write_image(&spectrum_image(&mag, a.size)?, &path))?;
    }
    let phi: Vec<f64> = fb.phi(0).data().iter().map(|z| z.norm()).collect();
    let path = a.out.join("phi.png");
    at(&path, write_image(&spectrum_image(&phi, a.size)?, &path))?;
    let lp = littlewood_paley(&fb);
    let path = a.out.join("littlewood_paley.png");
    at(
        &path,
        write_image(&spectrum_image(&lp.energy, a.size)?, &path),
    )?;
    write_csv(
        Some(&a.out.join("filters.csv")),
        &["j", "l", "theta", "peak_frequency", "l2_norm"],
        &rows,
    )?;
    println!(
        "wavelets {} lp_max {} lp_min_band {} -> {}",
        rows.len(),
        sig9(lp.max_e),
        sig9(lp.min_e_band),
        a.out.display()
    );
    Ok(())
}

fn scatter_samples(
    samples: &[(ImageGrid, usize)],
    cfg: &ScatteringConfig,
    workers: usize,
    what: &Path,
) -> Result<Vec<(ScatteringCoeffs, usize)>> {
    let n = square_side(&samples[0].0, what)?;
    let fb = FilterBank::build(plan_for(n, cfg)?.padded, cfg.j, cfg.l, cfg.params)?;
    let imgs: Vec<ImageGrid> = samples.iter().map(|s| s.0.clone()).collect();
    let coeffs = at(what, forward_batch(&imgs, &fb, cfg, workers))?;
    Ok(coeffs
        .into_iter()
        .zip(samples.iter().map(|s| s.1))
        .collect())
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.train.epochs,
        batch_size: a.train.batch,
        learning_rate: a.train.lr,
        momentum: a.train.momentum,
        weight_decay: a.train.weight_decay,
    }
}

fn train(a: &TrainArgs, seed: u64, workers: usize) -> Result<()> {
    let cfg = a.transform.config();
    cfg.validate()?;
    let (names, samples) = load_dataset(&a.data)?;
    let test = match &a.test {
        Some(dir) => {
            let (tn, ts) = load_dataset(dir)?;
            if tn != names {
                return Err(usage(format!(
                    "{}: classes {tn:?} differ from training classes {names:?}",
                    dir.display()
                )));
            }
            Some((dir, ts))
        }
        None => None,
    };
    let tc = train_config(a);
    let classes = names.len();
    let (model, train_acc, test_acc) = if a.pixels {
        let m = train_linear_pixels(&samples, classes, &tc, seed)?;
        let tr = accuracy_pixels(&m, &samples)?;
        let te = test.map(|(_, ts)| accuracy_pixels(&m, &ts)).transpose()?;
        (m, tr, te)
    } else {
        let feats = scatter_samples(&samples, &cfg, workers, &a.data)?;
        let m = train_linear(&feats, classes, &tc, seed)?;
        let tr = accuracy(&m, &feats)?;
        let te = match test {
            Some((dir, ts)) => Some(accuracy(&m, &scatter_samples(&ts, &cfg, workers, dir)?)?),
            None => None,
        };
        (m, tr, te)
    };
    at(&a.out, write_slm1(&a.out, &model))?;
    let test_part = test_acc.map_or(String::new(), |t| format!(" test_accuracy {}", sig9(t)));
    println!(
        "classes {} samples {} train_accuracy {}{} -> {}",
        classes,
        samples.len(),
        sig9(train_acc),
        test_part,
        a.out.display()
    );
    Ok(())
}

fn scattering_model(
    path: &Path,
    precision: PrecisionArg,
) -> Result<(LinearModel, ScatteringConfig)> {
    let model = at(path, read_slm1(path))?;
    let shape = model.meta().layout.coeff_shape().ok_or_else(|| {
        usage(format!(
            "{}: model was trained on pixels, not scattering coefficients",
            path.display()
        ))
    })?;
    let cfg = ScatteringConfig::new(shape.j, shape.l)
        .with_boundary(shape.boundary)
        .with_precision(Precision::from(precision));
    Ok((model, cfg))
}

fn default_eps_grid() -> Vec<f64> {
    (1..=60).map(|k| k as f64 * 0.0025).collect()
}

fn attack(a: &AttackArgs) -> Result<()> {
    let (model, cfg) = scattering_model(&a.model, a.precision)?;
    let shape = model.meta().layout.coeff_shape().expect("checked above");
    let x = load_image(&a.image)?;
    let n = square_side(&x, &a.image)?;
    if n != shape.input_size || x.channels() != shape.input_channels {
        return Err(usage(format!(
            "{}: model expects {}x{}x{}, image is {}",
            a.image.display(),
            shape.input_channels,
            shape.input_size,
            shape.input_size,
            x.shape_string()
        )));
    }
    let goal = match a.target {
        Some(t) => AttackGoal::Targeted(t),
        None => AttackGoal::Untargeted,
    };
    let grid = a.eps.clone().unwrap_or_else(default_eps_grid);
    let (t, _) = Transform::for_input(&cfg, n)?;
    let outcome = fgsm_attack_with(&t, &model, &x, goal, &grid)?;
    let target = a.target.map_or("any".to_string(), |t| t.to_string());
    match (
        &outcome.eps,
        &outcome.adversarial,
        outcome.adversarial_class,
    ) {
        (Some(eps), Some(adv), Some(class)) => {
            if let Some(out) = &a.out {
                at(out, write_image(adv, out))?;
            }
            println!(
                "status success source {} target {} eps_x {} predicted {}",
                outcome.source_class,
                target,
                sig9(*eps),
                class
            );
        }
        _ => println!(
            "status failure source {} target {} no epsilon in grid",
            outcome.source_class, target
        ),
    }
    Ok(())
}

fn analyze(a: &AnalyzeArgs, workers: usize) -> Result<()> {
    let (model, cfg) = scattering_model(&a.model, a.precision)?;
    let spec = angular_spectrum(&model)?;
    let l = spec.l;
    let mut rows = Vec::with_capacity(l + l * l);
    for (k, e) in spec.omega1.iter().enumerate() {
        rows.push(vec!["1".into(), k.to_string(), String::new(), sig9(*e)]);
    }
    for (i, e) in spec.omega2.iter().enumerate() {
        rows.push(vec![
            "2".into(),
            (i / l).to_string(),
            (i % l).to_string(),
            sig9(*e),
        ]);
    }
    write_csv(
        Some(&a.out),
        &["order", "omega1", "omega2", "energy"],
        &rows,
    )?;
    println!(
        "omega1_sum {} block1_energy {} omega2_sum {} block2_energy {} flatness1 {} -> {}",
        sig9(spec.omega1.iter().sum()),
        sig9(spec.energy1),
        sig9(spec.omega2.iter().sum()),
        sig9(spec.energy2),
        sig9(spectral_flatness(&spec.omega1)),
        a.out.display()
    );

    let sparse = match a.sparsify {
        Some(keep) => {
            let (m, stats) = sparsify_angular(&model, keep)?;
            if let Some(path) = &a.sparse_out {
                at(path, write_slm1(path, &m))?;
            }
            println!(
                "kept {} of {} zero_fraction {} energy_retained {}",
                stats.kept,
                stats.total,
                sig9(stats.zero_fraction),
                sig9(stats.energy_retained)
            );
            Some(m)
        }
        None => None,
    };
    if let Some(dir) = &a.test {
        let (_, samples) = load_dataset(dir)?;
        let feats = scatter_samples(&samples, &cfg, workers, dir)?;
        let dense = accuracy(&model, &feats)?;
        match &sparse {
            Some(m) => println!(
                "accuracy {} sparse_accuracy {}",
                sig9(dense),
                sig9(accuracy(m, &feats)?)
            ),
            None => println!("accuracy {}", sig9(dense)),
        }
    }
    Ok(())
}

fn bench(a: &BenchArgs, seed: u64, workers: usize) -> Result<()> {
    let cfg = a.transform.config();
    cfg.validate()?;
    if a.batch == 0 || a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(usage("--batch and every --sizes entry must be positive"));
    }
    let mut records: Vec<BenchRecord> = Vec::new();
    let mut violations = Vec::new();
    for &n in &a.sizes {
        let imgs = random_batch(a.batch, n, seed);
        let m = plan_for(n, &cfg)?.padded;
        let base = time_forward(&imgs, &cfg, workers)?;
        let doubled = time_forward(&imgs, &cfg, 2 * workers)?;
        for r in [&base, &doubled] {
            if r.peak_slots > 5 * m * m {
                violations.push(format!("forward at {n}: peak {} > 5·{m}²", r.peak_slots));
            }
        }
        if base.checksum != doubled.checksum {
            violations.push(format!(
                "forward at {n}: output changes with the worker count"
            ));
        }
        records.extend([base, doubled]);
    }
    if a.oracle_size > 0 {
        let (fast, slow, ratio) = oracle_speedup(a.oracle_size, cfg.j, cfg.l, seed)?;
        eprintln!("oracle speedup at {}: {}", a.oracle_size, sig9(ratio));
        if ratio < 20.0 {
            violations.push(format!(
                "forward is only {} times faster than the oracle",
                sig9(ratio)
            ));
        }
        records.extend([fast, slow]);
    }
    if a.memory_size > 0 {
        for j in 2..=4 {
            let rows = memory_records(a.memory_size, j, cfg.l)?;
            if rows[1].peak_slots > 5 * a.memory_size * a.memory_size {
                violations.push(format!("infix peak {} > 5N² at J={j}", rows[1].peak_slots));
            }
            records.extend(rows);
        }
    }
    let rows: Vec<Vec<String>> = records.iter().map(|r| r.row().to_vec()).collect();
    write_csv(a.out.as_deref(), &BenchRecord::HEADER, &rows)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(violations.join("; ")))
    }
}

fn selftest(a: &SelftestArgs, seed: u64) -> Result<()> {
    let report = run_selftest(&SelftestOptions {
        seed,
        corrupt_filter: a.corrupt_filter,
    });
    for c in &report.checks {
        eprintln!(
            "{} {} measured {} limit {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            sig9(c.measured),
            sig9(c.limit)
        );
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?;
    match &a.report {
        Some(p) => fs::write(p, json + "\n").map_err(|e| CliError::io(p, e))?,
        None => println!("{json}"),
    }
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(CliError::Invariant(format!(
            "failing invariants: {}",
            names.join(", ")
        )))
    }
}

fn dataset(a: &DatasetArgs, seed: u64) -> Result<()> {
    if a.reference {
        let n = a.size.unwrap_or(256);
        at(&a.out, write_image(&reference_image(n), &a.out))?;
        println!("reference scene {n}x{n} -> {}", a.out.display());
        return Ok(());
    }
    if a.per_class == 0 {
        return Err(usage("--per-class must be positive"));
    }
    let n = a.size.unwrap_or(32);
    let samples = texture_dataset(a.per_class, n, seed);
    let names: Vec<String> = (0..TEXTURE_CLASSES)
        .map(|k| format!("class{k:02}"))
        .collect();
    at(&a.out, write_dataset(&a.out, &names, &samples))?;
    println!(
        "{} images in {} classes, {n}x{n} -> {}",
        samples.len(),
        TEXTURE_CLASSES,
        a.out.display()
    );
    Ok(())
}
