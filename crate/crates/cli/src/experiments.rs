//! One driver per subcommand. Each writes its CSVs, charts and a config
//! snapshot under the given directory and returns the measured quantities.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use sdl_core::covariance_lab::{
    monte_carlo_cov, random_population, verify_by_enumeration, GradientPopulation, MonteCarloCov, SelectorMode,
};
use sdl_core::datasets::{make_separable, Dataset};
use sdl_core::diffusion_lab::{
    binned_loss_std, fit_log_distance, fit_power_law, log_checkpoints, norm_log_spread, random_ray_scan,
    random_walk_distance, run_margin_experiment, BinStat, DistanceEntry, DistanceSeries, LogFit, MarginTrace,
    RayScanRecord,
};
use sdl_core::network::Mlp;
use sdl_core::numerics::{gaussian, l2_distance, mix64, Rng, Tensor};
use sdl_core::optimizer::{sqrt_lr_scale, NoiseConfig};
use sdl_core::random_walk_sim::{
    estimate_diffusion_exponent, flat_control, run_diffusion_experiment, DiffusionConfig, DiffusionCurve, ExponentFit,
    FourierSpec, PotentialSpec,
};
use sdl_core::stats::{linear_fit, spearman, LineFit};
use sdl_core::training::{loss_on, EpochRecord};

use crate::ablation::{run_ablation, RunReport, Rung};
use crate::config::{PotentialKind, RunConfig};
use crate::report::{
    distance_series, emit_report, num, opt, write_chart, write_ladder, write_run, write_snapshot,
    write_table, SUMMARY_HEADER,
};
use crate::runs::{
    dataset_name, init_model, input_hash, load_data, network_name, run_training, small_batch_regime, train_config,
    STREAM_CONTROL, STREAM_COVARIANCE, STREAM_LOGISTIC, STREAM_RAY,
};
use crate::svg::Series;

/// Dimension of the Gaussian random-walk control next to a training run.
pub const CONTROL_DIM: usize = 1000;

const FIT_HEADER: [&str; 11] = [
    "series",
    "a",
    "b",
    "r_squared",
    "loglog_slope",
    "alpha_hat",
    "power_slope",
    "power_r_squared",
    "t_lo",
    "t_hi",
    "points",
];

fn fit_row(name: &str, fit: &LogFit, power: &LineFit) -> Vec<String> {
    vec![
        name.to_string(),
        num(fit.a),
        num(fit.b),
        num(fit.r_squared),
        num(fit.loglog_slope),
        opt(fit.alpha_hat),
        num(power.slope),
        num(power.r_squared),
        fit.fit_window.0.to_string(),
        fit.fit_window.1.to_string(),
        fit.points.to_string(),
    ]
}

pub struct TrainResult {
    pub model: Mlp,
    pub epochs: Vec<EpochRecord>,
    pub distance: DistanceSeries,
    pub fit: LogFit,
    pub control: DistanceSeries,
    pub control_fit: LogFit,
    pub control_power: LineFit,
    pub iterations: usize,
    pub final_val_error: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Small-batch training with distance logging, the logarithmic fit, and
/// the same fit on a Gaussian random walk of matching length.
pub fn train(cfg: &RunConfig, train_data: &Dataset, val_data: &Dataset, dir: &Path) -> Result<TrainResult> {
    let model = init_model(cfg, train_data, cfg.model.norm(), cfg.seed)?;
    let tc = train_config(
        cfg,
        cfg.optimizer.batch_small,
        small_batch_regime(cfg)?,
        NoiseConfig::new(0.0)?,
    );
    let run = run_training(model, train_data, val_data, &tc, cfg.seed)?;
    let distance = run.outcome.distance;
    let window = cfg.fit_window();
    let fit = fit_log_distance(&distance, window).context("fitting the training distance")?;
    let power = fit_power_law(&distance, window)?;

    let last = distance.entries().last().map_or(0, |e| e.t);
    let control = random_walk_distance(
        &mut Rng::new(cfg.seed, STREAM_CONTROL),
        CONTROL_DIM,
        last,
        cfg.logging.distance_stride.max(1),
    )?;
    let control_fit = fit_log_distance(&control, window).context("fitting the control walk")?;
    let control_power = fit_power_law(&control, window)?;

    let mut files = write_run(dir, "SB", &run.outcome.epochs, &distance)?;
    files.push(write_table(
        &dir.join("control.csv"),
        &["t", "distance"],
        &control
            .entries()
            .iter()
            .map(|e| vec![e.t.to_string(), num(e.distance)])
            .collect::<Vec<_>>(),
    )?);
    files.push(write_table(
        &dir.join("distance_fit.csv"),
        &FIT_HEADER,
        &[
            fit_row("training", &fit, &power),
            fit_row("control", &control_fit, &control_power),
        ],
    )?);
    files.extend(write_chart(
        &dir.join("distance_vs_control.svg"),
        "weight distance against a random walk",
        "ln t",
        "||w_t - w_0||",
        &[
            distance_series("training", &distance),
            distance_series("random walk", &control),
        ],
    )?);
    let model_path = dir.join("model.json");
    run.model.save(&model_path)?;
    files.push(model_path);
    Ok(TrainResult {
        model: run.model,
        epochs: run.outcome.epochs,
        distance,
        fit,
        control,
        control_fit,
        control_power,
        iterations: run.outcome.iterations,
        final_val_error: run.outcome.final_val_error,
        files,
    })
}

pub struct RayScanSummary {
    pub records: Vec<RayScanRecord>,
    pub baseline: f64,
    pub bins: Vec<BinStat>,
    pub fit: LineFit,
    pub spearman: f64,
    pub monotone: bool,
}

fn summarize_scan(records: Vec<RayScanRecord>, baseline: f64, bins: usize, c: f64) -> Result<RayScanSummary> {
    let stats = binned_loss_std(&records, baseline, bins, c)?;
    let centers: Vec<f64> = stats.iter().map(|b| b.center).collect();
    let stds: Vec<f64> = stats.iter().map(|b| b.std).collect();
    Ok(RayScanSummary {
        fit: linear_fit(&centers, &stds)?,
        spearman: spearman(&centers, &stds)?,
        monotone: stds.windows(2).all(|w| w[1] >= w[0]),
        records,
        baseline,
        bins: stats,
    })
}

pub struct RayScanResult {
    pub network: RayScanSummary,
    pub synthetic: RayScanSummary,
    pub files: Vec<PathBuf>,
}

/// Random rays around `w₀` of a trained network, next to the same scan on
/// the generating model `L(w) = L(w₀) + ‖w − w₀‖·ξ`.
pub fn ray_scan(cfg: &RunConfig, model: &Mlp, train_data: &Dataset, dir: &Path) -> Result<RayScanResult> {
    let rc = &cfg.ray_scan;
    let n_eval = rc.eval_samples.min(train_data.len());
    let eval = train_data.subset(&(0..n_eval).collect::<Vec<_>>())?;
    let w0 = model.params().w0().to_vec();
    let stream = Rng::new(cfg.seed, STREAM_RAY);

    let baseline = loss_on(model, &w0, &eval)?;
    let records = random_ray_scan(&w0, |w| loss_on(model, w, &eval), rc.c, rc.repeats, &stream.child(0))?;
    let network = summarize_scan(records, baseline, rc.bins, rc.c)?;

    let origin = vec![0.0; 16];
    let mut xi = stream.child(1);
    let synthetic_baseline = 1.0;
    let records = random_ray_scan(
        &origin,
        |w| {
            let z = gaussian(&mut xi, &[1], 0.0, 1.0)?.data()[0];
            Ok(synthetic_baseline + l2_distance(w, &origin) * z)
        },
        rc.c,
        rc.synthetic_repeats,
        &stream.child(2),
    )?;
    let synthetic = summarize_scan(records, synthetic_baseline, rc.bins, rc.c)?;

    let mut files = Vec::new();
    let mut scan_rows = Vec::new();
    let mut bin_rows = Vec::new();
    let mut fit_rows = Vec::new();
    for (name, s) in [("network", &network), ("synthetic", &synthetic)] {
        scan_rows.extend(
            s.records
                .iter()
                .map(|r| vec![name.to_string(), num(r.distance), num(r.loss)]),
        );
        bin_rows.extend(s.bins.iter().map(|b| {
            vec![
                name.to_string(),
                num(b.center),
                num(b.std),
                b.count.to_string(),
            ]
        }));
        fit_rows.push(vec![
            name.to_string(),
            num(s.baseline),
            num(s.fit.slope),
            num(s.fit.intercept),
            num(s.fit.r_squared),
            num(s.spearman),
            s.monotone.to_string(),
        ]);
    }
    files.push(write_table(&dir.join("ray_scan.csv"), &["source", "distance", "loss"], &scan_rows)?);
    files.push(write_table(
        &dir.join("ray_bins.csv"),
        &["source", "center", "std", "count"],
        &bin_rows,
    )?);
    files.push(write_table(
        &dir.join("ray_fit.csv"),
        &["source", "baseline", "slope", "intercept", "r_squared", "spearman", "monotone"],
        &fit_rows,
    )?);
    for (name, s) in [("network", &network), ("synthetic", &synthetic)] {
        files.extend(write_chart(
            &dir.join(format!("ray_{name}.svg")),
            &format!("{name}: loss std against distance"),
            "||w - w_0||",
            "std of L(w) - L(w_0)",
            &[Series::new(name, s.bins.iter().map(|b| (b.center, b.std)).collect())],
        )?);
    }
    Ok(RayScanResult {
        network,
        synthetic,
        files,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactnessRow {
    pub mode: SelectorMode,
    pub population: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McCheck {
    pub name: &'static str,
    pub batch: usize,
    pub lr: f64,
    pub sigma_sq: f64,
    pub max_z: f64,
}

pub struct CovResult {
    pub exactness: Vec<ExactnessRow>,
    /// Largest relative gap between `η_L²/M_L·C` and `η_S²/M_S·C`.
    pub identity_gap: f64,
    pub checks: Vec<McCheck>,
    pub files: Vec<PathBuf>,
}

fn scaled(mc: MonteCarloCov, lr: f64) -> MonteCarloCov {
    MonteCarloCov {
        cov: mc.cov.scale(lr * lr),
        stderr: mc.stderr.scale(lr * lr),
        draws: mc.draws,
    }
}

fn relative_gap(a: &Tensor, b: &Tensor) -> Result<f64> {
    let scale = b.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = a.max_abs_diff(b)?;
    Ok(if scale > 0.0 { gap / scale } else { gap })
}

/// Selector covariance formulas against exact enumeration, and Monte Carlo
/// update covariances of large batches against the small-batch reference.
pub fn cov_verify(cfg: &RunConfig, dir: &Path) -> Result<CovResult> {
    let cc = &cfg.covariance;
    let stream = Rng::new(cfg.seed, STREAM_COVARIANCE);
    let mut exactness = Vec::new();
    for population in 0..cc.populations {
        let mut rng = stream.child(population as u64);
        for n in 1..=cc.max_n {
            for p in 1..=cc.max_p {
                let pop = random_population(&mut rng, n, p, false)?;
                for &mode in &cc.modes {
                    for m in 1..=cc.max_m.min(n) {
                        let report = verify_by_enumeration(&pop, m, mode)?;
                        exactness.push(ExactnessRow {
                            mode,
                            population,
                            n,
                            m,
                            p,
                            max_abs_err: report.max_abs_err,
                        });
                    }
                }
            }
        }
    }

    let (small, large, lr) = (cc.mc_small, cc.mc_large, cc.mc_lr);
    let lr_large = sqrt_lr_scale(lr, small, large)?;
    let pop: GradientPopulation = random_population(&mut stream.child(u64::MAX), cc.mc_population, cc.mc_dim, true)?;
    let identity_gap = relative_gap(
        &pop.second_moment().scale(lr_large * lr_large / large as f64),
        &pop.second_moment().scale(lr * lr / small as f64),
    )?;
    let sigma_sq = large as f64 / small as f64 - 1.0;
    let mode = SelectorMode::OrderedDraws;
    let draw = |k: u64, m: usize, noise: f64, eta: f64| -> Result<MonteCarloCov> {
        let noise = (noise > 0.0).then(|| NoiseConfig::new(noise)).transpose()?;
        let mc = monte_carlo_cov(&pop, m, mode, cc.mc_draws, noise, &mut stream.child(u64::MAX - k))?;
        Ok(scaled(mc, eta))
    };
    let reference = draw(1, small, 0.0, lr)?;
    let mut checks = Vec::new();
    for (k, name, noise, eta) in [
        (2, "sqrt_lr_and_noise", sigma_sq, lr_large),
        (3, "noise_only", sigma_sq, lr),
        (4, "sqrt_lr_only", 0.0, lr_large),
    ] {
        let mc = draw(k, large, noise, eta)?;
        checks.push(McCheck {
            name,
            batch: large,
            lr: eta,
            sigma_sq: noise,
            max_z: sdl_core::covariance_lab::max_z_score(&mc, &reference),
        });
    }

    let mut files = vec![write_table(
        &dir.join("cov_exactness.csv"),
        &["mode", "population", "n", "m", "p", "max_abs_err"],
        &exactness
            .iter()
            .map(|r| {
                vec![
                    r.mode.name().to_string(),
                    r.population.to_string(),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.p.to_string(),
                    num(r.max_abs_err),
                ]
            })
            .collect::<Vec<_>>(),
    )?];
    let mut mc_rows = vec![vec![
        "sqrt_identity".to_string(),
        large.to_string(),
        num(lr_large),
        num(0.0),
        String::new(),
        num(identity_gap),
    ]];
    mc_rows.extend(checks.iter().map(|c| {
        vec![
            c.name.to_string(),
            c.batch.to_string(),
            num(c.lr),
            num(c.sigma_sq),
            num(c.max_z),
            String::new(),
        ]
    }));
    files.push(write_table(
        &dir.join("cov_mc.csv"),
        &["check", "batch", "lr", "sigma_sq", "max_z", "relative_gap"],
        &mc_rows,
    )?);
    Ok(CovResult {
        exactness,
        identity_gap,
        checks,
        files,
    })
}

pub struct WalkResult {
    pub curve: DiffusionCurve,
    pub fit: ExponentFit,
    pub control: Vec<(usize, f64)>,
    pub files: Vec<PathBuf>,
}

pub fn potential_spec(cfg: &RunConfig) -> PotentialSpec {
    let w = &cfg.walk;
    match w.potential {
        PotentialKind::Flat => PotentialSpec::Flat,
        PotentialKind::Sinai => PotentialSpec::Sinai {
            increment_std: w.increment_std,
        },
        PotentialKind::Fourier => {
            let mut spec = FourierSpec::new(w.dim, w.alpha, w.features);
            spec.strength = w.strength;
            PotentialSpec::Fourier(spec)
        }
    }
}

/// Ensemble diffusion on the configured potential with exponent fits, plus
/// the flat-lattice control.
pub fn walk(cfg: &RunConfig, dir: &Path) -> Result<WalkResult> {
    let w = &cfg.walk;
    let potential = potential_spec(cfg);
    let mut dc = DiffusionConfig::new(potential, w.n_walkers, w.steps, cfg.seed);
    dc.checkpoints_per_decade = w.checkpoints_per_decade;
    dc.temperature = w.temperature;
    dc.langevin_step = w.langevin_step;
    let curve = run_diffusion_experiment(&dc)?;
    let fit = estimate_diffusion_exponent(&curve, cfg.walk_window())?;
    let control = flat_control(
        w.control_walkers,
        w.control_steps,
        w.control_from,
        mix64(cfg.seed ^ mix64(STREAM_CONTROL)),
    )?;

    let alpha = match potential {
        PotentialSpec::Flat => String::new(),
        PotentialSpec::Sinai { .. } => num(1.0),
        PotentialSpec::Fourier(s) => num(s.alpha),
    };
    let dynamics = match potential.dynamics() {
        sdl_core::random_walk_sim::Dynamics::Metropolis => "metropolis",
        sdl_core::random_walk_sim::Dynamics::Langevin => "langevin",
    };
    let mut files = vec![write_table(
        &dir.join("walk.csv"),
        &["t", "msd", "stderr", "n_walkers", "alpha", "dynamics"],
        &curve
            .points
            .iter()
            .map(|p| {
                vec![
                    p.t.to_string(),
                    num(p.msd),
                    num(p.stderr),
                    w.n_walkers.to_string(),
                    alpha.clone(),
                    dynamics.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?];
    files.push(write_table(
        &dir.join("walk_fit.csv"),
        &["p", "p_r_squared", "gamma", "gamma_r_squared", "t_lo", "t_hi", "points", "power_law_preferred"],
        &[vec![
            num(fit.p),
            num(fit.p_r_squared),
            num(fit.gamma),
            num(fit.gamma_r_squared),
            fit.window.0.to_string(),
            fit.window.1.to_string(),
            fit.points.to_string(),
            fit.power_law_preferred().to_string(),
        ]],
    )?);
    files.push(write_table(
        &dir.join("walk_control.csv"),
        &["t", "msd_over_t"],
        &control
            .iter()
            .map(|(t, r)| vec![t.to_string(), num(*r)])
            .collect::<Vec<_>>(),
    )?);
    let late: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.t >= 2 && p.msd > 0.0)
        .map(|p| ((p.t as f64).ln().ln(), p.msd.ln()))
        .collect();
    files.extend(write_chart(
        &dir.join("walk.svg"),
        "mean squared displacement",
        "ln ln t",
        "ln MSD",
        &[Series::new(dynamics, late)],
    )?);
    Ok(WalkResult {
        curve,
        fit,
        control,
        files,
    })
}

pub struct LogisticResult {
    pub trace: MarginTrace,
    pub cosine_at: Option<f64>,
    pub spread: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Gradient descent on separable logistic regression against the exact
/// max-margin direction.
pub fn logistic(cfg: &RunConfig, dir: &Path) -> Result<LogisticResult> {
    let lc = &cfg.logistic;
    let data = make_separable(&mut Rng::new(cfg.seed, STREAM_LOGISTIC), lc.n, lc.dim, lc.margin)?;
    let mut checkpoints = log_checkpoints(lc.steps, lc.checkpoints_per_decade);
    if lc.cosine_at >= 1 && lc.cosine_at <= lc.steps && !checkpoints.contains(&lc.cosine_at) {
        checkpoints.push(lc.cosine_at);
        checkpoints.sort_unstable();
    }
    let trace = run_margin_experiment(&data, lc.lr, lc.steps, &checkpoints)?;
    let cosine_at = trace.entries.iter().find(|e| e.t == lc.cosine_at).map(|e| e.cosine);
    let (lo, hi) = cfg.spread_window().unwrap_or((lc.steps / 10, lc.steps));
    let spread = norm_log_spread(&trace, lo, hi);

    let mut files = vec![write_table(
        &dir.join("margin.csv"),
        &["t", "norm", "cosine", "margin", "norm_over_ln_t"],
        &trace
            .entries
            .iter()
            .map(|e| {
                let ratio = if e.t >= 2 { e.norm / (e.t as f64).ln() } else { f64::NAN };
                vec![e.t.to_string(), num(e.norm), num(e.cosine), num(e.margin), num(ratio)]
            })
            .collect::<Vec<_>>(),
    )?];
    let w_hat: Vec<String> = trace.w_hat.iter().map(|v| num(*v)).collect();
    files.push(write_table(
        &dir.join("margin_summary.csv"),
        &["oracle_margin", "w_hat", "cosine_at", "cosine", "spread_lo", "spread_hi", "spread"],
        &[vec![
            num(trace.oracle_margin),
            w_hat.join(" "),
            lc.cosine_at.to_string(),
            opt(cosine_at),
            lo.to_string(),
            hi.to_string(),
            opt(spread),
        ]],
    )?);
    files.extend(write_chart(
        &dir.join("margin.svg"),
        "weight norm under gradient descent",
        "ln t",
        "||w_t||",
        &[Series::new(
            "||w_t||",
            trace.entries.iter().map(|e| ((e.t as f64).ln(), e.norm)).collect(),
        )],
    )?);
    Ok(LogisticResult {
        trace,
        cosine_at,
        spread,
        files,
    })
}

fn parse_num(field: &str) -> Result<f64> {
    if field.is_empty() {
        Ok(f64::NAN)
    } else {
        field.parse().with_context(|| format!("bad number `{field}`"))
    }
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    Ok(if field.is_empty() { None } else { Some(parse_num(field)?) })
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{} has no `{name}` column", path.display()))
}

/// Reads `t`, `distance` and, when present, `train_loss` columns.
pub fn read_distance_csv(path: &Path) -> Result<DistanceSeries> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let t_col = column(&headers, "t", path)?;
    let d_col = column(&headers, "distance", path)?;
    let loss_col = headers.iter().position(|h| h == "train_loss");
    let mut series = DistanceSeries::default();
    for record in reader.records() {
        let record = record?;
        series.push(DistanceEntry {
            t: record[t_col].parse().with_context(|| format!("bad iteration in {}", path.display()))?,
            distance: parse_num(&record[d_col])?,
            train_loss: loss_col.map_or(Ok(f64::NAN), |c| parse_num(&record[c]))?,
            val_error: None,
        })?;
    }
    Ok(series)
}

pub fn read_epochs_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut log = Vec::new();
    for record in reader.records() {
        let r = record?;
        if r.len() != 7 {
            bail!("{}: expected 7 columns, got {}", path.display(), r.len());
        }
        log.push(EpochRecord {
            epoch: r[0].parse()?,
            iteration: r[1].parse()?,
            lr: parse_num(&r[2])?,
            train_loss: parse_num(&r[3])?,
            val_loss: parse_opt(&r[4])?,
            val_error: parse_opt(&r[5])?,
            distance: parse_num(&r[6])?,
        });
    }
    Ok(log)
}

pub struct FitResult {
    pub fit: LogFit,
    pub power: LineFit,
    pub files: Vec<PathBuf>,
}

/// Logarithmic and power-law fits of a saved distance series.
pub fn fit(cfg: &RunConfig, dir: &Path) -> Result<FitResult> {
    let series = read_distance_csv(&cfg.fit.input)?;
    let fit = fit_log_distance(&series, cfg.fit_window())?;
    let power = fit_power_law(&series, cfg.fit_window())?;
    let name = cfg
        .fit
        .input
        .file_stem()
        .map_or_else(|| "input".to_string(), |s| s.to_string_lossy().into_owned());
    let files = vec![write_table(&dir.join("fit.csv"), &FIT_HEADER, &[fit_row(&name, &fit, &power)])?];
    Ok(FitResult { fit, power, files })
}

fn rung_from_label(label: &str) -> Result<Rung> {
    Rung::ALL
        .into_iter()
        .find(|r| r.label() == label)
        .ok_or_else(|| anyhow!("unknown rung `{label}`"))
}

/// Rebuilds the ladder tables and charts from an ablation directory.
pub fn report(dir: &Path) -> Result<Vec<PathBuf>> {
    let summary_path = dir.join("summary.csv");
    let mut reader =
        csv::Reader::from_path(&summary_path).with_context(|| format!("reading {}", summary_path.display()))?;
    if reader.headers()?.iter().ne(SUMMARY_HEADER) {
        bail!("{} does not hold a ladder summary", summary_path.display());
    }
    let first = reader
        .records()
        .next()
        .ok_or_else(|| anyhow!("{} is empty", summary_path.display()))??;
    let (network, dataset) = (first[0].to_string(), first[1].to_string());

    let rungs_path = dir.join("rungs.csv");
    let mut reader = csv::Reader::from_path(&rungs_path).with_context(|| format!("reading {}", rungs_path.display()))?;
    let mut reports = Vec::new();
    for record in reader.records() {
        let r = record?;
        let run_dir = dir.join(&r[11]);
        reports.push(RunReport {
            rung: rung_from_label(&r[1])?,
            seed: r[0].parse()?,
            batch_size: r[2].parse()?,
            lr: parse_num(&r[3])?,
            norm: r[4].to_string(),
            noise_sigma_sq: parse_num(&r[5])?,
            epochs: r[6].parse()?,
            iterations: r[7].parse()?,
            final_train_loss: parse_num(&r[8])?,
            final_train_error: parse_num(&r[9])?,
            final_val_error: parse_num(&r[10])?,
            epoch_log: read_epochs_csv(&run_dir.join("epochs.csv"))?,
            distance: read_distance_csv(&run_dir.join("distance.csv"))?,
            wall_clock_secs: 0.0,
        });
    }
    if reports.is_empty() {
        bail!("{} lists no runs", rungs_path.display());
    }
    write_ladder(&reports, &network, &dataset, dir)
}

pub struct AblationResult {
    pub reports: Vec<RunReport>,
    pub files: Vec<PathBuf>,
}

/// Runs the ladder and writes its report. When a rung fails, the runs that
/// finished are still written before the error is returned.
pub fn ablate(cfg: &RunConfig, train_data: &Dataset, val_data: &Dataset, dir: &Path) -> Result<AblationResult> {
    let network = network_name(cfg, train_data);
    let dataset = dataset_name(cfg);
    let hash = input_hash(cfg)?;
    match run_ablation(cfg, train_data, val_data) {
        Ok(reports) => {
            let files = emit_report(&reports, cfg, &network, &dataset, &hash, dir)?;
            Ok(AblationResult { reports, files })
        }
        Err(e) => {
            if !e.partial.is_empty() {
                emit_report(&e.partial, cfg, &network, &dataset, &hash, dir)?;
            }
            Err(anyhow::Error::new(e))
        }
    }
}

/// Runs the experiment named in the config and returns the files written.
pub fn execute(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    use crate::config::Experiment;
    let dir = cfg.out.as_path();
    let start = Instant::now();
    let mut files = match cfg.experiment {
        Experiment::Ablate => {
            let (tr, va) = load_data(cfg)?;
            return Ok(ablate(cfg, &tr, &va, dir)?.files);
        }
        Experiment::Report => return report(dir),
        Experiment::Train => {
            let (tr, va) = load_data(cfg)?;
            train(cfg, &tr, &va, dir)?.files
        }
        Experiment::RayScan => {
            let (tr, va) = load_data(cfg)?;
            let model = match &cfg.ray_scan.model {
                Some(path) => Mlp::load(path)?,
                None => train(cfg, &tr, &va, dir)?.model,
            };
            ray_scan(cfg, &model, &tr, dir)?.files
        }
        Experiment::CovVerify => cov_verify(cfg, dir)?.files,
        Experiment::Walk => walk(cfg, dir)?.files,
        Experiment::Logistic => logistic(cfg, dir)?.files,
        Experiment::Fit => fit(cfg, dir)?.files,
    };
    let hash = input_hash(cfg)?;
    files.extend(write_snapshot(dir, cfg, &hash, start.elapsed().as_secs_f64())?);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn potential_specs() {
        let mut cfg = RunConfig::defaults(Experiment::Walk);
        assert!(matches!(potential_spec(&cfg), PotentialSpec::Sinai { increment_std } if increment_std == 1.0));
        cfg.walk.potential = PotentialKind::Fourier;
        cfg.walk.alpha = 1.5;
        match potential_spec(&cfg) {
            PotentialSpec::Fourier(s) => {
                assert_eq!(s.alpha, 1.5);
                assert_eq!(s.strength, 3.0);
                assert_eq!(s.num_features, 48);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distance_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let series = DistanceSeries::from_points(&[(0, 0.0), (10, 0.5), (20, 0.75)]).unwrap();
        let path = dir.path().join("d.csv");
        write_table(&path, &crate::report::DISTANCE_HEADER, &crate::report::distance_rows(&series)).unwrap();
        let back = read_distance_csv(&path).unwrap();
        assert_eq!(back.entries().len(), 3);
        assert_eq!(back.entries()[2].distance, 0.75);
        assert!(back.entries()[2].train_loss.is_nan());
    }
}
