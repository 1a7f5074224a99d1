use std::fmt::Write as _;
use std::path::Path;

use tailrisk::cv::{self, CvMode, CvPlan, DataSource};
use tailrisk::data::{read_csv, synthetic_parabola, PreprocessSpec, Provenance};
use tailrisk::diagnostics::{compare_models, histogram_with_fit, return_level_data, worst_case_quantile, RowFit, StatementContext};
use tailrisk::fitting::{
    bootstrap_ci, fit_gev_mle, fit_gpd_mle, gumbel_hypothesis_check, Family, FitOptions, FitResult, FittedParams,
    GumbelDecision,
};
use tailrisk::models::ModelSpec;
use tailrisk::rng::stream;
use tailrisk::threshold::{quantile_grid, stability_curve, suggest_threshold, StabilityOptions};
use tailrisk::Error;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::output::*;

pub const DEFAULT_CONFIDENCES: [f64; 3] = [0.90, 0.95, 0.99];

const LEAKAGE_NOTE: &str = "features were z-score normalized on the full dataset before the cross-validation \
                            splits, so the normalization statistics include the validation rows";
const EXCEEDANCE_NOTE: &str = "threshold exceedances are stored as raw errors above u; the GPD is fitted with \
                               location u, which is the same as fitting the excesses x - u with location 0";
const FRESH_DATA_NOTE: &str = "a fresh synthetic sample was drawn for every repetition";
const FIXED_DATA_NOTE: &str = "one fixed dataset was re-split for every repetition";

/// Per-invocation bookkeeping: input checksums and non-fatal warnings.
#[derive(Default)]
pub struct Context {
    pub inputs: Vec<FileRecord>,
    pub warnings: Vec<String>,
    pub messages: Vec<String>,
}

/// Runs `command`, writing its outputs and manifest.
pub fn execute(command: &Command, ctx: &mut Context) -> CliResult<()> {
    let mut out = match command {
        Command::Replay(args) => return replay(args, ctx),
        Command::Simulate(a) => simulate(a, ctx)?,
        Command::Run(a) => run(a, ctx)?,
        Command::Fit(a) => fit(a, ctx)?,
        Command::Stability(a) => stability(a, ctx)?,
        Command::Report(a) => report(a, ctx)?,
        Command::Compare(a) => compare(a, ctx)?,
    };
    let outputs = out.written.clone();
    RunManifest::new(command, &ctx.inputs, &outputs).write(&mut out)
}

fn simulate(args: &SimulateArgs, ctx: &mut Context) -> CliResult<OutDir> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let data = synthetic_parabola(args.n, &mut stream(args.seed, &[]))?;
    let mut bytes = Vec::new();
    data.dump_csv(&mut bytes, b',')?;
    let mut out = OutDir::create(&args.out)?;
    out.write_bytes("data.csv", &bytes)?;
    ctx.messages.push(format!("wrote {} rows to {}", args.n, out.path("data.csv").display()));
    Ok(out)
}

fn build_source(d: &DataArgs, ctx: &mut Context) -> CliResult<(DataSource, DataSummary, Vec<String>)> {
    if let Some(block) = d.synthetic_block {
        if block < 2 {
            return Err(CliError::Usage("--synthetic-block must be at least 2".into()));
        }
        let summary = DataSummary {
            source: "synthetic_parabola".into(),
            path: None,
            block_size: Some(block),
            n_rows: None,
            feature_names: vec!["x".into()],
            target: "y".into(),
            preprocessing: None,
        };
        return Ok((DataSource::SyntheticParabola { block_size: block }, summary, vec![FRESH_DATA_NOTE.into()]));
    }
    let Some(path) = &d.data else {
        return Err(CliError::Usage("give either --data <CSV> or --synthetic-block <N>".into()));
    };
    let Some(target) = &d.target else {
        return Err(CliError::Usage("--data needs --target <COLUMN>".into()));
    };
    if !d.delimiter.is_ascii() {
        return Err(CliError::Usage("--delimiter must be a single ASCII character".into()));
    }
    let spec = PreprocessSpec {
        target_column: target.clone(),
        drop_columns: d.drop_columns.clone(),
        drop_non_numeric: !d.keep_non_numeric,
        drop_rows_with_missing: !d.keep_missing,
        zscore_normalize: !d.no_normalize,
        delimiter: d.delimiter as u8,
    };
    let bytes = read_input(path, &mut ctx.inputs)?;
    let data = read_csv(bytes.as_slice(), &spec)?;
    let log = match &data.provenance {
        Provenance::File { log, .. } => Some(log.clone()),
        _ => None,
    };
    let summary = DataSummary {
        source: "file".into(),
        path: Some(path.display().to_string()),
        block_size: None,
        n_rows: Some(data.n_rows()),
        feature_names: data.feature_names.clone(),
        target: data.target_name.clone(),
        preprocessing: log,
    };
    let mut notes = vec![FIXED_DATA_NOTE.to_string()];
    if spec.zscore_normalize {
        notes.push(LEAKAGE_NOTE.into());
    }
    Ok((DataSource::Fixed(data), summary, notes))
}

fn plan_from(p: &PlanArgs, mode: CvMode) -> CvPlan {
    CvPlan {
        n_repetitions: p.repetitions,
        train_fraction: p.train_fraction,
        error_kind: p.error.into(),
        mode,
        seed: p.seed,
    }
}

fn run(args: &RunArgs, ctx: &mut Context) -> CliResult<OutDir> {
    let spec = args.hyper.spec(&args.model)?;
    let mode = match (args.mode, args.threshold) {
        (ModeArg::Block, None) => CvMode::BlockMaxima,
        (ModeArg::Block, Some(_)) => return Err(CliError::Usage("--threshold needs --mode threshold".into())),
        (ModeArg::Threshold, Some(u)) => CvMode::Threshold { u },
        (ModeArg::Threshold, None) => return Err(CliError::Usage("--mode threshold needs --threshold <U>".into())),
    };
    let plan = plan_from(&args.plan, mode);
    plan.validate()?;
    let (source, data, mut notes) = build_source(&args.data, ctx)?;
    let sample = cv::run(&source, &spec, &plan, args.role.into())?;
    if matches!(mode, CvMode::Threshold { .. }) {
        notes.push(EXCEEDANCE_NOTE.into());
    }
    if sample.n_failed_splits > 0 {
        ctx.warnings.push(format!("{} of {} splits failed to train and were skipped", sample.n_failed_splits, plan.n_repetitions));
    }
    ctx.messages.push(format!(
        "{} values collected from {} splits (mean metric {:.4})",
        sample.values.len(),
        plan.n_repetitions - sample.n_failed_splits,
        sample.mean_metric()
    ));
    let mut out = OutDir::create(&args.out)?;
    out.write_json("extremes.json", &ExtremesFile { format_version: FORMAT_VERSION, data, notes, sample })?;
    Ok(out)
}

fn fit_family(family: Family, sample: &[f64], u: f64, opts: &FitOptions) -> tailrisk::Result<FitResult> {
    match family {
        Family::Gev => fit_gev_mle(sample, opts),
        Family::Gpd => fit_gpd_mle(sample, u, opts),
    }
}

fn describe(params: &FittedParams) -> String {
    match params {
        FittedParams::Gev(p) => format!("GEV xi={:.4} mu={:.4} sigma={:.4}", p.xi, p.mu, p.sigma),
        FittedParams::Gpd(p) => format!("GPD xi={:.4} sigma={:.4} (u={})", p.xi, p.sigma, p.u),
    }
}

fn fit(args: &FitArgs, ctx: &mut Context) -> CliResult<OutDir> {
    let bytes = read_input(&args.extremes, &mut ctx.inputs)?;
    let ex: ExtremesFile = parse_versioned(&args.extremes, &bytes)?;
    let sample = &ex.sample;
    let family: Family = args.family.map(Into::into).unwrap_or(match sample.plan.mode {
        CvMode::BlockMaxima => Family::Gev,
        CvMode::Threshold { .. } => Family::Gpd,
    });
    let threshold = match family {
        Family::Gev => None,
        Family::Gpd => Some(
            args.threshold
                .or(sample.threshold())
                .ok_or_else(|| CliError::Usage("a GPD fit of block maxima needs --threshold".into()))?,
        ),
    };
    let values: Vec<f64> = match threshold {
        Some(u) => sample.values.iter().copied().filter(|&v| v > u).collect(),
        None => sample.values.clone(),
    };
    let u = threshold.unwrap_or(0.0);
    let opts = FitOptions::default();
    let context = StatementContext {
        model: Some(sample.model.name().to_string()),
        error_kind: Some(sample.plan.error_kind),
        mode: Some(sample.plan.mode),
    };
    let mut notes = ex.notes.clone();
    if family == Family::Gpd && !notes.iter().any(|n| n == EXCEEDANCE_NOTE) {
        notes.push(EXCEEDANCE_NOTE.into());
    }
    let mut file = FitFile {
        format_version: FORMAT_VERSION,
        status: FitStatus::Fitted,
        family,
        cause: None,
        fit: None,
        bootstrap: None,
        gumbel: None,
        threshold,
        context,
        mean_metric: Some(sample.mean_metric()),
        notes,
        values,
    };

    match fit_family(family, &file.values, u, &opts) {
        Err(e @ Error::DegenerateSample { .. }) => {
            ctx.warnings.push(format!("fit not available: {e}"));
            file.status = FitStatus::NotAvailable;
            file.cause = Some(e.to_string());
        }
        Err(e) => return Err(e.into()),
        Ok(f) if !f.converged => return Err(Error::NotConverged.into()),
        Ok(mut f) => {
            if args.bootstrap.bootstrap > 0 {
                let b = bootstrap_ci(
                    &file.values,
                    |s| fit_family(family, s, u, &opts),
                    args.bootstrap.bootstrap,
                    args.bootstrap.level,
                    args.bootstrap.seed,
                )?;
                f = f.with_xi_interval(b.xi());
                if family == Family::Gev {
                    file.gumbel = Some(gumbel_hypothesis_check(&file.values, &f, b.xi(), &opts)?);
                }
                if b.n_failed > 0 {
                    ctx.warnings.push(format!("{} of {} bootstrap replicates failed and were dropped", b.n_failed, b.n_bootstrap));
                }
                file.bootstrap = Some(b);
            }
            ctx.messages.push(format!("{} from {} values", describe(&f.params), file.values.len()));
            file.fit = Some(f);
        }
    }
    let mut out = OutDir::create(&args.out)?;
    out.write_json("fit.json", &file)?;
    Ok(out)
}

fn read_error_sample(path: &Path, bytes: &[u8]) -> CliResult<Vec<f64>> {
    let json_err = |source| CliError::Json { path: path.to_path_buf(), source };
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(json_err)?;
    let array = match &value {
        serde_json::Value::Object(map) => map.get("values").cloned().unwrap_or(serde_json::Value::Null),
        other => other.clone(),
    };
    serde_json::from_value(array).map_err(json_err)
}

fn stability(args: &StabilityArgs, ctx: &mut Context) -> CliResult<OutDir> {
    if args.bootstrap.bootstrap == 0 {
        return Err(CliError::Usage("stability needs bootstrap intervals (--bootstrap >= 100)".into()));
    }
    let bytes = read_input(&args.errors, &mut ctx.inputs)?;
    let errors = read_error_sample(&args.errors, &bytes)?;
    let grid = if args.thresholds.is_empty() {
        quantile_grid(&errors, args.grid_points, args.grid_lo, args.grid_hi)?
    } else {
        args.thresholds.clone()
    };
    let options = StabilityOptions {
        fit: FitOptions::default(),
        n_bootstrap: args.bootstrap.bootstrap,
        level: args.bootstrap.level,
        seed: args.bootstrap.seed,
    };
    let curve = stability_curve(&errors, &grid, &options)?;
    let suggestion = suggest_threshold(&curve);

    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                p.u.to_string(),
                num(p.xi),
                num(p.xi_ci.map(|c| c.lower)),
                num(p.xi_ci.map(|c| c.upper)),
                num(p.sigma),
                p.n_exceedances.to_string(),
            ]
        })
        .collect();
    let mut out = OutDir::create(&args.out)?;
    out.write_csv("stability.csv", &["u", "xi", "xi_lo", "xi_hi", "sigma", "n_exc"], &rows)?;
    let file = StabilityFile {
        format_version: FORMAT_VERSION,
        curve,
        suggestion: suggestion.as_ref().ok().cloned(),
        suggestion_error: suggestion.as_ref().err().map(|e| e.to_string()),
    };
    out.write_json("stability.json", &file)?;
    let s = suggestion?;
    if !s.stable {
        ctx.warnings.push("no stable threshold region; the suggestion is the least unstable point".into());
    }
    ctx.messages.push(format!("suggested threshold u = {} ({})", s.u, s.rationale));
    Ok(out)
}

fn report(args: &ReportArgs, ctx: &mut Context) -> CliResult<OutDir> {
    let bytes = read_input(&args.fit, &mut ctx.inputs)?;
    let ff: FitFile = parse_versioned(&args.fit, &bytes)?;
    let confidences: Vec<f64> = if args.confidence.is_empty() {
        DEFAULT_CONFIDENCES.to_vec()
    } else {
        args.confidence.clone()
    };
    if let Some(c) = confidences.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
        return Err(CliError::Usage(format!("confidence {c} is outside (0, 1)")));
    }
    let mut notes = ff.notes.clone();
    let mut text = String::new();
    let mut report = ReportFile {
        format_version: FORMAT_VERSION,
        status: ff.status,
        statements: Vec::new(),
        gumbel: ff.gumbel.clone(),
        return_levels: None,
        histogram: None,
        notes: Vec::new(),
    };
    let mut out = OutDir::create(&args.out)?;

    match (&ff.status, &ff.fit) {
        (FitStatus::Fitted, Some(fit)) => {
            for &c in &confidences {
                report.statements.push(worst_case_quantile(fit, c, &ff.context, ff.bootstrap.as_ref())?);
            }
            let rl = return_level_data(&ff.values, fit, args.max_points)?;
            let hist = histogram_with_fit(&ff.values, fit, args.bins, ff.mean_metric)?;

            let _ = writeln!(text, "Fit: {} (n = {}, log-likelihood {:.4})", describe(&fit.params), fit.n_samples, fit.log_likelihood);
            if let Some(b) = &ff.bootstrap {
                for (name, ci) in b.names.iter().zip(&b.intervals) {
                    let _ = writeln!(
                        text,
                        "  {name}: {:.0}% bootstrap interval [{:.4}, {:.4}] (B = {}, {} failed)",
                        ci.level * 100.0,
                        ci.lower,
                        ci.upper,
                        b.n_bootstrap,
                        b.n_failed
                    );
                }
            }
            if let Some(g) = &ff.gumbel {
                let verdict = match (g.decision, g.lr_statistic) {
                    (GumbelDecision::PreferGumbel, Some(lr)) => format!(
                        "xi interval contains 0 and the likelihood-ratio statistic {lr:.4} is below {:.4}; the Gumbel model is adequate",
                        g.critical_value
                    ),
                    (GumbelDecision::KeepGev, Some(lr)) => format!(
                        "xi interval contains 0 but the likelihood-ratio statistic {lr:.4} exceeds {:.4}; keeping the GEV",
                        g.critical_value
                    ),
                    _ => "xi interval excludes 0; keeping the GEV".to_string(),
                };
                let _ = writeln!(text, "Gumbel check: {verdict}");
            }
            if let Some(m) = ff.mean_metric {
                let _ = writeln!(text, "Mean metric over splits: {m:.4}");
            }
            let _ = writeln!(text, "Worst-case quantiles:");
            for s in &report.statements {
                let _ = writeln!(text, "  - {}", s.statement);
            }
            let rl_rows: Vec<Vec<String>> = rl
                .probabilities
                .iter()
                .zip(&rl.theoretical_quantiles)
                .zip(&rl.empirical_quantiles)
                .map(|((p, t), e)| vec![p.to_string(), t.to_string(), e.to_string()])
                .collect();
            out.write_csv("return_levels.csv", &["probability", "theoretical", "empirical"], &rl_rows)?;
            let h_rows: Vec<Vec<String>> = hist
                .bins
                .iter()
                .map(|b| {
                    vec![
                        b.left.to_string(),
                        b.right.to_string(),
                        b.center.to_string(),
                        b.empirical_density.to_string(),
                        b.fitted_density.to_string(),
                    ]
                })
                .collect();
            out.write_csv("histogram.csv", &["left", "right", "center", "empirical_density", "fitted_density"], &h_rows)?;
            report.return_levels = Some(rl);
            report.histogram = Some(hist);
        }
        _ => {
            let cause = ff.cause.clone().unwrap_or_else(|| "no fit available".into());
            ctx.warnings.push(format!("report without fit: {cause}"));
            let _ = writeln!(text, "Fit: N/A ({cause})");
            notes.push(format!("N/A: {cause}"));
        }
    }
    if !notes.is_empty() {
        let _ = writeln!(text, "Notes:");
        for n in &notes {
            let _ = writeln!(text, "  - {n}");
        }
    }
    report.notes = notes;
    out.write_json("report.json", &report)?;
    out.write_bytes("report.txt", text.as_bytes())?;
    ctx.messages.push(text);
    Ok(out)
}

fn compare(args: &CompareArgs, ctx: &mut Context) -> CliResult<OutDir> {
    let names: Vec<String> = if args.models.is_empty() {
        ModelSpec::NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.models.clone()
    };
    let specs = names.iter().map(|n| args.hyper.spec(n)).collect::<CliResult<Vec<_>>>()?;
    let plan = plan_from(&args.plan, CvMode::BlockMaxima);
    plan.validate()?;
    let (source, data, notes) = build_source(&args.data, ctx)?;
    let rows = compare_models(&source, &specs, &plan, &FitOptions::default())?;

    let mut out = OutDir::create(&args.out)?;
    let mut table = Vec::with_capacity(rows.len());
    for row in &rows {
        let role = match row.role {
            cv::ScoreRole::Training => "training",
            cv::ScoreRole::Validation => "validation",
        };
        let (status, cause) = match &row.fit {
            RowFit::Fitted { .. } => ("fitted", String::new()),
            RowFit::NotAvailable { cause } => ("n/a", cause.clone()),
            RowFit::Failed { error } => ("failed", error.clone()),
        };
        if status != "fitted" {
            ctx.warnings.push(format!("{} ({role}): {status}: {cause}", row.model.name()));
        }
        let p = row.fitted().map(|f| f.params.values());
        let s = row.summary;
        table.push(vec![
            row.model.name().to_string(),
            role.to_string(),
            status.to_string(),
            num(p.as_ref().map(|v| v[0])),
            num(p.as_ref().map(|v| v[1])),
            num(p.as_ref().map(|v| v[2])),
            num(row.mean_metric),
            row.values.len().to_string(),
            num(s.map(|s| s.min)),
            num(s.map(|s| s.q1)),
            num(s.map(|s| s.median)),
            num(s.map(|s| s.q3)),
            num(s.map(|s| s.max)),
            cause,
        ]);
        let violin: Vec<Vec<String>> = row.values.iter().map(|v| vec![v.to_string()]).collect();
        out.write_csv(&format!("violin/{}_{role}.csv", row.model.name()), &["value"], &violin)?;
    }
    out.write_csv(
        "comparison.csv",
        &["model", "role", "status", "xi", "mu", "sigma", "mean_metric", "n", "min", "q1", "median", "q3", "max", "cause"],
        &table,
    )?;
    ctx.messages.push(format!("{} comparison rows", rows.len()));
    out.write_json("comparison.json", &ComparisonFile { format_version: FORMAT_VERSION, data, notes, rows })?;
    Ok(out)
}

fn replay(args: &ReplayArgs, ctx: &mut Context) -> CliResult<()> {
    let bytes = std::fs::read(&args.manifest).map_err(|e| CliError::io(&args.manifest, e))?;
    let manifest: RunManifest = parse_versioned(&args.manifest, &bytes)?;
    if matches!(manifest.invocation, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest never records a replay".into()));
    }
    if manifest.version != env!("CARGO_PKG_VERSION") {
        ctx.warnings.push(format!("manifest was written by version {}", manifest.version));
    }
    for rec in &manifest.inputs {
        let path = Path::new(&rec.path);
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let actual = sha256_hex(&data);
        if actual != rec.sha256 {
            return Err(CliError::Checksum { path: path.to_path_buf(), expected: rec.sha256.clone(), actual });
        }
    }
    let mut command = manifest.invocation.clone();
    command.set_out(args.out.clone());
    let mut inner = Context::default();
    execute(&command, &mut inner)?;
    ctx.warnings.append(&mut inner.warnings);

    let produced: RunManifest = parse_versioned(
        &args.out.join(crate::manifest::MANIFEST_FILE),
        &std::fs::read(args.out.join(crate::manifest::MANIFEST_FILE)).map_err(|e| CliError::io(&args.out, e))?,
    )?;
    for (want, got) in manifest.outputs.iter().zip(&produced.outputs) {
        if want != got {
            return Err(CliError::ReplayMismatch { file: want.path.clone() });
        }
    }
    if manifest.outputs.len() != produced.outputs.len() {
        return Err(CliError::ReplayMismatch { file: "output list".into() });
    }
    ctx.messages.push(format!(
        "replayed `{}`: {} outputs identical to the manifest",
        command.name(),
        produced.outputs.len()
    ));
    Ok(())
}
