use std::fs;
use std::path::Path;

use eblr_core::data::{
    expand_calendar, generate_synthetic, load_panel_csv, write_panel_csv, CovariateSpec,
    CovariateValue, CsvSchema, Observation, PanelDataset, SynthConfig, CALENDAR_IS_WEEKEND,
    DAY_OF_MONTH, DAY_OF_WEEK, IS_PROMOTION, IS_WEEKEND, MONTH, YEAR,
};
use eblr_core::explain::write_learning_curve_csv;
use eblr_core::{
    backtest, feature_importance, fit_eblr, load_model, predict_quantiles, rule_report,
};

use crate::args::{
    default_series_col, quantile_column, quantile_levels, DataArgs, EvaluateArgs, ExplainArgs,
    ForecastArgs, SynthArgs, TrainArgs,
};
use crate::error::{CliError, CliResult};

const CALENDAR_COVARIATES: [&str; 5] =
    [DAY_OF_WEEK, DAY_OF_MONTH, MONTH, YEAR, CALENDAR_IS_WEEKEND];

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Refuses outputs that exist (unless forced), repeat each other, or point at an input.
fn check_outputs(outputs: &[&Path], inputs: &[&Path], force: bool) -> CliResult<()> {
    for (i, out) in outputs.iter().enumerate() {
        if outputs[..i].iter().any(|o| same_file(o, out)) {
            return Err(CliError::Validation(format!(
                "output `{}` is given twice",
                out.display()
            )));
        }
        if inputs.iter().any(|inp| same_file(inp, out)) {
            return Err(CliError::Validation(format!(
                "output `{}` would overwrite an input file",
                out.display()
            )));
        }
        if out.exists() && !force {
            return Err(CliError::Validation(format!(
                "`{}` exists; pass --force to overwrite",
                out.display()
            )));
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

fn read_header(path: &Path) -> CliResult<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect())
}

fn load_data(args: &DataArgs) -> CliResult<PanelDataset> {
    let header = read_header(&args.input)?;
    let schema = args.csv_schema(&header)?;
    let ds = load_panel_csv(&args.input, &schema)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.input.display())))?;
    Ok(if args.calendar {
        expand_calendar(&ds)?
    } else {
        ds
    })
}

fn data_inputs(args: &DataArgs) -> Vec<&Path> {
    std::iter::once(args.input.as_path())
        .chain(args.schema.as_deref())
        .collect()
}

pub fn synth(args: &SynthArgs, seed: u64, force: bool) -> CliResult<()> {
    let cfg = SynthConfig {
        length: args.length,
        noise_std: args.noise_std,
        promo_probability: args.promo_probability,
        rng_seed: seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    check_outputs(&[&args.output], &[], force)?;
    let ds = generate_synthetic(&cfg)?;
    let mut buf = Vec::new();
    write_panel_csv(&ds, &mut buf)?;
    write_file(&args.output, &buf)?;

    let y = ds.targets();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (min, max) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (w, p) = (
        ds.covariate_index(IS_WEEKEND),
        ds.covariate_index(IS_PROMOTION),
    );
    let on = |r: &Observation, j: Option<usize>| {
        j.is_some_and(|j| r.covariates[j] == CovariateValue::Number(1.0))
    };
    let (mut weekend, mut promo, mut both) = (0usize, 0usize, 0usize);
    for r in ds.series().iter().flat_map(|s| &s.rows) {
        weekend += usize::from(on(r, w));
        promo += usize::from(on(r, p));
        both += usize::from(on(r, w) && on(r, p));
    }
    println!("wrote {} rows to {}", y.len(), args.output.display());
    println!("target mean {mean:.2}, sd {sd:.2}, min {min:.2}, max {max:.2}");
    println!(
        "weekend share {:.3}, promotion share {:.3}, weekend promotion share {:.3}",
        weekend as f64 / n,
        promo as f64 / n,
        both as f64 / n
    );
    Ok(())
}

pub fn train(args: &TrainArgs, force: bool) -> CliResult<()> {
    let cfg = args.model.config()?;
    check_outputs(
        &[&args.output, &args.curve],
        &data_inputs(&args.data),
        force,
    )?;
    let ds = load_data(&args.data)?;
    let model = fit_eblr(&ds, &cfg)?;
    write_file(&args.output, model.to_json()?.as_bytes())?;
    let mut curve = Vec::new();
    write_learning_curve_csv(&model, &mut curve)?;
    write_file(&args.curve, &curve)?;

    println!(
        "trained on {} rows; {} rules, stopped by {:?}",
        ds.n_rows(),
        model.rules.len(),
        model.stop_reason
    );
    for rec in &model.iteration_log {
        println!(
            "  [{}] {} (train NRMSE {:.4})",
            rec.iteration, rec.rule, rec.train_nrmse
        );
    }
    println!(
        "train NRMSE {:.4} -> {:.4}",
        model.base_train_nrmse, model.final_train_nrmse
    );
    for w in &model.final_model.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

/// Future rows are read against the model's covariate snapshot. Calendar covariates the
/// file lacks are derived from its timestamps.
fn load_future(
    path: &Path,
    model: &eblr_core::EblrModel,
    series_col: Option<&str>,
    time_col: &str,
) -> CliResult<PanelDataset> {
    let header = read_header(path)?;
    let mut specs = Vec::new();
    let mut needs_calendar = false;
    for cov in &model.schema {
        if header.contains(&cov.name) {
            specs.push(CovariateSpec::from_covariate(cov));
        } else if CALENDAR_COVARIATES.contains(&cov.name.as_str()) {
            needs_calendar = true;
        } else {
            return Err(CliError::Runtime(format!(
                "{}: column `{}` required by the model is missing",
                path.display(),
                cov.name
            )));
        }
    }
    let schema = CsvSchema {
        series_id: series_col
            .map(str::to_owned)
            .or_else(|| default_series_col(&header)),
        timestamp: time_col.to_owned(),
        target: None,
        covariates: Some(specs),
    };
    let ds = load_panel_csv(path, &schema)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(if needs_calendar {
        expand_calendar(&ds)?
    } else {
        ds
    })
}

pub fn forecast(args: &ForecastArgs, force: bool) -> CliResult<()> {
    let levels = quantile_levels(&args.quantiles)?;
    check_outputs(&[&args.output], &[&args.model, &args.input], force)?;
    let model = load_model(&args.model)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.model.display())))?;
    let future = load_future(
        &args.input,
        &model,
        args.series_col.as_deref(),
        &args.time_col,
    )?;
    let dist = predict_quantiles(&model, &future, &levels)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "series_id".to_owned(),
        "timestamp".to_owned(),
        "point".to_owned(),
    ];
    header.extend(levels.iter().map(|&q| quantile_column(q)));
    w.write_record(&header)?;
    for d in &dist {
        let mut rec = vec![
            d.series_id.clone(),
            d.timestamp.to_string(),
            d.point.to_string(),
        ];
        rec.extend(d.quantiles.iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&args.output, &bytes)?;
    println!(
        "wrote {} forecast rows to {}",
        dist.len(),
        args.output.display()
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, force: bool) -> CliResult<()> {
    let cfg = args.model.config()?;
    let levels = quantile_levels(&args.quantiles)?;
    if args.n_windows == 0 || args.horizon == 0 {
        return Err(CliError::Validation(
            "--n-windows and --horizon must be positive".into(),
        ));
    }
    check_outputs(
        &[&args.json_out, &args.csv_out],
        &data_inputs(&args.data),
        force,
    )?;
    let ds = load_data(&args.data)?;
    let report = backtest(&ds, &cfg, args.n_windows, args.horizon, &levels)?;
    write_file(&args.json_out, report.to_json()?.as_bytes())?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&args.csv_out, &buf)?;

    let a = &report.aggregates;
    println!("{} windows of horizon {}", report.n_windows, report.horizon);
    println!(
        "NRMSE {:.4}, ND {:.4}, mean WSPL {:.4}",
        a.nrmse, a.nd, a.mean_wspl
    );
    Ok(())
}

fn is_text(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("txt"))
}

pub fn explain(args: &ExplainArgs, force: bool) -> CliResult<()> {
    check_outputs(&[&args.report, &args.importance], &[&args.model], force)?;
    let model = load_model(&args.model)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.model.display())))?;
    let report = rule_report(&model);
    let scores = feature_importance(&model)?;
    let text = report.to_text();
    let body = if is_text(&args.report) {
        text.clone()
    } else {
        report.to_json()?
    };
    write_file(&args.report, body.as_bytes())?;
    let mut buf = Vec::new();
    scores.write_csv(&mut buf, Some(args.top))?;
    write_file(&args.importance, &buf)?;

    if model.rules.is_empty() {
        eprintln!("warning: the model has no rules; importance file holds only its header");
    }
    print!("{text}");
    Ok(())
}
