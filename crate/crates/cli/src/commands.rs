use std::path::PathBuf;

use aloe_core::classifier::write_checkpoint;
use aloe_core::embeddings::{generate_synthetic, import_csv, read_dataset, write_dataset};
use aloe_core::harness::{
    baseline_full_data, final_table_csv, format_cell, read_cell_logs, run_cell, run_sweep, write_cell, write_reports,
    CellLog, RunManifest,
};
use aloe_core::{AcquisitionStrategy, SyntheticSpec, TrainConfig};

use crate::args::{BaselineArgs, Command, ImportArgs, ReportArgs, RunArgs, SweepArgs, SynthArgs};
use crate::error::CliError;
use crate::serve;

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::ImportCsv(a) => import(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Baseline(a) => baseline(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve::run_blocking(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        classes: a.classes,
        dim: a.dim,
        per_class: a.per_class,
        separation: a.separation,
        seed: a.seed,
    };
    let d = generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_dataset(&d, &a.out)?;
    println!("wrote {} ({} rows, dim {}, {} classes)", a.out.display(), d.len(), d.dim(), d.num_classes());
    Ok(())
}

fn import(a: ImportArgs) -> Result<(), CliError> {
    if !a.classes.is_empty() && !a.unlabeled {
        return Err(CliError::Usage("--classes only applies with --unlabeled".into()));
    }
    let mut d = import_csv(&a.input, a.dim, !a.unlabeled)?;
    if !a.classes.is_empty() {
        d = d.with_classes(a.classes)?;
    }
    write_dataset(&d, &a.out)?;
    println!("wrote {} ({} rows, dim {}, classes {:?})", a.out.display(), d.len(), d.dim(), d.classes());
    Ok(())
}

fn print_cell(cell: &CellLog) {
    let s = &cell.summary;
    println!(
        "{}: final test {} over {} runs, {} labels",
        cell.strategy,
        format_cell(s.final_test_accuracy),
        s.runs,
        s.total_labels.mean
    );
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let manifest = a.manifest.as_deref().map(RunManifest::load).transpose()?;
    let mut config = manifest.as_ref().map(|m| m.experiment.clone()).unwrap_or_default();
    let strategy = AcquisitionStrategy::new(
        a.strategy
            .or(manifest.as_ref().and_then(|m| m.strategies.first().copied()))
            .unwrap_or(config.strategy.rule),
        a.mode
            .or(manifest.as_ref().and_then(|m| m.modes.first().copied()))
            .unwrap_or(config.strategy.mode),
    );
    a.experiment.apply(&mut config);
    config.strategy = strategy;
    config.validate()?;
    let data = a
        .data
        .or(manifest.as_ref().map(|m| m.dataset.clone()))
        .ok_or_else(|| CliError::Usage("--data (or --manifest) is required".into()))?;
    let out = a
        .out
        .or(manifest.as_ref().map(|m| m.output.clone()))
        .ok_or_else(|| CliError::Usage("--out (or --manifest) is required".into()))?;
    let parallel = a.parallel || manifest.is_some_and(|m| m.parallel);

    let dataset = read_dataset(&data)?;
    let cell = run_cell(&dataset, &config, strategy, parallel)?;
    write_cell(&out, &cell)?;
    write_reports(&out, std::slice::from_ref(&cell), &[])?;
    print_cell(&cell);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut m = RunManifest::load(&a.manifest)?;
    if let Some(d) = a.data {
        m.dataset = d;
    }
    if let Some(o) = a.out {
        m.output = o;
    }
    if !a.strategies.is_empty() {
        m.strategies = a.strategies;
    }
    if !a.modes.is_empty() {
        m.modes = a.modes;
    }
    m.parallel |= a.parallel;
    a.experiment.apply(&mut m.experiment);
    let report = run_sweep(&m)?;
    for cell in &report.cells {
        print_cell(cell);
    }
    for f in &report.failures {
        eprintln!("{}: FAILED: {}", f.strategy, f.error);
    }
    println!("reports written to {}", m.output.display());
    if report.cells.is_empty() && !report.failures.is_empty() {
        return Err(CliError::Runtime("every cell failed".into()));
    }
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<(), CliError> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    cfg.validate()?;
    let dataset = read_dataset(&a.data)?;
    let (clf, result) = baseline_full_data(&dataset, &cfg)?;
    if let Some(path) = &a.save {
        write_checkpoint(&clf, path)?;
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&result).map_err(|e| CliError::Runtime(e.to_string()))?);
    } else {
        println!(
            "train {} samples: train {:.4}, validation {:.4}, test {:.4}",
            result.train_size, result.train_accuracy, result.val_accuracy, result.test_accuracy
        );
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let cells = read_cell_logs(&a.dir)?;
    if cells.is_empty() {
        return Err(CliError::Data(format!("no cell logs under {}", a.dir.join("cells").display())));
    }
    let out: PathBuf = a.out.unwrap_or_else(|| a.dir.clone());
    write_reports(&out, &cells, &[])?;
    print!("{}", final_table_csv(&cells)?);
    Ok(())
}
