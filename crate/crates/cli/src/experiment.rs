//! Runs a configured recovery experiment end to end: acquire measurements,
//! solve every (measurement, prior) cell, and emit results.
//!
//! Independent cells run concurrently; all file output happens afterwards
//! in a fixed order, so two runs with the same configuration produce
//! byte-identical artifacts.

use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use nalgebra::DVector;
use rayon::prelude::*;

use recover_core::diagnostics::error_report;
use recover_core::forward::{
    acquire, blur_model, blur_model_2d, identity_model, partial_fourier_model,
    partial_fourier_model_2d, subsample_model, LinearForwardModel, Measurement, MeasurementData,
    MeasurementSet,
};
use recover_core::signals::{sample_example, sample_example_image, Grid, Image, ImageId, SignalId};
use recover_core::solver::{gsbl_run, mmv_gsbl_run, HyperParams, PosteriorResult};
use recover_core::transforms::{local_transform, residual_transform, stack_2d, PriorOp, PriorTransform};
use recover_core::uq::conditional_posterior;

use crate::config::{ExperimentConfig, ModelKindSpec, ModelSpec, PriorKind, PriorSpec, RecoveryMode, Space};
use crate::io;

/// One line of the machine-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryEntry {
    pub label: String,
    pub prior: String,
    pub mode: RecoveryMode,
    pub mean_abs: f64,
    pub iters: usize,
    pub converged: bool,
}

struct Prepared {
    label: String,
    truth: DVector<f64>,
    measurement: Measurement,
}

fn build_model(spec: &ModelSpec, space: Space, n: usize) -> anyhow::Result<LinearForwardModel> {
    let len = match space {
        Space::Signal => n,
        Space::Image => n * n,
    };
    let gamma = || spec.gamma.expect("validated");
    let ratio = || spec.ratio.expect("validated");
    let mask_seed = || spec.mask_seed.expect("validated");
    Ok(match (spec.kind, space) {
        (ModelKindSpec::Identity, _) => identity_model(len),
        (ModelKindSpec::Blur, Space::Signal) => blur_model(n, gamma())?,
        (ModelKindSpec::Blur, Space::Image) => blur_model_2d(n, gamma())?,
        (ModelKindSpec::Subsample, _) => subsample_model(len, ratio(), mask_seed())?,
        (ModelKindSpec::PartialFourier, Space::Signal) => partial_fourier_model(n, ratio(), mask_seed())?,
        (ModelKindSpec::PartialFourier, Space::Image) => {
            partial_fourier_model_2d(n, ratio(), mask_seed())?
        }
    })
}

fn prepare_measurements(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Prepared>> {
    let mut prepared = Vec::with_capacity(cfg.measurements.len());
    for (i, spec) in cfg.measurements.iter().enumerate() {
        let (label, truth) = match cfg.space {
            Space::Signal => {
                let id = spec
                    .signal
                    .as_deref()
                    .context("signal measurements need a `signal` id")?;
                let sig = SignalId::from_str(id)?;
                let grid = Grid::new(cfg.n)?;
                (format!("m{i}_{id}"), sample_example(sig, &grid)?.values().clone())
            }
            Space::Image => {
                if let Some(id) = spec.signal.as_deref() {
                    let img = ImageId::from_str(id)?;
                    (format!("m{i}_{id}"), sample_example_image(img, cfg.n)?.to_vector())
                } else {
                    let source = spec.image.as_ref().expect("validated");
                    let stem = source
                        .path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "image".to_string());
                    let img = io::load_image(&source.path, cfg.n, source.crop)?;
                    (format!("m{i}_{stem}"), img.to_vector())
                }
            }
        };
        let model = build_model(&spec.model, cfg.space, cfg.n)?;
        let measurement = acquire(&truth, model, spec.snr_db, spec.noise_seed)?;
        prepared.push(Prepared { label, truth, measurement });
    }
    Ok(prepared)
}

fn build_prior(spec: &PriorSpec, space: Space, n: usize) -> anyhow::Result<Box<dyn PriorOp + Send + Sync>> {
    let base = build_base_transform(spec, n)?;
    Ok(match space {
        Space::Signal => Box::new(base),
        Space::Image => Box::new(stack_2d(base, n)?),
    })
}

fn build_base_transform(spec: &PriorSpec, n: usize) -> anyhow::Result<PriorTransform> {
    Ok(match spec.kind {
        PriorKind::Local => local_transform(n, spec.p)?,
        PriorKind::Residual => residual_transform(n, spec.p, spec.zeta)?,
    })
}

fn write_measurement_files(out: &Path, cfg: &ExperimentConfig, prepared: &[Prepared]) -> anyhow::Result<()> {
    for p in prepared {
        match cfg.space {
            Space::Signal => {
                let grid = Grid::new(cfg.n)?;
                io::write_signal_csv(
                    &out.join(format!("truth_{}.csv", p.label)),
                    grid.points(),
                    &p.truth,
                    &p.truth,
                )?;
            }
            Space::Image => {
                let img = Image::from_vector(cfg.n, &p.truth)?;
                io::write_pgm(&out.join(format!("truth_{}.pgm", p.label)), &img)?;
            }
        }
        write_measurement_data(out, cfg, p)?;
    }
    Ok(())
}

fn write_measurement_data(out: &Path, cfg: &ExperimentConfig, p: &Prepared) -> anyhow::Result<()> {
    use std::io::Write;
    let path = out.join(format!("measurement_{}.csv", p.label));
    let file = std::fs::File::create(&path)?;
    let mut w = std::io::BufWriter::new(file);
    let model = p.measurement.model();
    match p.measurement.data() {
        MeasurementData::Complex(y) => {
            // Partial Fourier: retained mode or pixel index plus the
            // complex coefficient.
            writeln!(w, "index,re,im")?;
            let mask = model.mask().expect("fourier models are masked");
            for (row, &idx) in mask.iter().enumerate() {
                writeln!(w, "{idx},{},{}", y[row].re, y[row].im)?;
            }
        }
        MeasurementData::Real(y) => match model.mask() {
            Some(mask) => {
                writeln!(w, "index,y")?;
                for (row, &idx) in mask.iter().enumerate() {
                    writeln!(w, "{idx},{}", y[row])?;
                }
            }
            None => match cfg.space {
                Space::Signal => {
                    let grid = Grid::new(cfg.n)?;
                    writeln!(w, "s,y")?;
                    for (j, &s) in grid.points().iter().enumerate() {
                        writeln!(w, "{s},{}", y[j])?;
                    }
                }
                Space::Image => {
                    writeln!(w, "row,col,y")?;
                    for idx in 0..y.len() {
                        writeln!(w, "{},{},{}", idx % cfg.n, idx / cfg.n, y[idx])?;
                    }
                }
            },
        },
    }
    Ok(())
}

struct CellResult {
    prior_idx: usize,
    meas_idx: usize,
    result: PosteriorResult,
    /// Index of this measurement's recovery inside `result.x_map`.
    x_slot: usize,
}

/// Runs the configured experiment, writing all artifacts into `out`.
/// Returns the summary entries in emission order.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    verbose: bool,
) -> anyhow::Result<Vec<SummaryEntry>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let prepared = prepare_measurements(cfg)?;
    write_measurement_files(out, cfg, &prepared)?;

    let priors: Vec<(String, HyperParams, Box<dyn PriorOp + Send + Sync>)> = cfg
        .priors
        .iter()
        .map(|spec| {
            let mut hyper = cfg.hyper.to_hyper_params();
            if let Some(v) = spec.vartheta {
                hyper.vartheta = v;
            }
            Ok((spec.name(), hyper, build_prior(spec, cfg.space, cfg.n)?))
        })
        .collect::<anyhow::Result<_>>()?;

    if cfg.dump_transforms {
        for spec in &cfg.priors {
            let base = build_base_transform(spec, cfg.n)?;
            io::write_matrix_csv(&out.join(format!("transform_{}.csv", spec.name())), base.matrix())?;
        }
    }

    let cells: Vec<CellResult> = match cfg.mode {
        RecoveryMode::Separate => {
            let jobs: Vec<(usize, usize)> = (0..priors.len())
                .flat_map(|p| (0..prepared.len()).map(move |m| (p, m)))
                .collect();
            jobs.par_iter()
                .map(|&(prior_idx, meas_idx)| {
                    let (_, hyper, prior) = &priors[prior_idx];
                    let result = gsbl_run(&prepared[meas_idx].measurement, prior.as_ref(), hyper)?;
                    Ok(CellResult { prior_idx, meas_idx, result, x_slot: 0 })
                })
                .collect::<anyhow::Result<Vec<_>>>()?
        }
        RecoveryMode::Joint => {
            let set = MeasurementSet::new(prepared.iter().map(|p| p.measurement.clone()).collect())?;
            let runs: Vec<(usize, PosteriorResult)> = (0..priors.len())
                .into_par_iter()
                .map(|prior_idx| {
                    let (_, hyper, prior) = &priors[prior_idx];
                    Ok((prior_idx, mmv_gsbl_run(&set, prior.as_ref(), hyper)?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            runs.into_iter()
                .flat_map(|(prior_idx, result)| {
                    (0..prepared.len()).map(move |meas_idx| CellResult {
                        prior_idx,
                        meas_idx,
                        result: result.clone(),
                        x_slot: meas_idx,
                    })
                })
                .collect()
        }
    };

    let mut ordered: Vec<&CellResult> = cells.iter().collect();
    ordered.sort_by_key(|c| (c.meas_idx, c.prior_idx));

    let mut entries = Vec::new();
    let mut summary_lines = Vec::new();
    for cell in ordered {
        let prepared_m = &prepared[cell.meas_idx];
        let (prior_name, _, prior) = &priors[cell.prior_idx];
        let x = &cell.result.x_map[cell.x_slot];
        let report = error_report(x, &prepared_m.truth)?;
        let stem = format!("{}_{}_{}", prepared_m.label, prior_name, cfg.mode.as_str());
        match cfg.space {
            Space::Signal => {
                let grid = Grid::new(cfg.n)?;
                io::write_signal_csv(
                    &out.join(format!("recovery_{stem}.csv")),
                    grid.points(),
                    &prepared_m.truth,
                    x,
                )?;
            }
            Space::Image => {
                io::write_image_csv(&out.join(format!("recovery_{stem}.csv")), cfg.n, &prepared_m.truth, x)?;
                let img = Image::from_vector(cfg.n, x)?;
                io::write_pgm(&out.join(format!("recovery_{stem}.pgm")), &img)?;
            }
        }
        io::write_trace_csv(&out.join(format!("trace_{stem}.csv")), &cell.result.trace)?;

        if cfg.uq.enabled {
            let posterior =
                conditional_posterior(&prepared_m.measurement, prior.as_ref(), &cell.result.theta_map)?;
            let band = posterior.credible_band(cfg.uq.level)?;
            let coords: Vec<f64> = match cfg.space {
                Space::Signal => Grid::new(cfg.n)?.points().to_vec(),
                Space::Image => (0..cfg.n * cfg.n).map(|i| i as f64).collect(),
            };
            io::write_band_csv(
                &out.join(format!("band_{stem}.csv")),
                &coords,
                posterior.mean(),
                band.lower(),
                band.upper(),
            )?;
            if cfg.uq.samples > 0 {
                let draws = posterior.sample(cfg.uq.samples, cfg.uq.sample_seed);
                io::write_samples_csv(&out.join(format!("samples_{stem}.csv")), &draws)?;
            }
        }

        if verbose {
            println!(
                "{stem}: mean_abs={:.6e} iters={} converged={}",
                report.mean_abs, cell.result.iters, cell.result.converged
            );
        }
        summary_lines.push((
            format!("mean_abs.{}.{}.{}", prepared_m.label, prior_name, cfg.mode.as_str()),
            format!("{}", report.mean_abs),
        ));
        summary_lines.push((
            format!("converged.{}.{}.{}", prepared_m.label, prior_name, cfg.mode.as_str()),
            format!("{}", cell.result.converged),
        ));
        entries.push(SummaryEntry {
            label: prepared_m.label.clone(),
            prior: prior_name.clone(),
            mode: cfg.mode,
            mean_abs: report.mean_abs,
            iters: cell.result.iters,
            converged: cell.result.converged,
        });
    }
    io::write_summary(&out.join("summary.txt"), &summary_lines)?;
    Ok(entries)
}
