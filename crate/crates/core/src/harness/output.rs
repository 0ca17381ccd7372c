use std::path::Path;

use serde::Serialize;

use super::{Cell, CellResult, EstimatorSummary, Experiment, ExperimentConfig, ExperimentResult, Quartiles, ReplicateResult};
use crate::design::SamplingDesign;
use crate::error::Result;
use crate::io::{write_allocation_csv, write_json, write_strata_csv};

/// File name stem of a cell's table, e.g. `ar3_delta0.05_stratified`.
pub fn cell_file_stem(cell: &Cell) -> String {
    format!("{}_delta{}_{}", cell.noise.name(), cell.delta, cell.design.name())
}

fn push_quartiles(row: &mut Vec<String>, q: Option<&Quartiles>) {
    match q {
        Some(q) => row.extend([q.mean, q.q1, q.median, q.q3].iter().map(|v| format!("{v:?}"))),
        None => row.extend(std::iter::repeat_n(String::new(), 4)),
    }
}

fn write_table(path: &Path, summary: &[EstimatorSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["estimator".to_string()];
    for col in ["r", "l", "h", "area"] {
        for stat in ["mean", "q1", "median", "q3"] {
            header.push(format!("{col}_{stat}"));
        }
    }
    header.extend(["coverage".to_string(), "count".to_string(), "failures".to_string()]);
    w.write_record(&header)?;
    for s in summary {
        let mut row = vec![s.estimator.name().to_string()];
        push_quartiles(&mut row, (s.r_loss.count > 0).then_some(&s.r_loss));
        push_quartiles(&mut row, (s.l_loss.count > 0).then_some(&s.l_loss));
        push_quartiles(&mut row, s.bandwidth.as_ref());
        push_quartiles(&mut row, s.area.as_ref());
        row.push(s.coverage.map(|c| format!("{c:?}")).unwrap_or_default());
        row.push(s.r_loss.count.to_string());
        row.push(s.failures.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CellSummary<'a> {
    cell: &'a Cell,
    file: String,
    summary: &'a [EstimatorSummary],
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: ExperimentConfig,
    replicates: usize,
    failed_replicates: usize,
    cells: Vec<CellSummary<'a>>,
}

#[derive(Serialize)]
struct ReplicateRows<'a> {
    rows: Vec<&'a ReplicateResult>,
}

/// Writes one table per cell, `summary.json`, `replicates.json` with every
/// replicate row, and the stratification when one was used.
pub fn write_outputs(dir: &Path, experiment: &Experiment, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for c in &result.cells {
        write_table(&dir.join(format!("{}.csv", cell_file_stem(&c.cell))), &c.summary)?;
    }
    // the worker count cannot change any result, so it is not recorded
    let config = ExperimentConfig { workers: 0, ..experiment.config().clone() };
    let summary = RunSummary {
        config,
        replicates: result.total_replicates(),
        failed_replicates: result.failed_replicates(),
        cells: result
            .cells
            .iter()
            .map(|c: &CellResult| CellSummary {
                cell: &c.cell,
                file: format!("{}.csv", cell_file_stem(&c.cell)),
                summary: &c.summary,
            })
            .collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let rows = ReplicateRows { rows: result.cells.iter().flat_map(|c| &c.replicates).collect() };
    write_json(&dir.join("replicates.json"), &rows)?;
    if let Some(strata) = experiment.strata() {
        write_strata_csv(&dir.join("strata.csv"), strata)?;
        if let Some(design) = experiment.design(super::DesignChoice::Stratified) {
            write_design(dir, design)?;
        }
    }
    Ok(())
}

fn write_design(dir: &Path, design: &SamplingDesign) -> Result<()> {
    write_allocation_csv(&dir.join("allocation.csv"), &design.stratum_sizes(), &design.allocation())
}
