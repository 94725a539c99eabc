use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::record::{hv_trace_tsv, is_nonempty_dir};
use super::{FinalSolution, PipelineError, RunRecord};
use crate::engine::ledger_report;
use crate::features::{FeatureCatalog, Layer};
use crate::moo::{Individual, SelectionPolicy};

pub const REPORT_DIR: &str = "report";
pub const REPORT_FILES: [&str; 5] = ["metrics.tsv", "pareto.tsv", "hv_trace.tsv", "table4.txt", "cost.txt"];

/// Vis, Qual, Word and Pos of each final solution.
pub fn metrics_table(finals: &[FinalSolution]) -> String {
    let mut out = String::from("policy\tgeneration\tindex\tvis\tqual\tword\tpos\n");
    for f in finals {
        let ind = &f.individual;
        let o = ind.objectives();
        let (word, pos) = ind.aux.map_or((f64::NAN, f64::NAN), |a| (a.word, a.pos));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            f.policy, ind.id.generation, ind.id.index, o.vis, o.qual, word, pos
        );
    }
    out
}

fn pareto_table(front: &[Individual], catalog: &FeatureCatalog) -> String {
    let mut out = String::from("generation\tindex\tvis\tqual");
    for k in catalog.keys() {
        out.push('\t');
        out.push_str(k);
    }
    out.push('\n');
    for m in front {
        let o = m.objectives();
        let _ = write!(out, "{}\t{}\t{:.4}\t{:.4}", m.id.generation, m.id.index, o.vis, o.qual);
        for v in m.x.values() {
            let _ = write!(out, "\t{v:.4}");
        }
        out.push('\n');
    }
    out
}

/// Side-by-side feature vectors of two solutions, grouped by layer, with
/// their objectives underneath.
pub fn table4(a: &Individual, b: &Individual, catalog: &FeatureCatalog) -> String {
    let lw = Layer::ALL.iter().map(|l| l.name().len()).max().unwrap_or(0).max("Layer".len());
    let fw = catalog.keys().map(str::len).max().unwrap_or(0).max("Feature".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<lw$}  {:<fw$}  {:>7}  {:>7}", "Layer", "Feature", "Sol. A", "Sol. B");
    let rule = "-".repeat(lw + fw + 2 + 2 * 9);
    let _ = writeln!(out, "{rule}");
    for layer in Layer::ALL {
        let mut first = true;
        for (i, d) in catalog.definitions().iter().enumerate() {
            if d.layer != layer {
                continue;
            }
            let name = if first { layer.name() } else { "" };
            first = false;
            let _ = writeln!(out, "{name:<lw$}  {:<fw$}  {:>7.2}  {:>7.2}", d.key, a.x.get(i), b.x.get(i));
        }
    }
    let _ = writeln!(out, "{rule}");
    let (oa, ob) = (a.objectives(), b.objectives());
    let _ = writeln!(out, "{:<lw$}  {:<fw$}  {:>7.1}  {:>7.1}", "Vis", "", oa.vis, ob.vis);
    let _ = writeln!(out, "{:<lw$}  {:<fw$}  {:>7.1}  {:>7.1}", "Qual", "", oa.qual, ob.qual);
    out
}

/// Writes `report/` under a run directory and returns its path.
pub fn export_report(run_dir: &Path, overwrite: bool) -> Result<PathBuf, PipelineError> {
    let record = RunRecord::load(run_dir)?;
    let dir = run_dir.join(REPORT_DIR);
    if !overwrite && is_nonempty_dir(&dir)? {
        return Err(PipelineError::Exists(dir));
    }
    let catalog = crate::features::catalog_default();
    let missing = |p: SelectionPolicy| PipelineError::Record {
        path: run_dir.join("final.jsonl"),
        message: format!("no {p} solution"),
    };
    let a = record
        .final_for(SelectionPolicy::MaxVisibility)
        .ok_or_else(|| missing(SelectionPolicy::MaxVisibility))?;
    let b = record
        .final_for(SelectionPolicy::MaxQuality)
        .ok_or_else(|| missing(SelectionPolicy::MaxQuality))?;
    let files = [
        metrics_table(&record.finals),
        pareto_table(&record.outcome.front.members, &catalog),
        hv_trace_tsv(&record.outcome.trace),
        table4(a, b, &catalog),
        ledger_report(&record.ledger)?,
    ];
    fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    for (name, text) in REPORT_FILES.iter().zip(files) {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(dir)
}
