//! CSV outputs. Each file starts with a `#schema=<name>/<version>` line
//! followed by a header row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::ExperimentResult;
use crate::Result;

pub const PIVOTS_SCHEMA: &str = "#schema=pivots/1";
pub const COVERAGE_SCHEMA: &str = "#schema=coverage/1";
pub const RATES_SCHEMA: &str = "#schema=rates/1";

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "NaN".into())
}

pub fn write_pivots_csv(result: &ExperimentResult) -> String {
    let mut s = String::new();
    s.push_str(PIVOTS_SCHEMA);
    s.push('\n');
    s.push_str("mu0,u,replicate,method,target,height_oracle,height_unshifted,height_naive,height_plugin,loc_goldilocks,loc_marginal,loc_conditional,loc_plugin\n");
    for c in &result.cells {
        for p in &c.pivots {
            let r = &p.row;
            let cols = [
                r.height_oracle,
                r.height_unshifted,
                r.height_naive,
                r.height_plugin,
                r.loc_goldilocks,
                r.loc_marginal,
                r.loc_conditional,
                r.loc_plugin,
            ];
            let _ = write!(
                s,
                "{},{},{},{},{}",
                opt(c.cell.mu0),
                num(c.cell.u),
                p.replicate,
                p.method.name(),
                p.target
            );
            for v in cols {
                s.push(',');
                s.push_str(&num(v));
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_coverage_csv(result: &ExperimentResult) -> String {
    let mut s = String::new();
    s.push_str(COVERAGE_SCHEMA);
    s.push('\n');
    s.push_str(
        "mu0,u,method,peak,target,coverage,width,se,n,discovery_rate,expected_discoveries\n",
    );
    for c in &result.cells {
        for m in &c.methods {
            for (j, pc) in m.report.per_peak_coverage.iter().enumerate() {
                let expected = m.expected_discoveries.get(j).copied().unwrap_or(f64::NAN);
                for (target, sum) in [("height", pc.height), ("location", pc.location)] {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        opt(c.cell.mu0),
                        num(c.cell.u),
                        m.method.name(),
                        pc.peak,
                        target,
                        num(sum.coverage),
                        num(sum.width),
                        num(sum.se),
                        sum.n,
                        num(pc.discovery_rate),
                        num(expected)
                    );
                }
            }
        }
    }
    s
}

pub fn write_rates_csv(result: &ExperimentResult) -> String {
    let mut s = String::new();
    s.push_str(RATES_SCHEMA);
    s.push('\n');
    s.push_str("mu0,u,v,method,pcer0,pcer0_se,eps_pcer,eps_pcer_se,pcmr_height,pcmr_height_se,pcmr_location,pcmr_location_se,prethresholded,discoveries,degenerate,failed_match,numerical,replicates\n");
    for c in &result.cells {
        for m in &c.methods {
            let r = &m.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                opt(c.cell.mu0),
                num(c.cell.u),
                num(c.cell.v),
                m.method.name(),
                num(r.pcer0.value),
                num(r.pcer0.se),
                num(r.eps_pcer.value),
                num(r.eps_pcer.se),
                num(r.pcmr_height.value),
                num(r.pcmr_height.se),
                num(r.pcmr_location.value),
                num(r.pcmr_location.se),
                m.prethresholded,
                m.discoveries,
                r.degenerate_count,
                r.failed_match_count,
                r.numerical_failure_count,
                c.replicates
            );
        }
    }
    s
}

/// Writes `pivots.csv`, `coverage.csv` and `rates.csv` into `dir` and returns
/// their paths.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("pivots.csv", write_pivots_csv(result)),
        ("coverage.csv", write_coverage_csv(result)),
        ("rates.csv", write_rates_csv(result)),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{preset_exp1, run_experiment, Method};

    #[test]
    fn csv_files_have_schema_and_consistent_columns() {
        let mut cfg = preset_exp1();
        cfg.sweep.mu0 = vec![8.0];
        cfg.run.replicates = 30;
        let r = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_outputs(&r, dir.path()).unwrap();
        for p in paths {
            let text = std::fs::read_to_string(&p).unwrap();
            let mut lines = text.lines();
            assert!(lines.next().unwrap().starts_with("#schema="));
            let width = lines.next().unwrap().split(',').count();
            for l in lines {
                assert_eq!(l.split(',').count(), width, "{}", p.display());
            }
        }
        assert!(r.cells.iter().all(|c| c.method(Method::Standard).is_some()));
        assert_eq!(r.cells.len(), 3);
    }
}
