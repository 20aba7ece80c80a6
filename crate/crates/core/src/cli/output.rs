//! CSV and JSON artifacts. Everything is rendered in memory first so a
//! failing run leaves no partial files behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::density::{write_binary, Grid};
use crate::error::{Error, Result};
use crate::filters::sweep::SweepReport;
use crate::filters::{pairwise_dg, FilterKind, FilterTrajectory};

/// Named file contents waiting to be written.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes)?;
        }
        Ok(())
    }
}

/// Create `dir` if needed and prove it is writable.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".filtermaps-write-probe");
    fs::write(&probe, b"")
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", dir.display())))
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `step,y_0..,u_0..`; step 0 has no datum.
pub fn data_csv(obs: &FilterTrajectory, d: usize, k: usize) -> String {
    let mut s = String::new();
    let mut header = vec!["step".to_string()];
    header.extend((0..k).map(|i| format!("y_{i}")));
    if obs.states.is_some() {
        header.extend((0..d).map(|i| format!("u_{i}")));
    }
    writeln!(s, "{}", header.join(",")).expect("string write");
    for j in 0..=obs.steps() {
        let mut row = vec![j.to_string()];
        match j {
            0 => row.extend((0..k).map(|_| String::new())),
            _ => row.extend(obs.data[j - 1].iter().map(f64::to_string)),
        }
        if let Some(states) = &obs.states {
            row.extend(states[j].iter().map(f64::to_string));
        }
        writeln!(s, "{}", row.join(",")).expect("string write");
    }
    s
}

/// `step,kind,mean_*,cov_*_*,eps,dg_to_true`.
///
/// `eps` on row `j >= 1` is the near-Gaussianity of the lifted prediction
/// that produced step `j`; `dg_to_true` is empty where no true-filter
/// comparison exists.
pub fn trajectory_csv(runs: &[FilterTrajectory], grid: Option<&Grid>, d: usize) -> Result<String> {
    let truth = runs.iter().find(|r| r.kind == Some(FilterKind::True));
    let mut s = String::new();
    let mut header = vec!["step".to_string(), "kind".to_string()];
    header.extend((0..d).map(|i| format!("mean_{i}")));
    for i in 0..d {
        header.extend((0..d).map(|j| format!("cov_{i}_{j}")));
    }
    header.push("eps".into());
    header.push("dg_to_true".into());
    writeln!(s, "{}", header.join(",")).expect("string write");
    for run in runs {
        let kind = run.kind.expect("filter run");
        let dg = match (truth, grid) {
            (Some(t), Some(g)) if !matches!(kind, FilterKind::EnkfParticles(_)) => Some(pairwise_dg(run, t, g)?),
            _ => None,
        };
        for (j, m) in run.moments().iter().enumerate() {
            let mut row = vec![j.to_string(), kind.to_string()];
            row.extend(m.mean.iter().map(f64::to_string));
            for a in 0..d {
                row.extend((0..d).map(|b| m.cov[(a, b)].to_string()));
            }
            row.push(match j {
                0 => String::new(),
                _ => run.eps.get(j - 1).map(f64::to_string).unwrap_or_default(),
            });
            row.push(dg.as_ref().map(|v| v[j].to_string()).unwrap_or_default());
            writeln!(s, "{}", row.join(",")).expect("string write");
        }
    }
    Ok(s)
}

/// `quantity,kind_a,kind_b,value`: `max_dg` for every comparable pair and
/// `eps_measured` per grid kind.
pub fn summary_csv(runs: &[FilterTrajectory], grid: Option<&Grid>) -> Result<String> {
    let mut s = String::from("quantity,kind_a,kind_b,value\n");
    for r in runs {
        if r.kind.is_some_and(FilterKind::is_grid) {
            writeln!(s, "eps_measured,{},,{}", r.kind.expect("kind"), r.max_eps()).expect("string write");
        }
    }
    if let Some(grid) = grid {
        let comparable: Vec<&FilterTrajectory> = runs
            .iter()
            .filter(|r| !matches!(r.kind, Some(FilterKind::EnkfParticles(_))))
            .collect();
        for (i, a) in comparable.iter().enumerate() {
            for b in &comparable[i + 1..] {
                let v = pairwise_dg(a, b, grid)?.into_iter().fold(0.0, f64::max);
                writeln!(s, "max_dg,{},{},{v}", a.kind.expect("kind"), b.kind.expect("kind")).expect("string write");
            }
        }
    }
    Ok(s)
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = String::from("delta,eps_measured,err_enkf,err_gpf\n");
    for p in &report.points {
        writeln!(s, "{}", join([p.delta, p.eps, p.err_enkf, p.err_gpf])).expect("string write");
    }
    s
}

pub fn sweep_checks_csv(report: &SweepReport) -> String {
    format!(
        "check,value\nmonotone_enkf,{}\nmonotone_gpf,{}\nmax_ratio_enkf,{}\nmax_ratio_gpf,{}\n",
        report.monotone_enkf, report.monotone_gpf, report.max_ratio_enkf, report.max_ratio_gpf
    )
}

/// Binary densities of every grid-representable measure.
pub fn densities(runs: &[FilterTrajectory], grid: &Grid, out: &mut Artifacts) -> Result<()> {
    for run in runs {
        let kind = run.kind.expect("filter run");
        if matches!(kind, FilterKind::EnkfParticles(_)) {
            continue;
        }
        for (j, m) in run.measures.iter().enumerate() {
            let mut bytes = Vec::new();
            write_binary(&m.on_grid(grid)?, &mut bytes)?;
            out.add(Path::new("densities").join(format!("{kind}_step{j}.bin")), bytes);
        }
    }
    Ok(())
}
