//! CSV and text artifact rendering, plus atomic file writes.
//!
//! CSV dialect: comma separator, `.` decimal point, no quoting (no field
//! ever contains a comma), header row always present. Floats are rendered
//! with Rust's shortest round-trip formatting and rationals as `p/q`, so
//! artifacts diff bit-exactly across reruns.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::harness::{ChainLink, ChainQuantities, ChainReport, ConvergenceRecord};
use crate::value::Scalar;

/// Write `contents` to `path` via a temporary sibling and rename, so a
/// crashed run never leaves a partial artifact behind.
pub fn atomic_write(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "artifact path has no file name"))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".tmp.{}", file_name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `label,key,value` rows for the raw quantities of one or more chain runs.
pub fn chain_quantities_csv<V: Scalar>(reports: &[(String, &ChainReport<V>)]) -> String {
    let mut out = String::from("label,key,value\n");
    for (label, report) in reports {
        let q: &ChainQuantities<V> = &report.quantities;
        let mut push = |key: &str, v: &V| {
            out.push_str(&format!("{label},{key},{v}\n"));
        };
        push("threshold", &q.threshold);
        push("epsilon", &q.epsilon);
        if let Some(d) = &q.delta {
            push("delta", d);
        }
        push("int_f_working", &q.int_f_working);
        push("int_f_domain", &q.int_f_domain);
        push("int_classavg_domain", &q.int_classavg_domain);
        push("mass_domain", &q.mass_domain);
        push("lead_in_mass", &q.lead_in_mass);
        push("lead_in_fmass", &q.lead_in_fmass);
        push("fail_mass", &q.fail_mass);
        push("fail_fmass", &q.fail_fmass);
        push("uncovered_mass", &q.uncovered_mass);
        push("uncovered_fmass", &q.uncovered_fmass);
        push("boundary_mass", &q.boundary_mass);
        out.push_str(&format!("{label},horizon,{}\n", report.horizon));
        out.push_str(&format!("{label},working_size,{}\n", report.working_size));
        out.push_str(&format!("{label},domain_size,{}\n", report.domain_size));
        out.push_str(&format!("{label},class_count,{}\n", report.class_count));
    }
    out
}

/// `label,link,lhs,relation,rhs,pass` rows for chain links.
pub fn chain_links_csv<V: Scalar>(reports: &[(String, &ChainReport<V>)]) -> String {
    let mut out = String::from("label,link,lhs,relation,rhs,pass\n");
    for (label, report) in reports {
        let mut push = |link: &ChainLink<V>| {
            out.push_str(&format!(
                "{label},{},{},{},{},{}\n",
                link.name.replace(',', ";"),
                link.lhs,
                link.relation.symbol(),
                link.rhs,
                link.pass
            ));
        };
        for link in &report.links {
            push(link);
        }
        for link in &report.supporting {
            push(link);
        }
    }
    out
}

/// `start,n,average,reference,deviation` rows.
pub fn convergence_csv(record: &ConvergenceRecord) -> String {
    let mut out = String::from("start,n,average,reference,deviation\n");
    for row in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.start_label, row.n, row.average, row.reference, row.deviation
        ));
    }
    out
}

/// Plain-text report accumulator.
#[derive(Default)]
pub struct TextReport {
    lines: Vec<String>,
}

impl TextReport {
    pub fn new(title: &str, seed: u64) -> Self {
        let mut r = TextReport::default();
        r.push(format!("orbit-tiler report: {title}"));
        r.push(format!("seed: {seed}"));
        r
    }

    pub fn push(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn check(&mut self, name: &str, pass: bool) {
        self.lines
            .push(format!("{}: {}", name, if pass { "pass" } else { "FAIL" }));
    }

    pub fn finish(mut self, passed: bool) -> String {
        self.push(format!("outcome: {}", if passed { "pass" } else { "FAIL" }));
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}
