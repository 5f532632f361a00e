//! CSV emitters. Tables go to `--out` when given, otherwise to stdout.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use dirlab_core::{Func, InequalityReport};

pub const REPORT_HEADER: [&str; 8] = [
    "check_name",
    "instance",
    "parameters",
    "lhs",
    "rhs",
    "constant",
    "margin",
    "pass",
];

/// Rows of a CSV table, written in one go.
#[derive(Debug, Default, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn reports() -> Self {
        Self::new(&REPORT_HEADER)
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// One row for `r`, plus a `<name>:counterexample` row holding the first
    /// violating inputs when it failed.
    pub fn push_report(&mut self, instance: &str, parameters: &str, r: &InequalityReport) {
        self.push(vec![
            r.name.clone(),
            instance.to_string(),
            parameters.to_string(),
            num(r.lhs),
            num(r.rhs),
            opt_num(r.constant_used),
            num(r.margin),
            r.pass.to_string(),
        ]);
        if !r.pass && !r.counterexample.is_empty() {
            let names = ["u", "v", "w"];
            let inputs = r
                .counterexample
                .iter()
                .enumerate()
                .map(|(k, f)| format!("{}={}", names.get(k).copied().unwrap_or("x"), func(f)))
                .collect::<Vec<_>>()
                .join(";");
            self.push(vec![
                format!("{}:counterexample", r.name),
                instance.to_string(),
                inputs,
                num(r.lhs),
                num(r.rhs),
                opt_num(r.constant_used),
                num(r.margin),
                "false".into(),
            ]);
        }
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for row in &self.rows {
            wr.write_record(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        match out {
            Some(p) => {
                let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
                self.write_to(io::BufWriter::new(f))
            }
            None => self.write_to(io::stdout().lock()),
        }
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        num(x)
    }
}

pub fn func(f: &Func) -> String {
    let parts: Vec<String> = f.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_report_gets_counterexample_row() {
        let mut r = InequalityReport::single("sub", 2.0, 1.0, 0.0);
        r.counterexample = vec![Func::new(vec![1.0, 0.0]), Func::new(vec![0.0, 1.0])];
        let mut t = Table::reports();
        t.push_report("inst", "seed=1", &r);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1][0], "sub:counterexample");
        assert_eq!(t.rows[1][2], "u=[1.0,0.0];v=[0.0,1.0]");
        assert_eq!(t.rows[0][5], "");
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("check_name,instance,parameters,lhs,rhs,constant,margin,pass\n"));
    }
}
