use crate::space::Func;

/// Outcome of checking an inequality `lhs ≤ rhs` over one or more samples.
///
/// For multi-sample checks `lhs`/`rhs` come from the tightest sample (the one
/// with the smallest scaled margin); `counterexample` holds the inputs of the
/// first violating sample, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` at the tightest sample.
    pub margin: f64,
    pub constant_used: f64,
    pub pass: bool,
    pub samples: usize,
    pub tol: f64,
    pub counterexample: Vec<Func>,
    pub notes: Vec<String>,
}

impl InequalityReport {
    /// Single-sample report; passes iff `lhs ≤ rhs + tol·(1 + max(|lhs|, |rhs|))`.
    pub fn single(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let mut acc = ReportBuilder::new(name, tol);
        acc.push(lhs, rhs, Vec::new);
        acc.finish()
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant_used = c;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Combine several reports into one that passes iff all of them pass.
    pub fn all(name: impl Into<String>, parts: &[InequalityReport]) -> Self {
        let mut out = InequalityReport {
            name: name.into(),
            lhs: 0.0,
            rhs: 0.0,
            margin: f64::INFINITY,
            constant_used: f64::NAN,
            pass: true,
            samples: 0,
            tol: 0.0,
            counterexample: Vec::new(),
            notes: Vec::new(),
        };
        let mut tightest = f64::INFINITY;
        for r in parts {
            out.samples += r.samples;
            out.tol = out.tol.max(r.tol);
            let s = scaled_margin(r.lhs, r.rhs);
            if s < tightest {
                tightest = s;
                out.lhs = r.lhs;
                out.rhs = r.rhs;
                out.margin = r.margin;
                out.constant_used = r.constant_used;
            }
            if !r.pass {
                if out.pass {
                    out.counterexample = r.counterexample.clone();
                }
                out.pass = false;
                out.notes.push(format!("{} failed", r.name));
            }
            out.notes.extend(r.notes.iter().cloned());
        }
        if parts.is_empty() {
            out.margin = 0.0;
        }
        out
    }
}

fn scale(lhs: f64, rhs: f64) -> f64 {
    1.0 + lhs.abs().max(rhs.abs())
}

fn scaled_margin(lhs: f64, rhs: f64) -> f64 {
    (rhs - lhs) / scale(lhs, rhs)
}

/// Accumulates samples of an inequality into an [`InequalityReport`].
#[derive(Debug)]
pub struct ReportBuilder {
    report: InequalityReport,
    tightest: f64,
}

impl ReportBuilder {
    pub fn new(name: impl Into<String>, tol: f64) -> Self {
        Self {
            report: InequalityReport {
                name: name.into(),
                lhs: 0.0,
                rhs: 0.0,
                margin: 0.0,
                constant_used: f64::NAN,
                pass: true,
                samples: 0,
                tol,
                counterexample: Vec::new(),
                notes: Vec::new(),
            },
            tightest: f64::INFINITY,
        }
    }

    pub fn constant(&mut self, c: f64) -> &mut Self {
        self.report.constant_used = c;
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.report.notes.push(note.into());
        self
    }

    /// Record one sample. `inputs` is only evaluated when the sample is the
    /// first violation.
    pub fn push(&mut self, lhs: f64, rhs: f64, inputs: impl FnOnce() -> Vec<Func>) -> bool {
        let r = &mut self.report;
        r.samples += 1;
        let ok = lhs <= rhs + r.tol * scale(lhs, rhs);
        let s = if lhs.is_nan() || rhs.is_nan() {
            f64::NEG_INFINITY
        } else {
            scaled_margin(lhs, rhs)
        };
        let ok = ok && !s.is_nan() && s != f64::NEG_INFINITY;
        if s < self.tightest || r.samples == 1 {
            self.tightest = s;
            r.lhs = lhs;
            r.rhs = rhs;
            r.margin = rhs - lhs;
        }
        if !ok && r.pass {
            r.pass = false;
            r.counterexample = inputs();
            // The first violation is what callers display, so pin lhs/rhs to it.
            r.lhs = lhs;
            r.rhs = rhs;
            r.margin = rhs - lhs;
            self.tightest = f64::NEG_INFINITY;
        }
        ok
    }

    pub fn finish(self) -> InequalityReport {
        self.report
    }
}
