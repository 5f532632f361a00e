//! TOML instance files: a measured point set with string ids and a form over
//! it. Every semantic error carries the line of the offending entry.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use dirlab_core::{Edge, FiniteMeasuredSpace, FormInstance, FormSpec, Phi, PhiPiece};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            seed: 1,
            samples: 1000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub ids: Vec<String>,
    pub form: FormInstance,
    pub defaults: Defaults,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: Option<String>,
    space: Spanned<RawSpace>,
    form: Spanned<RawForm>,
    defaults: Option<RawDefaults>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    points: Vec<Spanned<RawPoint>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    id: String,
    measure: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForm {
    kind: Spanned<String>,
    p: Option<Spanned<f64>>,
    #[serde(default)]
    edges: Vec<Spanned<RawEdge>>,
    #[serde(default)]
    kernel: Vec<Spanned<RawEdge>>,
    phi: Option<Spanned<RawPhi>>,
    matrix: Option<Spanned<Vec<Vec<f64>>>>,
    #[serde(default)]
    killing: Vec<Spanned<RawKilling>>,
    killing_exponent: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    i: String,
    j: String,
    w: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhi {
    pieces: Vec<RawPiece>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    start: f64,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKilling {
    i: String,
    kappa: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    seed: Option<u64>,
    samples: Option<usize>,
    tol: Option<f64>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err(&self, span: &Range<usize>, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: Some(self.line(span)),
            message: msg.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<Instance, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    parse(&text, &stem)
}

/// Parse an instance; `fallback_name` is used when the file has no `name`.
pub fn parse(text: &str, fallback_name: &str) -> Result<Instance, ParseError> {
    let lines = Lines(text);
    let raw: RawInstance = toml::from_str(text).map_err(|e| ParseError {
        line: e.span().map(|s| lines.line(&s)),
        message: e.message().trim().to_string(),
    })?;

    let space_span = raw.space.span();
    let points = raw.space.into_inner().points;
    if points.is_empty() {
        return Err(lines.err(&space_span, "space needs at least one point"));
    }
    let mut ids = Vec::with_capacity(points.len());
    let mut index = HashMap::new();
    let mut measure = Vec::with_capacity(points.len());
    for pt in &points {
        let span = pt.span();
        let pt = pt.get_ref();
        if pt.id.is_empty() {
            return Err(lines.err(&span, "point id must be nonempty"));
        }
        if index.insert(pt.id.clone(), ids.len()).is_some() {
            return Err(lines.err(&span, format!("duplicate point id `{}`", pt.id)));
        }
        if !(pt.measure > 0.0 && pt.measure.is_finite()) {
            return Err(lines.err(
                &span,
                format!("measure of `{}` must be finite and > 0, got {}", pt.id, pt.measure),
            ));
        }
        ids.push(pt.id.clone());
        measure.push(pt.measure);
    }
    let n = ids.len();
    let lookup = |id: &str, span: &Range<usize>| -> Result<usize, ParseError> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| lines.err(span, format!("unknown point id `{id}`")))
    };

    let form_span = raw.form.span();
    let form = raw.form.into_inner();
    let edge_list = |list: &[Spanned<RawEdge>], what: &str| -> Result<Vec<Edge>, ParseError> {
        list.iter()
            .map(|e| {
                let span = e.span();
                let r = e.get_ref();
                let (i, j) = (lookup(&r.i, &span)?, lookup(&r.j, &span)?);
                if i == j {
                    return Err(lines.err(&span, format!("{what} entry joins `{}` to itself", r.i)));
                }
                if !(r.w >= 0.0 && r.w.is_finite()) {
                    return Err(lines.err(&span, format!("{what} weight must be finite and >= 0, got {}", r.w)));
                }
                Ok(Edge::new(i, j, r.w))
            })
            .collect()
    };
    let exponent = |p: &Option<Spanned<f64>>, name: &str| -> Result<f64, ParseError> {
        let Some(p) = p else {
            return Err(lines.err(&form_span, format!("form kind needs `{name}`")));
        };
        let v = *p.get_ref();
        if !(v >= 1.0 && v.is_finite()) {
            return Err(lines.err(&p.span(), format!("`{name}` must be finite and >= 1, got {v}")));
        }
        Ok(v)
    };
    let kind_span = form.kind.span();
    let mut spec = match form.kind.get_ref().as_str() {
        "p_energy" => FormSpec::p_energy(exponent(&form.p, "p")?, edge_list(&form.edges, "edge")?),
        "phi_energy" => {
            let Some(phi) = &form.phi else {
                return Err(lines.err(&form_span, "phi_energy needs a `phi` table"));
            };
            let pieces = phi
                .get_ref()
                .pieces
                .iter()
                .map(|p| PhiPiece {
                    start: p.start,
                    coeffs: p.coeffs.clone(),
                })
                .collect();
            let phi_val = Phi::new(pieces).map_err(|e| lines.err(&phi.span(), e.to_string()))?;
            FormSpec::phi_energy(phi_val, edge_list(&form.edges, "edge")?)
        }
        "nonlocal" => {
            let mut kernel = vec![vec![0.0; n]; n];
            for e in edge_list(&form.kernel, "kernel")? {
                kernel[e.i][e.j] += e.w;
                kernel[e.j][e.i] += e.w;
            }
            FormSpec::nonlocal(exponent(&form.p, "p")?, kernel)
        }
        "quadratic" => {
            let Some(m) = &form.matrix else {
                return Err(lines.err(&form_span, "quadratic needs a `matrix`"));
            };
            FormSpec::quadratic(m.get_ref().clone())
        }
        other => {
            return Err(lines.err(
                &kind_span,
                format!("unknown form kind `{other}` (expected p_energy, phi_energy, nonlocal or quadratic)"),
            ))
        }
    };
    if !form.killing.is_empty() {
        let mut kappa = vec![0.0; n];
        for k in &form.killing {
            let span = k.span();
            let r = k.get_ref();
            let i = lookup(&r.i, &span)?;
            if !(r.kappa >= 0.0 && r.kappa.is_finite()) {
                return Err(lines.err(&span, format!("kappa must be finite and >= 0, got {}", r.kappa)));
            }
            kappa[i] += r.kappa;
        }
        let exp = match &form.killing_exponent {
            Some(_) => exponent(&form.killing_exponent, "killing_exponent")?,
            None => spec.killing_exponent,
        };
        spec = spec.with_killing(kappa, exp);
    } else if let Some(k) = &form.killing_exponent {
        return Err(lines.err(&k.span(), "killing_exponent given without killing entries"));
    }

    let space = FiniteMeasuredSpace::new(measure).map_err(|e| lines.err(&space_span, e.to_string()))?;
    let form = FormInstance::new(space, spec).map_err(|e| lines.err(&form_span, e.to_string()))?;

    let mut defaults = Defaults::default();
    if let Some(d) = raw.defaults {
        if let Some(s) = d.seed {
            defaults.seed = s;
        }
        if let Some(s) = d.samples {
            defaults.samples = s;
        }
        if let Some(t) = d.tol {
            defaults.tol = t;
        }
    }
    Ok(Instance {
        name: raw.name.unwrap_or_else(|| fallback_name.to_string()),
        ids,
        form,
        defaults,
    })
}

/// A single-column list of values, one per point in id order. Blank lines
/// and `#` comments are skipped.
pub fn parse_values(text: &str, n: usize) -> Result<Vec<f64>, ParseError> {
    let mut out = Vec::with_capacity(n);
    for (k, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| ParseError {
            line: Some(k + 1),
            message: format!("not a number: `{t}`"),
        })?;
        if !v.is_finite() {
            return Err(ParseError {
                line: Some(k + 1),
                message: format!("value must be finite, got {t}"),
            });
        }
        out.push(v);
    }
    if out.len() != n {
        return Err(ParseError {
            line: None,
            message: format!("expected {n} values (one per point), got {}", out.len()),
        });
    }
    Ok(out)
}
