//! Problem files, plan documents and CSV sampling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinatorics::{ProfileType, Sign};
use crate::model::{
    validate_problem_with, BoundaryConditions, Bounds, ChainSpec, ProblemError, ValidatedProblem,
    Warning,
};
use crate::planner::SwitchingPlan;
use crate::poly::PiecewiseTrajectory;

pub const PLAN_FORMAT: &str = "chaintraj-plan";
pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("plan document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported plan document (format `{format}`, version {version})")]
    Format { format: String, version: u32 },
    #[error("plan document is inconsistent: {0}")]
    Inconsistent(String),
}

/// Raw key/value content of a problem description.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemFields {
    pub n: Option<usize>,
    pub x0: Option<Vec<f64>>,
    pub xf: Option<Vec<f64>>,
    pub umin: Option<f64>,
    pub umax: Option<f64>,
    /// Bounds of `x_2..x_n`.
    pub xmin: Option<Vec<f64>>,
    pub xmax: Option<Vec<f64>>,
}

/// Parses a decimal, accepting `inf`, `+inf` and `-inf`.
pub fn parse_scalar(text: &str) -> Result<f64, String> {
    let t = text.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => {
            let v: f64 = t.parse().map_err(|_| format!("`{t}` is not a number"))?;
            if v.is_nan() {
                return Err("NaN is not allowed".into());
            }
            Ok(v)
        }
    }
}

pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(parse_scalar).collect()
}

impl ProblemFields {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        let mut f = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DocumentError::Syntax {
                line: k + 1,
                message: "expected `key = value`".into(),
            })?;
            f.set(key.trim(), value.trim())
                .map_err(|message| DocumentError::Syntax {
                    line: k + 1,
                    message,
                })?;
        }
        Ok(f)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "n" => {
                self.n = Some(
                    value
                        .parse()
                        .map_err(|_| format!("`{value}` is not an order"))?,
                )
            }
            "x0" => self.x0 = Some(parse_list(value)?),
            "xf" => self.xf = Some(parse_list(value)?),
            "umin" => self.umin = Some(parse_scalar(value)?),
            "umax" => self.umax = Some(parse_scalar(value)?),
            "xmin" => self.xmin = Some(parse_list(value)?),
            "xmax" => self.xmax = Some(parse_list(value)?),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Fills unset fields from `other`; returns the keys both define differently.
    pub fn merge_from(&mut self, other: &ProblemFields) -> Vec<&'static str> {
        let mut conflicts = Vec::new();
        macro_rules! merge {
            ($field:ident) => {
                match (&self.$field, &other.$field) {
                    (None, Some(v)) => self.$field = Some(v.clone()),
                    (Some(a), Some(b)) if a != b => conflicts.push(stringify!($field)),
                    _ => {}
                }
            };
        }
        merge!(n);
        merge!(x0);
        merge!(xf);
        merge!(umin);
        merge!(umax);
        merge!(xmin);
        merge!(xmax);
        conflicts
    }

    pub fn into_problem(self, boundary_tol: f64) -> Result<ValidatedProblem, DocumentError> {
        let x0 = self.x0.ok_or(DocumentError::Missing("x0"))?;
        let n = self.n.unwrap_or(x0.len());
        let xf = self.xf.ok_or(DocumentError::Missing("xf"))?;
        let umin = self.umin.ok_or(DocumentError::Missing("umin"))?;
        let umax = self.umax.ok_or(DocumentError::Missing("umax"))?;
        let spec = ChainSpec::new(n)?;
        let mut bounds = Bounds::input_only(n, umin, umax);
        for (key, list, target) in [
            ("xmin", &self.xmin, &mut bounds.x_min),
            ("xmax", &self.xmax, &mut bounds.x_max),
        ] {
            if let Some(values) = list {
                if values.len() + 1 != n {
                    return Err(DocumentError::Value {
                        key: key.into(),
                        message: format!(
                            "expected {} values for x2..x{n}, got {}",
                            n.saturating_sub(1),
                            values.len()
                        ),
                    });
                }
                target[1..].copy_from_slice(values);
            }
        }
        Ok(validate_problem_with(
            spec,
            bounds,
            BoundaryConditions::new(x0, xf),
            boundary_tol,
        )?)
    }
}

/// Problem restated inside a plan document. Unbounded entries are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEcho {
    pub n: usize,
    pub x0: Vec<f64>,
    pub xf: Vec<f64>,
    pub umin: f64,
    pub umax: f64,
    /// Bounds of `x_2..x_n`.
    pub xmin: Vec<Option<f64>>,
    pub xmax: Vec<Option<f64>>,
}

impl ProblemEcho {
    pub fn from_problem(p: &ValidatedProblem) -> Self {
        let finite = |v: &f64| v.is_finite().then_some(*v);
        Self {
            n: p.order(),
            x0: p.x0().to_vec(),
            xf: p.xf().to_vec(),
            umin: p.bounds.u_min,
            umax: p.bounds.u_max,
            xmin: p.bounds.x_min[1..].iter().map(finite).collect(),
            xmax: p.bounds.x_max[1..].iter().map(finite).collect(),
        }
    }

    pub fn to_fields(&self) -> ProblemFields {
        ProblemFields {
            n: Some(self.n),
            x0: Some(self.x0.clone()),
            xf: Some(self.xf.clone()),
            umin: Some(self.umin),
            umax: Some(self.umax),
            xmin: Some(
                self.xmin
                    .iter()
                    .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                    .collect(),
            ),
            xmax: Some(
                self.xmax
                    .iter()
                    .map(|v| v.unwrap_or(f64::INFINITY))
                    .collect(),
            ),
        }
    }
}

/// Self-contained record of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub bundle_provenance: String,
    pub problem: ProblemEcho,
    pub profile: ProfileType,
    pub sigma0: Sign,
    pub sigma: Vec<i8>,
    pub constraint_map: Vec<i32>,
    pub times: Vec<f64>,
    pub duration: f64,
    pub guard: Option<usize>,
    pub warnings: Vec<Warning>,
    pub trajectory: PiecewiseTrajectory,
}

impl PlanDocument {
    pub fn new(plan: &SwitchingPlan, problem: &ValidatedProblem, bundle_provenance: &str) -> Self {
        Self {
            format: PLAN_FORMAT.into(),
            version: PLAN_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            bundle_provenance: bundle_provenance.into(),
            problem: ProblemEcho::from_problem(problem),
            profile: plan.profile.clone(),
            sigma0: plan.sigma0,
            sigma: plan.pattern.sigma.clone(),
            constraint_map: plan.pattern.constraint_map.clone(),
            times: plan.times.clone(),
            duration: plan.duration,
            guard: plan.guard,
            warnings: plan.warnings.clone(),
            trajectory: plan.trajectory.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let doc: PlanDocument = serde_json::from_str(text)?;
        if doc.format != PLAN_FORMAT || doc.version != PLAN_VERSION {
            return Err(DocumentError::Format {
                format: doc.format,
                version: doc.version,
            });
        }
        let segs = doc.sigma.len();
        let t = &doc.trajectory;
        if doc.times.len() != segs
            || t.u_values.len() != segs
            || t.coeffs.len() != segs
            || t.boundaries.len() != segs + 1
        {
            return Err(DocumentError::Inconsistent("segment counts differ".into()));
        }
        if t.coeffs.iter().any(|seg| seg.len() != doc.problem.n) {
            return Err(DocumentError::Inconsistent(
                "coefficient tensor does not match the order".into(),
            ));
        }
        Ok(doc)
    }

    /// Plan restored from the document.
    pub fn to_plan(&self) -> SwitchingPlan {
        SwitchingPlan {
            profile: self.profile.clone(),
            sigma0: self.sigma0,
            pattern: crate::combinatorics::SwitchingPattern {
                sigma: self.sigma.clone(),
                constraint_map: self.constraint_map.clone(),
                sigma0: self.sigma0,
            },
            times: self.times.clone(),
            duration: self.duration,
            trajectory: self.trajectory.clone(),
            warnings: self.warnings.clone(),
            guard: self.guard,
        }
    }
}

/// Sampling instants: a uniform grid including both ends and every switching
/// time, ascending and without duplicates.
pub fn sample_times(
    traj: &PiecewiseTrajectory,
    step: Option<f64>,
    count: Option<usize>,
) -> Vec<f64> {
    let total = traj.duration();
    let mut ts = vec![0.0];
    if total > 0.0 {
        let k = match (count, step) {
            (Some(c), _) => c.max(2) - 1,
            (None, Some(dt)) if dt > 0.0 => ((total / dt).ceil() as usize).max(1),
            _ => 100,
        };
        let dt = step.filter(|_| count.is_none()).unwrap_or(total / k as f64);
        for j in 1..=k {
            ts.push((j as f64 * dt).min(total));
        }
        ts.extend(traj.boundaries.iter().copied());
        ts.push(total);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// CSV rows `t,x1,...,xn,u`; instants where the input jumps appear twice,
/// first with the input before and then after the jump.
pub fn sample_csv(traj: &PiecewiseTrajectory, times: &[f64]) -> String {
    let n = traj.order();
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",u\n");
    let total = traj.duration();
    let mut row = |t: f64, x: &[f64], u: f64| {
        let _ = write!(out, "{t:.16e}");
        for v in x {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{u:.16e}");
    };
    for &t in times {
        let (x, _) = traj.eval(t);
        if total == 0.0 {
            row(t, &x, 0.0);
            continue;
        }
        let right = traj.input_at(t, false);
        if t > 0.0 {
            let left = traj.input_at(t, true);
            if left != right {
                row(t, &x, left);
            }
        }
        row(t, &x, right);
    }
    out
}

/// Key/value text of a problem, the inverse of [`ProblemFields::parse`].
pub fn problem_text(p: &ValidatedProblem) -> String {
    let fmt_list = |v: &[f64]| {
        v.iter()
            .map(|x| fmt_scalar(*x))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut m = BTreeMap::new();
    m.insert("n", p.order().to_string());
    m.insert("x0", fmt_list(p.x0()));
    m.insert("xf", fmt_list(p.xf()));
    m.insert("umin", fmt_scalar(p.bounds.u_min));
    m.insert("umax", fmt_scalar(p.bounds.u_max));
    m.insert("xmin", fmt_list(&p.bounds.x_min[1..]));
    m.insert("xmax", fmt_list(&p.bounds.x_max[1..]));
    let mut s = String::new();
    for key in ["n", "x0", "xf", "umin", "umax", "xmin", "xmax"] {
        let _ = writeln!(s, "{key} = {}", m[key]);
    }
    s
}

fn fmt_scalar(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::integrate_piecewise;

    #[test]
    fn parses_problem_files() {
        let text = "# worked example\nn = 3\nx0 = -2, 0.5, 1\nxf = 2,0,0\numin=-1\numax = 1\nxmax = inf, inf\n";
        let f = ProblemFields::parse(text).unwrap();
        assert_eq!(f.x0, Some(vec![-2.0, 0.5, 1.0]));
        let p = f.into_problem(1e-9).unwrap();
        assert_eq!(p.order(), 3);
        assert!(p.warnings.is_empty());
        let again = ProblemFields::parse(&problem_text(&p))
            .unwrap()
            .into_problem(1e-9)
            .unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(
            ProblemFields::parse("n 3"),
            Err(DocumentError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            ProblemFields::parse("\nspeed = 3"),
            Err(DocumentError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            ProblemFields::parse("x0 = 1, nan"),
            Err(DocumentError::Syntax { .. })
        ));
        let f =
            ProblemFields::parse("x0 = 0, 0\nxf = 1, 0\numin = -1\numax = 1\nxmax = 1, 2").unwrap();
        assert!(matches!(
            f.into_problem(1e-9),
            Err(DocumentError::Value { .. })
        ));
    }

    #[test]
    fn merge_prefers_existing_values() {
        let mut file = ProblemFields::parse("umax = 2").unwrap();
        let flags = ProblemFields::parse("umax = 3\numin = -1").unwrap();
        assert_eq!(file.merge_from(&flags), vec!["umax"]);
        assert_eq!(file.umax, Some(2.0));
        assert_eq!(file.umin, Some(-1.0));
    }

    #[test]
    fn csv_duplicates_jumps() {
        let tr =
            integrate_piecewise(&[0.0, 0.0], &[1, 0, -1], &[1.0, 4.0, 5.0], -1.0, 1.0).unwrap();
        let ts = sample_times(&tr, Some(0.5), None);
        assert_eq!(ts.len(), 11);
        let csv = sample_csv(&tr, &ts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,u");
        // 11 instants plus duplicates at t = 1, 4 and 5
        assert_eq!(lines.len(), 1 + 11 + 3);
        let row: Vec<f64> = lines
            .iter()
            .find(|l| l.starts_with("2.5"))
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![2.5, 2.0, 1.0, 0.0]);
        assert!(lines.last().unwrap().ends_with(",0.0000000000000000e0"));
    }

    #[test]
    fn zero_duration_has_one_row() {
        let tr = integrate_piecewise(&[1.0, 0.0], &[1, 0, -1], &[0.0; 3], -1.0, 1.0).unwrap();
        let csv = sample_csv(&tr, &sample_times(&tr, Some(0.1), None));
        assert_eq!(csv.lines().count(), 2);
    }
}
