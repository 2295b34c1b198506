//! Precomputed triangular systems per profile type.
//!
//! See `bundles/FORMAT.md` for the file layout.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::combinatorics::{
    constraint_count_ok, enumerate_profile_types, switching_sequence, tie_map, ProfileType, Sign,
    SwitchingPattern, TieMap,
};
use crate::model::MAX_ORDER;
use crate::poly::{Env, Expr, Symbol};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_GUARD_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot read bundle: {0}")]
    Io(#[from] std::io::Error),
    #[error("bundle is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported bundle format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("{}", describe(.profile, .entry, .message))]
    Invariant {
        profile: Option<String>,
        entry: Option<usize>,
        message: String,
    },
}

fn describe(profile: &Option<String>, entry: &Option<usize>, message: &str) -> String {
    match (profile, entry) {
        (Some(p), Some(e)) => format!("profile {p}, entry {e}: {message}"),
        (Some(p), None) => format!("profile {p}: {message}"),
        _ => message.to_string(),
    }
}

fn invariant(
    profile: Option<&ProfileType>,
    entry: Option<usize>,
    message: impl Into<String>,
) -> BundleError {
    BundleError::Invariant {
        profile: profile.map(ToString::to_string),
        entry,
        message: message.into(),
    }
}

// On-disk layout. Field order is the canonical serialization order.

#[derive(Serialize, Deserialize)]
struct RawBundle {
    format_version: u32,
    n: usize,
    provenance: String,
    profiles: Vec<RawProfile>,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    bits: String,
    tie_map: RawTieMap,
    sigma_template: RawSigma,
    system: Option<RawSystem>,
    guards: Vec<RawGuard>,
}

#[derive(Serialize, Deserialize)]
struct RawTieMap {
    free: Vec<usize>,
    ties: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
struct RawSigma {
    sigma: Vec<i8>,
    constraint_map: Vec<i32>,
}

#[derive(Serialize, Deserialize)]
struct RawSystem {
    evaluation_order: Vec<String>,
    entries: Vec<RawEntry>,
}

#[derive(Serialize, Deserialize)]
struct RawEntry {
    unknown: String,
    degree: usize,
    coeffs: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
struct RawGuard {
    divisors: Vec<Value>,
    auxiliary: Option<RawSystem>,
}

/// One polynomial of a triangular system, univariate in `unknown` once the
/// unknowns of earlier entries are bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// 1-based switching-time index.
    pub unknown: usize,
    /// Coefficients, highest degree first.
    pub coeffs: Vec<Expr>,
}

impl Entry {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSystem {
    pub entries: Vec<Entry>,
}

impl TriangularSystem {
    pub fn evaluation_order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.unknown).collect()
    }

    pub fn univariate_degree(&self) -> usize {
        self.entries[0].degree()
    }

    pub fn degrees(&self) -> Vec<(usize, usize)> {
        self.entries
            .iter()
            .map(|e| (e.unknown, e.degree()))
            .collect()
    }
}

/// Parameter manifold on which the default system degenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityGuard {
    /// All divisors vanish on the manifold.
    pub divisors: Vec<Expr>,
    /// System valid on the manifold; `None` when no isolated solution exists there.
    pub auxiliary: Option<TriangularSystem>,
}

impl SingularityGuard {
    /// True when every divisor is within `tol` of zero, relative to its largest term.
    pub fn fires(&self, env: &dyn Env, tol: f64) -> bool {
        self.divisors.iter().all(|d| match d.eval_with_scale(env) {
            Ok((v, scale)) => v.is_finite() && v.abs() <= tol * (1.0 + scale),
            Err(_) => false,
        })
    }

    /// Largest relative divisor magnitude.
    pub fn distance(&self, env: &dyn Env) -> f64 {
        self.divisors
            .iter()
            .map(|d| match d.eval_with_scale(env) {
                Ok((v, scale)) => v.abs() / (1.0 + scale),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub profile: ProfileType,
    pub tie_map: TieMap,
    pub pattern: SwitchingPattern,
    /// `None` marks a profile type without a precomputed system.
    pub system: Option<TriangularSystem>,
    pub guards: Vec<SingularityGuard>,
}

/// System chosen for a parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection<'a> {
    Default(&'a TriangularSystem),
    Auxiliary {
        guard: usize,
        system: &'a TriangularSystem,
    },
    /// Guard fired but no auxiliary system exists, or the profile is absent.
    Unavailable,
}

impl<'a> Selection<'a> {
    pub fn system(&self) -> Option<&'a TriangularSystem> {
        match *self {
            Selection::Default(s) | Selection::Auxiliary { system: s, .. } => Some(s),
            Selection::Unavailable => None,
        }
    }
}

impl ProfileEntry {
    /// Default system unless a guard fires; the first firing guard wins.
    pub fn select(&self, env: &dyn Env, guard_tol: f64) -> Selection<'_> {
        let Some(default) = &self.system else {
            return Selection::Unavailable;
        };
        for (k, g) in self.guards.iter().enumerate() {
            if g.fires(env, guard_tol) {
                return match &g.auxiliary {
                    Some(system) => Selection::Auxiliary { guard: k, system },
                    None => Selection::Unavailable,
                };
            }
        }
        Selection::Default(default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisBundle {
    pub n: usize,
    pub provenance: String,
    pub profiles: Vec<ProfileEntry>,
}

impl fmt::Display for BasisBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "order {}, {} profile types", self.n, self.profiles.len())?;
        writeln!(f, "provenance: {}", self.provenance)?;
        for p in &self.profiles {
            let label = if p.profile.bits().is_empty() {
                "(none)".to_string()
            } else {
                p.profile.to_string()
            };
            match &p.system {
                None => writeln!(f, "  {label}: absent")?,
                Some(s) => {
                    let degs: Vec<String> = s
                        .degrees()
                        .iter()
                        .map(|(u, d)| format!("t{u}:{d}"))
                        .collect();
                    write!(
                        f,
                        "  {label}: univariate degree {}, entries [{}]",
                        s.univariate_degree(),
                        degs.join(" ")
                    )?;
                    writeln!(f, ", {} guard(s)", p.guards.len())?;
                    for (k, g) in p.guards.iter().enumerate() {
                        match &g.auxiliary {
                            Some(a) => writeln!(
                                f,
                                "    guard {k}: {} divisor(s), auxiliary univariate degree {}",
                                g.divisors.len(),
                                a.univariate_degree()
                            )?,
                            None => writeln!(
                                f,
                                "    guard {k}: {} divisor(s), no auxiliary system",
                                g.divisors.len()
                            )?,
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn parse_unknown(s: &str) -> Option<usize> {
    match Symbol::parse(s) {
        Ok(Symbol::T(k)) => Some(k),
        _ => None,
    }
}

fn check_parameter(sym: Symbol, n: usize) -> bool {
    match sym {
        Symbol::X0(i) | Symbol::Xf(i) => i <= n,
        Symbol::XMin(i) | Symbol::XMax(i) => (2..=n).contains(&i),
        Symbol::UMin | Symbol::UMax => true,
        Symbol::T(_) => false,
    }
}

fn convert_system(
    raw: &RawSystem,
    n: usize,
    profile: &ProfileType,
    free: &[usize],
) -> Result<TriangularSystem, BundleError> {
    let p = Some(profile);
    if raw.evaluation_order.len() != raw.entries.len() {
        return Err(invariant(
            p,
            None,
            "evaluation order and entry list differ in length",
        ));
    }
    let mut solved: Vec<usize> = Vec::new();
    let mut entries = Vec::with_capacity(raw.entries.len());
    for (j, (name, e)) in raw.evaluation_order.iter().zip(&raw.entries).enumerate() {
        if name != &e.unknown {
            return Err(invariant(
                p,
                Some(j),
                format!(
                    "evaluation order names {name} but entry solves {}",
                    e.unknown
                ),
            ));
        }
        let unknown = parse_unknown(&e.unknown).ok_or_else(|| {
            invariant(
                p,
                Some(j),
                format!("`{}` is not a switching time", e.unknown),
            )
        })?;
        if !free.contains(&unknown) {
            return Err(invariant(
                p,
                Some(j),
                format!("t{unknown} is not a free unknown of this profile"),
            ));
        }
        if solved.contains(&unknown) {
            return Err(invariant(p, Some(j), format!("t{unknown} is solved twice")));
        }
        if e.degree == 0 || e.coeffs.len() != e.degree + 1 {
            return Err(invariant(
                p,
                Some(j),
                format!("degree {} with {} coefficients", e.degree, e.coeffs.len()),
            ));
        }
        let mut coeffs = Vec::with_capacity(e.coeffs.len());
        for c in &e.coeffs {
            let expr = Expr::from_json(c).map_err(|err| invariant(p, Some(j), err.to_string()))?;
            let mut syms = Vec::new();
            expr.symbols(&mut syms);
            for s in syms {
                match s {
                    Symbol::T(k) if !solved.contains(&k) => {
                        return Err(invariant(
                            p,
                            Some(j),
                            format!(
                            "triangularity violated: coefficient references unsolved unknown t{k}"
                        ),
                        ))
                    }
                    Symbol::T(_) => {}
                    other if !check_parameter(other, n) => {
                        return Err(invariant(
                            p,
                            Some(j),
                            format!("parameter {other} does not exist for order {n}"),
                        ))
                    }
                    _ => {}
                }
            }
            coeffs.push(expr);
        }
        solved.push(unknown);
        entries.push(Entry { unknown, coeffs });
    }
    if solved.len() != free.len() {
        return Err(invariant(
            p,
            None,
            format!(
                "system solves {} of {} free unknowns",
                solved.len(),
                free.len()
            ),
        ));
    }
    Ok(TriangularSystem { entries })
}

fn raw_system(s: &TriangularSystem) -> RawSystem {
    RawSystem {
        evaluation_order: s
            .entries
            .iter()
            .map(|e| format!("t{}", e.unknown))
            .collect(),
        entries: s
            .entries
            .iter()
            .map(|e| RawEntry {
                unknown: format!("t{}", e.unknown),
                degree: e.degree(),
                coeffs: e.coeffs.iter().map(Expr::to_json).collect(),
            })
            .collect(),
    }
}

impl BasisBundle {
    pub fn from_json_str(text: &str) -> Result<Self, BundleError> {
        let value: Value = serde_json::from_str(text)?;
        if let Some(v) = value.get("format_version").and_then(Value::as_u64) {
            if v != FORMAT_VERSION as u64 {
                return Err(BundleError::Version(v as u32));
            }
        }
        let raw: RawBundle = serde_json::from_value(value)?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawBundle) -> Result<Self, BundleError> {
        if raw.format_version != FORMAT_VERSION {
            return Err(BundleError::Version(raw.format_version));
        }
        let n = raw.n;
        if n == 0 || n > MAX_ORDER {
            return Err(invariant(None, None, format!("order {n} is not supported")));
        }
        let expected = enumerate_profile_types(n);
        if raw.profiles.len() != expected.len() {
            return Err(invariant(
                None,
                None,
                format!(
                    "{} profile entries, expected {}",
                    raw.profiles.len(),
                    expected.len()
                ),
            ));
        }
        let pattern = switching_sequence(n, Sign::Positive)
            .map_err(|e| invariant(None, None, e.to_string()))?;
        let mut profiles = Vec::with_capacity(raw.profiles.len());
        for rp in raw.profiles {
            let profile = ProfileType::parse(n, &rp.bits)
                .map_err(|e| invariant(None, None, e.to_string()))?;
            let p = Some(&profile);
            if profiles.iter().any(|q: &ProfileEntry| q.profile == profile) {
                return Err(invariant(p, None, "duplicate profile entry"));
            }
            let tm = TieMap {
                free: rp.tie_map.free,
                ties: rp.tie_map.ties.iter().map(|[a, b]| (*a, *b)).collect(),
            };
            let recomputed = tie_map(n, &profile).map_err(|e| invariant(p, None, e.to_string()))?;
            if tm != recomputed || !constraint_count_ok(n, &profile, &tm) {
                return Err(invariant(
                    p,
                    None,
                    "tie map disagrees with the switching structure",
                ));
            }
            if rp.sigma_template.sigma != pattern.sigma
                || rp.sigma_template.constraint_map != pattern.constraint_map
            {
                return Err(invariant(
                    p,
                    None,
                    "sigma template disagrees with the switching sequence",
                ));
            }
            let system = rp
                .system
                .as_ref()
                .map(|s| convert_system(s, n, &profile, &tm.free))
                .transpose()?;
            if system.is_none() && !rp.guards.is_empty() {
                return Err(invariant(p, None, "guards without a default system"));
            }
            let mut guards = Vec::with_capacity(rp.guards.len());
            for (k, g) in rp.guards.iter().enumerate() {
                if g.divisors.is_empty() {
                    return Err(invariant(p, None, format!("guard {k} has no divisor")));
                }
                let mut divisors = Vec::with_capacity(g.divisors.len());
                for d in &g.divisors {
                    let expr = Expr::from_json(d)
                        .map_err(|e| invariant(p, None, format!("guard {k}: {e}")))?;
                    let mut syms = Vec::new();
                    expr.symbols(&mut syms);
                    if let Some(s) = syms.iter().find(|s| !check_parameter(**s, n)) {
                        return Err(invariant(
                            p,
                            None,
                            format!("guard {k}: divisor references {s}"),
                        ));
                    }
                    divisors.push(expr);
                }
                let auxiliary = g
                    .auxiliary
                    .as_ref()
                    .map(|s| convert_system(s, n, &profile, &tm.free))
                    .transpose()?;
                guards.push(SingularityGuard {
                    divisors,
                    auxiliary,
                });
            }
            profiles.push(ProfileEntry {
                profile,
                tie_map: tm,
                pattern: pattern.clone(),
                system,
                guards,
            });
        }
        Ok(Self {
            n,
            provenance: raw.provenance,
            profiles,
        })
    }

    /// Canonical text: compact JSON followed by a newline.
    pub fn to_canonical_string(&self) -> String {
        let raw = RawBundle {
            format_version: FORMAT_VERSION,
            n: self.n,
            provenance: self.provenance.clone(),
            profiles: self
                .profiles
                .iter()
                .map(|p| RawProfile {
                    bits: p.profile.to_string(),
                    tie_map: RawTieMap {
                        free: p.tie_map.free.clone(),
                        ties: p.tie_map.ties.iter().map(|(a, b)| [*a, *b]).collect(),
                    },
                    sigma_template: RawSigma {
                        sigma: p.pattern.sigma.clone(),
                        constraint_map: p.pattern.constraint_map.clone(),
                    },
                    system: p.system.as_ref().map(raw_system),
                    guards: p
                        .guards
                        .iter()
                        .map(|g| RawGuard {
                            divisors: g.divisors.iter().map(Expr::to_json).collect(),
                            auxiliary: g.auxiliary.as_ref().map(raw_system),
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&raw).expect("bundle serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn profile(&self, profile: &ProfileType) -> Option<&ProfileEntry> {
        self.profiles.iter().find(|p| &p.profile == profile)
    }
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<BasisBundle, BundleError> {
    BasisBundle::from_json_str(&std::fs::read_to_string(path)?)
}

/// Default or auxiliary system of `profile` for the given parameters.
pub fn select_system<'a>(
    bundle: &'a BasisBundle,
    profile: &ProfileType,
    env: &dyn Env,
    guard_tol: f64,
) -> Selection<'a> {
    bundle
        .profile(profile)
        .map_or(Selection::Unavailable, |p| p.select(env, guard_tol))
}

const BUILTIN: [(usize, &str); 4] = [
    (1, include_str!("../bundles/n1.json")),
    (2, include_str!("../bundles/n2.json")),
    (3, include_str!("../bundles/n3.json")),
    (4, include_str!("../bundles/n4.json")),
];

/// Bundles shipped with the crate, keyed by chain order.
pub fn builtin_bundles() -> &'static BTreeMap<usize, BasisBundle> {
    static CELL: OnceLock<BTreeMap<usize, BasisBundle>> = OnceLock::new();
    CELL.get_or_init(|| {
        BUILTIN
            .iter()
            .map(|(n, text)| {
                (
                    *n,
                    BasisBundle::from_json_str(text).expect("embedded bundle is valid"),
                )
            })
            .collect()
    })
}

pub fn builtin_bundle(n: usize) -> Option<&'static BasisBundle> {
    builtin_bundles().get(&n)
}

/// Raw text of an embedded bundle.
pub fn builtin_text(n: usize) -> Option<&'static str> {
    BUILTIN.iter().find(|(k, _)| *k == n).map(|(_, t)| *t)
}
