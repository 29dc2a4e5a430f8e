//! TOML scenario files.
//!
//! ```toml
//! spacing = 0.7133        # wavelengths
//! theta = 1.5707963267948966  # dipole angle from x̂ in the x–z plane, radians
//! gamma = 0.1             # units of ν
//! delta = -1.0
//! eta_omega = 0.04
//! n_cut = 1
//! output = "line.csv"
//!
//! [geometry]
//! kind = "line"           # single | line | triangle | isosceles | hexagon
//! atoms = 2               # line only
//! # apex_angle = 1.0472   # isosceles only
//! # vertices = [0, 1, 2]  # hexagon: one configuration
//! # subsets = [[0, 1, 2], [0, 2, 4]]  # hexagon: suite
//!
//! [sweep]
//! variable = "spacing"    # spacing | delta | theta | apex_angle | gamma | eta_omega
//! start = 0.05
//! stop = 1.0
//! points = 191
//!
//! [sweep2]                # optional inner axis, same keys as [sweep]
//!
//! [solver]
//! path = "auto"           # auto | svd | trace_replacement
//! svd_limit = 1024
//! gap_threshold = 1e6
//! ```
//!
//! Every key is optional; omitted values take the resolved-sideband defaults.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml_edit::TableLike;

use super::{hexagon_subsets, linspace, spacing_grid, Geometry, Physics, Setting, Variable};
use crate::error::{Error, Result};
use crate::geometry::MAGIC_SPACING_PERPENDICULAR;
use crate::steady::{SolverOptions, SolverPath};

/// Default point count for sweeps over anything but the spacing.
pub const DEFAULT_SWEEP_POINTS: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cut: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep2: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Single,
    Line,
    Triangle,
    Isosceles,
    Hexagon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apex_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: Variable,
    pub start: f64,
    pub stop: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        match (self.points, self.variable) {
            (Some(n), _) => linspace(self.start, self.stop, n),
            (None, Variable::Spacing) => spacing_grid(self.start, self.stop),
            (None, _) => linspace(self.start, self.stop, DEFAULT_SWEEP_POINTS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    Auto,
    Svd,
    TraceReplacement,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svd_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_threshold: Option<f64>,
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates; `source_name` labels error messages.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let scenario: Scenario = serde_path_to_error::deserialize(toml::Deserializer::new(text)).map_err(|err| {
            let key = match err.path().to_string() {
                root if root == "." => String::new(),
                path => path,
            };
            let inner = err.into_inner();
            Error::Scenario {
                source_name: source_name.to_string(),
                key,
                line: inner.span().map(|s| line_number(text, s.start)),
                message: inner.message().to_string(),
            }
        })?;
        scenario.validate().map_err(|(key, message)| Error::Scenario {
            source_name: source_name.to_string(),
            line: line_of(text, &key),
            key,
            message,
        })?;
        Ok(scenario)
    }

    /// Re-validates after programmatic edits such as command-line overrides.
    pub fn check(&self, source_name: &str) -> Result<()> {
        self.validate().map_err(|(key, message)| Error::Scenario { source_name: source_name.to_string(), key, line: None, message })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario {
            source_name: "<serialize>".into(),
            key: String::new(),
            line: None,
            message: e.to_string(),
        })
    }

    /// Semantic checks; returns the offending key path and a message.
    fn validate(&self) -> std::result::Result<(), (String, String)> {
        let fail = |key: &str, msg: String| Err((key.to_string(), msg));
        let positive = [("spacing", self.spacing), ("gamma", self.gamma)];
        for (key, value) in positive {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return fail(key, format!("must be a positive finite number, got {v}"));
                }
            }
        }
        for (key, value) in [("theta", self.theta), ("delta", self.delta), ("eta_omega", self.eta_omega)] {
            if let Some(v) = value {
                if !v.is_finite() {
                    return fail(key, format!("must be finite, got {v}"));
                }
            }
        }
        if self.n_cut == Some(0) {
            return fail("n_cut", "phonon cutoff must be at least 1".into());
        }
        if let Some(g) = &self.geometry {
            let only = |present: bool, key: &str, kind: &str| {
                if present && format!("{:?}", g.kind).to_lowercase() != kind {
                    Err((format!("geometry.{key}"), format!("only valid for kind = \"{kind}\"")))
                } else {
                    Ok(())
                }
            };
            only(g.atoms.is_some(), "atoms", "line")?;
            only(g.apex_angle.is_some(), "apex_angle", "isosceles")?;
            only(g.vertices.is_some(), "vertices", "hexagon")?;
            only(g.subsets.is_some(), "subsets", "hexagon")?;
            if g.atoms == Some(0) {
                return fail("geometry.atoms", "a line needs at least one atom".into());
            }
            if let Some(phi) = g.apex_angle {
                if !(phi > 0.0 && phi <= PI) {
                    return fail("geometry.apex_angle", format!("must lie in (0, pi], got {phi}"));
                }
            }
            let vertex_lists = g.vertices.iter().chain(g.subsets.iter().flatten());
            for list in vertex_lists {
                if list.is_empty() || list.iter().any(|&v| v > 5) {
                    let key = if g.vertices.as_ref() == Some(list) { "geometry.vertices" } else { "geometry.subsets" };
                    return fail(key, format!("vertex lists must be nonempty with entries in 0..=5, got {list:?}"));
                }
            }
        }
        for (name, sweep) in [("sweep", &self.sweep), ("sweep2", &self.sweep2)] {
            let Some(sweep) = sweep else { continue };
            if sweep.points == Some(0) {
                return fail(&format!("{name}.points"), "point count must be at least 1".into());
            }
            if !(sweep.start.is_finite() && sweep.stop.is_finite()) {
                return fail(&format!("{name}.start"), "sweep bounds must be finite".into());
            }
            if sweep.variable == Variable::ApexAngle && self.geometry_kind() != GeometryKind::Isosceles {
                return fail(&format!("{name}.variable"), "apex_angle sweeps need geometry.kind = \"isosceles\"".into());
            }
        }
        if self.sweep2.is_some() && self.sweep.is_none() {
            return fail("sweep2", "an inner sweep needs an outer [sweep]".into());
        }
        if let Some(solver) = &self.solver {
            if solver.svd_limit == Some(0) {
                return fail("solver.svd_limit", "must be at least 1".into());
            }
            if let Some(t) = solver.gap_threshold {
                if !(t.is_finite() && t > 0.0) {
                    return fail("solver.gap_threshold", format!("must be positive, got {t}"));
                }
            }
        }
        Ok(())
    }

    fn geometry_kind(&self) -> GeometryKind {
        self.geometry.as_ref().map_or(GeometryKind::Line, |g| g.kind)
    }

    pub fn physics(&self) -> Physics {
        let d = Physics::default();
        Physics {
            gamma: self.gamma.unwrap_or(d.gamma),
            delta: self.delta.unwrap_or(d.delta),
            eta_omega: self.eta_omega.unwrap_or(d.eta_omega),
            n_cut: self.n_cut.unwrap_or(d.n_cut),
            theta: self.theta.unwrap_or(d.theta),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or(MAGIC_SPACING_PERPENDICULAR)
    }

    /// Geometry for a single solve; defaults to a two-atom line.
    pub fn geometry(&self) -> Geometry {
        let Some(g) = &self.geometry else { return Geometry::Line { atoms: 2 } };
        match g.kind {
            GeometryKind::Single => Geometry::Single,
            GeometryKind::Line => Geometry::Line { atoms: g.atoms.unwrap_or(2) },
            GeometryKind::Triangle => Geometry::Triangle,
            GeometryKind::Isosceles => Geometry::Isosceles { apex_angle: g.apex_angle.unwrap_or(PI / 3.0) },
            GeometryKind::Hexagon => Geometry::Hexagon {
                vertices: g.vertices.clone().unwrap_or_else(|| vec![0, 1, 2, 3, 4, 5]),
            },
        }
    }

    pub fn setting(&self) -> Setting {
        Setting { geometry: self.geometry(), spacing: self.spacing(), physics: self.physics() }
    }

    /// Hexagon spectator subsets for a suite run.
    pub fn hexagon_subsets(&self) -> Vec<Vec<usize>> {
        self.geometry.as_ref().and_then(|g| g.subsets.clone()).unwrap_or_else(hexagon_subsets)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(s) = &self.solver {
            if let Some(path) = s.path {
                opts.path = match path {
                    PathChoice::Auto => SolverPath::Auto,
                    PathChoice::Svd => SolverPath::Svd,
                    PathChoice::TraceReplacement => SolverPath::TraceReplacement,
                };
            }
            if let Some(limit) = s.svd_limit {
                opts.svd_limit = limit;
            }
            if let Some(t) = s.gap_threshold {
                opts.gap_threshold = t;
            }
        }
        opts
    }
}

/// 1-based line of byte offset `pos`.
fn line_number(text: &str, pos: usize) -> usize {
    text.as_bytes()[..pos.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Line on which the dotted `key` path is defined, if present in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let doc = toml_edit::ImDocument::parse(text).ok()?;
    let mut table: &dyn TableLike = doc.as_table();
    let mut line = None;
    for part in key.split('.') {
        let (k, item) = table.get_key_value(part)?;
        line = k.span().or_else(|| item.span()).map(|s| line_number(text, s.start)).or(line);
        match item.as_table_like() {
            Some(t) => table = t,
            None => break,
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_error(text: &str) -> (String, Option<usize>, String) {
        match Scenario::parse(text, "test.toml") {
            Err(Error::Scenario { key, line, message, .. }) => (key, line, message),
            other => panic!("expected a scenario error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let s = Scenario::parse("", "empty").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.setting(), Setting::default());
    }

    #[test]
    fn minimal_single_atom_round_trips() {
        let text = "[geometry]\nkind = \"single\"\n";
        let s = Scenario::parse(text, "min").unwrap();
        let again = Scenario::parse(&s.to_toml().unwrap(), "again").unwrap();
        assert_eq!(s, again);
        assert_eq!(again.geometry(), Geometry::Single);
    }

    #[test]
    fn full_scenario_round_trips() {
        let text = r#"
spacing = 0.5
theta = 1.2
gamma = 0.2
delta = -0.9
eta_omega = 0.03
n_cut = 2
output = "out.csv"

[geometry]
kind = "hexagon"
subsets = [[0, 1], [0, 2, 4]]

[sweep]
variable = "spacing"
start = 0.1
stop = 0.9
points = 5

[sweep2]
variable = "delta"
start = -1.1
stop = -0.9

[solver]
path = "trace_replacement"
gap_threshold = 1e5
"#;
        let s = Scenario::parse(text, "full").unwrap();
        assert_eq!(Scenario::parse(&s.to_toml().unwrap(), "again").unwrap(), s);
        assert_eq!(s.hexagon_subsets(), vec![vec![0, 1], vec![0, 2, 4]]);
        assert_eq!(s.sweep.as_ref().unwrap().values().len(), 5);
        assert_eq!(s.sweep2.as_ref().unwrap().values().len(), DEFAULT_SWEEP_POINTS);
        assert_eq!(s.solver_options().path, SolverPath::TraceReplacement);
        assert_eq!(s.physics().n_cut, 2);
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let (key, line, message) = scenario_error("gamma = 0.1\n\n[sweep]\nvariable = \"spacing\"\nstart = 0.1\nstop = 1.0\nstep = 3\n");
        assert_eq!(key, "sweep.step");
        assert_eq!(line, Some(7));
        assert!(message.contains("unknown field `step`"), "{message}");

        let (key, line, message) = scenario_error("gama = 0.1\n");
        assert_eq!(line, Some(1));
        assert!(key.contains("gama") || message.contains("gama"));
    }

    #[test]
    fn type_errors_report_path() {
        let (key, line, _) = scenario_error("spacing = 0.7\n[geometry]\nkind = \"line\"\natoms = \"two\"\n");
        assert_eq!(key, "geometry.atoms");
        assert_eq!(line, Some(4));
    }

    #[test]
    fn semantic_errors_report_path_and_line() {
        let (key, line, _) = scenario_error("spacing = 0.7\n\n[sweep]\nvariable = \"spacing\"\nstart = 0.1\nstop = 1.0\npoints = 0\n");
        assert_eq!((key.as_str(), line), ("sweep.points", Some(7)));

        let (key, line, _) = scenario_error("theta = 1.0\ngamma = -0.1\n");
        assert_eq!((key.as_str(), line), ("gamma", Some(2)));

        let (key, _, _) = scenario_error("[geometry]\nkind = \"line\"\napex_angle = 1.0\n");
        assert_eq!(key, "geometry.apex_angle");

        let (key, line, _) = scenario_error("[sweep]\nvariable = \"apex_angle\"\nstart = 0.1\nstop = 3.0\n");
        assert_eq!((key.as_str(), line), ("sweep.variable", Some(2)));
    }

    #[test]
    fn syntax_error_has_line() {
        let (_, line, _) = scenario_error("spacing = 0.7\ngamma = = 3\n");
        assert_eq!(line, Some(2));
    }
}
