//! Run configuration, the stage pipeline and the artifact manifest.
//!
//! Stages communicate only through files in the output directory:
//! `feasibility` writes `boundary.json`, `outer` reads it and writes
//! `outer_solution.json`, `inner` reads both and writes `inner_stations.json`,
//! and `composite` reads all three. `stability` and `evolve1d` need no PDE
//! artifacts. Every file written is listed in `manifest.json` with its
//! SHA-256; wall-clock times go to the `timings.json` sidecar so that the
//! manifest itself is reproducible byte for byte.

use crate::composite::{assemble_composite, residuals, CompositeOptions, OuterInput};
use crate::error::{Error, Result};
use crate::feasibility::{check_pointwise, flux_ratio_table, sup_flux_ratio, CurrentPreset, CurrentProfile, FluxRatioReport, PointwiseReport};
use crate::geometry::{presets, BoundaryGeometry};
use crate::inner::{sweep as inner_sweep, InnerOptions, StationSolution};
use crate::io::{field_csv, read_json, sha256_hex, table_csv, to_json, write_atomic};
use crate::outer::{boundary_identity, boundary_trace, gradient_identity, outer_fields, solve_correction, solve_outer, FiniteCellMesh, OuterOptions, OuterSolution};
use crate::stability::{evolve_1d, stability_verdict, threshold, EvolveOptions, StabilityInput};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn default_samples() -> usize {
    512
}

/// Domain shape: a preset or a CSV of boundary points.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Circle {
        radius: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Ellipse {
        a: f64,
        b: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Stadium {
        half_straight: f64,
        radius: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Dumbbell {
        lobe_radius: f64,
        half_separation: f64,
        neck_width: f64,
        fillet_radius: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Csv {
        path: String,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<BoundaryGeometry> {
        match self {
            DomainSpec::Circle { radius, samples } => presets::circle(*radius, *samples),
            DomainSpec::Ellipse { a, b, samples } => presets::ellipse(*a, *b, *samples),
            DomainSpec::Stadium { half_straight, radius, samples } => presets::stadium(*half_straight, *radius, *samples),
            DomainSpec::Dumbbell { lobe_radius, half_separation, neck_width, fillet_radius, samples } => {
                presets::dumbbell(*lobe_radius, *half_separation, *neck_width, *fillet_radius, *samples)
            }
            DomainSpec::Rectangle { lx, ly, samples } => presets::rectangle(*lx, *ly, *samples),
            DomainSpec::Csv { path } => presets::from_csv(Path::new(path)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilityOptions {
    /// Boundary samples taking part in the supremum search.
    pub max_samples: usize,
    /// Boundary samples used for the pairwise ratio table.
    pub table_samples: usize,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self { max_samples: 256, table_samples: 96 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InnerStageOptions {
    pub eta_max: Option<f64>,
    pub spacing: Option<f64>,
    /// Boundary stations; default ceil(1.25 L / delta).
    pub stations: Option<usize>,
    /// Profiles are stored up to this stretched distance; default covers the
    /// composite cutoff support with a margin.
    pub tau_keep: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CompositeStageOptions {
    pub cells_per_epsilon: f64,
    /// Every `csv_stride`-th fine-grid node in each direction goes to the field CSVs.
    pub csv_stride: usize,
}

impl Default for CompositeStageOptions {
    fn default() -> Self {
        Self { cells_per_epsilon: 8.0, csv_stride: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StabilityBlock {
    pub beta: f64,
    pub sigma: f64,
    pub l: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Defaults to the top-level epsilon.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

fn default_n_max() -> usize {
    20
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Sigma0,
    Beta,
    Amplitude,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Sigma0 => "sigma0",
            SweepAxis::Beta => "beta",
            SweepAxis::Amplitude => "amplitude",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_iota() -> f64 {
    0.9
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sigma0: Option<f64>,
    #[serde(default = "default_iota")]
    pub iota: f64,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub current: Option<CurrentPreset>,
    #[serde(default)]
    pub feasibility: FeasibilityOptions,
    #[serde(default)]
    pub outer: OuterOptions,
    #[serde(default)]
    pub inner: InnerStageOptions,
    #[serde(default)]
    pub composite: CompositeStageOptions,
    #[serde(default)]
    pub stability: Option<StabilityBlock>,
    #[serde(default)]
    pub evolve: Option<EvolveOptions>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{path} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; relative CSV paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut String| {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).to_string_lossy().into_owned();
            }
        };
        if let Some(DomainSpec::Csv { path }) = &mut cfg.domain {
            resolve(path);
        }
        if let Some(CurrentPreset::Csv { path }) = &mut cfg.current {
            resolve(path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
            if e >= 1.0 {
                return Err(Error::Config(format!("epsilon must be below 1, got {e}")));
            }
        }
        if let Some(s) = self.sigma0 {
            positive("sigma0", s)?;
        }
        if !(self.iota > 0.0 && self.iota < 1.0) {
            return Err(Error::Config(format!("iota must lie in (0, 1), got {}", self.iota)));
        }
        match &self.current {
            Some(CurrentPreset::Dipole { amplitude }) | Some(CurrentPreset::Edges { amplitude }) if !amplitude.is_finite() => {
                return Err(Error::Config("current.amplitude must be finite".into()));
            }
            Some(CurrentPreset::BumpPair { amplitude, width }) => {
                if !amplitude.is_finite() {
                    return Err(Error::Config("current.amplitude must be finite".into()));
                }
                positive("current.width", *width)?;
            }
            _ => {}
        }
        positive("outer.h", self.outer.h)?;
        if self.feasibility.max_samples < 2 || self.feasibility.table_samples < 2 {
            return Err(Error::Config("feasibility.max_samples and feasibility.table_samples must be at least 2".into()));
        }
        if let Some(v) = self.inner.eta_max {
            positive("inner.eta_max", v)?;
        }
        if let Some(v) = self.inner.spacing {
            positive("inner.spacing", v)?;
        }
        if let Some(v) = self.inner.tau_keep {
            positive("inner.tau_keep", v)?;
        }
        if self.inner.stations == Some(0) {
            return Err(Error::Config("inner.stations must be positive".into()));
        }
        positive("composite.cells_per_epsilon", self.composite.cells_per_epsilon)?;
        if self.composite.csv_stride == 0 {
            return Err(Error::Config("composite.csv_stride must be positive".into()));
        }
        if let Some(st) = &self.stability {
            positive("stability.sigma", st.sigma)?;
            positive("stability.l", st.l)?;
            if !(0.0..1.0).contains(&st.beta) {
                return Err(Error::Config(format!("stability.beta must lie in [0, 1), got {}", st.beta)));
            }
            if st.n_max == 0 {
                return Err(Error::Config("stability.n_max must be positive".into()));
            }
            if let Some(e) = st.epsilon {
                positive("stability.epsilon", e)?;
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep.values must not be empty".into()));
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("sweep.values must be finite".into()));
            }
            let needs = match sw.axis {
                SweepAxis::Beta => self.stability.is_some(),
                SweepAxis::Amplitude => matches!(
                    self.current,
                    Some(CurrentPreset::Dipole { .. }) | Some(CurrentPreset::BumpPair { .. }) | Some(CurrentPreset::Edges { .. })
                ),
                SweepAxis::Epsilon | SweepAxis::Sigma0 => self.domain.is_some() || self.stability.is_some(),
            };
            if !needs {
                return Err(Error::Config(format!("sweep.axis = {} has nothing to act on in this config", sw.axis.name())));
            }
        }
        Ok(())
    }

    fn epsilon(&self) -> Result<f64> {
        self.epsilon.ok_or_else(|| Error::Config("epsilon is required for this stage".into()))
    }

    fn sigma0(&self) -> Result<f64> {
        self.sigma0.ok_or_else(|| Error::Config("sigma0 is required for this stage".into()))
    }

    fn stability_input(&self) -> Result<(StabilityInput, usize)> {
        let st = self.stability.as_ref().ok_or_else(|| Error::Config("a [stability] block is required for this stage".into()))?;
        let eps = match st.epsilon {
            Some(e) => e,
            None => self.epsilon()?,
        };
        Ok((StabilityInput { beta: st.beta, sigma: st.sigma, l: st.l, eps, modes: Vec::new() }, st.n_max))
    }

    /// Copy with the sweep axis set to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.sweep = None;
        match axis {
            SweepAxis::Epsilon => {
                c.epsilon = Some(value);
                if let Some(st) = &mut c.stability {
                    if st.epsilon.is_some() {
                        st.epsilon = Some(value);
                    }
                }
            }
            SweepAxis::Sigma0 => c.sigma0 = Some(value),
            SweepAxis::Beta => {
                if let Some(st) = &mut c.stability {
                    st.beta = value;
                }
            }
            SweepAxis::Amplitude => match &mut c.current {
                Some(CurrentPreset::Dipole { amplitude }) | Some(CurrentPreset::BumpPair { amplitude, .. }) | Some(CurrentPreset::Edges { amplitude }) => {
                    *amplitude = value
                }
                _ => return Err(Error::Config("sweep over amplitude needs a parametric current preset".into())),
            },
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Feasibility,
    Outer,
    Inner,
    Composite,
    Stability,
    Evolve1d,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Feasibility => "feasibility",
            Stage::Outer => "outer",
            Stage::Inner => "inner",
            Stage::Composite => "composite",
            Stage::Stability => "stability",
            Stage::Evolve1d => "evolve1d",
        }
    }

    fn depends_on(self) -> Option<Stage> {
        match self {
            Stage::Outer => Some(Stage::Feasibility),
            Stage::Inner => Some(Stage::Outer),
            Stage::Composite => Some(Stage::Inner),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    /// "ok", "failed" or "skipped".
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_code: i32,
    pub scalars: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
    /// File name (relative to the output directory) to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

type Scalars = BTreeMap<String, Value>;

#[derive(Serialize, Deserialize)]
struct BoundaryArtifact {
    geometry: BoundaryGeometry,
    current: CurrentProfile,
}

#[derive(Serialize, Deserialize)]
struct FeasibilityArtifact {
    pointwise: PointwiseReport,
    flux_ratio: FluxRatioReport,
    feasible: bool,
}

#[derive(Serialize, Deserialize)]
struct OuterArtifact {
    solution: OuterSolution,
    zeta1: Vec<f64>,
}

/// Executes stages against one output directory and keeps the manifest.
pub struct Runner {
    cfg: RunConfig,
    out: PathBuf,
    override_feasibility: bool,
    manifest: Manifest,
    timings: BTreeMap<String, f64>,
}

impl Runner {
    /// A runner that starts from the manifest already in `out`, if any, so
    /// stages invoked one at a time accumulate in one manifest.
    pub fn new(cfg: RunConfig, out: &Path, override_feasibility: bool, fresh: bool) -> Result<Self> {
        let path = out.join("manifest.json");
        let (stages, artifacts) = match (fresh, path.exists()) {
            (false, true) => {
                let m: Manifest = read_json(&path)?;
                (m.stages, m.artifacts)
            }
            _ => Default::default(),
        };
        let timings = if fresh { BTreeMap::new() } else { read_json(&out.join("timings.json")).unwrap_or_default() };
        let manifest = Manifest {
            program: "glsc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            stages,
            artifacts,
        };
        Ok(Self { cfg, out: out.to_path_buf(), override_feasibility, manifest, timings })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.out.join(name), bytes)?;
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let bytes = to_json(value)?;
        self.emit(name, &bytes)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, name: &str, producer: Stage) -> Result<T> {
        let path = self.out.join(name);
        if !path.exists() {
            return Err(Error::Config(format!("{} not found; run the {} stage first", path.display(), producer.name())));
        }
        read_json(&path)
    }

    /// Persist the manifest and the timings sidecar.
    pub fn finish(&self) -> Result<()> {
        write_atomic(&self.out.join("manifest.json"), &to_json(&self.manifest)?)?;
        write_atomic(&self.out.join("timings.json"), &to_json(&self.timings)?)
    }

    fn record(&mut self, stage: Stage, status: &str, err: Option<&Error>, scalars: Scalars) {
        self.manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                status: status.into(),
                error: err.map(|e| e.to_string()),
                exit_code: err.map_or(0, Error::exit_code),
                scalars,
            },
        );
    }

    /// Run one stage and record its outcome.
    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let start = Instant::now();
        let result = match stage {
            Stage::Feasibility => self.feasibility(),
            Stage::Outer => self.outer(),
            Stage::Inner => self.inner(),
            Stage::Composite => self.composite(),
            Stage::Stability => self.stability(),
            Stage::Evolve1d => self.evolve1d(),
        };
        self.timings.insert(stage.name().into(), start.elapsed().as_secs_f64());
        match result {
            Ok(scalars) => {
                self.record(stage, "ok", None, scalars);
                Ok(())
            }
            Err((e, scalars)) => {
                self.record(stage, "failed", Some(&e), scalars);
                Err(e)
            }
        }
    }

    /// Run `stages` in order. A failure skips the stages that depend on the
    /// failed one; independent stages still run. Returns the first error.
    pub fn run_stages(&mut self, stages: &[Stage]) -> Result<()> {
        let mut first: Option<Error> = None;
        let mut failed: Vec<Stage> = Vec::new();
        for &stage in stages {
            let blocked = std::iter::successors(stage.depends_on(), |s| s.depends_on()).any(|d| failed.contains(&d));
            if blocked {
                self.record(stage, "skipped", None, Scalars::new());
                failed.push(stage);
                continue;
            }
            if let Err(e) = self.run_stage(stage) {
                failed.push(stage);
                first.get_or_insert(e);
            }
        }
        first.map_or(Ok(()), Err)
    }

    fn feasibility(&mut self) -> std::result::Result<Scalars, (Error, Scalars)> {
        let mut sc = Scalars::new();
        let run = |this: &mut Self, sc: &mut Scalars| -> Result<()> {
            let domain = this.cfg.domain.clone().ok_or_else(|| Error::Config("a [domain] block is required".into()))?;
            let preset = this.cfg.current.clone().ok_or_else(|| Error::Config("a [current] block is required".into()))?;
            let geom = domain.build()?;
            let j = CurrentProfile::from_preset(&geom, &preset)?;
            let pointwise = check_pointwise(&geom, &j, true)?;
            let flux = sup_flux_ratio(&geom, &j, this.cfg.feasibility.max_samples, true)?;
            let feasible = pointwise.feasible && flux.feasible;
            sc.insert("max_abs_current".into(), json!(pointwise.max_abs_current));
            sc.insert("sup_m".into(), json!(flux.sup_ratio));
            sc.insert("feasible".into(), json!(feasible));
            let table = flux_ratio_table(&geom, &j, this.cfg.feasibility.table_samples);
            let report = FeasibilityArtifact { pointwise, flux_ratio: flux, feasible };
            this.emit_json("feasibility.json", &report)?;
            this.emit("flux_ratio.csv", table_csv(&["s_a", "s_b", "value"], table.iter().map(|r| r.to_vec())).as_bytes())?;
            if !feasible && !this.override_feasibility {
                let why = if !report.pointwise.feasible {
                    format!("max |j| = {:.9} is not below the critical current", report.pointwise.max_abs_current)
                } else {
                    format!("flux-to-distance ratio {:.6} is not below 1", report.flux_ratio.sup_ratio)
                };
                return Err(Error::Infeasible(why));
            }
            this.emit_json("boundary.json", &BoundaryArtifact { geometry: geom, current: j })
        };
        match run(self, &mut sc) {
            Ok(()) => Ok(sc),
            Err(e) => Err((e, sc)),
        }
    }

    fn load_boundary(&self) -> Result<(BoundaryGeometry, CurrentProfile)> {
        let b: BoundaryArtifact = self.read("boundary.json", Stage::Feasibility)?;
        Ok((b.geometry, b.current))
    }

    fn outer(&mut self) -> std::result::Result<Scalars, (Error, Scalars)> {
        let mut sc = Scalars::new();
        let run = |this: &mut Self, sc: &mut Scalars| -> Result<()> {
            let eps = this.cfg.epsilon()?;
            let feas: FeasibilityArtifact = this.read("feasibility.json", Stage::Feasibility)?;
            if !feas.feasible && !this.override_feasibility {
                return Err(Error::Infeasible("the saved feasibility report is negative".into()));
            }
            let (geom, j) = this.load_boundary()?;
            let sol = solve_outer(&geom, &j, &this.cfg.outer)?;
            let mesh = FiniteCellMesh::new(&geom, sol.grid.clone());
            let zeta1 = solve_correction(&mesh, &sol, &j)?;
            let fields = outer_fields(&mesh, &geom, &sol, &zeta1, &j, eps);
            let current_identity = boundary_identity(&geom, &sol, &j)?;
            let grad_identity = gradient_identity(&geom, &sol, &j)?;
            sc.insert("max_grad".into(), json!(sol.max_gradient.value));
            sc.insert("max_grad_in_band".into(), json!(sol.max_gradient.in_band));
            sc.insert("load".into(), json!(sol.load));
            sc.insert("continuation_steps".into(), json!(sol.steps.len()));
            sc.insert("g1_max".into(), json!(fields.g1_max()));
            sc.insert("g2_max".into(), json!(fields.g2_max()));
            sc.insert("current_identity_max".into(), json!(current_identity.max_residual));
            sc.insert("gradient_identity_max".into(), json!(grad_identity.max_residual));
            let report = json!({
                "epsilon": eps,
                "load": sol.load,
                "energy": sol.energy,
                "max_gradient": sol.max_gradient,
                "interior_residual": sol.interior_residual,
                "flux_mismatch": sol.flux_mismatch,
                "continuation": sol.steps,
                "g1_max": fields.g1_max(),
                "g2_max": fields.g2_max(),
                "current_identity": current_identity,
                "gradient_identity": grad_identity,
            });
            this.emit_json("outer_report.json", &report)?;
            this.emit("zeta.csv", field_csv(&sol.grid, &sol.zeta, &sol.active, 1).as_bytes())?;
            this.emit("zeta1.csv", field_csv(&sol.grid, &zeta1, &sol.active, 1).as_bytes())?;
            this.emit("rho_outer.csv", field_csv(&fields.grid, &fields.rho, &fields.mask, 1).as_bytes())?;
            this.emit_json("outer_solution.json", &OuterArtifact { solution: sol, zeta1 })
        };
        match run(self, &mut sc) {
            Ok(()) => Ok(sc),
            Err(e) => Err((e, sc)),
        }
    }

    fn inner(&mut self) -> std::result::Result<Scalars, (Error, Scalars)> {
        let mut sc = Scalars::new();
        let run = |this: &mut Self, sc: &mut Scalars| -> Result<()> {
            let eps = this.cfg.epsilon()?;
            let sigma0 = this.cfg.sigma0()?;
            let (geom, j) = this.load_boundary()?;
            let outer: OuterArtifact = this.read("outer_solution.json", Stage::Outer)?;
            let delta = eps.powf(this.cfg.iota);
            let stations = this.cfg.inner.stations.unwrap_or_else(|| (1.25 * geom.length / delta).ceil() as usize);
            let trace = boundary_trace(&geom, &outer.solution, &j, stations)?;
            let opts = InnerOptions { eta_max: this.cfg.inner.eta_max, spacing: this.cfg.inner.spacing };
            let solved = inner_sweep(&trace, sigma0, &opts)?;
            let h_c = eps / this.cfg.composite.cells_per_epsilon;
            let tau_keep = this.cfg.inner.tau_keep.unwrap_or(1.25 * (2.0 * delta + 4.0 * h_c) / eps + 1.0);
            let kept: Vec<StationSolution> =
                solved.iter().map(|st| StationSolution { profiles: st.profiles.truncated(tau_keep), ..st.clone() }).collect();

            let range = |f: &dyn Fn(&StationSolution) -> f64| {
                solved.iter().map(f).fold([f64::INFINITY, f64::NEG_INFINITY], |r, v| [r[0].min(v), r[1].max(v)])
            };
            let mu = range(&|st| st.mu_j);
            let rho_j = range(&|st| st.profiles.rho_j);
            let iters = solved.iter().map(|st| st.fixed_point_iterations).max().unwrap_or(0);
            sc.insert("stations".into(), json!(stations));
            sc.insert("mu_j_min".into(), json!(mu[0]));
            sc.insert("mu_j_max".into(), json!(mu[1]));
            sc.insert("rho_j_min".into(), json!(rho_j[0]));
            sc.insert("rho_j_max".into(), json!(rho_j[1]));
            sc.insert("max_fixed_point_iterations".into(), json!(iters));

            let summary: Vec<Value> = solved
                .iter()
                .map(|st| {
                    json!({
                        "s": st.s,
                        "jr": st.profiles.params.jr,
                        "rho_r": st.profiles.params.rho_r,
                        "mu_j": st.mu_j,
                        "rho_j": st.profiles.rho_j,
                        "w0": st.w0,
                        "leading_decay_rate": st.leading_decay_rate,
                        "decay_rate": st.profiles.decay_rate,
                        "amplitude_decay_rate": st.profiles.amplitude_decay_rate,
                        "newton_iterations": st.newton_iterations,
                        "fixed_point_iterations": st.fixed_point_iterations,
                        "contraction": st.contraction,
                        "mu_deviation": st.mu_deviation,
                        "far_residual": st.profiles.far_residual,
                    })
                })
                .collect();
            this.emit_json("inner_summary.json", &json!({ "sigma0": sigma0, "tau_keep": tau_keep, "stations": summary }))?;
            let rows = kept.iter().enumerate().flat_map(|(k, st)| {
                let p = &st.profiles;
                (0..p.tau.len()).map(move |i| vec![k as f64, st.s, p.tau[i], p.rho[i], p.phi[i], p.dupsilon[i], p.upsilon[i]])
            });
            this.emit("inner_profiles.csv", table_csv(&["station", "s", "tau", "rho", "phi", "dupsilon", "upsilon"], rows).as_bytes())?;
            this.emit_json("inner_stations.json", &kept)
        };
        match run(self, &mut sc) {
            Ok(()) => Ok(sc),
            Err(e) => Err((e, sc)),
        }
    }

    fn composite(&mut self) -> std::result::Result<Scalars, (Error, Scalars)> {
        let mut sc = Scalars::new();
        let run = |this: &mut Self, sc: &mut Scalars| -> Result<()> {
            let eps = this.cfg.epsilon()?;
            let sigma0 = this.cfg.sigma0()?;
            let (geom, j) = this.load_boundary()?;
            let outer: OuterArtifact = this.read("outer_solution.json", Stage::Outer)?;
            let stations: Vec<StationSolution> = this.read("inner_stations.json", Stage::Inner)?;
            let sol = &outer.solution;
            let mesh = FiniteCellMesh::new(&geom, sol.grid.clone());
            let fields = outer_fields(&mesh, &geom, sol, &outer.zeta1, &j, eps);
            let input = OuterInput { geom: &geom, sol, zeta1: &outer.zeta1, fields: &fields };
            let opts = CompositeOptions { iota: this.cfg.iota, cells_per_epsilon: this.cfg.composite.cells_per_epsilon };
            let comp = assemble_composite(&input, &stations, sigma0, &opts)?;
            let rep = residuals(&comp, &input, &j)?;
            for (name, n) in [("h1", rep.h1), ("div_h2", rep.div_h2), ("h3", rep.h3)] {
                sc.insert(format!("{name}_total"), json!(n.total));
                sc.insert(format!("{name}_band"), json!(n.band));
                sc.insert(format!("{name}_interior"), json!(n.interior));
            }
            sc.insert("gauge_ratio".into(), json!(rep.gauge.ratio));
            sc.insert("rho_min".into(), json!(rep.rho_range[0]));
            sc.insert("rho_max".into(), json!(rep.rho_range[1]));
            let stride = this.cfg.composite.csv_stride;
            this.emit("composite_rho.csv", field_csv(&comp.grid, &comp.rho0.values, &comp.inside, stride).as_bytes())?;
            this.emit("composite_chi.csv", field_csv(&comp.grid, &comp.chi0.values, &comp.inside, stride).as_bytes())?;
            this.emit("composite_phi.csv", field_csv(&comp.grid, &comp.phi0.values, &comp.inside, stride).as_bytes())?;
            this.emit_json("composite_taylor.json", &comp.taylor)?;
            this.emit_json("residual_report.json", &rep)
        };
        match run(self, &mut sc) {
            Ok(()) => Ok(sc),
            Err(e) => Err((e, sc)),
        }
    }

    fn stability(&mut self) -> std::result::Result<Scalars, (Error, Scalars)> {
        let mut sc = Scalars::new();
        let run = |this: &mut Self, sc: &mut Scalars| -> Result<()> {
            let (input, n_max) = this.cfg.stability_input()?;
            let v = stability_verdict(&input, n_max)?;
            let beta_c = threshold(input.sigma, 1e-12);
            sc.insert("min_lambda_minus".into(), json!(v.min_lambda_minus));
            sc.insert("lambda0_minus".into(), json!(v.lambda0_minus));
            sc.insert("stable".into(), json!(v.stable));
            sc.insert("beta_threshold".into(), json!(beta_c));
            let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
            let rows = v.modes.iter().map(|m| {
                vec![m.n as f64, m.gamma, opt(m.a_plus), opt(m.a_minus), m.lambda_plus, m.lambda_minus, m.discriminant]
            });
            let csv = table_csv(&["n", "gamma", "a_plus", "a_minus", "lambda_plus", "lambda_minus", "discriminant"], rows);
            this.emit("stability_modes.csv", csv.as_bytes())?;
            let report = json!({
                "input": input,
                "n_max": n_max,
                "stable": v.stable,
                "lambda0_minus": v.lambda0_minus,
                "min_lambda_minus": v.min_lambda_minus,
                "argmin": v.argmin,
                "beta_threshold": beta_c,
            });
            this.emit_json("stability.json", &report)
        };
        match run(self, &mut sc) {
            Ok(()) => Ok(sc),
            Err(e) => Err((e, sc)),
        }
    }

    fn evolve1d(&mut self) -> std::result::Result<Scalars, (Error, Scalars)> {
        let mut sc = Scalars::new();
        let run = |this: &mut Self, sc: &mut Scalars| -> Result<()> {
            let (input, _) = this.cfg.stability_input()?;
            let opts = this.cfg.evolve.clone().unwrap_or_default();
            let ev = evolve_1d(&input, &opts)?;
            sc.insert("fitted_rate".into(), json!(ev.fitted_rate));
            sc.insert("predicted_rate".into(), json!(ev.predicted_rate));
            let rows = ev.times.iter().zip(&ev.norms).map(|(t, n)| vec![*t, *n]);
            this.emit("evolve_history.csv", table_csv(&["t", "norm"], rows).as_bytes())?;
            let report = json!({
                "input": input,
                "options": opts,
                "fitted_rate": ev.fitted_rate,
                "predicted_rate": ev.predicted_rate,
                "relative_error": (ev.fitted_rate - ev.predicted_rate).abs() / ev.predicted_rate.abs(),
                "gauge_max": ev.gauge_max,
            });
            this.emit_json("evolve.json", &report)
        };
        match run(self, &mut sc) {
            Ok(()) => Ok(sc),
            Err(e) => Err((e, sc)),
        }
    }
}

/// Stages run by `all`: the PDE chain when a domain is configured, then the
/// stability stages when their blocks are present.
pub fn pipeline(cfg: &RunConfig) -> Result<Vec<Stage>> {
    let mut stages = Vec::new();
    if cfg.domain.is_some() {
        stages.extend([Stage::Feasibility, Stage::Outer, Stage::Inner, Stage::Composite]);
    }
    if cfg.stability.is_some() {
        stages.push(Stage::Stability);
        if cfg.evolve.is_some() {
            stages.push(Stage::Evolve1d);
        }
    }
    if stages.is_empty() {
        return Err(Error::Config("nothing to run: the config has neither [domain] nor [stability]".into()));
    }
    Ok(stages)
}

/// Run `stages` into `out`, always writing the manifest. `fresh` discards
/// any manifest already present.
pub fn run_stages(cfg: &RunConfig, out: &Path, stages: &[Stage], override_feasibility: bool, fresh: bool) -> (Manifest, Result<()>) {
    let mut runner = match Runner::new(cfg.clone(), out, override_feasibility, fresh) {
        Ok(r) => r,
        Err(e) => {
            let m = Manifest { program: "glsc".into(), version: env!("CARGO_PKG_VERSION").into(), config: cfg.clone(), stages: BTreeMap::new(), artifacts: BTreeMap::new() };
            return (m, Err(e));
        }
    };
    let result = runner.run_stages(stages);
    let written = runner.finish();
    let manifest = runner.manifest.clone();
    (manifest, result.and(written))
}

/// Scalars gathered in the sweep table, in column order.
const SWEEP_COLUMNS: &[(&str, &str)] = &[
    ("feasibility", "sup_m"),
    ("outer", "max_grad"),
    ("inner", "mu_j_min"),
    ("inner", "mu_j_max"),
    ("composite", "h1_total"),
    ("composite", "h1_band"),
    ("composite", "h1_interior"),
    ("composite", "div_h2_total"),
    ("composite", "div_h2_band"),
    ("composite", "div_h2_interior"),
    ("composite", "h3_total"),
    ("composite", "h3_band"),
    ("composite", "h3_interior"),
    ("stability", "min_lambda_minus"),
    ("stability", "stable"),
    ("evolve1d", "fitted_rate"),
];

fn scalar(m: &Manifest, stage: &str, key: &str) -> Option<f64> {
    match m.stages.get(stage)?.scalars.get(key)? {
        Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        v => v.as_f64(),
    }
}

/// Run the full pipeline once per sweep value, in parallel, into
/// `out/<axis>_<k>/`, then write `sweep.csv` and the top-level manifest.
/// Failures of individual values are recorded and do not stop the sweep.
pub fn run_sweep(cfg: &RunConfig, out: &Path, override_feasibility: bool) -> (Manifest, Result<()>) {
    let mut manifest = Manifest { program: "glsc".into(), version: env!("CARGO_PKG_VERSION").into(), config: cfg.clone(), stages: BTreeMap::new(), artifacts: BTreeMap::new() };
    let spec = match &cfg.sweep {
        Some(s) if !s.values.is_empty() => s.clone(),
        Some(_) => return (manifest, Err(Error::Config("sweep.values must not be empty".into()))),
        None => return (manifest, Err(Error::Config("a [sweep] block is required".into()))),
    };
    let start = Instant::now();
    let runs: Vec<(String, std::result::Result<Manifest, Error>, i32)> = spec
        .values
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            let dir = format!("{}_{k:03}", spec.axis.name());
            let sub = match cfg.with_axis(spec.axis, v).and_then(|c| pipeline(&c).map(|p| (c, p))) {
                Ok((c, stages)) => {
                    let (m, r) = run_stages(&c, &out.join(&dir), &stages, override_feasibility, true);
                    let code = r.as_ref().err().map_or(0, Error::exit_code);
                    (Ok(m), code)
                }
                Err(e) => {
                    let code = e.exit_code();
                    (Err(e), code)
                }
            };
            (dir, sub.0, sub.1)
        })
        .collect();

    let mut header = vec!["value".to_string(), "exit_code".to_string()];
    header.extend(SWEEP_COLUMNS.iter().map(|(_, k)| k.to_string()));
    let rate_keys = ["h1_total", "div_h2_total", "h3_total"];
    if spec.axis == SweepAxis::Epsilon {
        header.extend(rate_keys.iter().map(|k| format!("rate_{k}")));
    }
    let mut csv = header.join(",");
    csv.push('\n');
    let cell = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.16e}"));
    let mut failures = 0;
    for (k, (dir, m, code)) in runs.iter().enumerate() {
        let v = spec.values[k];
        let mut row = vec![format!("{v:.16e}"), code.to_string()];
        if *code != 0 {
            failures += 1;
        }
        let m = m.as_ref().ok();
        row.extend(SWEEP_COLUMNS.iter().map(|(s, key)| cell(m.and_then(|m| scalar(m, s, key)))));
        if spec.axis == SweepAxis::Epsilon {
            for key in rate_keys {
                let rate = (k > 0).then_some(()).and_then(|_| {
                    let prev = runs[k - 1].1.as_ref().ok().and_then(|m| scalar(m, "composite", key))?;
                    let cur = m.and_then(|m| scalar(m, "composite", key))?;
                    Some((prev / cur).ln() / (spec.values[k - 1] / v).ln())
                });
                row.push(cell(rate));
            }
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
        if let Some(m) = m {
            for (name, hash) in &m.artifacts {
                manifest.artifacts.insert(format!("{dir}/{name}"), hash.clone());
            }
            if let Ok(bytes) = std::fs::read(out.join(dir).join("manifest.json")) {
                manifest.artifacts.insert(format!("{dir}/manifest.json"), sha256_hex(&bytes));
            }
        }
    }
    let mut scalars = Scalars::new();
    scalars.insert("values".into(), json!(spec.values.len()));
    scalars.insert("failures".into(), json!(failures));
    let written = write_atomic(&out.join("sweep.csv"), csv.as_bytes()).and_then(|_| {
        manifest.artifacts.insert("sweep.csv".into(), sha256_hex(csv.as_bytes()));
        manifest.stages.insert("sweep".into(), StageRecord { status: "ok".into(), error: None, exit_code: 0, scalars });
        write_atomic(&out.join("manifest.json"), &to_json(&manifest)?)?;
        let timings = BTreeMap::from([("sweep".to_string(), start.elapsed().as_secs_f64())]);
        write_atomic(&out.join("timings.json"), &to_json(&timings)?)
    });
    (manifest, written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STABILITY_ONLY: &str = r#"
epsilon = 0.05
[stability]
beta = 0.5
sigma = 1.0
l = 1.0
n_max = 5
"#;

    #[test]
    fn config_errors_name_the_field() {
        let e = RunConfig::from_toml("epsilon = -1.0").unwrap_err();
        assert!(e.to_string().contains("epsilon"), "{e}");
        assert_eq!(e.exit_code(), 4);
        let e = RunConfig::from_toml("iota = 1.5").unwrap_err();
        assert!(e.to_string().contains("iota"));
        let e = RunConfig::from_toml("[outer]\nhh = 0.1").unwrap_err();
        assert!(e.to_string().contains("hh"), "{e}");
        let e = RunConfig::from_toml(&format!("{STABILITY_ONLY}\n[sweep]\naxis = \"beta\"\nvalues = []")).unwrap_err();
        assert!(e.to_string().contains("sweep.values"), "{e}");
    }

    #[test]
    fn presets_parse_with_defaults() {
        let cfg = RunConfig::from_toml(
            "epsilon = 0.02\nsigma0 = 100\n[domain]\nkind = \"circle\"\nradius = 1.0\n[current]\nkind = \"dipole\"\namplitude = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.domain, Some(DomainSpec::Circle { radius: 1.0, samples: 512 }));
        assert_eq!(cfg.iota, 0.9);
        assert_eq!(cfg.outer.h, OuterOptions::default().h);
        assert_eq!(pipeline(&cfg).unwrap(), vec![Stage::Feasibility, Stage::Outer, Stage::Inner, Stage::Composite]);
        let swept = cfg.with_axis(SweepAxis::Amplitude, 0.3).unwrap();
        assert_eq!(swept.current, Some(CurrentPreset::Dipole { amplitude: 0.3 }));
    }

    #[test]
    fn stability_only_config_runs_no_pde_stage() {
        let cfg = RunConfig::from_toml(STABILITY_ONLY).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stages = pipeline(&cfg).unwrap();
        assert_eq!(stages, vec![Stage::Stability]);
        let (m, r) = run_stages(&cfg, dir.path(), &stages, false, true);
        r.unwrap();
        assert_eq!(m.stages.keys().collect::<Vec<_>>(), vec!["stability"]);
        let names: Vec<&String> = m.artifacts.keys().collect();
        assert_eq!(names, vec!["stability.json", "stability_modes.csv"]);
        for (name, hash) in &m.artifacts {
            assert_eq!(&sha256_hex(&std::fs::read(dir.path().join(name)).unwrap()), hash);
        }
        assert!(dir.path().join("manifest.json").exists() && dir.path().join("timings.json").exists());
    }

    #[test]
    fn downstream_stage_without_inputs_is_a_config_error() {
        let cfg = RunConfig::from_toml(
            "epsilon = 0.05\nsigma0 = 50\n[domain]\nkind = \"circle\"\nradius = 1.0\n[current]\nkind = \"zero\"\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = run_stages(&cfg, dir.path(), &[Stage::Inner], false, true);
        let e = r.unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("run the feasibility stage first"), "{e}");
        assert_eq!(m.stages["inner"].status, "failed");
    }

    #[test]
    fn infeasible_current_writes_only_the_report() {
        let cfg = RunConfig::from_toml(
            "epsilon = 0.05\nsigma0 = 50\n[domain]\nkind = \"circle\"\nradius = 1.0\nsamples = 64\n[current]\nkind = \"dipole\"\namplitude = 0.5\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = run_stages(&cfg, dir.path(), &pipeline(&cfg).unwrap(), false, true);
        assert_eq!(r.unwrap_err().exit_code(), 2);
        assert_eq!(m.stages["feasibility"].status, "failed");
        for s in ["outer", "inner", "composite"] {
            assert_eq!(m.stages[s].status, "skipped");
        }
        let names: Vec<&String> = m.artifacts.keys().collect();
        assert_eq!(names, vec!["feasibility.json", "flux_ratio.csv"]);
    }

    #[test]
    fn beta_sweep_flips_the_verdict_once() {
        let cfg = RunConfig::from_toml(&format!("{STABILITY_ONLY}\n[sweep]\naxis = \"beta\"\nvalues = [0.5, 0.577, 0.65]")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = run_sweep(&cfg, dir.path(), false);
        r.unwrap();
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "stable").unwrap();
        let verdicts: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(col).unwrap()).collect();
        assert_eq!(verdicts, vec!["1.0000000000000000e0", "1.0000000000000000e0", "0.0000000000000000e0"]);
        assert!(m.artifacts.contains_key("beta_002/stability.json"));
    }
}
