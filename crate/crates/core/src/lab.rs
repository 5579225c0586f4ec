//! Scenario files and the experiment pipeline behind the `ietlab` binary.
//!
//! A scenario names a periodic exchange, a cocycle and a list of stages.
//! Running it produces JSON and CSV artifacts and a gate log with one line
//! per invariant check. Hard gates decide the exit status, soft ones only warn.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::birkhoff::{self, DiagRow};
use crate::catalog;
use crate::cocycle::{random_poly_part, random_symmetric_constants, CocycleJson, LogCocycle, Piece};
use crate::correction::{self, CorrectionOptions, CorrectionResult, GrowthProfile, Trend};
use crate::engine::{Engine, EngineOptions};
use crate::ergodicity::{self, CbarPolicy, Evidence, RigidityTower, SpacingReport, Tightness};
use crate::error::{Error, Result};
use crate::iet::omega_rank_and_subspaces;
use crate::linalg;
use crate::rauzy::{self, LoopEntry, LoopJson, PeriodicIet};

/// The bundled demonstration scenario.
pub const GOLDEN_DEMO: &str = include_str!("../scenarios/golden-demo.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// A bundled instance: golden, rev4, rev5 or torus3.
    Catalog(String),
    /// Inline loop descriptor {pair: {alphabet, pi0, pi1}, moves: [...]}.
    Loop(serde_json::Value),
    /// Loop descriptor file, relative to the scenario file.
    LoopFile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CocycleSpec {
    /// Random strongly symmetric constants of geometric type and a random
    /// polynomial part, drawn from the scenario seed.
    RandomSymmetric {
        #[serde(default)]
        poly_degree: usize,
    },
    PureLog { cplus: Vec<f64>, cminus: Vec<f64> },
    /// Piecewise constant cocycle.
    Constants { h: Vec<f64> },
    /// g - g o T for a polynomial g on [0, |I|), coefficients from degree 0.
    Coboundary { g: Vec<f64> },
    /// Cocycle in the JSON form written by the library.
    Inline { cocycle: serde_json::Value },
    /// Cocycle JSON file, relative to the scenario file.
    File { path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Induct,
    Correct,
    Diagnose,
    Rigidity,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Induct => "induct",
            Stage::Correct => "correct",
            Stage::Diagnose => "diagnose",
            Stage::Rigidity => "rigidity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Series tolerance of the correction, relative to LV.
    pub series_tol: f64,
    /// Levels of the growth profiles.
    pub growth_levels: usize,
    /// Levels of the diagnostics table.
    pub diagnose_levels: usize,
    /// Deepest k' of the exact renormalization checks.
    pub structure_depth: usize,
    /// Random points per level for the pointwise consistency check.
    pub consistency_points: usize,
    /// Longest return time for which cancellation defects are computed.
    pub defect_budget: u64,
    pub rigidity_levels: Vec<usize>,
    pub spacing_points: usize,
    pub s_values: Vec<f64>,
    pub panels: usize,
    pub samples: usize,
    pub bins: usize,
    pub level_cap: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            series_tol: 1e-10,
            growth_levels: 8,
            diagnose_levels: 6,
            structure_depth: 3,
            consistency_points: 100,
            defect_budget: 2_000_000,
            rigidity_levels: vec![2, 3, 4, 5, 6],
            spacing_points: 20,
            s_values: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            panels: 16,
            samples: 2000,
            bins: 40,
            level_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub source: Source,
    pub cocycle: CocycleSpec,
    /// Subtract the mean so the cocycle integrates to zero.
    #[serde(default = "yes")]
    pub zero_mean: bool,
    #[serde(default = "full_pipeline")]
    pub pipeline: Vec<Stage>,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default)]
    pub seed: u64,
    /// Catalog instances visited by `sweep`.
    #[serde(default)]
    pub sweep: Vec<String>,
}

fn yes() -> bool {
    true
}

fn full_pipeline() -> Vec<Stage> {
    vec![Stage::Induct, Stage::Correct, Stage::Diagnose, Stage::Rigidity]
}

/// Command-line overrides, applied before validation and hashing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub level_cap: Option<usize>,
}

/// A parsed scenario with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub dir: PathBuf,
}

impl Loaded {
    pub fn from_str(text: &str, dir: &Path) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("scenario: {e}")))?;
        Ok(Loaded { scenario, dir: dir.to_path_buf() })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn demo() -> Self {
        Self::from_str(GOLDEN_DEMO, Path::new(".")).expect("bundled scenario parses")
    }

    pub fn apply(&mut self, o: &Overrides) {
        let s = &mut self.scenario;
        if let Some(seed) = o.seed {
            s.seed = seed;
        }
        if let Some(tol) = o.tol {
            s.settings.series_tol = tol;
        }
        if let Some(cap) = o.level_cap {
            s.settings.level_cap = Some(cap);
        }
    }

    fn read(&self, rel: &str) -> Result<String> {
        Ok(std::fs::read_to_string(self.dir.join(rel))?)
    }

    /// sha256 over the effective scenario and the files it references.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.scenario)?);
        if let Source::LoopFile(f) = &self.scenario.source {
            h.update(self.read(f)?.as_bytes());
        }
        if let CocycleSpec::File { path } = &self.scenario.cocycle {
            h.update(self.read(path)?.as_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Blog as far as it can be read off the file without computing.
    fn declared_blog(&self) -> Result<Option<f64>> {
        let abs_sum = |a: &[f64], b: &[f64]| a.iter().chain(b).map(|c| c.abs()).sum::<f64>();
        let from_json = |v: &serde_json::Value| -> Result<f64> {
            let j: CocycleJson = serde_json::from_value(v.clone())?;
            Ok(abs_sum(&j.cplus, &j.cminus))
        };
        Ok(match &self.scenario.cocycle {
            CocycleSpec::RandomSymmetric { .. } => None,
            CocycleSpec::PureLog { cplus, cminus } => Some(abs_sum(cplus, cminus)),
            CocycleSpec::Constants { .. } | CocycleSpec::Coboundary { .. } => Some(0.0),
            CocycleSpec::Inline { cocycle } => Some(from_json(cocycle)?),
            CocycleSpec::File { path } => Some(from_json(&serde_json::from_str(&self.read(path)?)?)?),
        })
    }

    /// Checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        let st = &s.settings;
        let bad = |m: String| Err(Error::Invalid(m));
        if s.pipeline.is_empty() {
            return bad("pipeline is empty".into());
        }
        let mut seen = s.pipeline.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != s.pipeline.len() {
            return bad("pipeline repeats a stage".into());
        }
        if !(st.series_tol > 0.0 && st.series_tol.is_finite()) {
            return bad(format!("series_tol {} must be positive", st.series_tol));
        }
        if st.growth_levels < 3 || st.diagnose_levels == 0 || st.structure_depth == 0 {
            return bad("growth_levels must be >= 3, diagnose_levels and structure_depth >= 1".into());
        }
        if st.rigidity_levels.is_empty() || st.rigidity_levels.iter().any(|&n| n < 2) {
            return bad("rigidity_levels must be non-empty and >= 2".into());
        }
        if st.s_values.is_empty() || st.s_values.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return bad("s_values must be finite and nonzero".into());
        }
        if st.panels < 2 || st.samples == 0 || st.bins == 0 {
            return bad("panels >= 2, samples and bins >= 1".into());
        }
        if let Source::Catalog(name) = &s.source {
            catalog::find(name)?;
        }
        for name in &s.sweep {
            catalog::find(name)?;
        }
        if s.pipeline.contains(&Stage::Rigidity) && self.declared_blog()? == Some(0.0) {
            return bad("rigidity needs logarithmic singularities, but the cocycle has Blog = 0".into());
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<PeriodicIet> {
        let mut p = match &self.scenario.source {
            Source::Catalog(name) => catalog::build(name)?,
            Source::Loop(v) => rauzy::build_from_loop_json(&serde_json::from_value::<LoopJson>(v.clone())?)?,
            Source::LoopFile(f) => rauzy::build_from_loop_json(&serde_json::from_str(&self.read(f)?)?)?,
        };
        if let Some(cap) = self.scenario.settings.level_cap {
            p.level_cap = cap;
        }
        Ok(p)
    }

    pub fn build_cocycle(&self, p: &PeriodicIet) -> Result<LogCocycle> {
        let s = &self.scenario;
        let base = &p.base;
        let d = p.d();
        let sized = |v: &[f64], what: &str| {
            if v.len() == d {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{what} has {} entries for {d} intervals", v.len())))
            }
        };
        let phi = match &s.cocycle {
            CocycleSpec::RandomSymmetric { poly_degree } => {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
                let (cp, cm) = random_symmetric_constants(base, &p.saddle, &mut rng);
                let g = if *poly_degree == 0 {
                    base.lambda.iter().map(|&l| Piece::zero(l)).collect()
                } else {
                    random_poly_part(base, *poly_degree, &mut rng)
                };
                LogCocycle::new(0, base.clone(), cp, cm, g)?
            }
            CocycleSpec::PureLog { cplus, cminus } => {
                sized(cplus, "cplus")?;
                sized(cminus, "cminus")?;
                LogCocycle::pure_log(base, cplus.clone(), cminus.clone())?
            }
            CocycleSpec::Constants { h } => {
                sized(h, "h")?;
                LogCocycle::piecewise_constant(base, h)
            }
            CocycleSpec::Coboundary { g } => correction::polynomial_coboundary(base, g, &vec![0.0; d]),
            CocycleSpec::Inline { cocycle } => LogCocycle::from_json(base, &serde_json::from_value(cocycle.clone())?)?,
            CocycleSpec::File { path } => LogCocycle::from_json(base, &serde_json::from_str(&self.read(path)?)?)?,
        };
        Ok(if s.zero_mean {
            let m = phi.mean();
            phi.add_constants(&vec![-m; d])
        } else {
            phi
        })
    }
}

/// JSON schema of scenario files.
pub fn scenario_schema() -> String {
    let schema = schemars::schema_for!(Scenario);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub stage: Stage,
    pub name: String,
    pub passed: bool,
    pub hard: bool,
    pub detail: String,
}

impl Gate {
    fn new(stage: Stage, name: &str, passed: bool, hard: bool, detail: String) -> Self {
        Gate { stage, name: name.into(), passed, hard, detail }
    }

    pub fn line(&self) -> String {
        let tag = match (self.passed, self.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        format!("{tag} {}/{}: {}", self.stage, self.name, self.detail)
    }
}

/// Everything a run produces. Files are kept in memory until written.
#[derive(Debug, Clone)]
pub struct Run {
    pub summary: Summary,
    pub files: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub hash: String,
    pub version: String,
    pub instance: LoopEntry,
    pub stages: Vec<Stage>,
    pub results: BTreeMap<String, serde_json::Value>,
    pub gates: Vec<Gate>,
    pub passed: bool,
}

impl Run {
    pub fn hard_failures(&self) -> Vec<&Gate> {
        self.summary.gates.iter().filter(|g| g.hard && !g.passed).collect()
    }

    pub fn gate_log(&self) -> String {
        self.summary.gates.iter().map(|g| g.line() + "\n").collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&self.summary)?)?;
        std::fs::write(dir.join("gates.log"), self.gate_log())?;
        Ok(())
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(hash: &str, body: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(&serde_json::json!({ "hash": hash, "result": body }))?)
}

#[derive(Default)]
struct Out {
    files: BTreeMap<String, Vec<u8>>,
    results: BTreeMap<String, serde_json::Value>,
    gates: Vec<Gate>,
}

/// The stages to run: the whole pipeline, or one stage with the correction
/// in front of it when the pipeline asks for one.
pub fn stages_for(s: &Scenario, only: Option<Stage>) -> Vec<Stage> {
    match only {
        None => {
            let mut v = s.pipeline.clone();
            v.sort();
            v
        }
        Some(Stage::Diagnose | Stage::Rigidity) if s.pipeline.contains(&Stage::Correct) => vec![Stage::Correct, only.unwrap()],
        Some(st) => vec![st],
    }
}

pub fn run(loaded: &Loaded, only: Option<Stage>) -> Result<Run> {
    loaded.validate()?;
    let hash = loaded.hash()?;
    let s = &loaded.scenario;
    let p = loaded.build_instance()?;
    let phi = loaded.build_cocycle(&p)?;
    let stages = stages_for(s, only);
    let mut out = Out::default();
    let mut corrected = phi.clone();
    for &st in &stages {
        match st {
            Stage::Induct => induct(&p, &hash, &mut out)?,
            Stage::Correct => corrected = correct(&p, &phi, s, &hash, &mut out)?,
            Stage::Diagnose => diagnose(&p, &corrected, s, &hash, &mut out)?,
            Stage::Rigidity => rigidity(&p, &corrected, &phi, s, &hash, &mut out)?,
        }
    }
    let passed = out.gates.iter().all(|g| g.passed || !g.hard);
    let summary = Summary {
        scenario: s.name.clone(),
        hash,
        version: env!("CARGO_PKG_VERSION").into(),
        instance: rauzy::catalog_entry(&p),
        stages,
        results: out.results,
        gates: out.gates,
        passed,
    };
    Ok(Run { summary, files: out.files })
}

#[derive(Serialize)]
struct LevelRow {
    level: usize,
    length: f64,
    q_min: i64,
    q_max: i64,
}

fn induct(p: &PeriodicIet, hash: &str, out: &mut Out) -> Result<()> {
    let st = Stage::Induct;
    let path = p.replay(3);
    out.gates.push(Gate::new(st, "replay", path.is_ok(), true, format!("{} moves x 3 periods", p.period())));
    if let Ok(path) = &path {
        let mut bad = 0;
        for step in &path.steps {
            let lhs = linalg::int_mul(&linalg::int_mul(&step.theta.transpose(), &step.from.omega())?, &step.theta)?;
            if lhs != step.to.omega() {
                bad += 1;
            }
        }
        out.gates.push(Gate::new(st, "conjugation", bad == 0, true, format!("{bad} of {} steps differ", path.steps.len())));
    }
    let k_max = 8.min(p.level_cap);
    let dev = p.self_similarity(k_max)?;
    let worst = dev.iter().copied().fold(0.0, f64::max);
    out.gates.push(Gate::new(st, "self-similarity", worst <= 1e-10, true, format!("max deviation {worst:.2e} over {k_max} levels")));
    let s = &p.saddle;
    let d = p.d();
    let sum_b: Vec<i64> = (0..d).map(|a| s.b.iter().map(|b| b[a]).sum()).collect();
    out.gates.push(Gate::new(st, "kernel-sum", sum_b.iter().all(|&v| v == 0), true, format!("{sum_b:?}")));
    let bs: Vec<Vec<f64>> = s.b.iter().map(|b| b.iter().map(|&v| v as f64).collect()).collect();
    let kernel = omega_rank_and_subspaces(p.perm()).kernel;
    let residual = if kernel.is_empty() && linalg::orthonormalize(&bs, 1e-12).is_empty() {
        0.0
    } else {
        linalg::mutual_projection_residual(&kernel, &bs)
    };
    out.gates.push(Gate::new(st, "kernel-span", residual < 1e-10, true, format!("residual {residual:.1e}")));
    let dim_ok = d == 2 * p.genus() + s.kappa - 1;
    out.gates.push(Gate::new(st, "dimension", dim_ok, true, format!("d={d} g={} kappa={}", p.genus(), s.kappa)));
    let stable = p.stabilize_period()?;
    let fixed = stable.saddle.b.iter().all(|b| linalg::int_vec_mul(&stable.a, b) == *b);
    out.gates.push(Gate::new(st, "kernel-fixed", fixed, true, format!("period x{}", stable.period() / p.period())));
    out.gates.push(Gate::new(st, "hyperbolic", p.hyperbolic(), false, format!("exponents {:?}", p.spectral.exponents)));

    let rows: Vec<LevelRow> = (0..=k_max)
        .map(|k| {
            let q = p.return_times(0, k)?;
            Ok(LevelRow {
                level: k,
                length: p.scale(k),
                q_min: q.iter().copied().min().unwrap_or(0),
                q_max: q.iter().copied().max().unwrap_or(0),
            })
        })
        .collect::<Result<_>>()?;
    let period = serde_json::json!({
        "entry": rauzy::catalog_entry(p),
        "base": p.base.to_json(),
        "level_cap": p.level_cap,
        "nu": p.nu,
        "theta_minus": p.spectral.theta_minus,
        "self_similarity": dev,
    });
    out.files.insert("period.json".into(), json_bytes(hash, &period)?);
    out.files.insert("levels.csv".into(), csv_bytes(&rows)?);
    out.results.insert("induct".into(), serde_json::json!({ "rho": p.rho, "genus": p.genus(), "kappa": s.kappa, "hyperbolic": p.hyperbolic() }));
    Ok(())
}

#[derive(Serialize)]
struct GrowthRow {
    level: usize,
    v_raw: f64,
    v_corrected: f64,
}

fn trend_name(g: &GrowthProfile) -> &'static str {
    match g.trend {
        Trend::Bounded => "bounded",
        Trend::Polynomial { .. } => "polynomial",
        Trend::Exponential { .. } => "exponential",
    }
}

fn correct(p: &PeriodicIet, phi: &LogCocycle, s: &Scenario, hash: &str, out: &mut Out) -> Result<LogCocycle> {
    let st = Stage::Correct;
    let opts = CorrectionOptions { tol: s.settings.series_tol, ..Default::default() };
    let r: CorrectionResult = match correction::correction_operator(p, phi, &opts) {
        Ok(r) => r,
        Err(e @ (Error::WeakSymmetry(_) | Error::SeriesDiverged { .. })) => {
            out.gates.push(Gate::new(st, "correction", false, true, e.to_string()));
            return Ok(phi.clone());
        }
        Err(e) => return Err(e),
    };
    let norm_h = linalg::norm2(&r.h);
    let gap_ok = r.oracle_gap <= 1e-4 * (1.0 + norm_h);
    out.gates.push(Gate::new(st, "oracle-gap", gap_ok, true, format!("{:.2e} for |h| = {norm_h:.3e}", r.oracle_gap)));
    out.gates.push(Gate::new(
        st,
        "subspace",
        r.off_subspace <= 1e-8 * (1.0 + norm_h),
        false,
        format!("distance {:.1e}, mean {:.1e}", r.off_subspace, r.mean),
    ));
    let corrected = phi.add_constants(&r.h.iter().map(|x| -x).collect::<Vec<_>>());
    let k = s.settings.growth_levels;
    let raw = correction::growth_profile(p, phi, k, true)?;
    let fixed = correction::growth_profile(p, &corrected, k, true)?;
    let bounded = matches!(fixed.trend, Trend::Bounded);
    out.gates.push(Gate::new(
        st,
        "corrected-bounded",
        bounded,
        p.hyperbolic(),
        format!("trend {}, max/min {:.2}", trend_name(&fixed), fixed.spread),
    ));
    let rows: Vec<GrowthRow> =
        (0..=k).map(|l| GrowthRow { level: l, v_raw: raw.v[l], v_corrected: fixed.v[l] }).collect();
    out.files.insert("correction.json".into(), json_bytes(hash, &r)?);
    out.files.insert("growth.csv".into(), csv_bytes(&rows)?);
    out.files.insert(
        "growth.json".into(),
        json_bytes(hash, &serde_json::json!({ "raw": raw, "corrected": fixed }))?,
    );
    out.results.insert(
        "correct".into(),
        serde_json::json!({
            "h": r.h, "truncation": r.truncation, "oracle_gap": r.oracle_gap,
            "raw_trend": trend_name(&raw), "corrected_trend": trend_name(&fixed),
        }),
    );
    Ok(corrected)
}

#[derive(Serialize)]
struct RemainderRow {
    level: usize,
    constant: f64,
}

fn diagnose(p: &PeriodicIet, phi: &LogCocycle, s: &Scenario, hash: &str, out: &mut Out) -> Result<()> {
    let st = Stage::Diagnose;
    let set = &s.settings;
    let k_max = set.diagnose_levels.min(p.level_cap);
    let blog = phi.blog();
    let mut eng = Engine::new(p, phi, EngineOptions { zero_mean: phi.mean().abs() <= 1e-12 * (1.0 + phi.lv()), ..Default::default() })?;
    eng.run_to(k_max)?;
    let sups: Vec<f64> = if blog == 0.0 { (0..=k_max).map(|k| eng.sup(k)).collect() } else { Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0xd1a6);
    let mut rows: Vec<DiagRow> = Vec::new();
    for k in 0..=k_max {
        let image = eng.normalized(k)?;
        let mut level = birkhoff::level_rows(p, &image)?;
        for row in &mut level {
            let r = row.q as u64;
            if blog > 0.0 && r <= set.defect_budget {
                let x = rng.gen_range(0.0..p.base.total);
                row.defect = birkhoff::cancellation_defect(phi, x, r).ok().map(|c| c.normalized);
            }
            if blog == 0.0 {
                row.bound = birkhoff::birkhoff_sup_bound(p, &sups, r).ok().map(|b| b.bound);
            }
        }
        rows.extend(level);
    }
    out.files.insert("diagnostics.csv".into(), csv_bytes(&rows)?);

    // exact renormalization against pointwise orbit sums
    let depth = set.structure_depth.min(p.level_cap);
    let mut worst_gap: f64 = 0.0;
    let mut blog_ok = true;
    for k2 in 1..=depth {
        let view = birkhoff::renormalize_structure(p, phi, k2)?;
        if blog > 0.0 {
            blog_ok &= birkhoff::check_constants(p, phi, &view)?.blog_exact;
        }
        let top = view.image.iet.total;
        let xs: Vec<f64> = (0..set.consistency_points).map(|_| rng.gen_range(0.0..top)).collect();
        worst_gap = worst_gap.max(birkhoff::consistency_gap(p, phi, &view, &xs)?);
    }
    if blog > 0.0 {
        out.gates.push(Gate::new(st, "blog-preserved", blog_ok, true, format!("levels 1..={depth}")));
    }
    out.gates.push(Gate::new(
        st,
        "pointwise-consistency",
        worst_gap <= 1e-8,
        true,
        format!("relative gap {worst_gap:.1e} at {} points per level", set.consistency_points),
    ));
    let mut summary = serde_json::json!({ "levels": k_max, "consistency_gap": worst_gap });
    if blog > 0.0 {
        let consts: Vec<RemainderRow> =
            (1..=k_max).map(|k| Ok(RemainderRow { level: k, constant: eng.remainder_constant(k)? })).collect::<Result<_>>()?;
        let hi = consts.iter().map(|r| r.constant).fold(0.0, f64::max);
        let lo = consts.iter().map(|r| r.constant).fold(f64::INFINITY, f64::min);
        out.gates.push(Gate::new(st, "remainder-stable", hi < 3.0 * lo, false, format!("constants in [{lo:.3e}, {hi:.3e}]")));
        summary["remainder_range"] = serde_json::json!([lo, hi]);
        out.files.insert("remainder.csv".into(), csv_bytes(&consts)?);
    } else {
        let longest = p.return_times(0, k_max)?.into_iter().max().unwrap_or(1) as u64;
        let certified = birkhoff::birkhoff_sup_bound(p, &sups, longest)?.certified;
        out.gates.push(Gate::new(st, "sup-bound", certified, false, "level sups decay geometrically".into()));
    }
    out.files.insert("diagnose.json".into(), json_bytes(hash, &summary)?);
    out.results.insert("diagnose".into(), summary);
    Ok(())
}

/// A tower without its floor list, for reports.
#[derive(Debug, Clone, Serialize)]
struct TowerRecord {
    n: usize,
    case: ergodicity::Case,
    beta0: usize,
    beta_n: usize,
    j_n: u64,
    q_n: u64,
    p_n: u64,
    cbar: f64,
    measure: f64,
    measure_lower: f64,
    gates: ergodicity::TowerGates,
}

impl From<&RigidityTower> for TowerRecord {
    fn from(t: &RigidityTower) -> Self {
        TowerRecord {
            n: t.n,
            case: t.case,
            beta0: t.beta0,
            beta_n: t.beta_n,
            j_n: t.j_n,
            q_n: t.q_n,
            p_n: t.p_n,
            cbar: t.cbar,
            measure: t.measure,
            measure_lower: t.measure_lower,
            gates: t.gates.clone(),
        }
    }
}

#[derive(Serialize)]
struct SpacingRow {
    n: usize,
    floor: u64,
    x: f64,
    min_far: f64,
    min_near_other: f64,
    min_near_tracked: f64,
    spacing: f64,
    holds: bool,
}

#[derive(Serialize)]
struct OscillationCsv {
    n: usize,
    s: f64,
    value: f64,
    refined_bound: f64,
    measure: f64,
    ratio: f64,
}

struct LevelOutcome {
    tower: RigidityTower,
    spacing: Vec<SpacingReport>,
    tightness: Tightness,
    histogram: ergodicity::Histogram,
    oscillation: ergodicity::Oscillation,
}

fn rigidity_level(p: &PeriodicIet, phi: &LogCocycle, shape: &LogCocycle, s: &Scenario, n: usize) -> Result<LevelOutcome> {
    let set = &s.settings;
    let tower = ergodicity::build_rigidity_tower(p, shape, n, CbarPolicy::Formula)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ ((n as u64) << 32));
    let spacing = (0..set.spacing_points)
        .map(|_| {
            let k = rng.gen_range(0..tower.p_n);
            let (lo, hi) = tower.floors[k as usize];
            ergodicity::spacing_report(p, shape, &tower, k, rng.gen_range(lo..hi))
        })
        .collect::<Result<Vec<_>>>()?;
    let tightness = ergodicity::tightness_integral(p, phi, &tower, set.panels)?;
    let histogram = ergodicity::essential_value_histogram(p, phi, &tower, set.samples, set.bins, 1e-3, s.seed)?;
    let oscillation = ergodicity::oscillation_integral(p, phi, &tower, &set.s_values)?;
    Ok(LevelOutcome { tower, spacing, tightness, histogram, oscillation })
}

fn rigidity(p: &PeriodicIet, phi: &LogCocycle, shape: &LogCocycle, s: &Scenario, hash: &str, out: &mut Out) -> Result<()> {
    let st = Stage::Rigidity;
    if shape.blog() == 0.0 {
        return Err(Error::ZeroBlog);
    }
    let levels = &s.settings.rigidity_levels;
    let outcomes: Vec<Result<LevelOutcome>> = levels.par_iter().map(|&n| rigidity_level(p, phi, shape, s, n)).collect();
    let mut done = Vec::new();
    for (n, o) in levels.iter().zip(outcomes) {
        match o {
            Ok(o) => done.push(o),
            Err(e) => out.gates.push(Gate::new(st, &format!("tower-n{n}"), false, true, e.to_string())),
        }
    }
    let mut spacing_rows = Vec::new();
    let mut osc_rows = Vec::new();
    for o in &done {
        let n = o.tower.n;
        let g = &o.tower.gates;
        out.gates.push(Gate::new(
            st,
            &format!("tower-n{n}"),
            g.all(),
            true,
            format!(
                "p_n={} <= j_n={} < q_n={}, measure {:.3e} >= {:.3e}, displacement {:.1e}, invariance {:.1e}",
                o.tower.p_n, o.tower.j_n, o.tower.q_n, o.tower.measure, o.tower.measure_lower, g.displacement, g.invariance_defect
            ),
        ));
        let bad = o.spacing.iter().filter(|r| !r.holds()).count();
        let witness = o.spacing.iter().find_map(|r| r.witness.clone()).unwrap_or_default();
        out.gates.push(Gate::new(st, &format!("spacing-n{n}"), bad == 0, true, if bad == 0 { format!("{} points", o.spacing.len()) } else { format!("{bad} of {} points fail: {witness}", o.spacing.len()) }));
        spacing_rows.extend(o.spacing.iter().map(|r| SpacingRow {
            n,
            floor: r.k,
            x: r.x,
            min_far: r.min_far,
            min_near_other: r.min_near_other,
            min_near_tracked: r.min_near_tracked,
            spacing: r.spacing,
            holds: r.holds(),
        }));
        osc_rows.extend(o.oscillation.rows.iter().map(|r| OscillationCsv {
            n,
            s: r.s,
            value: r.value,
            refined_bound: r.refined_bound,
            measure: r.measure,
            ratio: r.value / r.measure,
        }));
        let mut hist = Vec::new();
        ergodicity::write_histogram(&o.histogram, &mut hist)?;
        out.files.insert(format!("histogram_n{n}.csv"), hist);
    }
    let Some(last) = done.last() else {
        return Ok(());
    };
    let all_rows: Vec<ergodicity::OscillationRow> = done.iter().flat_map(|o| o.oscillation.rows.clone()).collect();
    let c_hat = ergodicity::fit_oscillation_constant(&all_rows);
    let tightness: Vec<Tightness> = done.iter().map(|o| o.tightness.clone()).collect();
    let iqr: Vec<f64> = done.iter().map(|o| o.histogram.iqr).collect();
    let ev: Evidence = ergodicity::evidence(phi, tightness.clone(), iqr, last.oscillation.clone())?;
    out.gates.push(Gate::new(st, "tightness", ev.tight, false, format!("max/min {:.2}", ev.tightness_ratio)));
    out.gates.push(Gate::new(
        st,
        "verdict",
        ev.verdict != ergodicity::Verdict::Inconclusive,
        false,
        if ev.failed.is_empty() {
            format!("{:?}", ev.verdict)
        } else {
            format!("{:?}; failed: {}", ev.verdict, ev.failed.join("; "))
        },
    ));
    let towers: Vec<TowerRecord> = done.iter().map(|o| (&o.tower).into()).collect();
    out.files.insert("towers.json".into(), json_bytes(hash, &towers)?);
    out.files.insert("spacing.csv".into(), csv_bytes(&spacing_rows)?);
    out.files.insert("tightness.csv".into(), csv_bytes(&tightness)?);
    out.files.insert("oscillation.csv".into(), csv_bytes(&osc_rows)?);
    out.files.insert("evidence.json".into(), json_bytes(hash, &ev)?);
    out.results.insert(
        "rigidity".into(),
        serde_json::json!({ "verdict": ev.verdict, "oscillation_constant": c_hat, "tightness_ratio": ev.tightness_ratio }),
    );
    Ok(())
}

/// One row of a sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub instance: String,
    pub passed: usize,
    pub warned: usize,
    pub failed: usize,
    pub corrected_trend: String,
    pub verdict: String,
    pub error: String,
}

/// The scenario's pipeline on each listed catalog instance.
pub fn sweep(loaded: &Loaded) -> Result<Vec<(String, Result<Run>)>> {
    loaded.validate()?;
    let s = &loaded.scenario;
    if !matches!(s.cocycle, CocycleSpec::RandomSymmetric { .. } | CocycleSpec::Coboundary { .. }) {
        return Err(Error::Invalid("sweep needs a cocycle that fits any instance (random-symmetric or coboundary)".into()));
    }
    let names: Vec<String> = if s.sweep.is_empty() {
        catalog::INSTANCES.iter().filter(|i| i.name != "torus3").map(|i| i.name.to_string()).collect()
    } else {
        s.sweep.clone()
    };
    Ok(names
        .par_iter()
        .map(|name| {
            let mut one = loaded.clone();
            one.scenario.source = Source::Catalog(name.clone());
            one.scenario.name = format!("{}/{name}", s.name);
            (name.clone(), run(&one, None))
        })
        .collect())
}

pub fn sweep_row(name: &str, r: &Result<Run>) -> SweepRow {
    let field = |run: &Run, stage: &str, key: &str| {
        run.summary.results.get(stage).and_then(|v| v.get(key)).map(|v| v.as_str().map(String::from).unwrap_or(v.to_string())).unwrap_or_default()
    };
    match r {
        Ok(run) => {
            let g = &run.summary.gates;
            SweepRow {
                instance: name.into(),
                passed: g.iter().filter(|g| g.passed).count(),
                warned: g.iter().filter(|g| !g.passed && !g.hard).count(),
                failed: g.iter().filter(|g| !g.passed && g.hard).count(),
                corrected_trend: field(run, "correct", "corrected_trend"),
                verdict: field(run, "rigidity", "verdict"),
                error: String::new(),
            }
        }
        Err(e) => SweepRow {
            instance: name.into(),
            passed: 0,
            warned: 0,
            failed: 0,
            corrected_trend: String::new(),
            verdict: String::new(),
            error: e.to_string(),
        },
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

/// Closed positive loops from `pair` with their spectra. Loops whose
/// eigenvector replay fails are dropped.
pub fn mint_instances(pair: &crate::iet::PermPair, budget: usize, max_loops: usize) -> Vec<LoopEntry> {
    rauzy::search_loops(pair, budget, max_loops)
        .into_iter()
        .filter_map(|moves| rauzy::build_periodic_from_loop(pair, &moves).ok())
        .map(|p| rauzy::catalog_entry(&p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Loaded {
        Loaded::from_str(text, Path::new(".")).unwrap()
    }

    #[test]
    fn demo_parses_and_validates() {
        let l = Loaded::demo();
        l.validate().unwrap();
        assert_eq!(l.hash().unwrap(), Loaded::demo().hash().unwrap());
    }

    #[test]
    fn hash_tracks_overrides() {
        let mut l = Loaded::demo();
        let h0 = l.hash().unwrap();
        l.apply(&Overrides { seed: Some(99), ..Default::default() });
        assert_ne!(h0, l.hash().unwrap());
    }

    #[test]
    fn zero_blog_rigidity_is_rejected() {
        let l = scenario(r#"{"name": "x", "source": {"catalog": "golden"}, "cocycle": {"kind": "constants", "h": [1, -1]}}"#);
        let e = l.validate().unwrap_err();
        assert!(e.to_string().contains("Blog = 0"), "{e}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = Loaded::from_str(r#"{"name": "x", "source": {"catalog": "golden"}, "cocycle": {"kind": "constants", "h": [1, -1]}, "extra": 1}"#, Path::new("."));
        assert!(e.is_err());
    }

    #[test]
    fn single_stage_pulls_in_correction() {
        let s = Loaded::demo().scenario;
        assert_eq!(stages_for(&s, Some(Stage::Rigidity)), vec![Stage::Correct, Stage::Rigidity]);
        assert_eq!(stages_for(&s, Some(Stage::Induct)), vec![Stage::Induct]);
    }

    #[test]
    fn mint_golden_and_empty_budget() {
        let golden = catalog::find("golden").unwrap().pair();
        let found = mint_instances(&golden, 10, 1);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].moves.len(), 2);
        assert!(mint_instances(&golden, 0, 1).is_empty());
    }

    #[test]
    fn shipped_schema_is_current() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenario.schema.json");
        let fresh = scenario_schema();
        if std::env::var_os("IETLAB_WRITE_SCHEMA").is_some() {
            std::fs::write(&path, &fresh).unwrap();
        }
        let shipped = std::fs::read_to_string(&path).unwrap_or_default();
        assert!(shipped == fresh, "docs/scenario.schema.json is stale; rerun with IETLAB_WRITE_SCHEMA=1");
    }
}
