//! Run configuration: a flat `section.key = value` text format
//!
//! One human-editable file drives every mode. Keys are flat with section
//! prefixes so configs diff cleanly in regression tests. Unknown keys are
//! parse errors, malformed values report their line, and semantic
//! validation aggregates every violation instead of stopping at the first.
//!
//! Analytic profiles build initial data, sources, and targets as
//! mean + amplitude * shape(x, y); the `file` profile loads a field dump
//! instead. Referenced files must exist at parse time. The `random` shape
//! draws low cosine modes from the seeded generator, so a config plus a
//! seed pins every field bit for bit.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::control::{AdmissibleSet, CostConfig};
use crate::error::{ChdError, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::io::read_field;
use crate::materials::{PotentialParams, ViscosityFamily, ViscosityModel};
use crate::state::{Model, SolverOptions, SourceSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSection {
    pub t_final: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSection {
    pub theta: f64,
    pub theta0: f64,
    pub eps: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViscositySection {
    pub family: String,
    pub nu: f64,
    pub base: f64,
    pub gain: f64,
    pub rate: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
}

/// A named analytic shape with offset and scale, or a field dump path.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub profile: String,
    pub amplitude: f64,
    pub mean: f64,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub target: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSection {
    pub r_lo: f64,
    pub r_hi: f64,
    pub r0: f64,
    pub r1: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSection {
    pub tol: f64,
    pub max_iters: usize,
}

/// Fully parsed and validated run description. Paths are resolved against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub potential: PotentialSection,
    pub viscosity: ViscositySection,
    pub initial: ProfileSpec,
    pub source_s: ProfileSpec,
    pub source_r: ProfileSpec,
    pub cost: CostSection,
    pub admissible: AdmissibleSection,
    pub solver: SolverSection,
    pub optimize: OptimizeSection,
    pub seed: u64,
}

const SHAPES: &[&str] = &["zero", "constant", "cosine", "stripe", "mix", "random", "file"];

struct Raw {
    entries: HashMap<String, (usize, String)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Raw> {
        let mut entries = HashMap::new();
        let mut faults = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                faults.push(format!("line {line_no}: expected `key = value`, got `{body}`"));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                faults.push(format!("line {line_no}: empty key or value"));
                continue;
            }
            if let Some((prev, _)) = entries.insert(key.clone(), (line_no, value)) {
                faults.push(format!(
                    "line {line_no}: key `{key}` already set on line {prev}"
                ));
            }
        }
        if faults.is_empty() {
            Ok(Raw { entries })
        } else {
            Err(ChdError::Parse(faults.join("; ")))
        }
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T, faults: &mut Vec<String>) -> T
    where
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => default,
            Some((line_no, value)) => match value.parse::<T>() {
                Ok(v) => v,
                Err(e) => {
                    faults.push(format!("line {line_no}: key `{key}`: {e} (got `{value}`)"));
                    default
                }
            },
        }
    }

    fn take_path(&mut self, key: &str) -> Option<PathBuf> {
        self.entries
            .remove(key)
            .map(|(_, value)| PathBuf::from(value))
    }

    fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let mut leftovers: Vec<_> = self
            .entries
            .into_iter()
            .map(|(key, (line_no, _))| format!("line {line_no}: unknown key `{key}`"))
            .collect();
        leftovers.sort();
        Err(ChdError::Parse(leftovers.join("; ")))
    }
}

fn take_profile(
    raw: &mut Raw,
    prefix: &str,
    shape: &str,
    default_amp: f64,
    faults: &mut Vec<String>,
) -> ProfileSpec {
    ProfileSpec {
        profile: raw.take(&format!("{prefix}.profile"), shape.to_string(), faults),
        amplitude: raw.take(&format!("{prefix}.amplitude"), default_amp, faults),
        mean: raw.take(&format!("{prefix}.mean"), 0.0, faults),
        path: raw.take_path(&format!("{prefix}.path")),
    }
}

/// Parses config text. `base_dir` anchors relative file references.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let mut raw = Raw::parse(text)?;
    let mut faults = Vec::new();

    let nx = raw.take("grid.nx", 32usize, &mut faults);
    let grid = GridSection {
        nx,
        ny: raw.take("grid.ny", nx, &mut faults),
        lx: raw.take("grid.lx", 1.0, &mut faults),
        ly: raw.take("grid.ly", 1.0, &mut faults),
    };
    let time = TimeSection {
        t_final: raw.take("time.t_final", 1e-2, &mut faults),
        tau: raw.take("time.tau", 1e-3, &mut faults),
    };
    let potential = PotentialSection {
        theta: raw.take("potential.theta", 1.0, &mut faults),
        theta0: raw.take("potential.theta0", 2.0, &mut faults),
        eps: raw.take("potential.eps", 0.05, &mut faults),
        kappa: raw.take("potential.kappa", 0.5, &mut faults),
    };
    let viscosity = ViscositySection {
        family: raw.take("viscosity.family", "tanh_blend".to_string(), &mut faults),
        nu: raw.take("viscosity.nu", 1.0, &mut faults),
        base: raw.take("viscosity.base", 0.7, &mut faults),
        gain: raw.take("viscosity.gain", 1.0, &mut faults),
        rate: raw.take("viscosity.rate", 0.9, &mut faults),
        nu_lo: raw.take("viscosity.nu_lo", 0.5, &mut faults),
        nu_hi: raw.take("viscosity.nu_hi", 2.0, &mut faults),
    };
    let initial = take_profile(&mut raw, "initial", "cosine", 0.4, &mut faults);
    let source_s = take_profile(&mut raw, "sources.s", "zero", 0.0, &mut faults);
    let source_r = take_profile(&mut raw, "sources.r", "zero", 0.0, &mut faults);
    let cost = CostSection {
        alpha1: raw.take("cost.alpha1", 1.0, &mut faults),
        alpha2: raw.take("cost.alpha2", 0.5, &mut faults),
        beta: raw.take("cost.beta", 1e-2, &mut faults),
        target: take_profile(&mut raw, "cost.target", "constant", 0.0, &mut faults),
    };
    let admissible = AdmissibleSection {
        r_lo: raw.take("admissible.r_lo", -1.0, &mut faults),
        r_hi: raw.take("admissible.r_hi", 1.0, &mut faults),
        r0: raw.take("admissible.r0", 1.0, &mut faults),
        r1: raw.take("admissible.r1", 1.0, &mut faults),
        delta0: raw.take("admissible.delta0", 0.05, &mut faults),
    };
    let solver = SolverSection {
        newton_tol: raw.take("solver.newton_tol", 1e-11, &mut faults),
        newton_max_iter: raw.take("solver.newton_max_iter", 50usize, &mut faults),
        cg_tol: raw.take("solver.cg_tol", 1e-12, &mut faults),
        cg_max_iter: raw.take("solver.cg_max_iter", 800usize, &mut faults),
    };
    let optimize = OptimizeSection {
        tol: raw.take("optimize.tol", 1e-3, &mut faults),
        max_iters: raw.take("optimize.max_iters", 80usize, &mut faults),
    };
    let seed = raw.take("seed", 7u64, &mut faults);

    if !faults.is_empty() {
        return Err(ChdError::Parse(faults.join("; ")));
    }
    raw.finish()?;

    let mut cfg = RunConfig {
        grid,
        time,
        potential,
        viscosity,
        initial,
        source_s,
        source_r,
        cost,
        admissible,
        solver,
        optimize,
        seed,
    };
    cfg.resolve_paths(base_dir);
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ChdError::Io(format!("config {}: {e}", path.display())))?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base_dir)
}

impl RunConfig {
    fn resolve_paths(&mut self, base_dir: &Path) {
        for spec in [
            &mut self.initial,
            &mut self.source_s,
            &mut self.source_r,
            &mut self.cost.target,
        ] {
            if let Some(p) = &spec.path {
                if p.is_relative() {
                    spec.path = Some(base_dir.join(p));
                }
            }
        }
    }

    /// Semantic validation, every violation collected.
    fn validate(&self) -> Result<()> {
        let mut faults = Vec::new();

        if self.grid.nx < 2 || self.grid.ny < 2 {
            faults.push(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid.nx, self.grid.ny
            ));
        }
        if !(self.grid.lx > 0.0 && self.grid.ly > 0.0) {
            faults.push(format!(
                "domain lengths must be positive, got {} x {}",
                self.grid.lx, self.grid.ly
            ));
        }
        if !(self.time.tau > 0.0) {
            faults.push(format!("time.tau must be positive, got {}", self.time.tau));
        } else {
            let steps = self.time.t_final / self.time.tau;
            if steps < 0.0 || (steps - steps.round()).abs() > 1e-6 * steps.round().max(1.0) {
                faults.push(format!(
                    "time.t_final = {} is not an integer multiple of tau = {}",
                    self.time.t_final, self.time.tau
                ));
            }
        }

        let mut collect = |r: Result<()>| match r {
            Ok(()) => {}
            Err(ChdError::Validation(list)) => faults.extend(list),
            Err(e) => faults.push(e.to_string()),
        };
        collect(
            PotentialParams::new(
                self.potential.theta,
                self.potential.theta0,
                self.potential.eps,
                self.potential.kappa,
            )
            .map(|_| ()),
        );
        collect(self.viscosity_model().map(|_| ()));
        collect(
            CostConfig::new(
                self.cost.alpha1,
                self.cost.alpha2,
                self.cost.beta,
                ScalarField::zeros(Grid2D::unit(2)),
                vec![ScalarField::zeros(Grid2D::unit(2))],
            )
            .map(|_| ()),
        );
        collect(
            AdmissibleSet::uniform(
                Grid2D::unit(2),
                1,
                self.admissible.r_lo,
                self.admissible.r_hi,
                self.admissible.r0,
                self.admissible.r1,
                self.admissible.delta0,
            )
            .map(|_| ()),
        );

        for (what, v) in [
            ("solver.newton_tol", self.solver.newton_tol),
            ("solver.cg_tol", self.solver.cg_tol),
            ("optimize.tol", self.optimize.tol),
        ] {
            if !(v > 0.0) {
                faults.push(format!("{what} must be positive, got {v}"));
            }
        }
        if self.solver.newton_max_iter == 0 || self.solver.cg_max_iter == 0 {
            faults.push("solver iteration caps must be at least 1".to_string());
        }

        for (what, spec) in [
            ("initial", &self.initial),
            ("sources.s", &self.source_s),
            ("sources.r", &self.source_r),
            ("cost.target", &self.cost.target),
        ] {
            if !SHAPES.contains(&spec.profile.as_str()) {
                faults.push(format!(
                    "{what}.profile `{}` is not one of {}",
                    spec.profile,
                    SHAPES.join("/")
                ));
            }
            if spec.profile == "file" {
                match &spec.path {
                    None => faults.push(format!("{what}.profile = file requires {what}.path")),
                    Some(p) if !p.exists() => {
                        faults.push(format!("{what}.path `{}` does not exist", p.display()))
                    }
                    Some(_) => {}
                }
            }
        }

        if faults.is_empty() {
            Ok(())
        } else {
            Err(ChdError::Validation(faults))
        }
    }

    pub fn grid2d(&self) -> Grid2D {
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    pub fn n_steps(&self) -> usize {
        (self.time.t_final / self.time.tau).round() as usize
    }

    pub fn potential_params(&self) -> Result<PotentialParams> {
        PotentialParams::new(
            self.potential.theta,
            self.potential.theta0,
            self.potential.eps,
            self.potential.kappa,
        )
    }

    pub fn viscosity_model(&self) -> Result<ViscosityModel> {
        let family = match self.viscosity.family.as_str() {
            "constant" => ViscosityFamily::Constant {
                nu: self.viscosity.nu,
            },
            "tanh_blend" => ViscosityFamily::TanhBlend {
                base: self.viscosity.base,
                gain: self.viscosity.gain,
                rate: self.viscosity.rate,
            },
            other => {
                return Err(ChdError::Validation(vec![format!(
                    "viscosity.family `{other}` is not constant/tanh_blend"
                )]))
            }
        };
        ViscosityModel::new(family, self.viscosity.nu_lo, self.viscosity.nu_hi)
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model {
            potential: self.potential_params()?,
            viscosity: self.viscosity_model()?,
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
            cg_tol: self.solver.cg_tol,
            cg_max_iter: self.solver.cg_max_iter,
            delta0: self.admissible.delta0,
        }
    }

    pub fn initial_field(&self, grid: Grid2D, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
        build_profile(grid, &self.initial, rng)
    }

    /// Prescribed source and starting control, one field per step. The
    /// prescribed source is projected mean-free, which the step requires.
    pub fn schedule(&self, grid: Grid2D, rng: &mut ChaCha8Rng) -> Result<SourceSchedule> {
        let n = self.n_steps();
        let mut s = build_profile(grid, &self.source_s, rng)?;
        let m = s.mean();
        s.axpy(-1.0, &ScalarField::constant(grid, m));
        let r = build_profile(grid, &self.source_r, rng)?;
        SourceSchedule::new(vec![s; n], vec![r; n])
    }

    pub fn cost_config(&self, grid: Grid2D, rng: &mut ChaCha8Rng) -> Result<CostConfig> {
        let target = build_profile(grid, &self.cost.target, rng)?;
        CostConfig::new(
            self.cost.alpha1,
            self.cost.alpha2,
            self.cost.beta,
            target.clone(),
            vec![target; self.n_steps() + 1],
        )
    }

    pub fn admissible_set(&self, grid: Grid2D) -> Result<AdmissibleSet> {
        AdmissibleSet::uniform(
            grid,
            self.n_steps(),
            self.admissible.r_lo,
            self.admissible.r_hi,
            self.admissible.r0,
            self.admissible.r1,
            self.admissible.delta0,
        )
    }
}

/// Realizes a profile spec on a grid. Dump-backed profiles must match the
/// grid exactly; analytic shapes are mean + amplitude * shape with every
/// non-constant shape mean-free by construction.
pub fn build_profile(grid: Grid2D, spec: &ProfileSpec, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
    let pi = std::f64::consts::PI;
    let (lx, ly) = (grid.lx, grid.ly);
    let shape: ScalarField = match spec.profile.as_str() {
        "zero" => return Ok(ScalarField::zeros(grid)),
        "constant" => ScalarField::constant(grid, 1.0),
        "cosine" => {
            ScalarField::from_fn(grid, |x, y| (pi * x / lx).cos() * (pi * y / ly).cos())
        }
        "stripe" => ScalarField::from_fn(grid, |x, _| (pi * x / lx).cos()),
        "mix" => ScalarField::from_fn(grid, |x, y| {
            (pi * x / lx).cos() * (pi * y / ly).cos() + 0.3 * (2.0 * pi * x / lx).cos()
        }),
        "random" => {
            let mut modes = Vec::new();
            for kx in 0..4usize {
                for ky in 0..4usize {
                    if kx == 0 && ky == 0 {
                        continue;
                    }
                    let a: f64 = rng.random_range(-1.0..1.0);
                    modes.push((kx, ky, a / (1.0 + (kx * kx + ky * ky) as f64)));
                }
            }
            ScalarField::from_fn(grid, |x, y| {
                modes
                    .iter()
                    .map(|&(kx, ky, a)| {
                        a * (kx as f64 * pi * x / lx).cos() * (ky as f64 * pi * y / ly).cos()
                    })
                    .sum()
            })
        }
        "file" => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| ChdError::Validation(vec!["file profile without path".into()]))?;
            let dump = read_field(path)?;
            if dump.grid != grid {
                return Err(ChdError::Validation(vec![format!(
                    "field dump {} has grid {}x{}, run uses {}x{}",
                    path.display(),
                    dump.grid.nx,
                    dump.grid.ny,
                    grid.nx,
                    grid.ny
                )]));
            }
            return Ok(dump.into_field());
        }
        other => {
            return Err(ChdError::Validation(vec![format!(
                "unknown profile `{other}`"
            )]))
        }
    };
    let mut out = shape;
    out.scale(spec.amplitude);
    out.axpy(1.0, &ScalarField::constant(grid, spec.mean));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("."))
    }

    #[test]
    fn empty_text_yields_the_documented_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.grid.nx, 32);
        assert_eq!(cfg.grid.ny, 32);
        assert_eq!(cfg.n_steps(), 10);
        assert_eq!(cfg.initial.profile, "cosine");
        assert_eq!(cfg.initial.amplitude, 0.4);
        assert_eq!(cfg.seed, 7);
        cfg.model().unwrap();
    }

    #[test]
    fn comments_blank_lines_and_section_keys_parse() {
        let cfg = parse(
            "# a run\n\
             grid.nx = 16  # square by default\n\
             \n\
             time.t_final = 2e-3\n\
             time.tau = 1e-3\n\
             seed = 11\n",
        )
        .unwrap();
        assert_eq!(cfg.grid.nx, 16);
        assert_eq!(cfg.grid.ny, 16);
        assert_eq!(cfg.n_steps(), 2);
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn unknown_keys_and_bad_values_report_their_lines() {
        let err = parse("grid.nx = sixteen\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("grid.nx"), "{msg}");

        let err = parse("grib.nx = 16\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key `grib.nx`"), "{msg}");

        let err = parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("already set"), "{err}");
    }

    #[test]
    fn validation_collects_every_violation_at_once() {
        let err = parse(
            "potential.theta0 = 0.5\n\
             admissible.delta0 = 0.7\n\
             time.tau = -1.0\n",
        )
        .unwrap_err();
        let ChdError::Validation(faults) = &err else {
            panic!("expected aggregated validation, got {err}");
        };
        let joined = faults.join("\n");
        assert!(joined.contains("theta0 must exceed theta"), "{joined}");
        assert!(joined.contains("delta0"), "{joined}");
        assert!(joined.contains("time.tau"), "{joined}");
        assert!(faults.len() >= 3);
    }

    #[test]
    fn missing_referenced_file_is_rejected_at_parse_time() {
        let err = parse(
            "initial.profile = file\n\
             initial.path = no/such/field.bin\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("does not exist"), "{err}");

        let err = parse("initial.profile = file\n").unwrap_err();
        assert!(err.to_string().contains("requires initial.path"), "{err}");
    }

    #[test]
    fn analytic_source_profiles_come_out_mean_free() {
        let cfg = parse(
            "sources.s.profile = mix\n\
             sources.s.amplitude = 0.8\n\
             time.t_final = 3e-3\n\
             time.tau = 1e-3\n",
        )
        .unwrap();
        let grid = cfg.grid2d();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let schedule = cfg.schedule(grid, &mut rng).unwrap();
        assert_eq!(schedule.len(), 3);
        assert!(schedule.s[0].mean().abs() <= 1e-13);
        assert!(schedule.s[0].norm_inf() > 0.5);
    }

    #[test]
    fn random_profile_is_reproducible_from_the_seed() {
        let cfg = parse("initial.profile = random\ninitial.amplitude = 1.0\n").unwrap();
        let grid = cfg.grid2d();
        let a = cfg
            .initial_field(grid, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let b = cfg
            .initial_field(grid, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let c = cfg
            .initial_field(grid, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        assert!(a.mean().abs() <= 1e-13);
    }
}
