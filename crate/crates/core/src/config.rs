//! Experiment configuration and the driver that runs one.
//!
//! The file format is flat `key = value` text grouped under `[run]`,
//! `[mesh]` and `[output]` headers. `#` starts a comment.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::diagnostics::{
    atomic_write, dam_break_setup, invariants, invariants_csv, l2_error, lake_at_rest_setup,
    lake_deviation, vortex_cons, vortex_setup, vtk_string, ErrorReport, InvariantRow, Problem,
    VortexParams,
};
use crate::error::{Error, Result};
use crate::mesh::{read_mesh, Mesh, Periodicity};
use crate::par;
use crate::solver::{compute_dt, run, Discretization, Penalty, Scheme, State};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub degree: usize,
    pub scheme: Scheme,
    pub penalty: Penalty,
    pub cfl: f64,
    pub t_final: f64,
    pub g: f64,
    pub threads: usize,
    pub seed: u64,
    pub nx: usize,
    pub ny: usize,
    pub warp: f64,
    pub periodic: Periodicity,
    pub mesh_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Invariant samples every this many steps; 0 records only the ends.
    pub every: usize,
    pub vtk: bool,
}

impl RunConfig {
    pub fn new(problem: Problem) -> Self {
        let (nx, ny, t_final, degree) = match problem {
            Problem::Lake => (8, 8, 0.5, 3),
            Problem::Vortex => (16, 8, 0.5, 3),
            Problem::DamBreak => (20, 20, 1.5, 3),
        };
        RunConfig {
            problem,
            degree,
            scheme: Scheme::Hybridized,
            penalty: Penalty::LaxFriedrichs,
            cfl: 0.125,
            t_final,
            g: problem.default_g(),
            threads: 0,
            seed: 0,
            nx,
            ny,
            warp: 0.0,
            periodic: problem.periodicity(),
            mesh_file: None,
            out_dir: None,
            every: 10,
            vtk: true,
        }
    }

    /// Parses a config file. `problem` is read first so that its defaults
    /// apply to every key the file leaves out.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let problem = entries
            .iter()
            .find(|(s, k, _, _)| s == "run" && k == "problem")
            .map(|(_, _, v, _)| v.parse())
            .transpose()?
            .unwrap_or(Problem::Lake);
        let mut cfg = RunConfig::new(problem);
        for (section, key, value, line) in &entries {
            cfg.set(&format!("{section}.{key}"), value)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Sets one `section.key` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
        }
        match key {
            "run.problem" => {
                let p: Problem = value.parse()?;
                if p != self.problem {
                    *self = RunConfig::new(p);
                }
            }
            "run.degree" => self.degree = num(key, value)?,
            "run.scheme" => self.scheme = value.parse()?,
            "run.penalty" => self.penalty = value.parse()?,
            "run.cfl" => self.cfl = num(key, value)?,
            "run.tfinal" => self.t_final = num(key, value)?,
            "run.g" => self.g = num(key, value)?,
            "run.threads" => self.threads = num(key, value)?,
            "run.seed" => self.seed = num(key, value)?,
            "mesh.nx" => self.nx = num(key, value)?,
            "mesh.ny" => self.ny = num(key, value)?,
            "mesh.warp" => self.warp = num(key, value)?,
            "mesh.periodic" => self.periodic = value.parse()?,
            "mesh.file" => self.mesh_file = Some(PathBuf::from(value)),
            "output.dir" => self.out_dir = Some(PathBuf::from(value)),
            "output.every" => self.every = num(key, value)?,
            "output.vtk" => self.vtk = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0) {
            return Err(Error::Config(format!("cfl must be > 0, got {}", self.cfl)));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::Config(format!(
                "tfinal must be >= 0, got {}",
                self.t_final
            )));
        }
        if !(self.g > 0.0) {
            return Err(Error::Config(format!("g must be > 0, got {}", self.g)));
        }
        if self.mesh_file.is_none()
            && self.problem != Problem::DamBreak
            && (self.nx == 0 || self.ny == 0)
        {
            return Err(Error::Config("nx and ny must be positive".into()));
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        match &self.mesh_file {
            Some(p) => read_mesh(&std::fs::read_to_string(p)?),
            None => self.problem.mesh(self.nx, self.ny, self.warp),
        }
    }
}

fn parse_entries(text: &str) -> Result<Vec<(String, String, String, usize)>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "run" | "mesh" | "output") {
                return Err(Error::Config(format!(
                    "line {}: unknown section [{name}]",
                    i + 1
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let s = section
            .clone()
            .ok_or_else(|| Error::Config(format!("line {}: key outside a section", i + 1)))?;
        out.push((s, k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn periodic_str(p: Periodicity) -> &'static str {
    match (p.x, p.y) {
        (true, true) => "xy",
        (true, false) => "x",
        (false, true) => "y",
        (false, false) => "none",
    }
}

/// Prints in the file format, so the output can be fed back in.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[run]")?;
        writeln!(f, "problem = {}", self.problem)?;
        writeln!(f, "degree = {}", self.degree)?;
        writeln!(f, "scheme = {}", self.scheme)?;
        writeln!(f, "penalty = {}", self.penalty)?;
        writeln!(f, "cfl = {}", self.cfl)?;
        writeln!(f, "tfinal = {}", self.t_final)?;
        writeln!(f, "g = {}", self.g)?;
        writeln!(f, "threads = {}", self.threads)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "[mesh]")?;
        if let Some(p) = &self.mesh_file {
            writeln!(f, "file = {}", p.display())?;
        }
        writeln!(f, "nx = {}", self.nx)?;
        writeln!(f, "ny = {}", self.ny)?;
        writeln!(f, "warp = {}", self.warp)?;
        writeln!(f, "periodic = {}", periodic_str(self.periodic))?;
        writeln!(f, "[output]")?;
        if let Some(p) = &self.out_dir {
            writeln!(f, "dir = {}", p.display())?;
        }
        writeln!(f, "every = {}", self.every)?;
        write!(f, "vtk = {}", self.vtk)
    }
}

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub state: State,
    pub dt: f64,
    pub num_elements: usize,
    /// max |du/dt| of the initial state.
    pub initial_residual: f64,
    pub invariants: Vec<InvariantRow>,
    pub error: Option<ErrorReport>,
    pub files: Vec<PathBuf>,
}

/// Runs one experiment and writes the configured outputs.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    par::with_threads(cfg.threads, || run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Result<RunSummary> {
    let mesh = cfg.build_mesh()?;
    let dt = compute_dt(&mesh, cfg.degree, cfg.cfl);
    let mut disc = Discretization::new(
        mesh,
        cfg.periodic,
        cfg.degree,
        cfg.scheme,
        cfg.penalty,
        cfg.g,
    )?;
    let vortex = VortexParams {
        g: cfg.g,
        ..VortexParams::default()
    };
    let s0 = match cfg.problem {
        Problem::Lake => lake_at_rest_setup(&mut disc),
        Problem::Vortex => vortex_setup(&mut disc, &vortex)?,
        Problem::DamBreak => dam_break_setup(&mut disc)?,
    };
    let mut du = vec![[0.0; 3]; s0.u.len()];
    disc.rhs(&s0.u, 0.0, &mut du)?;
    let initial_residual = du.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut rows = Vec::new();
    let state = run(&disc, s0, cfg.t_final, dt, cfg.every, |s| {
        let row = invariants(&disc, s);
        if !(row.min_h > 0.0) {
            return Err(Error::Positivity {
                element: row.min_h_element,
                time: s.t,
                h: row.min_h,
            });
        }
        rows.push(row);
        Ok(())
    })?;

    let error = match cfg.problem {
        Problem::Lake => Some(lake_deviation(&disc, &state.u, &state.b)?),
        Problem::Vortex => Some(l2_error(&disc, &state.u, |x, y| {
            vortex_cons(&vortex, x, y, state.t).unwrap_or([f64::NAN; 3])
        })?),
        Problem::DamBreak => None,
    };

    let mut files = Vec::new();
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let p = dir.join("invariants.csv");
        atomic_write(&p, invariants_csv(&rows).as_bytes())?;
        files.push(p);
        if let Some(e) = &error {
            let p = dir.join("errors.csv");
            let text = format!(
                "problem,scheme,N,K,h,t,initial_residual,err_h,err_hu,err_hv,err_total\n{},{},{},{},{:.6e},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                cfg.problem, cfg.scheme, e.n, e.k, e.h, state.t, initial_residual,
                e.fields[0], e.fields[1], e.fields[2], e.total
            );
            atomic_write(&p, text.as_bytes())?;
            files.push(p);
        }
        if cfg.vtk {
            let p = dir.join(format!("solution_{:.4}.vtk", state.t));
            atomic_write(&p, vtk_string(&disc, &state).as_bytes())?;
            files.push(p);
        }
    }
    Ok(RunSummary {
        state,
        dt,
        num_elements: disc.num_elements(),
        initial_residual,
        invariants: rows,
        error,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        let text = "# lake\n[run]\nproblem = lake\ndegree = 2\ncfl = 0.1 # smaller\n[mesh]\nnx = 4\nny = 6\nwarp = 0.1\n[output]\nevery = 0\nvtk = false\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!((c.degree, c.nx, c.ny, c.every, c.vtk), (2, 4, 6, 0, false));
        assert_eq!(c.cfl, 0.1);
        assert_eq!(RunConfig::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn problem_defaults_apply_regardless_of_order() {
        let c = RunConfig::parse("[mesh]\nnx = 4\n[run]\nproblem = vortex\n").unwrap();
        assert_eq!(c.g, 2.0);
        assert_eq!(c.nx, 4);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "[run]\nfoo = 1\n",
            "[nope]\n",
            "degree = 2\n",
            "[run]\ndegree\n",
            "[run]\ncfl = 0\n",
            "[run]\ntfinal = -1\n",
            "[run]\nscheme = magic\n",
            "[mesh]\nnx = many\n",
        ] {
            let e = RunConfig::parse(bad).unwrap_err();
            assert_eq!(e.module(), "config", "{bad}: {e}");
        }
    }

    #[test]
    fn short_lake_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(Problem::Lake);
        c.degree = 2;
        c.nx = 4;
        c.ny = 4;
        c.t_final = 0.02;
        c.every = 2;
        c.out_dir = Some(dir.path().to_path_buf());
        let s = run_experiment(&c).unwrap();
        assert!(s.initial_residual < 1e-11, "{}", s.initial_residual);
        assert!(s.error.unwrap().total < 1e-11);
        assert_eq!(s.state.t, 0.02);
        assert_eq!(s.files.len(), 3);
        let inv = std::fs::read_to_string(dir.path().join("invariants.csv")).unwrap();
        assert_eq!(inv.lines().count(), 1 + s.invariants.len());
    }
}
