//! Experiment configuration: flat INI-style sections of `key = value` pairs.
//!
//! No nesting, no quoting; lists are comma-separated, trigonometric terms
//! semicolon-separated. Unknown sections or keys are errors so typos cannot
//! silently change an experiment. See the README for the full key list.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};

use orthoreg_core::exponents::ExponentVector;
use orthoreg_core::grid::{read_field_csv, CutoffSpec, Grid, SubRegion};
use orthoreg_core::model::{BoundaryData, ModelParams, TrigTerm, DEFAULT_EPS0};
use orthoreg_core::solver::SolveConfig;

/// Parsed `section.key -> value` map with consumption tracking.
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(';').next().unwrap_or("").trim();
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            if section.is_empty() {
                bail!("line {}: key outside any [section]", lineno + 1);
            }
            let full = format!("{section}.{}", key.trim());
            if entries
                .insert(full.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("duplicate key `{full}`");
            }
        }
        Ok(ConfigFile {
            entries,
            consumed: BTreeSet::new(),
        })
    }

    fn get(&mut self, key: &str) -> Option<String> {
        let v = self.entries.get(key).cloned();
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.get(key)
            .ok_or_else(|| anyhow!("missing required config key `{key}`"))
    }

    fn get_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| v.parse::<f64>().with_context(|| format!("bad value for `{key}`")))
            .transpose()
    }

    fn get_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| v.parse::<usize>().with_context(|| format!("bad value for `{key}`")))
            .transpose()
    }

    fn get_bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| v.parse::<bool>().with_context(|| format!("bad value for `{key}`")))
            .transpose()
    }

    fn get_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("bad list for `{key}`"))
                .map(Some),
        }
    }

    fn get_usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("bad list for `{key}`"))
                .map(Some),
        }
    }

    /// Rejects every key that was never consumed.
    fn finish(self) -> Result<()> {
        for key in self.entries.keys() {
            if !self.consumed.contains(key) {
                bail!("unknown config key `{key}`");
            }
        }
        Ok(())
    }
}

/// How the Dirichlet data is generated.
#[derive(Debug, Clone)]
pub enum DataSpec {
    Affine {
        gradient: Vec<f64>,
        offset: f64,
    },
    Trig {
        terms: Vec<TrigTerm>,
    },
    Random {
        seed: u64,
        count: usize,
        max_wavenumber: u32,
        amplitude: f64,
    },
    Tabulated {
        file: PathBuf,
        resolution: Vec<usize>,
    },
}

/// One named check with its parameters (axes already 0-based).
#[derive(Debug, Clone)]
pub enum CheckSpec {
    Caccioppoli { phi_power: f64, axis: usize },
    CaccioppoliNegative { alpha: f64, axis: usize },
    WeirdCaccioppoli { s: f64, m: f64, j: usize, k: usize },
    PowerCaccioppoli { ell0: u32, axis: usize },
    SelfImproving { alpha: f64, axis: usize },
    HigherIntegrability,
    HigherDifferentiability,
    Lipschitz,
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::Caccioppoli { .. } => "caccioppoli",
            CheckSpec::CaccioppoliNegative { .. } => "caccioppoli_negative",
            CheckSpec::WeirdCaccioppoli { .. } => "weird_caccioppoli",
            CheckSpec::PowerCaccioppoli { .. } => "power_caccioppoli",
            CheckSpec::SelfImproving { .. } => "self_improving",
            CheckSpec::HigherIntegrability => "higher_integrability",
            CheckSpec::HigherDifferentiability => "higher_differentiability",
            CheckSpec::Lipschitz => "lipschitz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
    Bin,
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub p: Vec<f64>,
    pub q0: f64,
    pub extents: Vec<(f64, f64)>,
    pub data: DataSpec,
    pub resolutions: Vec<usize>,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub eps0: f64,
    pub solve_cfg: SolveConfig,
    pub checks: Vec<CheckSpec>,
    pub region_center: Vec<f64>,
    pub region_r0: f64,
    pub region_big_r0: f64,
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
    pub lipschitz_gamma: Option<f64>,
    pub lipschitz_theta: Option<f64>,
    pub out_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub emit_plot_data: bool,
}

impl ExperimentConfig {
    pub fn load(text: &str) -> Result<Self> {
        let mut f = ConfigFile::parse(text)?;

        // [problem]
        let p = f
            .get_f64_list("problem.p")?
            .ok_or_else(|| anyhow!("missing required config key `problem.p`"))?;
        let dim = p.len();
        let q0 = f.get_f64("problem.q0")?.unwrap_or(2.0);
        let domain = f
            .get_f64_list("problem.domain")?
            .unwrap_or_else(|| [0.0, 1.0].repeat(dim));
        if domain.len() != 2 * dim {
            bail!(
                "`problem.domain` needs {} values (lo,hi per axis), got {}",
                2 * dim,
                domain.len()
            );
        }
        let extents: Vec<(f64, f64)> = domain.chunks(2).map(|c| (c[0], c[1])).collect();

        let kind = f.require("problem.data_kind")?;
        let data = match kind.as_str() {
            "affine" => DataSpec::Affine {
                gradient: f
                    .get_f64_list("problem.data_gradient")?
                    .ok_or_else(|| anyhow!("affine data needs `problem.data_gradient`"))?,
                offset: f.get_f64("problem.data_offset")?.unwrap_or(0.0),
            },
            "trig" => {
                let raw = f.require("problem.data_terms")?;
                let mut terms = Vec::new();
                for part in raw.split(';') {
                    let fields: Vec<&str> = part.trim().split(':').collect();
                    if fields.len() != 3 {
                        bail!("`problem.data_terms`: each term is amp:k1,..,kN:phase");
                    }
                    let amplitude: f64 = fields[0].trim().parse()?;
                    let wavevector: Vec<f64> = fields[1]
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()?;
                    if wavevector.len() != dim {
                        bail!("`problem.data_terms`: wavevector must have {dim} entries");
                    }
                    let phase: f64 = fields[2].trim().parse()?;
                    terms.push(TrigTerm {
                        amplitude,
                        wavevector,
                        phase,
                    });
                }
                DataSpec::Trig { terms }
            }
            "random" => DataSpec::Random {
                seed: f.get_f64("problem.data_seed")?.unwrap_or(0.0) as u64,
                count: f.get_usize("problem.data_count")?.unwrap_or(4),
                max_wavenumber: f.get_usize("problem.data_max_wavenumber")?.unwrap_or(2) as u32,
                amplitude: f.get_f64("problem.data_amplitude")?.unwrap_or(0.8),
            },
            "tabulated" => DataSpec::Tabulated {
                file: PathBuf::from(f.require("problem.data_file")?),
                resolution: f
                    .get_usize_list("problem.data_resolution")?
                    .ok_or_else(|| anyhow!("tabulated data needs `problem.data_resolution`"))?,
            },
            other => bail!("unknown `problem.data_kind` value `{other}`"),
        };

        // [discretization]
        let resolutions = f
            .get_usize_list("discretization.resolutions")?
            .ok_or_else(|| anyhow!("missing required config key `discretization.resolutions`"))?;
        if resolutions.is_empty() || resolutions.windows(2).any(|w| w[0] >= w[1]) {
            bail!("`discretization.resolutions` must be strictly increasing and non-empty");
        }

        // [solver]
        let eps0 = f.get_f64("solver.eps0")?.unwrap_or(DEFAULT_EPS0);
        let eps = f.get_f64("solver.eps")?.unwrap_or(0.25);
        let eps_list = f
            .get_f64_list("solver.eps_list")?
            .unwrap_or_else(|| vec![eps]);
        if eps_list.windows(2).any(|w| w[0] <= w[1]) {
            bail!("`solver.eps_list` must be strictly decreasing");
        }
        let mut solve_cfg = SolveConfig::default();
        if let Some(tol) = f.get_f64("solver.tol")? {
            solve_cfg.tol = tol;
        }
        if let Some(iters) = f.get_usize("solver.max_iters")? {
            solve_cfg.max_iters = iters;
        }
        if let Some(shrink) = f.get_f64("solver.shrink")? {
            solve_cfg.shrink = shrink;
        }
        if let Some(armijo) = f.get_f64("solver.armijo")? {
            solve_cfg.armijo = armijo;
        }

        // [checks]
        let half_width = extents
            .iter()
            .map(|&(lo, hi)| (hi - lo) / 2.0)
            .fold(f64::INFINITY, f64::min);
        let region_center = f
            .get_f64_list("checks.region_center")?
            .unwrap_or_else(|| extents.iter().map(|&(lo, hi)| (lo + hi) / 2.0).collect());
        let region_r0 = f.get_f64("checks.region_r0")?.unwrap_or(0.4 * half_width);
        let region_big_r0 = f.get_f64("checks.region_R0")?.unwrap_or(0.7 * half_width);
        let cutoff_inner = f.get_f64("checks.cutoff_inner")?.unwrap_or(0.4 * half_width);
        let cutoff_outer = f.get_f64("checks.cutoff_outer")?.unwrap_or(0.7 * half_width);
        let lipschitz_gamma = f.get_f64("checks.lipschitz_gamma")?;
        let lipschitz_theta = f.get_f64("checks.lipschitz_theta")?;

        let axis_key = |f: &mut ConfigFile, key: &str| -> Result<usize> {
            let one_based = f.get_usize(key)?.unwrap_or(1);
            if one_based == 0 || one_based > dim {
                bail!("`{key}` must lie in 1..={dim}");
            }
            Ok(one_based - 1)
        };

        let mut checks = Vec::new();
        if let Some(names) = f.get("checks.names") {
            for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let spec = match name {
                    "caccioppoli" => CheckSpec::Caccioppoli {
                        phi_power: f.get_f64("checks.caccioppoli_phi_power")?.unwrap_or(1.0),
                        axis: axis_key(&mut f, "checks.caccioppoli_axis")?,
                    },
                    "caccioppoli_negative" => CheckSpec::CaccioppoliNegative {
                        alpha: f.get_f64("checks.negative_alpha")?.unwrap_or(-0.5),
                        axis: axis_key(&mut f, "checks.negative_axis")?,
                    },
                    "weird_caccioppoli" => CheckSpec::WeirdCaccioppoli {
                        s: f.get_f64("checks.weird_s")?.unwrap_or(1.0),
                        m: f.get_f64("checks.weird_m")?.unwrap_or(2.0),
                        j: axis_key(&mut f, "checks.weird_axis_j")?,
                        k: axis_key(&mut f, "checks.weird_axis_k")?,
                    },
                    "power_caccioppoli" => CheckSpec::PowerCaccioppoli {
                        ell0: f.get_usize("checks.power_ell0")?.unwrap_or(1) as u32,
                        axis: axis_key(&mut f, "checks.power_axis")?,
                    },
                    "self_improving" => CheckSpec::SelfImproving {
                        alpha: f.get_f64("checks.self_alpha")?.unwrap_or(0.0),
                        axis: axis_key(&mut f, "checks.self_axis")?,
                    },
                    "higher_integrability" => CheckSpec::HigherIntegrability,
                    "higher_differentiability" => CheckSpec::HigherDifferentiability,
                    "lipschitz" => CheckSpec::Lipschitz,
                    other => bail!("unknown check name `{other}` in `checks.names`"),
                };
                checks.push(spec);
            }
        }

        // [output]
        let out_dir = PathBuf::from(f.get("output.dir").unwrap_or_else(|| "out".into()));
        let formats = match f.get("output.formats") {
            None => vec![OutputFormat::Json, OutputFormat::Csv],
            Some(list) => {
                let mut out = Vec::new();
                for item in list.split(',').map(str::trim) {
                    out.push(match item {
                        "json" => OutputFormat::Json,
                        "csv" => OutputFormat::Csv,
                        "bin" => OutputFormat::Bin,
                        other => bail!("unknown `output.formats` entry `{other}`"),
                    });
                }
                out
            }
        };
        let emit_plot_data = f.get_bool("output.emit_plot_data")?.unwrap_or(false);

        f.finish()?;

        Ok(ExperimentConfig {
            p,
            q0,
            extents,
            data,
            resolutions,
            eps,
            eps_list,
            eps0,
            solve_cfg,
            checks,
            region_center,
            region_r0,
            region_big_r0,
            cutoff_inner,
            cutoff_outer,
            lipschitz_gamma,
            lipschitz_theta,
            out_dir,
            formats,
            emit_plot_data,
        })
    }

    pub fn exponents(&self) -> orthoreg_core::Result<ExponentVector> {
        ExponentVector::new(self.p.clone())
    }

    pub fn model_params(&self) -> orthoreg_core::Result<ModelParams> {
        ModelParams::new(self.exponents()?, self.eps, self.eps0)
    }

    /// Builds the Dirichlet data; `seed` overrides the configured seed for
    /// the random kind.
    pub fn boundary_data(&self, seed: Option<u64>) -> Result<BoundaryData> {
        Ok(match &self.data {
            DataSpec::Affine { gradient, offset } => {
                if gradient.len() != self.p.len() {
                    bail!("`problem.data_gradient` must have {} entries", self.p.len());
                }
                BoundaryData::affine(gradient.clone(), *offset)
            }
            DataSpec::Trig { terms } => BoundaryData::Trigonometric {
                terms: terms.clone(),
            },
            DataSpec::Random {
                seed: cfg_seed,
                count,
                max_wavenumber,
                amplitude,
            } => BoundaryData::random_smooth(
                self.p.len(),
                seed.unwrap_or(*cfg_seed),
                *count,
                *max_wavenumber,
                *amplitude,
            ),
            DataSpec::Tabulated { file, resolution } => {
                let grid = Grid::new(self.extents.clone(), resolution.clone())?;
                let field = read_field_csv(grid, file)?;
                BoundaryData::Tabulated { field }
            }
        })
    }

    pub fn grid(&self, nodes: usize) -> orthoreg_core::Result<Grid> {
        Grid::uniform(self.extents.clone(), nodes)
    }

    pub fn finest_resolution(&self) -> usize {
        *self.resolutions.last().expect("validated non-empty")
    }

    pub fn inner_ball(&self) -> SubRegion {
        SubRegion::ball(self.region_center.clone(), self.region_r0)
    }

    pub fn outer_ball(&self) -> SubRegion {
        SubRegion::ball(self.region_center.clone(), self.region_big_r0)
    }

    pub fn cutoff(&self) -> orthoreg_core::Result<CutoffSpec> {
        CutoffSpec::new(
            self.region_center.clone(),
            self.cutoff_inner,
            self.cutoff_outer,
        )
    }
}
