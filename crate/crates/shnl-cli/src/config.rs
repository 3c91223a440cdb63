//! Strict TOML run configuration. Every field has a default except the grid
//! sizes and the model variant; unknown keys are hard errors so a typo cannot
//! silently change a study.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use shnl::analysis::{NormKind, NormSpec};
use shnl::domain::Domain;
use shnl::initial::InitialCondition;
use shnl::kernels::{KernelFamily, KernelSpec};
use shnl::model::{ModelSpec, Nonlinearity, TwoKernelConvention};
use shnl::stepper::{Scheme, StepperConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub kernel: KernelBlock,
    #[serde(default = "KernelBlock::default_companion")]
    pub kernel_q: KernelBlock,
    #[serde(default)]
    pub initial: InitialBlock,
    #[serde(default)]
    pub stepper: StepperBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub sizes: Vec<usize>,
    /// Empty means 2π per axis.
    #[serde(default)]
    pub lengths: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Local,
    OneKernel,
    TwoKernel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityName {
    Zero,
    QuadraticCubic,
    CubicQuintic,
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionName {
    Dissipative,
    AsPrinted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantName>,
    pub r: f64,
    pub gamma: f64,
    pub nonlinearity: NonlinearityName,
    /// Quadratic coefficient of the quadratic-cubic preset.
    pub b: f64,
    /// Cubic coefficient of the cubic-quintic preset.
    pub s: f64,
    /// Coefficients a_1.. of the polynomial preset, constant term omitted.
    pub coefficients: Vec<f64>,
    pub p: u32,
    pub q: u32,
    pub sign_convention: ConventionName,
    pub eps: f64,
    pub growth_check_override: bool,
}

impl Default for ModelBlock {
    fn default() -> ModelBlock {
        ModelBlock {
            variant: None,
            r: 0.1,
            gamma: 0.5,
            nonlinearity: NonlinearityName::QuadraticCubic,
            b: 1.0,
            s: 1.0,
            coefficients: vec![],
            p: 1,
            q: 2,
            sign_convention: ConventionName::Dissipative,
            eps: 0.2,
            growth_check_override: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Gaussian,
    Tophat,
    Triangle,
    TruncatedExponential,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelBlock {
    pub family: FamilyName,
    pub base_scale: f64,
    pub amplitude: f64,
    /// Radial profile file, family = "table" only.
    pub table_path: PathBuf,
}

impl Default for KernelBlock {
    fn default() -> KernelBlock {
        KernelBlock {
            family: FamilyName::Gaussian,
            base_scale: 1.0,
            amplitude: 1.0,
            table_path: PathBuf::new(),
        }
    }
}

impl KernelBlock {
    fn default_companion() -> KernelBlock {
        KernelBlock {
            amplitude: 0.5,
            ..KernelBlock::default()
        }
    }

    pub fn to_spec(&self) -> Result<KernelSpec> {
        let family = match self.family {
            FamilyName::Gaussian => KernelFamily::Gaussian,
            FamilyName::Tophat => KernelFamily::Tophat,
            FamilyName::Triangle => KernelFamily::Triangle,
            FamilyName::TruncatedExponential => KernelFamily::TruncatedExponential,
            FamilyName::Table => {
                if self.table_path.as_os_str().is_empty() {
                    bail!("kernel family \"table\" needs table_path");
                }
                KernelFamily::Table(self.table_path.clone())
            }
        };
        Ok(KernelSpec {
            family,
            base_scale: self.base_scale,
            amplitude: self.amplitude,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Constant,
    CosineModes,
    RandomSmooth,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: Vec<usize>,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialBlock {
    pub kind: InitialKind,
    pub value: f64,
    pub modes: Vec<ModeEntry>,
    pub seed: u64,
    pub cutoff: usize,
    pub amplitude: f64,
    pub path: PathBuf,
    /// Start nonlocal runs from the kernel-smoothed initial state.
    pub mollify_initial: bool,
}

impl Default for InitialBlock {
    fn default() -> InitialBlock {
        InitialBlock {
            kind: InitialKind::RandomSmooth,
            value: 0.0,
            modes: vec![],
            seed: 7,
            cutoff: 8,
            amplitude: 0.5,
            path: PathBuf::new(),
            mollify_initial: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Imex1,
    Imex2,
    Rk4Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardChoice {
    /// On for gradient flows, off otherwise.
    Auto,
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperBlock {
    pub scheme: SchemeName,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub energy_guard: GuardChoice,
}

impl Default for StepperBlock {
    fn default() -> StepperBlock {
        StepperBlock {
            scheme: SchemeName::Imex2,
            dt: 1e-3,
            t_final: 1.0,
            snapshot_stride: 1,
            energy_guard: GuardChoice::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
}

impl Default for SweepBlock {
    fn default() -> SweepBlock {
        SweepBlock {
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeReductionName {
    Max,
    L2InTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisBlock {
    /// "l2", "h1", "sup", "lp:3", "hs:1.5", "holder:0.5", ...
    pub norms: Vec<String>,
    /// 0 keeps the whole domain; spectral norms accept only 0.
    pub interior_margin: f64,
    pub time_reduction: TimeReductionName,
    /// Modes measured by dispersion-test.
    pub modes: Vec<usize>,
    pub rel_tol: f64,
}

impl Default for AnalysisBlock {
    fn default() -> AnalysisBlock {
        AnalysisBlock {
            norms: vec!["l2".into(), "h1".into()],
            interior_margin: 0.0,
            time_reduction: TimeReductionName::Max,
            modes: vec![0, 1, 2, 3],
            rel_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatName {
    Csv,
    Json,
    Fields,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<FormatName>,
}

impl Default for OutputBlock {
    fn default() -> OutputBlock {
        OutputBlock {
            directory: PathBuf::from("out"),
            formats: vec![FormatName::Csv, FormatName::Json, FormatName::Fields],
        }
    }
}

fn parse_norm(text: &str) -> Result<NormKind> {
    let (head, arg) = match text.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (text, None),
    };
    let num = |what: &str| -> Result<f64> {
        arg.ok_or_else(|| anyhow!("norm \"{text}\" needs a {what}, e.g. \"{head}:1.5\""))?
            .parse::<f64>()
            .with_context(|| format!("norm \"{text}\": bad {what}"))
    };
    match head {
        "l1" => Ok(NormKind::Lp(1.0)),
        "l2" => Ok(NormKind::Lp(2.0)),
        "l4" => Ok(NormKind::Lp(4.0)),
        "lp" => Ok(NormKind::Lp(num("exponent")?)),
        "h1" => Ok(NormKind::Hs(1.0)),
        "h2" => Ok(NormKind::Hs(2.0)),
        "hs" => Ok(NormKind::Hs(num("order")?)),
        "sup" => Ok(NormKind::Sup),
        "holder" => Ok(NormKind::Holder(num("exponent")?)),
        _ => bail!("unknown norm \"{text}\""),
    }
}

impl RunConfig {
    /// Parse and fully validate; model-level gates (growth, exponents, the
    /// gamma sign constraint) are checked here so a bad config never reaches
    /// a solver. Returns the config and any validation warnings.
    pub fn parse(text: &str) -> Result<(RunConfig, Vec<String>)> {
        let cfg: RunConfig = toml::from_str(text)?;
        let warnings = cfg.validate()?;
        Ok((cfg, warnings))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("config serialization failed")
    }

    fn validate(&self) -> Result<Vec<String>> {
        self.domain()?;
        let warnings = self
            .model_spec()?
            .validate()
            .map_err(|e| anyhow!("{e}"))?;
        self.initial_condition()?;
        self.norm_specs()?;
        let st = &self.stepper;
        if !(st.dt.is_finite() && st.dt > 0.0) {
            bail!("stepper dt {} must be positive", st.dt);
        }
        Ok(warnings)
    }

    pub fn domain(&self) -> Result<Arc<Domain>> {
        let sizes = &self.domain.sizes;
        let lengths = if self.domain.lengths.is_empty() {
            vec![2.0 * std::f64::consts::PI; sizes.len()]
        } else {
            self.domain.lengths.clone()
        };
        if lengths.len() != sizes.len() {
            bail!(
                "domain has {} sizes but {} lengths",
                sizes.len(),
                lengths.len()
            );
        }
        Domain::new(sizes, &lengths).map_err(|e| anyhow!("{e}"))
    }

    fn nonlinearity(&self) -> Result<Nonlinearity> {
        let m = &self.model;
        Ok(match m.nonlinearity {
            NonlinearityName::Zero => Nonlinearity::zero(),
            NonlinearityName::QuadraticCubic => Nonlinearity::quadratic_cubic(m.b),
            NonlinearityName::CubicQuintic => Nonlinearity::cubic_quintic(m.s),
            NonlinearityName::Polynomial => {
                let mut coeffs = vec![0.0];
                coeffs.extend_from_slice(&m.coefficients);
                Nonlinearity::polynomial(coeffs).map_err(|e| anyhow!("{e}"))?
            }
        })
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let variant = m
            .variant
            .ok_or_else(|| anyhow!("model.variant is required (local | one-kernel | two-kernel)"))?;
        let mut spec = match variant {
            VariantName::Local => ModelSpec::local(m.r, m.gamma, self.nonlinearity()?),
            VariantName::OneKernel => ModelSpec::one_kernel(
                m.r,
                m.gamma,
                self.nonlinearity()?,
                self.kernel.to_spec()?,
                m.eps,
            ),
            VariantName::TwoKernel => {
                let convention = match m.sign_convention {
                    ConventionName::Dissipative => TwoKernelConvention::Dissipative,
                    ConventionName::AsPrinted => TwoKernelConvention::AsPrinted,
                };
                ModelSpec::two_kernel(
                    m.r,
                    m.p,
                    m.q,
                    self.kernel_q.to_spec()?,
                    self.kernel.to_spec()?,
                    convention,
                    m.eps,
                )
            }
        };
        spec.growth_check_override |= m.growth_check_override;
        Ok(spec)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        let i = &self.initial;
        let dim = self.domain.sizes.len();
        Ok(match i.kind {
            InitialKind::Constant => InitialCondition::Constant { value: i.value },
            InitialKind::CosineModes => {
                if i.modes.is_empty() {
                    bail!("initial kind \"cosine-modes\" needs at least one [[initial.modes]] entry");
                }
                for entry in &i.modes {
                    if entry.k.len() != dim {
                        bail!(
                            "initial mode {:?} has {} indices on a {}-axis grid",
                            entry.k,
                            entry.k.len(),
                            dim
                        );
                    }
                }
                InitialCondition::CosineModes {
                    modes: i.modes.iter().map(|e| (e.k.clone(), e.amplitude)).collect(),
                }
            }
            InitialKind::RandomSmooth => InitialCondition::RandomSmooth {
                seed: i.seed,
                cutoff: i.cutoff,
                amplitude: i.amplitude,
            },
            InitialKind::File => {
                if i.path.as_os_str().is_empty() {
                    bail!("initial kind \"file\" needs a path");
                }
                InitialCondition::File {
                    path: i.path.clone(),
                }
            }
        })
    }

    pub fn stepper_config(&self) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            scheme: match s.scheme {
                SchemeName::Imex1 => Scheme::Imex1,
                SchemeName::Imex2 => Scheme::Imex2,
                SchemeName::Rk4Explicit => Scheme::Rk4Explicit,
            },
            dt: s.dt,
            t_final: s.t_final,
            snapshot_stride: s.snapshot_stride,
            energy_guard: match s.energy_guard {
                GuardChoice::Auto => None,
                GuardChoice::On => Some(true),
                GuardChoice::Off => Some(false),
            },
        }
    }

    pub fn norm_specs(&self) -> Result<Vec<NormSpec>> {
        let a = &self.analysis;
        let mut out = vec![];
        for text in &a.norms {
            let mut spec = NormSpec::new(parse_norm(text)?);
            if a.interior_margin > 0.0 {
                spec = spec.interior(a.interior_margin);
            }
            if matches!(a.time_reduction, TimeReductionName::L2InTime) {
                spec = spec.l2_in_time();
            }
            spec.validate()
                .map_err(|e| anyhow!("norm \"{text}\": {e}"))?;
            out.push(spec);
        }
        Ok(out)
    }
}
