//! Synthetic sampler with planted style and content directions.
//!
//! Each attention layer receives a style Key/Value built from known singular
//! pairs: large "style" values in the head and smaller "content" values in
//! the tail. Because the content directions are known, how much of them
//! survives filtering can be measured exactly. The energy metric stands in
//! for perceptual content leakage; it is an analogy, not an equivalence.
//!
//! The denoiser is fixed and untrained: a contraction of the 2-D latent
//! points toward an anchor plus a cross-attention read-out over text and style
//! Key/Value, averaged over layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attention::{adapter_attention, cross_attention};
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::guidance::{cfg_combine, decompose_layers, GuidanceBranches, LayerDecomposition, NegativeBranch};
use crate::schedule::ScheduleConfig;
use crate::tensor::Matrix;

pub const LATENT_POINTS: usize = 64;
pub const LATENT_DIM: usize = 2;
pub const TEXT_TOKENS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticStyleSpec {
    pub dim: usize,
    pub tokens: usize,
    /// Head singular values.
    pub style_sigmas: Vec<f64>,
    /// Tail singular values, each strictly below every style value.
    pub content_sigmas: Vec<f64>,
    pub seed: u64,
}

impl SyntheticStyleSpec {
    pub fn planted_rank(&self) -> usize {
        self.style_sigmas.len() + self.content_sigmas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.planted_rank();
        if self.dim < r || self.tokens < r {
            return Err(Error::Config(format!(
                "{r} planted directions need dim and tokens >= {r}, got dim {} tokens {}",
                self.dim, self.tokens
            )));
        }
        if self.dim == 0 || self.tokens == 0 {
            return Err(Error::Config("dim and tokens must be positive".into()));
        }
        let all = self.style_sigmas.iter().chain(&self.content_sigmas);
        if all.clone().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config("planted singular values must be finite and >= 0".into()));
        }
        let max_content = self.content_sigmas.iter().copied().fold(0.0, f64::max);
        if let Some(s) = self.style_sigmas.iter().find(|&&s| s <= max_content) {
            return Err(Error::Config(format!(
                "style value {s} must exceed every content value (max {max_content})"
            )));
        }
        Ok(())
    }
}

/// Key/value pair with known content directions.
#[derive(Debug, Clone)]
pub struct PlantedEmbedding {
    /// `(dim, tokens)`.
    pub key: Matrix,
    /// `(dim, tokens)`.
    pub value: Matrix,
    /// `(dim, content)`: left singular vectors of the key's content part.
    pub content_basis: Matrix,
    /// `(dim, content)`: the same for the value.
    pub value_content_basis: Matrix,
}

impl PlantedEmbedding {
    /// Projection of the key onto its content directions.
    pub fn key_content(&self) -> Result<Matrix> {
        project(&self.content_basis, &self.key)
    }

    pub fn value_content(&self) -> Result<Matrix> {
        project(&self.value_content_basis, &self.value)
    }
}

fn project(basis: &Matrix, m: &Matrix) -> Result<Matrix> {
    basis.matmul(&basis.transpose().matmul(m)?)
}

/// `‖Bᵀ m‖²_F` for an orthonormal basis `B`.
pub fn content_energy(basis: &Matrix, m: &Matrix) -> Result<f64> {
    let coords = basis.transpose().matmul(m)?;
    Ok(coords.data().iter().map(|x| x * x).sum())
}

/// `‖Bᵀ U diag(σ)‖²_F`, which equals `‖Bᵀ U diag(σ) Vᵀ‖²_F` for orthonormal `V`.
pub fn spectral_content_energy(basis: &Matrix, u: &Matrix, sigma: &[f64]) -> Result<f64> {
    let coords = basis.transpose().matmul(u)?.scale_columns(sigma)?;
    Ok(coords.data().iter().map(|x| x * x).sum())
}

/// Layer 0 of a planted embedding.
pub fn make_style_embedding(spec: &SyntheticStyleSpec) -> Result<PlantedEmbedding> {
    planted_layer(spec, 0)
}

/// Planted embedding for `layer`; layers draw from independent streams of
/// the same seed.
pub fn planted_layer(spec: &SyntheticStyleSpec, layer: u64) -> Result<PlantedEmbedding> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(layer);
    let sigmas: Vec<f64> = spec.style_sigmas.iter().chain(&spec.content_sigmas).copied().collect();
    let r = sigmas.len();
    let n_style = spec.style_sigmas.len();

    let build = |rng: &mut ChaCha8Rng| -> Result<(Matrix, Matrix)> {
        let u = orthonormal_columns(rng, spec.dim, r)?;
        let v = orthonormal_columns(rng, spec.tokens, r)?;
        let m = u.scale_columns(&sigmas)?.matmul(&v.transpose())?;
        let content: Vec<Vec<f64>> = (n_style..r).map(|j| u.column(j)).collect();
        let basis = if content.is_empty() {
            Matrix::zeros(spec.dim, 0)
        } else {
            Matrix::from_columns(&content)?
        };
        Ok((m, basis))
    };
    let (key, content_basis) = build(&mut rng)?;
    let (value, value_content_basis) = build(&mut rng)?;
    Ok(PlantedEmbedding {
        key,
        value,
        content_basis,
        value_content_basis,
    })
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Result<Matrix> {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::new(rows, cols, data)
}

/// Q factor of a Gaussian matrix (Gram-Schmidt, two passes).
fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Matrix> {
    let g = gaussian(rng, rows, cols, 1.0)?;
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut c = g.column(j);
        for _ in 0..2 {
            for b in &q {
                let p: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
                c.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return Err(Error::Config("degenerate Gaussian draw".into()));
        }
        c.iter_mut().for_each(|x| *x /= norm);
        q.push(c);
    }
    if q.is_empty() {
        return Ok(Matrix::zeros(rows, 0));
    }
    Matrix::from_columns(&q)
}

/// Which pieces of the pipeline are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Unfiltered style, zero negative.
    Baseline,
    /// Filtered style, zero negative.
    CsSvdOnly,
    /// Unfiltered style, tail negative.
    SsCfgOnly,
    /// Filtered style, tail negative.
    #[default]
    Full,
}

impl SamplerMode {
    pub const ALL: [SamplerMode; 4] = [
        SamplerMode::Baseline,
        SamplerMode::CsSvdOnly,
        SamplerMode::SsCfgOnly,
        SamplerMode::Full,
    ];

    pub fn filters_condition(self) -> bool {
        matches!(self, SamplerMode::CsSvdOnly | SamplerMode::Full)
    }

    pub fn tail_negative(self) -> bool {
        matches!(self, SamplerMode::SsCfgOnly | SamplerMode::Full)
    }
}

fn default_steps() -> usize {
    30
}
fn default_omega() -> f64 {
    5.0
}
fn default_layers() -> usize {
    1
}
fn default_adapter_weight() -> f64 {
    1.0
}

/// Sampler configuration. The suppression strength comes from `schedule`;
/// only `filter.top_k` is read from `filter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub mode: SamplerMode,
    #[serde(default)]
    pub denoiser_seed: u64,
    pub spec: SyntheticStyleSpec,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default)]
    pub negative: NegativeBranch,
    #[serde(default = "default_adapter_weight")]
    pub adapter_weight: f64,
}

impl SandboxConfig {
    pub fn new(spec: SyntheticStyleSpec) -> Self {
        SandboxConfig {
            steps: default_steps(),
            filter: FilterConfig::default(),
            schedule: ScheduleConfig::default(),
            omega: default_omega(),
            mode: SamplerMode::default(),
            denoiser_seed: 0,
            spec,
            layers: default_layers(),
            negative: NegativeBranch::default(),
            adapter_weight: default_adapter_weight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.schedule.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.steps != self.schedule.total_steps {
            return Err(Error::Config(format!(
                "steps ({}) must equal schedule.total_steps ({})",
                self.steps, self.schedule.total_steps
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        for (name, x) in [("omega", self.omega), ("adapter_weight", self.adapter_weight)] {
            if !x.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Content energy of the unfiltered keys, summed over layers.
    pub content_energy_before: f64,
    /// Content energy of the conditional keys at the final step.
    pub content_energy_after: f64,
    /// Scheduled suppression strength for each executed step `t = 0..T-1`.
    pub per_step_alpha: Vec<f64>,
    /// Cosine between the final displacement from the anchor and the
    /// read-out of the content-only style embedding.
    pub sample_content_correlation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    K,
    V,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::K => "k",
            Role::V => "v",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub layer: usize,
    pub role: Role,
    pub index: usize,
    pub sigma: f64,
    pub sigma_filtered: f64,
    pub alpha_t: f64,
}

pub const TRACE_HEADER: &str = "t,layer,role,index,sigma,sigma_filtered,alpha_t";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t,
            r.layer,
            r.role.as_str(),
            r.index,
            r.sigma,
            r.sigma_filtered,
            r.alpha_t
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    /// Final latent points, `(LATENT_POINTS, LATENT_DIM)`.
    pub samples: Matrix,
    pub report: LeakageReport,
    pub trace: Vec<TraceRow>,
    /// Latents before the first step and after each step (`T + 1` entries).
    pub trajectory: Vec<Matrix>,
}

struct DenoiserLayer {
    w_query: Matrix,
    w_out: Matrix,
    k_text: Matrix,
    v_text: Matrix,
}

struct ToyDenoiser {
    anchor: Matrix,
    init: Matrix,
    layers: Vec<DenoiserLayer>,
    adapter_weight: f64,
}

impl ToyDenoiser {
    fn new(seed: u64, layers: usize, dim: usize, adapter_weight: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchor = gaussian(&mut rng, 1, LATENT_DIM, 1.0)?;
        let init = gaussian(&mut rng, LATENT_POINTS, LATENT_DIM, 1.0)?;
        let inv_sqrt_d = 1.0 / (dim as f64).sqrt();
        let layers = (0..layers)
            .map(|_| {
                Ok(DenoiserLayer {
                    w_query: gaussian(&mut rng, LATENT_DIM, dim, 1.0)?,
                    w_out: gaussian(&mut rng, dim, LATENT_DIM, inv_sqrt_d)?,
                    k_text: gaussian(&mut rng, TEXT_TOKENS, dim, inv_sqrt_d)?,
                    v_text: gaussian(&mut rng, TEXT_TOKENS, dim, inv_sqrt_d)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ToyDenoiser {
            anchor,
            init,
            layers,
            adapter_weight,
        })
    }

    fn offsets(&self, x: &Matrix) -> Result<Matrix> {
        let a = self.anchor.row(0);
        let data = (0..x.rows())
            .flat_map(|i| x.row(i).iter().zip(a).map(|(p, q)| p - q).collect::<Vec<_>>())
            .collect();
        Matrix::new(x.rows(), x.cols(), data)
    }

    /// Noise prediction given feature-major style `(K, V)` per layer.
    fn predict(&self, x: &Matrix, style_kv: &[(Matrix, Matrix)]) -> Result<Matrix> {
        let mut eps = self.offsets(x)?;
        let inv_layers = 1.0 / self.layers.len() as f64;
        for (layer, (k, v)) in self.layers.iter().zip(style_kv) {
            let q = x.matmul(&layer.w_query)?;
            let read = adapter_attention(
                &q,
                &layer.k_text,
                &layer.v_text,
                &k.transpose(),
                &v.transpose(),
                1.0,
                self.adapter_weight,
            )?;
            eps = eps.add(&read.matmul(&layer.w_out)?.scale(inv_layers)?)?;
        }
        Ok(eps)
    }

    /// Read-out of a style-only attention over the given `(K, V)`.
    fn style_readout(&self, x: &Matrix, style_kv: &[(Matrix, Matrix)]) -> Result<Matrix> {
        let mut out = Matrix::zeros(x.rows(), LATENT_DIM);
        let inv_layers = 1.0 / self.layers.len() as f64;
        for (layer, (k, v)) in self.layers.iter().zip(style_kv) {
            let q = x.matmul(&layer.w_query)?;
            let read = cross_attention(&q, &k.transpose(), &v.transpose())?;
            out = out.add(&read.matmul(&layer.w_out)?.scale(inv_layers)?)?;
        }
        Ok(out)
    }
}

/// Sampler state: planted embeddings, their decompositions and the denoiser.
pub struct Sampler {
    cfg: SandboxConfig,
    embeddings: Vec<PlantedEmbedding>,
    decompositions: Vec<LayerDecomposition>,
    denoiser: ToyDenoiser,
    top_k: usize,
    negative_override: Option<Vec<(Matrix, Matrix)>>,
}

impl Sampler {
    pub fn new(cfg: SandboxConfig) -> Result<Self> {
        cfg.validate()?;
        let embeddings = (0..cfg.layers as u64)
            .map(|l| planted_layer(&cfg.spec, l))
            .collect::<Result<Vec<_>>>()?;
        let kv: Vec<(Matrix, Matrix)> = embeddings.iter().map(|e| (e.key.clone(), e.value.clone())).collect();
        let decompositions = decompose_layers(&kv)?;
        let top_k = cfg.filter.effective_k(cfg.spec.dim.min(cfg.spec.tokens));
        let denoiser = ToyDenoiser::new(cfg.denoiser_seed, cfg.layers, cfg.spec.dim, cfg.adapter_weight)?;
        Ok(Sampler {
            cfg,
            embeddings,
            decompositions,
            denoiser,
            top_k,
            negative_override: None,
        })
    }

    /// Replaces the unconditional style `(K, V)` of every layer at every step.
    pub fn with_negative_override(mut self, kv: Vec<(Matrix, Matrix)>) -> Result<Self> {
        if kv.len() != self.embeddings.len() {
            return Err(Error::Dimensions(format!(
                "override has {} layers, sampler has {}",
                kv.len(),
                self.embeddings.len()
            )));
        }
        for ((k, v), e) in kv.iter().zip(&self.embeddings) {
            if k.shape() != e.key.shape() || v.shape() != e.value.shape() {
                return Err(Error::Shape {
                    op: "negative override",
                    lhs: k.shape(),
                    rhs: e.key.shape(),
                });
            }
        }
        self.negative_override = Some(kv);
        Ok(self)
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.cfg
    }

    pub fn embeddings(&self) -> &[PlantedEmbedding] {
        &self.embeddings
    }

    pub fn decompositions(&self) -> &[LayerDecomposition] {
        &self.decompositions
    }

    /// Guidance branches the active mode uses at step `t`.
    pub fn branches_at(&self, t: usize) -> Result<GuidanceBranches> {
        let alpha = self.cfg.schedule.alpha_at(t as f64)?;
        self.branches_with_alpha(alpha)
    }

    fn branches_with_alpha(&self, alpha: f64) -> Result<GuidanceBranches> {
        let mode = self.cfg.mode;
        let mut cond = Vec::with_capacity(self.embeddings.len());
        let mut uncond = Vec::with_capacity(self.embeddings.len());
        for (e, d) in self.embeddings.iter().zip(&self.decompositions) {
            cond.push(if mode.filters_condition() {
                d.conditional(self.top_k, alpha)?
            } else {
                (e.key.clone(), e.value.clone())
            });
            uncond.push(if mode.tail_negative() {
                d.negative(self.top_k, alpha, self.cfg.negative)?
            } else {
                (
                    Matrix::zeros(e.key.rows(), e.key.cols()),
                    Matrix::zeros(e.value.rows(), e.value.cols()),
                )
            });
        }
        if let Some(kv) = &self.negative_override {
            uncond = kv.clone();
        }
        GuidanceBranches::new(cond, uncond, self.cfg.omega)
    }

    /// Spectra of the conditional key/value of each layer at strength `alpha`.
    fn conditional_spectra(&self, alpha: f64) -> Result<Vec<[Vec<f64>; 2]>> {
        let cfg = FilterConfig::new(self.top_k, alpha);
        self.decompositions
            .iter()
            .map(|d| {
                Ok(if self.cfg.mode.filters_condition() {
                    [d.key.filtered_sigma(&cfg)?, d.value.filtered_sigma(&cfg)?]
                } else {
                    [d.key.cleaned_sigma().to_vec(), d.value.cleaned_sigma().to_vec()]
                })
            })
            .collect()
    }

    fn key_content_energy(&self, spectra: &[[Vec<f64>; 2]]) -> Result<f64> {
        self.embeddings
            .iter()
            .zip(&self.decompositions)
            .zip(spectra)
            .map(|((e, d), s)| spectral_content_energy(&e.content_basis, &d.key.factors().u, &s[0]))
            .sum()
    }

    pub fn run(&self) -> Result<SampleOutput> {
        let steps = self.cfg.steps;
        let per_step_alpha = (0..steps)
            .map(|t| self.cfg.schedule.alpha_at(t as f64))
            .collect::<Result<Vec<_>>>()?;

        let unfiltered: Vec<[Vec<f64>; 2]> = self
            .decompositions
            .iter()
            .map(|d| [d.key.cleaned_sigma().to_vec(), d.value.cleaned_sigma().to_vec()])
            .collect();
        let content_energy_before = self.key_content_energy(&unfiltered)?;

        let mut x = self.denoiser.init.clone();
        let mut trajectory = Vec::with_capacity(steps + 1);
        trajectory.push(x.clone());
        let mut trace = Vec::new();
        let mut content_energy_after = content_energy_before;
        let inv_steps = 1.0 / steps as f64;

        for (t, &alpha) in per_step_alpha.iter().enumerate() {
            let branches = self.branches_with_alpha(alpha)?;
            let eps_cond = self.denoiser.predict(&x, &branches.cond_kv)?;
            let eps_uncond = self.denoiser.predict(&x, &branches.uncond_kv)?;
            let eps = cfg_combine(&eps_cond, &eps_uncond, branches.omega)?;
            x = x
                .sub(&eps.scale(inv_steps)?)
                .map_err(|_| Error::Divergence { step: t })?;

            let spectra = self.conditional_spectra(alpha)?;
            for (layer, (before, after)) in unfiltered.iter().zip(&spectra).enumerate() {
                for (role, (s0, s1)) in [Role::K, Role::V].into_iter().zip(before.iter().zip(after)) {
                    for (index, (&sigma, &sigma_filtered)) in s0.iter().zip(s1).enumerate() {
                        trace.push(TraceRow {
                            t,
                            layer,
                            role,
                            index,
                            sigma,
                            sigma_filtered,
                            alpha_t: alpha,
                        });
                    }
                }
            }
            if t + 1 == steps {
                content_energy_after = self.key_content_energy(&spectra)?;
            }
            trajectory.push(x.clone());
        }

        let content_kv: Vec<(Matrix, Matrix)> = self
            .embeddings
            .iter()
            .map(|e| Ok((e.key_content()?, e.value_content()?)))
            .collect::<Result<_>>()?;
        let readout = self.denoiser.style_readout(&x, &content_kv)?;
        let displacement = self.denoiser.offsets(&x)?;
        let denom = displacement.frobenius_norm() * readout.frobenius_norm();
        let sample_content_correlation = if denom > 0.0 {
            displacement.frobenius_inner(&readout)? / denom
        } else {
            0.0
        };

        Ok(SampleOutput {
            samples: x,
            report: LeakageReport {
                content_energy_before,
                content_energy_after,
                per_step_alpha,
                sample_content_correlation,
            },
            trace,
            trajectory,
        })
    }
}

pub fn run_sampler(cfg: &SandboxConfig) -> Result<SampleOutput> {
    Sampler::new(cfg.clone())?.run()
}
