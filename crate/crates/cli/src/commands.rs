use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use specfilter_core::filter::Decomposition;
use specfilter_core::guidance::{branches_from_decompositions, decompose_layers};
use specfilter_core::sandbox::{content_energy, trace_csv};
use specfilter_core::{
    cfg_combine, read_tensor, run_sampler, svd, EmbeddingManifest, FilterConfig, Matrix, NegativeBranch,
    SandboxConfig, ScheduleConfig, ScheduleVariant,
};

use crate::args::{Cli, Command, ScheduleArgs, VariantArg};
use crate::output::Outputs;
use crate::UsageError;

pub fn run(cli: &Cli) -> Result<()> {
    let out = Outputs::new(cli.global.force);
    match &cli.command {
        Command::Svd {
            input,
            out_u,
            out_sigma,
            out_v,
        } => {
            out.claim([out_u, out_sigma, out_v])?;
            let f = svd(&read_tensor(input)?)?;
            out.tensor(out_u, &f.u)?;
            out.tensor(out_sigma, &Matrix::column_vector(&f.sigma)?)?;
            out.tensor(out_v, &f.v)?;
        }
        Command::Decompose {
            input,
            top_k,
            out_main,
            out_tail,
        } => {
            out.claim([out_main, out_tail])?;
            let d = Decomposition::new(&read_tensor(input)?)?;
            out.tensor(out_main, &d.main(*top_k)?)?;
            out.tensor(out_tail, &d.tail(*top_k)?)?;
        }
        Command::Filter {
            manifest,
            top_k,
            schedule,
            variant,
            step,
            out_dir,
            on_feature,
            key_projection,
            value_projection,
        } => {
            let sched = schedule_config(schedule, *variant)?;
            check_step(*step, &sched)?;
            let alpha = sched.alpha_at(*step as f64)?;
            let cfg = FilterConfig::new(*top_k, alpha);
            let manifest = EmbeddingManifest::load(manifest)?;
            let layers = manifest.load_layers()?;
            let projections = if *on_feature {
                Some((load_optional(key_projection)?, load_optional(value_projection)?))
            } else {
                None
            };

            let mut targets: Vec<PathBuf> = Vec::new();
            for l in &layers {
                targets.push(out_dir.join(format!("{}.k.csem", l.name)));
                targets.push(out_dir.join(format!("{}.v.csem", l.name)));
            }
            let spectra_path = out_dir.join("spectra.csv");
            targets.push(spectra_path.clone());
            out.claim(&targets)?;
            out.dir(out_dir)?;

            let mut csv = String::from("layer,role,t,index,sigma,sigma_filtered\n");
            for l in &layers {
                for (role, m, proj) in [
                    ("k", &l.key, projections.as_ref().and_then(|p| p.0.as_ref())),
                    ("v", &l.value, projections.as_ref().and_then(|p| p.1.as_ref())),
                ] {
                    let d = Decomposition::new(m)?;
                    let before = d.cleaned_sigma();
                    let after = d.filtered_sigma(&cfg)?;
                    let filtered = d.filtered(&cfg)?;
                    let filtered = match proj {
                        Some(w) => w.matmul(&filtered)?,
                        None => filtered,
                    };
                    out.tensor(&out_dir.join(format!("{}.{role}.csem", l.name)), &filtered)?;
                    for (i, (s0, s1)) in before.iter().zip(&after).enumerate() {
                        writeln!(csv, "{},{role},{step},{i},{s0},{s1}", l.name)?;
                    }
                }
            }
            out.text(&spectra_path, &csv)?;
        }
        Command::Schedule { schedule, variant, out: path } => {
            let sched = schedule_config(schedule, *variant)?;
            let mut csv = String::from("t,s_t,alpha_t\n");
            for (t, s, a) in sched.table()? {
                writeln!(csv, "{t},{s},{a}")?;
            }
            match path {
                Some(p) => {
                    out.claim([p])?;
                    out.text(p, &csv)?;
                }
                None => print!("{csv}"),
            }
        }
        Command::Guide {
            cond,
            uncond,
            omega,
            out: path,
        } => {
            out.claim([path])?;
            let combined = cfg_combine(&read_tensor(cond)?, &read_tensor(uncond)?, *omega)?;
            out.tensor(path, &combined)?;
        }
        Command::Branches {
            manifest,
            top_k,
            schedule,
            variant,
            step,
            out_dir,
            attenuated_negative,
        } => {
            let sched = schedule_config(schedule, *variant)?;
            check_step(*step, &sched)?;
            let manifest = EmbeddingManifest::load(manifest)?;
            let layers = manifest.load_layers()?;
            let mut targets = Vec::new();
            for l in &layers {
                for part in ["cond.k", "cond.v", "uncond.k", "uncond.v"] {
                    targets.push(out_dir.join(format!("{}.{part}.csem", l.name)));
                }
            }
            out.claim(&targets)?;
            out.dir(out_dir)?;

            let kv: Vec<(Matrix, Matrix)> = layers.iter().map(|l| (l.key.clone(), l.value.clone())).collect();
            let negative = if *attenuated_negative {
                NegativeBranch::AttenuatedTail
            } else {
                NegativeBranch::IsolatedTail
            };
            let decomposed = decompose_layers(&kv)?;
            // omega does not affect the written tensors
            let branches = branches_from_decompositions(&decomposed, *top_k, &sched, *step, 1.0, negative)?;
            for ((l, (ck, cv)), (uk, uv)) in layers.iter().zip(&branches.cond_kv).zip(&branches.uncond_kv) {
                for (part, m) in [("cond.k", ck), ("cond.v", cv), ("uncond.k", uk), ("uncond.v", uv)] {
                    out.tensor(&out_dir.join(format!("{}.{part}.csem", l.name)), m)?;
                }
            }
        }
        Command::Sample { config, out_dir } => {
            let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg: SandboxConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(seed) = cli.global.deterministic_seed {
                cfg.spec.seed = seed;
                cfg.denoiser_seed = seed;
            }
            let targets = ["samples.csem", "report.json", "trace.csv"].map(|f| out_dir.join(f));
            out.claim(&targets)?;
            out.dir(out_dir)?;

            let result = run_sampler(&cfg)?;
            out.tensor(&targets[0], &result.samples)?;
            out.text(&targets[1], &(serde_json::to_string_pretty(&result.report)? + "\n"))?;
            out.text(&targets[2], &trace_csv(&result.trace))?;
            log::info!(
                "content energy {} -> {}",
                result.report.content_energy_before,
                result.report.content_energy_after
            );
        }
        Command::Leakage { input, basis, out: path } => {
            let m = read_tensor(input)?;
            let b = read_tensor(basis)?;
            let energy = content_energy(&b, &m)?;
            let total = m.frobenius_norm().powi(2);
            let body = json!({
                "content_energy": energy,
                "total_energy": total,
                "content_fraction": if total > 0.0 { energy / total } else { 0.0 },
            });
            let text = serde_json::to_string_pretty(&body)? + "\n";
            match path {
                Some(p) => {
                    out.claim([p])?;
                    out.text(p, &text)?;
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn schedule_config(args: &ScheduleArgs, variant: VariantArg) -> Result<ScheduleConfig> {
    let cfg = ScheduleConfig {
        alpha0: args.alpha0,
        gamma: args.gamma,
        c: args.c,
        total_steps: args.steps,
        variant: ScheduleVariant::from(variant),
        lambda: args.lambda,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_step(step: usize, sched: &ScheduleConfig) -> Result<()> {
    if step > sched.total_steps {
        return Err(UsageError(format!("--step {step} exceeds --steps {}", sched.total_steps)).into());
    }
    Ok(())
}

fn load_optional(path: &Option<PathBuf>) -> Result<Option<Matrix>> {
    path.as_deref().map(|p: &Path| read_tensor(p)).transpose().map_err(Into::into)
}
