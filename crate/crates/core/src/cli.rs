//! Command-line front end. `run` parses arguments, dispatches, and maps errors
//! to the stable exit codes in [`Error::exit_code`].

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::adain::AdainConfig;
use crate::attention::{
    classify_style, lambda_rescaled_attention, row_entropy, shared_attention, QkvBlock,
    RescaleParams, StyleBlock, StyleClassifierConfig,
};
use crate::blend::{linear_blend, sli_blend, BlendMethod};
use crate::error::{Error, Result};
use crate::fusion::{
    describe_inputs, fuse_traced, FusionConfig, FusionInput, ProviderBinding, QueryCatalog,
};
use crate::io::{self, npy, BlendSpec, PromptCatalog};
use crate::metrics::{wms_score, EmbeddingSet, ReferenceStyle};
use crate::par;
use crate::sandbox::{guidance_sweep, run_sandbox, SandboxConfig, GUIDANCE_GRID};
use crate::schedule::build_schedule;
use crate::tensor::LatentVector;

/// The seven two-style weight pairs evaluated by `wms --grid`.
pub const WEIGHT_GRID: [[f64; 2]; 7] = [
    [0.0, 1.0],
    [0.15, 0.85],
    [0.25, 0.75],
    [0.5, 0.5],
    [0.75, 0.25],
    [0.85, 0.15],
    [1.0, 0.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "lbk",
    version,
    about = "Latent style blending, shared attention and style metrics"
)]
pub struct Cli {
    /// Write stdout output to this file instead.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Overrides the seed of seeded subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blend style vectors as described by a JSON spec.
    Blend(BlendArgs),
    /// Mean-similarity and weighted multi-style scores.
    Wms(WmsArgs),
    /// Shared attention of a token matrix against reference tokens.
    Attend(AttendArgs),
    /// Fuse multi-modal descriptions into one prompt.
    Fuse(FuseArgs),
    /// Run the seeded toy generation loop.
    Sandbox(SandboxArgs),
    /// Print a shipped catalog.
    Catalog(CatalogArgs),
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Destination `.npy` for the blended vector.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WmsArgs {
    /// `.npy` file or directory of `.npy` files. With `--grid`, a directory may
    /// hold one subdirectory per weight pair, named like `0.15_0.85`.
    #[arg(long)]
    pub generated: PathBuf,
    /// JSON array of `{"name", "embedding" | "path", "weight"?}`.
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct AttendArgs {
    /// Token matrix (tokens × d) of the generated image.
    #[arg(long = "self")]
    pub own: PathBuf,
    /// Reference token matrix; repeat for several styles with `--lambda-weights`.
    #[arg(long = "ref", required = true)]
    pub reference: Vec<PathBuf>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "auto_classify")]
    pub mu: Option<f64>,
    #[arg(long, conflicts_with = "auto_classify")]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub auto_classify: bool,
    #[arg(long, requires = "auto_classify")]
    pub threshold: Option<f64>,
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["mu", "sigma", "auto_classify"])]
    pub lambda_weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// JSON array of `{"modality", "text" | "embedding" | "weather"}`.
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `fixture:<path>`, `command:<cmd>`, or a bare locator.
    #[arg(long, env = "LBK_PROVIDER")]
    pub provider: Option<String>,
    /// Query catalog JSON; defaults to the shipped one.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Args)]
pub struct SandboxArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Emit the beta / alpha_cumprod table instead of running.
    #[arg(long)]
    pub dump_schedule: bool,
    /// Run once per guidance value 5, 10, ..., 30.
    #[arg(long, conflicts_with = "dump_schedule")]
    pub sweep_guidance: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CatalogKind {
    Queries,
    Prompts,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    #[arg(value_enum, default_value = "queries")]
    pub which: CatalogKind,
}

/// What a subcommand produced, renderable as JSON or CSV.
struct Output {
    json: Value,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    /// Plain text used when no format was requested, if the command has one.
    text: Option<String>,
    default: Format,
}

impl Output {
    fn new(json: Value, headers: Vec<&str>, rows: Vec<Vec<String>>, default: Format) -> Self {
        Output {
            json,
            headers: headers.into_iter().map(String::from).collect(),
            rows,
            text: None,
            default,
        }
    }

    fn render(&self, format: Option<Format>) -> Result<String> {
        match (format, &self.text) {
            (None, Some(text)) => Ok(format!("{text}\n")),
            (Some(Format::Json), _) => Ok(pretty(&self.json)),
            (Some(Format::Csv), _) => self.csv(),
            (None, None) => match self.default {
                Format::Json => Ok(pretty(&self.json)),
                Format::Csv => self.csv(),
            },
        }
    }

    fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(to_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serialises");
    s.push('\n');
    s
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serialises")
}

fn num(v: f64) -> String {
    v.to_string()
}

fn joined(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

/// Entry point used by the binary. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let out = match &cli.command {
        Command::Blend(a) => cmd_blend(a)?,
        Command::Wms(a) => cmd_wms(a)?,
        Command::Attend(a) => cmd_attend(a)?,
        Command::Fuse(a) => cmd_fuse(a, cli.format)?,
        Command::Sandbox(a) => cmd_sandbox(a, cli.seed)?,
        Command::Catalog(a) => cmd_catalog(a)?,
    };
    let rendered = out.render(cli.format)?;
    match &cli.output {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Error::io(path, e)),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn cmd_blend(a: &BlendArgs) -> Result<Output> {
    let spec = BlendSpec::load(&a.spec)?;
    let base = a.spec.parent();
    let paths = spec.style_paths(base);
    let set = spec.load_styles(base)?;
    let name_of = |i: usize| spec.styles[i].path.display().to_string();
    let result = match spec.method {
        BlendMethod::Linear => linear_blend(&set),
        BlendMethod::Sli => sli_blend(&set, spec.eps_omega()),
    }
    .map_err(|e| match e {
        Error::AtStyle { source_index, .. } => {
            let ctx = format!("blending style {}", name_of(source_index));
            e.context(ctx)
        }
        other => other,
    })?;
    npy::write_vector(&a.out, &result.vector)?;

    let norm = result.vector.norm();
    let order_paths: Vec<String> = result
        .order_used
        .iter()
        .map(|i| paths[*i].display().to_string())
        .collect();
    let json = json!({
        "method": result.method,
        "order_used": result.order_used,
        "order_paths": order_paths,
        "weights": set.weights(),
        "omega_trace": result.omega_trace,
        "norm": norm,
        "output": a.out.display().to_string(),
    });
    let row = vec![
        match result.method {
            BlendMethod::Linear => "linear".into(),
            BlendMethod::Sli => "sli".into(),
        },
        joined(result.order_used.iter().map(|i| i.to_string())),
        joined(result.omega_trace.iter().map(|w| num(*w))),
        num(norm),
    ];
    Ok(Output::new(
        json,
        vec!["method", "order_used", "omega_trace", "norm"],
        vec![row],
        Format::Json,
    ))
}

fn pair_label(w: &[f64; 2]) -> String {
    format!("{}_{}", w[0], w[1])
}

fn cmd_wms(a: &WmsArgs) -> Result<Output> {
    let refs: Vec<ReferenceStyle> = io::load_references(&a.refs)?;
    let names: Vec<String> = refs.iter().map(|r| r.name.clone()).collect();

    // (weights, generated set) per output row
    let configs: Vec<(Vec<f64>, Vec<LatentVector>)> = if a.grid {
        if refs.len() != 2 {
            return Err(Error::InvalidParameter(format!(
                "--grid needs exactly two references, got {}",
                refs.len()
            )));
        }
        let per_row = a.generated.is_dir()
            && WEIGHT_GRID
                .iter()
                .any(|w| a.generated.join(pair_label(w)).is_dir());
        let shared = if per_row {
            None
        } else {
            Some(io::load_embeddings(&a.generated)?)
        };
        WEIGHT_GRID
            .iter()
            .map(|w| {
                let gen = match &shared {
                    Some(g) => g.clone(),
                    None => {
                        let dir = a.generated.join(pair_label(w));
                        io::load_embeddings(&dir)
                            .map_err(|e| e.context(format!("weights {}", pair_label(w))))?
                    }
                };
                Ok((w.to_vec(), gen))
            })
            .collect::<Result<_>>()?
    } else {
        let weights = match &a.weights {
            Some(w) => w.clone(),
            None => refs.iter().map(|r| r.weight).collect(),
        };
        vec![(weights, io::load_embeddings(&a.generated)?)]
    };

    let reports = par::try_map_slice(&configs, |(weights, gen)| {
        let es = EmbeddingSet::new(gen.clone(), refs.clone())?.with_weights(weights)?;
        wms_score(&es)
    })?;

    let mut headers: Vec<String> = names.iter().map(|n| format!("w_{n}")).collect();
    headers.extend(names.iter().map(|n| format!("MS_{n}")));
    headers.extend(["WMS".to_string(), "MS_GAP".to_string()]);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.per_style.iter().map(|s| num(s.weight)).collect();
            row.extend(r.per_style.iter().map(|s| num(s.ms)));
            row.push(num(r.wms));
            row.push(num(r.ms_gap));
            row
        })
        .collect();
    let json = json!({ "rows": reports });
    let mut out = Output::new(json, vec![], rows, Format::Csv);
    out.headers = headers;
    Ok(out)
}

fn cmd_attend(a: &AttendArgs) -> Result<Output> {
    let own = npy::read_matrix(&a.own)?;
    let refs = a
        .reference
        .iter()
        .map(npy::read_matrix)
        .collect::<Result<Vec<_>>>()?;

    if let Some(weights) = &a.lambda_weights {
        let blocks: Vec<StyleBlock> = if refs.len() == 1 {
            weights
                .iter()
                .map(|w| StyleBlock {
                    keys: refs[0].clone(),
                    values: refs[0].clone(),
                    weight: *w,
                })
                .collect()
        } else if refs.len() == weights.len() {
            refs.iter()
                .zip(weights)
                .map(|(r, w)| StyleBlock {
                    keys: r.clone(),
                    values: r.clone(),
                    weight: *w,
                })
                .collect()
        } else {
            return Err(Error::InvalidParameter(format!(
                "{} --lambda-weights for {} --ref files",
                weights.len(),
                refs.len()
            )));
        };
        let r = lambda_rescaled_attention(&own, &blocks)?;
        let lambdas = crate::attention::lambda_weights(weights)?;
        let entropy = row_entropy(&r.weights);
        let mean_entropy = entropy.iter().sum::<f64>() / entropy.len() as f64;
        let json = json!({
            "mode": "lambda",
            "lambdas": lambdas,
            "block_mass": r.block_mass,
            "mean_row_entropy": mean_entropy,
            "row_entropy": entropy,
        });
        let row = vec![
            "lambda".into(),
            joined(lambdas.iter().map(|l| num(*l))),
            joined(r.block_mass.iter().map(|m| num(*m))),
            num(mean_entropy),
        ];
        return Ok(Output::new(
            json,
            vec!["mode", "lambdas", "block_mass", "mean_row_entropy"],
            vec![row],
            Format::Json,
        ));
    }

    if refs.len() != 1 {
        return Err(Error::InvalidParameter(
            "shared attention takes exactly one --ref (use --lambda-weights for several)".into(),
        ));
    }
    let reference = QkvBlock::from_tokens(&refs[0]);
    let (params, class) = if a.auto_classify {
        let cfg = StyleClassifierConfig {
            threshold: a
                .threshold
                .unwrap_or(StyleClassifierConfig::default().threshold),
            ..Default::default()
        };
        if cfg.threshold.is_nan() || cfg.threshold <= 0.0 {
            return Err(Error::InvalidParameter("threshold must be > 0".into()));
        }
        let class = classify_style(&reference.k, &cfg);
        (cfg.params_for(class), Some(class))
    } else {
        let p = RescaleParams::new(
            a.mu.unwrap_or(RescaleParams::IDENTITY.mu),
            a.sigma.unwrap_or(RescaleParams::IDENTITY.sigma),
        )?;
        (p, None)
    };
    let r = shared_attention(
        &QkvBlock::from_tokens(&own),
        &reference,
        params,
        &AdainConfig::default(),
    )?;
    let entropy = row_entropy(&r.weights);
    let mean_entropy = entropy.iter().sum::<f64>() / entropy.len() as f64;
    let mut json = json!({
        "mode": "shared",
        "mu": params.mu,
        "sigma": params.sigma,
        "ref_mass": r.ref_mass,
        "mean_row_entropy": mean_entropy,
        "row_entropy": entropy,
    });
    if let Some(c) = class {
        json["classification"] = to_json(&c);
    }
    let row = vec![
        "shared".into(),
        num(params.mu),
        num(params.sigma),
        class
            .map(|c| to_json(&c).as_str().unwrap_or_default().to_owned())
            .unwrap_or_default(),
        num(r.ref_mass),
        num(mean_entropy),
    ];
    Ok(Output::new(
        json,
        vec![
            "mode",
            "mu",
            "sigma",
            "classification",
            "ref_mass",
            "mean_row_entropy",
        ],
        vec![row],
        Format::Json,
    ))
}

fn cmd_fuse(a: &FuseArgs, format: Option<Format>) -> Result<Output> {
    let inputs: Vec<FusionInput> = io::read_json(&a.inputs)?;
    let cfg: FusionConfig = match &a.config {
        Some(p) => io::read_json(p)?,
        None => FusionConfig::default(),
    };
    let catalog = match &a.catalog {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            QueryCatalog::from_json(&raw)?
        }
        None => QueryCatalog::default_catalog(),
    };
    let described = describe_inputs(&inputs, &catalog)?;
    let descriptions: Vec<_> = described.iter().map(|(d, _)| d.clone()).collect();
    let binding = a
        .provider
        .as_deref()
        .filter(|p| !p.trim().is_empty())
        .map(ProviderBinding::parse);
    let mut trace = fuse_traced(&descriptions, &cfg, binding.as_ref())?;
    for (step, (_, best)) in trace.steps.iter_mut().zip(described) {
        step.best_query = best;
    }

    let rows = trace
        .steps
        .iter()
        .map(|s| {
            vec![
                s.modality.to_string(),
                s.input.clone(),
                s.output.clone(),
                s.paraphrased.to_string(),
                s.best_query
                    .as_ref()
                    .map(|b| b.text.clone())
                    .unwrap_or_default(),
            ]
        })
        .collect();
    let json = if a.explain {
        to_json(&trace)
    } else {
        json!({ "prompt": trace.prompt })
    };
    let mut out = Output::new(
        json,
        vec!["modality", "input", "output", "paraphrased", "best_query"],
        rows,
        Format::Json,
    );
    if !a.explain && format.is_none() {
        out.text = Some(trace.prompt);
    }
    Ok(out)
}

fn cmd_sandbox(a: &SandboxArgs, seed: Option<u64>) -> Result<Output> {
    let mut cfg: SandboxConfig = match &a.config {
        Some(p) => io::read_json(p)?,
        None => SandboxConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;

    if a.dump_schedule {
        let s = build_schedule(&cfg.schedule)?;
        let rows = (0..s.len())
            .map(|t| {
                vec![
                    t.to_string(),
                    num(s.betas[t]),
                    num(s.alphas[t]),
                    num(s.alpha_cumprod[t]),
                ]
            })
            .collect();
        return Ok(Output::new(
            to_json(&s),
            vec!["t", "beta", "alpha", "alpha_cumprod"],
            rows,
            Format::Csv,
        ));
    }

    if a.sweep_guidance {
        let sweep = guidance_sweep(&cfg, &GUIDANCE_GRID)?;
        let rows = sweep
            .iter()
            .map(|r| {
                vec![
                    num(r.guidance_scale),
                    num(r.initial_stat_distance),
                    num(r.final_stat_distance),
                    num(r.final_ref_mass),
                ]
            })
            .collect();
        return Ok(Output::new(
            json!({ "seed": cfg.seed, "rows": sweep }),
            vec![
                "guidance_scale",
                "initial_stat_distance",
                "final_stat_distance",
                "final_ref_mass",
            ],
            rows,
            Format::Csv,
        ));
    }

    let report = run_sandbox(&cfg)?;
    let rows = report
        .per_step_stat_distance
        .iter()
        .zip(&report.per_step_ref_mass)
        .enumerate()
        .map(|(i, (d, m))| vec![i.to_string(), num(*d), num(*m)])
        .collect();
    Ok(Output::new(
        to_json(&report),
        vec!["step", "stat_distance", "ref_mass"],
        rows,
        Format::Json,
    ))
}

fn cmd_catalog(a: &CatalogArgs) -> Result<Output> {
    let texts: Vec<String> = match a.which {
        CatalogKind::Queries => {
            let c = QueryCatalog::default_catalog();
            (0..c.len()).map(|i| c.text(i).to_owned()).collect()
        }
        CatalogKind::Prompts => PromptCatalog::default_catalog().0,
    };
    let json = match a.which {
        CatalogKind::Queries => serde_json::from_str(QueryCatalog::default_json())
            .map_err(|e| Error::json("shipped catalog", e))?,
        CatalogKind::Prompts => to_json(&texts),
    };
    let rows = texts
        .iter()
        .enumerate()
        .map(|(i, t)| vec![i.to_string(), t.clone()])
        .collect();
    Ok(Output::new(json, vec!["index", "text"], rows, Format::Json))
}
