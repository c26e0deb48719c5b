//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::atlas::{inpaint_nn, project_mask_to_uv, render_part, scatter_coords};
use crate::error::{Error, Result};
use crate::io;
use crate::iuv::{flow_warp, NUM_PARTS};
use crate::losses::{self, IuvLossInputs, IuvLossWeights, LogitStack};
use crate::mask_ops::{free_form_mask, refine_mask, BrushSpec, RefineParams};
use crate::metrics::{aggregate, evaluate_pair, GarmentMasks};
use crate::pipeline::DEFAULT_COARSE_RESOLUTION;
use crate::raster::{BinaryMask, Plane, RealPlane};
use crate::synth::{generate, SynthSpec};
use crate::warp::{warp_coarse_mask, warp_garment, WarpInputs, WarpOptions, DEFAULT_RESOLUTION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "densewarp", version, about = "DensePose-guided garment warping toolkit")]
pub struct Cli {
    /// Worker threads for per-pixel parallelism; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Warp a garment onto a person through their DensePose charts.
    Warp(WarpArgs),
    /// Garment-mask utilities.
    #[command(subcommand)]
    Mask(MaskCommand),
    /// Score predicted images against ground truth.
    Metrics(MetricsArgs),
    /// Evaluate a training loss on JSON-encoded planes.
    LossEval(LossArgs),
    /// Write a synthetic garment/person fixture.
    Synth(SynthArgs),
    /// Render one part of a garment's UV atlas for inspection.
    UvDump(UvDumpArgs),
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub garment: PathBuf,
    #[arg(long)]
    pub garment_iuv: PathBuf,
    #[arg(long)]
    pub garment_mask: PathBuf,
    #[arg(long)]
    pub person_iuv: PathBuf,
    #[arg(long)]
    pub query_mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION, value_parser = positive)]
    pub resolution: usize,
    /// Skip the nearest-neighbor fill of query texels.
    #[arg(long)]
    pub no_inpaint: bool,
    /// Scatter colors instead of coordinates.
    #[arg(long)]
    pub no_grid_warp: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_validity: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MaskCommand {
    /// Project the garment mask onto the person without filling.
    Coarse {
        #[arg(long)]
        garment_mask: PathBuf,
        #[arg(long)]
        garment_iuv: PathBuf,
        #[arg(long)]
        person_iuv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COARSE_RESOLUTION, value_parser = positive)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Close, fill holes and smooth a coarse mask.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        close: usize,
        #[arg(long, default_value_t = 64)]
        min_hole: usize,
        #[arg(long, default_value_t = 3)]
        smooth: usize,
    },
    /// Draw a random brush-stroke mask.
    Freeform {
        #[arg(long, value_parser = positive)]
        w: usize,
        #[arg(long, value_parser = positive)]
        h: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long, requires = "gt_mask_dir")]
    pub warped_mask_dir: Option<PathBuf>,
    #[arg(long, requires = "warped_mask_dir")]
    pub gt_mask_dir: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Ce,
    L1,
    Tv,
    Bce,
    L2reg,
    Liuv,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub kind: LossKind,
    /// JSON file holding the planes the loss needs.
    #[arg(long)]
    pub inputs: PathBuf,
    /// FLO1 flow applied to the predictions before comparison (ce, l1, liuv).
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Five comma-separated weights for liuv: cls,u,v,tv_u,tv_v.
    #[arg(long, value_parser = five_weights)]
    pub weights: Option<[f64; 5]>,
    #[arg(long)]
    pub ignore_background: bool,
    /// Print `{"loss": value}` instead of the bare number.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct UvDumpArgs {
    #[arg(long)]
    pub garment_iuv: PathBuf,
    #[arg(long)]
    pub garment_mask: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=NUM_PARTS as i64))]
    pub part: u8,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION, value_parser = positive)]
    pub resolution: usize,
    /// Fill the atlas against this person before rendering.
    #[arg(long, requires = "query_mask")]
    pub person_iuv: Option<PathBuf>,
    #[arg(long, requires = "person_iuv")]
    pub query_mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn five_weights(s: &str) -> std::result::Result<[f64; 5], String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 5 weights, found {}", v.len()))
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

/// Parses `args` (including the program name), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.log_level);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.map_or(0, usize::from))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Quiet => log::LevelFilter::Error,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    // a second call in the same process keeps the first logger
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(filter);
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Warp(a) => warp(a),
        Command::Mask(m) => mask(m),
        Command::Metrics(a) => metrics(a),
        Command::LossEval(a) => loss_eval(a),
        Command::Synth(a) => synth(a),
        Command::UvDump(a) => uv_dump(a),
    }
}

fn warp(a: &WarpArgs) -> Result<()> {
    let garment = io::load_rgb(&a.garment)?;
    let garment_dp = io::load_iuv(&a.garment_iuv)?;
    let garment_mask = io::load_mask(&a.garment_mask)?;
    let person_dp = io::load_iuv(&a.person_iuv)?;
    let query_mask = io::load_mask(&a.query_mask)?;
    let inputs = WarpInputs {
        garment: &garment,
        garment_dp: &garment_dp,
        garment_mask: &garment_mask,
        person_dp: &person_dp,
        query_mask: &query_mask,
    };
    let opts = WarpOptions {
        resolution: a.resolution,
        use_inpaint: !a.no_inpaint,
        use_grid: !a.no_grid_warp,
    };
    let (result, report) = warp_garment(&inputs, &opts)?;
    log::info!(
        "warped {} of {} query pixels; filled {} texels",
        result.validity.count(),
        query_mask.count(),
        report.filled
    );
    io::save_rgb(&result.image, &a.out)?;
    if let Some(path) = &a.out_validity {
        io::save_mask(&result.validity, path)?;
    }
    Ok(())
}

fn mask(m: &MaskCommand) -> Result<()> {
    match m {
        MaskCommand::Coarse {
            garment_mask,
            garment_iuv,
            person_iuv,
            resolution,
            out,
        } => {
            let g_mask = io::load_mask(garment_mask)?;
            let g_dp = io::load_iuv(garment_iuv)?;
            let p_dp = io::load_iuv(person_iuv)?;
            let coarse = warp_coarse_mask(&g_mask, &g_dp, &p_dp, *resolution)?;
            log::info!("coarse mask covers {} pixels", coarse.count());
            io::save_mask(&coarse, out)
        }
        MaskCommand::Refine {
            input,
            out,
            close,
            min_hole,
            smooth,
        } => {
            let coarse = io::load_mask(input)?;
            let params = RefineParams {
                close_radius: *close,
                min_hole_area: *min_hole,
                smooth_radius: *smooth,
            };
            io::save_mask(&refine_mask(&coarse, &params), out)
        }
        MaskCommand::Freeform { w, h, seed, out } => {
            let mask = free_form_mask(*w, *h, &BrushSpec::with_seed(*seed))?;
            io::save_mask(&mask, out)
        }
    }
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let names = png_names(&a.pred_dir)?;
    let mut reports = Vec::with_capacity(names.len());
    for name in &names {
        let pred = io::load_rgb(a.pred_dir.join(name))?;
        let gt = io::load_rgb(a.gt_dir.join(name))?;
        let report = match (&a.warped_mask_dir, &a.gt_mask_dir) {
            (Some(wd), Some(gd)) => {
                let warped = io::load_mask(wd.join(name))?;
                let truth = io::load_mask(gd.join(name))?;
                let masks = GarmentMasks {
                    warped: &warped,
                    ground_truth: &truth,
                };
                evaluate_pair(&pred, &gt, Some(masks))
            }
            _ => evaluate_pair(&pred, &gt, None),
        }
        .map_err(|e| e.in_file(a.pred_dir.join(name)))?;
        log::debug!("{name}: ssim {:.6}", report.ssim);
        reports.push(report);
    }
    let summary = aggregate(&reports)?;
    let text = serde_json::to_string_pretty(&summary).expect("report serializes");
    match &a.json {
        Some(path) => fs::write(path, text + "\n").map_err(|e| Error::io(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Planes for `loss-eval`, each row-major with `width * height` entries.
/// Logits are class-major: 25 consecutive planes.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossInputs {
    width: usize,
    height: usize,
    logits: Option<Vec<f64>>,
    labels: Option<Vec<u8>>,
    pred: Option<Vec<f64>>,
    target: Option<Vec<f64>>,
    mask: Option<Vec<u8>>,
    plane: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    u: Option<Vec<f64>>,
    v: Option<Vec<f64>>,
    u_target: Option<Vec<f64>>,
    v_target: Option<Vec<f64>>,
}

impl LossInputs {
    fn take<T>(field: &mut Option<Vec<T>>, name: &str) -> Result<Vec<T>> {
        field
            .take()
            .ok_or_else(|| Error::format(name, "required by this loss kind"))
    }

    fn real(&mut self, name: &str) -> Result<RealPlane> {
        let data = match name {
            "pred" => Self::take(&mut self.pred, name)?,
            "target" => Self::take(&mut self.target, name)?,
            "plane" => Self::take(&mut self.plane, name)?,
            "alpha" => Self::take(&mut self.alpha, name)?,
            "u" => Self::take(&mut self.u, name)?,
            "v" => Self::take(&mut self.v, name)?,
            "u_target" => Self::take(&mut self.u_target, name)?,
            "v_target" => Self::take(&mut self.v_target, name)?,
            _ => unreachable!("unknown plane {name}"),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(name, "non-finite value"));
        }
        Plane::from_vec(self.width, self.height, data).map_err(|e| relabel(e, name))
    }

    fn labels(&mut self) -> Result<Plane<u8>> {
        let data = Self::take(&mut self.labels, "labels")?;
        Plane::from_vec(self.width, self.height, data).map_err(|e| relabel(e, "labels"))
    }

    fn binary(&mut self, name: &str) -> Result<Option<BinaryMask>> {
        let Some(data) = self.mask.take() else {
            return Ok(None);
        };
        let bits = data
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::format(name, format!("expected 0 or 1, found {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Plane::from_vec(self.width, self.height, bits)
            .map(Some)
            .map_err(|e| relabel(e, name))
    }

    fn logits(&mut self) -> Result<LogitStack> {
        let data = Self::take(&mut self.logits, "logits")?;
        LogitStack::from_class_major(self.width, self.height, data).map_err(|e| relabel(e, "logits"))
    }
}

fn relabel(e: Error, field: &str) -> Error {
    match e {
        Error::Format { .. } => e,
        other => Error::format(field, other.to_string()),
    }
}

fn loss_eval(a: &LossArgs) -> Result<()> {
    let text = fs::read_to_string(&a.inputs).map_err(|e| Error::io(&a.inputs, e))?;
    let mut inp: LossInputs =
        serde_json::from_str(&text).map_err(|e| Error::format("inputs", e.to_string()).in_file(&a.inputs))?;
    let flow = a.flow.as_ref().map(io::load_flow).transpose()?;
    let warp_real = |p: RealPlane| match &flow {
        Some(f) => flow_warp(&p, f),
        None => Ok(p),
    };
    let value = (|| -> Result<f64> {
        Ok(match a.kind {
            LossKind::Ce => {
                let mut logits = inp.logits()?;
                if let Some(f) = &flow {
                    logits = logits.warp(f)?;
                }
                losses::cross_entropy(&logits, &inp.labels()?, a.ignore_background)?.value()
            }
            LossKind::L1 => {
                let pred = warp_real(inp.real("pred")?)?;
                let target = inp.real("target")?;
                let mask = inp.binary("mask")?;
                losses::l1(&pred, &target, mask.as_ref())?.value()
            }
            LossKind::Tv => losses::total_variation(&inp.real("plane")?)?.value(),
            LossKind::Bce => {
                let pred = inp.real("pred")?;
                let target = inp
                    .binary("mask")?
                    .ok_or_else(|| Error::format("mask", "required by this loss kind"))?;
                losses::bce(&pred, &target)?.value()
            }
            LossKind::L2reg => losses::l2_mask_reg(&inp.real("alpha")?)?.value(),
            LossKind::Liuv => {
                let logits = inp.logits()?;
                let u_raw = inp.real("u")?;
                let v_raw = inp.real("v")?;
                let (logits_w, u_w, v_w) = match &flow {
                    Some(f) => (logits.warp(f)?, flow_warp(&u_raw, f)?, flow_warp(&v_raw, f)?),
                    None => (logits, u_raw.clone(), v_raw.clone()),
                };
                let weights = match &a.weights {
                    Some(w) => IuvLossWeights::from_slice(w.as_slice())?,
                    None => IuvLossWeights::default(),
                };
                let inputs = IuvLossInputs {
                    i_logits_warped: &logits_w,
                    u_warped: &u_w,
                    v_warped: &v_w,
                    u_raw: &u_raw,
                    v_raw: &v_raw,
                    i_target: &inp.labels()?,
                    u_target: &inp.real("u_target")?,
                    v_target: &inp.real("v_target")?,
                };
                let parts = losses::l_iuv(&inputs, &weights)?;
                log::info!(
                    "cls {} l1_u {} l1_v {} tv_u {} tv_v {}",
                    parts.cls,
                    parts.l1_u,
                    parts.l1_v,
                    parts.tv_u,
                    parts.tv_v
                );
                parts.total
            }
        })
    })()
    .map_err(|e| e.in_file(&a.inputs))?;
    if a.json {
        println!("{}", json!({ "loss": value }));
    } else {
        println!("{value}");
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).map_err(|e| Error::io(&a.spec, e))?;
    let spec = SynthSpec::from_json(&text).map_err(|e| e.in_file(&a.spec))?;
    let pair = generate(&spec).map_err(|e| e.in_file(&a.spec))?;
    pair.save(&a.out_dir)?;
    log::info!("wrote fixture to {}", a.out_dir.display());
    Ok(())
}

fn uv_dump(a: &UvDumpArgs) -> Result<()> {
    let g_dp = io::load_iuv(&a.garment_iuv)?;
    let g_mask = io::load_mask(&a.garment_mask)?;
    let mut atlas = scatter_coords(&g_dp, &g_mask, a.resolution)?;
    if let (Some(p), Some(q)) = (&a.person_iuv, &a.query_mask) {
        let p_dp = io::load_iuv(p)?;
        let m_q = io::load_mask(q)?;
        let query = project_mask_to_uv(&p_dp, &m_q, a.resolution)?;
        atlas = inpaint_nn(&atlas, &query)?.0;
    }
    log::info!(
        "part {}: {} of {} texels valid",
        a.part,
        atlas.valid_in_part(a.part),
        a.resolution * a.resolution
    );
    io::save_rgb(&render_part(&atlas, a.part), &a.out)
}
