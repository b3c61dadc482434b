use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use silhuetta::carving::ConsistencyParams;
use silhuetta::hull::BoundingVolume;
use silhuetta::image::{read_color, write_pgm, write_ppm};
use silhuetta::mesh::{read_obj, signed_volume};
use silhuetta::metrics::{read_records, report};
use silhuetta::pipeline::{run_pipeline, InputSource, PipelineConfig};
use silhuetta::silhouette::{extract_silhouette, PreprocessConfig, StructuringElement};
use silhuetta::synth::{render_color, render_silhouette_exact, Scene};

#[derive(Parser)]
#[command(name = "silhuetta", version, about = "Multi-view shape-from-silhouette volume measurement")]
struct Cli {
    /// Render seed; overrides the scene's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (also accepted after `synth` and `reconstruct`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Voxel grid dimensions, e.g. 128x128x128.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<[usize; 3]>,
    /// Bounding volume in mm: x0,y0,z0,x1,y1,z1.
    #[arg(long, global = true, value_parser = parse_bv)]
    bv: Option<BoundingVolume>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene's color views, exact masks and ground-truth metadata.
    Synth {
        scene: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the silhouette mask of one image.
    Silhouette {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[command(flatten)]
        pre: PreprocessArgs,
    },
    /// Run the full reconstruction pipeline.
    Reconstruct(ReconstructArgs),
    /// Print the enclosed volume of a closed OBJ mesh.
    Volume { obj: PathBuf },
    /// Print the accuracy report for a CSV of volume records.
    Report { csv: PathBuf },
}

#[derive(Args)]
struct PreprocessArgs {
    /// Plain grayscale + Otsu, no normalization, morphology or blob selection.
    #[arg(long)]
    naive: bool,
    /// Invert grayscale (dark object on a bright background).
    #[arg(long)]
    invert: bool,
    /// Normalization window side (odd).
    #[arg(long, default_value_t = 3)]
    window: u32,
    /// Side of the square structuring element for the opening (odd).
    #[arg(long, default_value_t = 3)]
    se: u32,
}

impl PreprocessArgs {
    fn config(&self) -> Result<PreprocessConfig> {
        Ok(PreprocessConfig {
            window: self.window,
            se: StructuringElement::square(self.se)?,
            naive: self.naive,
            invert: self.invert,
            ..PreprocessConfig::default()
        })
    }
}

#[derive(Args)]
struct ReconstructArgs {
    /// Synthetic scene to render and reconstruct.
    #[arg(long, conflicts_with_all = ["rig", "images"], required_unless_present = "rig")]
    scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Camera rig JSON for image input.
    #[arg(long, requires = "images")]
    rig: Option<PathBuf>,
    /// Color images (PPM, or PGM promoted to gray RGB) in rig order.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    images: Vec<PathBuf>,
    /// Photo-consistency threshold: max per-channel standard deviation (0–255).
    #[arg(long, default_value_t = 25.0)]
    tau: f64,
    #[arg(long, default_value_t = 2)]
    min_views: usize,
    #[arg(long, default_value_t = 64)]
    max_iters: usize,
    /// Visual hull only.
    #[arg(long)]
    no_carve: bool,
    /// Also write a binary STL mesh.
    #[arg(long)]
    stl: bool,
    /// Reference volume in cm³ for the report (defaults to the scene's ground truth).
    #[arg(long)]
    real_volume: Option<f64>,
    /// Experiment label used in the report.
    #[arg(long)]
    experiment: Option<String>,
    #[command(flatten)]
    pre: PreprocessArgs,
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let dims = match parts.as_slice() {
        [n] => {
            let n = n.trim().parse::<usize>().map_err(|e| e.to_string())?;
            [n, n, n]
        }
        [a, b, c] => {
            let p = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
            [p(a)?, p(b)?, p(c)?]
        }
        _ => return Err(format!("expected N1xN2xN3, got '{s}'")),
    };
    if dims.iter().any(|&n| n < 8) {
        return Err(format!("grid dims must be ≥ 8 per axis, got '{s}'"));
    }
    Ok(dims)
}

fn parse_bv(s: &str) -> Result<BoundingVolume, String> {
    let v = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    if v.len() != 6 {
        return Err(format!("expected 6 comma-separated numbers, got {}", v.len()));
    }
    BoundingVolume::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]).map_err(|e| e.to_string())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SILHUETTA_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("SILHUETTA_THREADS='{v}' is not a count"))?;
        if n == 0 {
            bail!("SILHUETTA_THREADS must be ≥ 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

impl Cli {
    fn out_dir(&self, sub: &Option<PathBuf>) -> PathBuf {
        sub.clone().or_else(|| self.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn synth(cli: &Cli, path: &Path, out: &Path) -> Result<()> {
    let mut scene = Scene::load(path).with_context(|| format!("loading scene {}", path.display()))?;
    if let Some(seed) = cli.seed {
        scene.seed = seed;
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut views = Vec::new();
    for cam in scene.rig.cameras() {
        let image = out.join(format!("view_{}.ppm", cam.id));
        let mask_path = out.join(format!("truth_{}.pgm", cam.id));
        write_ppm(&render_color(&scene, cam), &image)?;
        let mask = render_silhouette_exact(&scene, cam);
        write_pgm(&mask.to_gray(), &mask_path)?;
        views.push(serde_json::json!({
            "id": cam.id,
            "image": image.file_name().unwrap().to_string_lossy(),
            "mask": mask_path.file_name().unwrap().to_string_lossy(),
            "foreground_pixels": mask.count(),
        }));
    }
    let meta = serde_json::json!({
        "scene": scene.name,
        "seed": scene.seed,
        "ground_truth_volume_cm3": scene.ground_truth_volume()?,
        "bounding_volume": scene.bounding_volume,
        "views": views,
    });
    let meta_path = out.join("metadata.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    println!("wrote {} views to {}", scene.rig.len(), out.display());
    Ok(())
}

fn reconstruct(cli: &Cli, args: &ReconstructArgs) -> Result<()> {
    let input = match (&args.scene, &args.rig) {
        (Some(scene), _) => InputSource::Scene(scene.clone()),
        (None, Some(rig)) => InputSource::Images { rig: rig.clone(), images: args.images.clone() },
        (None, None) => bail!("either --scene or --rig with --images is required"),
    };
    let mut cfg = PipelineConfig::new(input, cli.out_dir(&args.out));
    cfg.bounding_volume = cli.bv;
    if let Some(g) = cli.grid {
        cfg.grid_dims = g;
    }
    cfg.preprocess = args.pre.config()?;
    cfg.consistency = ConsistencyParams { tau: args.tau, min_views: args.min_views, max_iters: args.max_iters };
    cfg.carve = !args.no_carve;
    cfg.write_stl = args.stl;
    cfg.real_volume = args.real_volume;
    cfg.experiment = args.experiment.clone();
    cfg.seed = cli.seed;
    let run = run_pipeline(&cfg)?;
    let s = &run.summary;
    println!("hull: {} voxels, {:.6} cm3", s.hull_solid_voxels, s.hull_volume_cm3);
    if cfg.carve {
        println!(
            "carve: {} voxels removed in {} iterations{}",
            s.carved_voxels,
            s.carve_iterations,
            if s.carve_converged { "" } else { " (not converged)" }
        );
    }
    println!("volume: {:.6} cm3", s.final_volume_cm3);
    if let (Some(real), Some(re), Some(p)) = (s.real_volume_cm3, s.relative_error_pct, s.precision_pct) {
        println!("real: {real:.6} cm3, RE {re:.2}%, precision {p:.2}%");
    }
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Synth { scene, out } => synth(&cli, scene, &cli.out_dir(out)),
        Command::Silhouette { input, output, pre } => {
            let img = read_color(input).with_context(|| format!("reading {}", input.display()))?;
            let mask = extract_silhouette(&img, &pre.config()?).with_context(|| format!("segmenting {}", input.display()))?;
            write_pgm(&mask.to_gray(), output)?;
            println!("{} foreground pixels", mask.count());
            Ok(())
        }
        Command::Reconstruct(args) => reconstruct(&cli, args),
        Command::Volume { obj } => {
            let mesh = read_obj(obj).with_context(|| format!("reading {}", obj.display()))?;
            println!("{:.6} cm3", signed_volume(&mesh)?);
            Ok(())
        }
        Command::Report { csv } => {
            let file = fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
            print!("{}", report(&read_records(file)?)?.to_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
