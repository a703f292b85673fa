use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use femforge::input::{FsResolver, InputTree};
use femforge::runtime::{run, FactoryRegistry, RunOptions};

/// Run a simulation described by a GetPot-style input file.
#[derive(Parser, Debug)]
#[command(name = "femforge", version)]
struct Cli {
    #[arg(long)]
    input: PathBuf,
    /// Gmsh mesh replacing the one named in the input.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Override an input key, e.g. `Physics/Poisson/kappa=2`.
    #[arg(long = "redirect-key", value_name = "PATH=VALUE")]
    redirect_key: Vec<String>,
    /// Write each quadratic quad as four sub-quads.
    #[arg(long)]
    vtk_subdivide: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> femforge::Result<()> {
    let text = std::fs::read_to_string(&cli.input)
        .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read '{}': {e}", cli.input.display())))?;
    let mut tree = InputTree::parse_named(&cli.input.to_string_lossy(), &text, &FsResolver)?;
    for kv in &cli.redirect_key {
        let (path, value) = kv
            .split_once('=')
            .ok_or_else(|| femforge::Error::config(kv.as_str(), "expected --redirect-key PATH=VALUE"))?;
        tree.set(path.trim(), value.trim());
    }
    let opts = RunOptions {
        base_dir: cli.input.parent().map(PathBuf::from).unwrap_or_default(),
        mesh_file: cli.mesh.clone(),
        vtk_subdivide: cli.vtk_subdivide,
    };
    let summary = run(&tree, &FactoryRegistry::with_defaults(), &opts)?;
    for (name, value) in &summary.qoi_values {
        println!("{name} = {value:.12e}");
    }
    for path in &summary.artifacts {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}
