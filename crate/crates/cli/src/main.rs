mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Digital twin of a fiber-pigtailed micropillar single-photon source.
#[derive(Parser)]
#[command(name = "pigtail", version)]
pub struct Cli {
    /// RNG seed for every simulated quantity.
    #[arg(long, global = true, default_value_t = pigtail_core::DEFAULT_SEED)]
    pub seed: u64,
    /// Key-value config file (default: $PIGTAIL_CONFIG, else built-in defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Coupling efficiency over pillar diameter, gap and lateral offset.
    CouplingMap {
        /// Diameter axis as start:stop:step (µm).
        #[arg(long, default_value = "1.5:5.0:0.05")]
        diameters: String,
        /// Comma-separated gaps (µm).
        #[arg(long, default_value = "0.23,0.5,1,1.5,2,2.5,3,3.5")]
        gaps: String,
        /// Offset axis as start:stop:step (µm).
        #[arg(long, default_value = "0:1.5:0.25")]
        offsets: String,
        /// Samples per side of the 12 µm simulation grid.
        #[arg(long, default_value_t = 256)]
        grid_samples: usize,
    },
    /// Land, align and secure one seeded session.
    AlignDemo,
    /// Align, secure and cool one seeded session, recording spectra.
    CooldownDemo {
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Base temperature (K).
        #[arg(long, default_value_t = pigtail_core::rig::BASE_TEMPERATURE_K)]
        target_k: f64,
    },
    /// Fringe gap and mode dips of a spectrum CSV.
    AnalyzeSpectrum {
        file: PathBuf,
        /// Temperature the mode wavelengths are expected at (K).
        #[arg(long, default_value_t = 300.0)]
        temperature_k: f64,
    },
    /// g²(0), HOM visibility and indistinguishability from time-tag files.
    AnalyzeTags {
        /// One HBT and/or one HOM file, binary or CSV.
        #[arg(required = true, num_args = 1..=2)]
        files: Vec<PathBuf>,
    },
    /// Infer the pillar-to-fiber coupling from an efficiency budget file.
    Budget {
        file: PathBuf,
        /// Skip the comparison with the simulated coupling.
        #[arg(long)]
        no_simulation: bool,
    },
    /// Simulate HBT, HOM and saturation measurements and analyze them.
    PhotonRun,
    /// Simulate and analyze long-term rate and indistinguishability series.
    StabilityRun,
    /// Print the effective configuration in config-file syntax.
    ShowConfig,
    /// Run the session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pigtail: {}", e.message);
            ExitCode::from(e.kind as u8)
        }
    }
}
