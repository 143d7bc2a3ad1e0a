//! `nyonscope` command line. Exit codes: 0 success, 1 usage error, 2 parse
//! failure, 3 crypto failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nyonscope::artifacts::{assemble_bundle, BundleOptions, DiagnosticLevel, SchemaProfile};
use nyonscope::canonical::to_canonical_json;
use nyonscope::chronicle::{build_timeline, export_gpx, tracks_for_bundle, DEFAULT_GAP_S};
use nyonscope::image::parse_partition_table;
use nyonscope::luks::{decrypt_payload, hunt_keyfiles, parse_luks_header, unlock, LuksError, PHDR_LEN};
use nyonscope::report::render_report;
use nyonscope::sentry::{run_checks, SentryConfig};
use nyonscope::{CaseBundle, EvidenceImage, FileTree, Generation, PartitionRole};
use nyonscope_forge::{emit_case, emit_image, forge_case, ForgeOptions, ImageOptions, Scale, TimestampMode};

/// Overrides the built-in tracking.db schema profile.
const SCHEMA_PROFILE_ENV: &str = "NYONSCOPE_SCHEMA_PROFILE";
const KEYFILE_BYTES: u64 = 32;

#[derive(Parser)]
#[command(name = "nyonscope", version, about = "Forensic extraction for Nyon-style eBike board computers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum GenerationArg {
    Auto,
    Gen1,
    Gen2,
}

#[derive(Copy, Clone, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Copy, Clone, ValueEnum)]
enum TamperArg {
    Reversed,
    Plausible,
    Duplicate,
}

#[derive(Subcommand)]
enum Command {
    /// List the partitions of a raw image.
    Partitions {
        image: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also hash every region (slow on full-size dumps).
        #[arg(long)]
        hash: bool,
    },
    /// Unlock the encrypted userdata region and write its plaintext.
    Unlock {
        image: PathBuf,
        #[arg(long, conflicts_with = "hunt", required_unless_present = "hunt")]
        keyfile: Option<PathBuf>,
        /// Directory searched for 32-byte keyfiles.
        #[arg(long)]
        hunt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode every artifact of an extracted file tree into a bundle.
    Parse {
        tree: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        generation: GenerationArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge all timestamped records of a bundle into JSON lines.
    Timeline {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one trip of a bundle as GPX.
    ExportGpx {
        bundle: PathBuf,
        #[arg(long)]
        trip: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the consistency rules and print the findings as JSON.
    TamperCheck {
        bundle: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic case with its ground-truth manifest.
    Forge(ForgeArgs),
    /// Render a report; the format follows the extension of --out (.json or .md).
    Report {
        bundle: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ForgeArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    generation: GenerationArg,
    /// Also build a raw image with an encrypted userdata region (gen-2).
    #[arg(long)]
    image: bool,
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
    #[arg(long, default_value_t = 1)]
    decoys: usize,
    /// Forge extra GPS fixes into the EBike database (gen-1).
    #[arg(long, value_enum)]
    tamper: Option<TamperArg>,
    #[arg(long)]
    trips: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn parse_failure(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn crypto(message: impl Into<String>) -> Failure {
    Failure { code: 3, message: message.into() }
}

type Outcome = Result<(), Failure>;

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| usage(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_bundle(path: &Path) -> Result<CaseBundle, Failure> {
    let bytes = fs::read(path).map_err(|e| parse_failure(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| parse_failure(format!("{}: not a bundle: {e}", path.display())))
}

fn read_config(path: Option<&Path>) -> Result<SentryConfig, Failure> {
    let Some(path) = path else { return Ok(SentryConfig::default()) };
    let bytes = fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| usage(format!("{}: invalid sentry config: {e}", path.display())))
}

fn open_image(path: &Path) -> Result<EvidenceImage, Failure> {
    EvidenceImage::open_deferred(path).map_err(|e| parse_failure(e.to_string()))
}

fn partitions(image: &Path, json: bool, hash: bool) -> Outcome {
    let image = open_image(image)?;
    let map = parse_partition_table(&image).map_err(|e| parse_failure(e.to_string()))?;
    for w in &map.warnings {
        warn!("{w}");
    }
    if json {
        let mut value = serde_json::to_value(&map).expect("partition map serializes");
        if hash {
            let records = map.records(&image).map_err(|e| parse_failure(e.to_string()))?;
            value["records"] = serde_json::to_value(records).expect("records serialize");
        }
        println!("{}", to_canonical_json(&value).expect("value serializes"));
        return Ok(());
    }
    println!("{:<20} {:<20} {:>14} {:>14}", "role", "name", "offset", "size");
    for e in &map.entries {
        let name = e.name.as_deref().unwrap_or("-");
        println!("{:<20} {:<20} {:>#14x} {:>#14x}", e.role.as_str(), name, e.offset, e.size);
        if hash {
            println!("  sha256 {}", image.region_sha256(e).map_err(|e| parse_failure(e.to_string()))?);
        }
    }
    Ok(())
}

fn unlock_image(image: &Path, keyfile: Option<&Path>, hunt: Option<&Path>, out: &Path) -> Outcome {
    let image = open_image(image)?;
    let map = parse_partition_table(&image).map_err(|e| parse_failure(e.to_string()))?;
    let userdata = map
        .find_role(PartitionRole::UserdataEncrypted)
        .ok_or_else(|| parse_failure("no encrypted userdata region found"))?;
    let head = image.read_bytes(userdata.offset, PHDR_LEN).map_err(|e| parse_failure(e.to_string()))?;
    let header = parse_luks_header(&head).map_err(|e| crypto(e.to_string()))?;

    let candidates: Vec<PathBuf> = match (keyfile, hunt) {
        (Some(k), _) => vec![k.to_path_buf()],
        (None, Some(dir)) => {
            if !dir.is_dir() {
                return Err(usage(format!("{}: not a directory", dir.display())));
            }
            hunt_keyfiles(&[FileTree::new(dir)], KEYFILE_BYTES).into_iter().map(|(_, p)| p).collect()
        }
        (None, None) => return Err(usage("one of --keyfile or --hunt is required")),
    };
    if candidates.is_empty() {
        return Err(crypto(format!("no {KEYFILE_BYTES}-byte keyfile candidates found")));
    }

    for path in &candidates {
        let key = fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut volume = image.read_region(userdata).map_err(|e| parse_failure(e.to_string()))?;
        match unlock(&header, &mut volume, &key) {
            Ok(mk) => {
                info!("{} unlocked slot {:?}", path.display(), mk.slot());
                // Plaintext only appears under its final name once complete.
                let partial = out.with_extension("partial");
                if image.is_same_file(out) || image.is_same_file(&partial) {
                    return Err(usage(format!("{}: refusing to write over the evidence image", out.display())));
                }
                if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(|e| usage(format!("{}: {e}", parent.display())))?;
                }
                let result = decrypt_payload(&image, userdata, &header, &mk, &partial);
                let report = match result {
                    Ok(r) => r,
                    Err(e) => {
                        let _ = fs::remove_file(&partial);
                        return Err(match e {
                            LuksError::Io(_) | LuksError::Image(_) => parse_failure(e.to_string()),
                            other => crypto(other.to_string()),
                        });
                    }
                };
                fs::rename(&partial, out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
                let summary = serde_json::json!({
                    "keyfile": path.display().to_string(),
                    "slot": mk.slot(),
                    "bytes": report.bytes,
                    "sha256": report.sha256,
                });
                println!("{}", to_canonical_json(&summary).expect("summary serializes"));
                return Ok(());
            }
            Err(LuksError::WrongKey) => warn!("{}: wrong key", path.display()),
            Err(e) => return Err(crypto(e.to_string())),
        }
    }
    Err(crypto(format!("wrong key: none of {} candidate(s) unlocked the volume", candidates.len())))
}

fn parse_tree(tree: &Path, generation: GenerationArg, out: &Path) -> Outcome {
    if !tree.is_dir() {
        return Err(parse_failure(format!("{}: not a directory", tree.display())));
    }
    let mut options = BundleOptions {
        generation: match generation {
            GenerationArg::Auto => None,
            GenerationArg::Gen1 => Some(Generation::Gen1),
            GenerationArg::Gen2 => Some(Generation::Gen2),
        },
        ..Default::default()
    };
    if let Some(profile) = std::env::var_os(SCHEMA_PROFILE_ENV) {
        options.tracking_profile = SchemaProfile::load(Path::new(&profile))
            .map_err(|e| parse_failure(format!("{SCHEMA_PROFILE_ENV}: {e}")))?;
    }
    let bundle = assemble_bundle(&FileTree::new(tree), &options);
    if bundle.generation == Generation::Unknown {
        return Err(parse_failure(format!("{}: no known artifact layout", tree.display())));
    }
    for d in &bundle.diagnostics {
        if d.level == DiagnosticLevel::Error {
            warn!("{}: {}", d.path.as_deref().unwrap_or("-"), d.message);
        }
    }
    write(out, to_canonical_json(&bundle).expect("bundle serializes"))
}

fn forge(args: ForgeArgs) -> Outcome {
    let ForgeArgs { seed, generation, image, scale, decoys, tamper, trips, out } = args;
    let out = out.as_path();
    let generation = match generation {
        GenerationArg::Gen1 => Generation::Gen1,
        GenerationArg::Gen2 => Generation::Gen2,
        GenerationArg::Auto => return Err(usage("--generation must be gen1 or gen2")),
    };
    if image && generation != Generation::Gen2 {
        return Err(usage("--image needs --generation gen2: gen-1 units have no modelled partition layout"));
    }
    if tamper.is_some() && generation != Generation::Gen1 {
        return Err(usage("--tamper edits the gen-1 EBike database and needs --generation gen1"));
    }
    let mut options = ForgeOptions {
        tamper: tamper.map(|t| match t {
            TamperArg::Reversed => TimestampMode::Reversed,
            TamperArg::Plausible => TimestampMode::Plausible,
            TamperArg::Duplicate => TimestampMode::Duplicate,
        }),
        ..Default::default()
    };
    if let Some(n) = trips {
        options.trips = n;
    }
    let case = forge_case(seed, generation, &options);
    let manifest = if image {
        let scale = match scale {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Full => Scale::Full,
        };
        emit_image(&case, &ImageOptions { scale, decoys }, out).map_err(|e| usage(e.to_string()))?
    } else {
        let root = out.join(nyonscope_forge::image::TREE_DIR);
        if root.exists() {
            fs::remove_dir_all(&root).map_err(|e| usage(format!("{}: {e}", root.display())))?;
        }
        emit_case(&case, &root).map_err(|e| usage(e.to_string()))?.1
    };
    write(&out.join("manifest.json"), to_canonical_json(&manifest).expect("manifest serializes"))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Partitions { image, json, hash } => partitions(&image, json, hash),
        Command::Unlock { image, keyfile, hunt, out } => unlock_image(&image, keyfile.as_deref(), hunt.as_deref(), &out),
        Command::Parse { tree, generation, out } => parse_tree(&tree, generation, &out),
        Command::Timeline { bundle, out } => {
            let timeline = build_timeline(&read_bundle(&bundle)?);
            write(&out, timeline.to_json_lines())
        }
        Command::ExportGpx { bundle, trip, out } => {
            let bundle = read_bundle(&bundle)?;
            let tracks = tracks_for_bundle(&bundle, DEFAULT_GAP_S);
            let track = tracks
                .iter()
                .find(|t| t.trip_id.as_deref() == Some(trip.as_str()))
                .ok_or_else(|| usage(format!("no trip {trip:?}; bundle has {} track(s)", tracks.len())))?;
            write(&out, export_gpx(track).map_err(|e| usage(e.to_string()))?)
        }
        Command::TamperCheck { bundle, config } => {
            let findings = run_checks(&read_bundle(&bundle)?, &read_config(config.as_deref())?);
            println!("{}", to_canonical_json(&findings).expect("findings serialize"));
            Ok(())
        }
        Command::Forge(args) => forge(args),
        Command::Report { bundle, config, out } => {
            let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext != "json" && ext != "md" {
                return Err(usage("--out must end in .json or .md"));
            }
            let bundle = read_bundle(&bundle)?;
            let findings = run_checks(&bundle, &read_config(config.as_deref())?);
            let report = render_report(&bundle, &build_timeline(&bundle), &findings);
            write(&out, if ext == "json" { report.to_json() } else { report.to_markdown() })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("nyonscope: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
