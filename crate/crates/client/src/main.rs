use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use stlut_api::*;
use stlut_client::{Client, ClientError};

/// Online video enhancement with spatial-temporal look-up tables.
///
/// Every command is executed by a running `stlut-server`.
#[derive(Parser)]
#[command(name = "stlut", version)]
struct Cli {
    /// Server address, `host:port` or URL.
    #[arg(long, global = true, env = "STLUT_SERVER", default_value = DEFAULT_ADDR)]
    server: String,
    /// Print the raw JSON reply instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance the luma of a raw YUV420p stream.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Directory holding the three tables. Not needed with --direct.
        #[arg(long, required_unless_present = "direct")]
        luts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of enhanced frames kept as references.
        #[arg(long)]
        window: Option<usize>,
        /// Evaluate the enhancement networks instead of the tables.
        #[arg(long)]
        direct: bool,
    },
    /// Convert the enhancement networks of a weights file into tables.
    BuildLuts {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interval_s: Option<u32>,
        #[arg(long)]
        interval_t1: Option<u32>,
        #[arg(long)]
        interval_t2: Option<u32>,
    },
    /// Per-frame luma PSNR and SSIM of two streams.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Print per-frame values as CSV.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        layout: Layout,
    },
    /// Time the per-frame pipeline and report latency.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        luts: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        /// Also time the network path.
        #[arg(long)]
        compare_direct: bool,
        /// Leading frames left out of the aggregates.
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Write a weights file with random or all-zero parameters.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0, conflicts_with = "zero")]
        seed: u64,
        /// All-zero weights; the enhancer then returns its input.
        #[arg(long)]
        zero: bool,
    },
    /// Check that the server is up.
    Health,
}

/// Layout of the compared streams. One of the two is needed; the server
/// rejects a request with neither.
#[derive(Args)]
#[group(multiple = false)]
struct Layout {
    /// Sidecar of the reference stream.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Frame size `WIDTHxHEIGHT`; the frame count follows from the file size.
    #[arg(long)]
    size: Option<String>,
}

fn abs(p: PathBuf) -> PathBuf {
    std::path::absolute(&p).unwrap_or(p)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let runtime = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

async fn run(cli: Cli) -> Result<(), ClientError> {
    let client = Client::new(&cli.server);
    let json = cli.json;
    match cli.command {
        Command::Enhance {
            input,
            sidecar,
            weights,
            luts,
            out,
            window,
            direct,
        } => {
            let r = client
                .enhance(&EnhanceRequest {
                    input: abs(input),
                    sidecar: abs(sidecar),
                    weights: abs(weights),
                    luts: luts.map(abs),
                    out: abs(out),
                    window,
                    direct,
                })
                .await?;
            emit(json, &r, || {
                println!(
                    "enhanced {} frames ({}x{}, {:?}) in {:.2} s -> {}",
                    r.frames,
                    r.width,
                    r.height,
                    r.mode,
                    r.seconds,
                    r.out.display()
                );
                println!(
                    "future-frame reads: {}, peak reference cache: {} bytes",
                    r.future_reads, r.peak_cache_bytes
                );
            });
        }
        Command::BuildLuts {
            weights,
            out,
            interval_s,
            interval_t1,
            interval_t2,
        } => {
            let r = client
                .build_luts(&BuildLutsRequest {
                    weights: abs(weights),
                    out: abs(out),
                    interval_s,
                    interval_t1,
                    interval_t2,
                })
                .await?;
            emit(json, &r, || {
                for f in &r.files {
                    println!(
                        "{:<3} D={} interval={:<3} entries={:<10} bytes={:<10} {}",
                        f.kind.to_string(),
                        f.dims,
                        f.interval,
                        f.entries,
                        f.bytes,
                        f.path.display()
                    );
                }
                println!(
                    "total {} bytes ({:.2} MB) in {:.1} s",
                    r.total_bytes,
                    r.total_bytes as f64 / 1e6,
                    r.seconds
                );
            });
        }
        Command::Metrics {
            reference,
            test,
            csv,
            layout,
        } => {
            let r = client
                .metrics(&MetricsRequest {
                    reference: abs(reference),
                    test: abs(test),
                    sidecar: layout.sidecar.map(abs),
                    size: layout.size,
                })
                .await?;
            if csv && !json {
                print!("{}", r.to_csv());
            } else {
                emit(json, &r, || {
                    println!(
                        "frames {}  mean PSNR {:.4} dB  mean SSIM {:.6}",
                        r.frames.len(),
                        r.mean_psnr,
                        r.mean_ssim
                    );
                });
            }
        }
        Command::Bench {
            input,
            sidecar,
            weights,
            luts,
            fps,
            compare_direct,
            warmup,
            window,
        } => {
            let r = client
                .bench(&BenchRequest {
                    input: abs(input),
                    sidecar: abs(sidecar),
                    weights: abs(weights),
                    luts: abs(luts),
                    fps: Some(fps),
                    warmup,
                    window,
                    compare_direct,
                })
                .await?;
            emit(json, &r, || {
                print_latency(&r.lut);
                if let Some(d) = &r.direct {
                    print_latency(d);
                }
                if let (Some(f), Some(e)) = (r.frame_speedup, r.enhance_speedup) {
                    println!("speedup over direct: frame {f:.2}x, enhancement stage {e:.2}x");
                }
            });
        }
        Command::InitWeights { out, seed, zero } => {
            let r = client
                .init_weights(&InitWeightsRequest {
                    out: abs(out),
                    seed,
                    zero,
                })
                .await?;
            emit(json, &r, || {
                println!("wrote {} tensors ({} bytes) to {}", r.tensors, r.bytes, r.path.display());
            });
        }
        Command::Health => {
            let r = client.health().await?;
            emit(json, &r, || {
                println!("{} (version {}, {} open sessions)", r.status, r.version, r.sessions)
            });
        }
    }
    Ok(())
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce()) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("reply serializes"));
    } else {
        text();
    }
}

fn print_latency(r: &LatencyReport) {
    println!(
        "{:?}: {} frames ({} warmup), T_process mean {:.2} ms p95 {:.2} ms, \
         N_f {} at {} fps -> T_wait {:.2} ms, latency mean {:.2} ms p95 {:.2} ms, {:.2} fps",
        r.mode,
        r.frames,
        r.warmup,
        r.mean_process_ms,
        r.p95_process_ms,
        r.future_frames,
        r.fps,
        r.t_wait_ms,
        r.mean_latency_ms,
        r.p95_latency_ms,
        r.achieved_fps
    );
    let s = &r.stages;
    println!(
        "  stages (ms): features {:.2}, compensate {:.2}, align {:.2}, enhance {:.2}",
        s.features_ms, s.compensate_ms, s.align_ms, s.enhance_ms
    );
}
